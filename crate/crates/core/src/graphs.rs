//! Stable graphs with labeled vertices, up to isomorphism.
//!
//! A graph is stored as vertex genera, vertex labels and a symmetric
//! adjacency matrix whose diagonal counts loops. Isomorphism classes are
//! found by brute force over vertex permutations, which is fine for the
//! handful of vertices that appear in genus <= 4.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph enumeration needs genus >= 2, got {0}")]
    GenusTooSmall(u32),
    #[error("at least one label is required")]
    NoLabels,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StableGraph {
    pub genera: Vec<u32>,
    pub labels: Vec<usize>,
    /// `adj[v][w]` edges between `v` and `w`; `adj[v][v]` loops at `v`.
    pub adj: Vec<Vec<u32>>,
    pub aut: u64,
}

impl StableGraph {
    pub fn vertex_count(&self) -> usize {
        self.genera.len()
    }

    pub fn edge_count(&self) -> u32 {
        let n = self.vertex_count();
        let mut e = 0;
        for v in 0..n {
            for w in v..n {
                e += self.adj[v][w];
            }
        }
        e
    }

    pub fn valence(&self, v: usize) -> u32 {
        (0..self.vertex_count()).map(|w| if w == v { 2 * self.adj[v][v] } else { self.adj[v][w] }).sum()
    }

    pub fn b1(&self) -> u32 {
        self.edge_count() + 1 - self.vertex_count() as u32
    }

    pub fn genus(&self) -> u32 {
        self.genera.iter().sum::<u32>() + self.b1()
    }

    /// Edges as vertex pairs `v <= w`, repeated by multiplicity.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.vertex_count();
        let mut out = Vec::new();
        for v in 0..n {
            for w in v..n {
                for _ in 0..self.adj[v][w] {
                    out.push((v, w));
                }
            }
        }
        out
    }

    /// `sum_v (g_v - 1) + #edges`, the power of the loop parameter.
    pub fn hbar_power(&self) -> i64 {
        self.genera.iter().map(|&g| g as i64 - 1).sum::<i64>() + self.edge_count() as i64
    }

    fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in 0..n {
                if !seen[w] && self.adj[v][w] > 0 {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn is_stable(&self) -> bool {
        (0..self.vertex_count()).all(|v| 2 * self.genera[v] as i64 - 2 + self.valence(v) as i64 > 0)
    }

    fn permuted(&self, p: &[usize]) -> (Vec<u32>, Vec<usize>, Vec<Vec<u32>>) {
        let genera = p.iter().map(|&v| self.genera[v]).collect();
        let labels = p.iter().map(|&v| self.labels[v]).collect();
        let adj = p.iter().map(|&v| p.iter().map(|&w| self.adj[v][w]).collect()).collect();
        (genera, labels, adj)
    }

    /// Canonical representative and the number of vertex permutations fixing the graph.
    fn canonical(&self) -> (StableGraph, u64) {
        let n = self.vertex_count();
        let own = self.permuted(&(0..n).collect::<Vec<_>>());
        let mut best: Option<(Vec<u32>, Vec<usize>, Vec<Vec<u32>>)> = None;
        let mut fixing = 0u64;
        for p in permutations(n) {
            let cand = self.permuted(&p);
            if cand == own {
                fixing += 1;
            }
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
        let (genera, labels, adj) = best.unwrap();
        (StableGraph { genera, labels, adj, aut: 0 }, fixing)
    }

    fn automorphisms(&self, vertex_fixing: u64) -> u64 {
        let n = self.vertex_count();
        let mut aut = vertex_fixing;
        for v in 0..n {
            for w in v..n {
                let m = self.adj[v][w] as u64;
                aut *= (1..=m).product::<u64>();
                if v == w {
                    aut <<= m;
                }
            }
        }
        aut
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Distributes `total` identical items into `slots` ordered slots.
fn compositions(total: u32, slots: usize) -> Vec<Vec<u32>> {
    fn rec(rem: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            cur.push(rem);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for x in 0..=rem {
            cur.push(x);
            rec(rem - x, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if slots == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(total, slots, &mut Vec::new(), &mut out);
    out
}

fn nondecreasing(len: usize, max_sum: u32) -> Vec<Vec<u32>> {
    fn rec(len: usize, rem: u32, min: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if len == 0 {
            out.push(cur.clone());
            return;
        }
        let mut x = min;
        while x as u64 * len as u64 <= rem as u64 {
            cur.push(x);
            rec(len - 1, rem - x, x, cur, out);
            cur.pop();
            x += 1;
        }
    }
    let mut out = Vec::new();
    rec(len, max_sum, 0, &mut Vec::new(), &mut out);
    out
}

/// Unlabeled stable graphs of genus `g` (all labels zero), sorted.
fn unlabeled(g: u32) -> Vec<StableGraph> {
    let mut found: BTreeMap<StableGraph, ()> = BTreeMap::new();
    let vmax = if g >= 2 { 2 * g as usize - 2 } else { 1 };
    for nv in 1..=vmax {
        for genera in nondecreasing(nv, g) {
            let gsum: u32 = genera.iter().sum();
            let e = g as i64 - 1 - gsum as i64 + nv as i64;
            if e < nv as i64 - 1 {
                continue;
            }
            let slots: Vec<(usize, usize)> = (0..nv).flat_map(|v| (v..nv).map(move |w| (v, w))).collect();
            for comp in compositions(e as u32, slots.len()) {
                let mut adj = vec![vec![0u32; nv]; nv];
                for (&(v, w), &m) in slots.iter().zip(&comp) {
                    adj[v][w] = m;
                    adj[w][v] = m;
                }
                let graph = StableGraph { genera: genera.clone(), labels: vec![0; nv], adj, aut: 0 };
                if !graph.is_connected() || !graph.is_stable() {
                    continue;
                }
                let (canon, _) = graph.canonical();
                found.insert(canon, ());
            }
        }
    }
    found.into_keys().collect()
}

/// Isomorphism classes of stable graphs of genus `g` whose vertices carry
/// labels in `0..n`, each with its automorphism order.
pub fn enumerate_graphs(g: u32, n: usize) -> Result<Vec<StableGraph>, GraphError> {
    if g < 2 {
        return Err(GraphError::GenusTooSmall(g));
    }
    if n == 0 {
        return Err(GraphError::NoLabels);
    }
    let mut found: BTreeMap<StableGraph, ()> = BTreeMap::new();
    for base in unlabeled(g) {
        let nv = base.vertex_count();
        let mut labels = vec![0usize; nv];
        loop {
            let graph = StableGraph { labels: labels.clone(), ..base.clone() };
            let (canon, _) = graph.canonical();
            found.insert(canon, ());
            let mut pos = 0;
            while pos < nv {
                labels[pos] += 1;
                if labels[pos] < n {
                    break;
                }
                labels[pos] = 0;
                pos += 1;
            }
            if pos == nv {
                break;
            }
        }
    }
    Ok(found
        .into_keys()
        .map(|c| {
            let (_, fixing) = c.canonical();
            let aut = c.automorphisms(fixing);
            StableGraph { aut, ..c }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn genus_two_and_three_counts() {
        // stable graphs without legs: 7 in genus 2, 42 in genus 3
        assert_eq!(enumerate_graphs(2, 1).unwrap().len(), 7);
        assert_eq!(enumerate_graphs(3, 1).unwrap().len(), 42);
    }

    #[test]
    fn genus_two_automorphisms() {
        let gs = enumerate_graphs(2, 1).unwrap();
        let mut auts: Vec<u64> = gs.iter().map(|g| g.aut).collect();
        auts.sort();
        // g2; g1+loop; g1-g1; g1-g0+loop; two loops at g0; dumbbell; theta
        assert_eq!(auts, vec![1, 2, 2, 2, 8, 8, 12]);
    }

    #[test]
    fn mass_formula() {
        // sum over labeled classes of 1/|Aut| equals N^{#V} times the unlabeled sum
        for n in 1..=3usize {
            for g in 2..=3 {
                let unl = enumerate_graphs(g, 1).unwrap();
                let lab = enumerate_graphs(g, n).unwrap();
                let mut lhs = rug::Rational::new();
                for x in &lab {
                    lhs += rug::Rational::from((1, x.aut));
                }
                let mut rhs = rug::Rational::new();
                for x in &unl {
                    rhs += rug::Rational::from((n.pow(x.vertex_count() as u32) as u64, x.aut));
                }
                assert_eq!(lhs, rhs, "g={g} n={n}");
            }
        }
    }

    #[test]
    fn invariants() {
        for g in 2..=3 {
            for gr in enumerate_graphs(g, 2).unwrap() {
                assert_eq!(gr.genus(), g);
                assert_eq!(gr.hbar_power(), g as i64 - 1);
                for v in 0..gr.vertex_count() {
                    if gr.genera[v] == 0 {
                        assert!(gr.valence(v) >= 3);
                    }
                    if gr.genera[v] == 1 {
                        assert!(gr.valence(v) >= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_low_genus() {
        assert_eq!(enumerate_graphs(1, 1), Err(GraphError::GenusTooSmall(1)));
    }
}
