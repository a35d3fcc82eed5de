//! Higher-genus potentials as sums over stable graphs, an independent
//! operator-exponential evaluation, and the genus-1 one-form.

use rayon::prelude::*;
use thiserror::Error;

use crate::frame::{jet_value, CanonicalFrame, FrameError, FrameOptions};
use crate::frobenius::FrobeniusModel;
use crate::graphs::{enumerate_graphs, GraphError, StableGraph};
use crate::rmatrix::{compute_r, compute_v, edge_tail_data, EdgeTailData, RError, RMode};
use crate::scalar::{Cx, Field};
use crate::series::{Series, SeriesError, Truncation};
use crate::wk::{table, vertex_correlator, IntersectionTable, WkError};

#[derive(Debug, Error)]
pub enum GenusError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    R(#[from] RError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Wk(#[from] WkError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("edge coefficient V_{k}{l} needed beyond cutoff {cutoff}")]
    MissingOrder { k: u32, l: u32, cutoff: u32 },
    #[error("genus must be at least 2 for the graph sum, got {0}")]
    GenusTooSmall(u32),
}

/// R-truncation order sufficient for genus `g`.
pub fn r_order_for_genus(g: u32) -> u32 {
    3 * g - 2
}

struct Assignment<'a, F: Field> {
    graph: &'a StableGraph,
    data: &'a EdgeTailData<F>,
    table: &'a IntersectionTable,
    edges: Vec<(usize, usize)>,
}

impl<F: Field> Assignment<'_, F> {
    fn run(&self, e: usize, budgets: &mut [i64], ks: &mut [Vec<u32>], weight: F, out: &mut F) -> Result<(), GenusError> {
        if e == self.edges.len() {
            let mut value = weight;
            for (v, vks) in ks.iter().enumerate() {
                let label = self.graph.labels[v];
                let c = vertex_correlator(self.table, self.graph.genera[v], vks, &self.data.t[label], &self.data.delta[label])?;
                if c.is_exactly_zero() {
                    return Ok(());
                }
                value = value * c;
            }
            *out += value;
            return Ok(());
        }
        let (v, w) = self.edges[e];
        let (iv, iw) = (self.graph.labels[v], self.graph.labels[w]);
        for k in 0..=budgets[v].max(-1) {
            budgets[v] -= k;
            let lmax = budgets[w];
            for l in 0..=lmax.max(-1) {
                let (k, l) = (k as u32, l as u32);
                if k + l > self.data.cutoff {
                    return Err(GenusError::MissingOrder { k, l, cutoff: self.data.cutoff });
                }
                let ew = self.data.edge_weight(iv, iw, k, l);
                if ew.is_exactly_zero() {
                    continue;
                }
                budgets[w] -= l as i64;
                ks[v].push(k);
                ks[w].push(l);
                let r = self.run(e + 1, budgets, ks, weight.clone() * ew, out);
                ks[w].pop();
                ks[v].pop();
                budgets[w] += l as i64;
                r?;
            }
            budgets[v] += k;
        }
        Ok(())
    }
}

/// Contribution of one graph to the coefficient of `hbar^{g-1}`, including `1/|Aut|`.
pub fn evaluate_graph<F: Field>(graph: &StableGraph, data: &EdgeTailData<F>, table: &IntersectionTable) -> Result<F, GenusError> {
    let n = graph.vertex_count();
    let mut budgets: Vec<i64> =
        (0..n).map(|v| 3 * graph.genera[v] as i64 - 3 + graph.valence(v) as i64).collect();
    let mut ks = vec![Vec::new(); n];
    let job = Assignment { graph, data, table, edges: graph.edges() };
    let mut total = F::zero();
    job.run(0, &mut budgets, &mut ks, F::one(), &mut total)?;
    Ok(total / F::from_int(graph.aut as i64))
}

/// Graph sum with per-graph values, in enumeration order.
pub fn graph_sum<F: Field>(data: &EdgeTailData<F>, g: u32) -> Result<(F, Vec<(StableGraph, F)>), GenusError> {
    if g < 2 {
        return Err(GenusError::GenusTooSmall(g));
    }
    let graphs = enumerate_graphs(g, data.dim())?;
    let tab = table();
    let values: Result<Vec<F>, GenusError> = graphs.par_iter().map(|gr| evaluate_graph(gr, data, tab)).collect();
    let values = values?;
    let mut total = F::zero();
    for v in &values {
        total += v.clone();
    }
    Ok((total, graphs.into_iter().zip(values).collect()))
}

#[derive(Clone, Debug, Default)]
pub struct GenusOptions {
    pub mode: Option<RMode>,
    pub frame: FrameOptions,
}

impl GenusOptions {
    fn mode(&self) -> RMode {
        self.mode.clone().unwrap_or(RMode::Conformal)
    }
}

#[derive(Clone, Debug)]
pub struct GenusResult {
    pub value: Cx,
    pub breakdown: Vec<(StableGraph, Cx)>,
    pub data: EdgeTailData<Cx>,
    pub frame: CanonicalFrame,
}

/// `F^g` at a semisimple point of `model`.
pub fn genus_potential(model: &FrobeniusModel, point: &[Cx], g: u32, opts: &GenusOptions) -> Result<GenusResult, GenusError> {
    if g < 2 {
        return Err(GenusError::GenusTooSmall(g));
    }
    let k = r_order_for_genus(g);
    let frame = CanonicalFrame::new(model, point, k, &opts.frame)?;
    let (_, data) = edge_tail_data(&frame, k, &opts.mode())?;
    let (value, breakdown) = graph_sum(&data, g)?;
    Ok(GenusResult { value, breakdown, data, frame })
}

/// Independent evaluation of the genus-`g` term: expands every vertex
/// `log tau` around the tail point to the order forced by `g`, applies the
/// exponential of the edge operator, sets the shifted variables to zero and
/// reads off the `hbar^{g-1}` coefficient of the logarithm.
///
/// A formal `eps` with `eps^2 = hbar` carries the loop counting; the shifted
/// variables absorb `eps Delta^{1/2}` so the edge operator has no `hbar`.
pub fn wick_oracle<F: Field>(data: &EdgeTailData<F>, g: u32) -> Result<F, GenusError> {
    if g < 2 {
        return Err(GenusError::GenusTooSmall(g));
    }
    let n = data.dim();
    let kc = 3 * g - 4;
    if kc > data.cutoff {
        return Err(GenusError::MissingOrder { k: kc, l: 0, cutoff: data.cutoff });
    }
    let idx = |i: usize, k: u32| 1 + i * (kc as usize + 1) + k as usize;
    let nv = 1 + n * (kc as usize + 1);
    let mut names = vec!["eps".to_string()];
    let mut eps_w = vec![1];
    let mut deg_w = vec![0];
    let mut psi_w = vec![0];
    for i in 0..n {
        for k in 0..=kc {
            names.push(format!("y{i}_{k}"));
            eps_w.push(0);
            deg_w.push(1);
            psi_w.push(k);
        }
    }
    let ecap = 2 * g - 2;
    let trunc = Truncation::unbounded().with(eps_w, ecap).with(deg_w, 6 * g - 6).with(psi_w, kc);
    let zero = Series::<F>::zero(names, trunc);
    let tab = table();

    let mut log_tau = zero.clone();
    for i in 0..n {
        for gv in 0..=g {
            // eps-degree 2 gv - 2 + m must lie in 1..=ecap
            for m in 0..=(6 * g - 6) {
                let edeg = 2 * gv as i64 - 2 + m as i64;
                if edeg < 1 || edeg > ecap as i64 {
                    continue;
                }
                for ks in multisets(m as usize, kc) {
                    if ks.iter().sum::<u32>() > kc {
                        continue;
                    }
                    let c = vertex_correlator(tab, gv, &ks, &data.t[i], &data.delta[i])?;
                    if c.is_exactly_zero() {
                        continue;
                    }
                    let mut mono = vec![0u32; nv];
                    mono[0] = edeg as u32;
                    for &k in &ks {
                        mono[idx(i, k)] += 1;
                    }
                    let mut sym = F::one();
                    for &e in &mono[1..] {
                        for x in 2..=e {
                            sym = sym * F::from_int(x as i64);
                        }
                    }
                    let scale = data.sqrt_delta[i].powi(m as i64).unwrap();
                    log_tau.add_term(mono, c * scale / sym);
                }
            }
        }
    }

    let mut cur = log_tau.exp()?;
    let is_free = |m: &[u32]| m[1..].iter().all(|&e| e == 0);
    let mut acc = cur.filter(is_free);
    let half = F::from_ratio(1, 2);
    let mut step = 1i64;
    while !cur.is_zero() {
        let firsts: Vec<Series<F>> = (1..nv).map(|a| cur.derivative(a)).collect();
        let mut next = zero.clone();
        for i in 0..n {
            for k in 0..=kc {
                let da = &firsts[idx(i, k) - 1];
                if da.is_zero() {
                    continue;
                }
                for j in 0..n {
                    for l in 0..=(kc - k) {
                        let v = data.v(i, j, k, l);
                        if v.is_exactly_zero() {
                            continue;
                        }
                        let dab = da.derivative(idx(j, l));
                        next.add_scaled(&dab, &(v * &half));
                    }
                }
            }
        }
        cur = next.scale(&F::from_int(step).inv().unwrap());
        acc = acc.add(&cur.filter(is_free))?;
        step += 1;
    }
    let log = acc.log()?;
    let mut mono = vec![0u32; nv];
    mono[0] = ecap;
    Ok(log.coefficient(&mono))
}

fn multisets(len: usize, max: u32) -> Vec<Vec<u32>> {
    fn rec(len: usize, min: u32, max: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if len == 0 {
            out.push(cur.clone());
            return;
        }
        for x in min..=max {
            cur.push(x);
            rec(len - 1, x, max, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(len, 0, max, &mut Vec::new(), &mut out);
    out
}

/// Components along `dt^a` of `sum_i [V^{ii}_{00} du^i / 2 + dDelta_i / (48 Delta_i)]`.
pub fn genus1_differential(frame: &CanonicalFrame, data: &EdgeTailData<Cx>) -> Vec<Cx> {
    let n = frame.dim();
    let half = Cx::from_ratio(1, 2);
    let c48 = Cx::from_int(48);
    (0..n)
        .map(|a| {
            let mut mono = vec![0u32; n];
            mono[a] = 1;
            let mut s = Cx::zero();
            for i in 0..n {
                let dd = jet_value(&frame.delta_series[i], &mono);
                s += data.v(i, i, 0, 0) * &frame.du[(a, i)] * &half;
                s += dd / (frame.delta[i].clone() * &c48);
            }
            s
        })
        .collect()
}

/// The genus-1 one-form at a point, computing the frame and `R_1` on the way.
pub fn genus1_form_at(model: &FrobeniusModel, point: &[Cx], opts: &GenusOptions) -> Result<Vec<Cx>, GenusError> {
    let frame = CanonicalFrame::new(model, point, 1, &opts.frame)?;
    let rc = compute_r(&frame, 1, &opts.mode())?;
    let data = EdgeTailData {
        cutoff: 0,
        v: compute_v(&rc.r, 0)?,
        t: vec![vec![Cx::zero(); 2]; frame.dim()],
        delta: frame.delta.clone(),
        sqrt_delta: frame.sqrt_delta.clone(),
    };
    Ok(genus1_differential(&frame, &data))
}

/// Largest `|d_b w_a - d_a w_b|` by five-point central differences with step `h`.
pub fn closedness_residual(model: &FrobeniusModel, point: &[Cx], h: &Cx, opts: &GenusOptions) -> Result<f64, GenusError> {
    let n = point.len();
    let at = |b: usize, s: i64| -> Result<Vec<Cx>, GenusError> {
        let mut p = point.to_vec();
        p[b] = p[b].clone() + h.clone() * Cx::from_int(s);
        genus1_form_at(model, &p, opts)
    };
    // derivs[b][a] = d_b w_a
    let mut derivs = Vec::with_capacity(n);
    for b in 0..n {
        let (p1, m1, p2, m2) = (at(b, 1)?, at(b, -1)?, at(b, 2)?, at(b, -2)?);
        let row: Vec<Cx> = (0..n)
            .map(|a| {
                (Cx::from_int(8) * (p1[a].clone() - &m1[a]) - (p2[a].clone() - &m2[a])) / (Cx::from_int(12) * h)
            })
            .collect();
        derivs.push(row);
    }
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..a {
            worst = worst.max((derivs[b][a].clone() - &derivs[a][b]).magnitude());
        }
    }
    Ok(worst)
}

/// Composite Simpson quadrature of the genus-1 form along the segment
/// `from -> to` with `intervals` (even) subintervals. Numerical only.
pub fn integrate_genus1(
    model: &FrobeniusModel,
    from: &[Cx],
    to: &[Cx],
    intervals: usize,
    opts: &GenusOptions,
) -> Result<Cx, GenusError> {
    let m = intervals.max(2).next_multiple_of(2);
    let dir: Vec<Cx> = to.iter().zip(from).map(|(b, a)| b.clone() - a).collect();
    let mut total = Cx::zero();
    for s in 0..=m {
        let frac = Cx::from_ratio(s as i64, m as i64);
        let p: Vec<Cx> = from.iter().zip(&dir).map(|(a, d)| a.clone() + d.clone() * &frac).collect();
        let w = genus1_form_at(model, &p, opts)?;
        let mut dot = Cx::zero();
        for (wa, da) in w.iter().zip(&dir) {
            dot += wa.clone() * da;
        }
        let weight = if s == 0 || s == m { 1 } else if s % 2 == 1 { 4 } else { 2 };
        total += dot * Cx::from_int(weight);
    }
    Ok(total / Cx::from_int(3 * m as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Q;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rug::Rational;

    fn synthetic(n: usize, g: u32, seed: u64) -> EdgeTailData<Q> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = || Q::new(rng.gen_range(-9..=9), rng.gen_range(1..=5));
        let cutoff = 3 * g - 3;
        let kmax = 3 * g - 1;
        let sqrt_delta: Vec<Q> = (0..n).map(|i| Q::new(i as i64 + 2, 3)).collect();
        let delta = sqrt_delta.iter().map(|s| s.clone() * s.clone()).collect();
        let mut v = vec![vec![vec![vec![Q::zero(); cutoff as usize + 1]; cutoff as usize + 1]; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..=cutoff as usize {
                    for l in 0..=(cutoff as usize - k) {
                        if (i, k) <= (j, l) {
                            let x = q();
                            v[i][j][k][l] = x.clone();
                            v[j][i][l][k] = x;
                        }
                    }
                }
            }
        }
        let t = (0..n)
            .map(|_| (0..=kmax as usize).map(|k| if k < 2 { Q::zero() } else { q() }).collect())
            .collect();
        EdgeTailData { cutoff, v, t, delta, sqrt_delta }
    }

    #[test]
    fn graph_sum_matches_oracle_exactly() {
        for (g, n, seed) in [(2, 1, 1), (2, 2, 2), (2, 3, 3), (3, 1, 4), (3, 2, 5)] {
            let data = synthetic(n, g, seed);
            let (sum, _) = graph_sum(&data, g).unwrap();
            let oracle = wick_oracle(&data, g).unwrap();
            assert_eq!(sum, oracle, "g={g} n={n}");
        }
    }

    #[test]
    fn point_model_vanishes() {
        let m = FrobeniusModel::point();
        let r = genus_potential(&m, &[Cx::from_f64(0.3)], 2, &GenusOptions::default()).unwrap();
        assert!(r.value.magnitude() < 1e-60);
        assert!(wick_oracle(&r.data, 2).unwrap().magnitude() < 1e-60);
        let w = genus1_form_at(&m, &[Cx::from_f64(0.3)], &GenusOptions::default()).unwrap();
        assert!(w[0].magnitude() < 1e-60);
    }

    #[test]
    fn two_edge_genus_one_pair() {
        // two genus-1 vertices joined by one edge, only T_2 nonzero
        let mut data = synthetic(1, 2, 9);
        for k in 3..data.t[0].len() {
            data.t[0][k] = Q::zero();
        }
        let gs = enumerate_graphs(2, 1).unwrap();
        let gr = gs.iter().find(|g| g.genera == vec![1, 1]).unwrap();
        let val = evaluate_graph(gr, &data, table()).unwrap();
        let t2 = data.t[0][2].clone();
        let c24 = Q::new(1, 24);
        // k = l = 0 with one T_2 at each end, plus k = 1 or l = 1 with no tails
        let w = |k, l| data.edge_weight(0, 0, k, l);
        let expect = (w(0, 0) * (t2.clone() * c24.clone()) * (t2.clone() * c24.clone())
            + w(1, 0) * c24.clone() * (t2.clone() * c24.clone())
            + w(0, 1) * (t2 * c24.clone()) * c24.clone()
            + w(1, 1) * c24.clone() * c24)
            / Q::new(2, 1);
        assert_eq!(val, expect);
    }

    fn closed_form(d: &Rational, frame: &CanonicalFrame) -> Cx {
        let dq = Q(d.clone());
        let one = Q::one();
        let c = dq.clone()
            * (Q::new(3, 1) * dq.clone() - one.clone())
            * (dq.clone() - one.clone())
            * (dq.clone() - one)
            * (Q::new(3, 1) * dq.clone() - Q::new(5, 1))
            * (dq - Q::new(2, 1))
            / Q::new(2880, 1);
        // index 0 plays u^-, index 1 plays u^+
        let du = frame.u[1].clone() - &frame.u[0];
        Cx::from_rational(&c.0) * &frame.delta[0] / (du.clone() * &du * &du)
    }

    #[test]
    fn two_primary_genus_two_closed_form() {
        for (num, den) in [(1, 2), (3, 2), (5, 3), (1, 3)] {
            let d = Rational::from((num, den));
            let m = FrobeniusModel::two_primary(&d, &Rational::from(1)).unwrap();
            let p = [Cx::from_f64(0.3), Cx::from_f64(1.7)];
            let r = genus_potential(&m, &p, 2, &GenusOptions::default()).unwrap();
            let expect = closed_form(&d, &r.frame);
            let err = (r.value.clone() - &expect).magnitude();
            assert!(err <= 1e-30 * expect.magnitude().max(1e-30), "d={d}: {} vs {}", r.value, expect);
        }
    }
}
