//! Intersection numbers of psi classes on moduli of stable curves and the
//! vertex correlators built from them.
//!
//! Values come from the string and dilaton equations where they apply and
//! from the Virasoro (DVV) recursion otherwise, memoized by sorted indices.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use rug::{Integer, Rational};
use thiserror::Error;

use crate::scalar::{double_factorial, Field};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WkError {
    #[error("unstable correlator: genus {g} with {n} points")]
    Unstable { g: u32, n: usize },
    #[error("tail value T_{0} is not available")]
    MissingTail(usize),
}

type Key = (u32, Vec<u32>);

/// Memoized table of `<tau_{k_1} ... tau_{k_n}>_g`.
#[derive(Default)]
pub struct IntersectionTable {
    memo: RwLock<HashMap<Key, Rational>>,
}

/// Process-wide shared table.
pub fn table() -> &'static IntersectionTable {
    static TABLE: OnceLock<IntersectionTable> = OnceLock::new();
    TABLE.get_or_init(IntersectionTable::default)
}

fn dfact(n: i64) -> Rational {
    Rational::from(double_factorial(n))
}

impl IntersectionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.memo.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `<prod tau_{k_i}>_g`; zero unless `sum k = 3g - 3 + n`.
    pub fn get(&self, g: u32, ks: &[u32]) -> Result<Rational, WkError> {
        let n = ks.len();
        if 2 * g as i64 - 2 + n as i64 <= 0 {
            return Err(WkError::Unstable { g, n });
        }
        let mut key = ks.to_vec();
        key.sort_unstable();
        Ok(self.eval(g, key))
    }

    /// Like [`get`](Self::get) but unstable arguments give zero.
    pub fn get_or_zero(&self, g: u32, ks: &[u32]) -> Rational {
        self.get(g, ks).unwrap_or_default()
    }

    fn eval(&self, g: u32, key: Vec<u32>) -> Rational {
        let n = key.len();
        if 2 * g as i64 - 2 + n as i64 <= 0 {
            return Rational::new();
        }
        let sum: u64 = key.iter().map(|&k| k as u64).sum();
        if sum as i64 != 3 * g as i64 - 3 + n as i64 {
            return Rational::new();
        }
        if let Some(v) = self.memo.read().unwrap().get(&(g, key.clone())) {
            return v.clone();
        }
        let value = self.compute(g, &key);
        self.memo.write().unwrap().entry((g, key)).or_insert(value).clone()
    }

    fn compute(&self, g: u32, key: &[u32]) -> Rational {
        let n = key.len();
        if g == 0 && n == 3 {
            return Rational::from(1);
        }
        if g == 1 && n == 1 {
            return Rational::from((1, 24));
        }
        let reduced_stable = 2 * g as i64 - 2 + n as i64 - 1 > 0;
        if key[0] == 0 && reduced_stable {
            // string equation
            let rest = &key[1..];
            let mut acc = Rational::new();
            for j in 0..rest.len() {
                if rest[j] == 0 {
                    continue;
                }
                let mut k2 = rest.to_vec();
                k2[j] -= 1;
                k2.sort_unstable();
                acc += self.eval(g, k2);
            }
            return acc;
        }
        if let Some(pos) = key.iter().position(|&k| k == 1) {
            if reduced_stable {
                // dilaton equation
                let mut rest = key.to_vec();
                rest.remove(pos);
                let factor = 2 * g as i64 - 2 + (n as i64 - 1);
                return self.eval(g, rest) * Rational::from(factor);
            }
        }
        // Virasoro recursion on the largest index tau_{k+1}
        let top = *key.last().unwrap();
        let k = top as i64 - 1;
        let s: Vec<u32> = key[..n - 1].to_vec();
        let mut acc = Rational::new();
        for j in 0..s.len() {
            let d = s[j] as i64;
            let coef = dfact(2 * k + 2 * d + 1) / dfact(2 * d - 1);
            let mut k2 = s.clone();
            k2[j] = (d + k) as u32;
            k2.sort_unstable();
            acc += coef * self.eval(g, k2);
        }
        let mut quad = Rational::new();
        for r in 0..k {
            let sidx = k - 1 - r;
            let coef = dfact(2 * r + 1) * dfact(2 * sidx + 1);
            let mut inner = Rational::new();
            if g >= 1 {
                let mut k2 = s.clone();
                k2.push(r as u32);
                k2.push(sidx as u32);
                k2.sort_unstable();
                inner += self.eval(g - 1, k2);
            }
            let m = s.len();
            for mask in 0..(1u64 << m) {
                let mut left = vec![r as u32];
                let mut right = vec![sidx as u32];
                for (b, &x) in s.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        left.push(x);
                    } else {
                        right.push(x);
                    }
                }
                left.sort_unstable();
                right.sort_unstable();
                for g1 in 0..=g {
                    let a = self.eval(g1, left.clone());
                    if a == 0 {
                        continue;
                    }
                    let b = self.eval(g - g1, right.clone());
                    inner += a * b;
                }
            }
            quad += coef * inner;
        }
        acc += quad / Rational::from(2);
        acc / dfact(2 * k + 3)
    }

    /// Fills every entry with `g <= gmax`, `n <= nmax`.
    pub fn prefill(&self, gmax: u32, nmax: usize) {
        for g in 0..=gmax {
            for n in 1..=nmax {
                if 2 * g as i64 - 2 + n as i64 <= 0 {
                    continue;
                }
                let dim = 3 * g as i64 - 3 + n as i64;
                for ks in partitions_into(dim as u32, n) {
                    let _ = self.eval(g, ks);
                }
            }
        }
    }

    /// Snapshot of stored entries, sorted.
    pub fn entries(&self) -> Vec<(u32, Vec<u32>, Rational)> {
        let mut v: Vec<_> = self.memo.read().unwrap().iter().map(|((g, k), r)| (*g, k.clone(), r.clone())).collect();
        v.sort();
        v
    }
}

/// Nondecreasing sequences of `n` nonnegative integers summing to `total`.
pub fn partitions_into(total: u32, n: usize) -> Vec<Vec<u32>> {
    fn rec(total: u32, n: usize, min: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 0 {
            if total == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let mut x = min;
        while x as u64 * n as u64 <= total as u64 {
            cur.push(x);
            rec(total - x, n - 1, x, cur, out);
            cur.pop();
            x += 1;
        }
    }
    let mut out = Vec::new();
    rec(total, n, 0, &mut Vec::new(), &mut out);
    out
}

/// Partitions of `total` into positive parts, as (part, multiplicity) lists.
fn positive_partitions(total: u32) -> Vec<Vec<(u32, u32)>> {
    fn rec(rem: u32, max: u32, cur: &mut Vec<(u32, u32)>, out: &mut Vec<Vec<(u32, u32)>>) {
        if rem == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=max.min(rem)).rev() {
            for mult in 1..=rem / part {
                cur.push((part, mult));
                rec(rem - part * mult, part - 1, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(total, total, &mut Vec::new(), &mut out);
    out
}

/// Vertex value `sum_n 1/n! sum_{a_j >= 2} prod T_{a_j} <prod tau_{edge} prod tau_{a_j}>_g`
/// times `delta^{g-1}`. `tails[a]` is `T_a` (entries below 2 are ignored).
/// Unstable or dimensionally empty vertices give zero.
pub fn vertex_correlator<F: Field>(
    table: &IntersectionTable,
    g: u32,
    edge_ks: &[u32],
    tails: &[F],
    delta: &F,
) -> Result<F, WkError> {
    let m = edge_ks.len() as i64;
    let budget = 3 * g as i64 - 3 + m - edge_ks.iter().map(|&k| k as i64).sum::<i64>();
    if budget < 0 {
        return Ok(F::zero());
    }
    let mut total = F::zero();
    for parts in positive_partitions(budget as u32) {
        let mut coeff = F::one();
        let mut ks = edge_ks.to_vec();
        for &(p, mult) in &parts {
            let a = (p + 1) as usize;
            let t = tails.get(a).ok_or(WkError::MissingTail(a))?;
            let mut fact = Integer::from(1);
            for x in 1..=mult {
                fact *= x;
            }
            coeff = coeff * t.powi(mult as i64).unwrap() / F::from_rational(&Rational::from(fact));
            for _ in 0..mult {
                ks.push(p + 1);
            }
        }
        if coeff.is_exactly_zero() {
            continue;
        }
        let n = ks.len() as i64;
        if 2 * g as i64 - 2 + n <= 0 {
            continue;
        }
        let c = table.get_or_zero(g, &ks);
        if c != 0 {
            total += coeff * F::from_rational(&c);
        }
    }
    let dpow = delta.powi(g as i64 - 1).expect("nonzero delta for genus-0 vertices");
    Ok(total * &dpow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Q;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    #[test]
    fn spot_values() {
        let t = IntersectionTable::new();
        assert_eq!(t.get(0, &[0, 0, 0]).unwrap(), 1);
        // string equation from <tau_0^3>_0; the three-point <tau_0^2 tau_1>_0 is dimensionally zero
        assert_eq!(t.get(0, &[0, 0, 0, 1]).unwrap(), 1);
        assert_eq!(t.get(0, &[0, 0, 1]).unwrap(), 0);
        assert_eq!(t.get(1, &[1]).unwrap(), r(1, 24));
        assert_eq!(t.get(2, &[4]).unwrap(), r(1, 1152));
        assert_eq!(t.get(1, &[0, 2]).unwrap(), r(1, 24));
        // known genus-2 and genus-3 values
        assert_eq!(t.get(2, &[2, 3]).unwrap(), r(29, 5760));
        assert_eq!(t.get(3, &[7]).unwrap(), r(1, 82944));
        assert_eq!(t.get(0, &[0, 0, 0, 1, 1]).unwrap(), 2);
        assert_eq!(t.get(0, &[2, 0, 0, 0, 0]).unwrap(), 1);
        assert_eq!(t.get(1, &[0, 1]).unwrap(), 0);
        assert!(matches!(t.get(0, &[0, 0]), Err(WkError::Unstable { .. })));
    }

    #[test]
    fn vertex_examples() {
        let t = IntersectionTable::new();
        let none: Vec<Q> = vec![Q::zero(); 8];
        assert_eq!(vertex_correlator(&t, 2, &[], &none, &Q::one()).unwrap(), Q::zero());
        let mut tails = vec![Q::zero(); 8];
        tails[2] = Q::new(5, 3);
        assert_eq!(vertex_correlator(&t, 1, &[0], &tails, &Q::new(7, 1)).unwrap(), Q::new(5, 72));
        assert_eq!(vertex_correlator(&t, 0, &[0, 0, 0], &none, &Q::new(2, 1)).unwrap(), Q::new(1, 2));
        assert_eq!(vertex_correlator(&t, 0, &[0, 0], &tails, &Q::one()).unwrap(), Q::zero());
        assert_eq!(vertex_correlator(&t, 1, &[], &tails, &Q::one()).unwrap(), Q::zero());
    }

    #[test]
    fn string_and_dilaton_hold_on_table() {
        let t = IntersectionTable::new();
        t.prefill(3, 6);
        for (g, ks, v) in t.entries() {
            let n = ks.len();
            if 2 * g as i64 - 2 + n as i64 + 1 <= 0 {
                continue;
            }
            let mut with0 = ks.clone();
            with0.push(0);
            let mut expect = Rational::new();
            for j in 0..n {
                if ks[j] > 0 {
                    let mut k2 = ks.clone();
                    k2[j] -= 1;
                    expect += t.get_or_zero(g, &k2);
                }
            }
            assert_eq!(t.get(g, &with0).unwrap(), expect, "string at {g} {ks:?}");
            let mut with1 = ks.clone();
            with1.push(1);
            assert_eq!(t.get(g, &with1).unwrap(), v * Rational::from(2 * g as i64 - 2 + n as i64), "dilaton at {g} {ks:?}");
        }
    }

    proptest! {
        #[test]
        fn dimension_rule(g in 0u32..3, ks in proptest::collection::vec(0u32..6, 1..5)) {
            let t = table();
            prop_assume!(2 * g as i64 - 2 + ks.len() as i64 > 0);
            let dim = 3 * g as i64 - 3 + ks.len() as i64;
            let v = t.get(g, &ks).unwrap();
            if ks.iter().map(|&k| k as i64).sum::<i64>() != dim {
                prop_assert_eq!(v, Rational::new());
            } else {
                prop_assert!(v > 0);
            }
        }
    }
}
