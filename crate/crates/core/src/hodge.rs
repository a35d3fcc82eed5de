//! Hodge generating function through its flow in the `s` parameters, and
//! the change of variables plus second-order operator that reproduces it
//! from the psi-class generating function.
//!
//! Every series here stores `hbar * log(...)`, which is a power series in
//! `hbar` whose `hbar^g` coefficient is the genus-`g` part.

use std::collections::BTreeMap;

use rug::Rational;

use crate::scalar::{bernoulli_numbers, factorial, Field, Q};
use crate::series::{singular_quotient, Series, SeriesError, Truncation};
use crate::wk::{partitions_into, IntersectionTable};

/// Variable layout `hbar, Q_0..Q_M, s_1..s_p, eps`.
#[derive(Clone, Debug)]
pub struct HodgeSpace {
    pub hbar_cap: u32,
    pub q_cap: u32,
    pub s_caps: Vec<u32>,
    pub q_max: usize,
}

impl HodgeSpace {
    /// `q_max` is the largest psi index that can occur at genus `hbar_cap`
    /// with `q_cap` insertions.
    pub fn new(hbar_cap: u32, q_cap: u32, s_caps: Vec<u32>) -> Self {
        let q_max = (3 * hbar_cap as i64 - 3 + q_cap as i64).max(0) as usize;
        HodgeSpace { hbar_cap, q_cap, s_caps, q_max }
    }

    pub fn nvars(&self) -> usize {
        self.q_max + self.s_caps.len() + 3
    }

    pub fn hbar(&self) -> usize {
        0
    }

    pub fn q(&self, k: usize) -> usize {
        1 + k
    }

    /// Index of `s_m`, `m >= 1`.
    pub fn s(&self, m: usize) -> usize {
        self.q_max + 1 + m
    }

    pub fn eps(&self) -> usize {
        self.nvars() - 1
    }

    fn eps_cap(&self) -> u32 {
        self.s_caps.iter().sum()
    }

    pub fn zero(&self) -> Series<Q> {
        let n = self.nvars();
        let mut names = vec!["hbar".to_string()];
        names.extend((0..=self.q_max).map(|k| format!("Q{k}")));
        names.extend((1..=self.s_caps.len()).map(|m| format!("s{m}")));
        names.push("eps".to_string());
        let unit = |j: usize| {
            let mut w = vec![0; n];
            w[j] = 1;
            w
        };
        let mut qw = vec![0; n];
        for k in 0..=self.q_max {
            qw[self.q(k)] = 1;
        }
        let mut t = Truncation::unbounded().with(unit(self.hbar()), self.hbar_cap).with(qw, self.q_cap);
        for (m, &c) in self.s_caps.iter().enumerate() {
            t = t.with(unit(self.s(m + 1)), c);
        }
        t = t.with(unit(self.eps()), self.eps_cap());
        Series::zero(names, t)
    }

    /// Monomial from `(hbar power, [(k, mult)], [s exponents])`.
    pub fn monomial(&self, hbar: u32, qs: &[(usize, u32)], s: &[u32]) -> Vec<u32> {
        let mut m = vec![0; self.nvars()];
        m[self.hbar()] = hbar;
        for &(k, e) in qs {
            m[self.q(k)] += e;
        }
        for (j, &e) in s.iter().enumerate() {
            m[self.s(j + 1)] = e;
        }
        m
    }

    /// `hbar log tau`, truncated.
    pub fn tau(&self, table: &IntersectionTable) -> Series<Q> {
        let mut out = self.zero();
        for g in 0..=self.hbar_cap {
            for n in 1..=self.q_cap as usize {
                if 2 * g as i64 - 2 + n as i64 <= 0 {
                    continue;
                }
                let dim = 3 * g as i64 - 3 + n as i64;
                for ks in partitions_into(dim as u32, n) {
                    if ks.iter().any(|&k| k as usize > self.q_max) {
                        continue;
                    }
                    let c = table.get_or_zero(g, &ks);
                    let mut mult: BTreeMap<usize, u32> = BTreeMap::new();
                    for &k in &ks {
                        *mult.entry(k as usize).or_default() += 1;
                    }
                    let mut sym = Rational::from(1);
                    for &e in mult.values() {
                        sym *= factorial(e);
                    }
                    let qs: Vec<(usize, u32)> = mult.into_iter().collect();
                    out.add_term(self.monomial(g, &qs, &[]), Q(c / sym));
                }
            }
        }
        out
    }

    fn dq(&self, f: &Series<Q>, k: usize) -> Series<Q> {
        if k > self.q_max {
            f.zero_like()
        } else {
            f.derivative(self.q(k))
        }
    }

    /// `c_m (hbar D_m + L_m)` acting on `hbar log lambda`.
    fn flow_field(&self, f: &Series<Q>, m: usize, cm: &Q) -> Series<Q> {
        let mut out = f.zero_like();
        let half = Q::new(1, 2);
        let firsts: Vec<Series<Q>> = (0..=self.q_max).map(|k| self.dq(f, k)).collect();
        for k in 0..=(2 * m - 2) {
            let l = 2 * m - 2 - k;
            let sign = if k % 2 == 0 { half.clone() } else { -half.clone() };
            let second = self.dq(&firsts.get(k).cloned().unwrap_or_else(|| f.zero_like()), l);
            out.add_scaled(&second.shift(self.hbar(), 1), &sign);
            if k <= self.q_max && l <= self.q_max {
                out.add_scaled(&firsts[k].mul_unchecked(&firsts[l]), &sign);
            }
        }
        if 2 * m <= self.q_max {
            out.add_scaled(&firsts[2 * m], &Q::one());
        }
        for k in 0..=self.q_max {
            if k + 2 * m - 1 <= self.q_max {
                out.add_scaled(&firsts[k + 2 * m - 1].shift(self.q(k), 1), &-Q::one());
            }
        }
        out.scale(cm)
    }

    /// Integrates the flow in `s_m` from an initial value independent of `s_m`.
    fn flow(&self, init: &Series<Q>, m: usize) -> Series<Q> {
        let cm = hodge_coefficient(m);
        let j = self.s(m);
        let mut x = init.clone();
        for _ in 0..self.s_caps[m - 1] {
            let rhs = self.flow_field(&x, m, &cm);
            x = init.add(&rhs.antiderivative(j)).expect("same layout");
        }
        x
    }
}

/// `B_{2m} / (2m)!`.
pub fn hodge_coefficient(m: usize) -> Q {
    let b = bernoulli_numbers(2 * m);
    Q(b[2 * m].0.clone() / Rational::from(factorial(2 * m as u32)))
}

/// `hbar log lambda` obtained by flowing `hbar log tau` in `s_m` for each
/// `m` in `order` (the flows commute, so the order only matters as a check).
pub fn hodge_lambda(space: &HodgeSpace, table: &IntersectionTable, order: &[usize]) -> Series<Q> {
    let mut x = space.tau(table);
    for &m in order {
        x = space.flow(&x, m);
    }
    x
}

/// Coefficient of `hbar^{p} prod Q prod s` in `log lambda` (so `p` may be -1).
pub fn log_lambda_coefficient(space: &HodgeSpace, series: &Series<Q>, hbar_power: i32, qs: &[(usize, u32)], s: &[u32]) -> Q {
    let g = (hbar_power + 1) as u32;
    series.coefficient(&space.monomial(g, qs, s))
}

/// The edge table `v_kl` for `k + l <= cap` and the substitution
/// `Q~_n = const_n + sum_k lin[n][k] Q_k` for `n <= cap`.
#[derive(Clone, Debug, PartialEq)]
pub struct LemmaComponents<F: Field> {
    pub v: Vec<Vec<F>>,
    pub q_const: Vec<F>,
    pub q_lin: Vec<Vec<F>>,
}

/// Prepends variables `z, w` to the layout of `base` with a total cap on them.
fn with_zw<F: Field>(base: &Series<F>, cap: u32) -> Series<F> {
    let n = base.nvars();
    let mut names = vec!["z".to_string(), "w".to_string()];
    names.extend(base.vars().iter().cloned());
    let mut t = Truncation::unbounded();
    for c in &base.truncation().constraints {
        let mut w = vec![0, 0];
        w.extend(c.weights.iter().cloned());
        w.resize(n + 2, 0);
        t = t.with(w, c.cap);
    }
    let mut zw = vec![0; n + 2];
    zw[0] = 1;
    zw[1] = 1;
    t = t.with(zw, cap);
    Series::zero(names, t)
}

fn embed<F: Field>(space: &Series<F>, s: &Series<F>) -> Series<F> {
    let mut out = space.zero_like();
    for (m, c) in s.terms() {
        let mut m2 = vec![0, 0];
        m2.extend(m.iter().cloned());
        out.add_term(m2, c.clone());
    }
    out
}

/// Coefficient of `z^i w^j` as a series in the base variables.
fn project<F: Field>(s: &Series<F>, base: &Series<F>, i: u32, j: u32) -> Series<F> {
    let mut out = base.zero_like();
    for (m, c) in s.terms() {
        if m[0] == i && m[1] == j {
            out.add_term(m[2..].to_vec(), c.clone());
        }
    }
    out
}

fn components_in<F: Field>(a: &[Series<F>], base: &Series<F>, cap: u32) -> Result<(Vec<Vec<Series<F>>>, Vec<Series<F>>), SeriesError> {
    let space = with_zw(base, cap + 1);
    let mut exponent = space.zero_like();
    for (k, ak) in a.iter().enumerate() {
        let p = 2 * k as u32 + 1;
        let e = embed(&space, ak);
        exponent = exponent.add(&e.shift(0, p))?.add(&e.shift(1, p))?;
    }
    let num = exponent.exp()?.sub(&space.constant_like(F::one()))?;
    let quot = singular_quotient(&num, 0, 1)?;
    let mut v = Vec::new();
    for k in 0..=cap {
        let mut row = Vec::new();
        for l in 0..=(cap - k) {
            let c = project(&quot, base, k, l);
            row.push(if (k + l) % 2 == 0 { c } else { c.neg() });
        }
        v.push(row);
    }
    // exp(sum a_k z^{2k-1}) coefficients
    let mut one_var = space.zero_like();
    for (k, ak) in a.iter().enumerate() {
        one_var = one_var.add(&embed(&space, ak).shift(0, 2 * k as u32 + 1))?;
    }
    let ez = one_var.exp()?;
    let e: Vec<Series<F>> = (0..=cap).map(|j| project(&ez, base, j, 0)).collect();
    Ok((v, e))
}

fn substitution_from<F: Field>(e: &[Series<F>], base: &Series<F>, cap: u32) -> (Vec<Series<F>>, Vec<Vec<Series<F>>>) {
    // coefficient of z^n in [z + sum_k Q_k (-z)^k] E(z), rewritten as (-1)^n Q~_n
    let mut q_const = Vec::new();
    let mut q_lin = Vec::new();
    for n in 0..=cap as usize {
        let sign = |p: usize| if p % 2 == 0 { F::one() } else { -F::one() };
        let mut c = base.zero_like();
        if n >= 1 {
            c = e[n - 1].clone();
            if n == 1 {
                c = c.sub(&base.constant_like(F::one())).expect("same layout");
            }
        }
        q_const.push(c.scale(&sign(n)));
        q_lin.push((0..=n).map(|k| e[n - k].scale(&sign(n - k))).collect());
    }
    (q_const, q_lin)
}

/// `v_kl(a)` and the substitution `Q -> Q~` for numeric `a` (`a[k-1] = a_k`).
pub fn lemma_components<F: Field>(a: &[F], cap: u32) -> Result<LemmaComponents<F>, SeriesError> {
    let base = Series::<F>::zero(Vec::new(), Truncation::unbounded());
    let aser: Vec<Series<F>> = a.iter().map(|x| base.constant_like(x.clone())).collect();
    let (v, e) = components_in(&aser, &base, cap)?;
    let (qc, ql) = substitution_from(&e, &base, cap);
    Ok(LemmaComponents {
        v: v.into_iter().map(|r| r.into_iter().map(|s| s.constant_term()).collect()).collect(),
        q_const: qc.into_iter().map(|s| s.constant_term()).collect(),
        q_lin: ql.into_iter().map(|r| r.into_iter().map(|s| s.constant_term()).collect()).collect(),
    })
}

/// Right-hand side of the identity: `exp(hbar P) tau`, then `Q~ -> Q~(Q, s)`,
/// with `a_k = B_{2k} s_k / (2k)!`.
pub fn lemma_rhs(space: &HodgeSpace, table: &IntersectionTable) -> Result<Series<Q>, SeriesError> {
    let base = space.zero();
    let cap = 2 * space.q_max as u32;
    let a: Vec<Series<Q>> = (1..=space.s_caps.len())
        .map(|m| base.var_like(space.s(m)).scale(&hodge_coefficient(m)))
        .collect();
    let (v, e) = components_in(&a, &base, cap)?;

    // flow in eps from 0 to 1 of d/d eps G = 1/2 sum v_kl (hbar d_k d_l G + d_k G d_l G)
    let g0 = space.tau(table);
    let half = Q::new(1, 2);
    let mut x = g0.clone();
    for _ in 0..=space.eps_cap() {
        let firsts: Vec<Series<Q>> = (0..=space.q_max).map(|k| space.dq(&x, k)).collect();
        let mut rhs = x.zero_like();
        for k in 0..=space.q_max {
            let mut contracted = x.zero_like();
            for l in 0..=space.q_max {
                let vkl = &v[k][l];
                if vkl.is_zero() {
                    continue;
                }
                contracted = contracted.add(&vkl.mul(&firsts[l])?)?;
            }
            if contracted.is_zero() {
                continue;
            }
            let second = space.dq(&contracted, k).shift(space.hbar(), 1);
            // v does not depend on Q, so d_k (sum_l v_kl d_l G) = sum_l v_kl d_k d_l G
            rhs = rhs.add(&second)?.add(&firsts[k].mul(&contracted)?)?;
        }
        x = g0.add(&rhs.scale(&half).antiderivative(space.eps()))?;
    }
    let mut at_one = x.zero_like();
    for (m, c) in x.terms() {
        let mut m2 = m.clone();
        m2[space.eps()] = 0;
        at_one.add_term(m2, c.clone());
    }

    let (qc, ql) = substitution_from(&e, &base, space.q_max as u32);
    let mut images = vec![None; space.nvars()];
    for n in 0..=space.q_max {
        let mut im = qc[n].clone();
        for k in 0..=n {
            im = im.add(&ql[n][k].mul(&base.var_like(space.q(k)))?)?;
        }
        images[space.q(n)] = Some(im);
    }
    at_one.compose(&images)
}

#[derive(Clone, Debug)]
pub struct LemmaReport {
    /// Coefficients compared (all monomials within the comparison window).
    pub compared: usize,
    pub mismatches: Vec<(Vec<u32>, Q, Q)>,
    /// Coefficient of `hbar^0 s_1 Q_0` in `log lambda`.
    pub genus_one_s1_q0: Q,
    /// Whether the two flow orders agree within the comparison window.
    pub flows_commute: bool,
}

/// Checks the identity for genus `<= hbar_cap`, Q-degree `<= q_degree`,
/// degree `<= 1` in each of `s_1..s_{n_s}`.
pub fn verify_lemma(table: &IntersectionTable, hbar_cap: u32, q_degree: u32, n_s: usize) -> Result<LemmaReport, SeriesError> {
    let s_caps = vec![1; n_s];
    let q_cap = q_degree + 2 * n_s as u32;
    let space = HodgeSpace::new(hbar_cap, q_cap, s_caps);
    let forward: Vec<usize> = (1..=n_s).collect();
    let backward: Vec<usize> = (1..=n_s).rev().collect();
    let lhs = hodge_lambda(&space, table, &forward);
    let lhs_rev = hodge_lambda(&space, table, &backward);
    let rhs = lemma_rhs(&space, table)?;
    let qdeg = |m: &[u32]| (0..=space.q_max).map(|k| m[space.q(k)]).sum::<u32>();
    let mut keys: Vec<Vec<u32>> = lhs.terms().keys().chain(rhs.terms().keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for m in keys {
        if qdeg(&m) > q_degree {
            continue;
        }
        compared += 1;
        let (l, r) = (lhs.coefficient(&m), rhs.coefficient(&m));
        if l != r {
            mismatches.push((m, l, r));
        }
    }
    let mut s1 = vec![0; n_s];
    if n_s > 0 {
        s1[0] = 1;
    }
    Ok(LemmaReport {
        compared,
        mismatches,
        genus_one_s1_q0: log_lambda_coefficient(&space, &lhs, 0, &[(0, 1)], &s1),
        flows_commute: lhs.filter(|m| qdeg(m) <= q_degree) == lhs_rev.filter(|m| qdeg(m) <= q_degree),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients() {
        assert_eq!(hodge_coefficient(1), Q::new(1, 12));
        assert_eq!(hodge_coefficient(2), Q::new(-1, 720));
    }

    #[test]
    fn trivial_components() {
        let c = lemma_components::<Q>(&[Q::zero(), Q::zero()], 4).unwrap();
        assert!(c.v.iter().flatten().all(|x| x.is_exactly_zero()));
        for n in 0..=4 {
            assert!(c.q_const[n].is_exactly_zero());
            for k in 0..=n {
                assert_eq!(c.q_lin[n][k], if k == n { Q::one() } else { Q::zero() });
            }
        }
    }

    #[test]
    fn single_a1_components() {
        let a = Q::new(3, 7);
        let c = lemma_components(&[a.clone()], 3).unwrap();
        // (e^{a(z+w)} - 1)/(z+w) = a + a^2 (z+w)/2 + ...
        assert_eq!(c.v[0][0], a);
        assert_eq!(c.v[1][0], -(a.clone() * a.clone()) / Q::new(2, 1));
        assert_eq!(c.v[0][1], c.v[1][0]);
        assert_eq!(c.q_const[0], Q::zero());
        assert_eq!(c.q_lin[0], vec![Q::one()]);
        // Q~_2 picks up the z-term: (-1)^2 e_1 = a
        assert_eq!(c.q_const[2], a);
    }

    #[test]
    fn zero_s_is_tau() {
        let space = HodgeSpace::new(2, 4, vec![1]);
        let t = crate::wk::table();
        let lam = hodge_lambda(&space, t, &[1]);
        assert_eq!(lam.filter(|m| m[space.s(1)] == 0), space.tau(t));
    }

    #[test]
    fn lemma_genus_two() {
        let r = verify_lemma(crate::wk::table(), 2, 4, 2).unwrap();
        assert!(r.compared > 50);
        assert!(r.mismatches.is_empty(), "{:?}", &r.mismatches[..r.mismatches.len().min(5)]);
        assert_eq!(r.genus_one_s1_q0, Q::new(1, 24));
        assert!(r.flows_commute);
    }
}
