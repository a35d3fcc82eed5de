//! Truncated multivariate formal power series.
//!
//! A series carries an ordered list of variable names and a [`Truncation`]:
//! a set of weighted-degree caps. A monomial is retained iff it satisfies
//! every cap, so all operations stay inside the retained range.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Field;

pub type Mono = Vec<u32>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("operands have different variables or truncation caps")]
    TruncationMismatch,
    #[error("constant term is not invertible")]
    NotInvertible,
    #[error("log requires constant term 1")]
    LogConstant,
    #[error("exp of a nonzero constant term is not representable in this backend")]
    ExpConstant,
    #[error("operand is not nilpotent under the truncation (unbounded variable)")]
    NotNilpotent,
    #[error("numerator does not vanish on w = -z (residual {residual:e})")]
    NotDivisible { residual: f64 },
    #[error("invalid variable index {0}")]
    BadVariable(usize),
}

/// One weighted-degree cap: sum_j weights[j] * e_j <= cap.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub weights: Vec<u32>,
    pub cap: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Truncation {
    pub constraints: Vec<Constraint>,
}

impl Truncation {
    pub fn unbounded() -> Self {
        Truncation { constraints: Vec::new() }
    }

    /// Total degree in all `nvars` variables at most `cap`.
    pub fn total(nvars: usize, cap: u32) -> Self {
        Truncation::unbounded().with(vec![1; nvars], cap)
    }

    /// Independent cap per variable (`None` leaves the variable unbounded).
    pub fn per_variable(caps: &[Option<u32>]) -> Self {
        let mut t = Truncation::unbounded();
        for (j, cap) in caps.iter().enumerate() {
            if let Some(c) = cap {
                let mut w = vec![0; caps.len()];
                w[j] = 1;
                t = t.with(w, *c);
            }
        }
        t
    }

    pub fn with(mut self, weights: Vec<u32>, cap: u32) -> Self {
        self.constraints.push(Constraint { weights, cap });
        self
    }

    pub fn admits(&self, mono: &[u32]) -> bool {
        self.constraints.iter().all(|c| {
            let deg: u64 = c
                .weights
                .iter()
                .zip(mono)
                .map(|(w, e)| (*w as u64) * (*e as u64))
                .sum();
            deg <= c.cap as u64
        })
    }

    /// Every variable carries positive weight in some constraint.
    fn bounds_all(&self, nvars: usize) -> bool {
        (0..nvars).all(|j| self.constraints.iter().any(|c| c.weights.get(j).copied().unwrap_or(0) > 0))
    }
}

/// Truncated series with coefficients in `F`.
#[derive(Clone, PartialEq)]
pub struct Series<F: Field> {
    vars: Arc<Vec<String>>,
    trunc: Arc<Truncation>,
    terms: BTreeMap<Mono, F>,
}

impl<F: Field> fmt::Debug for Series<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Series[")?;
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c:?})")?;
            for (v, e) in self.vars.iter().zip(m) {
                if *e > 0 {
                    write!(f, "*{v}^{e}")?;
                }
            }
        }
        write!(f, "]")
    }
}

impl<F: Field> Series<F> {
    pub fn zero(vars: Vec<String>, trunc: Truncation) -> Self {
        Series { vars: Arc::new(vars), trunc: Arc::new(trunc), terms: BTreeMap::new() }
    }

    /// Zero series sharing the variables and caps of `self`.
    pub fn zero_like(&self) -> Self {
        Series { vars: self.vars.clone(), trunc: self.trunc.clone(), terms: BTreeMap::new() }
    }

    pub fn constant_like(&self, c: F) -> Self {
        let mut s = self.zero_like();
        s.add_term(vec![0; self.nvars()], c);
        s
    }

    pub fn var_like(&self, j: usize) -> Self {
        let mut m = vec![0; self.nvars()];
        m[j] = 1;
        let mut s = self.zero_like();
        s.add_term(m, F::one());
        s
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn truncation(&self) -> &Truncation {
        &self.trunc
    }

    pub fn terms(&self) -> &BTreeMap<Mono, F> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn compatible(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.vars, &other.vars) || self.vars == other.vars)
            && (Arc::ptr_eq(&self.trunc, &other.trunc) || self.trunc == other.trunc)
    }

    fn check(&self, other: &Self) -> Result<(), SeriesError> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(SeriesError::TruncationMismatch)
        }
    }

    /// Adds `c * x^mono`; ignored when the monomial is outside the caps.
    pub fn add_term(&mut self, mono: Mono, c: F) {
        if c.is_exactly_zero() || !self.trunc.admits(&mono) {
            return;
        }
        match self.terms.entry(mono) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_exactly_zero() {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    pub fn coefficient(&self, mono: &[u32]) -> F {
        self.terms.get(mono).cloned().unwrap_or_else(F::zero)
    }

    pub fn constant_term(&self) -> F {
        self.coefficient(&vec![0; self.nvars()])
    }

    pub fn add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        self.scale(&(-F::one()))
    }

    pub fn scale(&self, c: &F) -> Self {
        let mut out = self.zero_like();
        if c.is_exactly_zero() {
            return out;
        }
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v.clone() * c);
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Self, c: &F) {
        debug_assert!(self.compatible(other));
        for (m, v) in &other.terms {
            self.add_term(m.clone(), v.clone() * c);
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        let mut out = self.zero_like();
        let n = self.nvars();
        let mut buf = vec![0u32; n];
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                for j in 0..n {
                    buf[j] = ma[j] + mb[j];
                }
                if self.trunc.admits(&buf) {
                    out.add_term(buf.clone(), ca.clone() * cb);
                }
            }
        }
        out
    }

    fn nilpotent_part(&self) -> Self {
        let mut x = self.clone();
        x.terms.remove(&vec![0; self.nvars()]);
        x
    }

    /// Sum_{n>=0} coeffs(n) * x^n for a nilpotent x, stopping when x^n vanishes.
    fn power_sum(&self, x: &Self, mut coeff: impl FnMut(usize) -> F) -> Result<Self, SeriesError> {
        if !x.is_zero() && !self.trunc.bounds_all(self.nvars()) {
            // Nilpotence is only guaranteed when every variable is capped.
            let vars_in_x: Vec<usize> = (0..self.nvars())
                .filter(|&j| x.terms.keys().any(|m| m[j] > 0))
                .collect();
            let bounded = vars_in_x.iter().all(|&j| {
                self.trunc.constraints.iter().any(|c| c.weights.get(j).copied().unwrap_or(0) > 0)
            });
            if !bounded {
                return Err(SeriesError::NotNilpotent);
            }
        }
        let mut out = self.constant_like(coeff(0));
        let mut pow = self.constant_like(F::one());
        let mut n = 0usize;
        loop {
            n += 1;
            pow = pow.mul_unchecked(x);
            if pow.is_zero() {
                break;
            }
            out.add_scaled(&pow, &coeff(n));
            if n > 100_000 {
                return Err(SeriesError::NotNilpotent);
            }
        }
        Ok(out)
    }

    /// Multiplicative inverse; requires an invertible constant term.
    pub fn inverse(&self) -> Result<Self, SeriesError> {
        let c0 = self.constant_term();
        let c0inv = c0.inv().ok_or(SeriesError::NotInvertible)?;
        // 1/(c0 (1 + y)) with y = x / c0
        let y = self.nilpotent_part().scale(&c0inv);
        let s = self.power_sum(&y, |n| if n % 2 == 0 { F::one() } else { -F::one() })?;
        Ok(s.scale(&c0inv))
    }

    pub fn div(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        Ok(self.mul_unchecked(&other.inverse()?))
    }

    pub fn exp(&self) -> Result<Self, SeriesError> {
        let c0 = self.constant_term();
        let e0 = c0.exp_checked().ok_or(SeriesError::ExpConstant)?;
        let x = self.nilpotent_part();
        let mut inv_fact = vec![F::one()];
        let s = self.power_sum(&x, |n| {
            while inv_fact.len() <= n {
                let k = inv_fact.len();
                let prev = inv_fact[k - 1].clone();
                inv_fact.push(prev / F::from_int(k as i64));
            }
            inv_fact[n].clone()
        })?;
        Ok(s.scale(&e0))
    }

    /// Logarithm; the constant term must be 1 (float backend: any nonzero constant).
    pub fn log(&self) -> Result<Self, SeriesError> {
        let c0 = self.constant_term();
        let l0 = if F::EXACT {
            if c0 != F::one() {
                return Err(SeriesError::LogConstant);
            }
            F::zero()
        } else {
            c0.ln_checked().ok_or(SeriesError::LogConstant)?
        };
        let c0inv = c0.inv().ok_or(SeriesError::LogConstant)?;
        let y = self.nilpotent_part().scale(&c0inv);
        let s = self.power_sum(&y, |n| {
            if n == 0 {
                F::zero()
            } else if n % 2 == 1 {
                F::one() / F::from_int(n as i64)
            } else {
                -F::one() / F::from_int(n as i64)
            }
        })?;
        Ok(s.add(&self.constant_like(l0))?)
    }

    /// Partial derivative in variable `j`.
    pub fn derivative(&self, j: usize) -> Self {
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            if m[j] == 0 {
                continue;
            }
            let mut m2 = m.clone();
            m2[j] -= 1;
            out.add_term(m2, c.clone() * &F::from_int(m[j] as i64));
        }
        out
    }

    /// Term-wise antiderivative in variable `j` (zero constant of integration).
    pub fn antiderivative(&self, j: usize) -> Self {
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            let mut m2 = m.clone();
            m2[j] += 1;
            out.add_term(m2, c.clone() / F::from_int(m[j] as i64 + 1));
        }
        out
    }

    /// Multiplies by `x_j^k`.
    pub fn shift(&self, j: usize, k: u32) -> Self {
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            let mut m2 = m.clone();
            m2[j] += k;
            out.add_term(m2, c.clone());
        }
        out
    }

    /// Keeps only the terms selected by `keep`.
    pub fn filter(&self, keep: impl Fn(&[u32]) -> bool) -> Self {
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            if keep(m) {
                out.terms.insert(m.clone(), c.clone());
            }
        }
        out
    }

    /// Re-expresses the series under a different truncation (dropping excess terms).
    pub fn retruncate(&self, trunc: Truncation) -> Self {
        let mut out = Series::zero(self.vars.to_vec(), trunc);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    /// Maps coefficients into another field.
    pub fn map_coeffs<G: Field>(&self, f: impl Fn(&F) -> G) -> Series<G> {
        let mut out = Series::<G> {
            vars: self.vars.clone(),
            trunc: self.trunc.clone(),
            terms: BTreeMap::new(),
        };
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    /// Substitutes `x_j -> c * x_j` (e.g. `c = -1` maps z to -z).
    pub fn scale_variable(&self, j: usize, c: &F) -> Self {
        let mut out = self.zero_like();
        for (m, v) in &self.terms {
            let f = c.powi(m[j] as i64).expect("nonnegative power");
            out.add_term(m.clone(), v.clone() * &f);
        }
        out
    }

    /// Simultaneous substitution `x_j -> images[j]` for every `j` with `Some`.
    /// Variables mapped to `None` are kept. Images must share this series'
    /// variables and caps.
    pub fn compose(&self, images: &[Option<Self>]) -> Result<Self, SeriesError> {
        for im in images.iter().flatten() {
            self.check(im)?;
        }
        let n = self.nvars();
        let mut powers: Vec<Vec<Self>> = images
            .iter()
            .map(|im| match im {
                Some(s) => vec![s.constant_like(F::one()), s.clone()],
                None => Vec::new(),
            })
            .collect();
        let mut out = self.zero_like();
        for (m, c) in &self.terms {
            let mut kept = vec![0u32; n];
            let mut acc = self.constant_like(c.clone());
            for j in 0..n {
                if m[j] == 0 {
                    continue;
                }
                if images.get(j).map(|x| x.is_some()).unwrap_or(false) {
                    while powers[j].len() <= m[j] as usize {
                        let next = powers[j].last().unwrap().mul_unchecked(&powers[j][1]);
                        powers[j].push(next);
                    }
                    acc = acc.mul_unchecked(&powers[j][m[j] as usize]);
                } else {
                    kept[j] = m[j];
                }
            }
            if kept.iter().any(|&e| e > 0) {
                let mut mono_series = self.zero_like();
                mono_series.add_term(kept, F::one());
                acc = acc.mul_unchecked(&mono_series);
            }
            for (mm, cc) in acc.terms {
                out.add_term(mm, cc);
            }
        }
        Ok(out)
    }

    /// Substitutes a single variable.
    pub fn substitute(&self, j: usize, image: &Self) -> Result<Self, SeriesError> {
        if j >= self.nvars() {
            return Err(SeriesError::BadVariable(j));
        }
        let mut images = vec![None; self.nvars()];
        images[j] = Some(image.clone());
        self.compose(&images)
    }

    /// Evaluates variable `j` at zero.
    pub fn set_zero(&self, j: usize) -> Self {
        self.filter(|m| m[j] == 0)
    }

    /// Largest coefficient magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.terms.values().map(|c| c.magnitude()).fold(0.0, f64::max)
    }

    /// Total degree of a monomial.
    pub fn degree(m: &[u32]) -> u32 {
        m.iter().sum()
    }

    /// Reconstructs `f` from its gradient using the homogeneous-part identity
    /// `sum_a x_a d_a f_d = d f_d`, with constant term `c0`.
    pub fn from_gradient(grad: &[Self], c0: F) -> Self {
        let base = &grad[0];
        let mut out = base.constant_like(c0);
        for (a, g) in grad.iter().enumerate() {
            for (m, c) in g.terms() {
                let mut m2 = m.clone();
                m2[a] += 1;
                let d = Self::degree(&m2);
                out.add_term(m2, c.clone() / F::from_int(d as i64));
            }
        }
        out
    }
}

/// Divides `numerator(z, w)` by `(z + w)`, where `z`, `w` are variables of
/// equal weight in every cap. The numerator must vanish on `w = -z`.
/// The returned series has every cap touching `z, w` lowered by their weight.
pub fn singular_quotient<F: Field>(
    numerator: &Series<F>,
    z: usize,
    w: usize,
) -> Result<Series<F>, SeriesError> {
    let n = numerator.nvars();
    if z >= n || w >= n || z == w {
        return Err(SeriesError::BadVariable(z.max(w)));
    }
    let mut trunc = numerator.truncation().clone();
    for c in &mut trunc.constraints {
        let wz = c.weights.get(z).copied().unwrap_or(0);
        let ww = c.weights.get(w).copied().unwrap_or(0);
        if wz != ww {
            return Err(SeriesError::TruncationMismatch);
        }
        c.cap = c.cap.saturating_sub(wz);
    }
    let scale = numerator.max_magnitude();
    // Group terms by the exponents of the other variables and by total degree in (z, w).
    let mut groups: BTreeMap<(Mono, u32), BTreeMap<u32, F>> = BTreeMap::new();
    for (m, c) in numerator.terms() {
        let mut rest = m.clone();
        rest[z] = 0;
        rest[w] = 0;
        groups
            .entry((rest, m[z] + m[w]))
            .or_default()
            .insert(m[z], c.clone());
    }
    let mut out = Series::zero(numerator.vars().to_vec(), trunc);
    let mut worst = 0.0f64;
    for ((rest, deg), coeffs) in groups {
        if deg == 0 {
            let c = coeffs.values().next().cloned().unwrap_or_else(F::zero);
            worst = worst.max(c.magnitude());
            if !c.negligible(scale) {
                return Err(SeriesError::NotDivisible { residual: c.magnitude() });
            }
            continue;
        }
        // N_{a, deg-a} = Q_{a-1, deg-a} + Q_{a, deg-a-1}; sweep a from deg down.
        let num = |a: u32| coeffs.get(&a).cloned().unwrap_or_else(F::zero);
        let mut q_prev = F::zero(); // Q_{a, deg-1-a}
        let mut qs: Vec<(u32, F)> = Vec::new();
        for a in (1..=deg).rev() {
            let q = num(a) - &q_prev; // Q_{a-1, deg-a}
            qs.push((a - 1, q.clone()));
            q_prev = q;
        }
        let residual = num(0) - &q_prev;
        worst = worst.max(residual.magnitude());
        if !residual.negligible(scale) {
            return Err(SeriesError::NotDivisible { residual: residual.magnitude() });
        }
        for (a, q) in qs {
            let mut m = rest.clone();
            m[z] = a;
            m[w] = deg - 1 - a;
            out.add_term(m, q);
        }
    }
    let _ = worst;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{Cx, Q};
    use proptest::prelude::*;

    fn z_series(cap: u32) -> Series<Q> {
        Series::zero(vec!["z".into()], Truncation::total(1, cap))
    }

    fn zw(cap: u32) -> Series<Q> {
        Series::zero(vec!["z".into(), "w".into()], Truncation::total(2, cap))
    }

    #[test]
    fn exp_of_log_one_plus_z() {
        let s = z_series(6);
        let one_plus_z = s.constant_like(Q::one()).add(&s.var_like(0)).unwrap();
        let back = one_plus_z.log().unwrap().exp().unwrap();
        assert_eq!(back, one_plus_z);
    }

    #[test]
    fn geometric_series_product() {
        let s = z_series(7);
        let mut geo = s.zero_like();
        for k in 0..=7 {
            geo.add_term(vec![k], if k % 2 == 0 { Q::one() } else { -Q::one() });
        }
        let one_plus_z = s.constant_like(Q::one()).add(&s.var_like(0)).unwrap();
        assert_eq!(one_plus_z.mul(&geo).unwrap(), s.constant_like(Q::one()));
    }

    #[test]
    fn sign_substitution() {
        let s = z_series(4);
        let mut r = s.constant_like(Q::one());
        r.add_term(vec![1], Q::new(3, 2));
        r.add_term(vec![2], Q::new(-5, 7));
        let flipped = r.scale_variable(0, &Q::new(-1, 1));
        assert_eq!(flipped.coefficient(&[1]), Q::new(-3, 2));
        assert_eq!(flipped.coefficient(&[2]), Q::new(-5, 7));
        let via_compose = r.substitute(0, &s.var_like(0).neg()).unwrap();
        assert_eq!(via_compose, flipped);
    }

    #[test]
    fn quotient_of_difference_of_squares() {
        let s = zw(4);
        let mut num = s.zero_like();
        num.add_term(vec![2, 0], Q::one());
        num.add_term(vec![0, 2], -Q::one());
        let q = singular_quotient(&num, 0, 1).unwrap();
        let mut expect = Series::zero(s.vars().to_vec(), Truncation::total(2, 3));
        expect.add_term(vec![1, 0], Q::one());
        expect.add_term(vec![0, 1], -Q::one());
        assert_eq!(q, expect);
    }

    #[test]
    fn quotient_of_shifted_exponential() {
        // (e^{a(z+w)} - 1)/(z+w) = sum_{n>=1} a^n (z+w)^{n-1}/n!
        let a = Q::new(2, 3);
        let s = zw(6);
        let zpw = s.var_like(0).add(&s.var_like(1)).unwrap();
        let num = zpw.scale(&a).exp().unwrap().sub(&s.constant_like(Q::one())).unwrap();
        let q = singular_quotient(&num, 0, 1).unwrap();
        // independent expansion via binomial coefficients
        let mut fact = Q::one();
        for n in 1..=6u32 {
            fact = fact * Q::new(n as i64, 1);
            let an = a.powi(n as i64).unwrap() / fact.clone();
            for i in 0..n {
                let binom = rug::Integer::from(rug::Integer::binomial_u(n - 1, i));
                let expect = an.clone() * Q(rug::Rational::from(binom));
                assert_eq!(q.coefficient(&[i, n - 1 - i]), expect, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn quotient_of_zero_and_failure() {
        let s = zw(3);
        assert!(singular_quotient(&s.zero_like(), 0, 1).unwrap().is_zero());
        let mut bad = s.zero_like();
        bad.add_term(vec![1, 0], Q::one());
        assert!(matches!(singular_quotient(&bad, 0, 1), Err(SeriesError::NotDivisible { .. })));
    }

    #[test]
    fn mismatched_caps_rejected() {
        let a = z_series(3).constant_like(Q::one());
        let b = z_series(4).constant_like(Q::one());
        assert_eq!(a.mul(&b), Err(SeriesError::TruncationMismatch));
        assert_eq!(z_series(3).zero_like().inverse(), Err(SeriesError::NotInvertible));
    }

    #[test]
    fn float_backend_log_exp() {
        let s: Series<Cx> = Series::zero(vec!["x".into(), "y".into()], Truncation::total(2, 5));
        let mut a = s.constant_like(Cx::from_f64(2.0));
        a.add_term(vec![1, 0], Cx::from_parts_f64(0.5, 0.25));
        a.add_term(vec![1, 1], Cx::from_f64(-1.5));
        let back = a.log().unwrap().exp().unwrap();
        assert!(back.sub(&a).unwrap().max_magnitude() < 1e-70);
    }

    #[test]
    fn gradient_reconstruction() {
        let s: Series<Q> = Series::zero(vec!["x".into(), "y".into()], Truncation::total(2, 5));
        let mut f = s.constant_like(Q::new(3, 1));
        f.add_term(vec![2, 1], Q::new(1, 2));
        f.add_term(vec![0, 4], Q::new(-2, 5));
        f.add_term(vec![1, 0], Q::new(7, 3));
        let grad = vec![f.derivative(0), f.derivative(1)];
        assert_eq!(Series::from_gradient(&grad, Q::new(3, 1)), f);
    }

    fn arb_series(cap: u32) -> impl Strategy<Value = Series<Q>> {
        proptest::collection::vec((0u32..=cap, 0u32..=cap, -9i64..=9, 1i64..=5), 0..10).prop_map(
            move |terms| {
                let mut s = zw(cap);
                for (a, b, n, d) in terms {
                    s.add_term(vec![a, b], Q::new(n, d));
                }
                s
            },
        )
    }

    proptest! {
        #[test]
        fn product_then_divide_recovers(a in arb_series(4), b in arb_series(4), c0 in 1i64..5) {
            let mut b = b;
            b.add_term(vec![0, 0], Q::new(c0, 1) - b.constant_term());
            let prod = a.mul(&b).unwrap();
            prop_assert_eq!(prod.div(&b).unwrap(), a.clone());
            prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
        }

        #[test]
        fn quotient_inverts_multiplication(x in arb_series(3)) {
            let s = zw(4);
            let zpw = s.var_like(0).add(&s.var_like(1)).unwrap();
            let num = x.retruncate(Truncation::total(2, 4)).mul(&zpw).unwrap();
            let q = singular_quotient(&num, 0, 1).unwrap();
            prop_assert_eq!(q, x.retruncate(Truncation::total(2, 3)));
        }
    }
}
