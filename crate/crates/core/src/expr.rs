//! Symbolic expressions in flat coordinates: finite sums of
//! `coeff * prod t_a^{m_a} * exp(sum c_a t_a)` with integer (possibly negative)
//! exponents `m_a` and rational exponential coefficients `c_a`.
//!
//! The class is closed under differentiation, and under antidifferentiation
//! except for `t^{-1}` without exponential and `t^{m<0} e^{ct}` with `c != 0`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rug::Rational;
use serde_json::{json, Value};
use thiserror::Error;

use crate::scalar::Field;
use crate::series::{Series, Truncation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("parameter `{0}` has no bound value")]
    UnboundParameter(String),
    #[error("antiderivative in t{var} leaves the expression class (t^{mono} with exponential coefficient {exp})")]
    NoAntiderivative { var: usize, mono: i32, exp: String },
    #[error("gradient is not closed: residual in direction t{0}")]
    PathDependent(usize),
    #[error("exponential factor is not representable exactly at this point")]
    InexactExponential,
    #[error("negative power of a coordinate that vanishes at the expansion point")]
    PoleAtPoint,
    #[error("malformed expression document: {0}")]
    Schema(String),
}

/// Key of a term: sorted parameter names, exponents, exponential coefficients.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    pub params: Vec<String>,
    pub mono: Vec<i32>,
    pub exp: Vec<Rational>,
}

#[derive(Clone, PartialEq, Eq, Default)]
pub struct Expr {
    nvars: usize,
    terms: BTreeMap<TermKey, Rational>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (k, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for p in &k.params {
                write!(f, "*{p}")?;
            }
            for (a, m) in k.mono.iter().enumerate() {
                if *m != 0 {
                    write!(f, "*t{a}^{m}")?;
                }
            }
            if k.exp.iter().any(|c| *c != 0) {
                write!(f, "*exp(")?;
                let mut first = true;
                for (a, c) in k.exp.iter().enumerate() {
                    if *c != 0 {
                        if !first {
                            write!(f, "+")?;
                        }
                        first = false;
                        write!(f, "{c}*t{a}")?;
                    }
                }
                write!(f, ")")?;
            }
        }
        Ok(())
    }
}

impl Expr {
    pub fn zero(nvars: usize) -> Self {
        Expr { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        Expr::zero(nvars).with_term(c, vec![0; nvars], vec![Rational::new(); nvars])
    }

    /// `c * t^mono * exp(exp . t)`.
    pub fn with_term(mut self, c: Rational, mono: Vec<i32>, exp: Vec<Rational>) -> Self {
        assert_eq!(mono.len(), self.nvars);
        assert_eq!(exp.len(), self.nvars);
        self.push(TermKey { params: Vec::new(), mono, exp }, c);
        self
    }

    /// `c * param * t^mono * exp(exp . t)`.
    pub fn with_param_term(mut self, param: &str, c: Rational, mono: Vec<i32>, exp: Vec<Rational>) -> Self {
        assert_eq!(mono.len(), self.nvars);
        self.push(TermKey { params: vec![param.to_string()], mono, exp }, c);
        self
    }

    /// Monomial `c * t^mono` with integer exponents.
    pub fn monomial(nvars: usize, c: Rational, mono: &[i32]) -> Self {
        Expr::zero(nvars).with_term(c, mono.to_vec(), vec![Rational::new(); nvars])
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &BTreeMap<TermKey, Rational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn push(&mut self, key: TermKey, c: Rational) {
        if c == 0 {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0 {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    pub fn params(&self) -> Vec<String> {
        let mut out: Vec<String> = self.terms.keys().flat_map(|k| k.params.iter().cloned()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Replaces named parameters by rational values.
    pub fn bind(&self, values: &HashMap<String, Rational>) -> Result<Expr, ExprError> {
        let mut out = Expr::zero(self.nvars);
        for (k, c) in &self.terms {
            let mut coeff = c.clone();
            for p in &k.params {
                let v = values.get(p).ok_or_else(|| ExprError::UnboundParameter(p.clone()))?;
                coeff *= v;
            }
            out.push(TermKey { params: Vec::new(), mono: k.mono.clone(), exp: k.exp.clone() }, coeff);
        }
        Ok(out)
    }

    pub fn add(&self, other: &Expr) -> Expr {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.push(k.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, s: &Rational) -> Expr {
        let mut out = Expr::zero(self.nvars);
        for (k, c) in &self.terms {
            out.push(k.clone(), Rational::from(c * s));
        }
        out
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.scale(&Rational::from(-1)))
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Expr::zero(self.nvars);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let mut params = ka.params.clone();
                params.extend(kb.params.iter().cloned());
                params.sort();
                let mono = ka.mono.iter().zip(&kb.mono).map(|(a, b)| a + b).collect();
                let exp = ka.exp.iter().zip(&kb.exp).map(|(a, b)| Rational::from(a + b)).collect();
                out.push(TermKey { params, mono, exp }, Rational::from(ca * cb));
            }
        }
        out
    }

    /// Partial derivative in `t_a`.
    pub fn diff(&self, a: usize) -> Expr {
        let mut out = Expr::zero(self.nvars);
        for (k, c) in &self.terms {
            let m = k.mono[a];
            if m != 0 {
                let mut k2 = k.clone();
                k2.mono[a] -= 1;
                out.push(k2, Rational::from(c * m));
            }
            if k.exp[a] != 0 {
                out.push(k.clone(), Rational::from(c * &k.exp[a]));
            }
        }
        out
    }

    /// A term-wise antiderivative in `t_a` (no constant added).
    pub fn antiderivative(&self, a: usize) -> Result<Expr, ExprError> {
        let mut out = Expr::zero(self.nvars);
        for (k, c) in &self.terms {
            let m = k.mono[a];
            let e = &k.exp[a];
            if *e == 0 {
                if m == -1 {
                    return Err(ExprError::NoAntiderivative { var: a, mono: m, exp: e.to_string() });
                }
                let mut k2 = k.clone();
                k2.mono[a] += 1;
                out.push(k2, Rational::from(c / Rational::from(m + 1)));
            } else {
                if m < 0 {
                    return Err(ExprError::NoAntiderivative { var: a, mono: m, exp: e.to_string() });
                }
                // x^m e^{ex} integrates to sum_j (-1)^j m!/(m-j)! x^{m-j} e^{ex} / e^{j+1}
                let mut falling = Rational::from(1);
                let mut epow = e.clone();
                for j in 0..=m {
                    let mut k2 = k.clone();
                    k2.mono[a] = m - j;
                    let sign = if j % 2 == 0 { 1 } else { -1 };
                    out.push(k2, Rational::from(c * &falling) * sign / &epow);
                    falling *= m - j;
                    epow *= e;
                }
            }
        }
        Ok(out)
    }

    /// Finds `f` with `d_a f = grad[a]` for every `a`, integrating one
    /// coordinate at a time, then verifies the result against every component.
    pub fn integrate_gradient(grad: &[Expr]) -> Result<Expr, ExprError> {
        let n = grad.len();
        let mut f = Expr::zero(n);
        for a in 0..n {
            let missing = grad[a].sub(&f.diff(a));
            // `missing` must not depend on t_b for b < a
            for b in 0..a {
                if !missing.diff(b).is_zero() {
                    return Err(ExprError::PathDependent(a));
                }
            }
            f = f.add(&missing.antiderivative(a)?);
        }
        for (a, g) in grad.iter().enumerate() {
            if f.diff(a) != *g {
                return Err(ExprError::PathDependent(a));
            }
        }
        Ok(f)
    }

    /// Value at a point.
    pub fn evaluate<F: Field>(&self, point: &[F]) -> Result<F, ExprError> {
        Ok(self.taylor(point, 0)?.constant_term())
    }

    /// Taylor expansion around `point` in shift variables `d_a = t_a - point_a`,
    /// total degree at most `order`.
    pub fn taylor<F: Field>(&self, point: &[F], order: u32) -> Result<Series<F>, ExprError> {
        let n = self.nvars;
        if point.len() != n {
            return Err(ExprError::Dimension { expected: n, got: point.len() });
        }
        let names: Vec<String> = (0..n).map(|a| format!("d{a}")).collect();
        let base: Series<F> = Series::zero(names, Truncation::total(n, order));
        let mut out = base.zero_like();
        let mut cache: HashMap<(usize, i32, Rational), Series<F>> = HashMap::new();
        for (k, c) in &self.terms {
            if let Some(p) = k.params.first() {
                return Err(ExprError::UnboundParameter(p.clone()));
            }
            let mut term = base.constant_like(F::from_rational(c));
            for a in 0..n {
                if k.mono[a] == 0 && k.exp[a] == 0 {
                    continue;
                }
                let key = (a, k.mono[a], k.exp[a].clone());
                if !cache.contains_key(&key) {
                    let s = univariate_factor(&base, a, &point[a], k.mono[a], &k.exp[a], order)?;
                    cache.insert(key.clone(), s);
                }
                term = term.mul_unchecked(&cache[&key]);
            }
            out = out.add(&term).expect("shared truncation");
        }
        Ok(out)
    }

    /// All partial derivatives of order at most `order` at `point`, keyed by
    /// multi-index.
    pub fn evaluate_jet<F: Field>(&self, point: &[F], order: u32) -> Result<BTreeMap<Vec<u32>, F>, ExprError> {
        let s = self.taylor(point, order)?;
        let mut jet = BTreeMap::new();
        for (m, c) in s.terms() {
            let mut f = c.clone();
            for e in m {
                f = f * F::from_rational(&Rational::from(crate::scalar::factorial(*e)));
            }
            jet.insert(m.clone(), f);
        }
        Ok(jet)
    }

    /// Parses the JSON term list
    /// `[{"coeff": "p/q" | {"param": name, "scale"?: "p/q"}, "mono": [...], "exp": [...]}]`.
    pub fn from_json(v: &Value, nvars: usize) -> Result<Expr, ExprError> {
        let arr = v.as_array().ok_or_else(|| ExprError::Schema("potential must be an array of terms".into()))?;
        let mut out = Expr::zero(nvars);
        for t in arr {
            let mono: Vec<i32> = match t.get("mono") {
                Some(Value::Array(a)) => a
                    .iter()
                    .map(|x| x.as_i64().map(|v| v as i32).ok_or_else(|| ExprError::Schema("mono entries must be integers".into())))
                    .collect::<Result<_, _>>()?,
                None => vec![0; nvars],
                _ => return Err(ExprError::Schema("mono must be an array".into())),
            };
            let exp: Vec<Rational> = match t.get("exp") {
                Some(Value::Array(a)) => a.iter().map(parse_rational_value).collect::<Result<_, _>>()?,
                None => vec![Rational::new(); nvars],
                _ => return Err(ExprError::Schema("exp must be an array".into())),
            };
            if mono.len() != nvars || exp.len() != nvars {
                return Err(ExprError::Dimension { expected: nvars, got: mono.len().max(exp.len()) });
            }
            let coeff = t.get("coeff").ok_or_else(|| ExprError::Schema("term without coeff".into()))?;
            match coeff {
                Value::Object(o) => {
                    let name = o
                        .get("param")
                        .and_then(|p| p.as_str())
                        .ok_or_else(|| ExprError::Schema("coeff object needs a param name".into()))?;
                    let scale = match o.get("scale") {
                        Some(s) => parse_rational_value(s)?,
                        None => Rational::from(1),
                    };
                    out.push(TermKey { params: vec![name.to_string()], mono, exp }, scale);
                }
                other => {
                    let c = parse_rational_value(other)?;
                    out.push(TermKey { params: Vec::new(), mono, exp }, c);
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(k, c)| {
                let coeff = match k.params.len() {
                    0 => json!(c.to_string()),
                    _ => json!({"param": k.params.join("*"), "scale": c.to_string()}),
                };
                json!({
                    "coeff": coeff,
                    "mono": k.mono,
                    "exp": k.exp.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                })
            })
            .collect();
        Value::Array(terms)
    }
}

pub fn parse_rational_value(v: &Value) -> Result<Rational, ExprError> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Rational::from(i))
            } else {
                Err(ExprError::Schema(format!("non-integer number {n}; write rationals as \"p/q\" strings")))
            }
        }
        _ => Err(ExprError::Schema(format!("expected a rational, got {v}"))),
    }
}

pub fn parse_rational(s: &str) -> Result<Rational, ExprError> {
    crate::scalar::Q::parse(s.trim()).map(|q| q.0).ok_or_else(|| ExprError::Schema(format!("bad rational `{s}`")))
}

/// Expansion of `(p + d)^m * exp(c (p + d))` in `d` up to `order`.
fn univariate_factor<F: Field>(
    base: &Series<F>,
    a: usize,
    p: &F,
    m: i32,
    c: &Rational,
    order: u32,
) -> Result<Series<F>, ExprError> {
    let mut out = base.zero_like();
    let mut pow_part: Vec<F> = Vec::with_capacity(order as usize + 1);
    if m >= 0 {
        // binomial(m, j) p^{m-j}
        for j in 0..=order as i64 {
            if j > m as i64 {
                pow_part.push(F::zero());
                continue;
            }
            let b = rug::Integer::from(rug::Integer::binomial_u(m as u32, j as u32));
            pow_part.push(F::from_rational(&Rational::from(b)) * p.powi(m as i64 - j).unwrap());
        }
    } else {
        if p.is_exactly_zero() {
            return Err(ExprError::PoleAtPoint);
        }
        // generalized binomial(m, j) p^{m-j}
        let mut binom = Rational::from(1);
        for j in 0..=order as i64 {
            pow_part.push(F::from_rational(&binom) * p.powi(m as i64 - j).ok_or(ExprError::PoleAtPoint)?);
            binom *= Rational::from(m as i64 - j);
            binom /= Rational::from(j + 1);
        }
    }
    let mut exp_part: Vec<F> = Vec::with_capacity(order as usize + 1);
    let e0 = if *c == 0 {
        F::one()
    } else {
        (F::from_rational(c) * p).exp_checked().ok_or(ExprError::InexactExponential)?
    };
    let mut coeff = Rational::from(1);
    for j in 0..=order {
        exp_part.push(e0.clone() * F::from_rational(&coeff));
        coeff *= c;
        coeff /= Rational::from(j + 1);
    }
    let n = base.nvars();
    for deg in 0..=order as usize {
        let mut acc = F::zero();
        for i in 0..=deg {
            acc += pow_part[i].clone() * &exp_part[deg - i];
        }
        let mut mono = vec![0u32; n];
        mono[a] = deg as u32;
        out.add_term(mono, acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{Cx, Q};
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    fn zeros(n: usize) -> Vec<Rational> {
        vec![Rational::new(); n]
    }

    /// t0^2 t1 / 2 + e^{t1}
    fn cp1() -> Expr {
        Expr::monomial(2, r(1, 2), &[2, 1]).with_term(r(1, 1), vec![0, 0], vec![r(0, 1), r(1, 1)])
    }

    #[test]
    fn jet_of_cp1_shape() {
        let jet = cp1().evaluate_jet(&[Q::zero(), Q::zero()], 3).unwrap();
        assert_eq!(jet[&vec![2, 1]], Q::one());
        assert_eq!(jet[&vec![0, 3]], Q::one());
        assert!(!jet.contains_key(&vec![3, 0]));
    }

    #[test]
    fn jet_of_cubic() {
        let f = Expr::monomial(1, r(1, 6), &[3]);
        let jet = f.evaluate_jet(&[Q::new(5, 7)], 3).unwrap();
        assert_eq!(jet[&vec![3]], Q::one());
        assert_eq!(jet[&vec![2]], Q::new(5, 7));
    }

    #[test]
    fn bound_parameter_exponential() {
        let f = Expr::zero(1).with_param_term("q", r(1, 1), vec![0], vec![r(1, 1)]);
        assert_eq!(f.evaluate(&[Q::zero()]), Err(ExprError::UnboundParameter("q".into())));
        let mut vals = HashMap::new();
        vals.insert("q".to_string(), r(1, 4));
        let jet = f.bind(&vals).unwrap().evaluate_jet(&[Q::zero()], 2).unwrap();
        for k in 0..=2u32 {
            assert_eq!(jet[&vec![k]], Q::new(1, 4));
        }
    }

    #[test]
    fn laurent_taylor_matches_float_evaluation() {
        // t^{-3} around p = 2: derivatives -3 p^{-4}, 12 p^{-5}
        let f = Expr::monomial(1, r(1, 1), &[-3]);
        let jet = f.evaluate_jet(&[Q::new(2, 1)], 2).unwrap();
        assert_eq!(jet[&vec![0]], Q::new(1, 8));
        assert_eq!(jet[&vec![1]], Q::new(-3, 16));
        assert_eq!(jet[&vec![2]], Q::new(12, 32));
    }

    #[test]
    fn float_exponential_evaluation() {
        let f = Expr::zero(1).with_term(r(3, 1), vec![1], vec![r(1, 2)]);
        let v = f.evaluate(&[Cx::from_f64(2.0)]).unwrap();
        let expect = Cx::from_f64(6.0) * Cx::from_f64(1.0).exp();
        assert!((v - expect).magnitude() < 1e-70);
    }

    #[test]
    fn antiderivative_failures() {
        let inv = Expr::monomial(1, r(1, 1), &[-1]);
        assert!(matches!(inv.antiderivative(0), Err(ExprError::NoAntiderivative { .. })));
        let bad = Expr::zero(1).with_term(r(1, 1), vec![-2], vec![r(1, 1)]);
        assert!(bad.antiderivative(0).is_err());
        // constant in t1 but depends on t0 only: fine
        assert!(Expr::monomial(2, r(1, 1), &[3, 0]).antiderivative(1).is_ok());
    }

    #[test]
    fn gradient_integration_detects_non_closed_forms() {
        // (t1, 0) is not a gradient
        let g = vec![Expr::monomial(2, r(1, 1), &[0, 1]), Expr::zero(2)];
        assert!(matches!(Expr::integrate_gradient(&g), Err(ExprError::PathDependent(_))));
        let f = cp1();
        let grad: Vec<Expr> = (0..2).map(|a| f.diff(a)).collect();
        let back = Expr::integrate_gradient(&grad).unwrap();
        assert_eq!(back.diff(0), f.diff(0));
        assert_eq!(back.diff(1), f.diff(1));
    }

    #[test]
    fn json_round_trip() {
        let f = cp1().with_param_term("q", r(-2, 3), vec![1, 0], zeros(2));
        let back = Expr::from_json(&f.to_json(), 2).unwrap();
        assert_eq!(back, f);
        let v: Value = serde_json::from_str(r#"[{"coeff": "1/2", "mono": [2, 1], "exp": [0, 0]}, {"coeff": {"param": "q"}, "mono": [0, 0], "exp": [0, "1"]}]"#).unwrap();
        let e = Expr::from_json(&v, 2).unwrap();
        assert_eq!(e.params(), vec!["q".to_string()]);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        proptest::collection::vec((-3i64..=3, 1i64..=4, 0i32..=3, -1i32..=3, -2i64..=2), 1..6).prop_map(|ts| {
            let mut e = Expr::zero(2);
            for (n, d, m0, m1, c) in ts {
                e = e.with_term(r(n, d), vec![m0, m1], vec![r(c, 2), r(0, 1)]);
            }
            e
        })
    }

    proptest! {
        #[test]
        fn antiderivative_then_derivative(e in arb_expr()) {
            if let Ok(a) = e.antiderivative(0) {
                prop_assert_eq!(a.diff(0), e);
            }
        }

        #[test]
        fn derivatives_commute(e in arb_expr()) {
            prop_assert_eq!(e.diff(0).diff(1), e.diff(1).diff(0));
        }

        #[test]
        fn jet_matches_symbolic_derivative(e in arb_expr(), p0 in 1i64..5, p1 in 1i64..5) {
            let p = [Q::new(p0, 3), Q::new(p1, 2)];
            // exact backend: drop exponential factors so the point value stays rational
            let mut poly = Expr::zero(2);
            for (k, c) in e.terms() {
                poly = poly.with_term(c.clone(), k.mono.clone(), zeros(2));
            }
            let e = poly;
            let jet = e.evaluate_jet(&p, 2).unwrap();
            let d01 = e.diff(0).diff(1).evaluate(&p).unwrap();
            prop_assert_eq!(jet.get(&vec![1, 1]).cloned().unwrap_or_else(Q::zero), d01);
        }
    }
}
