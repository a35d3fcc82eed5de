//! Frobenius manifold models: flat metric, genus-0 potential, optional Euler
//! field, and the axiom checks (WDVV, unit, homogeneity).

use std::collections::{BTreeMap, HashMap};

use rug::Rational;
use serde_json::{json, Value};
use thiserror::Error;

use crate::expr::{parse_rational_value, Expr, ExprError};
use crate::matrix::Matrix;
use crate::scalar::{Field, Q};
use crate::series::Series;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("metric must be a symmetric invertible {0}x{0} matrix")]
    BadMetric(usize),
    #[error("model schema: {0}")]
    Schema(String),
    #[error("model has no Euler field")]
    NoEuler,
    #[error("the two-primary family at d = {0} needs a non-integer power of t1")]
    UnsupportedDimension(String),
}

/// Linear Euler field `E = sum_a (sum_b matrix[a][b] t_b + shift[a]) d_a`
/// with conformal dimension `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct EulerData {
    pub matrix: Matrix<Q>,
    pub shift: Vec<Q>,
    pub conformal_dimension: Q,
}

impl EulerData {
    /// Components `E^a(t)` at a point.
    pub fn at<F: Field>(&self, t: &[F]) -> Vec<F> {
        let n = self.shift.len();
        (0..n)
            .map(|a| {
                let mut acc = F::from_rational(&self.shift[a].0);
                for b in 0..n {
                    acc += F::from_rational(&self.matrix[(a, b)].0) * &t[b];
                }
                acc
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct FrobeniusModel {
    pub name: String,
    pub metric: Matrix<Q>,
    pub metric_inv: Matrix<Q>,
    /// Potential with all parameters bound.
    pub potential: Expr,
    pub unit_index: usize,
    pub euler: Option<EulerData>,
}

/// Third derivatives `F_{abc}` at a point, indexed `[a][b][c]`.
pub type Cubic<F> = Vec<Vec<Vec<F>>>;

impl FrobeniusModel {
    pub fn new(
        name: &str,
        metric: Matrix<Q>,
        potential: Expr,
        unit_index: usize,
        euler: Option<EulerData>,
    ) -> Result<Self, ModelError> {
        let n = metric.rows();
        if metric.cols() != n || !metric.is_symmetric() || potential.nvars() != n || unit_index >= n {
            return Err(ModelError::BadMetric(n));
        }
        let metric_inv = metric.inverse().ok_or(ModelError::BadMetric(n))?;
        if let Some(p) = potential.params().first() {
            return Err(ExprError::UnboundParameter(p.clone()).into());
        }
        Ok(FrobeniusModel { name: name.to_string(), metric, metric_inv, potential, unit_index, euler })
    }

    pub fn dim(&self) -> usize {
        self.metric.rows()
    }

    pub fn is_conformal(&self) -> bool {
        self.euler.is_some()
    }

    /// The point model: `F = t^3/6`, `E = t d_t`, `D = 0`.
    pub fn point() -> Self {
        let f = Expr::monomial(1, Rational::from((1, 6)), &[3]);
        let euler = EulerData {
            matrix: Matrix::identity(1),
            shift: vec![Q::zero()],
            conformal_dimension: Q::zero(),
        };
        FrobeniusModel::new("pt", Matrix::identity(1), f, 0, Some(euler)).unwrap()
    }

    /// Two primaries with `g_01 = 1` and conformal dimension `d`:
    /// `F = t0^2 t1/2 + c t1^p`, `p = (3-d)/(1-d)`, `E = t0 d_0 + (1-d) t1 d_1`.
    /// At `d = 1` the homogeneous term is `c e^{t1}` with `E = t0 d_0 + 2 d_1`.
    /// `p` must be an integer other than 0, 1, 2 (those give no cubic term).
    pub fn two_primary(d: &Rational, c: &Rational) -> Result<Self, ModelError> {
        let metric = Matrix::from_rows(vec![vec![Q::zero(), Q::one()], vec![Q::one(), Q::zero()]]);
        let mut f = Expr::monomial(2, Rational::from((1, 2)), &[2, 1]);
        let dq = Q(d.clone());
        let euler;
        if *d == 1 {
            f = f.with_term(c.clone(), vec![0, 0], vec![Rational::new(), Rational::from(1)]);
            euler = EulerData {
                matrix: Matrix::from_rows(vec![vec![Q::one(), Q::zero()], vec![Q::zero(), Q::zero()]]),
                shift: vec![Q::zero(), Q::new(2, 1)],
                conformal_dimension: dq,
            };
        } else {
            let p = Rational::from(3 - d.clone()) / Rational::from(1 - d.clone());
            if *p.denom() != 1 || p == 0 || p == 1 || p == 2 {
                return Err(ModelError::UnsupportedDimension(d.to_string()));
            }
            let p = p.numer().to_i32().ok_or_else(|| ModelError::UnsupportedDimension(d.to_string()))?;
            f = f.add(&Expr::monomial(2, c.clone(), &[0, p]));
            euler = EulerData {
                matrix: Matrix::from_rows(vec![
                    vec![Q::one(), Q::zero()],
                    vec![Q::zero(), Q(Rational::from(1 - d.clone()))],
                ]),
                shift: vec![Q::zero(), Q::zero()],
                conformal_dimension: dq,
            };
        }
        FrobeniusModel::new(&format!("two-primary(d={d})"), metric, f, 0, Some(euler))
    }

    /// The rank-3 polynomial structure of type A3:
    /// `F = t0^2 t2/2 + t0 t1^2/2 - t1^2 t2^2/16 + t2^5/960` with
    /// `g_02 = g_11 = 1`, `E = t0 d_0 + (3/4) t1 d_1 + (1/2) t2 d_2`, `D = 1/2`.
    pub fn a3() -> Self {
        let metric = Matrix::from_rows(vec![
            vec![Q::zero(), Q::zero(), Q::one()],
            vec![Q::zero(), Q::one(), Q::zero()],
            vec![Q::one(), Q::zero(), Q::zero()],
        ]);
        let f = Expr::monomial(3, Rational::from((1, 2)), &[2, 0, 1])
            .add(&Expr::monomial(3, Rational::from((1, 2)), &[1, 2, 0]))
            .add(&Expr::monomial(3, Rational::from((-1, 16)), &[0, 2, 2]))
            .add(&Expr::monomial(3, Rational::from((1, 960)), &[0, 0, 5]));
        let euler = EulerData {
            matrix: Matrix::diagonal(&[Q::one(), Q::new(3, 4), Q::new(1, 2)]),
            shift: vec![Q::zero(); 3],
            conformal_dimension: Q::new(1, 2),
        };
        FrobeniusModel::new("A3", metric, f, 0, Some(euler)).unwrap()
    }

    /// Cubic tensor `F_{abc}` at `t`.
    pub fn cubic<F: Field>(&self, t: &[F]) -> Result<Cubic<F>, ModelError> {
        let jet = self.potential.evaluate_jet(t, 3)?;
        Ok(cubic_from_jet(&jet, self.dim()))
    }

    /// Multiplication operators `(C_a)[c][b] = F_{abm} g^{mc}` at `t`.
    pub fn structure_constants<F: Field>(&self, t: &[F]) -> Result<Vec<Matrix<F>>, ModelError> {
        let cubic = self.cubic(t)?;
        Ok(self.operators_from_cubic(&cubic))
    }

    pub fn operators_from_cubic<F: Field>(&self, cubic: &Cubic<F>) -> Vec<Matrix<F>> {
        let n = self.dim();
        let ginv = self.metric_inv.map(|q| F::from_rational(&q.0));
        (0..n)
            .map(|a| {
                Matrix::from_fn(n, n, |c, b| {
                    let mut acc = F::zero();
                    for m in 0..n {
                        acc += cubic[a][b][m].clone() * &ginv[(m, c)];
                    }
                    acc
                })
            })
            .collect()
    }

    /// Taylor series of `F_{abc}` around `t` in shift variables, total degree
    /// at most `order`.
    pub fn cubic_series<F: Field>(&self, t: &[F], order: u32) -> Result<Vec<Vec<Vec<Series<F>>>>, ModelError> {
        let n = self.dim();
        let big = self.potential.taylor(t, order + 3)?;
        let trunc = crate::series::Truncation::total(n, order);
        let mut memo: BTreeMap<Vec<usize>, Series<F>> = BTreeMap::new();
        let mut out = vec![vec![Vec::with_capacity(n); n]; n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut key = vec![a, b, c];
                    key.sort();
                    let s = memo
                        .entry(key.clone())
                        .or_insert_with(|| big.derivative(key[0]).derivative(key[1]).derivative(key[2]).retruncate(trunc.clone()))
                        .clone();
                    out[a][b].push(s);
                }
            }
        }
        Ok(out)
    }

    /// max |F_{abm} g^{mn} F_{ncd} - F_{acm} g^{mn} F_{nbd}|.
    pub fn wdvv_residual<F: Field>(&self, t: &[F]) -> Result<f64, ModelError> {
        let n = self.dim();
        let cubic = self.cubic(t)?;
        let ginv = self.metric_inv.map(|q| F::from_rational(&q.0));
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut acc = F::zero();
                        for m in 0..n {
                            for k in 0..n {
                                let lhs = cubic[a][b][m].clone() * &ginv[(m, k)] * &cubic[k][c][d];
                                let rhs = cubic[a][c][m].clone() * &ginv[(m, k)] * &cubic[k][b][d];
                                acc += lhs - rhs;
                            }
                        }
                        worst = worst.max(acc.magnitude());
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Residual of the unit axiom `F_{0ab} = g_ab`.
    pub fn unit_residual<F: Field>(&self, t: &[F]) -> Result<f64, ModelError> {
        let n = self.dim();
        let cubic = self.cubic(t)?;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let r = cubic[self.unit_index][a][b].clone() - F::from_rational(&self.metric[(a, b)].0);
                worst = worst.max(r.magnitude());
            }
        }
        Ok(worst)
    }

    /// Residual of the homogeneity axioms at the level of third derivatives:
    /// `E^m F_{mabc} + A^m_a F_{mbc} + A^m_b F_{amc} + A^m_c F_{abm} - (3 - D) F_{abc}`,
    /// together with `A^T g + g A - (2 - D) g` and `A e_unit - e_unit`.
    pub fn euler_residual<F: Field>(&self, t: &[F]) -> Result<f64, ModelError> {
        let e = self.euler.as_ref().ok_or(ModelError::NoEuler)?;
        let n = self.dim();
        let jet = self.potential.evaluate_jet(t, 4)?;
        let cubic = cubic_from_jet(&jet, n);
        let four = |idx: [usize; 4]| {
            let mut m = vec![0u32; n];
            for i in idx {
                m[i] += 1;
            }
            jet.get(&m).cloned().unwrap_or_else(F::zero)
        };
        let ev = e.at(t);
        let a = e.matrix.map(|q| F::from_rational(&q.0));
        let three_minus_d = F::from_rational(&(Rational::from(3) - &e.conformal_dimension.0));
        let mut worst = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let mut acc = -(three_minus_d.clone() * &cubic[x][y][z]);
                    for m in 0..n {
                        acc += ev[m].clone() * &four([m, x, y, z]);
                        acc += a[(m, x)].clone() * &cubic[m][y][z];
                        acc += a[(m, y)].clone() * &cubic[x][m][z];
                        acc += a[(m, z)].clone() * &cubic[x][y][m];
                    }
                    worst = worst.max(acc.magnitude());
                }
            }
        }
        let two_minus_d = Q(Rational::from(2) - &e.conformal_dimension.0);
        let lhs = e.matrix.transpose().mul(&self.metric).add(&self.metric.mul(&e.matrix));
        let metric_res = lhs.sub(&self.metric.scale(&two_minus_d)).max_abs();
        let mut unit_res = 0.0f64;
        for m in 0..n {
            let want = if m == self.unit_index { Q::one() } else { Q::zero() };
            unit_res = unit_res.max((e.matrix[(m, self.unit_index)].clone() - want).magnitude());
        }
        Ok(worst.max(metric_res).max(unit_res))
    }

    /// Parses the JSON model document.
    pub fn from_json(v: &Value) -> Result<Self, ModelError> {
        let schema = |s: &str| ModelError::Schema(s.to_string());
        let n = v.get("dimension").and_then(|x| x.as_u64()).ok_or_else(|| schema("missing integer `dimension`"))? as usize;
        let metric = parse_matrix(v.get("metric").ok_or_else(|| schema("missing `metric`"))?, n)?;
        if !metric.is_symmetric() || metric.inverse().is_none() {
            return Err(ModelError::BadMetric(n));
        }
        let mut params = HashMap::new();
        if let Some(p) = v.get("parameters") {
            let obj = p.as_object().ok_or_else(|| schema("`parameters` must be an object"))?;
            for (k, val) in obj {
                params.insert(k.clone(), parse_rational_value(val)?);
            }
        }
        let potential = Expr::from_json(v.get("potential").ok_or_else(|| schema("missing `potential`"))?, n)?.bind(&params)?;
        let unit_index = v.get("unit_index").and_then(|x| x.as_u64()).unwrap_or(0) as usize;
        let euler = match v.get("euler") {
            None | Some(Value::Null) => None,
            Some(e) => {
                let matrix = parse_matrix(e.get("matrix").ok_or_else(|| schema("euler needs `matrix`"))?, n)?;
                let shift = match e.get("shift") {
                    Some(Value::Array(a)) if a.len() == n => {
                        a.iter().map(|x| parse_rational_value(x).map(Q)).collect::<Result<Vec<_>, _>>()?
                    }
                    None => vec![Q::zero(); n],
                    _ => return Err(schema("euler `shift` must have `dimension` entries")),
                };
                let d = parse_rational_value(
                    e.get("conformal_dimension").ok_or_else(|| schema("euler needs `conformal_dimension`"))?,
                )?;
                Some(EulerData { matrix, shift, conformal_dimension: Q(d) })
            }
        };
        let name = v.get("name").and_then(|x| x.as_str()).unwrap_or("model");
        FrobeniusModel::new(name, metric, potential, unit_index, euler)
    }

    pub fn to_json(&self) -> Value {
        let n = self.dim();
        let mat = |m: &Matrix<Q>| -> Value {
            Value::Array((0..n).map(|i| Value::Array((0..n).map(|j| json!(m[(i, j)].to_string())).collect())).collect())
        };
        let mut v = json!({
            "name": self.name,
            "dimension": n,
            "metric": mat(&self.metric),
            "potential": self.potential.to_json(),
            "unit_index": self.unit_index,
        });
        if let Some(e) = &self.euler {
            v["euler"] = json!({
                "matrix": mat(&e.matrix),
                "shift": e.shift.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
                "conformal_dimension": e.conformal_dimension.to_string(),
            });
        }
        v
    }
}

fn parse_matrix(v: &Value, n: usize) -> Result<Matrix<Q>, ModelError> {
    let rows = v.as_array().ok_or(ModelError::BadMetric(n))?;
    if rows.len() != n {
        return Err(ModelError::BadMetric(n));
    }
    let mut out = Vec::with_capacity(n);
    for r in rows {
        let r = r.as_array().ok_or(ModelError::BadMetric(n))?;
        if r.len() != n {
            return Err(ModelError::BadMetric(n));
        }
        out.push(r.iter().map(|x| parse_rational_value(x).map(Q)).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(Matrix::from_rows(out))
}

fn cubic_from_jet<F: Field>(jet: &BTreeMap<Vec<u32>, F>, n: usize) -> Cubic<F> {
    let mut out = vec![vec![vec![F::zero(); n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut m = vec![0u32; n];
                m[a] += 1;
                m[b] += 1;
                m[c] += 1;
                if let Some(v) = jet.get(&m) {
                    out[a][b][c] = v.clone();
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Cx;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    #[test]
    fn point_model_is_unit_algebra() {
        let m = FrobeniusModel::point();
        let c = m.structure_constants(&[Q::new(3, 7)]).unwrap();
        assert_eq!(c[0], Matrix::identity(1));
        assert_eq!(m.wdvv_residual(&[Q::new(3, 7)]).unwrap(), 0.0);
        assert_eq!(m.euler_residual(&[Q::new(3, 7)]).unwrap(), 0.0);
    }

    #[test]
    fn cp1_shape_structure_constants() {
        let m = FrobeniusModel::two_primary(&r(1, 1), &r(1, 1)).unwrap();
        let c = m.structure_constants(&[Q::zero(), Q::zero()]).unwrap();
        // hand derivatives: F_001 = 1, F_011 = 0, F_111 = e^0 = 1, F_000 = 0
        // C_1 = [[F_10m g^{m0}, F_11m g^{m0}], [F_10m g^{m1}, F_11m g^{m1}]]
        let expect = Matrix::from_rows(vec![vec![Q::zero(), Q::one()], vec![Q::one(), Q::zero()]]);
        assert_eq!(c[1], expect);
        assert_eq!(c[0], Matrix::identity(2));
    }

    #[test]
    fn family_is_homogeneous_at_each_dimension() {
        for d in [r(1, 3), r(1, 2), r(1, 1), r(3, 2), r(5, 3)] {
            let m = FrobeniusModel::two_primary(&d, &r(1, 1)).unwrap();
            // exact backend: e^{t1} is rational only at t1 = 0
            let t1 = if d == 1 { Q::zero() } else { Q::new(3, 4) };
            let p = [Q::new(2, 5), t1];
            assert_eq!(m.euler_residual(&p).unwrap(), 0.0, "d = {d}");
            assert_eq!(m.wdvv_residual(&p).unwrap(), 0.0);
            assert_eq!(m.unit_residual(&p).unwrap(), 0.0);
        }
        assert!(FrobeniusModel::two_primary(&r(2, 5), &r(1, 1)).is_err());
    }

    #[test]
    fn wrong_dimension_breaks_homogeneity() {
        let mut m = FrobeniusModel::two_primary(&r(1, 2), &r(1, 1)).unwrap();
        m.euler.as_mut().unwrap().conformal_dimension = Q::new(1, 3);
        assert!(m.euler_residual(&[Q::new(1, 2), Q::new(1, 3)]).unwrap() > 0.0);
    }

    #[test]
    fn a3_satisfies_axioms_and_perturbation_breaks_wdvv() {
        let m = FrobeniusModel::a3();
        let p = [Q::new(1, 3), Q::new(-2, 5), Q::new(7, 4)];
        assert_eq!(m.wdvv_residual(&p).unwrap(), 0.0);
        assert_eq!(m.euler_residual(&p).unwrap(), 0.0);
        let mut broken = m.clone();
        broken.potential = broken.potential.add(&Expr::monomial(3, r(1, 7), &[0, 3, 0]));
        assert!(broken.wdvv_residual(&p).unwrap() > 0.0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = FrobeniusModel::two_primary(&r(1, 1), &r(1, 1)).unwrap();
        let back = FrobeniusModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.potential, m.potential);
        assert_eq!(back.euler, m.euler);
        let bad = json!({"dimension": 2, "metric": [["0", "1"], ["2", "0"]], "potential": []});
        assert_eq!(FrobeniusModel::from_json(&bad).unwrap_err(), ModelError::BadMetric(2));
        let with_param = json!({
            "dimension": 2, "metric": [["0","1"],["1","0"]],
            "potential": [{"coeff": "1/2", "mono": [2,1], "exp": [0,0]}, {"coeff": {"param": "q"}, "mono": [0,0], "exp": [0,1]}],
            "parameters": {"q": "1/4"}
        });
        let m = FrobeniusModel::from_json(&with_param).unwrap();
        assert_eq!(m.cubic(&[Q::zero(), Q::zero()]).unwrap()[1][1][1], Q::new(1, 4));
    }

    proptest! {
        #[test]
        fn operators_commute_and_are_self_adjoint(x in -2.0f64..2.0, y in 0.3f64..2.0, z in -2.0f64..2.0) {
            let m = FrobeniusModel::a3();
            let t = [Cx::from_f64(x), Cx::from_f64(y), Cx::from_f64(z)];
            let c = m.structure_constants(&t).unwrap();
            let g = m.metric.map(|q| Cx::from_rational(&q.0));
            for a in 0..3 {
                for b in 0..3 {
                    prop_assert!(c[a].mul(&c[b]).sub(&c[b].mul(&c[a])).max_abs() < 1e-60);
                }
                // g C_a is symmetric
                let gc = g.mul(&c[a]);
                prop_assert!(gc.sub(&gc.transpose()).max_abs() < 1e-60);
            }
        }
    }
}
