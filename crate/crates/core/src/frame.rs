//! Canonical coordinates at a semisimple point.
//!
//! Everything is computed as a truncated Taylor series in the shift
//! variables `d_a = t_a - point_a`: idempotents come from the Lagrange
//! projectors of a generic multiplication operator at the point, refined by
//! the iteration `e -> 3e^2 - 2e^3` in the series algebra. The series
//! coefficients are the jets.

use thiserror::Error;

use crate::frobenius::{FrobeniusModel, ModelError};
use crate::matrix::{polynomial_roots, Matrix};
use crate::scalar::{factorial, tolerance, Cx, Field};
use crate::series::{Series, SeriesError, Truncation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("point is not semisimple: eigenvalue gap {gap:e}")]
    NotSemisimple { gap: f64 },
    #[error("idempotent {0} has zero metric square")]
    DegenerateIdempotent(usize),
    #[error("idempotent refinement did not converge (residual {0:e})")]
    NoConvergence(f64),
    #[error("bad frame option: {0}")]
    BadOption(String),
}

/// Matrix of series, indexed `[row][col]`.
pub type SMat = Vec<Vec<Series<Cx>>>;

/// Conventions that the canonical frame leaves free.
#[derive(Clone, Debug, Default)]
pub struct FrameOptions {
    /// Additive constants for `u` at the point (non-conformal models).
    pub anchor: Option<Vec<Cx>>,
    /// Canonical indices whose square-root branch is flipped.
    pub flips: Vec<usize>,
    /// Relabeling applied after sorting: new index `k` is old index `perm[k]`.
    pub permutation: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct CanonicalFrame {
    pub point: Vec<Cx>,
    /// Taylor degree of every series below.
    pub order: u32,
    pub u: Vec<Cx>,
    pub delta: Vec<Cx>,
    pub sqrt_delta: Vec<Cx>,
    /// `psi[(i, b)] = Psi^i_b`, so that `Delta_i^{-1/2} du^i = sum_b Psi^i_b dt^b`.
    pub psi: Matrix<Cx>,
    /// `du[(a, i)] = d_a u^i`.
    pub du: Matrix<Cx>,
    pub u_series: Vec<Series<Cx>>,
    pub delta_series: Vec<Series<Cx>>,
    pub sqrt_delta_series: Vec<Series<Cx>>,
    /// `[i][b]`.
    pub psi_series: SMat,
    /// `[a][i]`.
    pub du_series: SMat,
    /// Flat components of the idempotents, `[i][b]`.
    pub idempotents: SMat,
    /// Euler field components as series, when the model is conformal.
    pub euler_series: Option<Vec<Series<Cx>>>,
    pub metric: Matrix<Cx>,
    pub metric_inv: Matrix<Cx>,
}

pub(crate) fn smat_mul(a: &SMat, b: &SMat) -> SMat {
    let n = a.len();
    let m = b[0].len();
    let inner = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = a[i][0].zero_like();
                    for k in 0..inner {
                        acc = acc.add(&a[i][k].mul_unchecked(&b[k][j])).expect("shared truncation");
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub(crate) fn smat_transpose(a: &SMat) -> SMat {
    let n = a.len();
    let m = a[0].len();
    (0..m).map(|j| (0..n).map(|i| a[i][j].clone()).collect()).collect()
}

pub(crate) fn smat_const(base: &Series<Cx>, m: &Matrix<Cx>) -> SMat {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| base.constant_like(m[(i, j)].clone())).collect()).collect()
}

pub(crate) fn smat_retruncate(a: &SMat, t: &Truncation) -> SMat {
    a.iter().map(|r| r.iter().map(|s| s.retruncate(t.clone())).collect()).collect()
}

pub(crate) fn smat_constant_terms(a: &SMat) -> Matrix<Cx> {
    Matrix::from_fn(a.len(), a[0].len(), |i, j| a[i][j].constant_term())
}

/// Square root of a series whose constant term has the given root.
fn sqrt_series(s: &Series<Cx>, root0: &Cx) -> Result<Series<Cx>, SeriesError> {
    let c0 = s.constant_term();
    let normalized = s.scale(&c0.inv().ok_or(SeriesError::NotInvertible)?);
    let half = Cx::from_ratio(1, 2);
    Ok(normalized.log()?.scale(&half).exp()?.scale(root0))
}

/// Lexicographic (re, im) order that treats real parts within tolerance as equal.
pub fn cmp_with_tolerance(a: &Cx, b: &Cx) -> std::cmp::Ordering {
    let scale = a.magnitude().max(b.magnitude()).max(1.0);
    let dre = (a.re.clone() - &b.re).to_f64();
    if dre.abs() > tolerance() * scale {
        return dre.partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal);
    }
    let dim = (a.im.clone() - &b.im).to_f64();
    if dim.abs() > tolerance() * scale {
        return dim.partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal);
    }
    std::cmp::Ordering::Equal
}

/// Partial derivative value from a series coefficient.
pub fn jet_value(s: &Series<Cx>, mono: &[u32]) -> Cx {
    let mut v = s.coefficient(mono);
    for e in mono {
        v = v * Cx::from_rational(&rug::Rational::from(factorial(*e)));
    }
    v
}

impl CanonicalFrame {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Builds the frame and its series to Taylor degree `order`.
    pub fn new(model: &FrobeniusModel, point: &[Cx], order: u32, opts: &FrameOptions) -> Result<Self, FrameError> {
        let n = model.dim();
        if point.len() != n {
            return Err(ModelError::Expr(crate::expr::ExprError::Dimension { expected: n, got: point.len() }).into());
        }
        let cubic = model.cubic_series(point, order)?;
        let ginv = model.metric_inv.map(|q| Cx::from_rational(&q.0));
        let g = model.metric.map(|q| Cx::from_rational(&q.0));
        let base = cubic[0][0][0].zero_like();
        // C_a[c][b] = F_{abm} g^{mc}
        let ops: Vec<SMat> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|c| {
                        (0..n)
                            .map(|b| {
                                let mut acc = base.zero_like();
                                for m in 0..n {
                                    acc.add_scaled(&cubic[a][b][m], &ginv[(m, c)]);
                                }
                                acc
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let ops0: Vec<Matrix<Cx>> = ops.iter().map(smat_constant_terms).collect();

        // Generic element of the algebra at the point.
        let mut generic = Matrix::<Cx>::zeros(n, n);
        for (a, op) in ops0.iter().enumerate() {
            let w = Cx::from_parts_f64(1.0 + 0.377 * a as f64, 0.113 * a as f64);
            generic = generic.add(&op.scale(&w));
        }
        let roots = polynomial_roots(&generic.charpoly()).ok_or(FrameError::NotSemisimple { gap: 0.0 })?;
        let scale = generic.max_abs().max(1.0);
        let mut gap = f64::INFINITY;
        for i in 0..n {
            for j in 0..i {
                gap = gap.min((roots[i].clone() - &roots[j]).magnitude());
            }
        }
        if n > 1 && gap <= 1e-20 * scale {
            return Err(FrameError::NotSemisimple { gap });
        }
        let mut unit = vec![Cx::zero(); n];
        unit[model.unit_index] = Cx::one();
        let mut idem0: Vec<Vec<Cx>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = unit.clone();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let shifted = generic.sub(&Matrix::identity(n).scale(&roots[j]));
                let denom = (roots[i].clone() - &roots[j]).inv().unwrap();
                v = shifted.mul_vec(&v).into_iter().map(|x| x * &denom).collect();
            }
            idem0.push(v);
        }

        // Refine in the series algebra.
        let product = |x: &[Series<Cx>], y: &[Series<Cx>]| -> Vec<Series<Cx>> {
            let mut out = vec![base.zero_like(); n];
            for a in 0..n {
                if x[a].is_zero() {
                    continue;
                }
                for c in 0..n {
                    let mut cy = base.zero_like();
                    for b in 0..n {
                        cy = cy.add(&ops[a][c][b].mul_unchecked(&y[b])).unwrap();
                    }
                    out[c] = out[c].add(&x[a].mul_unchecked(&cy)).unwrap();
                }
            }
            out
        };
        let three = Cx::from_int(3);
        let two = Cx::from_int(2);
        let mut idempotents: SMat = Vec::with_capacity(n);
        for v in &idem0 {
            let mut e: Vec<Series<Cx>> = v.iter().map(|x| base.constant_like(x.clone())).collect();
            let mut converged = false;
            let mut last = f64::INFINITY;
            for _ in 0..80 {
                let e2 = product(&e, &e);
                let e3 = product(&e2, &e);
                let next: Vec<Series<Cx>> =
                    (0..n).map(|b| e2[b].scale(&three).sub(&e3[b].scale(&two)).unwrap()).collect();
                let change = (0..n).map(|b| next[b].sub(&e[b]).unwrap().max_magnitude()).fold(0.0, f64::max);
                e = next;
                last = change;
                if change <= tolerance() * 1e-10 {
                    converged = true;
                    break;
                }
            }
            if !converged && last > tolerance() {
                return Err(FrameError::NoConvergence(last));
            }
            idempotents.push(e);
        }

        // Canonical data per idempotent.
        let gs = |x: &[Series<Cx>], y: &[Series<Cx>]| -> Series<Cx> {
            let mut acc = base.zero_like();
            for a in 0..n {
                for b in 0..n {
                    if !g[(a, b)].is_exactly_zero() {
                        acc.add_scaled(&x[a].mul_unchecked(&y[b]), &g[(a, b)]);
                    }
                }
            }
            acc
        };
        let mut delta_series = Vec::with_capacity(n);
        for (i, e) in idempotents.iter().enumerate() {
            let sq = gs(e, e);
            if sq.constant_term().magnitude() <= 1e-30 {
                return Err(FrameError::DegenerateIdempotent(i));
            }
            delta_series.push(sq.inverse()?);
        }
        // lowered idempotents g_{ab} e^b
        let lowered: SMat = idempotents
            .iter()
            .map(|e| {
                (0..n)
                    .map(|a| {
                        let mut acc = base.zero_like();
                        for b in 0..n {
                            acc.add_scaled(&e[b], &g[(a, b)]);
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        let du_by_i: SMat = (0..n)
            .map(|i| (0..n).map(|a| lowered[i][a].mul_unchecked(&delta_series[i])).collect())
            .collect();
        let euler_series = model.euler.as_ref().map(|e| {
            (0..n)
                .map(|a| {
                    let mut s = base.constant_like(Cx::from_rational(&e.shift[a].0));
                    for b in 0..n {
                        let ab = Cx::from_rational(&e.matrix[(a, b)].0);
                        s = s.add(&base.constant_like(point[b].clone() * &ab)).unwrap();
                        s.add_scaled(&base.var_like(b), &ab);
                    }
                    s
                })
                .collect::<Vec<_>>()
        });
        let u_series: Vec<Series<Cx>> = match (&euler_series, &opts.anchor) {
            (Some(es), None) => (0..n)
                .map(|i| {
                    let mut acc = base.zero_like();
                    for a in 0..n {
                        acc = acc.add(&es[a].mul_unchecked(&du_by_i[i][a])).unwrap();
                    }
                    acc
                })
                .collect(),
            _ => (0..n).map(|i| Series::from_gradient(&du_by_i[i], Cx::zero())).collect(),
        };

        // Ordering by u at the point, then anchors and the optional relabeling.
        let mut order_idx: Vec<usize> = (0..n).collect();
        let u0: Vec<Cx> = u_series.iter().map(|s| s.constant_term()).collect();
        order_idx.sort_by(|&x, &y| cmp_with_tolerance(&u0[x], &u0[y]));
        if let Some(p) = &opts.permutation {
            let mut seen = vec![false; n];
            if p.len() != n || p.iter().any(|&k| k >= n || std::mem::replace(&mut seen[k], true)) {
                return Err(FrameError::BadOption("permutation must list each canonical index once".into()));
            }
            order_idx = p.iter().map(|&k| order_idx[k]).collect();
        }
        let pick = |v: &[Series<Cx>]| -> Vec<Series<Cx>> { order_idx.iter().map(|&k| v[k].clone()).collect() };
        let mut u_series = pick(&u_series);
        let delta_series = pick(&delta_series);
        let idempotents: SMat = order_idx.iter().map(|&k| idempotents[k].clone()).collect();
        let lowered: SMat = order_idx.iter().map(|&k| lowered[k].clone()).collect();
        let du_by_i: SMat = order_idx.iter().map(|&k| du_by_i[k].clone()).collect();
        if let Some(anchor) = &opts.anchor {
            if anchor.len() != n {
                return Err(FrameError::BadOption(format!("anchor needs {n} entries")));
            }
            for (s, c) in u_series.iter_mut().zip(anchor) {
                *s = s.add(&base.constant_like(c.clone())).unwrap();
            }
        }
        if opts.flips.iter().any(|&k| k >= n) {
            return Err(FrameError::BadOption("flip index out of range".into()));
        }

        let mut sqrt_delta = Vec::with_capacity(n);
        let mut sqrt_delta_series = Vec::with_capacity(n);
        for (i, d) in delta_series.iter().enumerate() {
            let mut r = d.constant_term().sqrt_canonical();
            if opts.flips.contains(&i) {
                r = -r;
            }
            sqrt_delta_series.push(sqrt_series(d, &r)?);
            sqrt_delta.push(r);
        }
        // Psi^i_b = Delta_i^{1/2} g_{bc} e_i^c
        let psi_series: SMat = (0..n)
            .map(|i| (0..n).map(|b| lowered[i][b].mul_unchecked(&sqrt_delta_series[i])).collect())
            .collect();
        let du_series: SMat = (0..n).map(|a| (0..n).map(|i| du_by_i[i][a].clone()).collect()).collect();

        Ok(CanonicalFrame {
            point: point.to_vec(),
            order,
            u: u_series.iter().map(|s| s.constant_term()).collect(),
            delta: delta_series.iter().map(|s| s.constant_term()).collect(),
            sqrt_delta,
            psi: smat_constant_terms(&psi_series),
            du: smat_constant_terms(&du_series),
            u_series,
            delta_series,
            sqrt_delta_series,
            psi_series,
            du_series,
            idempotents,
            euler_series,
            metric: g,
            metric_inv: ginv,
        })
    }

    /// `A_a = (d_a Psi) Psi^{-1}` as series, with `Psi^{-1} = g^{-1} Psi^T`.
    /// (The connection form of the recursion is `W_a = -A_a`.)
    pub fn connection(&self) -> Vec<SMat> {
        let n = self.dim();
        // derivatives are exact only to one degree less
        let t = Truncation::total(n, self.order.saturating_sub(1));
        let psi = smat_retruncate(&self.psi_series, &t);
        let psi_inv = smat_mul(&smat_const(&psi[0][0], &self.metric_inv), &smat_transpose(&psi));
        (0..n)
            .map(|a| {
                let d: SMat = self.psi_series.iter().map(|r| r.iter().map(|s| s.derivative(a).retruncate(t.clone())).collect()).collect();
                smat_mul(&d, &psi_inv)
            })
            .collect()
    }

    /// Largest residual among the frame identities at the point:
    /// `Psi g^{-1} Psi^T = 1`, `Psi^T Psi = g`, `e_i . e_j = delta_ij e_i`,
    /// `sum e_i = 1`, and `Delta_i^{1/2} Psi^i_a = d_a u^i`.
    pub fn residuals(&self, model: &FrobeniusModel) -> Result<FrameResiduals, FrameError> {
        let n = self.dim();
        let psi = &self.psi;
        let ortho = psi.mul(&self.metric_inv).mul(&psi.transpose()).sub(&Matrix::identity(n)).max_abs();
        let metric = psi.transpose().mul(psi).sub(&self.metric).max_abs();
        let ops = model.structure_constants(&self.point)?;
        let e0: Vec<Vec<Cx>> = self.idempotents.iter().map(|e| e.iter().map(|s| s.constant_term()).collect()).collect();
        let mut idem = 0.0f64;
        let mut sum = vec![Cx::zero(); n];
        for i in 0..n {
            for b in 0..n {
                sum[b] += e0[i][b].clone();
            }
            for j in 0..n {
                // (e_i . e_j)^c = e_i^a (C_a e_j)^c
                let mut prod = vec![Cx::zero(); n];
                for a in 0..n {
                    let ce = ops[a].mul_vec(&e0[j]);
                    for c in 0..n {
                        prod[c] += e0[i][a].clone() * &ce[c];
                    }
                }
                for c in 0..n {
                    let want = if i == j { e0[i][c].clone() } else { Cx::zero() };
                    idem = idem.max((prod[c].clone() - want).magnitude());
                }
            }
        }
        for (b, s) in sum.iter().enumerate() {
            let want = if b == model.unit_index { Cx::one() } else { Cx::zero() };
            idem = idem.max((s.clone() - want).magnitude());
        }
        let mut du = 0.0f64;
        for i in 0..n {
            for a in 0..n {
                let lhs = self.sqrt_delta[i].clone() * &psi[(i, a)];
                du = du.max((lhs - &self.du[(a, i)]).magnitude());
            }
        }
        let conn = self.connection();
        let mut wdiag = 0.0f64;
        for a in conn.iter() {
            for i in 0..n {
                wdiag = wdiag.max(a[i][i].max_magnitude());
            }
        }
        Ok(FrameResiduals { orthogonality: ortho.max(metric), idempotents: idem, eigenvalues: du, connection_diagonal: wdiag })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResiduals {
    pub orthogonality: f64,
    pub idempotents: f64,
    pub eigenvalues: f64,
    pub connection_diagonal: f64,
}

impl FrameResiduals {
    pub fn max(&self) -> f64 {
        self.orthogonality.max(self.idempotents).max(self.eigenvalues).max(self.connection_diagonal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Rational;

    fn cx(x: f64) -> Cx {
        Cx::from_f64(x)
    }

    #[test]
    fn point_model_frame() {
        let m = FrobeniusModel::point();
        let f = CanonicalFrame::new(&m, &[cx(0.75)], 3, &FrameOptions::default()).unwrap();
        assert!((f.u[0].clone() - cx(0.75)).magnitude() < 1e-70);
        assert!((f.delta[0].clone() - cx(1.0)).magnitude() < 1e-70);
        assert!((f.psi[(0, 0)].clone() - cx(1.0)).magnitude() < 1e-70);
        assert!((jet_value(&f.u_series[0], &[1]) - cx(1.0)).magnitude() < 1e-70);
        assert!(f.delta_series[0].sub(&f.delta_series[0].constant_like(cx(1.0))).unwrap().max_magnitude() < 1e-70);
    }

    #[test]
    fn cp1_shape_hand_eigen_computation() {
        // F = t0^2 t1/2 + e^{t1} at 0: C_1 = [[0,1],[1,0]], idempotents (1 +- phi_1)/2,
        // d_1 u^{+-} = +-1, u = E^a d_a u with E = 2 d_1, so u^{+-} = +-2;
        // g(e, e) = +-1/2, Delta_{+-} = +-2.
        let m = FrobeniusModel::two_primary(&Rational::from(1), &Rational::from(1)).unwrap();
        let f = CanonicalFrame::new(&m, &[cx(0.0), cx(0.0)], 2, &FrameOptions::default()).unwrap();
        assert!((f.u[0].clone() - cx(-2.0)).magnitude() < 1e-70);
        assert!((f.u[1].clone() - cx(2.0)).magnitude() < 1e-70);
        assert!((f.delta[0].clone() - cx(-2.0)).magnitude() < 1e-70);
        assert!((f.delta[1].clone() - cx(2.0)).magnitude() < 1e-70);
        // sqrt(-2) on the nonnegative-imaginary branch
        assert!((f.sqrt_delta[0].clone() - Cx::from_parts_f64(0.0, 2f64.sqrt())).magnitude() < 1e-15);
        assert!(f.residuals(&m).unwrap().max() < 1e-60);
    }

    #[test]
    fn relabeling_and_flips_act_coherently() {
        let m = FrobeniusModel::a3();
        let p = [cx(0.2), cx(0.7), cx(1.3)];
        let base = CanonicalFrame::new(&m, &p, 2, &FrameOptions::default()).unwrap();
        let opts = FrameOptions { permutation: Some(vec![2, 0, 1]), flips: vec![1], anchor: None };
        let f = CanonicalFrame::new(&m, &p, 2, &opts).unwrap();
        for (new, old) in [2usize, 0, 1].iter().enumerate() {
            assert!((f.u[new].clone() - &base.u[*old]).magnitude() < 1e-60);
            assert!((f.delta[new].clone() - &base.delta[*old]).magnitude() < 1e-60);
            let sign = if new == 1 { -1.0 } else { 1.0 };
            for b in 0..3 {
                assert!((f.psi[(new, b)].clone() - base.psi[(*old, b)].clone() * cx(sign)).magnitude() < 1e-60);
            }
        }
        assert!(f.residuals(&m).unwrap().max() < 1e-60);
    }

    #[test]
    fn frame_identities_on_family() {
        for (d, p) in [((1, 3), [0.3, 0.8]), ((3, 2), [-0.4, 1.1]), ((1, 1), [0.5, -0.2])] {
            let m = FrobeniusModel::two_primary(&Rational::from(d), &Rational::from(1)).unwrap();
            let f = CanonicalFrame::new(&m, &[cx(p[0]), cx(p[1])], 4, &FrameOptions::default()).unwrap();
            let res = f.residuals(&m).unwrap();
            assert!(res.max() < 1e-60, "d = {d:?} {res:?}");
            // metric constancy: d_a (sum_i Psi^i_m Psi^i_n) = 0 as a series
            let n = 2;
            for mm in 0..n {
                for nn in 0..n {
                    let mut s = f.psi_series[0][mm].zero_like();
                    for i in 0..n {
                        s = s.add(&f.psi_series[i][mm].mul(&f.psi_series[i][nn]).unwrap()).unwrap();
                    }
                    let non_const = s.filter(|mono| mono.iter().sum::<u32>() > 0);
                    assert!(non_const.max_magnitude() < 1e-60);
                }
            }
        }
    }

    #[test]
    fn eigenvalue_jets_match_finite_differences() {
        let m = FrobeniusModel::a3();
        let p = [0.1, 0.6, 1.2];
        let pt: Vec<Cx> = p.iter().map(|x| cx(*x)).collect();
        let f = CanonicalFrame::new(&m, &pt, 1, &FrameOptions::default()).unwrap();
        let h = Cx::from_ratio(1, 1_000_000_000_000);
        let inv2h = (h.clone() * cx(2.0)).inv().unwrap();
        for a in 0..3 {
            let shifted = |s: Cx| {
                let mut q = pt.clone();
                q[a] = q[a].clone() + s;
                CanonicalFrame::new(&m, &q, 0, &FrameOptions::default()).unwrap().u
            };
            let (up, dn) = (shifted(h.clone()), shifted(-h.clone()));
            for i in 0..3 {
                let fd = (up[i].clone() - &dn[i]) * &inv2h;
                let err = (fd - &f.du[(a, i)]).magnitude();
                assert!(err < 1e-18, "a={a} i={i} err={err:e} u={:?}", f.u);
            }
        }
    }

    #[test]
    fn nilpotent_point_is_rejected() {
        // t0^2 t1/2 + t1^4 at t1 = 0 has C_1 nilpotent
        let m = FrobeniusModel::two_primary(&Rational::from((1, 3)), &Rational::from(1)).unwrap();
        assert!(matches!(
            CanonicalFrame::new(&m, &[cx(0.1), cx(0.0)], 1, &FrameOptions::default()),
            Err(FrameError::NotSemisimple { .. })
        ));
    }
}
