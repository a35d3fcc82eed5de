//! Gravitational descendents on the space of curves `t_0 + t_1 c + t_2 c^2 + ...`.
//!
//! The one-point descendents come from a `1/z` calibration normalized to
//! vanish at a rational base point. Curve coordinates are taken relative to
//! that base point: with `t_1 = t_2 = ... = 0` the critical point is
//! `base + t_0`.

use rug::Rational;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::frame::{CanonicalFrame, FrameError};
use crate::frobenius::FrobeniusModel;
use crate::genus::{genus1_differential, graph_sum, r_order_for_genus, GenusError, GenusOptions};
use crate::matrix::Matrix;
use crate::rmatrix::{compute_r, compute_v, EdgeTailData, RError, RMode};
use crate::scalar::{to_cx, tolerance, Cx, Field, Q};

#[derive(Debug, Error)]
pub enum DescError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    R(#[from] RError),
    #[error(transparent)]
    Genus(#[from] GenusError),
    #[error("calibration has order {have}, {want} needed")]
    CalibrationTooShort { have: usize, want: usize },
    #[error("critical point iteration stalled at residual {0:e}")]
    NoConvergence(f64),
    #[error("criticality residual {0:e} in the tail expansion")]
    Criticality(f64),
    #[error("curve point has {got} components per coefficient, model has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("base point value is not rational")]
    InexactBase,
}

/// `t[k]` is the coefficient of `c^k`; coefficients beyond `t.len() - 1` are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub t: Vec<Vec<Cx>>,
}

impl CurvePoint {
    pub fn zero(n: usize, kmax: usize) -> Self {
        CurvePoint { t: vec![vec![Cx::zero(); n]; kmax + 1] }
    }

    pub fn kmax(&self) -> usize {
        self.t.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.t[0].len()
    }

    /// `t_k` with the dilaton shift: `q_1 = t_1 - 1`.
    fn shifted(&self, unit: usize) -> Vec<Vec<Cx>> {
        let mut q = self.t.clone();
        if q.len() < 2 {
            q.push(vec![Cx::zero(); self.dim()]);
        }
        q[1][unit] -= Cx::one();
        q
    }

    /// `self + eps * dir`, padding to the longer length.
    pub fn moved(&self, dir: &CurvePoint, eps: &Cx) -> CurvePoint {
        let len = self.t.len().max(dir.t.len());
        let n = self.dim();
        let get = |p: &CurvePoint, k: usize, a: usize| p.t.get(k).map(|v| v[a].clone()).unwrap_or_else(Cx::zero);
        CurvePoint {
            t: (0..len).map(|k| (0..n).map(|a| get(self, k, a) + get(dir, k, a) * eps).collect()).collect(),
        }
    }

    /// Unit vector in the `(k, a)` slot.
    pub fn basis(n: usize, kmax: usize, k: usize, a: usize) -> CurvePoint {
        let mut p = CurvePoint::zero(n, kmax);
        p.t[k][a] = Cx::one();
        p
    }
}

/// `m[k][a][b] = <phi_a, phi_b c^{k-1}>'` for `k >= 1` as closed expressions,
/// with `m[0]` the metric; every `m[k]`, `k >= 1`, vanishes at `base`.
#[derive(Clone, Debug)]
pub struct Calibration {
    pub base: Vec<Rational>,
    pub m: Vec<Vec<Vec<Expr>>>,
    dm: Vec<Vec<Vec<Vec<Expr>>>>,
    metric: Matrix<Cx>,
    metric_inv: Matrix<Cx>,
    unit: usize,
}

/// Builds the calibration to order `order` by integrating
/// `d_c m_k[a][b] = F_{cae} g^{ef} m_{k-1}[f][b]` term by term.
pub fn compute_calibration(model: &FrobeniusModel, base: &[Rational], order: usize) -> Result<Calibration, DescError> {
    let n = model.dim();
    if base.len() != n {
        return Err(DescError::Dimension { expected: n, got: base.len() });
    }
    let third: Vec<Vec<Vec<Expr>>> = (0..n)
        .map(|c| (0..n).map(|a| (0..n).map(|e| model.potential.diff(c).diff(a).diff(e)).collect()).collect())
        .collect();
    let base_q: Vec<Q> = base.iter().map(|r| Q(r.clone())).collect();
    let mut m = vec![(0..n)
        .map(|a| (0..n).map(|b| Expr::constant(n, model.metric[(a, b)].0.clone())).collect::<Vec<_>>())
        .collect::<Vec<_>>()];
    for k in 1..=order {
        let prev = &m[k - 1];
        let mut layer = vec![vec![Expr::zero(n); n]; n];
        for a in 0..n {
            for b in 0..n {
                let grad: Vec<Expr> = (0..n)
                    .map(|c| {
                        let mut acc = Expr::zero(n);
                        for e in 0..n {
                            for f in 0..n {
                                let gi = &model.metric_inv[(e, f)].0;
                                if *gi == 0 || third[c][a][e].is_zero() || prev[f][b].is_zero() {
                                    continue;
                                }
                                acc = acc.add(&third[c][a][e].mul(&prev[f][b]).scale(gi));
                            }
                        }
                        acc
                    })
                    .collect();
                let f = Expr::integrate_gradient(&grad)?;
                let at_base = f.evaluate::<Q>(&base_q).map_err(|e| match e {
                    ExprError::InexactExponential => DescError::InexactBase,
                    other => other.into(),
                })?;
                layer[a][b] = f.sub(&Expr::constant(n, at_base.0));
            }
        }
        m.push(layer);
    }
    let dm = m
        .iter()
        .map(|layer| (0..n).map(|c| layer.iter().map(|row| row.iter().map(|e| e.diff(c)).collect()).collect()).collect())
        .collect();
    Ok(Calibration {
        base: base.to_vec(),
        m,
        dm,
        metric: model.metric.map(to_cx),
        metric_inv: model.metric_inv.map(to_cx),
        unit: model.unit_index,
    })
}

impl Calibration {
    pub fn order(&self) -> usize {
        self.m.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.metric.rows()
    }

    fn need(&self, want: usize) -> Result<(), DescError> {
        if self.order() < want {
            return Err(DescError::CalibrationTooShort { have: self.order(), want });
        }
        Ok(())
    }

    /// `m_k` at an absolute point.
    pub fn at(&self, k: usize, t: &[Cx]) -> Result<Matrix<Cx>, DescError> {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                out[(a, b)] = self.m[k][a][b].evaluate(t)?;
            }
        }
        Ok(out)
    }

    /// `d_c m_k` at an absolute point.
    pub fn derivative_at(&self, k: usize, c: usize, t: &[Cx]) -> Result<Matrix<Cx>, DescError> {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                out[(a, b)] = self.dm[k][c][a][b].evaluate(t)?;
            }
        }
        Ok(out)
    }

    pub fn base_cx(&self) -> Vec<Cx> {
        self.base.iter().map(Cx::from_rational).collect()
    }

    /// `S(z)^* S(-z) - 1` style check: largest entry of
    /// `sum_{a+b=p} (-1)^b m_a^T g^{-1} m_b` for `1 <= p <= order`.
    pub fn unitarity_residual(&self, t: &[Cx]) -> Result<f64, DescError> {
        let ms: Vec<Matrix<Cx>> = (0..=self.order()).map(|k| self.at(k, t)).collect::<Result<_, _>>()?;
        let mut worst = 0.0f64;
        for p in 1..=self.order() {
            let mut acc = Matrix::zeros(self.dim(), self.dim());
            for a in 0..=p {
                let term = ms[a].transpose().mul(&self.metric_inv).mul(&ms[p - a]);
                acc = if (p - a) % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
            }
            worst = worst.max(acc.max_abs());
        }
        Ok(worst)
    }
}

/// Solves `t = base + t_0 + g^{-1} sum_{k>=1} m_k(t) t_k` by Newton's method from `base + t_0`.
pub fn critical_point(calib: &Calibration, tau: &CurvePoint) -> Result<Vec<Cx>, DescError> {
    let n = calib.dim();
    if tau.dim() != n {
        return Err(DescError::Dimension { expected: n, got: tau.dim() });
    }
    calib.need(tau.kmax())?;
    let base = calib.base_cx();
    let start: Vec<Cx> = (0..n).map(|a| base[a].clone() + &tau.t[0][a]).collect();
    if tau.t[1..].iter().flatten().all(|x| x.is_exactly_zero()) {
        return Ok(start);
    }
    let mut t = start.clone();
    let tol = tolerance();
    let mut last = f64::INFINITY;
    let mut polished = 0;
    for iter in 0..200 {
        let mut rhs = vec![Cx::zero(); n];
        let mut jac = Matrix::<Cx>::identity(n);
        for k in 1..=tau.kmax() {
            if tau.t[k].iter().all(|x| x.is_exactly_zero()) {
                continue;
            }
            let mk = calib.at(k, &t)?;
            let v = mk.mul_vec(&tau.t[k]);
            for a in 0..n {
                rhs[a] += v[a].clone();
            }
            for c in 0..n {
                let dv = calib.derivative_at(k, c, &t)?.mul_vec(&tau.t[k]);
                let col = calib.metric_inv.mul_vec(&dv);
                for a in 0..n {
                    jac[(a, c)] -= col[a].clone();
                }
            }
        }
        let shift = calib.metric_inv.mul_vec(&rhs);
        let resid: Vec<Cx> = (0..n).map(|a| t[a].clone() - &start[a] - &shift[a]).collect();
        let size = resid.iter().map(|x| x.magnitude()).fold(0.0, f64::max);
        let scale = t.iter().map(|x| x.magnitude()).fold(1.0, f64::max);
        if size <= tol * scale && iter > 0 {
            polished += 1;
            if polished > 2 {
                return Ok(t);
            }
        }
        if polished == 0 && iter > 20 && size >= last {
            return Err(DescError::NoConvergence(size));
        }
        last = size;
        let inv = jac.inverse().ok_or(DescError::NoConvergence(size))?;
        let step = inv.mul_vec(&resid);
        for a in 0..n {
            t[a] -= step[a].clone();
        }
    }
    Err(DescError::NoConvergence(last))
}

/// Genus-0 data at `t(tau)`.
#[derive(Clone, Debug)]
pub struct Genus0 {
    pub t_star: Vec<Cx>,
    /// `F^0(tau)`.
    pub value: Cx,
    /// `w[m][l][(a, b)] = <phi_a c^m, phi_b c^l>'` for `m, l <= Kmax`.
    pub w: Vec<Vec<Matrix<Cx>>>,
    /// `grad[m][a] = d F^0 / d t^a_m`.
    pub grad: Vec<Vec<Cx>>,
}

/// Regular part of `(S(z)^T g^{-1} S(w) - g)/(z + w)` in `1/z, 1/w`:
/// `w_{ml} = sum_{j=0}^{l} (-1)^j m_{m+1+j}^T g^{-1} m_{l-j}`.
pub fn two_point(ms: &[Matrix<Cx>], ginv: &Matrix<Cx>, kmax: usize) -> Vec<Vec<Matrix<Cx>>> {
    (0..=kmax)
        .map(|m| {
            (0..=kmax)
                .map(|l| {
                    let mut acc = Matrix::zeros(ginv.rows(), ginv.rows());
                    for j in 0..=l {
                        let term = ms[m + 1 + j].transpose().mul(ginv).mul(&ms[l - j]);
                        acc = if j % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// `F^0(tau) = <q, q>'(t(tau)) / 2` with `q = tau(c) - c`, plus the two-point table.
pub fn genus0_descendents(calib: &Calibration, tau: &CurvePoint) -> Result<Genus0, DescError> {
    let kmax = tau.kmax().max(1);
    calib.need(2 * kmax + 1)?;
    let t_star = critical_point(calib, tau)?;
    let ms: Vec<Matrix<Cx>> = (0..=2 * kmax + 1).map(|k| calib.at(k, &t_star)).collect::<Result<_, _>>()?;
    let w = two_point(&ms, &calib.metric_inv, kmax);
    let q = tau.shifted(calib.unit);
    let n = calib.dim();
    let mut grad = vec![vec![Cx::zero(); n]; kmax + 1];
    for m in 0..=kmax {
        for l in 0..q.len().min(kmax + 1) {
            let v = w[m][l].mul_vec(&q[l]);
            for a in 0..n {
                grad[m][a] += v[a].clone();
            }
        }
    }
    let mut value = Cx::zero();
    for m in 0..q.len().min(kmax + 1) {
        for a in 0..n {
            value += q[m][a].clone() * &grad[m][a];
        }
    }
    value = value * Cx::from_ratio(1, 2);
    Ok(Genus0 { t_star, value, w, grad })
}

/// Edge and tail data on the space of curves.
#[derive(Clone, Debug)]
pub struct DescendentFrame {
    pub t_star: Vec<Cx>,
    /// Largest `z^0` coefficient of the tail identity (zero at a critical point).
    pub criticality: f64,
    /// Bold `D`, `sqrt D`, `T` and `V(t(tau))` packed for the graph sum.
    pub data: EdgeTailData<Cx>,
    /// `h[n][a] = <phi_a, 1^n, q>` for `n >= 1` (`h[0]` unused).
    pub h: Vec<Vec<Cx>>,
    pub frame: CanonicalFrame,
}

/// Bold quantities with `R` to order `r_order` at `t(tau)`.
pub fn bold_quantities(
    model: &FrobeniusModel,
    calib: &Calibration,
    tau: &CurvePoint,
    r_order: u32,
    opts: &GenusOptions,
) -> Result<DescendentFrame, DescError> {
    let n = calib.dim();
    let t_star = critical_point(calib, tau)?;
    let frame = CanonicalFrame::new(model, &t_star, r_order, &opts.frame)?;
    let mode = opts.mode.clone().unwrap_or(RMode::Conformal);
    let rc = compute_r(&frame, r_order, &mode)?;
    let kmax = tau.kmax();
    calib.need(kmax)?;
    let q = tau.shifted(calib.unit);
    let ms: Vec<Matrix<Cx>> = (0..=kmax).map(|k| calib.at(k, &t_star)).collect::<Result<_, _>>()?;

    let top = r_order as usize + 1;
    let mut h = vec![vec![Cx::zero(); n]; top + 2];
    // h_1 = g t_0 + sum_{k>=1} m_k q_k, h_{j+1} = sum_{k>=j} m_{k-j} q_k
    h[1] = calib.metric.mul_vec(&tau.t[0]);
    for j in 0..=top {
        for k in j.max(1)..q.len() {
            let v = ms[k - j].mul_vec(&q[k]);
            for a in 0..n {
                h[j + 1][a] += v[a].clone();
            }
        }
    }
    let psi_g = frame.psi.mul(&frame.metric_inv);
    let proj: Vec<Vec<Cx>> = h.iter().map(|hn| psi_g.mul_vec(hn)).collect();
    let mut rhs = vec![vec![Cx::zero(); n]; top + 1];
    for p in 0..=top {
        for k in 0..=p.min(r_order as usize) {
            let sign = if (p - k) % 2 == 0 { Cx::one() } else { -Cx::one() };
            for i in 0..n {
                let mut s = Cx::zero();
                for j in 0..n {
                    s += rc.r.r[k][(j, i)].clone() * &proj[p - k + 1][j];
                }
                rhs[p][i] += s * &sign;
            }
        }
    }
    let scale = proj[2].iter().map(|x| x.magnitude()).fold(1.0, f64::max);
    let criticality = rhs[0].iter().map(|x| x.magnitude()).fold(0.0, f64::max) / scale;
    if criticality > tolerance().sqrt() {
        return Err(DescError::Criticality(criticality));
    }
    let sqrt_d: Vec<Cx> = rhs[1].iter().map(|x| x.inv().expect("degenerate tail")).collect();
    let d: Vec<Cx> = sqrt_d.iter().map(|s| s.clone() * s).collect();
    let t: Vec<Vec<Cx>> = (0..n)
        .map(|i| {
            (0..=top)
                .map(|p| {
                    if p < 2 {
                        Cx::zero()
                    } else {
                        let sign = if p % 2 == 0 { Cx::one() } else { -Cx::one() };
                        sqrt_d[i].clone() * &rhs[p][i] * &sign
                    }
                })
                .collect()
        })
        .collect();
    let cutoff = r_order.saturating_sub(1);
    let data = EdgeTailData { cutoff, v: compute_v(&rc.r, cutoff)?, t, delta: d, sqrt_delta: sqrt_d };
    Ok(DescendentFrame { t_star, criticality, data, h, frame })
}

/// Genus-`g` descendent potential, `g >= 2`.
pub fn descendent_potential(
    model: &FrobeniusModel,
    calib: &Calibration,
    tau: &CurvePoint,
    g: u32,
    opts: &GenusOptions,
) -> Result<(Cx, DescendentFrame), DescError> {
    let frame = bold_quantities(model, calib, tau, r_order_for_genus(g), opts)?;
    let (value, _) = graph_sum(&frame.data, g)?;
    Ok((value, frame))
}

/// Both sides of the genus-1 identity along a direction `dir` in curve space,
/// by central differences with step `h`:
/// `lhs = sum_i [V^{ii}_{00}/2 du^i + dD_i/(48 D_i)]`,
/// `rhs = w(t) . dt + (1/24) d ln det[dt/dt_0]`, `w` the genus-1 form on H.
#[derive(Clone, Debug)]
pub struct Genus1Check {
    pub lhs: Cx,
    pub rhs: Cx,
    /// `det[dt/dt_0]^{-1}` against the product of the eigenvalue formula.
    pub det_residual: f64,
}

fn jacobian_inverse(calib: &Calibration, t: &[Cx], tau: &CurvePoint) -> Result<Matrix<Cx>, DescError> {
    // g^{-1} <phi_., phi_b, 1, c - tau(c)> = 1 - g^{-1} d_b sum_k m_k t_k
    let n = calib.dim();
    let mut a = Matrix::<Cx>::identity(n);
    for k in 1..=tau.kmax() {
        for c in 0..n {
            let col = calib.metric_inv.mul_vec(&calib.derivative_at(k, c, t)?.mul_vec(&tau.t[k]));
            for r in 0..n {
                a[(r, c)] -= col[r].clone();
            }
        }
    }
    Ok(a)
}

pub fn genus1_descendent(
    model: &FrobeniusModel,
    calib: &Calibration,
    tau: &CurvePoint,
    dir: &CurvePoint,
    step: &Cx,
    opts: &GenusOptions,
) -> Result<Genus1Check, DescError> {
    let n = calib.dim();
    let at = |s: i64| -> Result<(DescendentFrame, Matrix<Cx>), DescError> {
        let p = tau.moved(dir, &(step.clone() * Cx::from_int(s)));
        let bf = bold_quantities(model, calib, &p, 1, opts)?;
        let a = jacobian_inverse(calib, &bf.t_star, &p)?;
        Ok((bf, a))
    };
    let center = bold_quantities(model, calib, tau, 1, opts)?;
    let a0 = jacobian_inverse(calib, &center.t_star, tau)?;
    let samples = [at(-2)?, at(-1)?, at(1)?, at(2)?];
    let d = |f: &dyn Fn(&(DescendentFrame, Matrix<Cx>)) -> Cx| -> Cx {
        let v: Vec<Cx> = samples.iter().map(f).collect();
        (Cx::from_int(8) * (v[2].clone() - &v[1]) - (v[3].clone() - &v[0])) / (Cx::from_int(12) * step)
    };
    let half = Cx::from_ratio(1, 2);
    let mut lhs = Cx::zero();
    for i in 0..n {
        let du = d(&|s| s.0.frame.u[i].clone());
        let dlog = d(&|s| s.0.data.delta[i].clone()) / &center.data.delta[i];
        lhs += center.data.v(i, i, 0, 0) * &du * &half + dlog / Cx::from_int(48);
    }
    let w = genus1_differential(&center.frame, &center.data);
    let mut rhs = Cx::zero();
    for a in 0..n {
        rhs += w[a].clone() * d(&|s| s.0.t_star[a].clone());
    }
    rhs -= d(&|s| s.1.det()) / (a0.det() * Cx::from_int(24));

    // eigenvalues of the inverse Jacobian: (du^i/dt^m) g^{mn} <phi_n, 1, 1, c - tau(c)>
    let ginv_h2 = calib.metric_inv.mul_vec(&center.h[2]);
    let mut prod = Cx::one();
    for i in 0..n {
        let mut lam = Cx::zero();
        for m in 0..n {
            lam -= center.frame.du[(m, i)].clone() * &ginv_h2[m];
        }
        prod = prod * lam;
    }
    let det = a0.det();
    let det_residual = (det.clone() - &prod).magnitude() / det.magnitude().max(1e-300);
    Ok(Genus1Check { lhs, rhs, det_residual })
}

/// Direct genus-2 potential of a point target from intersection numbers:
/// sums `prod t_k^{n_k}/n_k! <prod tau_k^{n_k}>_2` over insertions with
/// `k >= 2` and the forced number of `tau_0`, resumming `tau_1` through
/// `(1 - t_1)^{-(2g - 2 + n)}`. Stops once a whole weight layer is below `tol`.
pub fn point_genus_oracle(table: &crate::wk::IntersectionTable, tau: &CurvePoint, g: u32, tol: f64) -> Cx {
    let kmax = tau.kmax();
    let t: Vec<Cx> = (0..=kmax).map(|k| tau.t[k][0].clone()).collect();
    let one_minus = Cx::one() - t.get(1).cloned().unwrap_or_else(Cx::zero);
    let mut total = Cx::zero();
    let mut quiet = 0;
    // weight w = sum (k - 1) over insertions with k >= 2; tau_0 count a = w - (3g - 3)
    let mut w = 0u32;
    loop {
        let mut layer = Cx::zero();
        let a = w as i64 - (3 * g as i64 - 3);
        if a >= 0 {
            for parts in weight_parts(w, kmax.saturating_sub(1)) {
                // parts[j] = multiplicity of tau_{j+2}
                let mut ks = vec![0u32; a as usize];
                let mut coeff = t[0].powi(a).unwrap() / Cx::from_rational(&Rational::from(crate::scalar::factorial(a as u32)));
                for (j, &mult) in parts.iter().enumerate() {
                    let k = j + 2;
                    for _ in 0..mult {
                        ks.push(k as u32);
                    }
                    coeff = coeff * t[k].powi(mult as i64).unwrap()
                        / Cx::from_rational(&Rational::from(crate::scalar::factorial(mult)));
                }
                let npts = ks.len() as i64;
                if 2 * g as i64 - 2 + npts <= 0 {
                    continue;
                }
                let c = table.get_or_zero(g, &ks);
                if c == 0 {
                    continue;
                }
                let dil = one_minus.powi(-(2 * g as i64 - 2 + npts)).unwrap();
                layer += coeff * Cx::from_rational(&c) * dil;
            }
        }
        let small = layer.magnitude() <= tol * total.magnitude().max(1e-300);
        total += layer;
        if a >= 0 && small {
            quiet += 1;
            if quiet > kmax + 1 {
                break;
            }
        } else {
            quiet = 0;
        }
        w += 1;
        if w > 400 {
            break;
        }
    }
    total
}

/// Multiplicities `(n_2, ..., n_{kmax})` with `sum (k - 1) n_k = w`.
fn weight_parts(w: u32, slots: usize) -> Vec<Vec<u32>> {
    fn rec(rem: u32, j: usize, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if j == slots {
            if rem == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let wt = j as u32 + 1;
        for m in 0..=rem / wt {
            cur.push(m);
            rec(rem - m * wt, j + 1, slots, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(w, 0, slots, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genus::genus_potential;
    use crate::wk::table;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: &Cx, b: &Cx) -> f64 {
        (a.clone() - b).magnitude() / b.magnitude().max(1e-30)
    }

    fn random_tau(rng: &mut ChaCha8Rng, n: usize, kmax: usize, size: f64) -> CurvePoint {
        CurvePoint {
            t: (0..=kmax).map(|_| (0..n).map(|_| Cx::from_f64(rng.gen_range(-size..size))).collect()).collect(),
        }
    }

    fn two_primary(num: i64, den: i64) -> (FrobeniusModel, Vec<Rational>) {
        let m = FrobeniusModel::two_primary(&Rational::from((num, den)), &Rational::from(1)).unwrap();
        (m, vec![Rational::from((3, 10)), Rational::from((17, 10))])
    }

    #[test]
    fn point_calibration_is_exponential() {
        let c = compute_calibration(&FrobeniusModel::point(), &[Rational::new()], 6).unwrap();
        let x = Cx::from_f64(0.37);
        let mut expect = Cx::one();
        for k in 0..=6 {
            let got = c.at(k, &[x.clone()]).unwrap()[(0, 0)].clone();
            assert!(rel(&got, &expect) < 1e-60, "k={k}");
            expect = expect * &x / Cx::from_int(k as i64 + 1);
        }
    }

    #[test]
    fn calibration_is_symplectic() {
        let (m, base) = two_primary(1, 2);
        let c = compute_calibration(&m, &base, 5).unwrap();
        let t = [Cx::from_f64(0.41), Cx::from_f64(1.52)];
        assert!(c.unitarity_residual(&t).unwrap() < 1e-60);
        assert!(c.unitarity_residual(&c.base_cx()).unwrap() < 1e-70);
    }

    #[test]
    fn primary_only_curve_sits_at_shift() {
        let (m, base) = two_primary(3, 2);
        let c = compute_calibration(&m, &base, 3).unwrap();
        let mut tau = CurvePoint::zero(2, 3);
        tau.t[0] = vec![Cx::from_f64(0.05), Cx::from_f64(-0.02)];
        let t = critical_point(&c, &tau).unwrap();
        let b = c.base_cx();
        assert_eq!(t, vec![b[0].clone() + &tau.t[0][0], b[1].clone() + &tau.t[0][1]]);
    }

    #[test]
    fn point_critical_point_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = compute_calibration(&FrobeniusModel::point(), &[Rational::new()], 5).unwrap();
        for _ in 0..5 {
            let tau = random_tau(&mut rng, 1, 5, 0.1);
            let t = critical_point(&c, &tau).unwrap()[0].clone();
            let f = |x: &Cx| {
                let mut acc = x.clone() - &tau.t[0][0];
                let mut pow = Cx::one();
                for k in 1..=5 {
                    pow = pow * x / Cx::from_int(k);
                    acc -= pow.clone() * &tau.t[k as usize][0];
                }
                acc.to_f64_parts().0
            };
            let mut lo = tau.t[0][0].clone() - Cx::one();
            let mut hi = tau.t[0][0].clone() + Cx::one();
            assert!(f(&lo) < 0.0 && f(&hi) > 0.0);
            for _ in 0..260 {
                let mid = (lo.clone() + &hi) * Cx::from_ratio(1, 2);
                if f(&mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((t - &lo).magnitude() < 1e-60);
        }
    }

    #[test]
    fn point_genus_zero_closed_form() {
        // F^0 at t_{>=1} = 0 is t_0^3/6
        let c = compute_calibration(&FrobeniusModel::point(), &[Rational::new()], 5).unwrap();
        let mut tau = CurvePoint::zero(1, 2);
        tau.t[0][0] = Cx::from_f64(0.3);
        let g0 = genus0_descendents(&c, &tau).unwrap();
        let x = Cx::from_f64(0.3);
        assert!(rel(&g0.value, &(x.clone() * &x * &x / Cx::from_int(6))) < 1e-60);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (m, base) = two_primary(1, 2);
        let c = compute_calibration(&m, &base, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tau = random_tau(&mut rng, 2, 3, 0.05);
        let g0 = genus0_descendents(&c, &tau).unwrap();
        let h = Cx::from_f64(1e-12);
        for k in 0..=3 {
            for a in 0..2 {
                let dir = CurvePoint::basis(2, 3, k, a);
                let val = |s: i64| genus0_descendents(&c, &tau.moved(&dir, &(h.clone() * Cx::from_int(s)))).unwrap().value;
                let fd = (Cx::from_int(8) * (val(1) - val(-1)) - (val(2) - val(-2))) / (Cx::from_int(12) * &h);
                assert!((fd - &g0.grad[k][a]).magnitude() < 1e-40, "k={k} a={a}");
            }
        }
    }

    #[test]
    fn free_curve_reduces_to_ancestor_potential() {
        let (m, base) = two_primary(5, 3);
        let c = compute_calibration(&m, &base, 5).unwrap();
        let mut tau = CurvePoint::zero(2, 2);
        tau.t[0] = vec![Cx::from_f64(0.1), Cx::from_f64(-0.2)];
        let (val, frame) = descendent_potential(&m, &c, &tau, 2, &GenusOptions::default()).unwrap();
        let anc = genus_potential(&m, &frame.t_star, 2, &GenusOptions::default()).unwrap();
        assert!(rel(&val, &anc.value) < 1e-40);
    }

    #[test]
    fn point_genus_two_matches_intersection_sum() {
        let c = compute_calibration(&FrobeniusModel::point(), &[Rational::new()], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2 {
            let tau = random_tau(&mut rng, 1, 5, 0.1);
            let (val, _) = descendent_potential(&FrobeniusModel::point(), &c, &tau, 2, &GenusOptions::default()).unwrap();
            let oracle = point_genus_oracle(table(), &tau, 2, 1e-32);
            assert!(rel(&val, &oracle) < 1e-25, "{val} vs {oracle}");
        }
    }

    #[test]
    fn genus_one_identity() {
        let (m, base) = two_primary(1, 2);
        let c = compute_calibration(&m, &base, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tau = random_tau(&mut rng, 2, 3, 0.05);
        let dir = random_tau(&mut rng, 2, 3, 1.0);
        let chk = genus1_descendent(&m, &c, &tau, &dir, &Cx::from_f64(1e-12), &GenusOptions::default()).unwrap();
        assert!(rel(&chk.lhs, &chk.rhs) < 1e-20, "{} vs {}", chk.lhs, chk.rhs);
        assert!(chk.det_residual < 1e-40);
    }

    #[test]
    fn weight_parts_count() {
        // partitions of 4 into parts of size 1..3
        assert_eq!(weight_parts(4, 3).len(), 4);
        assert_eq!(weight_parts(0, 4), vec![vec![0; 4]]);
    }
}
