//! The asymptotic fundamental solution `R(z) = 1 + R_1 z + R_2 z^2 + ...`,
//! its diagonal twists, and the edge (V) and tail (T) coefficients.
//!
//! Index convention: `R_k[(i, j)]` has `i` as the row of the normalized
//! canonical frame and `j` as the solution index. The recursion is
//! `(d_a - A_a) R_{k-1} = [dU_a, R_k]` with `A_a = (d_a Psi) Psi^{-1}`.

use thiserror::Error;

use crate::frame::{smat_mul, smat_retruncate, CanonicalFrame, SMat};
use crate::matrix::Matrix;
use crate::scalar::{bernoulli_numbers, tolerance, Cx, Field};
use crate::series::{singular_quotient, Series, SeriesError, Truncation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("frame Taylor order {have} is below the requested R order {want}")]
    FrameTooShallow { have: u32, want: u32 },
    #[error("conformal mode needs an Euler field")]
    NotConformal,
    #[error("off-diagonal R_{k}[{i},{j}] differs across flat directions by {residual:e}")]
    Inconsistent { k: u32, i: usize, j: usize, residual: f64 },
    #[error("canonical coordinates {i} and {j} have identical differentials")]
    Degenerate { i: usize, j: usize },
    #[error("tail extraction residual {0:e} (T_0/T_1 must vanish)")]
    TailResidual(f64),
    #[error("characters must be nonzero")]
    ZeroCharacter,
}

/// How the diagonal integration constants are fixed.
#[derive(Clone, Debug, PartialEq)]
pub enum RMode {
    /// Homogeneity under the Euler field.
    Conformal,
    /// Even orders from unitarity, odd orders zero, then the twist by
    /// `a[k-1][i]` (coefficient of `z^{2k-1}` for canonical index `i`).
    Constants(Vec<Vec<Cx>>),
}

/// `R_0..R_K` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct RSeries<F: Field> {
    pub r: Vec<Matrix<F>>,
}

impl<F: Field> RSeries<F> {
    pub fn identity(n: usize, k: u32) -> Self {
        let mut r = vec![Matrix::identity(n)];
        for _ in 0..k {
            r.push(Matrix::zeros(n, n));
        }
        RSeries { r }
    }

    pub fn order(&self) -> u32 {
        self.r.len() as u32 - 1
    }

    pub fn dim(&self) -> usize {
        self.r[0].rows()
    }

    /// `max_{1<=k<=K} |sum_{p+q=k} (-1)^q R_p R_q^T|`.
    pub fn unitarity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 1..self.r.len() {
            let mut p = Matrix::zeros(self.dim(), self.dim());
            for a in 0..=k {
                let term = self.r[a].mul(&self.r[k - a].transpose());
                p = if (k - a) % 2 == 0 { p.add(&term) } else { p.sub(&term) };
            }
            worst = worst.max(p.max_abs());
        }
        worst
    }

    /// `R(z) diag(exp(sum_k a[k-1][i] z^{2k-1}))`, truncated at the same order.
    pub fn twist(&self, a: &[Vec<F>]) -> Self {
        let n = self.dim();
        let kmax = self.order();
        let base: Series<F> = Series::zero(vec!["z".into()], Truncation::total(1, kmax));
        let factors: Vec<Series<F>> = (0..n)
            .map(|i| {
                let mut ex = base.zero_like();
                for (k1, ak) in a.iter().enumerate() {
                    ex.add_term(vec![2 * k1 as u32 + 1], ak[i].clone());
                }
                ex.exp().expect("zero constant term")
            })
            .collect();
        let mut r = vec![Matrix::zeros(n, n); self.r.len()];
        for k in 0..self.r.len() {
            for p in 0..=k {
                for j in 0..n {
                    let c = factors[j].coefficient(&[(k - p) as u32]);
                    if c.is_exactly_zero() {
                        continue;
                    }
                    for i in 0..n {
                        let v = self.r[p][(i, j)].clone() * &c;
                        r[k][(i, j)] += v;
                    }
                }
            }
        }
        RSeries { r }
    }
}

/// Output of [`compute_r`]: the R-series at the point and the check residuals.
#[derive(Clone, Debug)]
pub struct RComputation {
    pub r: RSeries<Cx>,
    /// Largest disagreement between flat directions for off-diagonal entries,
    /// including numerators that must vanish where the denominator does.
    pub consistency: f64,
    pub unitarity: f64,
}

/// Runs the recursion to order `k_max`.
pub fn compute_r(frame: &CanonicalFrame, k_max: u32, mode: &RMode) -> Result<RComputation, RError> {
    if frame.order < k_max {
        return Err(RError::FrameTooShallow { have: frame.order, want: k_max });
    }
    let n = frame.dim();
    if matches!(mode, RMode::Conformal) && frame.euler_series.is_none() {
        return Err(RError::NotConformal);
    }
    let conn = frame.connection();
    let unit_scale = frame.du.max_abs().max(1.0);
    let mut series: Vec<SMat> = Vec::with_capacity(k_max as usize + 1);
    let t0 = Truncation::total(n, k_max);
    let base0: Series<Cx> = frame.psi_series[0][0].retruncate(t0.clone());
    series.push(
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { base0.constant_like(Cx::one()) } else { base0.zero_like() }).collect())
            .collect(),
    );
    let mut r_at: Vec<Matrix<Cx>> = vec![Matrix::identity(n)];
    let mut consistency = 0.0f64;
    for k in 1..=k_max {
        let tk = Truncation::total(n, k_max - k);
        let prev = &series[k as usize - 1];
        let prev_t = smat_retruncate(prev, &tk);
        // numerators (d_a - A_a) R_{k-1}
        let nums: Vec<SMat> = (0..n)
            .map(|a| {
                let a_conn = smat_retruncate(&conn[a], &tk);
                let ar = smat_mul(&a_conn, &prev_t);
                (0..n)
                    .map(|i| (0..n).map(|j| prev[i][j].derivative(a).retruncate(tk.clone()).sub(&ar[i][j]).unwrap()).collect())
                    .collect()
            })
            .collect();
        let dens: Vec<Vec<Series<Cx>>> = (0..n)
            .map(|a| (0..n).map(|i| frame.du_series[a][i].retruncate(tk.clone())).collect())
            .collect();
        let zero = Series::zero(base0.vars().to_vec(), tk.clone());
        let mut rk: SMat = vec![vec![zero.clone(); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let den: Vec<Series<Cx>> = (0..n).map(|a| dens[a][i].sub(&dens[a][j]).unwrap()).collect();
                let best = (0..n)
                    .max_by(|&x, &y| den[x].constant_term().magnitude().total_cmp(&den[y].constant_term().magnitude()))
                    .unwrap();
                let best_mag = den[best].constant_term().magnitude();
                if best_mag <= 1e-30 * unit_scale {
                    return Err(RError::Degenerate { i, j });
                }
                let value = nums[best][i][j].div(&den[best])?;
                let scale = value.max_magnitude().max(1.0);
                for a in 0..n {
                    if a == best {
                        continue;
                    }
                    let d0 = den[a].constant_term().magnitude();
                    let res = if d0 > 1e-30 * unit_scale {
                        nums[a][i][j].sub(&value.mul(&den[a]).unwrap()).unwrap().max_magnitude() / d0
                    } else if den[a].max_magnitude() <= 1e-30 * unit_scale {
                        nums[a][i][j].max_magnitude()
                    } else {
                        nums[a][i][j].sub(&value.mul(&den[a]).unwrap()).unwrap().max_magnitude()
                    };
                    let rel = res / scale;
                    consistency = consistency.max(rel);
                    if rel > tolerance().sqrt() {
                        return Err(RError::Inconsistent { k, i, j, residual: rel });
                    }
                }
                rk[i][j] = value;
            }
        }
        // diagonal
        for i in 0..n {
            // (A_a R_k)_ii uses only the off-diagonal part since A_a has zero diagonal
            let grad: Vec<Series<Cx>> = (0..n)
                .map(|a| {
                    let mut acc = zero.zero_like();
                    for j in 0..n {
                        if j != i {
                            acc = acc.add(&conn[a][i][j].retruncate(tk.clone()).mul_unchecked(&rk[j][i])).unwrap();
                        }
                    }
                    acc
                })
                .collect();
            rk[i][i] = match mode {
                RMode::Conformal => {
                    let e = frame.euler_series.as_ref().unwrap();
                    let mut acc = zero.zero_like();
                    for a in 0..n {
                        acc = acc.add(&e[a].retruncate(tk.clone()).mul_unchecked(&grad[a])).unwrap();
                    }
                    acc.scale(&Cx::from_ratio(-1, k as i64))
                }
                RMode::Constants(_) => {
                    let c = if k % 2 == 0 {
                        // 2 (R_k)_ii + sum_{p=1}^{k-1} (-1)^{k-p} (R_p R_{k-p}^T)_ii = 0
                        let mut s = Cx::zero();
                        for p in 1..k as usize {
                            let mut v = Cx::zero();
                            for m in 0..n {
                                v += r_at[p][(i, m)].clone() * &r_at[k as usize - p][(i, m)];
                            }
                            if (k as usize - p) % 2 == 0 {
                                s += v;
                            } else {
                                s -= v;
                            }
                        }
                        s * Cx::from_ratio(-1, 2)
                    } else {
                        Cx::zero()
                    };
                    Series::from_gradient(&grad, c).retruncate(tk.clone())
                }
            };
        }
        r_at.push(Matrix::from_fn(n, n, |i, j| rk[i][j].constant_term()));
        series.push(rk);
    }
    let mut r = RSeries { r: r_at };
    if let RMode::Constants(a) = mode {
        if !a.is_empty() {
            r = r.twist(a);
        }
    }
    let unitarity = r.unitarity_residual();
    Ok(RComputation { r, consistency, unitarity })
}

/// Bernoulli constants `a_k^i = -N_{2k-1}(1/chi^i) B_{2k} / ((2k-1) 2k)` for
/// `k = 1..=kmax`, where `N_m` is the power sum over the characters of index `i`.
pub fn bernoulli_constants<F: Field>(chars: &[Vec<F>], kmax: usize) -> Result<Vec<Vec<F>>, RError> {
    let b = bernoulli_numbers(2 * kmax);
    let mut out = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let mut row = Vec::with_capacity(chars.len());
        for chi in chars {
            let mut nsum = F::zero();
            for c in chi {
                let inv = c.inv().ok_or(RError::ZeroCharacter)?;
                nsum += inv.powi(2 * k as i64 - 1).unwrap();
            }
            let coef = F::from_rational(&b[2 * k].0) / F::from_int(((2 * k - 1) * 2 * k) as i64);
            row.push(-(nsum * &coef));
        }
        out.push(row);
    }
    Ok(out)
}

/// Edge coefficients `V^{ij}_{kl}` for `k + l <= cutoff` and tail values `T^i_k`
/// for `k <= K + 1`, together with `Delta` and a chosen `Delta^{1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeTailData<F: Field> {
    pub cutoff: u32,
    /// `v[i][j][k][l]`, `l <= cutoff - k`.
    pub v: Vec<Vec<Vec<Vec<F>>>>,
    /// `t[i][k]` for `0 <= k <= K + 1`; entries `k = 0, 1` are zero.
    pub t: Vec<Vec<F>>,
    pub delta: Vec<F>,
    pub sqrt_delta: Vec<F>,
}

impl<F: Field> EdgeTailData<F> {
    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn v(&self, i: usize, j: usize, k: u32, l: u32) -> F {
        if k + l > self.cutoff {
            panic!("V^{i}{j}_{k}{l} beyond cutoff {}", self.cutoff);
        }
        self.v[i][j][k as usize][l as usize].clone()
    }

    /// `V^{ij}_{kl} Delta_i^{1/2} Delta_j^{1/2}`.
    pub fn edge_weight(&self, i: usize, j: usize, k: u32, l: u32) -> F {
        self.v(i, j, k, l) * &self.sqrt_delta[i] * &self.sqrt_delta[j]
    }

    /// Tail value `T^i_k` (zero beyond the stored range is an error).
    pub fn tail(&self, i: usize, k: usize) -> F {
        self.t[i].get(k).cloned().unwrap_or_else(|| panic!("T^{i}_{k} beyond stored order"))
    }

    pub fn max_tail_index(&self) -> usize {
        self.t[0].len() - 1
    }

    /// Builds V and T from an R-series.
    pub fn from_r(r: &RSeries<F>, delta: &[F], sqrt_delta: &[F], cutoff: u32) -> Result<Self, RError> {
        Ok(EdgeTailData {
            cutoff,
            v: compute_v(r, cutoff)?,
            t: compute_t(r, sqrt_delta)?,
            delta: delta.to_vec(),
            sqrt_delta: sqrt_delta.to_vec(),
        })
    }

    /// Relabels canonical indices: new index `k` takes old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        EdgeTailData {
            cutoff: self.cutoff,
            v: perm.iter().map(|&i| perm.iter().map(|&j| self.v[i][j].clone()).collect()).collect(),
            t: perm.iter().map(|&i| self.t[i].clone()).collect(),
            delta: perm.iter().map(|&i| self.delta[i].clone()).collect(),
            sqrt_delta: perm.iter().map(|&i| self.sqrt_delta[i].clone()).collect(),
        }
    }
}

/// `V^{ij}_{kl}` from the regular part of `(R(z)^T R(w) - 1)/(z + w)` with
/// the sign convention `sum (-1)^{k+l} V_{kl} z^k w^l`.
pub fn compute_v<F: Field>(r: &RSeries<F>, cutoff: u32) -> Result<Vec<Vec<Vec<Vec<F>>>>, RError> {
    let n = r.dim();
    let kmax = r.order();
    let cap = (cutoff + 1).min(kmax);
    if cutoff + 1 > kmax {
        // coefficients beyond the available R order are unknown
        return Err(RError::Series(SeriesError::TruncationMismatch));
    }
    let base: Series<F> = Series::zero(vec!["z".into(), "w".into()], Truncation::total(2, cutoff + 1));
    let mut out = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut num = base.zero_like();
            for p in 0..=cap {
                for q in 0..=(cap - p) {
                    let mut s = F::zero();
                    for m in 0..n {
                        s += r.r[p as usize][(m, i)].clone() * &r.r[q as usize][(m, j)];
                    }
                    if p == 0 && q == 0 && i == j {
                        s -= F::one();
                    }
                    num.add_term(vec![p, q], s);
                }
            }
            let quot = singular_quotient(&num, 0, 1)?;
            let mut table = Vec::with_capacity(cutoff as usize + 1);
            for k in 0..=cutoff {
                let mut row = Vec::with_capacity((cutoff - k) as usize + 1);
                for l in 0..=(cutoff - k) {
                    let c = quot.coefficient(&[k, l]);
                    row.push(if (k + l) % 2 == 0 { c } else { -c });
                }
                table.push(row);
            }
            out[i][j] = table;
        }
    }
    Ok(out)
}

/// `T^i_{k+1} = (-1)^{k+1} Delta_i^{1/2} sum_j Delta_j^{-1/2} R_k[j][i]`,
/// with the order-zero consistency check.
pub fn compute_t<F: Field>(r: &RSeries<F>, sqrt_delta: &[F]) -> Result<Vec<Vec<F>>, RError> {
    let n = r.dim();
    let inv: Vec<F> = sqrt_delta.iter().map(|s| s.inv().expect("nonzero Delta")).collect();
    let mut out = vec![vec![F::zero(); r.r.len() + 1]; n];
    let mut residual = 0.0f64;
    for i in 0..n {
        for k in 0..r.r.len() {
            let mut s = F::zero();
            for j in 0..n {
                s += inv[j].clone() * &r.r[k][(j, i)];
            }
            let val = s * &sqrt_delta[i];
            if k == 0 {
                residual = residual.max((val - F::one()).magnitude());
            } else {
                out[i][k + 1] = if (k + 1) % 2 == 0 { val } else { -val };
            }
        }
    }
    if residual > tolerance().sqrt() || (F::EXACT && residual > 0.0) {
        return Err(RError::TailResidual(residual));
    }
    Ok(out)
}

/// Largest `|V^{ij}_{kl} - V^{ji}_{lk}|`.
pub fn v_symmetry_residual<F: Field>(d: &EdgeTailData<F>) -> f64 {
    let n = d.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..=d.cutoff {
                for l in 0..=(d.cutoff - k) {
                    worst = worst.max((d.v(i, j, k, l) - d.v(j, i, l, k)).magnitude());
                }
            }
        }
    }
    worst
}

/// Frame + R + V/T in one call: `R` to order `k_max`, V to `k_max - 1`.
pub fn edge_tail_data(frame: &CanonicalFrame, k_max: u32, mode: &RMode) -> Result<(RComputation, EdgeTailData<Cx>), RError> {
    let rc = compute_r(frame, k_max, mode)?;
    let cutoff = k_max.saturating_sub(1);
    let data = EdgeTailData::from_r(&rc.r, &frame.delta, &frame.sqrt_delta, cutoff)?;
    Ok((rc, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameOptions;
    use crate::frobenius::FrobeniusModel;
    use crate::scalar::Q;
    use rug::Rational;

    fn cx(x: f64) -> Cx {
        Cx::from_f64(x)
    }

    #[test]
    fn point_model_has_trivial_r() {
        let m = FrobeniusModel::point();
        let f = CanonicalFrame::new(&m, &[cx(0.4)], 5, &FrameOptions::default()).unwrap();
        let (rc, data) = edge_tail_data(&f, 5, &RMode::Conformal).unwrap();
        for k in 1..=5 {
            assert!(rc.r.r[k].max_abs() < 1e-70);
        }
        assert!(data.t.iter().flatten().all(|x| x.magnitude() < 1e-70));
        assert!(data.v.iter().flatten().flatten().flatten().all(|x| x.magnitude() < 1e-70));
    }

    #[test]
    fn scalar_twist() {
        let r = RSeries::<Q>::identity(1, 4);
        let a = Q::new(2, 3);
        let tw = r.twist(&[vec![a.clone()]]);
        assert_eq!(tw.r[1][(0, 0)], a);
        assert_eq!(tw.r[2][(0, 0)], a.clone() * a.clone() / Q::new(2, 1));
        let back = tw.twist(&[vec![-a]]);
        assert_eq!(back, r);
        assert_eq!(r.twist(&[vec![Q::zero()]]), r);
    }

    #[test]
    fn bernoulli_values() {
        let a = bernoulli_constants(&[vec![Q::new(3, 1)], vec![Q::one(), -Q::one()]], 2).unwrap();
        assert_eq!(a[0][0], Q::new(-1, 36));
        assert_eq!(a[0][1], Q::zero());
        let a = bernoulli_constants(&[vec![Q::one()]], 2).unwrap();
        assert_eq!(a[1][0], Q::new(1, 360));
        assert!(bernoulli_constants(&[vec![Q::zero()]], 1).is_err());
    }

    #[test]
    fn identity_series_has_no_edges_or_tails() {
        let r = RSeries::<Q>::identity(2, 4);
        let d = EdgeTailData::from_r(&r, &[Q::one(), Q::new(4, 1)], &[Q::one(), Q::new(2, 1)], 3).unwrap();
        assert!(d.v.iter().flatten().flatten().flatten().all(|x| x.is_exactly_zero()));
        assert!(d.t.iter().flatten().all(|x| x.is_exactly_zero()));
    }

    /// Unitary rational R: a diagonal twist conjugated by a rational rotation.
    fn rational_unitary(kmax: u32) -> RSeries<Q> {
        // O = [[3/5, 4/5], [-4/5, 3/5]]; R(z) = O D(z) O^T with D a diagonal twist
        let o = Matrix::from_rows(vec![vec![Q::new(3, 5), Q::new(4, 5)], vec![Q::new(-4, 5), Q::new(3, 5)]]);
        let d = RSeries::<Q>::identity(2, kmax).twist(&[vec![Q::new(1, 2), Q::new(-1, 3)], vec![Q::new(1, 7), Q::new(2, 1)]]);
        RSeries { r: d.r.iter().map(|m| o.mul(m).mul(&o.transpose())).collect() }
    }

    #[test]
    fn v_table_first_coefficient_and_symmetry() {
        let r = rational_unitary(5);
        assert_eq!(r.unitarity_residual(), 0.0);
        assert_eq!(r.r[1], r.r[1].transpose());
        let d = EdgeTailData::from_r(&r, &[Q::one(), Q::one()], &[Q::one(), Q::one()], 4).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(d.v(i, j, 0, 0), r.r[1][(i, j)]);
            }
        }
        assert_eq!(v_symmetry_residual(&d), 0.0);
        // T_2^i = sqrt(Delta_i) sum_j Delta_j^{-1/2} R_1[j][i]
        let t2: Vec<Q> = (0..2).map(|i| r.r[1][(0, i)].clone() + r.r[1][(1, i)].clone()).collect();
        assert_eq!(d.t[0][2], t2[0]);
        assert_eq!(d.t[1][2], t2[1]);
    }

    #[test]
    fn cp1_shape_r_matrix_is_unitary_and_consistent() {
        let m = FrobeniusModel::two_primary(&Rational::from(1), &Rational::from(1)).unwrap();
        let f = CanonicalFrame::new(&m, &[cx(0.3), cx(-0.2)], 6, &FrameOptions::default()).unwrap();
        let rc = compute_r(&f, 6, &RMode::Conformal).unwrap();
        assert!(rc.unitarity < 1e-60, "{}", rc.unitarity);
        assert!(rc.consistency < 1e-60, "{}", rc.consistency);
    }

    #[test]
    fn constants_mode_is_unitary_and_twist_inverts() {
        let m = FrobeniusModel::a3();
        let f = CanonicalFrame::new(&m, &[cx(0.2), cx(0.5), cx(1.1)], 5, &FrameOptions::default()).unwrap();
        let a = vec![vec![cx(0.3), cx(-0.1), cx(0.2)], vec![cx(0.05), cx(0.0), cx(-0.4)]];
        let plain = compute_r(&f, 5, &RMode::Constants(Vec::new())).unwrap();
        let twisted = compute_r(&f, 5, &RMode::Constants(a.clone())).unwrap();
        assert!(plain.unitarity < 1e-60 && twisted.unitarity < 1e-60);
        let neg: Vec<Vec<Cx>> = a.iter().map(|r| r.iter().map(|x| -x.clone()).collect()).collect();
        let back = twisted.r.twist(&neg);
        for k in 0..=5 {
            assert!(back.r[k].sub(&plain.r.r[k]).max_abs() < 1e-60);
        }
        // the conformal gauge is one of the constants-mode solutions: same off-diagonal R_1
        let conf = compute_r(&f, 5, &RMode::Conformal).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((conf.r.r[1][(i, j)].clone() - &plain.r.r[1][(i, j)]).magnitude() < 1e-60);
                }
            }
        }
    }

    #[test]
    fn too_shallow_frame_is_rejected() {
        let m = FrobeniusModel::point();
        let f = CanonicalFrame::new(&m, &[cx(0.4)], 2, &FrameOptions::default()).unwrap();
        assert!(matches!(compute_r(&f, 3, &RMode::Conformal), Err(RError::FrameTooShallow { .. })));
    }
}
