//! Acceptance checks, shared by `fgenus selftest` and the acceptance test target.
//!
//! Every check compares a pipeline value against an independent evaluation
//! (closed form, exact rational identity, second algorithm) and reports the
//! worst discrepancy next to the pinned tolerance.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;

use crate::descendent::{
    compute_calibration, descendent_potential, genus0_descendents, genus1_descendent, point_genus_oracle, Calibration,
    CurvePoint,
};
use crate::frame::{CanonicalFrame, FrameOptions};
use crate::frobenius::FrobeniusModel;
use crate::genus::{closedness_residual, genus1_form_at, genus_potential, graph_sum, wick_oracle, GenusOptions};
use crate::hodge::verify_lemma;
use crate::matrix::Matrix;
use crate::rmatrix::{compute_r, EdgeTailData, RMode, RSeries};
use crate::scalar::{Cx, Field, Q};
use crate::wk::{partitions_into, table, IntersectionTable};

pub const CLOSED_FORM_REL: f64 = 1e-25;
pub const CLOSED_FORM_SECONDS: f64 = 60.0;
pub const SYMMETRY_ABS: f64 = 1e-25;
pub const UNITARITY: f64 = 1e-30;
pub const ORACLE_REL: f64 = 1e-28;
pub const CLOSEDNESS: f64 = 1e-20;
pub const CLOSEDNESS_STEP: f64 = 1e-6;
pub const POINT_DESCENDENT: f64 = 1e-25;
pub const GENUS_ONE_DESCENDENT: f64 = 1e-20;
pub const GENUS_ZERO_IDENTITIES: f64 = 1e-25;
pub const INVARIANCE_REL: f64 = 1e-28;

pub const DIMENSIONS: [(i64, i64); 5] = [(1, 3), (1, 2), (1, 1), (3, 2), (5, 3)];

#[derive(Clone, Debug)]
pub struct Check {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        format!("[{}] criterion {}: {} ({})", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

pub const NAMES: [&str; 9] = [
    "genus-2 closed form on the two-primary family",
    "d=1/3 vanishing and d <-> 2-d symmetry",
    "intersection table string/dilaton and spot values",
    "R-matrix unitarity and consistency at K=7",
    "graph sum against the Wick oracle",
    "Hodge lemma and the 1/24 coefficient",
    "closedness of the genus-1 form",
    "descendent potentials",
    "invariance under relabeling, branch flips and twists",
];

pub fn run(id: u32) -> Check {
    let (passed, detail) = match id {
        1 => closed_form_check(),
        2 => symmetry_check(),
        3 => table_check(),
        4 => unitarity_check(),
        5 => oracle_check(),
        6 => lemma_check(),
        7 => closedness_check(),
        8 => descendent_check(),
        9 => invariance_check(),
        _ => (false, format!("no criterion {id}")),
    };
    let name = NAMES.get(id as usize - 1).copied().unwrap_or("unknown");
    Check { id, name, passed, detail }
}

pub fn all() -> Vec<Check> {
    (1..=9).map(run).collect()
}

type Outcome = (bool, String);

fn fail<E: std::fmt::Display>(what: &str, e: E) -> Outcome {
    (false, format!("{what}: {e}"))
}

fn rational(num: i64, den: i64) -> Rational {
    Rational::from((num, den))
}

fn rel(a: &Cx, b: &Cx) -> f64 {
    (a.clone() - b).magnitude() / b.magnitude().max(1e-300)
}

fn two_primary(d: (i64, i64)) -> FrobeniusModel {
    FrobeniusModel::two_primary(&rational(d.0, d.1), &Rational::from(1)).expect("supported dimension")
}

fn sample_point(rng: &mut ChaCha8Rng) -> Vec<Cx> {
    vec![Cx::from_f64(rng.gen_range(-1.0..1.0)), Cx::from_f64(rng.gen_range(0.5..2.0))]
}

/// `d(3d-1)(d-1)^2(3d-5)(d-2)/2880`.
pub fn genus_two_constant(d: &Rational) -> Rational {
    let one = Rational::from(1);
    let three = Rational::from(3);
    Rational::from(d * (three.clone() * d - &one))
        * Rational::from(d - &one).square()
        * (three * d - Rational::from(5))
        * Rational::from(d - Rational::from(2))
        / Rational::from(2880)
}

/// `Delta_0 / (u^1 - u^0)^3`; labels sorted so `u^0` is the first root.
fn closed_form_scale(frame: &CanonicalFrame) -> Cx {
    let du = frame.u[1].clone() - &frame.u[0];
    frame.delta[0].clone() / (du.clone() * &du * &du)
}

fn closed_form_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    let mut count = 0;
    for d in DIMENSIONS {
        let m = two_primary(d);
        let c = Cx::from_rational(&genus_two_constant(&rational(d.0, d.1)));
        for _ in 0..5 {
            let p = sample_point(&mut rng);
            let start = Instant::now();
            let r = match genus_potential(&m, &p, 2, &GenusOptions::default()) {
                Ok(r) => r,
                Err(e) => return fail("genus 2", e),
            };
            slowest = slowest.max(start.elapsed().as_secs_f64());
            let scale = closed_form_scale(&r.frame);
            let expect = c.clone() * &scale;
            // vanishing members are measured against the scale itself
            let err = (r.value - &expect).magnitude() / expect.magnitude().max(scale.magnitude());
            worst = worst.max(err);
            count += 1;
        }
    }
    let ok = worst <= CLOSED_FORM_REL && slowest <= CLOSED_FORM_SECONDS;
    (ok, format!("{count} points, worst rel {worst:.2e} <= {CLOSED_FORM_REL:e}, slowest {slowest:.2}s <= {CLOSED_FORM_SECONDS}s"))
}

fn scaled_genus_two(d: (i64, i64), p: &[Cx]) -> Result<Cx, String> {
    let r = genus_potential(&two_primary(d), p, 2, &GenusOptions::default()).map_err(|e| e.to_string())?;
    Ok(r.value / closed_form_scale(&r.frame))
}

fn symmetry_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut vanish = 0.0f64;
    let mut sym = 0.0f64;
    for _ in 0..5 {
        let p = sample_point(&mut rng);
        let q = sample_point(&mut rng);
        let mut run = || -> Result<(), String> {
            vanish = vanish.max(scaled_genus_two((1, 3), &p)?.magnitude());
            for (a, b) in [((1, 3), (5, 3)), ((1, 2), (3, 2)), ((1, 1), (1, 1))] {
                sym = sym.max((scaled_genus_two(a, &p)? - scaled_genus_two(b, &q)?).magnitude());
            }
            Ok(())
        };
        if let Err(e) = run() {
            return fail("genus 2", e);
        }
    }
    let ok = vanish <= SYMMETRY_ABS && sym <= SYMMETRY_ABS;
    (ok, format!("|F2(1/3)| scaled {vanish:.2e}, |F2(d) - F2(2-d)| scaled {sym:.2e}, both <= {SYMMETRY_ABS:e}"))
}

/// Intersection numbers from the Virasoro recursion alone, without the
/// string and dilaton shortcuts used by the table.
struct Virasoro {
    memo: HashMap<(u32, Vec<u32>), Rational>,
}

impl Virasoro {
    fn get(&mut self, g: u32, mut ks: Vec<u32>) -> Rational {
        ks.sort_unstable();
        let n = ks.len() as i64;
        if 2 * g as i64 - 2 + n <= 0 || ks.iter().map(|&k| k as i64).sum::<i64>() != 3 * g as i64 - 3 + n {
            return Rational::new();
        }
        if g == 0 && n == 3 {
            return Rational::from(1);
        }
        if g == 1 && n == 1 {
            return rational(1, 24);
        }
        if let Some(v) = self.memo.get(&(g, ks.clone())) {
            return v.clone();
        }
        let dfact = |m: i64| -> Rational {
            let mut acc = Rational::from(1);
            let mut x = m;
            while x > 1 {
                acc *= x;
                x -= 2;
            }
            acc
        };
        let top = *ks.last().unwrap() as i64;
        let k = top - 1;
        let rest: Vec<u32> = ks[..ks.len() - 1].to_vec();
        let mut acc = Rational::new();
        for j in 0..rest.len() {
            let d = rest[j] as i64;
            let mut k2 = rest.clone();
            k2[j] = (d + k) as u32;
            acc += dfact(2 * k + 2 * d + 1) / dfact(2 * d - 1) * self.get(g, k2);
        }
        let mut quad = Rational::new();
        for r in 0..k {
            let s = k - 1 - r;
            let mut inner = Rational::new();
            if g >= 1 {
                let mut k2 = rest.clone();
                k2.push(r as u32);
                k2.push(s as u32);
                inner += self.get(g - 1, k2);
            }
            for mask in 0..(1u64 << rest.len()) {
                let mut left = vec![r as u32];
                let mut right = vec![s as u32];
                for (b, &x) in rest.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        left.push(x);
                    } else {
                        right.push(x);
                    }
                }
                for g1 in 0..=g {
                    let a = self.get(g1, left.clone());
                    if a != 0 {
                        inner += a * self.get(g - g1, right.clone());
                    }
                }
            }
            quad += dfact(2 * r + 1) * dfact(2 * s + 1) * inner;
        }
        acc += quad / Rational::from(2);
        let v = acc / dfact(2 * k + 3);
        self.memo.insert((g, ks), v.clone());
        v
    }
}

fn table_check() -> Outcome {
    let t = IntersectionTable::new();
    let mut oracle = Virasoro { memo: HashMap::new() };
    let mut checked = 0;
    let mut bad = Vec::new();
    for g in 0..=3u32 {
        for n in 1..=8usize {
            if 2 * g as i64 - 2 + n as i64 <= 0 {
                continue;
            }
            let reduced_stable = 2 * g as i64 - 2 + n as i64 - 1 > 0;
            for ks in partitions_into(3 * g + n as u32 - 3, n) {
                let v = t.get_or_zero(g, &ks);
                if v != oracle.get(g, ks.clone()) {
                    bad.push(format!("virasoro {g} {ks:?}"));
                }
                if ks[0] == 0 && reduced_stable {
                    let rest = &ks[1..];
                    let mut string = Rational::new();
                    for j in 0..rest.len() {
                        if rest[j] > 0 {
                            let mut k2 = rest.to_vec();
                            k2[j] -= 1;
                            string += t.get_or_zero(g, &k2);
                        }
                    }
                    if v != string {
                        bad.push(format!("string {g} {ks:?}"));
                    }
                }
                if let Some(pos) = ks.iter().position(|&k| k == 1).filter(|_| reduced_stable) {
                    let mut rest = ks.clone();
                    rest.remove(pos);
                    if v != t.get_or_zero(g, &rest) * Rational::from(2 * g as i64 - 3 + n as i64) {
                        bad.push(format!("dilaton {g} {ks:?}"));
                    }
                }
                checked += 1;
            }
        }
    }
    let spots = [(0, vec![0, 0, 0], rational(1, 1)), (1, vec![1], rational(1, 24)), (2, vec![4], rational(1, 1152))];
    for (g, ks, want) in spots {
        if t.get_or_zero(g, &ks) != want {
            bad.push(format!("spot {g} {ks:?}"));
        }
    }
    (bad.is_empty(), format!("{checked} entries with g <= 3, n <= 8 exact, {} failures {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>()))
}

fn unitarity_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut unit, mut cons) = (0.0f64, 0.0f64);
    for i in 0..10 {
        let d = DIMENSIONS[i % DIMENSIONS.len()];
        let p = sample_point(&mut rng);
        let frame = match CanonicalFrame::new(&two_primary(d), &p, 7, &FrameOptions::default()) {
            Ok(f) => f,
            Err(e) => return fail("frame", e),
        };
        match compute_r(&frame, 7, &RMode::Conformal) {
            Ok(rc) => {
                unit = unit.max(rc.unitarity).max(rc.r.unitarity_residual());
                cons = cons.max(rc.consistency);
            }
            Err(e) => return fail("R", e),
        }
    }
    let ok = unit <= UNITARITY && cons <= UNITARITY;
    (ok, format!("10 points, unitarity {unit:.2e}, consistency {cons:.2e}, both <= {UNITARITY:e}"))
}

/// Random rational edge and tail data with symmetric `V`.
pub fn synthetic_data(n: usize, g: u32, seed: u64) -> EdgeTailData<Q> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = || Q::new(rng.gen_range(-9..=9), rng.gen_range(1..=5));
    let cutoff = 3 * g - 3;
    let kmax = 3 * g - 1;
    let sqrt_delta: Vec<Q> = (0..n).map(|i| Q::new(i as i64 + 2, 3)).collect();
    let delta = sqrt_delta.iter().map(|s| s.clone() * s.clone()).collect();
    let c = cutoff as usize;
    let mut v = vec![vec![vec![vec![Q::zero(); c + 1]; c + 1]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..=c {
                for l in 0..=(c - k) {
                    if (i, k) <= (j, l) {
                        let x = q();
                        v[i][j][k][l] = x.clone();
                        v[j][i][l][k] = x;
                    }
                }
            }
        }
    }
    let t = (0..n).map(|_| (0..=kmax as usize).map(|k| if k < 2 { Q::zero() } else { q() }).collect()).collect();
    EdgeTailData { cutoff, v, t, delta, sqrt_delta }
}

fn a3_point(rng: &mut ChaCha8Rng) -> Vec<Cx> {
    vec![
        Cx::from_f64(rng.gen_range(-0.5..0.5)),
        Cx::from_f64(rng.gen_range(0.3..1.0)),
        Cx::from_f64(rng.gen_range(0.5..1.5)),
    ]
}

fn oracle_check() -> Outcome {
    let mut exact = 0;
    for g in 2..=3u32 {
        for n in 1..=3usize {
            let data = synthetic_data(n, g, 500 + 10 * g as u64 + n as u64);
            let sum = graph_sum(&data, g).map(|x| x.0);
            let oracle = wick_oracle(&data, g);
            match (sum, oracle) {
                (Ok(a), Ok(b)) if a == b => exact += 1,
                (Ok(a), Ok(b)) => return (false, format!("exact g={g} N={n}: {a} vs {b}")),
                (Err(e), _) | (_, Err(e)) => return fail("exact", e),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let models: Vec<(FrobeniusModel, Vec<Cx>)> = vec![
        (FrobeniusModel::point(), vec![Cx::from_f64(0.4)]),
        (two_primary((1, 2)), sample_point(&mut rng)),
        (two_primary((1, 1)), sample_point(&mut rng)),
        (FrobeniusModel::a3(), a3_point(&mut rng)),
    ];
    for g in 2..=3u32 {
        for (m, p) in &models {
            let r = match genus_potential(m, p, g, &GenusOptions::default()) {
                Ok(r) => r,
                Err(e) => return fail(&format!("{} g={g}", m.name), e),
            };
            let oracle = match wick_oracle(&r.data, g) {
                Ok(o) => o,
                Err(e) => return fail("oracle", e),
            };
            let scale = r.breakdown.iter().map(|(_, v)| v.magnitude()).fold(r.value.magnitude(), f64::max).max(1e-300);
            worst = worst.max((r.value.clone() - &oracle).magnitude() / scale);
        }
    }
    let ok = worst <= ORACLE_REL;
    (ok, format!("{exact}/6 exact rational cases equal, float rel {worst:.2e} <= {ORACLE_REL:e} over N = 1, 2, 3"))
}

fn lemma_check() -> Outcome {
    match verify_lemma(table(), 2, 4, 2) {
        Ok(rep) => {
            let coeff = rep.genus_one_s1_q0 == Q::new(1, 24);
            let ok = rep.mismatches.is_empty() && coeff && rep.flows_commute;
            (
                ok,
                format!(
                    "{} coefficients compared, {} mismatches, s_1 Q_0 coefficient {}, flows commute: {}",
                    rep.compared,
                    rep.mismatches.len(),
                    rep.genus_one_s1_q0,
                    rep.flows_commute
                ),
            )
        }
        Err(e) => fail("lemma", e),
    }
}

fn closedness_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let h = Cx::from_f64(CLOSEDNESS_STEP);
    let mut worst = 0.0f64;
    for d in DIMENSIONS {
        for _ in 0..2 {
            let p = sample_point(&mut rng);
            match closedness_residual(&two_primary(d), &p, &h, &GenusOptions::default()) {
                Ok(r) => worst = worst.max(r),
                Err(e) => return fail("genus 1", e),
            }
        }
    }
    // on the two-primary family the form only involves t^1; A3 exercises genuinely mixed partials
    let mut worst_a3 = 0.0f64;
    for _ in 0..2 {
        let p = a3_point(&mut rng);
        match closedness_residual(&FrobeniusModel::a3(), &p, &h, &GenusOptions::default()) {
            Ok(r) => worst_a3 = worst_a3.max(r),
            Err(e) => return fail("genus 1", e),
        }
    }
    let pt = match genus1_form_at(&FrobeniusModel::point(), &[Cx::from_f64(0.3)], &GenusOptions::default()) {
        Ok(w) => w[0].magnitude(),
        Err(e) => return fail("pt", e),
    };
    let ok = worst <= CLOSEDNESS && worst_a3 <= CLOSEDNESS && pt == 0.0;
    (ok, format!("mixed residual {worst:.2e} two-primary, {worst_a3:.2e} A3, <= {CLOSEDNESS:e} at step {CLOSEDNESS_STEP:e}, pt form {pt:e}"))
}

fn random_tau(rng: &mut ChaCha8Rng, n: usize, kmax: usize, size: f64) -> CurvePoint {
    CurvePoint { t: (0..=kmax).map(|_| (0..n).map(|_| Cx::from_f64(rng.gen_range(-size..size))).collect()).collect() }
}

/// Base point with exact exponentials: the exponential family sits at `t^1 = 0`.
fn descendent_base(d: (i64, i64)) -> Vec<Rational> {
    if d == (1, 1) {
        vec![rational(3, 10), Rational::new()]
    } else {
        vec![rational(3, 10), rational(17, 10)]
    }
}

/// Worst residuals of the string, dilaton, two-point and recursion identities at `tau`.
pub fn genus0_identities(model: &FrobeniusModel, calib: &Calibration, tau: &CurvePoint) -> Result<[f64; 4], String> {
    let n = model.dim();
    let kmax = tau.kmax();
    let unit = model.unit_index;
    let g0 = genus0_descendents(calib, tau).map_err(|e| e.to_string())?;
    let metric: Matrix<Cx> = model.metric.map(crate::scalar::to_cx);
    let ginv: Matrix<Cx> = model.metric_inv.map(crate::scalar::to_cx);

    let mut string = Cx::zero();
    let t0 = metric.mul_vec(&tau.t[0]);
    for a in 0..n {
        string += tau.t[0][a].clone() * &t0[a];
    }
    string = string * Cx::from_ratio(1, 2);
    for k in 0..kmax {
        for a in 0..n {
            string += tau.t[k + 1][a].clone() * &g0.grad[k][a];
        }
    }
    let string_res = (g0.grad[0][unit].clone() - &string).magnitude();

    let mut dil = -(g0.value.clone() * Cx::from_int(2));
    for k in 0..=kmax {
        for a in 0..n {
            dil += tau.t[k][a].clone() * &g0.grad[k][a];
        }
    }
    let dil_res = (g0.grad[1][unit].clone() - &dil).magnitude();

    let h = Cx::from_f64(1e-12);
    let shifted = |k: usize, a: usize, s: i64| tau.moved(&CurvePoint::basis(n, kmax, k, a), &(h.clone() * Cx::from_int(s)));
    // second derivatives of F^0 by differentiating the gradient
    let mut two_res = 0.0f64;
    for l in 0..=kmax {
        for b in 0..n {
            let grads: Vec<Vec<Vec<Cx>>> = [1, -1, 2, -2]
                .iter()
                .map(|&s| genus0_descendents(calib, &shifted(l, b, s)).map(|x| x.grad).map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            for m in 0..=kmax {
                for a in 0..n {
                    let fd = (Cx::from_int(8) * (grads[0][m][a].clone() - &grads[1][m][a]) - (grads[2][m][a].clone() - &grads[3][m][a]))
                        / (Cx::from_int(12) * &h);
                    two_res = two_res.max((fd - &g0.w[m][l][(a, b)]).magnitude());
                }
            }
        }
    }
    // d_{k+1,a} d_b d_c F = d_{k,a} d_mu F g^{mu nu} d_nu d_b d_c F
    let mut trr = 0.0f64;
    for c in 0..n {
        let ws: Vec<Vec<Vec<Matrix<Cx>>>> = [1, -1, 2, -2]
            .iter()
            .map(|&s| genus0_descendents(calib, &shifted(0, c, s)).map(|x| x.w).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let dw = |m: usize, a: usize, b: usize| -> Cx {
            (Cx::from_int(8) * (ws[0][m][0][(a, b)].clone() - &ws[1][m][0][(a, b)])
                - (ws[2][m][0][(a, b)].clone() - &ws[3][m][0][(a, b)]))
                / (Cx::from_int(12) * &h)
        };
        for k in 0..kmax {
            for a in 0..n {
                for b in 0..n {
                    let mut rhs = Cx::zero();
                    for mu in 0..n {
                        for nu in 0..n {
                            rhs += g0.w[k][0][(a, mu)].clone() * &ginv[(mu, nu)] * dw(0, nu, b);
                        }
                    }
                    trr = trr.max((dw(k + 1, a, b) - &rhs).magnitude());
                }
            }
        }
    }
    Ok([string_res, dil_res, two_res, trr])
}

fn descendent_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let pt = FrobeniusModel::point();
    let calib = match compute_calibration(&pt, &[Rational::new()], 11) {
        Ok(c) => c,
        Err(e) => return fail("calibration", e),
    };
    let mut worst_a = 0.0f64;
    for _ in 0..20 {
        let tau = random_tau(&mut rng, 1, 5, 0.1);
        let val = match descendent_potential(&pt, &calib, &tau, 2, &GenusOptions::default()) {
            Ok((v, _)) => v,
            Err(e) => return fail("pt F2", e),
        };
        let oracle = point_genus_oracle(table(), &tau, 2, 1e-35);
        worst_a = worst_a.max(rel(&val, &oracle));
    }

    let mut worst_b = 0.0f64;
    for d in DIMENSIONS {
        let m = two_primary(d);
        let c = match compute_calibration(&m, &descendent_base(d), 3) {
            Ok(c) => c,
            Err(e) => return fail("calibration", e),
        };
        let tau = random_tau(&mut rng, 2, 3, 0.05);
        let dir = random_tau(&mut rng, 2, 3, 1.0);
        match genus1_descendent(&m, &c, &tau, &dir, &Cx::from_f64(1e-12), &GenusOptions::default()) {
            Ok(chk) => worst_b = worst_b.max(rel(&chk.lhs, &chk.rhs)).max(chk.det_residual),
            Err(e) => return fail("genus 1", e),
        }
    }

    let mut worst_c = [0.0f64; 4];
    let cases: Vec<(FrobeniusModel, Vec<Rational>)> =
        vec![(pt.clone(), vec![Rational::new()]), (two_primary((1, 2)), descendent_base((1, 2))), (two_primary((1, 1)), descendent_base((1, 1)))];
    for (m, base) in &cases {
        let c = match compute_calibration(m, base, 7) {
            Ok(c) => c,
            Err(e) => return fail("calibration", e),
        };
        for _ in 0..2 {
            let tau = random_tau(&mut rng, m.dim(), 3, 0.05);
            match genus0_identities(m, &c, &tau) {
                Ok(r) => {
                    for i in 0..4 {
                        worst_c[i] = worst_c[i].max(r[i]);
                    }
                }
                Err(e) => return fail("genus 0", e),
            }
        }
    }
    let worst_c_all = worst_c.iter().cloned().fold(0.0, f64::max);
    let ok = worst_a <= POINT_DESCENDENT && worst_b <= GENUS_ONE_DESCENDENT && worst_c_all <= GENUS_ZERO_IDENTITIES;
    (
        ok,
        format!(
            "(a) pt F2 vs intersection sum rel {worst_a:.2e} <= {POINT_DESCENDENT:e}; (b) genus-1 identity {worst_b:.2e} <= {GENUS_ONE_DESCENDENT:e}; (c) string {:.1e} dilaton {:.1e} two-point {:.1e} TRR {:.1e} <= {GENUS_ZERO_IDENTITIES:e}",
            worst_c[0], worst_c[1], worst_c[2], worst_c[3]
        ),
    )
}

fn invariance_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = 0.0f64;
    let variants = |n: usize| -> Vec<FrameOptions> {
        let mut out = Vec::new();
        let perms: Vec<Vec<usize>> = if n == 2 { vec![vec![1, 0]] } else { vec![vec![1, 0, 2], vec![2, 0, 1], vec![0, 2, 1]] };
        for p in perms {
            out.push(FrameOptions { permutation: Some(p), ..Default::default() });
        }
        for i in 0..n {
            out.push(FrameOptions { flips: vec![i], ..Default::default() });
        }
        out.push(FrameOptions { flips: (0..n).collect(), permutation: Some((0..n).rev().collect()), ..Default::default() });
        out
    };
    let models: Vec<(FrobeniusModel, Vec<Cx>, Vec<Rational>)> = vec![
        (two_primary((1, 2)), sample_point(&mut rng), descendent_base((1, 2))),
        (two_primary((5, 3)), sample_point(&mut rng), descendent_base((5, 3))),
        (FrobeniusModel::a3(), a3_point(&mut rng), vec![Rational::new(), rational(1, 2), Rational::from(1)]),
    ];
    for (m, p, base) in &models {
        let (reference, scale) = match genus_potential(m, p, 2, &GenusOptions::default()) {
            Ok(r) => {
                // F^2 vanishes identically on some members; compare against the largest graph term
                let s = r.breakdown.iter().map(|(_, v)| v.magnitude()).fold(r.value.magnitude(), f64::max);
                (r.value, s)
            }
            Err(e) => return fail("genus 2", e),
        };
        let calib = match compute_calibration(m, base, 2) {
            Ok(c) => c,
            Err(e) => return fail("calibration", e),
        };
        let tau = random_tau(&mut rng, m.dim(), 2, 0.05);
        let desc_ref = match descendent_potential(m, &calib, &tau, 2, &GenusOptions::default()) {
            Ok((v, _)) => v,
            Err(e) => return fail("descendent", e),
        };
        for frame in variants(m.dim()) {
            let opts = GenusOptions { mode: None, frame };
            match genus_potential(m, p, 2, &opts) {
                Ok(r) => worst = worst.max((r.value - &reference).magnitude() / scale),
                Err(e) => return fail("genus 2 variant", e),
            }
            match descendent_potential(m, &calib, &tau, 2, &opts) {
                Ok((v, _)) => worst = worst.max(rel(&v, &desc_ref)),
                Err(e) => return fail("descendent variant", e),
            }
        }
    }
    // twist round trip on exact data
    let mut round_trip = true;
    for seed in 0..3u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut q = || Q::new(r.gen_range(-7..=7), r.gen_range(1..=4));
        let n = 3;
        let series = RSeries {
            r: (0..6).map(|k| if k == 0 { Matrix::identity(n) } else { Matrix::from_rows((0..n).map(|_| (0..n).map(|_| q()).collect()).collect()) }).collect(),
        };
        let a: Vec<Vec<Q>> = (0..3).map(|_| (0..n).map(|_| q()).collect()).collect();
        let neg: Vec<Vec<Q>> = a.iter().map(|row| row.iter().map(|x| -x.clone()).collect()).collect();
        round_trip &= series.twist(&a).twist(&neg) == series;
    }
    let ok = worst <= INVARIANCE_REL && round_trip;
    (ok, format!("F2 and descendent F2 rel {worst:.2e} <= {INVARIANCE_REL:e} over permutations and flips; twist round trip exact: {round_trip}"))
}
