//! Scalar backends: exact rationals and fixed-precision complex floats.
//!
//! Every numeric coefficient in the crate is a [`Field`]. Two implementations
//! exist: [`Q`] (exact, closed arithmetic) and [`Cx`] (complex numbers whose
//! parts are MPFR floats at the process-wide working precision).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering as AtomicOrdering};

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Integer, Rational};

/// Default working precision in bits.
pub const DEFAULT_PRECISION: u32 = 256;
/// Default relative comparison tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-40;

static PRECISION: AtomicU32 = AtomicU32::new(DEFAULT_PRECISION);
static TOLERANCE_BITS: AtomicU64 = AtomicU64::new(0);

/// Working precision (bits) used for every newly created [`Cx`].
pub fn precision() -> u32 {
    PRECISION.load(AtomicOrdering::Relaxed)
}

/// Sets the working precision. Call once at start-up, before any values exist.
pub fn set_precision(bits: u32) {
    PRECISION.store(bits.max(53), AtomicOrdering::Relaxed);
}

/// Relative tolerance used by float-backend consistency checks.
pub fn tolerance() -> f64 {
    let bits = TOLERANCE_BITS.load(AtomicOrdering::Relaxed);
    if bits == 0 {
        DEFAULT_TOLERANCE
    } else {
        f64::from_bits(bits)
    }
}

pub fn set_tolerance(tol: f64) {
    assert!(tol > 0.0, "tolerance must be positive");
    TOLERANCE_BITS.store(tol.to_bits(), AtomicOrdering::Relaxed);
}

/// Number of decimal digits printed for floats: floor(precision * log10 2).
pub fn decimal_digits() -> usize {
    (precision() as f64 * std::f64::consts::LOG10_2).floor() as usize
}

/// Arithmetic shared by both backends.
pub trait Field:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + for<'a> AddAssign<&'a Self>
{
    /// True for the exact backend.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(q: &Rational) -> Self;

    fn from_int(n: i64) -> Self {
        Self::from_rational(&Rational::from(n))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_rational(&Rational::from((num, den)))
    }

    fn is_exactly_zero(&self) -> bool;

    /// Absolute value as an `f64` (saturating), used for residual reports.
    fn magnitude(&self) -> f64;

    fn inv(&self) -> Option<Self> {
        if self.is_exactly_zero() {
            None
        } else {
            Some(Self::one() / self)
        }
    }

    /// `exp(self)` when representable in this backend.
    fn exp_checked(&self) -> Option<Self>;

    /// Natural logarithm when representable in this backend.
    fn ln_checked(&self) -> Option<Self>;

    /// A square root (principal branch for floats; exact roots only for rationals).
    fn sqrt_checked(&self) -> Option<Self>;

    fn powi(&self, n: i64) -> Option<Self> {
        if n < 0 {
            return self.inv()?.powi(-n);
        }
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = n as u64;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * &base;
            }
        }
        Some(acc)
    }

    /// Negligible relative to `scale` at the backend's tolerance.
    fn negligible(&self, scale: f64) -> bool {
        if Self::EXACT {
            self.is_exactly_zero()
        } else {
            self.magnitude() <= tolerance() * scale.max(1.0)
        }
    }
}

// ---------------------------------------------------------------------------
// Exact rationals

/// Exact rational scalar.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Q(pub Rational);

impl Q {
    pub fn new(num: i64, den: i64) -> Self {
        Q(Rational::from((num, den)))
    }

    pub fn inner(&self) -> &Rational {
        &self.0
    }

    /// Parses `"p/q"` or `"p"`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let r = Rational::parse(s).ok()?;
        Some(Q(Rational::from(r)))
    }
}

impl fmt::Debug for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Field for Q {
    const EXACT: bool = true;

    fn zero() -> Self {
        Q(Rational::new())
    }
    fn one() -> Self {
        Q(Rational::from(1))
    }
    fn from_rational(q: &Rational) -> Self {
        Q(q.clone())
    }
    fn is_exactly_zero(&self) -> bool {
        self.0.cmp0() == Ordering::Equal
    }
    fn magnitude(&self) -> f64 {
        self.0.to_f64().abs()
    }
    fn exp_checked(&self) -> Option<Self> {
        self.is_exactly_zero().then(Self::one)
    }
    fn ln_checked(&self) -> Option<Self> {
        (self.0 == 1).then(Self::zero)
    }
    fn sqrt_checked(&self) -> Option<Self> {
        if self.0.cmp0() == Ordering::Less {
            return None;
        }
        let (n, d) = self.0.clone().into_numer_denom();
        let (rn, remn) = n.sqrt_rem(Integer::new());
        let (rd, remd) = d.sqrt_rem(Integer::new());
        (remn == 0 && remd == 0).then(|| Q(Rational::from((rn, rd))))
    }
}

macro_rules! q_binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident, $op:tt) => {
        impl $tr for Q {
            type Output = Q;
            fn $m(self, rhs: Q) -> Q {
                Q(self.0 $op rhs.0)
            }
        }
        impl<'a> $tr<&'a Q> for Q {
            type Output = Q;
            fn $m(self, rhs: &'a Q) -> Q {
                Q(self.0 $op &rhs.0)
            }
        }
        impl $atr for Q {
            fn $am(&mut self, rhs: Q) {
                let lhs = std::mem::take(&mut self.0);
                self.0 = lhs $op rhs.0;
            }
        }
    };
}

q_binop!(Add, add, AddAssign, add_assign, +);
q_binop!(Sub, sub, SubAssign, sub_assign, -);
q_binop!(Mul, mul, MulAssign, mul_assign, *);

impl Div for Q {
    type Output = Q;
    fn div(self, rhs: Q) -> Q {
        assert!(!rhs.is_exactly_zero(), "rational division by zero");
        Q(self.0 / rhs.0)
    }
}

impl<'a> Div<&'a Q> for Q {
    type Output = Q;
    fn div(self, rhs: &'a Q) -> Q {
        assert!(!rhs.is_exactly_zero(), "rational division by zero");
        Q(self.0 / &rhs.0)
    }
}

impl<'a> AddAssign<&'a Q> for Q {
    fn add_assign(&mut self, rhs: &'a Q) {
        self.0 += &rhs.0;
    }
}

impl Neg for Q {
    type Output = Q;
    fn neg(self) -> Q {
        Q(-self.0)
    }
}

// ---------------------------------------------------------------------------
// Complex floats

/// Complex number with MPFR parts at the working precision.
#[derive(Clone, PartialEq)]
pub struct Cx {
    pub re: Float,
    pub im: Float,
}

impl Cx {
    pub fn new(re: Float, im: Float) -> Self {
        Cx { re, im }
    }

    pub fn real(re: Float) -> Self {
        let im = Float::new(re.prec());
        Cx { re, im }
    }

    pub fn from_f64(x: f64) -> Self {
        Cx::real(Float::with_val(precision(), x))
    }

    pub fn from_parts_f64(re: f64, im: f64) -> Self {
        Cx::new(Float::with_val(precision(), re), Float::with_val(precision(), im))
    }

    pub fn i() -> Self {
        Cx::new(Float::new(precision()), Float::with_val(precision(), 1))
    }

    pub fn pi() -> Float {
        Float::with_val(precision(), Constant::Pi)
    }

    /// Parses a decimal real (`"0.25"`, `"1/3"`, `"-2e-5"`) or a complex
    /// written as `"a+bi"` / `"a-bi"` / `"bi"`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some(q) = Q::parse(s) {
            return Some(Cx::from_rational(&q.0));
        }
        if let Some(body) = s.strip_suffix('i') {
            // Split at the last sign that is not part of an exponent.
            let bytes = body.as_bytes();
            let mut split = None;
            for idx in (1..bytes.len()).rev() {
                let c = bytes[idx];
                if (c == b'+' || c == b'-') && !matches!(bytes[idx - 1], b'e' | b'E') {
                    split = Some(idx);
                    break;
                }
            }
            let (re_s, im_s) = match split {
                Some(idx) => (&body[..idx], &body[idx..]),
                None => ("0", body),
            };
            let im_s = match im_s {
                "+" | "" => "1",
                "-" => "-1",
                other => other,
            };
            let re = parse_real(re_s)?;
            let im = parse_real(im_s)?;
            return Some(Cx::new(re, im));
        }
        parse_real(s).map(Cx::real)
    }

    pub fn abs(&self) -> Float {
        Float::with_val(self.re.prec(), self.re.hypot_ref(&self.im))
    }

    pub fn arg(&self) -> Float {
        Float::with_val(self.re.prec(), self.im.atan2_ref(&self.re))
    }

    pub fn conj(&self) -> Self {
        Cx::new(self.re.clone(), -self.im.clone())
    }

    pub fn exp(&self) -> Self {
        let r = self.re.clone().exp();
        let (s, c) = self.im.clone().sin_cos(Float::new(self.im.prec()));
        Cx::new(r.clone() * c, r * s)
    }

    pub fn ln(&self) -> Self {
        Cx::new(self.abs().ln(), self.arg())
    }

    /// Principal square root (branch cut on the negative real axis).
    pub fn sqrt(&self) -> Self {
        let prec = self.re.prec();
        if self.im.is_zero() {
            if self.re.is_sign_negative() {
                return Cx::new(Float::new(prec), (-self.re.clone()).sqrt());
            }
            return Cx::real(self.re.clone().sqrt());
        }
        let m = self.abs();
        let re = ((m.clone() + &self.re) / 2u32).sqrt();
        let im_abs = ((m - &self.re) / 2u32).sqrt();
        let im = if self.im.is_sign_negative() { -im_abs } else { im_abs };
        Cx::new(re, im)
    }

    /// Root with nonnegative real part (ties: nonnegative imaginary part).
    pub fn sqrt_canonical(&self) -> Self {
        let r = self.sqrt();
        if r.re.is_sign_negative() && !r.re.is_zero() {
            -r
        } else if r.re.is_zero() && r.im.is_sign_negative() {
            -r
        } else {
            r
        }
    }

    pub fn to_f64_parts(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }

    pub fn is_real_within(&self, tol: f64) -> bool {
        self.im.to_f64().abs() <= tol * self.magnitude().max(1.0)
    }

    /// Lexicographic order on (re, im), used for canonical sorting.
    pub fn lex_cmp(&self, other: &Cx) -> Ordering {
        self.re
            .partial_cmp(&other.re)
            .unwrap_or(Ordering::Equal)
            .then(self.im.partial_cmp(&other.im).unwrap_or(Ordering::Equal))
    }

    pub fn pow_f(&self, e: &Float) -> Self {
        (self.ln() * Cx::real(e.clone())).exp()
    }
}

fn parse_real(s: &str) -> Option<Float> {
    let s = s.trim();
    if let Some(q) = Q::parse(s) {
        return Some(Float::with_val(precision(), &q.0));
    }
    let parsed = Float::parse(s).ok()?;
    Some(Float::with_val(precision(), parsed))
}

fn fmt_float(x: &Float, digits: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    x.to_string_radix(10, Some(digits))
}

impl fmt::Debug for Cx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Cx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = f.precision().unwrap_or_else(decimal_digits);
        let re = fmt_float(&self.re, digits);
        if self.im.is_zero() {
            return write!(f, "{re}");
        }
        let im = fmt_float(&self.im.clone().abs(), digits);
        let sign = if self.im.is_sign_negative() { '-' } else { '+' };
        if self.re.is_zero() {
            if sign == '-' {
                write!(f, "-{im}i")
            } else {
                write!(f, "{im}i")
            }
        } else {
            write!(f, "{re}{sign}{im}i")
        }
    }
}

impl Field for Cx {
    const EXACT: bool = false;

    fn zero() -> Self {
        Cx::new(Float::new(precision()), Float::new(precision()))
    }
    fn one() -> Self {
        Cx::real(Float::with_val(precision(), 1))
    }
    fn from_rational(q: &Rational) -> Self {
        Cx::real(Float::with_val(precision(), q))
    }
    fn is_exactly_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
    fn magnitude(&self) -> f64 {
        self.abs().to_f64()
    }
    fn exp_checked(&self) -> Option<Self> {
        Some(self.exp())
    }
    fn ln_checked(&self) -> Option<Self> {
        (!self.is_exactly_zero()).then(|| self.ln())
    }
    fn sqrt_checked(&self) -> Option<Self> {
        Some(self.sqrt())
    }
}

impl Add for Cx {
    type Output = Cx;
    fn add(self, rhs: Cx) -> Cx {
        Cx::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl<'a> Add<&'a Cx> for Cx {
    type Output = Cx;
    fn add(self, rhs: &'a Cx) -> Cx {
        Cx::new(self.re + &rhs.re, self.im + &rhs.im)
    }
}

impl Sub for Cx {
    type Output = Cx;
    fn sub(self, rhs: Cx) -> Cx {
        Cx::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl<'a> Sub<&'a Cx> for Cx {
    type Output = Cx;
    fn sub(self, rhs: &'a Cx) -> Cx {
        Cx::new(self.re - &rhs.re, self.im - &rhs.im)
    }
}

impl<'a> Mul<&'a Cx> for Cx {
    type Output = Cx;
    fn mul(self, rhs: &'a Cx) -> Cx {
        if self.im.is_zero() && rhs.im.is_zero() {
            let prec = self.re.prec();
            return Cx::new(self.re * &rhs.re, Float::new(prec));
        }
        let prec = self.re.prec();
        let ac = Float::with_val(prec, &self.re * &rhs.re);
        let bd = Float::with_val(prec, &self.im * &rhs.im);
        let ad = Float::with_val(prec, &self.re * &rhs.im);
        let bc = Float::with_val(prec, &self.im * &rhs.re);
        Cx::new(ac - bd, ad + bc)
    }
}

impl Mul for Cx {
    type Output = Cx;
    fn mul(self, rhs: Cx) -> Cx {
        self * &rhs
    }
}

impl<'a> Div<&'a Cx> for Cx {
    type Output = Cx;
    fn div(self, rhs: &'a Cx) -> Cx {
        if rhs.im.is_zero() {
            return Cx::new(self.re / &rhs.re, self.im / &rhs.re);
        }
        let prec = self.re.prec();
        let den = Float::with_val(prec, rhs.re.clone().square() + rhs.im.clone().square());
        let num = self * &rhs.conj();
        Cx::new(num.re / &den, num.im / &den)
    }
}

impl Div for Cx {
    type Output = Cx;
    fn div(self, rhs: Cx) -> Cx {
        self / &rhs
    }
}

impl Neg for Cx {
    type Output = Cx;
    fn neg(self) -> Cx {
        Cx::new(-self.re, -self.im)
    }
}

impl AddAssign for Cx {
    fn add_assign(&mut self, rhs: Cx) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl<'a> AddAssign<&'a Cx> for Cx {
    fn add_assign(&mut self, rhs: &'a Cx) {
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

impl SubAssign for Cx {
    fn sub_assign(&mut self, rhs: Cx) {
        self.re -= rhs.re;
        self.im -= rhs.im;
    }
}

impl MulAssign for Cx {
    fn mul_assign(&mut self, rhs: Cx) {
        let lhs = std::mem::replace(self, Cx::zero());
        *self = lhs * &rhs;
    }
}

/// Converts an exact value into the float backend.
pub fn to_cx(q: &Q) -> Cx {
    Cx::from_rational(&q.0)
}

/// Bernoulli numbers B_0..=B_n over the rationals (B_1 = -1/2).
pub fn bernoulli_numbers(n: usize) -> Vec<Q> {
    let mut b: Vec<Rational> = Vec::with_capacity(n + 1);
    b.push(Rational::from(1));
    for m in 1..=n {
        // sum_{k=0}^{m} C(m+1, k) B_k = 0
        let mut acc = Rational::new();
        for (k, bk) in b.iter().enumerate() {
            let binom = Integer::from(Integer::binomial_u(m as u32 + 1, k as u32));
            acc += Rational::from(binom) * bk;
        }
        b.push(-acc / Rational::from(m as u32 + 1));
    }
    b.into_iter().map(Q).collect()
}

pub fn factorial(n: u32) -> Integer {
    Integer::from(Integer::factorial(n))
}

/// Double factorial with (-1)!! = 1.
pub fn double_factorial(n: i64) -> Integer {
    let mut acc = Integer::from(1);
    let mut k = n;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    acc
}

/// `x^e` for a float `x` and integer `e`.
pub fn float_powi(x: &Float, e: i32) -> Float {
    Float::with_val(x.prec(), x.pow(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_small_values() {
        let b = bernoulli_numbers(8);
        assert_eq!(b[1], Q::new(-1, 2));
        assert_eq!(b[2], Q::new(1, 6));
        assert_eq!(b[4], Q::new(-1, 30));
        assert_eq!(b[6], Q::new(1, 42));
        assert_eq!(b[8], Q::new(-1, 30));
        assert!(b[3].is_exactly_zero());
    }

    #[test]
    fn complex_parse_and_print() {
        let z = Cx::parse("1.5-2i").unwrap();
        assert_eq!(z.to_f64_parts(), (1.5, -2.0));
        let w = Cx::parse("1/4").unwrap();
        assert_eq!(w.to_f64_parts(), (0.25, 0.0));
        let v = Cx::parse("-3e-2+1e-1i").unwrap();
        assert_eq!(v.to_f64_parts(), (-0.03, 0.1));
        assert_eq!(format!("{:.3}", Cx::parse("2i").unwrap()), "2.00i");
    }

    #[test]
    fn sqrt_canonical_branch() {
        let m = Cx::from_f64(-4.0);
        let r = m.sqrt_canonical();
        assert_eq!(r.to_f64_parts(), (0.0, 2.0));
        let z = Cx::from_parts_f64(-3.0, -4.0);
        let r = z.sqrt_canonical();
        let (a, b) = r.to_f64_parts();
        assert!((a - 1.0).abs() < 1e-15 && (b + 2.0).abs() < 1e-15);
        let back = r.clone() * &r;
        assert!((back - z).magnitude() < 1e-60);
    }

    #[test]
    fn exact_sqrt() {
        assert_eq!(Q::new(9, 4).sqrt_checked(), Some(Q::new(3, 2)));
        assert_eq!(Q::new(2, 1).sqrt_checked(), None);
    }

    #[test]
    fn complex_exp_log_roundtrip() {
        let z = Cx::from_parts_f64(0.3, -1.2);
        let back = z.exp().ln();
        assert!((back - &z).magnitude() < 1e-70);
    }
}
