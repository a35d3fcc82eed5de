//! Small dense matrices over a [`Field`], plus polynomial root finding for
//! characteristic polynomials.

use std::fmt;
use std::ops::{Index, IndexMut};

use rug::Float;

use crate::scalar::{precision, Cx, Field};

#[derive(Clone, PartialEq)]
pub struct Matrix<F: Field> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Field> fmt::Debug for Matrix<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[")?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:?} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<F: Field> Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F: Field> IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

impl<F: Field> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn diagonal(d: &[F]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, x) in d.iter().enumerate() {
            m[(i, i)] = x.clone();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> Vec<F> {
        (0..self.cols).map(|j| self[(i, j)].clone()).collect()
    }

    pub fn col(&self, j: usize) -> Vec<F> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn map<G: Field>(&self, f: impl Fn(&F) -> G) -> Matrix<G> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].clone() + &o[(i, j)])
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].clone() - &o[(i, j)])
    }

    pub fn scale(&self, c: &F) -> Self {
        self.map(|x| x.clone() * c)
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows);
        Self::from_fn(self.rows, o.cols, |i, j| {
            let mut acc = F::zero();
            for k in 0..self.cols {
                acc += self[(i, k)].clone() * &o[(k, j)];
            }
            acc
        })
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = F::zero();
                for k in 0..self.cols {
                    acc += self[(i, k)].clone() * &v[k];
                }
                acc
            })
            .collect()
    }

    pub fn trace(&self) -> F {
        let mut acc = F::zero();
        for i in 0..self.rows.min(self.cols) {
            acc += self[(i, i)].clone();
        }
        acc
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.magnitude()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)].clone() - &self[(j, i)]).negligible(self.max_abs())))
    }

    /// Gauss-Jordan inverse with partial pivoting by magnitude.
    pub fn inverse(&self) -> Option<Self> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs();
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[(x, c)].magnitude().total_cmp(&a[(y, c)].magnitude()))?;
            let piv = if F::EXACT { (c..n).find(|&r| !a[(r, c)].is_exactly_zero())? } else { p };
            if a[(piv, c)].negligible(scale) {
                return None;
            }
            if piv != c {
                for j in 0..n {
                    a.data.swap(piv * n + j, c * n + j);
                    inv.data.swap(piv * n + j, c * n + j);
                }
            }
            let d = a[(c, c)].inv()?;
            for j in 0..n {
                a[(c, j)] = a[(c, j)].clone() * &d;
                inv[(c, j)] = inv[(c, j)].clone() * &d;
            }
            for r in 0..n {
                if r == c || a[(r, c)].is_exactly_zero() {
                    continue;
                }
                let f = a[(r, c)].clone();
                for j in 0..n {
                    let t = a[(c, j)].clone() * &f;
                    a[(r, j)] -= t;
                    let t = inv[(c, j)].clone() * &f;
                    inv[(r, j)] -= t;
                }
            }
        }
        Some(inv)
    }

    /// Determinant by elimination.
    pub fn det(&self) -> F {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut det = F::one();
        for c in 0..n {
            let piv = if F::EXACT {
                match (c..n).find(|&r| !a[(r, c)].is_exactly_zero()) {
                    Some(p) => p,
                    None => return F::zero(),
                }
            } else {
                (c..n).max_by(|&x, &y| a[(x, c)].magnitude().total_cmp(&a[(y, c)].magnitude())).unwrap()
            };
            if a[(piv, c)].is_exactly_zero() {
                return F::zero();
            }
            if piv != c {
                for j in 0..n {
                    a.data.swap(piv * n + j, c * n + j);
                }
                det = -det;
            }
            let d = a[(c, c)].clone();
            det = det * &d;
            let dinv = d.inv().unwrap();
            for r in c + 1..n {
                let f = a[(r, c)].clone() * &dinv;
                for j in c..n {
                    let t = a[(c, j)].clone() * &f;
                    a[(r, j)] -= t;
                }
            }
        }
        det
    }

    /// Monic characteristic polynomial coefficients `c_0..c_n` (c_n = 1) of
    /// `det(x - A)` by the Faddeev-LeVerrier recursion.
    pub fn charpoly(&self) -> Vec<F> {
        let n = self.rows;
        let mut coeffs = vec![F::zero(); n + 1];
        coeffs[n] = F::one();
        let mut m = Self::zeros(n, n);
        for k in 1..=n {
            // M_k = A M_{k-1} + c_{n-k+1} I
            let mut next = self.mul(&m);
            for i in 0..n {
                next[(i, i)] += coeffs[n - k + 1].clone();
            }
            m = next;
            let am = self.mul(&m);
            coeffs[n - k] = -(am.trace() / F::from_int(k as i64));
        }
        coeffs
    }
}

/// All complex roots of the polynomial `sum c_k x^k` (leading coefficient
/// nonzero) by Aberth iteration followed by Newton polishing.
pub fn polynomial_roots(coeffs: &[Cx]) -> Option<Vec<Cx>> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Some(Vec::new());
    }
    let lead = coeffs[n].clone();
    let monic: Vec<Cx> = coeffs.iter().map(|c| c.clone() / &lead).collect();
    if n == 1 {
        return Some(vec![-monic[0].clone()]);
    }
    let eval = |x: &Cx| -> (Cx, Cx) {
        let mut p = Cx::zero();
        let mut dp = Cx::zero();
        for c in monic.iter().rev() {
            dp = dp * x + &p;
            p = p * x + c;
        }
        (p, dp)
    };
    // Cauchy radius for initial guesses on a circle
    let radius = 1.0 + monic[..n].iter().map(|c| c.magnitude()).fold(0.0, f64::max);
    let mut z: Vec<Cx> = (0..n)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64) + 0.4;
            Cx::from_parts_f64(radius * ang.cos(), radius * ang.sin())
        })
        .collect();
    let tol = Float::with_val(precision(), Float::i_exp(1, -(precision() as i32) + 8));
    for _ in 0..(precision() as usize * 4 + 200) {
        let mut max_step = 0.0f64;
        let mut converged = true;
        let mut next = z.clone();
        for i in 0..n {
            let (p, dp) = eval(&z[i]);
            if p.is_exactly_zero() {
                continue;
            }
            let ratio = p / &dp;
            let mut s = Cx::zero();
            for j in 0..n {
                if j != i {
                    let d = z[i].clone() - &z[j];
                    if let Some(inv) = d.inv() {
                        s += inv;
                    }
                }
            }
            let denom = Cx::one() - ratio.clone() * &s;
            let step = ratio / &denom;
            let mag = step.abs();
            let zmag = z[i].abs();
            if mag > Float::with_val(precision(), &tol * Float::with_val(precision(), &zmag + 1u32)) {
                converged = false;
            }
            max_step = max_step.max(step.magnitude());
            next[i] = z[i].clone() - step;
        }
        z = next;
        if converged {
            break;
        }
    }
    // Newton polish
    for root in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = eval(root);
            if let Some(inv) = dp.inv() {
                *root = root.clone() - p * &inv;
            }
        }
    }
    if z.iter().any(|r| !r.magnitude().is_finite()) {
        return None;
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Q;
    use proptest::prelude::*;

    #[test]
    fn inverse_and_det_exact() {
        let a = Matrix::from_rows(vec![
            vec![Q::new(2, 1), Q::new(1, 1), Q::zero()],
            vec![Q::new(1, 1), Q::new(3, 1), Q::new(1, 2)],
            vec![Q::zero(), Q::new(1, 2), Q::new(1, 1)],
        ]);
        let inv = a.inverse().unwrap();
        assert_eq!(a.mul(&inv), Matrix::identity(3));
        // 2*(3 - 1/4) - 1*(1) = 4.5
        assert_eq!(a.det(), Q::new(9, 2));
        let singular = Matrix::from_rows(vec![vec![Q::one(), Q::one()], vec![Q::one(), Q::one()]]);
        assert!(singular.inverse().is_none());
        assert_eq!(singular.det(), Q::zero());
    }

    #[test]
    fn charpoly_of_companion() {
        // companion matrix of x^3 - 6x^2 + 11x - 6
        let a = Matrix::from_rows(vec![
            vec![Q::zero(), Q::zero(), Q::new(6, 1)],
            vec![Q::one(), Q::zero(), Q::new(-11, 1)],
            vec![Q::zero(), Q::one(), Q::new(6, 1)],
        ]);
        assert_eq!(a.charpoly(), vec![Q::new(-6, 1), Q::new(11, 1), Q::new(-6, 1), Q::one()]);
    }

    #[test]
    fn roots_of_cubic_and_complex_pair() {
        let c: Vec<Cx> = [-6.0, 11.0, -6.0, 1.0].iter().map(|x| Cx::from_f64(*x)).collect();
        let mut r = polynomial_roots(&c).unwrap();
        r.sort_by(|a, b| a.lex_cmp(b));
        for (root, expect) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((root.clone() - Cx::from_f64(expect)).magnitude() < 1e-70);
        }
        // x^2 + 4
        let c = vec![Cx::from_f64(4.0), Cx::zero(), Cx::one()];
        let mut r = polynomial_roots(&c).unwrap();
        r.sort_by(|a, b| a.lex_cmp(b));
        assert!((r[0].clone() - Cx::from_parts_f64(0.0, -2.0)).magnitude() < 1e-70);
        assert!((r[1].clone() - Cx::from_parts_f64(0.0, 2.0)).magnitude() < 1e-70);
    }

    proptest! {
        #[test]
        fn float_inverse(entries in proptest::collection::vec(-5.0f64..5.0, 9)) {
            let a = Matrix::from_fn(3, 3, |i, j| Cx::from_f64(entries[3 * i + j] + if i == j { 12.0 } else { 0.0 }));
            let inv = a.inverse().unwrap();
            prop_assert!(a.mul(&inv).sub(&Matrix::identity(3)).max_abs() < 1e-60);
        }

        #[test]
        fn roots_reproduce_polynomial(rs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..5)) {
            // spread roots apart to avoid near-collisions
            let roots: Vec<Cx> = rs.iter().enumerate().map(|(k, (a, b))| Cx::from_parts_f64(a + 10.0 * k as f64, *b)).collect();
            let mut poly = vec![Cx::one()];
            for r in &roots {
                let mut next = vec![Cx::zero(); poly.len() + 1];
                for (i, c) in poly.iter().enumerate() {
                    next[i + 1] += c.clone();
                    next[i] -= c.clone() * r;
                }
                poly = next;
            }
            let found = polynomial_roots(&poly).unwrap();
            for r in &roots {
                let best = found.iter().map(|f| (f.clone() - r).magnitude()).fold(f64::INFINITY, f64::min);
                prop_assert!(best < 1e-60, "root {r} missed by {best}");
            }
        }
    }
}
