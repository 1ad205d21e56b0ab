//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Promote a real matrix to complex.
pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Euclidean norm of a complex vector.
pub fn norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖a − b‖₂ / ‖b‖₂.
pub fn relative_error(a: &CVector, b: &CVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let nb = norm(b);
    if nb == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(norm(&(a - b)) / nb)
}

/// Error-free product: `a*b = p + e` exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Error-free sum: `a+b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Accumulator carrying roughly twice the working precision.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accurate {
    hi: f64,
    lo: f64,
}

impl Accurate {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let (s, e) = two_sum(self.hi, v);
        self.hi = s;
        self.lo += e;
    }

    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        let (p, pe) = two_prod(a, b);
        self.add(p);
        self.lo += pe;
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Complex accumulator built on [`Accurate`].
#[derive(Debug, Clone, Copy, Default)]
pub struct AccurateComplex {
    re: Accurate,
    im: Accurate,
}

impl AccurateComplex {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn add_product(&mut self, a: Complex64, b: Complex64) {
        self.re.add_product(a.re, b.re);
        self.re.add_product(-a.im, b.im);
        self.im.add_product(a.re, b.im);
        self.im.add_product(a.im, b.re);
    }

    #[inline]
    pub fn add_real_product(&mut self, a: f64, b: Complex64) {
        self.re.add_product(a, b.re);
        self.im.add_product(a, b.im);
    }

    pub fn value(self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Linear operator whose action can be evaluated in extended precision.
pub trait AccurateOperator {
    fn dim(&self) -> usize;
    /// `b − A x` with compensated accumulation.
    fn residual(&self, x: &CVector, b: &CVector) -> CVector;
}

impl AccurateOperator for CMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn residual(&self, x: &CVector, b: &CVector) -> CVector {
        CVector::from_fn(self.nrows(), |i, _| {
            let mut acc = AccurateComplex::default();
            acc.add(b[i]);
            for j in 0..self.ncols() {
                let a = self[(i, j)];
                if a.re != 0.0 || a.im != 0.0 {
                    acc.add_product(-a, x[j]);
                }
            }
            acc.value()
        })
    }
}

/// `S + jωR − ω²T` applied term by term, so the result does not depend on the
/// rounding of the assembled sum.
pub struct SplitOperator<'a> {
    pub stiffness: &'a DMatrix<f64>,
    pub mass: &'a DMatrix<f64>,
    pub loss: &'a DMatrix<f64>,
    pub omega: f64,
}

impl AccurateOperator for SplitOperator<'_> {
    fn dim(&self) -> usize {
        self.stiffness.nrows()
    }

    fn residual(&self, x: &CVector, b: &CVector) -> CVector {
        let n = self.dim();
        let (w2h, w2l) = two_prod(self.omega, self.omega);
        CVector::from_fn(n, |i, _| {
            let mut acc = AccurateComplex::default();
            acc.add(b[i]);
            for j in 0..n {
                let s = self.stiffness[(i, j)];
                let t = self.mass[(i, j)];
                let r = self.loss[(i, j)];
                if s != 0.0 {
                    acc.add_real_product(-s, x[j]);
                }
                if t != 0.0 {
                    // ω² carried as an unevaluated sum of two doubles
                    let (th, tl) = two_prod(w2h, t);
                    acc.add_real_product(th, x[j]);
                    acc.add_real_product(tl + w2l * t, x[j]);
                }
                if r != 0.0 {
                    let (rh, rl) = two_prod(self.omega, r);
                    acc.add_product(Complex64::new(0.0, -rh), x[j]);
                    acc.add_product(Complex64::new(0.0, -rl), x[j]);
                }
            }
            acc.value()
        })
    }
}

/// Iterative refinement of `x` against `op` using an approximate inverse.
///
/// Residuals are accumulated in extended precision, so the refined solution is
/// accurate to working precision as long as `solve_approx` contracts.
/// Returns the number of correction steps taken.
pub fn refine<F>(op: &dyn AccurateOperator, b: &CVector, x: &mut CVector, solve_approx: F, max_iter: usize) -> usize
where
    F: Fn(&CVector) -> CVector,
{
    let mut prev = f64::INFINITY;
    for it in 0..max_iter {
        let r = op.residual(x, b);
        let dx = solve_approx(&r);
        let step = norm(&dx);
        *x += &dx;
        let size = norm(x);
        if step <= 1e-17 * size || step >= 0.5 * prev {
            return it + 1;
        }
        prev = step;
    }
    max_iter
}

/// Dense complex LU with partial pivoting.
pub struct ComplexLu {
    lu: nalgebra::linalg::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl ComplexLu {
    pub fn new(a: &CMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
        }
        let lu = a.clone().lu();
        if a.nrows() > 0 {
            let u = lu.u();
            let diag_max = u.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let diag_min = u.diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
            if !(diag_min > diag_max * 1e-15 * a.nrows() as f64) || !diag_min.is_finite() {
                return Err(Error::Singular);
            }
        }
        Ok(ComplexLu { lu })
    }

    pub fn solve(&self, b: &CVector) -> CVector {
        self.lu.solve(b).expect("factorization checked nonsingular")
    }

    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        self.lu.solve(b).expect("factorization checked nonsingular")
    }
}

/// Orthonormal basis of the column space of `m`, dropping directions with
/// singular value below `rel_tol · σ_max`. Returns the basis and the
/// singular values.
pub fn orthonormal_basis(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, Vec<f64>) {
    if m.ncols() == 0 || m.nrows() == 0 {
        return (DMatrix::zeros(m.nrows(), 0), Vec::new());
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = order.iter().copied().filter(|&i| svd.singular_values[i] > rel_tol * smax).collect();
    let basis = DMatrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])]);
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    (basis, sv)
}

/// Numerical rank with relative threshold.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    orthonormal_basis(m, rel_tol).0.ncols()
}

/// Largest principal angle (radians) between span(a) and span(b), where
/// both are given by orthonormal columns and `a` has no more columns than
/// `b`. Computed from sines for accuracy at small angles.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let residual = a - b * (b.transpose() * a);
    let s = residual.svd(false, false).singular_values;
    s.iter().cloned().fold(0.0, f64::max).min(1.0).asin()
}

/// Symmetrize in place: `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
