//! Small dense helpers on top of nalgebra: sorted symmetric eigendecompositions,
//! functions of symmetric matrices and block assembly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero when taking square roots.
pub const CLAMP_TOL: f64 = 1e-14;

/// Eigendecomposition of a symmetric matrix with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite entry in symmetric eigenproblem".into()));
        }
        let sym = symmetrize(m);
        let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(SymEig { values, vectors })
    }

    /// Q f(Λ) Qᵀ.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        self.reassemble(&d)
    }

    pub fn reassemble(&self, d: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= d[j];
        }
        &scaled * self.vectors.transpose()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Square root and inverse square root of a symmetric positive definite matrix.
pub fn spd_sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymEig::new(m)?;
    let lo = eig.min();
    if lo < CLAMP_TOL {
        return Err(Error::Numerical(format!(
            "matrix not positive definite (smallest eigenvalue {lo:e})"
        )));
    }
    Ok((eig.apply(f64::sqrt), eig.apply(|x| 1.0 / x.sqrt())))
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

/// ‖a − b‖_F / ‖b‖_F, falling back to the absolute difference when b vanishes.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s > 0.0 { d / s } else { d }
}

pub fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// [[a, b], [c, d]] for square blocks of equal size.
pub fn block2(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((0, n), (n, n)).copy_from(b);
    out.view_mut((n, 0), (n, n)).copy_from(c);
    out.view_mut((n, n), (n, n)).copy_from(d);
    out
}

/// The symplectic matrix [[0, 1], [−1, 0]] of size 2n.
pub fn epsilon(n: usize) -> DMatrix<f64> {
    let z = DMatrix::zeros(n, n);
    let e = DMatrix::identity(n, n);
    block2(&z, &e, &(-&e), &z)
}

/// 2-norm condition number of a symmetric positive definite matrix.
pub fn spd_condition(m: &DMatrix<f64>) -> Result<f64> {
    let eig = SymEig::new(m)?;
    let lo = eig.min();
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(eig.max() / lo)
}

/// arcoth(x) for |x| > 1, accurate when |x| is close to 1.
pub fn arcoth(x: f64) -> f64 {
    let a = x.abs();
    0.5 * (2.0 / (a - 1.0)).ln_1p() * x.signum()
}
