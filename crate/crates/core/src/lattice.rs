//! Harmonic chains and their Gaussian vacuum data.
//!
//! Phase-space vectors and operators use the ordering `[φ block; π block]`.
//! For a vacuum with dynamical matrix `V` the correlators are
//! `X = V^{-1/2}/2` and `P = V^{1/2}/2`, the complex structure is
//! `I = [[0, -2P], [2X, 0]]` and the Gram matrix of `μ` is `diag(X, P)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block2, SymEig, CLAMP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone)]
pub struct LatticeModel {
    pub n_sites: usize,
    pub mass: f64,
    pub coupling: f64,
    pub boundary: Boundary,
    /// `m²·1 + coupling·Laplacian`
    pub v: DMatrix<f64>,
}

pub fn build_harmonic_chain(
    n_sites: usize,
    mass: f64,
    coupling: f64,
    boundary: Boundary,
) -> Result<LatticeModel> {
    if n_sites < 1 {
        return Err(Error::InvalidParameter("n_sites must be at least 1".into()));
    }
    if !(coupling > 0.0) || !coupling.is_finite() {
        return Err(Error::InvalidParameter(format!("coupling must be positive, got {coupling}")));
    }
    if !(mass >= 0.0) || !mass.is_finite() {
        return Err(Error::InvalidParameter(format!("mass must be nonnegative, got {mass}")));
    }
    let n = n_sites;
    let mut lap = DMatrix::<f64>::zeros(n, n);
    match boundary {
        Boundary::Dirichlet => {
            for i in 0..n {
                lap[(i, i)] = 2.0;
                if i + 1 < n {
                    lap[(i, i + 1)] = -1.0;
                    lap[(i + 1, i)] = -1.0;
                }
            }
        }
        Boundary::Periodic => {
            // sum of bond terms (φ_i − φ_{i+1})²; a 1-site ring has no bond energy
            for i in 0..n {
                let j = (i + 1) % n;
                lap[(i, i)] += 1.0;
                lap[(j, j)] += 1.0;
                lap[(i, j)] -= 1.0;
                lap[(j, i)] -= 1.0;
            }
        }
    }
    let v = DMatrix::identity(n, n) * (mass * mass) + lap * coupling;
    let lo = SymEig::new(&v)?.min();
    if lo < CLAMP_TOL {
        return Err(Error::ZeroMode { min_eigenvalue: lo });
    }
    Ok(LatticeModel { n_sites, mass, coupling, boundary, v })
}

/// A pair `f = (f1, f2)` of field and momentum initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceVector {
    pub f1: DVector<f64>,
    pub f2: DVector<f64>,
}

impl PhaseSpaceVector {
    pub fn new(f1: DVector<f64>, f2: DVector<f64>) -> Result<Self> {
        if f1.len() != f2.len() {
            return Err(Error::DimensionMismatch { expected: f1.len(), got: f2.len() });
        }
        Ok(PhaseSpaceVector { f1, f2 })
    }

    pub fn from_stacked(v: &DVector<f64>) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(Error::DimensionMismatch { expected: v.len() + 1, got: v.len() });
        }
        let n = v.len() / 2;
        Ok(PhaseSpaceVector { f1: v.rows(0, n).into_owned(), f2: v.rows(n, n).into_owned() })
    }

    pub fn dim(&self) -> usize {
        self.f1.len()
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(2 * n, |i, _| if i < n { self.f1[i] } else { self.f2[i - n] })
    }
}

#[derive(Debug, Clone)]
pub struct GaussianState {
    pub n_sites: usize,
    pub x_full: DMatrix<f64>,
    pub p_full: DMatrix<f64>,
    pub i_mat: DMatrix<f64>,
    pub epsilon: DMatrix<f64>,
    pub mu_gram: DMatrix<f64>,
}

const STATE_TOL: f64 = 1e-10;

pub fn vacuum_state(model: &LatticeModel) -> Result<GaussianState> {
    let n = model.n_sites;
    let eig = SymEig::new(&model.v)?;
    if eig.min() < CLAMP_TOL {
        return Err(Error::ZeroMode { min_eigenvalue: eig.min() });
    }
    let x_full = linalg::symmetrize(&eig.apply(|w| 0.5 / w.sqrt()));
    let p_full = linalg::symmetrize(&eig.apply(|w| 0.5 * w.sqrt()));
    let z = DMatrix::zeros(n, n);
    let i_mat = block2(&z, &(&p_full * -2.0), &(&x_full * 2.0), &z);
    let epsilon = linalg::epsilon(n);
    let mu_gram = block2(&x_full, &z, &z, &p_full);
    let state = GaussianState { n_sites: n, x_full, p_full, i_mat, epsilon, mu_gram };

    let id = DMatrix::<f64>::identity(2 * n, 2 * n);
    let i_sq = (&state.i_mat * &state.i_mat + &id).norm();
    let purity = (&state.x_full * &state.p_full * 4.0 - DMatrix::identity(n, n)).norm();
    if i_sq > STATE_TOL || purity > STATE_TOL {
        return Err(Error::Numerical(format!(
            "vacuum invariants violated: |I^2+1| = {i_sq:e}, |4XP-1| = {purity:e}"
        )));
    }
    Ok(state)
}

impl GaussianState {
    pub fn dim(&self) -> usize {
        2 * self.n_sites
    }

    /// The complex two-point matrix `G = [[X, i/2], [−i/2, P]]` on the full lattice.
    pub fn two_point(&self) -> DMatrix<num_complex::Complex64> {
        two_point_matrix(&self.x_full, &self.p_full)
    }

    pub fn apply_i(&self, f: &PhaseSpaceVector) -> Result<PhaseSpaceVector> {
        self.check_dim(f)?;
        PhaseSpaceVector::from_stacked(&(&self.i_mat * f.stacked()))
    }

    fn check_dim(&self, f: &PhaseSpaceVector) -> Result<()> {
        if f.dim() != self.n_sites {
            return Err(Error::DimensionMismatch { expected: self.n_sites, got: f.dim() });
        }
        Ok(())
    }
}

pub fn two_point_matrix(x: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<num_complex::Complex64> {
    use num_complex::Complex64 as C;
    let n = x.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
        (true, true) => C::new(x[(r, c)], 0.0),
        (false, false) => C::new(p[(r - n, c - n)], 0.0),
        (true, false) if r == c - n => C::new(0.0, 0.5),
        (false, true) if r - n == c => C::new(0.0, -0.5),
        _ => C::new(0.0, 0.0),
    })
}

/// σ(f, g) = ½ Σ (f1 g2 − g1 f2).
pub fn symplectic_product(state: &GaussianState, f: &PhaseSpaceVector, g: &PhaseSpaceVector) -> Result<f64> {
    state.check_dim(f)?;
    state.check_dim(g)?;
    Ok(0.5 * (f.f1.dot(&g.f2) - g.f1.dot(&f.f2)))
}

/// μ(f, g) = fᵀ · diag(X, P) · g.
pub fn mu_product(state: &GaussianState, f: &PhaseSpaceVector, g: &PhaseSpaceVector) -> Result<f64> {
    state.check_dim(f)?;
    state.check_dim(g)?;
    Ok(f.stacked().dot(&(&state.mu_gram * g.stacked())))
}
