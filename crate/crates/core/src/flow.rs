//! Modular flow on region-supported data: `K(t) = exp(tL)` with `L = I ln Δ|_R`,
//! its complex-time continuation, and residual checks for the KMS identity,
//! the group law and symplectic invariance.
//!
//! With `K(t)` defined this way the one-particle KMS identity reads
//! `G_Rᵀ K(t + i) = G_R K(t)`, and the generator satisfies
//! `L = i log(G_R⁻¹ G_Rᵀ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{mn_kernels_with, restrict_correlators, KernelOptions, RegionKernels, RestrictedCorrelators};
use crate::lattice::GaussianState;
use crate::linalg;
use crate::symplectic::Region;

pub const EXP_METHOD: &str = "pade13-scaling-squaring";
pub const DEFAULT_T_GRID: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
const GENERATOR_TOL: f64 = 1e-7;
const BRANCH_CUT_TOL: f64 = 1e-8;
const BRANCH_CUT_WARN: f64 = 1e-6;
const OVERFLOW_NORM: f64 = 1e15;
const MAX_IMAG_T: f64 = 2.0;
const GROUP_SEED: u64 = 0x6b6d_735f_7375_6974;

#[derive(Debug, Clone)]
pub struct ModularFlow {
    pub l: DMatrix<f64>,
    pub region: Region,
    pub g_r: DMatrix<Complex64>,
    /// `i log(G_R⁻¹ G_Rᵀ)`, real part.
    pub l_check: DMatrix<f64>,
    pub l_check_imag: f64,
    /// ‖L − L_check‖ / ‖L‖
    pub generator_mismatch: f64,
    /// Eigenvalues of `G_R⁻¹ G_Rᵀ`, ascending. They come in reciprocal pairs.
    pub z_spectrum: Vec<f64>,
}

/// Eigen-data of `Z = G⁻¹ Gᵀ` for a Hermitian positive definite `G`.
struct PencilEig {
    /// Eigenvalues > 1, descending.
    big: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

fn pencil_eig(g: &DMatrix<Complex64>) -> Result<PencilEig> {
    let dim = g.nrows();
    let r = dim / 2;
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("G_R is not positive definite".into()))?;
    let l = chol.l();
    let gt = g.transpose();
    let y = l
        .solve_lower_triangular(&gt)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let h = l
        .solve_lower_triangular(&y.adjoint())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = &order[..r];
    let big: Vec<f64> = top.iter().map(|&k| eig.eigenvalues[k]).collect();
    if big.iter().any(|&x| !(x > 1.0)) {
        return Err(Error::Numerical(format!("expected {r} eigenvalues above 1, got {big:?}")));
    }
    let w = DMatrix::from_fn(dim, r, |i, j| eig.eigenvectors[(i, top[j])]);
    let v_big = l
        .adjoint()
        .solve_upper_triangular(&w)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let mut vectors = DMatrix::zeros(dim, dim);
    vectors.view_mut((0, 0), (dim, r)).copy_from(&v_big);
    vectors.view_mut((0, r), (dim, r)).copy_from(&v_big.map(|z| z.conj()));
    Ok(PencilEig { big, vectors })
}

/// `i log(G⁻¹ Gᵀ)` on the principal branch, with the maximal imaginary part
/// and the eigenvalues of `G⁻¹ Gᵀ`.
pub fn generator_from_two_point(g: &DMatrix<Complex64>) -> Result<(DMatrix<f64>, f64, Vec<f64>)> {
    let pe = pencil_eig(g)?;
    let r = pe.big.len();
    let logs: Vec<Complex64> = pe
        .big
        .iter()
        .map(|x| Complex64::new(x.ln(), 0.0))
        .chain(pe.big.iter().map(|x| Complex64::new(-x.ln(), 0.0)))
        .collect();
    let inv = pe
        .vectors
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("eigenvector matrix of G^-1 G^T is singular".into()))?;
    let mut scaled = pe.vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= logs[j];
    }
    let log_z = scaled * inv;
    let l = log_z * Complex64::i();
    let imag = l.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let mut spectrum: Vec<f64> = pe.big.iter().map(|x| 1.0 / x).chain(pe.big.iter().copied()).collect();
    spectrum.sort_by(f64::total_cmp);
    debug_assert_eq!(spectrum.len(), 2 * r);
    Ok((l.map(|z| z.re), imag, spectrum))
}

pub fn build_flow(kernels: &RegionKernels, rc: &RestrictedCorrelators) -> Result<ModularFlow> {
    let r = rc.dim();
    if kernels.l_block.nrows() != 2 * r {
        return Err(Error::DimensionMismatch { expected: 2 * r, got: kernels.l_block.nrows() });
    }
    let g_r = rc.two_point();
    let (l_check, l_check_imag, z_spectrum) = generator_from_two_point(&g_r)?;
    let smallest = z_spectrum[0];
    if smallest <= BRANCH_CUT_TOL {
        return Err(Error::BranchCutProximity { eigenvalue: smallest });
    }
    let l = kernels.l_block.clone();
    let generator_mismatch = linalg::rel_diff(&l_check, &l);
    if !(generator_mismatch <= GENERATOR_TOL) {
        return Err(Error::GeneratorMismatch { mismatch: generator_mismatch });
    }
    Ok(ModularFlow { l, region: rc.region.clone(), g_r, l_check, l_check_imag, generator_mismatch, z_spectrum })
}

impl ModularFlow {
    /// Same flow data with a replaced generator (used for negative controls).
    pub fn with_generator(&self, l: DMatrix<f64>) -> Self {
        ModularFlow { l, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }
}

fn check_overflow<T: nalgebra::ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<()> {
    let norm = m.norm();
    if !(norm <= OVERFLOW_NORM) {
        return Err(Error::Overflow { norm });
    }
    Ok(())
}

/// `K(t) = exp(tL)` for complex `t` with |Im t| ≤ 2.
pub fn flow_at(flow: &ModularFlow, t: Complex64) -> Result<DMatrix<Complex64>> {
    if !t.re.is_finite() || !t.im.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be finite, got {t}")));
    }
    if t.im.abs() > MAX_IMAG_T {
        return Err(Error::InvalidParameter(format!("|Im t| must be at most {MAX_IMAG_T}, got {}", t.im)));
    }
    if t.im == 0.0 {
        return Ok(flow_at_real(flow, t.re)?.map(|x| Complex64::new(x, 0.0)));
    }
    let k = (flow.l.map(|x| Complex64::new(x, 0.0)) * t).exp();
    check_overflow(&k)?;
    Ok(k)
}

pub fn flow_at_real(flow: &ModularFlow, t: f64) -> Result<DMatrix<f64>> {
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be finite, got {t}")));
    }
    let k = (&flow.l * t).exp();
    check_overflow(&k)?;
    Ok(k)
}

fn kms_residual_shifted(flow: &ModularFlow, t: f64, shift: f64) -> Result<f64> {
    let g = &flow.g_r;
    let k_shift = flow_at(flow, Complex64::new(t, shift))?;
    let k = flow_at(flow, Complex64::new(t, 0.0))?;
    let rhs = g * k;
    let lhs = g.transpose() * k_shift;
    Ok((lhs - &rhs).norm() / rhs.norm())
}

/// ‖G_Rᵀ K(t + i) − G_R K(t)‖ / ‖G_R K(t)‖.
pub fn kms_residual(flow: &ModularFlow, t: f64) -> Result<f64> {
    kms_residual_shifted(flow, t, 1.0)
}

/// The same identity with the boundary value taken at `t − i`.
pub fn kms_residual_lower(flow: &ModularFlow, t: f64) -> Result<f64> {
    kms_residual_shifted(flow, t, -1.0)
}

/// ‖K(t)ᵀ ε K(t) − ε‖ / ‖ε‖.
pub fn symplectic_invariance_residual(flow: &ModularFlow, t: f64) -> Result<f64> {
    let k = flow_at_real(flow, t)?;
    let eps = linalg::epsilon(flow.dim() / 2);
    Ok((k.transpose() * &eps * &k - &eps).norm() / eps.norm())
}

/// ‖K(s + t) − K(s) K(t)‖ / ‖K(s + t)‖.
pub fn group_residual(flow: &ModularFlow, s: f64, t: f64) -> Result<f64> {
    let kst = flow_at_real(flow, s + t)?;
    let prod = flow_at_real(flow, s)? * flow_at_real(flow, t)?;
    Ok((prod - &kst).norm() / kst.norm())
}

#[derive(Debug, Clone, Serialize)]
pub struct PointFailure {
    pub t: f64,
    pub check: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct KmsReport {
    pub t_values: Vec<f64>,
    pub kms_residuals: Vec<Option<f64>>,
    /// Partner times `s` drawn for the group-law check at each `t`.
    pub group_partners: Vec<f64>,
    pub group_residuals: Vec<Option<f64>>,
    pub symplectic_residuals: Vec<Option<f64>>,
    pub max_residual: f64,
    pub generator_mismatch: f64,
    pub exp_method: String,
    pub warnings: Vec<String>,
    pub failures: Vec<PointFailure>,
}

pub fn run_kms_suite(state: &GaussianState, region: &Region, t_grid: &[f64]) -> Result<KmsReport> {
    run_kms_suite_with(state, region, t_grid, &KernelOptions::default())
}

pub fn run_kms_suite_with(
    state: &GaussianState,
    region: &Region,
    t_grid: &[f64],
    opts: &KernelOptions,
) -> Result<KmsReport> {
    let rc = restrict_correlators(state, region)?;
    let kernels = mn_kernels_with(&rc, opts)?;
    let flow = build_flow(&kernels, &rc)?;
    Ok(kms_report(&flow, t_grid, &kernels))
}

pub fn kms_report(flow: &ModularFlow, t_grid: &[f64], kernels: &RegionKernels) -> KmsReport {
    let mut warnings = Vec::new();
    let near: Vec<f64> = kernels.c_minus_half.iter().copied().filter(|&d| d < BRANCH_CUT_WARN).collect();
    if !near.is_empty() || flow.z_spectrum[0] < BRANCH_CUT_WARN {
        warnings.push(format!(
            "BranchCutProximity: smallest eigenvalue of G^-1 G^T is {:e}; {} mode(s) with c - 1/2 < {BRANCH_CUT_WARN:e}",
            flow.z_spectrum[0],
            near.len()
        ));
    }
    if !kernels.clipped.is_empty() {
        warnings.push(format!("{} mode(s) clipped", kernels.clipped.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(GROUP_SEED);
    let group_partners: Vec<f64> = t_grid.iter().map(|_| rng.random_range(-2.0..=2.0)).collect();
    let mut failures = Vec::new();
    let mut record = |t: f64, check: &str, r: Result<f64>| match r {
        Ok(v) if v.is_finite() => Some(v),
        Ok(v) => {
            failures.push(PointFailure { t, check: check.into(), message: format!("non-finite residual {v}") });
            None
        }
        Err(e) => {
            failures.push(PointFailure { t, check: check.into(), message: e.to_string() });
            None
        }
    };
    let mut kms_residuals = Vec::with_capacity(t_grid.len());
    let mut group_residuals = Vec::with_capacity(t_grid.len());
    let mut symplectic_residuals = Vec::with_capacity(t_grid.len());
    for (&t, &s) in t_grid.iter().zip(&group_partners) {
        kms_residuals.push(record(t, "kms", kms_residual(flow, t)));
        group_residuals.push(record(t, "group", group_residual(flow, s, t)));
        symplectic_residuals.push(record(t, "symplectic", symplectic_invariance_residual(flow, t)));
    }
    let max_residual = kms_residuals
        .iter()
        .chain(&group_residuals)
        .chain(&symplectic_residuals)
        .flatten()
        .copied()
        .fold(0.0, f64::max);
    KmsReport {
        t_values: t_grid.to_vec(),
        kms_residuals,
        group_partners,
        group_residuals,
        symplectic_residuals,
        max_residual,
        generator_mismatch: flow.generator_mismatch,
        exp_method: EXP_METHOD.into(),
        warnings,
        failures,
    }
}

/// `d/dt K(t)` at `t = 0` by a central difference.
pub fn derivative_at_zero(flow: &ModularFlow, h: f64) -> Result<DMatrix<f64>> {
    Ok((flow_at_real(flow, h)? - flow_at_real(flow, -h)?) / (2.0 * h))
}

/// Random perturbation direction with unit Frobenius norm.
pub fn random_direction(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(dim * dim, |_, _| rng.random_range(-1.0..1.0));
    let m = DMatrix::from_column_slice(dim, dim, v.as_slice());
    let n = m.norm();
    m / n
}
