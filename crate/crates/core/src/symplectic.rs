//! Standard-subspace machinery on the full phase space: cutting projection,
//! μ-adjoints, spectral calculus of μ-self-adjoint operators and the modular
//! objects `S`, `J`, `Δ`, `ln Δ` built from `A = 1 − P + IPI`.

use nalgebra::{DMatrix, SVD};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::GaussianState;
use crate::linalg::{self, arcoth, principal, spd_sqrt_pair, SymEig};
use crate::quadrature::{self, QuadResult, DEFAULT_MAX_EVALS};

/// Default distance of `c` from 1/2 below which a mode counts as unresolved.
pub const SING_TOL: f64 = 1e-10;
const SELF_ADJOINT_TOL: f64 = 1e-8;
const GRAM_COND_WARN: f64 = 1e12;
const RANK_TOL: f64 = 1e-10;
const SPECTRUM_GAP_TOL: f64 = 1e-9;

/// A sorted set of lattice sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Region {
    sites: Vec<usize>,
    n_sites: usize,
}

impl Region {
    pub fn new(sites: Vec<usize>, n_sites: usize) -> Result<Self> {
        for w in sites.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParameter(format!(
                    "region sites must be strictly increasing, got {:?}",
                    sites
                )));
            }
        }
        if let Some(&bad) = sites.iter().find(|&&s| s >= n_sites) {
            return Err(Error::IndexOutOfRange { index: bad, n_sites });
        }
        Ok(Region { sites, n_sites })
    }

    /// Sites `0..n/2`.
    pub fn half(n_sites: usize) -> Self {
        Region { sites: (0..n_sites / 2).collect(), n_sites }
    }

    pub fn interval(start: usize, length: usize, n_sites: usize) -> Result<Self> {
        if start + length > n_sites {
            return Err(Error::IndexOutOfRange { index: start + length - 1, n_sites });
        }
        Ok(Region { sites: (start..start + length).collect(), n_sites })
    }

    pub fn all(n_sites: usize) -> Self {
        Region { sites: (0..n_sites).collect(), n_sites }
    }

    pub fn complement(&self) -> Region {
        let sites = (0..self.n_sites).filter(|s| self.sites.binary_search(s).is_err()).collect();
        Region { sites, n_sites: self.n_sites }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn is_proper(&self) -> bool {
        !self.sites.is_empty() && self.sites.len() < self.n_sites
    }

    /// Phase-space indices: region sites in the φ block, then in the π block.
    pub fn phase_indices(&self) -> Vec<usize> {
        self.sites.iter().copied().chain(self.sites.iter().map(|s| s + self.n_sites)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CuttingProjection {
    pub diag_mask: DMatrix<f64>,
}

pub fn cutting_projection(region: &Region, n_sites: usize) -> Result<CuttingProjection> {
    if let Some(&bad) = region.sites().iter().find(|&&s| s >= n_sites) {
        return Err(Error::IndexOutOfRange { index: bad, n_sites });
    }
    let mut m = DMatrix::zeros(2 * n_sites, 2 * n_sites);
    for &s in region.sites() {
        m[(s, s)] = 1.0;
        m[(s + n_sites, s + n_sites)] = 1.0;
    }
    Ok(CuttingProjection { diag_mask: m })
}

/// The μ Gram matrix together with its square roots.
#[derive(Debug, Clone)]
pub struct MuMetric {
    pub gram: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub condition: f64,
}

impl MuMetric {
    pub fn new(gram: &DMatrix<f64>) -> Result<Self> {
        let (sqrt, inv_sqrt) = spd_sqrt_pair(gram)?;
        let condition = linalg::spd_condition(gram)?;
        Ok(MuMetric { gram: gram.clone(), sqrt, inv_sqrt, condition })
    }

    pub fn of(state: &GaussianState) -> Result<Self> {
        Self::new(&state.mu_gram)
    }

    pub fn self_adjointness_residual(&self, a: &DMatrix<f64>) -> f64 {
        let lhs = &self.gram * a;
        (&lhs - lhs.transpose()).norm() / (a.norm() * self.gram.norm()).max(f64::MIN_POSITIVE)
    }

    /// Eigendecomposition of a μ-self-adjoint operator through `Gram^{1/2} A Gram^{-1/2}`.
    pub fn eigen(&self, a: &DMatrix<f64>) -> Result<MuEigen> {
        if a.shape() != self.gram.shape() {
            return Err(Error::DimensionMismatch { expected: self.gram.nrows(), got: a.nrows() });
        }
        let residual = self.self_adjointness_residual(a);
        if !(residual <= SELF_ADJOINT_TOL) {
            return Err(Error::NotMuSelfAdjoint { residual });
        }
        let sym = &self.sqrt * a * &self.inv_sqrt;
        Ok(MuEigen { eig: SymEig::new(&sym)?, sqrt: self.sqrt.clone(), inv_sqrt: self.inv_sqrt.clone() })
    }
}

#[derive(Debug, Clone)]
pub struct MuEigen {
    pub eig: SymEig,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

impl MuEigen {
    pub fn values(&self) -> &[f64] {
        self.eig.values.as_slice()
    }

    pub fn apply_values(&self, d: &[f64]) -> DMatrix<f64> {
        &self.inv_sqrt * self.eig.reassemble(d) * &self.sqrt
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d: Vec<f64> = self.values().iter().map(|&x| f(x)).collect();
        self.apply_values(&d)
    }

    /// Eigenvectors in the original coordinates (columns).
    pub fn vectors(&self) -> DMatrix<f64> {
        &self.inv_sqrt * &self.eig.vectors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralDomain {
    Real,
    Positive,
    /// |λ| > 1, the domain of arcoth.
    AbsGreaterThanOne,
}

impl SpectralDomain {
    fn contains(self, x: f64) -> bool {
        match self {
            SpectralDomain::Real => x.is_finite(),
            SpectralDomain::Positive => x > 0.0,
            SpectralDomain::AbsGreaterThanOne => x.abs() > 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MuAdjoint {
    pub matrix: DMatrix<f64>,
    pub gram_condition: f64,
    pub warning: Option<String>,
}

/// `Gram^{-1} Aᵀ Gram`.
pub fn mu_adjoint(state: &GaussianState, a: &DMatrix<f64>) -> Result<MuAdjoint> {
    let dim = state.dim();
    if a.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: a.nrows() });
    }
    let gram = &state.mu_gram;
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mu Gram matrix is not positive definite".into()))?;
    let matrix = chol.solve(&(a.transpose() * gram));
    let gram_condition = linalg::spd_condition(gram)?;
    let warning = (gram_condition > GRAM_COND_WARN)
        .then(|| format!("mu Gram matrix is ill-conditioned (condition {gram_condition:e})"));
    Ok(MuAdjoint { matrix, gram_condition, warning })
}

pub fn mu_spectral_function(
    state: &GaussianState,
    a: &DMatrix<f64>,
    f: impl Fn(f64) -> f64,
    domain: SpectralDomain,
) -> Result<DMatrix<f64>> {
    let eig = MuMetric::of(state)?.eigen(a)?;
    let bad: Vec<f64> = eig.values().iter().copied().filter(|&x| !domain.contains(x)).collect();
    if !bad.is_empty() {
        return Err(Error::SpectrumOutOfDomain { eigenvalues: bad });
    }
    Ok(eig.apply(f))
}

/// `A = 1 − P + IPI`.
pub fn a_operator(state: &GaussianState, region: &Region) -> Result<DMatrix<f64>> {
    let p = cutting_projection(region, state.n_sites)?.diag_mask;
    let i = &state.i_mat;
    Ok(DMatrix::identity(state.dim(), state.dim()) - &p + i * &p * i)
}

#[derive(Debug, Clone, Serialize)]
pub struct StandardnessReport {
    pub min_abs_eigenvalue: f64,
    /// Eigenvalues with |λ| − 1 ≤ 2·SING_TOL, i.e. modes with c within SING_TOL of 1/2.
    pub degenerate_modes: usize,
    pub is_standard: bool,
}

pub fn standardness_check(state: &GaussianState, region: &Region) -> StandardnessReport {
    let failed = StandardnessReport { min_abs_eigenvalue: f64::NAN, degenerate_modes: 0, is_standard: false };
    let Ok(a) = a_operator(state, region) else { return failed };
    let Ok(eig) = MuMetric::of(state).and_then(|m| m.eigen(&a)) else { return failed };
    let min_abs = eig.values().iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let degenerate_modes = eig.values().iter().filter(|x| x.abs() - 1.0 <= 2.0 * SING_TOL).count();
    let is_standard =
        region.is_proper() && min_abs >= 1.0 - SPECTRUM_GAP_TOL && degenerate_modes == 0;
    StandardnessReport { min_abs_eigenvalue: min_abs, degenerate_modes, is_standard }
}

fn require_standard(state: &GaussianState, region: &Region) -> Result<StandardnessReport> {
    let rep = standardness_check(state, region);
    if rep.is_standard {
        return Ok(rep);
    }
    let why = if region.is_empty() {
        "region is empty".to_string()
    } else if !region.is_proper() {
        "region covers the whole lattice".to_string()
    } else {
        format!(
            "{} mode(s) of 1 - P + IPI at |lambda| = 1 (min |lambda| = {})",
            rep.degenerate_modes, rep.min_abs_eigenvalue
        )
    };
    Err(Error::NotStandard(why))
}

#[derive(Debug, Clone)]
pub struct ModularData {
    pub a: DMatrix<f64>,
    pub ln_delta: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub s_op: DMatrix<f64>,
    pub j_op: DMatrix<f64>,
    /// ‖exp(ln Δ) − Δ‖ / ‖Δ‖ with exp taken by Padé scaling and squaring.
    pub exp_consistency: f64,
    /// Relative residual of the h = f + Ig least-squares solve.
    pub decomposition_residual: f64,
    eig: MuEigen,
}

impl ModularData {
    /// `Δ^{x}` by spectral calculus on `A`.
    pub fn delta_power(&self, x: f64) -> DMatrix<f64> {
        self.eig.apply(|l| (2.0 * x * arcoth(l)).exp())
    }

    pub fn a_spectrum(&self) -> &[f64] {
        self.eig.values()
    }
}

pub fn modular_data_full(state: &GaussianState, region: &Region) -> Result<ModularData> {
    require_standard(state, region)?;
    let dim = state.dim();
    let id = DMatrix::<f64>::identity(dim, dim);
    let a = a_operator(state, region)?;
    let eig = MuMetric::of(state)?.eigen(&a)?;
    let bad: Vec<f64> = eig.values().iter().copied().filter(|x| x.abs() <= 1.0).collect();
    if !bad.is_empty() {
        return Err(Error::SpectrumOutOfDomain { eigenvalues: bad });
    }
    let ln_delta = eig.apply(|l| 2.0 * arcoth(l));
    let delta = (&a - &id)
        .lu()
        .solve(&(&a + &id))
        .ok_or_else(|| Error::Numerical("A - 1 is singular".into()))?;
    let exp_consistency = linalg::rel_diff(&ln_delta.clone().exp(), &delta);

    // h = f + I g with f, g supported in R:  B [f_R; g_R] = h,  B = [E_R | I E_R]
    let idx = region.phase_indices();
    let e_r = DMatrix::from_fn(dim, idx.len(), |r, c| if r == idx[c] { 1.0 } else { 0.0 });
    let ie_r = &state.i_mat * &e_r;
    let mut b = DMatrix::zeros(dim, 2 * idx.len());
    b.view_mut((0, 0), (dim, idx.len())).copy_from(&e_r);
    b.view_mut((0, idx.len()), (dim, idx.len())).copy_from(&ie_r);
    let sv = SVD::new(b.clone(), false, false).singular_values;
    let smax = sv.max();
    let smin = if b.ncols() < dim { 0.0 } else { sv.min() };
    if smin <= RANK_TOL * smax {
        return Err(Error::DecompositionSingular { min_singular: smin / smax });
    }
    let coef = b
        .clone()
        .col_piv_qr()
        .solve(&id)
        .ok_or_else(|| Error::DecompositionSingular { min_singular: smin / smax })?;
    let decomposition_residual = (&b * &coef - &id).norm() / (dim as f64).sqrt();
    let mut fmi = DMatrix::zeros(dim, 2 * idx.len());
    fmi.view_mut((0, 0), (dim, idx.len())).copy_from(&e_r);
    fmi.view_mut((0, idx.len()), (dim, idx.len())).copy_from(&(-ie_r));
    let s_op = fmi * coef;
    let delta_m_half = eig.apply(|l| (-arcoth(l)).exp());
    let j_op = &s_op * delta_m_half;

    Ok(ModularData { a, ln_delta, delta, s_op, j_op, exp_consistency, decomposition_residual, eig })
}

/// `2 ∫_0^1 A (A² − s²)^{-1} ds` (the substituted form of `2 ∫_1^∞ A (t²A² − 1)^{-1} dt`).
pub fn arcoth_resolvent_integral(a: &DMatrix<f64>, quad_tol: f64) -> Result<QuadResult> {
    let n = a.nrows();
    let a2 = a * a;
    let id = DMatrix::<f64>::identity(n, n);
    let mut r = quadrature::integrate(
        |s| {
            let m = &a2 - &id * (s * s);
            m.lu().solve(a).ok_or_else(|| Error::Numerical("singular resolvent".into()))
        },
        0.0,
        1.0,
        0.5 * quad_tol,
        DEFAULT_MAX_EVALS,
    )?;
    r.value *= 2.0;
    r.error *= 2.0;
    Ok(r)
}

pub fn lndelta_resolvent_quadrature(state: &GaussianState, region: &Region, quad_tol: f64) -> Result<QuadResult> {
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidParameter("quad_tol must be positive".into()));
    }
    require_standard(state, region)?;
    arcoth_resolvent_integral(&a_operator(state, region)?, quad_tol)
}

/// `2 arccot(K)` for `K = I` compressed to the phase indices of `sites`,
/// by spectral calculus of the μ-skew operator `K`.
fn arccot_block(state: &GaussianState, sites: &Region) -> Result<DMatrix<f64>> {
    let idx = sites.phase_indices();
    let k = principal(&state.i_mat, &idx);
    let gram = principal(&state.mu_gram, &idx);
    let (gs, gsi) = spd_sqrt_pair(&gram)?;
    let kt = &gs * &k * &gsi;
    let skew = linalg::symmetrize(&kt).norm() / kt.norm().max(f64::MIN_POSITIVE);
    if skew > SELF_ADJOINT_TOL {
        return Err(Error::Numerical(format!("compressed complex structure is not mu-skew ({skew:e})")));
    }
    let kt = (&kt - kt.transpose()) * 0.5;
    // arccot(K) = −K ψ(−K²),  ψ(w) = arcoth(√w)/√w
    let w = SymEig::new(&(-(&kt * &kt)))?;
    let bad: Vec<f64> = w.values.iter().copied().filter(|&v| v <= 1.0).map(|v| v.sqrt() / 2.0).collect();
    if !bad.is_empty() {
        return Err(Error::ModularDivergence { count: bad.len(), eigenvalues: bad });
    }
    let psi = w.apply(|v| arcoth(v.sqrt()) / v.sqrt());
    Ok(&gsi * (-(&kt * psi) * 2.0) * &gs)
}

/// `I ln Δ = 2 P arccot(PIP) P − 2 (1−P) arccot((1−P)I(1−P)) (1−P)`.
pub fn lndelta_arccot_split(state: &GaussianState, region: &Region) -> Result<DMatrix<f64>> {
    require_standard(state, region)?;
    let dim = state.dim();
    let mut out = DMatrix::zeros(dim, dim);
    for (part, sign) in [(region.clone(), 1.0), (region.complement(), -1.0)] {
        let block = arccot_block(state, &part)? * sign;
        let idx = part.phase_indices();
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                out[(i, j)] = block[(r, c)];
            }
        }
    }
    Ok(out)
}

/// Region block of `I ln Δ` by the arccot resolvent integral
/// `2 ∫_0^1 K (s² + K²)^{-1} ds` with `K` the compression of `I` to the region.
pub fn region_generator_quadrature(state: &GaussianState, region: &Region, quad_tol: f64) -> Result<QuadResult> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let idx = region.phase_indices();
    let k = principal(&state.i_mat, &idx);
    let k2 = &k * &k;
    let id = DMatrix::<f64>::identity(idx.len(), idx.len());
    let mut r = quadrature::integrate(
        |s| {
            let m = &k2 + &id * (s * s);
            m.lu().solve(&k).ok_or_else(|| Error::Numerical("singular resolvent".into()))
        },
        0.0,
        1.0,
        0.5 * quad_tol,
        DEFAULT_MAX_EVALS,
    )?;
    r.value *= 2.0;
    r.error *= 2.0;
    Ok(r)
}

/// Region block of `I ln Δ` from the full-space arcoth spectral calculus.
///
/// When the region is smaller than its complement, `A` has eigenvalues at
/// |λ| = 1 whose eigenvectors live on the complement (those directions are
/// not reached by `L + IL`). They are assigned 0, after checking that they
/// really carry no weight on the region.
pub fn region_generator_full_space(state: &GaussianState, region: &Region, sing_tol: f64) -> Result<DMatrix<f64>> {
    if !region.is_proper() {
        return Err(Error::NotStandard("region must be a proper non-empty subset".into()));
    }
    let a = a_operator(state, region)?;
    let eig = MuMetric::of(state)?.eigen(&a)?;
    let idx = region.phase_indices();
    let vecs = eig.vectors();
    let gram_r = principal(&state.mu_gram, &idx);
    let mut cluster = Vec::new();
    let d: Vec<f64> = eig
        .values()
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            if l.abs() - 1.0 > 2.0 * sing_tol {
                2.0 * arcoth(l)
            } else {
                cluster.push(k);
                0.0
            }
        })
        .collect();
    let leaked: Vec<f64> = cluster
        .iter()
        .filter(|&&k| {
            let v = vecs.column(k);
            let vr = nalgebra::DVector::from_fn(idx.len(), |i, _| v[idx[i]]);
            vr.dot(&(&gram_r * &vr)).max(0.0).sqrt() > 1e-6
        })
        .map(|&k| (eig.values()[k].abs() - 1.0) / 2.0)
        .collect();
    if !leaked.is_empty() {
        return Err(Error::ModularDivergence { count: leaked.len(), eigenvalues: leaked });
    }
    let i_ln = &state.i_mat * eig.apply_values(&d);
    Ok(principal(&i_ln, &idx))
}
