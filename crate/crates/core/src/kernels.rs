//! Region kernels: restricted correlators `X_R`, `P_R`, the operator
//! `C = √(X_R P_R)`, the kernels
//!
//! ```text
//! M = P_R (2C)^{-1} ln((2C+1)/(2C-1)),   N = (2C)^{-1} ln((2C+1)/(2C-1)) X_R
//! ```
//!
//! and the region generator `L = I ln Δ|_R = [[0, 2M], [-2N, 0]]`.
//!
//! Functions of the non-symmetric product `X_R P_R` go through the symmetric
//! matrix `Sym = X^{1/2} P X^{1/2}`: `f(XP) = X^{1/2} f(Sym) X^{-1/2}`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::GaussianState;
use crate::linalg::{self, arcoth, block2, principal, spd_sqrt_pair, SymEig};
use crate::symplectic::{Region, SING_TOL};

const POSITIVITY_TOL: f64 = 1e-10;
const X_COND_MAX: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct RestrictedCorrelators {
    pub region: Region,
    pub x_r: DMatrix<f64>,
    pub p_r: DMatrix<f64>,
    /// Smallest eigenvalue of `X_R P_R`.
    pub xp_min: f64,
}

impl RestrictedCorrelators {
    pub fn dim(&self) -> usize {
        self.x_r.nrows()
    }

    pub fn two_point(&self) -> DMatrix<Complex64> {
        crate::lattice::two_point_matrix(&self.x_r, &self.p_r)
    }
}

pub fn restrict_correlators(state: &GaussianState, region: &Region) -> Result<RestrictedCorrelators> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if region.n_sites() != state.n_sites {
        return Err(Error::DimensionMismatch { expected: state.n_sites, got: region.n_sites() });
    }
    let x_r = principal(&state.x_full, region.sites());
    let p_r = principal(&state.p_full, region.sites());
    let f = SymFactor::new(&x_r, &p_r)?;
    let xp_min = f.s.min();
    if xp_min < 0.25 - POSITIVITY_TOL {
        return Err(Error::PositivityViolation { min_eigenvalue: xp_min });
    }
    Ok(RestrictedCorrelators { region: region.clone(), x_r, p_r, xp_min })
}

/// `X^{1/2}`, `X^{-1/2}` and the eigendecomposition of `X^{1/2} P X^{1/2}`.
struct SymFactor {
    xh: DMatrix<f64>,
    xhi: DMatrix<f64>,
    s: SymEig,
}

impl SymFactor {
    fn new(x: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<Self> {
        let (xh, xhi) = spd_sqrt_pair(x)?;
        let s = SymEig::new(&(&xh * p * &xh))?;
        Ok(SymFactor { xh, xhi, s })
    }

    /// `X^{1/2} U diag(d) Uᵀ X^{-1/2}`.
    fn similar(&self, d: &[f64]) -> DMatrix<f64> {
        &self.xh * self.s.reassemble(d) * &self.xhi
    }

    fn c_values(&self) -> Vec<f64> {
        self.s.values.iter().map(|&s| s.max(0.0).sqrt()).collect()
    }

    /// `c − 1/2 = (s − 1/4)/(c + 1/2)`, without cancellation.
    fn deltas(&self) -> Vec<f64> {
        self.s.values.iter().map(|&s| (s - 0.25) / (s.max(0.0).sqrt() + 0.5)).collect()
    }
}

pub fn compute_c(rc: &RestrictedCorrelators) -> Result<DMatrix<f64>> {
    let cond = linalg::spd_condition(&rc.x_r)?;
    if cond > X_COND_MAX {
        return Err(Error::Numerical(format!("X_R is ill-conditioned (condition {cond:e})")));
    }
    let f = SymFactor::new(&rc.x_r, &rc.p_r)?;
    Ok(f.similar(&f.c_values()))
}

/// Symplectic spectrum of the region as `c_k − 1/2`, ascending.
pub fn c_minus_half(rc: &RestrictedCorrelators) -> Result<Vec<f64>> {
    Ok(SymFactor::new(&rc.x_r, &rc.p_r)?.deltas())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    pub sing_tol: f64,
    /// Raise `c` to `1/2 + clip` for modes closer to 1/2 than that, instead of failing.
    pub clip: Option<f64>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { sing_tol: SING_TOL, clip: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClippedMode {
    pub index: usize,
    pub c_minus_half: f64,
    pub clipped_to: f64,
}

#[derive(Debug, Clone)]
pub struct RegionKernels {
    pub region: Region,
    pub c: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub l_block: DMatrix<f64>,
    pub c_spectrum: Vec<f64>,
    pub c_minus_half: Vec<f64>,
    pub clipped: Vec<ClippedMode>,
}

pub fn mn_kernels(rc: &RestrictedCorrelators) -> Result<RegionKernels> {
    mn_kernels_with(rc, &KernelOptions::default())
}

pub fn mn_kernels_with(rc: &RestrictedCorrelators, opts: &KernelOptions) -> Result<RegionKernels> {
    let cond = linalg::spd_condition(&rc.x_r)?;
    if cond > X_COND_MAX {
        return Err(Error::Numerical(format!("X_R is ill-conditioned (condition {cond:e})")));
    }
    let fac = SymFactor::new(&rc.x_r, &rc.p_r)?;
    let c_spectrum = fac.c_values();
    let mut deltas = fac.deltas();
    let mut clipped = Vec::new();
    let mut divergent = Vec::new();
    for (k, d) in deltas.iter_mut().enumerate() {
        match opts.clip {
            Some(eps) if *d < eps => {
                clipped.push(ClippedMode { index: k, c_minus_half: *d, clipped_to: eps });
                *d = eps;
            }
            _ if *d <= opts.sing_tol => divergent.push(*d),
            _ => {}
        }
    }
    if !divergent.is_empty() {
        return Err(Error::ModularDivergence { count: divergent.len(), eigenvalues: divergent });
    }
    // ln((2c+1)/(2c-1)) / (2c) with c = 1/2 + δ
    let phi: Vec<f64> = deltas.iter().map(|&d| (1.0 / d).ln_1p() / (1.0 + 2.0 * d)).collect();
    let f_c = fac.similar(&phi);
    let m = &rc.p_r * &f_c;
    let n = &f_c * &rc.x_r;
    let z = DMatrix::zeros(rc.dim(), rc.dim());
    let l_block = block2(&z, &(&m * 2.0), &(&n * -2.0), &z);
    let c = fac.similar(&c_spectrum);
    Ok(RegionKernels {
        region: rc.region.clone(),
        c,
        m,
        n,
        l_block,
        c_spectrum,
        c_minus_half: deltas,
        clipped,
    })
}

/// The region generator as `−2 arccot(2εG|_R + i)`, with
/// `2εG|_R + i = [[0, 2P_R], [−2X_R, 0]]` real. Uses `arccot(T) = −T ψ(−T²)`
/// where `−T²` is block diagonal and `ψ` is evaluated through
/// `P^{1/2} X P^{1/2}`.
pub fn lndelta_region_via_g(rc: &RestrictedCorrelators) -> Result<DMatrix<f64>> {
    lndelta_region_via_g_with(rc, SING_TOL)
}

pub fn lndelta_region_via_g_with(rc: &RestrictedCorrelators, sing_tol: f64) -> Result<DMatrix<f64>> {
    let r = rc.dim();
    let (ph, phi) = spd_sqrt_pair(&rc.p_r)?;
    let s = SymEig::new(&(&ph * &rc.x_r * &ph))?;
    let deltas: Vec<f64> = s.values.iter().map(|&v| (v - 0.25) / (v.max(0.0).sqrt() + 0.5)).collect();
    let bad: Vec<f64> = deltas.iter().copied().filter(|&d| d <= sing_tol).collect();
    if !bad.is_empty() {
        return Err(Error::ModularDivergence { count: bad.len(), eigenvalues: bad });
    }
    // ψ(4 s) = arcoth(2√s) / (2√s)
    let psi: Vec<f64> = deltas.iter().map(|&d| 0.5 * (1.0 / d).ln_1p() / (1.0 + 2.0 * d)).collect();
    let psi_s = s.reassemble(&psi);
    // 4 X P = P^{-1/2} (4 P^{1/2} X P^{1/2}) P^{1/2},  4 P X = P^{1/2} (...) P^{-1/2}
    let psi_xp = &phi * &psi_s * &ph;
    let psi_px = &ph * &psi_s * &phi;
    let z = DMatrix::zeros(r, r);
    let t = block2(&z, &(&rc.p_r * 2.0), &(&rc.x_r * -2.0), &z);
    let psi_t = block2(&psi_px, &z, &z, &psi_xp);
    // −2 arccot(T) = 2 T ψ(−T²)
    Ok(t * psi_t * 2.0)
}

#[derive(Debug, Clone)]
pub struct ComplexRoute {
    pub l_block: DMatrix<f64>,
    pub max_imag: f64,
}

/// Same generator evaluated in complex arithmetic: builds `2εG|_R + i` from the
/// complex two-point matrix and applies `arccot` through the Hermitian
/// eigendecomposition of `i·Gram^{1/2} T Gram^{-1/2}`.
pub fn lndelta_region_via_g_complex(rc: &RestrictedCorrelators) -> Result<ComplexRoute> {
    let r = rc.dim();
    let g = rc.two_point();
    let eps = linalg::epsilon(r).map(|x| Complex64::new(x, 0.0));
    let id = DMatrix::<Complex64>::identity(2 * r, 2 * r);
    let t = &eps * &g * Complex64::new(2.0, 0.0) + id * Complex64::i();
    let z = DMatrix::zeros(r, r);
    let gram = block2(&rc.x_r, &z, &z, &rc.p_r);
    let (gs, gsi) = spd_sqrt_pair(&gram)?;
    let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let (gs_c, gsi_c) = (to_c(&gs), to_c(&gsi));
    let h = (&gs_c * &t * &gsi_c) * Complex64::i();
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    // T̃ = −i H, so arccot(T̃) has eigenvalues arccot(−i y) = i arcoth(y)
    let bad: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|y| (y.abs() - 1.0) / 2.0)
        .filter(|&d| d <= SING_TOL)
        .collect();
    if !bad.is_empty() {
        return Err(Error::ModularDivergence { count: bad.len(), eigenvalues: bad });
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::new(0.0, arcoth(eig.eigenvalues[j]));
    }
    let arccot = &scaled * u.adjoint();
    let l = &gsi_c * arccot * &gs_c * Complex64::new(-2.0, 0.0);
    let max_imag = l.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(ComplexRoute { l_block: l.map(|z| z.re), max_imag })
}

pub fn complement_kernels(state: &GaussianState, region: &Region) -> Result<RegionKernels> {
    complement_kernels_with(state, region, &KernelOptions::default())
}

pub fn complement_kernels_with(state: &GaussianState, region: &Region, opts: &KernelOptions) -> Result<RegionKernels> {
    let comp = region.complement();
    if comp.is_empty() {
        return Err(Error::EmptyRegion);
    }
    mn_kernels_with(&restrict_correlators(state, &comp)?, opts)
}

/// Σ_k (c+½) ln(c+½) − (c−½) ln(c−½), written in terms of δ = c − ½.
pub fn entropy_from_deltas(deltas: &[f64]) -> f64 {
    deltas
        .iter()
        .map(|&d| {
            let d = d.max(0.0);
            let tail = if d > 0.0 { d * d.ln() } else { 0.0 };
            (1.0 + d) * d.ln_1p() - tail
        })
        .sum()
}

pub fn entanglement_entropy(kernels: &RegionKernels) -> f64 {
    let deltas: Vec<f64> = kernels
        .clipped
        .iter()
        .fold(kernels.c_minus_half.clone(), |mut acc, m| {
            acc[m.index] = m.c_minus_half;
            acc
        });
    entropy_from_deltas(&deltas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_harmonic_chain, vacuum_state, Boundary};
    use crate::symplectic::{lndelta_arccot_split, region_generator_full_space};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state(n: usize, m: f64, bc: Boundary) -> GaussianState {
        vacuum_state(&build_harmonic_chain(n, m, 1.0, bc).unwrap()).unwrap()
    }

    fn scalar_rc(x: f64, p: f64) -> RestrictedCorrelators {
        RestrictedCorrelators {
            region: Region::all(1),
            x_r: DMatrix::from_element(1, 1, x),
            p_r: DMatrix::from_element(1, 1, p),
            xp_min: x * p,
        }
    }

    #[test]
    fn full_region_is_pure() {
        let s = state(5, 0.4, Boundary::Dirichlet);
        let rc = restrict_correlators(&s, &Region::all(5)).unwrap();
        assert!((rc.xp_min - 0.25).abs() < 1e-12);
        for d in c_minus_half(&rc).unwrap() {
            assert!(d.abs() < 1e-12);
        }
        assert!(matches!(mn_kernels(&rc), Err(Error::ModularDivergence { count: 5, .. })));
    }

    #[test]
    fn two_site_single_region() {
        let s = state(2, 1.0, Boundary::Dirichlet);
        let rc = restrict_correlators(&s, &Region::new(vec![0], 2).unwrap()).unwrap();
        // V = [[3,-1],[-1,3]]: eigenvalues 2, 4 with vectors (1,1)/√2, (1,-1)/√2
        let x = 0.25 * (1.0 / 2f64.sqrt() + 0.5);
        let p = 0.25 * (2f64.sqrt() + 2.0);
        assert_abs_diff_eq!(rc.x_r[(0, 0)], x, epsilon = 1e-15);
        assert_abs_diff_eq!(rc.p_r[(0, 0)], p, epsilon = 1e-15);
        assert!(x * p - 0.25 > 0.0);
        assert!(matches!(
            restrict_correlators(&s, &Region::new(vec![], 2).unwrap()),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn scalar_kernels() {
        let k = mn_kernels(&scalar_rc(1.0, 1.0)).unwrap();
        let h = 3f64.ln() / 2.0;
        assert_abs_diff_eq!(k.m[(0, 0)], h, epsilon = 1e-15);
        assert_abs_diff_eq!(k.n[(0, 0)], h, epsilon = 1e-15);
        assert_abs_diff_eq!(k.c[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.l_block[(0, 1)], 3f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.l_block[(1, 0)], -3f64.ln(), epsilon = 1e-15);
        let g = lndelta_region_via_g(&scalar_rc(1.0, 1.0)).unwrap();
        assert!((&g - &k.l_block).norm() < 1e-15);
        let cr = lndelta_region_via_g_complex(&scalar_rc(1.0, 1.0)).unwrap();
        assert!(cr.max_imag <= 1e-10);
        assert!((cr.l_block - &k.l_block).norm() < 1e-14);
        assert_abs_diff_eq!(entanglement_entropy(&k), 1.5 * 1.5f64.ln() - 0.5 * 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn boundary_mode() {
        let rc = scalar_rc(0.5, 0.5);
        assert_abs_diff_eq!(compute_c(&rc).unwrap()[(0, 0)], 0.5, epsilon = 0.0);
        assert!(matches!(mn_kernels(&rc), Err(Error::ModularDivergence { count: 1, .. })));
        let opts = KernelOptions { sing_tol: SING_TOL, clip: Some(1e-8) };
        let k = mn_kernels_with(&rc, &opts).unwrap();
        assert_eq!(k.clipped.len(), 1);
        assert!(k.m[(0, 0)].is_finite());
        assert!(entanglement_entropy(&k).abs() < 1e-14);
        assert_eq!(entropy_from_deltas(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn route_agreement_middle_interval() {
        let s = state(16, 0.1, Boundary::Dirichlet);
        let r = Region::interval(5, 6, 16).unwrap();
        let rc = restrict_correlators(&s, &r).unwrap();
        let k = mn_kernels(&rc).unwrap();
        let g = lndelta_region_via_g(&rc).unwrap();
        assert!(linalg::rel_diff(&g, &k.l_block) <= 1e-8);
        let cr = lndelta_region_via_g_complex(&rc).unwrap();
        assert!(cr.max_imag <= 1e-10 * k.l_block.norm());
        assert!(linalg::rel_diff(&cr.l_block, &k.l_block) <= 1e-8);
        let full = region_generator_full_space(&s, &r, SING_TOL).unwrap();
        assert!(linalg::rel_diff(&full, &k.l_block) <= 1e-7);
    }

    #[test]
    fn kernel_structure() {
        let s = state(8, 1.0, Boundary::Periodic);
        let r = Region::half(8);
        let rc = restrict_correlators(&s, &r).unwrap();
        let k = mn_kernels(&rc).unwrap();
        let xp = &rc.x_r * &rc.p_r;
        assert!(linalg::rel_diff(&(&k.c * &k.c), &xp) <= 1e-9);
        assert!(linalg::asymmetry(&k.m) <= 1e-8 * k.m.norm());
        assert!(linalg::asymmetry(&k.n) <= 1e-8 * k.n.norm());
        assert!(k.c_spectrum.iter().all(|&c| c >= 0.5 - 1e-10));
        let z = DMatrix::zeros(4, 4);
        let gram = block2(&rc.x_r, &z, &z, &rc.p_r);
        let gl = &gram * &k.l_block;
        assert!(linalg::symmetrize(&gl).norm() <= 1e-8 * gl.norm());
        // equals the region block of the full generator and minus the complement kernels there
        let split = lndelta_arccot_split(&s, &r).unwrap();
        let rb = principal(&split, &r.phase_indices());
        assert!(linalg::rel_diff(&k.l_block, &rb) <= 1e-7);
        let ck = complement_kernels(&s, &r).unwrap();
        let cb = principal(&split, &r.complement().phase_indices());
        assert!(linalg::rel_diff(&(-&ck.l_block), &cb) <= 1e-7);
    }

    #[test]
    fn complement_of_half_chain_is_mirror() {
        let n = 4;
        let s = state(n, 1.0, Boundary::Dirichlet);
        let r = Region::half(n);
        let kr = mn_kernels(&restrict_correlators(&s, &r).unwrap()).unwrap();
        let kc = complement_kernels(&s, &r).unwrap();
        let h = n / 2;
        let flip = DMatrix::from_fn(h, h, |i, j| if i + j == h - 1 { 1.0 } else { 0.0 });
        assert!(linalg::rel_diff(&(&flip * &kc.m * &flip), &kr.m) <= 1e-8);
        assert!(linalg::rel_diff(&(&flip * &kc.n * &flip), &kr.n) <= 1e-8);
    }

    #[test]
    fn single_site_and_complement() {
        let s = state(2, 1.0, Boundary::Dirichlet);
        let r = Region::new(vec![0], 2).unwrap();
        assert!(mn_kernels(&restrict_correlators(&s, &r).unwrap()).is_ok());
        assert!(complement_kernels(&s, &r).is_ok());
        assert!(matches!(complement_kernels(&s, &Region::all(2)), Err(Error::EmptyRegion)));
    }

    #[test]
    fn quadrature_scalar_identity() {
        // 4 ∫_1^∞ (1 − 4t²z²)^{-1} dt = 4 ∫_0^1 (s² − 4z²)^{-1} ds = −ln 3 at z = 1
        let (v, _, _) = crate::quadrature::integrate_scalar(|s| 4.0 / (s * s - 4.0), 0.0, 1.0, 1e-13, 10_000).unwrap();
        assert_abs_diff_eq!(v, -3f64.ln(), epsilon = 1e-12);
    }

    fn spd_pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
        (
            prop::collection::vec(-1.0..1.0f64, 16),
            prop::collection::vec(0.3..3.0f64, 4),
            prop::collection::vec(0.0..2.0f64, 4),
        )
            .prop_map(|(q, xs, extra)| {
                // X = Q diag(xs) Qᵀ; P = X^{-1/2} W diag(1/4 + extra) Wᵀ X^{-1/2} / ... with W = I
                let q = DMatrix::from_vec(4, 4, q).qr().q();
                let x = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(xs)) * q.transpose();
                let (_, xhi) = spd_sqrt_pair(&x).unwrap();
                let s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(4, extra.iter().map(|e| 0.25 + 0.01 + e)));
                let p = linalg::symmetrize(&(&xhi * s * &xhi));
                (x, p)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn c_squares_to_xp((x, p) in spd_pair()) {
            let rc = RestrictedCorrelators { region: Region::all(4), xp_min: 0.0, x_r: x.clone(), p_r: p.clone() };
            let c = compute_c(&rc).unwrap();
            let xp = &x * &p;
            prop_assert!(linalg::rel_diff(&(&c * &c), &xp) <= 1e-10);
            let k = mn_kernels(&rc).unwrap();
            prop_assert!(linalg::asymmetry(&k.m) <= 1e-8 * k.m.norm());
            prop_assert!(linalg::asymmetry(&k.n) <= 1e-8 * k.n.norm());
            let g = lndelta_region_via_g(&rc).unwrap();
            prop_assert!(linalg::rel_diff(&g, &k.l_block) <= 1e-8);
        }

        #[test]
        fn positivity_on_random_regions(mask in prop::collection::vec(any::<bool>(), 9), mass in 0.01..3.0f64) {
            let s = state(9, mass, Boundary::Dirichlet);
            let sites: Vec<usize> = mask.iter().enumerate().filter(|x| *x.1).map(|x| x.0).collect();
            prop_assume!(!sites.is_empty());
            let rc = restrict_correlators(&s, &Region::new(sites, 9).unwrap()).unwrap();
            prop_assert!(rc.xp_min >= 0.25 - 1e-10);
            prop_assert!(linalg::asymmetry(&rc.x_r) <= 1e-12);
        }
    }
}
