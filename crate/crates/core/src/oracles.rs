//! Independent reference computations for tiny instances: an extended-precision
//! single-mode evaluation, a truncated Fock-space partial trace for two sites,
//! and a scalar check of the resolvent integral.

use astro_float::{BigFloat, Consts, RoundingMode};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::LatticeModel;
use crate::linalg::SymEig;
use crate::quadrature::{integrate_scalar, DEFAULT_MAX_EVALS};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SingleModeOracle {
    pub c: f64,
    pub c_minus_half: f64,
    pub m: f64,
    pub n: f64,
    /// `[[0, 2M], [−2N, 0]]`, row-major.
    pub l_2x2: [[f64; 2]; 2],
    pub entropy: f64,
}

/// Working precision of the scalar oracle, in bits.
const ORACLE_BITS: usize = 256;

struct Ext {
    cc: Consts,
}

impl Ext {
    const RM: RoundingMode = RoundingMode::ToEven;

    fn new() -> Result<Self> {
        Ok(Ext { cc: Consts::new().map_err(|e| Error::Numerical(format!("{e:?}")))? })
    }

    fn num(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, ORACLE_BITS)
    }

    fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, ORACLE_BITS, Self::RM)
    }

    fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, ORACLE_BITS, Self::RM)
    }

    fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, ORACLE_BITS, Self::RM)
    }

    fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, ORACLE_BITS, Self::RM)
    }

    fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(ORACLE_BITS, Self::RM, &mut self.cc)
    }

    fn sqrt(&self, a: &BigFloat) -> BigFloat {
        a.sqrt(ORACLE_BITS, Self::RM)
    }

    fn to_f64(&self, a: &BigFloat) -> Result<f64> {
        let s = a.to_string();
        s.parse::<f64>().map_err(|_| Error::Numerical(format!("cannot convert {s} to f64")))
    }
}

/// Closed-form one-mode kernels evaluated in 256-bit arithmetic.
pub fn oracle_single_mode(x: f64, p: f64) -> Result<SingleModeOracle> {
    if !(x > 0.0 && p > 0.0) {
        return Err(Error::Domain(format!("x and p must be positive, got x = {x}, p = {p}")));
    }
    let mut e = Ext::new()?;
    let (bx, bp) = (e.num(x), e.num(p));
    let xp = e.mul(&bx, &bp);
    let excess = e.sub(&xp, &e.num(0.25));
    if excess.is_negative() {
        return Err(Error::Domain(format!("xp = {} is below 1/4", x * p)));
    }
    if excess.is_zero() {
        return Err(Error::Domain("xp = 1/4: the modular Hamiltonian diverges".into()));
    }
    let half = e.num(0.5);
    let c = e.sqrt(&xp);
    let delta = e.div(&excess, &e.add(&c, &half));
    let plus = e.add(&c, &half);
    // ln((2c+1)/(2c-1)) = ln((c+1/2)/δ)
    let log = e.ln(&e.div(&plus, &delta));
    let phi = e.div(&log, &e.mul(&c, &e.num(2.0)));
    let m = e.mul(&bp, &phi);
    let n = e.mul(&phi, &bx);
    let ent = {
        let (lp, ld) = (e.ln(&plus), e.ln(&delta));
        let a = e.mul(&plus, &lp);
        let b = e.mul(&delta, &ld);
        e.sub(&a, &b)
    };
    let (m, n) = (e.to_f64(&m)?, e.to_f64(&n)?);
    Ok(SingleModeOracle {
        c: e.to_f64(&c)?,
        c_minus_half: e.to_f64(&delta)?,
        m,
        n,
        l_2x2: [[0.0, 2.0 * m], [-2.0 * n, 0.0]],
        entropy: e.to_f64(&ent)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FockOracle {
    pub n_max: usize,
    pub entropy: f64,
    /// Eigenvalues of the reduced density matrix, descending.
    pub occupation_spectrum: Vec<f64>,
    pub trace: f64,
    /// |S(n_max + 4) − S(n_max)|
    pub convergence_change: f64,
}

fn annihilation(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |r, c| if c == r + 1 { (c as f64).sqrt() } else { 0.0 })
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Ground state of a two-site chain in a truncated occupation basis, and the
/// spectrum and entropy of the state reduced to site 0.
fn fock_reduced(model: &LatticeModel, n_max: usize) -> Result<(f64, Vec<f64>, f64)> {
    let d = n_max + 1;
    let eig = SymEig::new(&model.v)?;
    let omega: Vec<f64> = eig.values.iter().map(|w| w.sqrt()).collect();
    let big_omega = (omega[0] * omega[1]).sqrt();
    let a = annihilation(d);
    let id = DMatrix::<f64>::identity(d, d);
    let site_ops = [kron(&a, &id), kron(&id, &a)];
    let mut h = DMatrix::<f64>::zeros(d * d, d * d);
    for k in 0..2 {
        // b_k = Σ_i e_ki (α a_i + β a_i†) with a_i built on the reference frequency Ω
        let ratio = (omega[k] / big_omega).sqrt();
        let alpha = 0.5 * (ratio + 1.0 / ratio);
        let beta = 0.5 * (ratio - 1.0 / ratio);
        let mut b = DMatrix::<f64>::zeros(d * d, d * d);
        for i in 0..2 {
            let e = eig.vectors[(i, k)];
            b += (&site_ops[i] * alpha + site_ops[i].transpose() * beta) * e;
        }
        h += b.transpose() * &b;
    }
    let ground = SymEig::new(&h)?;
    let psi = ground.vectors.column(0);
    // Ψ[n0, n1] with the second tensor factor fastest
    let psi_m = DMatrix::from_fn(d, d, |n0, n1| psi[n0 * d + n1]);
    let rho = &psi_m * psi_m.transpose();
    let trace = rho.trace();
    let mut spec: Vec<f64> = SymEig::new(&rho)?.values.iter().copied().collect();
    spec.sort_by(|a, b| b.total_cmp(a));
    let entropy = spec.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    Ok((entropy, spec, trace))
}

pub fn oracle_reduced_density_matrix(model: &LatticeModel, n_max: usize) -> Result<FockOracle> {
    if model.n_sites != 2 {
        return Err(Error::InvalidParameter(format!("oracle needs a 2-site model, got {}", model.n_sites)));
    }
    if n_max < 8 {
        return Err(Error::InvalidParameter(format!("n_max must be at least 8, got {n_max}")));
    }
    let (entropy, occupation_spectrum, trace) = fock_reduced(model, n_max)?;
    let (refined, _, _) = fock_reduced(model, n_max + 4)?;
    let convergence_change = (refined - entropy).abs();
    if convergence_change > 1e-6 {
        return Err(Error::TruncationNotConverged { change: convergence_change });
    }
    if (trace - 1.0).abs() > 1e-8 {
        return Err(Error::Numerical(format!("reduced density matrix trace {trace}")));
    }
    Ok(FockOracle { n_max, entropy, occupation_spectrum, trace, convergence_change })
}

/// Integrates `∫_1^∞ (1 − 4t²z²)^{-1} dt` (as `∫_0^1 (s² − 4z²)^{-1} ds`) and
/// returns its distance to `−(1/(4z)) ln((2z+1)/(2z−1))`.
pub fn oracle_resolvent_scalar(z: f64, quad_tol: f64) -> Result<f64> {
    if !(z * z >= 0.25 + 1e-8) {
        return Err(Error::Domain(format!("z^2 = {} must be at least 1/4 + 1e-8", z * z)));
    }
    let z2 = 4.0 * z * z;
    let (v, _, _) = integrate_scalar(|s| 1.0 / (s * s - z2), 0.0, 1.0, 0.1 * quad_tol, DEFAULT_MAX_EVALS)?;
    let za = z.abs();
    let closed = -(1.0 / (4.0 * za)) * (1.0 / (za - 0.5)).ln_1p() * z.signum();
    Ok((v - closed).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_harmonic_chain, Boundary};

    #[test]
    fn unit_mode() {
        let o = oracle_single_mode(1.0, 1.0).unwrap();
        assert_eq!(o.c, 1.0);
        // ln(3)/2 = 0.549306144334054845697...
        assert_eq!(o.m, 0.549_306_144_334_054_9);
        assert_eq!(o.m, o.n);
    }

    #[test]
    fn domain() {
        assert!(matches!(oracle_single_mode(0.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(oracle_single_mode(0.5, 0.4), Err(Error::Domain(_))));
        assert!(matches!(oracle_resolvent_scalar(0.4, 1e-10), Err(Error::Domain(_))));
    }

    #[test]
    fn resolvent_scalar() {
        assert!(oracle_resolvent_scalar(1.0, 1e-10).unwrap() <= 1e-10);
        assert!(oracle_resolvent_scalar(0.5001, 1e-8).unwrap() <= 1e-8);
    }

    #[test]
    fn fock_guards() {
        let m = build_harmonic_chain(3, 1.0, 1.0, Boundary::Dirichlet).unwrap();
        assert!(oracle_reduced_density_matrix(&m, 10).is_err());
        let m = build_harmonic_chain(2, 1.0, 1.0, Boundary::Dirichlet).unwrap();
        assert!(oracle_reduced_density_matrix(&m, 4).is_err());
    }
}
