//! One-particle modular Hamiltonians of free scalar fields on a 1D lattice.
//!
//! The generator `I ln Δ` restricted to a region is computed three ways
//! (full-space spectral calculus of `1 − P + IPI`, the closed-form `M`/`N`
//! kernels, and a resolvent integral) and the resulting flow is checked
//! against the KMS condition.

pub mod cli;
pub mod error;
pub mod flow;
pub mod kernels;
pub mod lattice;
pub mod linalg;
pub mod oracles;
pub mod quadrature;
pub mod symplectic;

pub use error::{Error, Result};
pub use kernels::{
    complement_kernels, compute_c, entanglement_entropy, lndelta_region_via_g, mn_kernels,
    restrict_correlators, KernelOptions, RegionKernels, RestrictedCorrelators,
};
pub use lattice::{
    build_harmonic_chain, mu_product, symplectic_product, vacuum_state, Boundary, GaussianState,
    LatticeModel, PhaseSpaceVector,
};
pub use symplectic::{
    cutting_projection, lndelta_arccot_split, lndelta_resolvent_quadrature, modular_data_full,
    mu_adjoint, mu_spectral_function, standardness_check, ModularData, Region, SpectralDomain,
};
