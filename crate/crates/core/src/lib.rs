//! Variational free-energy functionals for elastic manifolds and spherical
//! spin glasses with elastic site coupling.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over parallel per-site arrays read closer to the formulas.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod functionals;
pub mod instances;
pub mod kdual;
pub mod lattice;
pub mod mixing;
pub mod montecarlo;
pub mod optimize;
pub mod profiles;
pub mod quad;
pub mod rng;
pub mod rpc;
pub mod verify;

pub use error::{Error, Result};
pub use functionals::{EuclideanModelSpec, EvaluationReport, SphericalModelSpec};
pub use kdual::{solve_k, DualPoint};
pub use lattice::{
    build_coupling, build_periodic_laplacian, CouplingMatrix, LatticeSpec, Mat, SiteSet, Vector,
};
pub use mixing::{CorrelationFunction, MixingFunction};
pub use optimize::{Certificate, Form};
pub use profiles::{ContinuumProfile, PanchenkoProfile, TalagrandProfile};
pub use rpc::Method;
