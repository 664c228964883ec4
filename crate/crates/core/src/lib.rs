//! Exact and sampled thermodynamics of discrete height functions in a
//! one-dimensional random environment: partition functions on boxes, local
//! surface tensions with fixed and free boundary data, the almost
//! superadditive process machinery behind their convergence, heat-bath
//! sampling of the Gibbs measure, and a variational solver that turns
//! tabulated surface tensions into limit shapes.

pub mod boundary;
pub mod error;
pub mod field;
pub mod gibbs;
pub mod lattice;
pub mod sampler;
pub mod solver;
pub mod superadd;
pub mod tension;
pub mod util;

pub use boundary::{boundary_profile_distance, canonical_boundary, BoundaryProfile, Slope};
pub use error::{Error, Result};
pub use field::{EdgeField, Field, FieldKind, FieldSpec};
pub use gibbs::{
    count_extensions, exact_distribution, enumerate_extensions, free_log_partition, hamiltonian,
    log_partition, LogPartition,
};
pub use lattice::{
    kirszbraun_envelope, kirszbraun_extend, BoundaryHeightFunction, Envelope, HeightFunction,
    LatticeBox,
};
