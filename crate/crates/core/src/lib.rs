//! Total-variation regularized inversion of vector-valued discrete measures.
//!
//! The crate is organized around the magnetostatic inverse problem: recover a
//! magnetization `μ` supported on a source region `S` from one directional
//! component of its field sampled on a separated sensor set `Q`, by minimizing
//!
//! ```text
//! F(μ) = ‖f − Aμ‖²_H + λ ‖μ‖_TV
//! ```
//!
//! over finite-dimensional spaces of point dipoles placed on voxel grids.
//!
//! - [`measure`]: atomic vector measures and their total-variation norm.
//! - [`partition`]: voxel partitions, dipole spaces, and projection onto them.
//! - [`metric`]: proxy weak-star/R-distance and Hausdorff distance.
//! - [`forward`]: the dipole kernel, the forward operator and its adjoint.
//! - [`solver`]: accelerated proximal gradient with group soft-thresholding,
//!   plus a block coordinate descent reference solver.
//! - [`certificate`]: optimality certificates, minimizer equivalence, dual
//!   field level sets.
//! - [`refinement`]: nested grid sequences and their approximation diagnostics.
//! - [`io`]: CSV readers and writers for the file formats used by the CLI.

pub mod certificate;
pub mod error;
pub mod forward;
pub mod io;
pub mod linalg;
pub mod measure;
pub mod metric;
pub mod partition;
pub mod refinement;
pub mod solver;

pub use error::{Error, Result};
pub use measure::{Atom, DiscreteVectorMeasure, Point3, Vec3};
pub use partition::{Aabb, DipoleGsmSpace, VoxelPartition};
