//! Numerical laboratory for a one-dimensional Lennard-Jones chain with
//! next-nearest-neighbour interactions: the atomistic model, a
//! quasinonlocal quasicontinuum coupling, their minimisers under stretch,
//! and the boundary-layer and jump energies of the first-order limits.

pub mod chain;
pub mod compare;
pub mod error;
pub mod limits;
mod linalg;
pub mod minimize;
pub mod potentials;

pub use chain::{ChainConfig, Deformation, MeshConfig, MeshDescriptor, MeshRule, Model, WindowSize};
pub use error::{Error, Result};
pub use limits::{BLKind, BLQuery, BLResult, Count, JumpPoint, JumpSpec, LimitModel, LimitTable, QcMeshLimits, Side};
pub use linalg::SymBand;
pub use minimize::{global_minimize, MinimizeOptions, MinimizeResult, Objective};
pub use potentials::{Potential, PotentialAnalysis, PotentialKind, PotentialSpec, Which};
