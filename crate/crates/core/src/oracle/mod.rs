//! Brute-force references used to cross-check the fast paths.

pub mod density;
pub mod linalg;
pub mod modesum;
pub mod simpson;

pub use density::{repeated_evolution, superop_l, ApparatusLayout, DensityMatrix, Overlaps};
pub use linalg::expm_small;
pub use modesum::{discrete_mode_sum, DiscreteBath};
pub use simpson::quad_reference;
