//! Free-group outer automorphisms acting on finite-order approximations of
//! geodesic currents.

pub mod currents;
pub mod dynamics;
pub mod error;
pub mod free_group;
pub mod marked_graph;
pub mod matrix;
pub mod splitting;
pub mod substitution;
pub mod text;

pub use error::{Error, Result};
