//! Projected-ensemble moment operators of the self-dual kicked Ising chain,
//! computed by exact simulation, by replica sums over permutation diagrams,
//! and by Haar Monte Carlo.

pub mod dual;
pub mod error;
pub mod fit;
pub mod kim;
pub mod linalg;
pub mod montecarlo;
pub mod par;
pub mod permgroup;
pub mod replica;

pub use error::{Error, Result};
pub use dual::Boundary;
