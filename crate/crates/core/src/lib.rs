//! Simulation of random-coding decoupling over discrete- and
//! continuous-variable erasure channels.
//!
//! Everything is dense linear algebra over truncated Hilbert spaces plus
//! seeded Monte Carlo over Haar-random and passive-optical unitaries.

pub mod erasure;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod haar;
pub mod operator;
pub mod random;
pub mod report;
pub mod stats;
pub mod twirl;

pub use error::{Error, Result};
pub use operator::{DensityOperator, HilbertSpec, PureState, C64};
