//! Dense and sparse linear algebra, reverse-mode gradients, Adam, seeded
//! random streams, and a finite-difference gradient checker.

mod dense;
pub mod gradcheck;
pub mod params;
pub mod rng;
mod sparse;
pub mod tape;

pub use dense::DenseMatrix;
pub use gradcheck::{fd_check, FdReport};
pub use params::{ema_update, grad, AdamConfig, AdamState, ParamSet};
pub use rng::{Seed, Stream};
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
