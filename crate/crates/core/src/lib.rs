//! Kernel support vector machines with a p-norm hinge loss.
//!
//! The soft-margin penalty `C sum xi_i^p` turns the dual into a concave
//! problem with an extra `-theta sum a_i^gamma` term. It is solved by a
//! pair-wise coordinate ascent solver ([`solver`]) that reduces to classic
//! SMO at `theta = 0`. Multiclass problems use one-vs-one voting.

pub mod bench;
pub mod cli;
pub mod data;
pub mod dual;
pub mod error;
pub mod kernel;
pub mod margin;
pub mod matrix;
pub mod model;
pub mod model_io;
pub mod reference;
pub mod selection;
pub mod solver;

pub use error::{PsvmError, Result};
