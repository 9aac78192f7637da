//! Random-forest toolkit for categorical candidate screening.
//!
//! The crate grows CART classification trees over categorical attributes,
//! bags them into a seeded random forest with out-of-bag calibration,
//! ranks attributes by Mean-Decrease-in-Accuracy and Mean-Decrease-in-Gini,
//! prunes low-importance attributes by percentage threshold, and turns the
//! result into human-readable accept/reject selection rules.

pub mod cart;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod importance;
pub mod metrics;
pub mod rng;
pub mod selection;

pub use error::Error;

/// A `Result` specialized to this crate's [`Error`].
pub type Result<T> = std::result::Result<T, Error>;
