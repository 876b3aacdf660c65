//! Numerical toolkit for Whitney jets on sampled compact sets.
//!
//! The crate checks the local Markov inequality LMI(1) on concrete sets
//! (affine-hull spanning, band width, and polynomial Markov factors), builds
//! Whitney decompositions with the classical order-`n` extension operator,
//! solves the weighted moment problems by linear programming, and assembles
//! the extension operator that works for all orders at once.

pub mod error;
pub mod jets;
pub mod lmi;
pub mod lp;
pub mod moments;
pub mod multiindex;
pub mod poly;
pub mod sets;
pub mod spatial;
pub mod stats;
pub mod trig;
pub mod whitney;

pub use error::{Error, Result};
pub use jets::Jet;
pub use multiindex::MultiIndex;
pub use poly::MultiPolynomial;
pub use sets::{PointCloud, SetFamily, SetSpec};
