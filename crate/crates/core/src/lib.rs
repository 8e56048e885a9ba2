//! Distance-squared coordinate mappings for sampled closed manifolds.
//!
//! The crate builds the mapping x -> (d^2(p_1,x),...,d^2(p_l,x)) for a
//! chosen anchor set, reduces it to fold/inclusion normal forms through
//! explicit diffeomorphism chains, selects anchors constructively from a
//! sampled manifold, and numerically certifies the resulting embedding,
//! immersion and normal-crossings properties.

pub mod anchors;
pub mod circle;
pub mod error;
pub mod geometry;
pub mod manifold;
pub mod normal_form;
pub mod report;
pub mod shapes;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{AnchorSet, Point};
pub use normal_form::DiffeoChain;
pub use report::VerificationReport;
