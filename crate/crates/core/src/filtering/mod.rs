//! Consistency filtering of augmented instances.
//!
//! A [`PairScorer`] maps a head/tail token pair to relation scores. Its
//! scores induce a distribution over the tag vocabulary in every cell of a
//! sentence's tag tensor, and ζ, the mean negative gold log-likelihood over
//! that tensor, ranks augmented instances; the lowest-ζ fraction is kept.
//! A k-means topic model filters candidates that drift away from their
//! source sentence's topic.

pub mod loss;
pub mod scorer;
pub mod topics;

pub use loss::*;
pub use scorer::*;
pub use topics::*;
