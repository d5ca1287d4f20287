//! Collaborative Hanzi assembly engine.
//!
//! Learners compose characters by splicing mortise-tenon parts. This crate
//! holds the pieces every front end shares:
//!
//! * [`catalog`] / [`composition`]: parts, equivalence classes, the recipe
//!   table, decomposition trees and the pure splice algebra over them;
//! * [`session`]: the authoritative, replayable multi-user state machine;
//! * [`pipeline`]: core-character extraction, image and 3D model jobs.

pub mod catalog;
pub mod composition;
pub mod digest;
pub mod pipeline;
pub mod session;

pub use catalog::{
    CatalogError, ClassId, CompositionOp, DecompositionNode, DecompositionTree, Part, PartCatalog,
    PartId, PartKind, ValidationError,
};
pub use composition::{CompositionError, SpliceStep};
pub use digest::Digest64;

#[cfg(feature = "testkit")]
pub mod testkit;
