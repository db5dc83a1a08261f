//! Solid-torus self-embeddings and the entropy bounds they force.
//!
//! The crate models smooth self-embeddings of the standard solid torus `V`
//! as skew products over the circle, measures how tangled their images are
//! (winding number, geometric index, geometric and homological degree), and
//! checks these integer invariants against three numerical views of
//! topological entropy: Bowen's counting definition, the growth rate of
//! iterated curve lengths, and an explicit Yomdin-style interval cover.

pub mod entropy;
pub mod error;
pub mod geometry;
pub mod invariants;
pub mod jet;
pub mod maps;
pub mod yomdin;

pub use error::{Error, Result};
