//! Homophily-driven graph contrastive learning.
//!
//! A two-layer GCN is trained with a GRACE-style InfoNCE objective (or a
//! BGRL-style bootstrapped objective) whose positive set is widened with
//! graph neighbors, each weighted by a soft-clustering edge saliency.

pub mod augment;
pub mod cluster;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod loss;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
