//! Path-norm geometry for ReLU networks.
//!
//! Networks are DAGs with shared weights ([`netgraph`]). On top of them the
//! crate provides the path regularizer and its diagonal curvature
//! ([`pathnorm`]), rescaling-invariant optimizers ([`optim`]), complexity and
//! sharpness measures ([`measures`]), rescaling and balancing tools
//! ([`invariance`]), datasets ([`data`]) and a small training loop ([`train`]).

pub mod data;
pub mod error;
pub mod init;
pub mod invariance;
pub mod measures;
pub mod netgraph;
pub mod optim;
pub mod pathnorm;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use netgraph::{NetworkGraph, ParamVector};
