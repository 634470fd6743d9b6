//! Learned estimator for graph-storage tuning decisions.
//!
//! Given summary statistics of a graph dataset, the operation mix of a
//! workload and two candidate storage configurations, a small neural
//! classifier predicts whether the new storage runs the workload cheaper
//! than the old one. Training labels come from a deterministic cost model
//! ([`oracle`]) and are spent sparingly by the active-learning driver in
//! [`active`].
//!
//! The numeric core ([`nn`], [`classifiers`], [`active`], the cost model) is
//! generic over the scalar type; the aliases below pin the common choices.

pub mod active;
pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod features;
pub mod graphmodel;
pub mod nn;
pub mod oracle;
pub mod scalar;

pub use error::{AaeError, Result};
pub use scalar::Scalar;

/// Double-precision network, the default for training and corpora.
pub type Network64 = nn::Network<f64>;
/// Single-precision network, handy for latency-sensitive inference.
pub type Network32 = nn::Network<f32>;
pub type ClassifierParams64 = nn::ClassifierParams<f64>;
pub type ClassifierParams32 = nn::ClassifierParams<f32>;
pub type CostParams64 = oracle::CostParams<f64>;
pub type CostParams32 = oracle::CostParams<f32>;
