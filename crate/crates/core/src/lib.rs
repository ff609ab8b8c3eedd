//! Post-clustering inference: valid p-values for whether a single variable
//! separates two estimated clusters.
//!
//! Clustering the rows of a data matrix and then testing the resulting
//! clusters for differences on the same data invalidates classical tests
//! (double dipping). This crate implements three tests that account for the
//! clustering step:
//!
//! * a direct selective test conditioning on the clustering event, with
//!   importance-sampled Monte-Carlo p-values ([`selective`]),
//! * a merged selective test for cluster pairs separated by intervening
//!   clusters, combining adjacent-pair p-values with the harmonic mean
//!   ([`merging`]),
//! * a dip-based multimodality test calibrated against the uniform
//!   distribution ([`dip`]).
//!
//! Supporting modules provide CSV ingestion and scaling ([`dataset`]),
//! deterministic Ward clustering with the cluster-preservation predicate
//! ([`clustering`]), and a simulation harness for calibration and power
//! studies ([`harness`]).

pub mod clustering;
pub mod dataset;
pub mod dip;
pub mod harness;
pub mod merging;
pub mod seeding;
pub mod selective;
