//! Continual learning for bias-free MLPs by gradient projection with
//! trust regions.
//!
//! After each task the inputs seen by every layer are compressed into an
//! orthonormal basis ([`subspace`]). Later tasks update weights only
//! orthogonally to the union of those bases, which leaves old tasks' outputs
//! untouched, and may additionally rescale the frozen component of the most
//! related old tasks through small learnable matrices ([`trust_region`],
//! [`network`]). [`trainer`] drives the methods, [`bench`] provides streams,
//! metrics and the experiment runner, and [`cli`] the `trgp` command.

#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod linalg;
pub mod network;
pub mod report;
pub mod seed;
pub mod selftest;
pub mod subspace;
pub mod trainer;
pub mod trust_region;
