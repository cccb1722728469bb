//! Task streams, MNIST ingestion, metrics and the experiment runner.

pub mod idx;
pub mod metrics;
pub mod stream;
pub mod experiment;
