//! Causal-structure-based anomaly detection and root cause analysis for
//! multivariate time series.

pub mod config;
pub mod data;
pub mod detection;
pub mod discovery;
pub mod error;
pub mod evaluation;
pub mod graph;
pub(crate) mod linalg;
pub mod models;
pub mod pipeline;
pub mod rca;
pub mod simulation;
pub mod stats;

pub use config::PipelineConfig;
pub use data::TimeSeriesMatrix;
pub use error::{Error, Result};
pub use graph::{Dag, DirectedEdge, MixedGraph};
