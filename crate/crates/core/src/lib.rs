//! Consensus and distributed primal-dual optimization over undirected
//! graphs with compressed communication.

pub mod algorithms;
pub mod compressors;
pub mod config;
pub mod error;
pub mod graph;
pub mod objectives;
pub mod presets;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod telemetry;

pub use algorithms::{Algorithm, AlgorithmState, ObserverOrdering, Problem, Simulation, StepSizes};
pub use compressors::{CompressorKind, CompressorSpec, CostModel, ExcitationSchedule};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use graph::{spectrum, Graph, Laplacian, Spectrum};
pub use objectives::{make_least_squares, Objective, ObjectiveConstants};
pub use runner::{run, run_inspected};
pub use telemetry::{RunRecord, Trace};
