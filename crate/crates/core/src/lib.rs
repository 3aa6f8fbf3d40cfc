//! Joint identification of linear dynamical systems placed on the nodes of a
//! graph, with a total-variation penalty tying neighbouring systems together.
//!
//! The crate covers graph construction and spectral quantities, ground-truth
//! ensembles and simulation, the penalized estimator with its baselines,
//! numerical evaluation of the error-bound ingredients, the synthetic
//! experiment harness and station-data ingestion.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod lds;
pub(crate) mod linalg;
pub mod theory;

pub use analysis::{CompatReport, ScalingFactors};
pub use error::{Error, Result};
pub use graph::{Graph, GraphKind, GraphSpectrum, IncidenceMatrix};
pub use lds::{Field, FieldSpec, GrammianBundle, SystemEnsemble, TrajectoryPanel};
pub use estimators::{DesignSystem, FitResult, Method, PathResult, SolverOptions};
pub use experiments::{MetricRow, SplitSpec, SweepConfig, SweepResult};
pub use ingest::StationTable;
pub use theory::{TheoryConstants, TheoryReport};
