//! FLAN: graph-flow accuracy predictors for cell-based neural architecture
//! search, with the encodings, training loop, transfer and search driver
//! around them.

pub mod autodiff;
pub mod benchmark;
pub mod cellgraph;
pub mod config;
pub mod encodings;
pub mod error;
pub mod metrics;
pub mod predictor;
pub mod rng;
pub mod search;
pub mod training;

pub use benchmark::{SyntheticSpec, TabularBenchmark};
pub use cellgraph::{CellArch, CellGraph, OpVocabulary};
pub use config::RunConfig;
pub use encodings::{EncodingKind, EncodingVector, SupplementalTable, UnifiedVocab};
pub use error::{Error, Result};
pub use metrics::RankReport;
pub use predictor::{PredictorConfig, PredictorModel};
pub use search::{SearchConfig, SearchState};
pub use training::TrainConfig;
