//! Genome-wide association analysis by sparse model selection.

pub mod cluster;
pub mod criteria;
pub mod dist;
pub mod genotype;
pub mod mtest;
pub mod regress;
pub mod rng;
pub mod search;
pub mod simulate;
pub mod special;

pub use cluster::ClusterAssignment;
pub use criteria::{CriterionConfig, CriterionKind};
pub use genotype::{Dataset, GenotypeError, GenotypeMatrix, SnpMeta};
pub use mtest::ScanResult;
pub use regress::{Design, FitResult, FitWorkspace, ModelSpec, NoncentralityPair, RegressError};
pub use search::{SearchConfig, SearchTrace, Selection};
pub use simulate::{DetectionReport, Method, SimulationConfig};
