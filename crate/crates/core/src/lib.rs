//! Competitive linear threshold (CLT) diffusion: exact simulation, compilation
//! into an equivalent layered piecewise-linear network, and learning of model
//! parameters from observed cascades with per-node linear programs.

pub mod dataset;
pub mod diffusion;
pub mod erm;
pub mod eval;
pub mod experiment;
pub mod forge;
pub mod graph;
pub mod instance;
pub mod io;
pub mod lp;
pub mod net;
pub mod rng;
pub mod scaled;
pub mod status;

pub use dataset::{Dataset, Sample};
pub use graph::Graph;
pub use instance::CltInstance;
pub use net::LayeredNet;
pub use scaled::ScaledValue;
pub use status::{BinaryMatrix, StatusTensor, StepOutcome};
