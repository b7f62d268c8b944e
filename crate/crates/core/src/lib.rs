//! Transaction-graph fraud detection: graph ingestion, feature assembly,
//! GCN/GAT/GIN training on a small reverse-mode tape, ensemble fusion,
//! threshold-free metrics, and a statevector simulator for quantum feature
//! maps and message passing.

pub mod ensemble;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod quantum;
pub mod quota;
pub mod split;
pub mod synth;
pub mod tensor;

pub use ensemble::{EnsembleWeights, StackingModel};
pub use features::FeatureMatrix;
pub use gnn::{Backbone, ModelConfig, TrainedModel};
pub use graph::{IntegrityReport, Label, TransactionGraph};
pub use pipeline::{Report, RunConfig};
pub use quantum::{RandomSource, StateVector};
pub use split::{SplitAssignment, SplitMode};
pub use tensor::{SparseMatrix, Tensor2};
