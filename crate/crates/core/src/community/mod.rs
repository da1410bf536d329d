//! Module detection and partition quality.

pub mod consensus;
pub mod louvain;
pub mod partition;
pub mod quality;
pub mod stability;

pub use consensus::{consensus_partition, ConsensusMatrix, DEFAULT_CONSENSUS_THRESHOLD};
pub use louvain::{detect, leiden_refine, louvain, split_disconnected, vertex_mover, Algorithm};
pub use partition::Partition;
pub use quality::{conductance, mean_conductance, modularity};
pub use stability::{stability_sweep, SettingResult, StabilityReport, DEFAULT_Q_FLOOR};
