//! Module-level audit metrics.

pub mod agreement;
pub mod bias;
pub mod fairness;
pub mod matching;
pub mod modules;
pub mod stability;
pub mod summary;

pub use agreement::{partition_agreement, Agreement};
pub use bias::{bias_exposure, BeiEstimate, DEFAULT_BEI_EPS, DEFAULT_BOOTSTRAPS};
pub use fairness::{fairness_gaps, FairnessGaps, GroupLabels};
pub use matching::{hungarian, iou_matrix, match_modules, ModuleMatching};
pub use modules::{module_attributions, redundancy_index, ModuleAttributions};
pub use stability::{msi, MsiResult, Perturbation, DEFAULT_MSI_RUNS};
pub use summary::{heatmap_order, module_summary, sankey_flows, MetricReport, ModuleRecord, SummaryInputs};
