//! YAML run configuration. Unknown keys are rejected; missing keys take the
//! defaults below.

use std::path::Path;

use moi_core::affinity::AffinityRule;
use moi_core::attribution::{ColumnScaling, RowScaling, View};
use moi_core::community::Algorithm;
use moi_core::graph::{Backbone, GraphConfig, Sparsifier};
use moi_core::interventions::{EvalMetric, InterventionPolicy};
use moi_core::metrics::Perturbation;
use moi_core::pipeline::{PipelineConfig, Significance};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MoiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRule {
    CosineMag,
    Pearson,
    Spearman,
    CoexceedFreq,
    Jaccard,
    MiBinned,
    Pcorr,
}

impl std::str::FromStr for EdgeRule {
    type Err = MoiError;

    fn from_str(s: &str) -> Result<Self> {
        serde_yaml::from_str(s).map_err(|_| MoiError::Usage(format!("unknown edge rule {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "l2", alias = "L2")]
    L2,
    #[serde(rename = "MAD", alias = "mad")]
    Mad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowScale {
    None,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsifierKind {
    Topk,
    MutualTopk,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommunityAlgo {
    Louvain,
    Leiden,
}

impl std::str::FromStr for CommunityAlgo {
    type Err = MoiError;

    fn from_str(s: &str) -> Result<Self> {
        serde_yaml::from_str(s).map_err(|_| MoiError::Usage(format!("unknown community algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BackboneSetting {
    Named(BackboneMode),
    K0(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneMode {
    Auto,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Hard,
    Conditional,
    Soft,
}

impl std::str::FromStr for PolicyName {
    type Err = MoiError;

    fn from_str(s: &str) -> Result<Self> {
        serde_yaml::from_str(s).map_err(|_| MoiError::Usage(format!("unknown policy {s:?} (hard, conditional, soft)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub bootstraps: usize,
    pub res_sweep: Vec<f64>,
    pub k_sweep: Vec<usize>,
    pub q_floor: f64,
    pub consensus_threshold: f64,
    /// Row subsampling rate; `null` resamples with replacement.
    pub subsample: Option<f64>,
    pub noise_sigma: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            bootstraps: 200,
            res_sweep: vec![0.5, 1.0, 1.5],
            k_sweep: vec![10, 20, 30],
            q_floor: 0.2,
            consensus_threshold: 0.5,
            subsample: None,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FairnessConfig {
    /// Name of the protected attribute; recorded in reports.
    pub group_label: String,
    pub bei_eps: f64,
    pub bootstraps: usize,
    pub decision_threshold: f64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        Self { group_label: "A".into(), bei_eps: 1e-6, bootstraps: 200, decision_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub policy: PolicyName,
    pub draws: usize,
    pub donor_k: usize,
    pub delta: f64,
    pub metric: EvalMetric,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { policy: PolicyName::Hard, draws: 8, donor_k: 10, delta: 0.5, metric: EvalMetric::Auroc }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub split: u64,
    pub attr: u64,
    pub graph: u64,
    pub comm: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignificanceConfig {
    pub permutations: usize,
    pub fdr_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub edge_rule: EdgeRule,
    pub signed: bool,
    pub column_scaling: Scaling,
    pub row_scaling: RowScale,
    pub epsilon: f64,
    pub sparsifier: SparsifierKind,
    pub k: usize,
    pub threshold: f64,
    pub min_degree: usize,
    pub backbone: BackboneSetting,
    pub degree_norm: f64,
    pub exceedance_q: f64,
    pub mi_bins: usize,
    /// Feature names conditioned on by `pcorr`.
    pub pcorr_controls: Vec<String>,
    pub tfidf: bool,
    pub shrinkage: f64,
    pub shrink_floor: f64,
    pub significance: Option<SignificanceConfig>,
    pub community: CommunityAlgo,
    pub resolution: f64,
    pub project_abs: bool,
    pub stability: StabilityConfig,
    pub fairness: FairnessConfig,
    pub ablation: AblationConfig,
    pub seeds: Seeds,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            edge_rule: EdgeRule::CosineMag,
            signed: false,
            column_scaling: Scaling::Mad,
            row_scaling: RowScale::None,
            epsilon: moi_core::pipeline::DEFAULT_EPSILON,
            sparsifier: SparsifierKind::MutualTopk,
            k: 20,
            threshold: 0.0,
            min_degree: 0,
            backbone: BackboneSetting::Named(BackboneMode::Auto),
            degree_norm: 0.5,
            exceedance_q: 0.9,
            mi_bins: 16,
            pcorr_controls: Vec::new(),
            tfidf: false,
            shrinkage: 1.0,
            shrink_floor: 0.0,
            significance: None,
            community: CommunityAlgo::Leiden,
            resolution: 1.0,
            project_abs: false,
            stability: StabilityConfig::default(),
            fairness: FairnessConfig::default(),
            ablation: AblationConfig::default(),
            seeds: Seeds::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let cfg: Self = serde_yaml::from_str(text).map_err(|e| MoiError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MoiError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            MoiError::Config(m) => MoiError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MoiError::Config(m));
        if self.k == 0 && self.sparsifier != SparsifierKind::Threshold {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.degree_norm) {
            return bad(format!("degree_norm must lie in [0, 1], found {}", self.degree_norm));
        }
        if !(self.resolution > 0.0) {
            return bad(format!("resolution must be positive, found {}", self.resolution));
        }
        if self.stability.res_sweep.iter().any(|g| !(*g > 0.0)) {
            return bad("res_sweep entries must be positive".into());
        }
        if self.stability.k_sweep.contains(&0) {
            return bad("k_sweep entries must be at least 1".into());
        }
        if !(self.fairness.bei_eps >= 0.0) {
            return bad("bei_eps must be nonnegative".into());
        }
        if let BackboneSetting::K0(k0) = self.backbone {
            if !(1..=3).contains(&k0) {
                return bad(format!("backbone k0 must lie in 1..=3, found {k0}"));
            }
        }
        if !(0.0..=1.0).contains(&self.ablation.delta) {
            return bad(format!("ablation delta must lie in [0, 1], found {}", self.ablation.delta));
        }
        Ok(())
    }

    /// Canonical YAML of the fully resolved config.
    pub fn snapshot(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Config::snapshot`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot().as_bytes()))
    }

    pub fn edge_rule(&self, feature_names: &[String]) -> Result<AffinityRule> {
        Ok(match self.edge_rule {
            EdgeRule::CosineMag => AffinityRule::CosineMagnitude,
            EdgeRule::Pearson => AffinityRule::Pearson,
            EdgeRule::Spearman => AffinityRule::Spearman,
            EdgeRule::CoexceedFreq => AffinityRule::CoexceedFreq { q: self.exceedance_q },
            EdgeRule::Jaccard => AffinityRule::Jaccard { q: self.exceedance_q },
            EdgeRule::MiBinned => AffinityRule::MutualInfo { bins: self.mi_bins },
            EdgeRule::Pcorr => {
                let controls = self
                    .pcorr_controls
                    .iter()
                    .map(|name| {
                        feature_names
                            .iter()
                            .position(|f| f == name)
                            .ok_or_else(|| MoiError::Config(format!("pcorr control {name:?} is not a feature")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                AffinityRule::PartialCorr { controls }
            }
        })
    }

    pub fn sparsifier_with_k(&self, k: usize) -> Sparsifier {
        match self.sparsifier {
            SparsifierKind::Topk => Sparsifier::TopK(k),
            SparsifierKind::MutualTopk => Sparsifier::MutualTopK(k),
            SparsifierKind::Threshold => Sparsifier::Threshold(self.threshold),
        }
    }

    pub fn to_pipeline(&self, feature_names: &[String]) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            view: if self.signed { View::Signed } else { View::Magnitude },
            column_scaling: match self.column_scaling {
                Scaling::None => ColumnScaling::None,
                Scaling::L2 => ColumnScaling::L2,
                Scaling::Mad => ColumnScaling::Mad,
            },
            row_scaling: match self.row_scaling {
                RowScale::None => RowScaling::None,
                RowScale::L1 => RowScaling::L1,
            },
            epsilon: self.epsilon,
            edge_rule: self.edge_rule(feature_names)?,
            tfidf: self.tfidf,
            shrinkage: self.shrinkage,
            shrink_floor: self.shrink_floor,
            significance: self.significance.map(|s| Significance { permutations: s.permutations, fdr_q: s.fdr_q }),
            graph: GraphConfig {
                sparsifier: self.sparsifier_with_k(self.k),
                min_degree: self.min_degree,
                backbone: match self.backbone {
                    BackboneSetting::Named(BackboneMode::Auto) => Backbone::Auto,
                    BackboneSetting::Named(BackboneMode::Off) => Backbone::Off,
                    BackboneSetting::K0(k0) => Backbone::Fixed(k0),
                },
                degree_norm: self.degree_norm,
            },
            algorithm: self.algorithm(),
            resolution: self.resolution,
            project_abs: self.project_abs,
            graph_seed: self.seeds.graph,
            comm_seed: self.seeds.comm,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.community {
            CommunityAlgo::Louvain => Algorithm::Louvain,
            CommunityAlgo::Leiden => Algorithm::Leiden,
        }
    }

    pub fn perturbation(&self) -> Perturbation {
        Perturbation::Resample { subsample: self.stability.subsample, noise_sigma: self.stability.noise_sigma }
    }

    pub fn policy(&self) -> InterventionPolicy {
        let a = &self.ablation;
        match a.policy {
            PolicyName::Hard => InterventionPolicy::hard(a.draws, self.seeds.split),
            PolicyName::Conditional => InterventionPolicy::knn(a.donor_k, a.draws, self.seeds.split),
            PolicyName::Soft => InterventionPolicy::soft(a.delta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses_to_defaults() {
        let text = "edge_rule: cosine_mag\nsigned: false\ncolumn_scaling: MAD\nsparsifier: mutual_topk\nk: 20\n\
                    degree_norm: 0.5\ncommunity: leiden\nresolution: 1.0\n\
                    stability: {bootstraps: 200, res_sweep: [0.5,1.0,1.5], k_sweep: [10,20,30]}\n\
                    fairness: {group_label: A, bei_eps: 1e-6}\n";
        let cfg = Config::parse(text).unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.hash(), Config::default().hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = Config::parse("k: 20\nspeling: 1\n").unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(Config::parse("stability: {bootstrap: 3}\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = Config::default();
        cfg.k = 7;
        cfg.backbone = BackboneSetting::K0(2);
        cfg.significance = Some(SignificanceConfig { permutations: 99, fdr_q: 0.1 });
        assert_eq!(Config::parse(&cfg.snapshot()).unwrap(), cfg);
    }
}
