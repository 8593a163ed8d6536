//! Experiment configuration: a TOML file with per-task dataset parameters,
//! model sizes and training hyperparameters, resolved into the core types.

use anyhow::{bail, Context, Result};
use gwgen_core::gw::GwConfig;
use gwgen_core::trainer::{AdversaryMode, GenPenaltySpec, OrthMode, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "mixture2d")]
    Mixture2d,
    #[serde(rename = "mixture3d_to_2d")]
    Mixture3dTo2d,
    #[serde(rename = "mixture2d_to_3d")]
    Mixture2dTo3d,
    #[serde(rename = "scurve")]
    Scurve,
    #[serde(rename = "graph")]
    Graph,
    #[serde(rename = "style")]
    Style,
}

impl Task {
    /// Dimension the generator emits.
    pub fn generated_dim(self) -> usize {
        match self {
            Task::Mixture2d => 2,
            Task::Mixture3dTo2d => 2,
            Task::Mixture2dTo3d => 3,
            Task::Scurve => 2,
            Task::Graph => 2,
            Task::Style => 64,
        }
    }

    /// Dimension of the reference data (0 when only relational structure
    /// exists, i.e. the graph task).
    pub fn data_dim(self) -> usize {
        match self {
            Task::Mixture2d => 2,
            Task::Mixture3dTo2d => 3,
            Task::Mixture2dTo3d => 2,
            Task::Scurve => 3,
            Task::Graph => 0,
            Task::Style => 64,
        }
    }
}

fn default_sigma() -> f64 {
    0.5
}
fn default_reference_samples() -> usize {
    1000
}
fn default_scurve_samples() -> usize {
    500
}
fn default_knn_k() -> usize {
    10
}
fn default_communities() -> usize {
    2
}
fn default_community_size() -> usize {
    50
}
fn default_p_in() -> f64 {
    0.5
}
fn default_p_out() -> f64 {
    0.02
}
fn default_glyph_count() -> usize {
    512
}

/// Dataset parameters; which fields matter depends on the task.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Mixture mode centers (rows); dimension must match the task's data dim.
    pub centers: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Reference sample count for evaluation.
    pub reference_samples: usize,
    pub scurve_samples: usize,
    /// k for the k-NN geodesic graph (manifold task).
    pub knn_k: usize,
    pub communities: usize,
    pub community_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Edge-list file overriding the generated community graph.
    pub graph_file: Option<String>,
    pub glyph_count: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            centers: Vec::new(),
            sigma: default_sigma(),
            reference_samples: default_reference_samples(),
            scurve_samples: default_scurve_samples(),
            knn_k: default_knn_k(),
            communities: default_communities(),
            community_size: default_community_size(),
            p_in: default_p_in(),
            p_out: default_p_out(),
            graph_file: None,
            glyph_count: default_glyph_count(),
        }
    }
}

impl DatasetConfig {
    /// Default mixture centers per task when the config leaves them empty.
    pub fn centers_for(&self, task: Task) -> Vec<Vec<f64>> {
        if !self.centers.is_empty() {
            return self.centers.clone();
        }
        match task {
            Task::Mixture2d | Task::Mixture2dTo3d => vec![
                vec![-3.0, -3.0],
                vec![3.0, -3.0],
                vec![-3.0, 3.0],
                vec![3.0, 3.0],
            ],
            // Near-planar 3D arrangement: embeddable in 2D with high
            // centroid-distance correlation.
            Task::Mixture3dTo2d => vec![
                vec![0.0, 0.0, 0.0],
                vec![4.0, 0.0, 0.6],
                vec![0.0, 4.0, -0.6],
                vec![4.0, 4.0, 0.0],
            ],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub noise_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub adv_hidden: Vec<usize>,
    /// Adversary feature dimension; 0 means "same as its input dim" (enables
    /// the closed-form Procrustes).
    pub feature_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            noise_dim: 16,
            gen_hidden: vec![128, 128],
            adv_hidden: vec![128, 128],
            feature_dim: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryChoice {
    Learned,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthChoice {
    Procrustes,
    LayerwiseFull,
    LayerwiseOffdiag,
    SaxeInitOnly,
}

impl From<OrthChoice> for OrthMode {
    fn from(c: OrthChoice) -> Self {
        match c {
            OrthChoice::Procrustes => OrthMode::Procrustes,
            OrthChoice::LayerwiseFull => OrthMode::LayerwiseFull,
            OrthChoice::LayerwiseOffdiag => OrthMode::LayerwiseOffdiag,
            OrthChoice::SaxeInitOnly => OrthMode::SaxeInitOnly,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub lr: f64,
    pub n_g: usize,
    pub batch_size: usize,
    pub total_iters: usize,
    pub beta: f64,
    pub adversary: AdversaryChoice,
    /// 0 = never freeze.
    pub freeze_adversary_at: usize,
    pub orth_mode: OrthChoice,
    /// l1 shaping weight; 0 disables.
    pub l1: f64,
    /// Total-variation weight (style task); 0 disables.
    pub tv: f64,
    pub style_lambda: f64,
    pub style_threshold: f64,
    pub style_gain: f64,
    /// Style activation iteration; 0 means "half the run" (two-phase
    /// protocol).
    pub style_activate_at: usize,
    pub checkpoint_every: usize,
    pub eval_samples: usize,
    pub divergence_threshold: f64,
    pub gw: GwSection,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            n_g: 3,
            batch_size: 256,
            total_iters: 3000,
            beta: 1.0,
            adversary: AdversaryChoice::Identity,
            freeze_adversary_at: 0,
            orth_mode: OrthChoice::Procrustes,
            l1: 0.0,
            tv: 0.0,
            style_lambda: 1.0,
            style_threshold: 0.2,
            style_gain: 6.0,
            style_activate_at: 0,
            checkpoint_every: 500,
            eval_samples: 1000,
            divergence_threshold: 1e6,
            gw: GwSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GwSection {
    pub epsilon: f64,
    pub outer_iters: usize,
    pub sinkhorn_iters: usize,
    pub sinkhorn_tol: f64,
    pub absorption_threshold: f64,
}

impl Default for GwSection {
    fn default() -> Self {
        // Training-loop defaults: moderate epsilon and a lean projection
        // budget per iteration (the solver warm-starts its duals).
        Self {
            epsilon: 0.02,
            outer_iters: 8,
            sinkhorn_iters: 2000,
            sinkhorn_tol: 1e-6,
            absorption_threshold: 1e3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub knn_k: usize,
    pub kmeans_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            knn_k: 10,
            kmeans_seed: 0,
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_out_dir() -> String {
    "out".into()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing config TOML")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.batch_size < 2 {
            bail!("train.batch_size must be >= 2");
        }
        if self.train.total_iters == 0 {
            bail!("train.total_iters must be >= 1");
        }
        let centers = self.dataset.centers_for(self.task);
        match self.task {
            Task::Mixture2d | Task::Mixture3dTo2d | Task::Mixture2dTo3d => {
                let want = self.task.data_dim();
                if centers.is_empty() {
                    bail!("mixture task needs dataset.centers");
                }
                for c in &centers {
                    if c.len() != want {
                        bail!(
                            "dataset.centers entries must have dimension {want} for {:?}",
                            self.task
                        );
                    }
                }
                if !(self.dataset.sigma > 0.0) {
                    bail!("dataset.sigma must be positive");
                }
            }
            Task::Scurve => {
                if self.dataset.knn_k == 0 || self.dataset.knn_k >= self.dataset.scurve_samples {
                    bail!("dataset.knn_k must satisfy 1 <= k < scurve_samples");
                }
                if self.train.batch_size > self.dataset.scurve_samples {
                    bail!("batch size exceeds the S-curve sample count");
                }
            }
            Task::Graph => {
                if self.dataset.graph_file.is_none() {
                    if self.dataset.communities == 0 || self.dataset.community_size == 0 {
                        bail!("graph task needs communities and community_size");
                    }
                    let n = self.dataset.communities * self.dataset.community_size;
                    if self.train.batch_size > n {
                        bail!("batch size exceeds the graph node count");
                    }
                }
            }
            Task::Style => {
                if self.train.batch_size > self.dataset.glyph_count {
                    bail!("batch size exceeds the glyph count");
                }
            }
        }
        if matches!(self.train.adversary, AdversaryChoice::Learned)
            && matches!(self.task, Task::Scurve | Task::Graph)
        {
            bail!("relational tasks provide precomputed distances; use adversary = \"identity\"");
        }
        Ok(())
    }

    pub fn gw_config(&self) -> GwConfig {
        GwConfig {
            epsilon: self.train.gw.epsilon,
            outer_iters: self.train.gw.outer_iters,
            sinkhorn_iters: self.train.gw.sinkhorn_iters,
            sinkhorn_tol: self.train.gw.sinkhorn_tol,
            absorption_threshold: self.train.gw.absorption_threshold,
            seed: self.seed,
        }
    }

    /// The core training config for this experiment.
    pub fn train_config(&self) -> TrainConfig {
        let mut gen_penalties = Vec::new();
        if self.train.l1 > 0.0 {
            gen_penalties.push(GenPenaltySpec::L1 {
                lambda: self.train.l1,
            });
        }
        if self.train.tv > 0.0 {
            gen_penalties.push(GenPenaltySpec::Tv {
                lambda: self.train.tv,
                h: 8,
                w: 8,
            });
        }
        if matches!(self.task, Task::Style) {
            let activate_at = if self.train.style_activate_at > 0 {
                self.train.style_activate_at
            } else {
                self.train.total_iters / 2
            };
            gen_penalties.push(GenPenaltySpec::Style { activate_at });
        }
        let adversary_mode = match (self.train.adversary, self.train.freeze_adversary_at) {
            (AdversaryChoice::Identity, _) => AdversaryMode::Identity,
            (AdversaryChoice::Learned, 0) => AdversaryMode::Learned,
            (AdversaryChoice::Learned, t0) => AdversaryMode::FrozenAfter(t0),
        };
        TrainConfig {
            lr: self.train.lr,
            n_g: self.train.n_g,
            batch_size: self.train.batch_size,
            total_iters: self.train.total_iters,
            gw: self.gw_config(),
            beta: self.train.beta,
            gen_penalties,
            adversary_mode,
            orth_mode: self.train.orth_mode.into(),
            seed: self.seed,
            checkpoint_every: self.train.checkpoint_every,
            eval_samples: self.train.eval_samples,
            divergence_threshold: self.train.divergence_threshold,
        }
    }

    /// Adversary feature dimension for a given input dimension.
    pub fn feature_dim(&self, input_dim: usize) -> usize {
        if self.model.feature_dim == 0 {
            input_dim
        } else {
            self.model.feature_dim
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str("task = \"mixture2d\"").unwrap();
        assert_eq!(cfg.task, Task::Mixture2d);
        assert_eq!(cfg.train.batch_size, 256);
        assert_eq!(cfg.dataset.centers_for(cfg.task).len(), 4);
        assert_eq!(cfg.train.gw.epsilon, 0.02);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let text = r#"
task = "mixture3d_to_2d"
[dataset]
centers = [[0.0, 0.0], [1.0, 1.0]]
"#;
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn style_task_gets_two_phase_schedule() {
        let cfg = ExperimentConfig::from_toml_str(
            "task = \"style\"\n[train]\ntotal_iters = 100\nbatch_size = 32",
        )
        .unwrap();
        let tc = cfg.train_config();
        assert!(tc
            .gen_penalties
            .iter()
            .any(|p| matches!(p, GenPenaltySpec::Style { activate_at: 50 })));
    }

    #[test]
    fn learned_adversary_rejected_for_relational_tasks() {
        let text = "task = \"scurve\"\n[train]\nadversary = \"learned\"\nbatch_size = 64";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }
}
