use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Toy-scale dual-expert transformer dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub sem_hidden: usize,
    pub act_hidden: usize,
    /// Shared by both experts; `heads × head_dim` is the attention width.
    pub heads: usize,
    pub head_dim: usize,
    pub layers: usize,
    pub horizon: usize,
    pub action_dim: usize,
    pub proprio_dim: usize,
    pub euler_steps: usize,
    pub ffn_mult: usize,
    pub vis_feat_dim: usize,
    pub patches_per_view: usize,
    pub max_views: usize,
    pub text_tokens: usize,
    pub vocab: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sem_hidden: 64,
            act_hidden: 32,
            heads: 4,
            head_dim: 8,
            layers: 4,
            horizon: 16,
            action_dim: 42,
            proprio_dim: 42,
            euler_steps: 10,
            ffn_mult: 2,
            vis_feat_dim: 16,
            patches_per_view: 4,
            max_views: 2,
            text_tokens: 8,
            vocab: 128,
            init_std: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn inner_width(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let positive = [
            ("sem_hidden", self.sem_hidden),
            ("act_hidden", self.act_hidden),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("layers", self.layers),
            ("horizon", self.horizon),
            ("action_dim", self.action_dim),
            ("euler_steps", self.euler_steps),
            ("ffn_mult", self.ffn_mult),
            ("vis_feat_dim", self.vis_feat_dim),
            ("patches_per_view", self.patches_per_view),
            ("max_views", self.max_views),
            ("vocab", self.vocab),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PolicyError::Config(format!("{name} must be positive")));
            }
        }
        if !self.act_hidden.is_multiple_of(2) {
            return Err(PolicyError::Config("act_hidden must be even".into()));
        }
        Ok(())
    }
}

/// Optimizer, schedule and regularizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Peak learning rate while only the action expert trains.
    pub stage1_lr: f64,
    /// Peak learning rate once the whole model trains.
    pub stage2_lr: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Probability of zeroing the whole proprioceptive vector.
    pub state_mask_p: f64,
    /// Independent per-view drop probability.
    pub view_drop_p: f64,
    pub eval_batch_size: usize,
    pub eval_every: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            stage1_lr: 1e-4,
            stage2_lr: 2e-5,
            weight_decay: 1e-5,
            warmup_ratio: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            state_mask_p: 0.2,
            view_drop_p: 0.2,
            eval_batch_size: 32,
            eval_every: 0,
            checkpoint_every: 0,
        }
    }
}

/// Where training examples come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataConfig {
    /// Seeded 2-D reach-to-goal chunks.
    #[default]
    SyntheticReach,
    /// Registry plus a directory of `<dataset>/*.jsonl` trajectories.
    Trajectories {
        registry: String,
        embodiments: String,
        root: String,
        #[serde(default = "default_mixture")]
        mixture: String,
    },
}

fn default_mixture() -> String {
    "custom".into()
}

/// Top-level run file: `[model]`, `[train]`, `[data]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| PolicyError::Config(e.to_string()))?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PolicyError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
