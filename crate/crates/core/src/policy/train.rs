//! Two-stage curriculum training loop and example sources.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{DataConfig, ModelConfig, TrainConfig};
use super::flow::{sample_noise, FlowSample};
use super::model::{tokenize, MotPolicy, PolicyInput, ViewTokens};
use super::optim::{AdamW, LrSchedule};
use super::params::Expert;
use super::regularize::{drop_views, mask_state};
use super::PolicyError;
use crate::action_space::{ActionMask, EmbodimentCatalog};
use crate::mixture::{ExampleMixture, LoadedDataset, MixtureConfig, MixtureTag, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Action expert only for `stage1` steps, then the full model for `stage2`.
    TwoStage {
        stage1: usize,
        stage2: usize,
    },
    Stage2Only(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

impl Serialize for Stage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl Schedule {
    /// Builds a schedule from its CLI name; `two_stage` splits `steps` evenly.
    pub fn from_name(name: &str, steps: usize) -> Result<Self, PolicyError> {
        match name {
            "two_stage" => Ok(Schedule::TwoStage {
                stage1: steps / 2,
                stage2: steps - steps / 2,
            }),
            "stage2_only" => Ok(Schedule::Stage2Only(steps)),
            other => Err(PolicyError::Config(format!("unknown schedule `{other}`"))),
        }
    }

    pub fn total_steps(&self) -> usize {
        match *self {
            Schedule::TwoStage { stage1, stage2 } => stage1 + stage2,
            Schedule::Stage2Only(n) => n,
        }
    }

    /// Stage of the 0-based step index.
    pub fn stage_at(&self, step: usize) -> Stage {
        match *self {
            Schedule::TwoStage { stage1, .. } if step < stage1 => Stage::One,
            _ => Stage::Two,
        }
    }
}

/// One line of the training log. `step` counts applied updates from 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_loss: Option<f64>,
}

/// Supplies clean `(context, target chunk, mask)` triples.
pub trait ExampleSource {
    fn next_example(&mut self) -> Result<(PolicyInput, Array2<f64>, ActionMask), PolicyError>;
}

/// Seeded 2-D reach task: the goal `g` is written into the first two
/// features of every visual patch and the chunk walks linearly to it,
/// `x1[k] = g · (k + 1) / H`. Only the first two action dims are active.
pub struct SyntheticReach {
    cfg: ModelConfig,
    rng: ChaCha8Rng,
}

impl SyntheticReach {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self, PolicyError> {
        if cfg.vis_feat_dim < 2 || cfg.action_dim < 2 {
            return Err(PolicyError::Config(
                "synthetic reach needs vis_feat_dim ≥ 2 and action_dim ≥ 2".into(),
            ));
        }
        Ok(SyntheticReach {
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl ExampleSource for SyntheticReach {
    fn next_example(&mut self) -> Result<(PolicyInput, Array2<f64>, ActionMask), PolicyError> {
        let c = &self.cfg;
        let goal = [
            self.rng.random_range(-1.0..1.0),
            self.rng.random_range(-1.0..1.0),
        ];
        let mut patches = Array2::zeros((c.patches_per_view, c.vis_feat_dim));
        for mut row in patches.rows_mut() {
            row[0] = goal[0];
            row[1] = goal[1];
        }
        let input = PolicyInput {
            views: vec![ViewTokens { slot: 0, patches }],
            text_ids: tokenize("reach the goal", c.vocab, c.text_tokens),
            proprio: vec![0.0; c.proprio_dim],
        };
        let mut x1 = Array2::zeros((c.horizon, c.action_dim));
        for k in 0..c.horizon {
            let f = (k + 1) as f64 / c.horizon as f64;
            x1[(k, 0)] = goal[0] * f;
            x1[(k, 1)] = goal[1] * f;
        }
        let mut mask = vec![false; c.action_dim];
        mask[0] = true;
        mask[1] = true;
        Ok((input, x1, ActionMask(mask)))
    }
}

/// Examples drawn from trajectory files through the balanced mixture.
pub struct MixtureSource {
    cfg: ModelConfig,
    mixture: ExampleMixture,
}

impl MixtureSource {
    pub fn new(cfg: &ModelConfig, mixture: ExampleMixture) -> Self {
        MixtureSource {
            cfg: cfg.clone(),
            mixture,
        }
    }

    /// Loads `<root>/<dataset>/*.jsonl` for every registry entry present on disk.
    pub fn from_files(
        cfg: &ModelConfig,
        registry: &Path,
        embodiments: &Path,
        root: &Path,
        tag: MixtureTag,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        let mix = MixtureConfig::load(registry, tag)?;
        let catalog = EmbodimentCatalog::load(embodiments)?;
        if catalog.layout.dim() != cfg.action_dim {
            return Err(PolicyError::Config(format!(
                "unified layout has {} dims, model action_dim is {}",
                catalog.layout.dim(),
                cfg.action_dim
            )));
        }
        let mut datasets = Vec::new();
        for e in &mix.entries {
            let dir = root.join(&e.name);
            if !dir.is_dir() {
                continue;
            }
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .filter_map(|d| d.ok().map(|d| d.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            let trajectories = files
                .iter()
                .map(|f| Trajectory::load(f))
                .collect::<Result<Vec<_>, _>>()?;
            let spec = catalog.get(&e.embodiment)?.clone();
            datasets.push(LoadedDataset::new(
                e.name.clone(),
                spec,
                trajectories,
                e.step as usize,
                cfg.horizon,
            ));
        }
        let mixture = ExampleMixture::new(&mix, datasets, catalog, seed)?;
        Ok(MixtureSource::new(cfg, mixture))
    }
}

impl ExampleSource for MixtureSource {
    fn next_example(&mut self) -> Result<(PolicyInput, Array2<f64>, ActionMask), PolicyError> {
        let ex = self.mixture.next_example()?;
        let input = PolicyInput::from_example(&ex, &self.cfg)?;
        Ok((input, ex.chunk.values().clone(), ex.chunk.mask().clone()))
    }
}

/// Builds the example source a run config asks for.
pub fn source_from_config(
    data: &DataConfig,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<Box<dyn ExampleSource>, PolicyError> {
    Ok(match data {
        DataConfig::SyntheticReach => Box::new(SyntheticReach::new(cfg, seed)?),
        DataConfig::Trajectories {
            registry,
            embodiments,
            root,
            mixture,
        } => {
            let tag: MixtureTag = mixture.parse().map_err(PolicyError::Mixture)?;
            Box::new(MixtureSource::from_files(
                cfg,
                Path::new(registry),
                Path::new(embodiments),
                Path::new(root),
                tag,
                seed,
            )?)
        }
    })
}

/// Draws `n` flow samples: `τ ∼ U[0,1]`, `x0 ∼ N(0, I)`, and, when
/// `regularize` is set, per-sample state masking and view dropping.
pub fn make_flow_batch(
    source: &mut dyn ExampleSource,
    n: usize,
    train: &TrainConfig,
    regularize: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FlowSample>, PolicyError> {
    (0..n)
        .map(|_| {
            let (mut input, x1, mask) = source.next_example()?;
            if regularize {
                input.proprio = mask_state(&input.proprio, train.state_mask_p, rng);
                if !input.views.is_empty() {
                    input.views = drop_views(&input.views, train.view_drop_p, rng)?;
                }
            }
            let tau: f64 = rng.random_range(0.0..=1.0);
            let x0 = sample_noise(rng.random(), x1.nrows(), x1.ncols());
            FlowSample::new(x0, x1, tau, input, mask)
        })
        .collect()
}

pub struct TrainOptions {
    pub schedule: Schedule,
    pub seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<MetricRecord>,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub checkpoints: Vec<PathBuf>,
}

/// Runs the curriculum. During stage one the semantic expert's tensors are
/// not touched at all, so they stay bit-identical. A single warmup-cosine
/// schedule spans both stages; each stage scales it by its own peak rate.
///
/// `observer` sees each record and the model right after the update.
pub fn train(
    policy: &mut MotPolicy,
    cfg: &TrainConfig,
    source: &mut dyn ExampleSource,
    opts: &TrainOptions,
    observer: &mut dyn FnMut(&MetricRecord, &MotPolicy),
) -> Result<TrainOutcome, PolicyError> {
    let total = opts.schedule.total_steps();
    let lr_schedule = LrSchedule::new(total, cfg.warmup_ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_e7a1);
    let eval_batch = make_flow_batch(
        source,
        cfg.eval_batch_size.max(1),
        cfg,
        false,
        &mut eval_rng,
    )?;
    let initial_eval_loss = policy.loss_and_grads(&eval_batch)?.0;

    let shapes: Vec<_> = policy.params().values().iter().map(|v| v.dim()).collect();
    let experts: Vec<Expert> = policy.params().specs().iter().map(|s| s.expert).collect();
    let mut opt = AdamW::new(shapes, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    let mut records = Vec::with_capacity(total);
    let mut checkpoints = Vec::new();

    for k in 0..total {
        let stage = opts.schedule.stage_at(k);
        let peak = match stage {
            Stage::One => cfg.stage1_lr,
            Stage::Two => cfg.stage2_lr,
        };
        let lr = lr_schedule.lr(k, peak);
        let batch = make_flow_batch(source, cfg.batch_size, cfg, true, &mut rng)?;
        let (loss, grads) = policy.loss_and_grads(&batch)?;
        if !loss.is_finite() {
            return Err(PolicyError::DivergedLoss { step: k + 1, loss });
        }
        for (i, g) in grads.iter().enumerate() {
            if stage == Stage::One && experts[i] == Expert::Semantic {
                continue;
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(PolicyError::NonFiniteGradient(
                    policy.params().specs()[i].name.clone(),
                ));
            }
            opt.step(i, &mut policy.params_mut().values_mut()[i], g, lr);
        }

        let step = k + 1;
        let eval_loss = (cfg.eval_every > 0 && step % cfg.eval_every == 0)
            .then(|| policy.loss_and_grads(&eval_batch).map(|r| r.0))
            .transpose()?;
        let rec = MetricRecord {
            step,
            loss,
            lr,
            stage,
            eval_loss,
        };
        observer(&rec, policy);
        records.push(rec);

        if let Some(dir) = &opts.checkpoint_dir {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != total {
                checkpoints.push(policy.params().save(dir, &format!("step_{step:06}"))?.0);
            }
        }
    }

    if let Some(dir) = &opts.checkpoint_dir {
        checkpoints.push(policy.params().save(dir, "final")?.0);
    }
    let final_eval_loss = policy.loss_and_grads(&eval_batch)?.0;
    if !final_eval_loss.is_finite() {
        return Err(PolicyError::DivergedLoss {
            step: total,
            loss: final_eval_loss,
        });
    }
    Ok(TrainOutcome {
        records,
        initial_eval_loss,
        final_eval_loss,
        checkpoints,
    })
}
