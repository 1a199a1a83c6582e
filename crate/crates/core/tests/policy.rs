mod common;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vlascale::action_space::ActionMask;
use vlascale::policy::{
    drop_views, euler_sample, fm_loss, grad_check, make_flow_batch, mask_state, sample_indices,
    sample_noise, shared_attention, train, view_features, ExampleSource, Expert, FlowObjective,
    FlowSample, LayerWeights, ModelConfig, MotPolicy, PolicyInput, Schedule, SyntheticReach,
    TrainConfig, TrainOptions, VelocityField,
};

fn small() -> ModelConfig {
    ModelConfig {
        sem_hidden: 12,
        act_hidden: 8,
        heads: 2,
        head_dim: 4,
        layers: 2,
        horizon: 4,
        action_dim: 5,
        proprio_dim: 5,
        vis_feat_dim: 3,
        patches_per_view: 2,
        max_views: 2,
        text_tokens: 3,
        vocab: 16,
        seed: 3,
        ..ModelConfig::default()
    }
}

fn reach_cfg() -> ModelConfig {
    ModelConfig {
        sem_hidden: 16,
        act_hidden: 16,
        heads: 2,
        head_dim: 8,
        layers: 2,
        horizon: 4,
        action_dim: 2,
        proprio_dim: 2,
        vis_feat_dim: 2,
        patches_per_view: 1,
        max_views: 1,
        text_tokens: 2,
        vocab: 16,
        ..ModelConfig::default()
    }
}

fn random_batch(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<FlowSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let input = PolicyInput {
                views: vec![vlascale::policy::ViewTokens {
                    slot: i % cfg.max_views,
                    patches: view_features(
                        &format!("v{seed}-{i}"),
                        cfg.patches_per_view,
                        cfg.vis_feat_dim,
                    ),
                }],
                text_ids: vec![(i * 5) % cfg.vocab, 2],
                proprio: sample_noise(seed + i as u64, 1, cfg.proprio_dim)
                    .row(0)
                    .to_vec(),
            };
            let mut mask = vec![true; cfg.action_dim];
            mask[i % cfg.action_dim] = false;
            let x0 = sample_noise(100 + seed + i as u64, cfg.horizon, cfg.action_dim);
            let x1 = sample_noise(200 + seed + i as u64, cfg.horizon, cfg.action_dim);
            let tau = rand::Rng::random_range(&mut rng, 0.0..1.0);
            FlowSample::new(x0, x1, tau, input, ActionMask(mask)).unwrap()
        })
        .collect()
}

#[test]
fn shared_attention_matches_block_assembled_single_sequence() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (heads, hd) = (1 + seed as usize % 3, 2 + seed as usize % 4);
        let (ds, da) = (6 + seed as usize % 5, 4 + seed as usize % 3);
        let sw = LayerWeights::random(ds, heads * hd, 2 * ds, &mut rng);
        let aw = LayerWeights::random(da, heads * hd, 2 * da, &mut rng);
        let sem = sample_noise(seed, 1 + seed as usize % 6, ds);
        let act = sample_noise(seed + 99, 1 + seed as usize % 4, da);
        let (s1, a1) = shared_attention(&sem, &act, &sw, &aw, heads, hd).unwrap();
        let (s2, a2) = common::single_sequence_attention(&sem, &act, &sw, &aw, heads, hd);
        let err = (&s1 - &s2)
            .iter()
            .chain((&a1 - &a2).iter())
            .fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

// ---- gradients ----

#[test]
fn full_model_gradient_matches_finite_differences() {
    let cfg = small();
    let policy = MotPolicy::new(cfg.clone()).unwrap();
    let batch = random_batch(&cfg, 3, 11);
    let n = policy.params().num_scalars();
    let idx = sample_indices(n, 300, 1);
    let mut obj = FlowObjective {
        policy,
        batch: &batch,
    };
    let err = grad_check(&mut obj, &idx, 1e-5).unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn zero_loss_batch_is_stationary() {
    let cfg = small();
    let policy = MotPolicy::new(cfg.clone()).unwrap();
    let batch: Vec<FlowSample> = random_batch(&cfg, 3, 12)
        .into_iter()
        .map(|s| {
            let v = policy.velocity(&s.x0, 0.0, &s.input, &s.mask).unwrap();
            FlowSample::new(s.x0.clone(), &s.x0 + &v, 0.0, s.input, s.mask).unwrap()
        })
        .collect();
    let (loss, grads) = policy.loss_and_grads(&batch).unwrap();
    assert!(loss < 1e-20);
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    assert!(norm < 1e-10, "{norm}");
}

#[test]
fn masked_targets_carry_no_gradient() {
    let cfg = small();
    let policy = MotPolicy::new(cfg.clone()).unwrap();
    let batch = random_batch(&cfg, 4, 13);
    let perturbed: Vec<FlowSample> = batch
        .iter()
        .map(|s| {
            let mut x1 = s.x1.clone();
            for (j, &m) in s.mask.0.iter().enumerate() {
                if !m {
                    x1.column_mut(j).mapv_inplace(|v| v + 17.0);
                }
            }
            FlowSample::new(s.x0.clone(), x1, s.tau, s.input.clone(), s.mask.clone()).unwrap()
        })
        .collect();
    let (l1, g1) = policy.loss_and_grads(&batch).unwrap();
    let (l2, g2) = policy.loss_and_grads(&perturbed).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(g1, g2);
}

#[test]
fn graph_loss_agrees_with_field_loss() {
    let cfg = small();
    let policy = MotPolicy::new(cfg.clone()).unwrap();
    let batch = random_batch(&cfg, 4, 14);
    let (graph, _) = policy.loss_and_grads(&batch).unwrap();
    let field = fm_loss(&policy, &batch).unwrap();
    assert!((graph - field).abs() < 1e-12);
}

// ---- sampling ----

#[test]
fn oracle_field_transports_exactly() {
    let mask = ActionMask(vec![true, true, false]);
    let input = PolicyInput {
        views: vec![],
        text_ids: vec![0],
        proprio: vec![],
    };
    let mut x1 = sample_noise(50, 6, 3);
    x1.column_mut(2).fill(0.0);
    for steps in [1, 2, 5, 10, 50] {
        let x0 = sample_noise(9, 6, 3);
        let target = &x1 - &x0;
        let field =
            move |_x: &Array2<f64>, _t: f64, _c: &PolicyInput, _m: &ActionMask| target.clone();
        let out = euler_sample(&field, &input, &mask, 6, steps, 9).unwrap();
        let err = (out.values() - &x1)
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(err < 1e-12, "steps {steps}: {err}");
    }
}

#[test]
fn model_sampling_is_deterministic() {
    let cfg = small();
    let policy = MotPolicy::new(cfg.clone()).unwrap();
    let input = random_batch(&cfg, 1, 15).remove(0).input;
    let mask = ActionMask(vec![true, false, true, true, false]);
    let a = policy.sample(&input, &mask, 4).unwrap();
    let b = policy.sample(&input, &mask, 4).unwrap();
    let c = policy.sample(&input, &mask, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.values().column(1).iter().all(|&v| v == 0.0));
}

// ---- regularizers ----

#[test]
fn state_masking_frequency() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 100_000;
    let zeroed = (0..n)
        .filter(|_| mask_state(&[1.0, 2.0], 0.2, &mut rng) == [0.0, 0.0])
        .count();
    let f = zeroed as f64 / n as f64;
    assert!((f - 0.2).abs() < 0.005, "{f}");
}

#[test]
fn view_retention_frequency_includes_rescue() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 100_000;
    let mut kept = [0usize; 3];
    for _ in 0..n {
        for v in drop_views(&[0usize, 1, 2], 0.2, &mut rng).unwrap() {
            kept[v] += 1;
        }
    }
    let expected = 0.8 + 0.2f64.powi(3) / 3.0;
    for k in kept {
        let f = k as f64 / n as f64;
        assert!((f - expected).abs() < 0.005, "{f} vs {expected}");
    }
}

// ---- training ----

fn fast_train() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        eval_batch_size: 32,
        stage1_lr: 3e-3,
        stage2_lr: 3e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn stage_one_freezes_semantic_expert() {
    let cfg = reach_cfg();
    let mut policy = MotPolicy::new(cfg.clone()).unwrap();
    let mut src = SyntheticReach::new(&cfg, 2).unwrap();
    let before = policy.params().snapshot(Expert::Semantic);
    let act_before = policy.params().snapshot(Expert::Action);
    let mut seen = Vec::new();
    let opts = TrainOptions {
        schedule: Schedule::TwoStage {
            stage1: 10,
            stage2: 10,
        },
        seed: 4,
        checkpoint_dir: None,
    };
    let tc = TrainConfig {
        batch_size: 4,
        eval_batch_size: 4,
        ..fast_train()
    };
    train(&mut policy, &tc, &mut src, &opts, &mut |rec, p| {
        seen.push((rec.step, p.params().snapshot(Expert::Semantic) == before));
    })
    .unwrap();
    for (step, same) in &seen {
        assert_eq!(*same, *step <= 10, "step {step}");
    }
    assert_ne!(policy.params().snapshot(Expert::Action), act_before);
}

#[test]
fn stage_two_only_halves_held_out_loss() {
    let cfg = reach_cfg();
    let mut policy = MotPolicy::new(cfg.clone()).unwrap();
    let mut src = SyntheticReach::new(&cfg, 3).unwrap();
    let opts = TrainOptions {
        schedule: Schedule::Stage2Only(200),
        seed: 5,
        checkpoint_dir: None,
    };
    let out = train(&mut policy, &fast_train(), &mut src, &opts, &mut |_, _| {}).unwrap();
    assert!(
        out.final_eval_loss < 0.5 * out.initial_eval_loss,
        "{} -> {}",
        out.initial_eval_loss,
        out.final_eval_loss
    );
}

#[test]
fn training_logs_are_reproducible_and_checkpoints_reload() {
    let cfg = reach_cfg();
    let dir = tempfile::tempdir().unwrap();
    let run = |ckpt: Option<std::path::PathBuf>| {
        let mut policy = MotPolicy::new(cfg.clone()).unwrap();
        let mut src = SyntheticReach::new(&cfg, 6).unwrap();
        let opts = TrainOptions {
            schedule: Schedule::TwoStage {
                stage1: 3,
                stage2: 3,
            },
            seed: 7,
            checkpoint_dir: ckpt,
        };
        let tc = TrainConfig {
            batch_size: 4,
            eval_batch_size: 4,
            checkpoint_every: 2,
            ..fast_train()
        };
        let out = train(&mut policy, &tc, &mut src, &opts, &mut |_, _| {}).unwrap();
        (out, policy)
    };
    let (a, pa) = run(Some(dir.path().to_path_buf()));
    let (b, _) = run(None);
    assert_eq!(a.records, b.records);
    assert_eq!(a.checkpoints.len(), 3);

    let mut fresh = MotPolicy::new(cfg.clone()).unwrap();
    fresh.params_mut().load_into(dir.path(), "final").unwrap();
    assert_eq!(fresh.params(), pa.params());
}

#[test]
fn flow_batches_apply_regularizers_per_sample() {
    let cfg = reach_cfg();
    let mut src = SyntheticReach::new(&cfg, 8).unwrap();
    let tc = TrainConfig {
        state_mask_p: 1.0,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = make_flow_batch(&mut src, 8, &tc, true, &mut rng).unwrap();
    assert!(batch
        .iter()
        .all(|s| s.input.proprio.iter().all(|&v| v == 0.0)));
    assert!(batch.iter().all(|s| s.input.views.len() == 1));
    assert!(batch.iter().all(|s| (0.0..=1.0).contains(&s.tau)));
    let (_, x1, _) = src.next_example().unwrap();
    assert_eq!(x1.dim(), (cfg.horizon, cfg.action_dim));
}
