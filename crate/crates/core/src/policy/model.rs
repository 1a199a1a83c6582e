//! Dual-expert transformer with layerwise shared causal attention.
//!
//! The semantic expert carries visual and instruction tokens; the action
//! expert carries one proprioceptive state token and `H` action-latent
//! tokens. At every layer both streams project into the same
//! `heads × head_dim` width, attend jointly over the concatenated sequence
//! `[sem ‖ act]`, and split again for their own output projection and
//! feed-forward block.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autograd::{Graph, Var};
use super::config::ModelConfig;
use super::params::{Expert, ParamId, ParamStore};
use super::PolicyError;
use crate::action_space::ActionMask;
use crate::mixture::Example;

/// Weights of one expert's transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub norm1: Array2<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub norm2: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

impl LayerWeights {
    pub fn random(hidden: usize, inner: usize, ffn: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut n = |r: usize, c: usize, std: f64| {
            Array2::from_shape_simple_fn((r, c), || {
                let z: f64 = StandardNormal.sample(&mut *rng);
                std * z
            })
        };
        LayerWeights {
            norm1: n(1, hidden, 0.1) + 1.0,
            wq: n(hidden, inner, (hidden as f64).powf(-0.5)),
            wk: n(hidden, inner, (hidden as f64).powf(-0.5)),
            wv: n(hidden, inner, (hidden as f64).powf(-0.5)),
            wo: n(inner, hidden, (inner as f64).powf(-0.5)),
            norm2: n(1, hidden, 0.1) + 1.0,
            w1: n(hidden, ffn, (hidden as f64).powf(-0.5)),
            b1: n(1, ffn, 0.1),
            w2: n(ffn, hidden, (ffn as f64).powf(-0.5)),
            b2: n(1, hidden, 0.1),
        }
    }

    fn bind(&self, g: &mut Graph) -> LayerVars {
        LayerVars {
            norm1: g.constant(self.norm1.clone()),
            wq: g.constant(self.wq.clone()),
            wk: g.constant(self.wk.clone()),
            wv: g.constant(self.wv.clone()),
            wo: g.constant(self.wo.clone()),
            norm2: g.constant(self.norm2.clone()),
            w1: g.constant(self.w1.clone()),
            b1: g.constant(self.b1.clone()),
            w2: g.constant(self.w2.clone()),
            b2: g.constant(self.b2.clone()),
        }
    }
}

/// Graph handles for one expert block.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub norm1: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub norm2: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

fn ffn_block(g: &mut Graph, x: Var, w: &LayerVars) -> Var {
    let n = g.rms_norm(x, w.norm2);
    let h = g.matmul(n, w.w1);
    let h = g.add_row(h, w.b1);
    let h = g.gelu(h);
    let h = g.matmul(h, w.w2);
    let h = g.add_row(h, w.b2);
    g.add(x, h)
}

/// One block of both experts: pre-norm shared causal attention over
/// `[sem ‖ act]`, then per-expert output projection and feed-forward.
///
/// With `act = None` this is an ordinary single-expert causal block.
pub fn shared_attention_block(
    g: &mut Graph,
    sem: Var,
    act: Option<Var>,
    sw: &LayerVars,
    aw: &LayerVars,
    heads: usize,
    head_dim: usize,
) -> Result<(Var, Option<Var>), PolicyError> {
    let inner = heads * head_dim;
    let sem_inner = g.shape(sw.wq).1;
    if sem_inner != inner {
        return Err(PolicyError::ShapeMismatch(format!(
            "semantic attention width {sem_inner} != heads × head_dim = {inner}"
        )));
    }
    if act.is_some() {
        let act_inner = g.shape(aw.wq).1;
        if act_inner != sem_inner {
            return Err(PolicyError::ShapeMismatch(format!(
                "attention widths differ: semantic {sem_inner}, action {act_inner}"
            )));
        }
    }

    let project = |g: &mut Graph, x: Var, w: &LayerVars| {
        let n = g.rms_norm(x, w.norm1);
        (g.matmul(n, w.wq), g.matmul(n, w.wk), g.matmul(n, w.wv))
    };
    let (qs, ks, vs) = project(g, sem, sw);
    let n_sem = g.shape(sem).0;
    let (q, k, v) = match act {
        Some(a) => {
            let (qa, ka, va) = project(g, a, aw);
            (
                g.concat_rows(&[qs, qa]),
                g.concat_rows(&[ks, ka]),
                g.concat_rows(&[vs, va]),
            )
        }
        None => (qs, ks, vs),
    };

    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * head_dim, head_dim);
        let kh = g.slice_cols(k, h * head_dim, head_dim);
        let vh = g.slice_cols(v, h * head_dim, head_dim);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt);
        let scores = g.scale(scores, scale);
        let p = g.causal_softmax(scores);
        outs.push(g.matmul(p, vh));
    }
    let o = g.concat_cols(&outs);

    let os = if act.is_some() {
        g.slice_rows(o, 0, n_sem)
    } else {
        o
    };
    let proj = g.matmul(os, sw.wo);
    let sem_out = g.add(sem, proj);
    let sem_out = ffn_block(g, sem_out, sw);

    let act_out = match act {
        Some(a) => {
            let n_act = g.shape(a).0;
            let oa = g.slice_rows(o, n_sem, n_act);
            let proj = g.matmul(oa, aw.wo);
            let h = g.add(a, proj);
            Some(ffn_block(g, h, aw))
        }
        None => None,
    };
    Ok((sem_out, act_out))
}

/// Evaluates [`shared_attention_block`] on plain arrays. An action stream
/// with zero rows is treated as absent.
pub fn shared_attention(
    sem_x: &Array2<f64>,
    act_x: &Array2<f64>,
    sem_w: &LayerWeights,
    act_w: &LayerWeights,
    heads: usize,
    head_dim: usize,
) -> Result<(Array2<f64>, Array2<f64>), PolicyError> {
    let mut g = Graph::new();
    let sw = sem_w.bind(&mut g);
    let aw = act_w.bind(&mut g);
    let sem = g.constant(sem_x.clone());
    let act = (act_x.nrows() > 0).then(|| g.constant(act_x.clone()));
    let (s, a) = shared_attention_block(&mut g, sem, act, &sw, &aw, heads, head_dim)?;
    let act_out = match a {
        Some(a) => g.value(a).clone(),
        None => Array2::zeros((0, act_x.ncols())),
    };
    Ok((g.value(s).clone(), act_out))
}

/// Sinusoidal features of the flow time `τ ∈ [0, 1]`, shape `1 × dim`.
pub fn tau_embedding(tau: f64, dim: usize) -> Array2<f64> {
    let half = dim / 2;
    let mut out = Array2::zeros((1, dim));
    for i in 0..half {
        let freq = (i as f64 * (1000f64).ln() / half.max(1) as f64).exp();
        out[(0, 2 * i)] = (tau * freq).sin();
        out[(0, 2 * i + 1)] = (tau * freq).cos();
    }
    out
}

/// FNV-1a, used for instruction-token and view-feature hashing.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Lower-cased whitespace tokens hashed into `vocab` buckets.
pub fn tokenize(instruction: &str, vocab: usize, max_tokens: usize) -> Vec<usize> {
    instruction
        .split_whitespace()
        .map(|w| (fnv1a(w.to_lowercase().as_bytes()) % vocab as u64) as usize)
        .take(max_tokens)
        .collect()
}

/// Deterministic stand-in features for a camera view reference.
pub fn view_features(view_id: &str, patches: usize, dim: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(view_id.as_bytes()));
    Array2::from_shape_simple_fn((patches, dim), || StandardNormal.sample(&mut rng))
}

/// One camera view: its slot index and `patches × vis_feat_dim` features.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewTokens {
    pub slot: usize,
    pub patches: Array2<f64>,
}

/// Conditioning context for the velocity field.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyInput {
    pub views: Vec<ViewTokens>,
    pub text_ids: Vec<usize>,
    pub proprio: Vec<f64>,
}

impl PolicyInput {
    pub fn from_example(ex: &Example, cfg: &ModelConfig) -> Result<Self, PolicyError> {
        if ex.proprio.len() != cfg.proprio_dim {
            return Err(PolicyError::ShapeMismatch(format!(
                "proprio has {} entries, model expects {}",
                ex.proprio.len(),
                cfg.proprio_dim
            )));
        }
        let views = ex
            .view_ids
            .iter()
            .take(cfg.max_views)
            .enumerate()
            .map(|(slot, id)| ViewTokens {
                slot,
                patches: view_features(id, cfg.patches_per_view, cfg.vis_feat_dim),
            })
            .collect();
        Ok(PolicyInput {
            views,
            text_ids: tokenize(&ex.instruction, cfg.vocab, cfg.text_tokens),
            proprio: ex.proprio.clone(),
        })
    }
}

#[derive(Clone, Debug)]
struct LayerIds {
    norm1: ParamId,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    norm2: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl LayerIds {
    fn add(store: &mut ParamStore, prefix: &str, expert: Expert, w: LayerWeights) -> Self {
        let mut add = |name: &str, v: Array2<f64>| store.add(format!("{prefix}.{name}"), expert, v);
        LayerIds {
            norm1: add("norm1", w.norm1),
            wq: add("wq", w.wq),
            wk: add("wk", w.wk),
            wv: add("wv", w.wv),
            wo: add("wo", w.wo),
            norm2: add("norm2", w.norm2),
            w1: add("w1", w.w1),
            b1: add("b1", w.b1),
            w2: add("w2", w.w2),
            b2: add("b2", w.b2),
        }
    }

    fn vars(&self, bound: &[Var]) -> LayerVars {
        LayerVars {
            norm1: bound[self.norm1.0],
            wq: bound[self.wq.0],
            wk: bound[self.wk.0],
            wv: bound[self.wv.0],
            wo: bound[self.wo.0],
            norm2: bound[self.norm2.0],
            w1: bound[self.w1.0],
            b1: bound[self.b1.0],
            w2: bound[self.w2.0],
            b2: bound[self.b2.0],
        }
    }

    fn weights(&self, s: &ParamStore) -> LayerWeights {
        LayerWeights {
            norm1: s.get(self.norm1).clone(),
            wq: s.get(self.wq).clone(),
            wk: s.get(self.wk).clone(),
            wv: s.get(self.wv).clone(),
            wo: s.get(self.wo).clone(),
            norm2: s.get(self.norm2).clone(),
            w1: s.get(self.w1).clone(),
            b1: s.get(self.b1).clone(),
            w2: s.get(self.w2).clone(),
            b2: s.get(self.b2).clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct ModelIds {
    vis_proj: ParamId,
    vis_bias: ParamId,
    view_emb: ParamId,
    patch_pos: ParamId,
    tok_emb: ParamId,
    text_pos: ParamId,
    sem_layers: Vec<LayerIds>,
    state_proj: ParamId,
    state_bias: ParamId,
    in_proj: ParamId,
    in_bias: ParamId,
    act_pos: ParamId,
    act_layers: Vec<LayerIds>,
    out_norm: ParamId,
    out_proj: ParamId,
    out_bias: ParamId,
}

/// The toy mixture-of-transformers flow policy.
#[derive(Clone, Debug)]
pub struct MotPolicy {
    cfg: ModelConfig,
    store: ParamStore,
    ids: ModelIds,
}

impl MotPolicy {
    pub fn new(cfg: ModelConfig) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let (sh, ah, inner) = (cfg.sem_hidden, cfg.act_hidden, cfg.inner_width());
        let std = cfg.init_std;
        let fan = |n: usize| (n as f64).powf(-0.5);
        use Expert::{Action, Semantic};

        let vis_proj = store.add_normal(
            "sem.vis_proj",
            Semantic,
            (cfg.vis_feat_dim, sh),
            fan(cfg.vis_feat_dim),
            &mut rng,
        );
        let vis_bias = store.add("sem.vis_bias", Semantic, Array2::zeros((1, sh)));
        let view_emb =
            store.add_normal("sem.view_emb", Semantic, (cfg.max_views, sh), std, &mut rng);
        let patch_pos = store.add_normal(
            "sem.patch_pos",
            Semantic,
            (cfg.patches_per_view, sh),
            std,
            &mut rng,
        );
        let tok_emb = store.add_normal("sem.tok_emb", Semantic, (cfg.vocab, sh), 1.0, &mut rng);
        let text_pos = store.add_normal(
            "sem.text_pos",
            Semantic,
            (cfg.text_tokens, sh),
            std,
            &mut rng,
        );
        let sem_layers = (0..cfg.layers)
            .map(|l| {
                let w = LayerWeights::random(sh, inner, sh * cfg.ffn_mult, &mut rng);
                LayerIds::add(&mut store, &format!("sem.layer{l}"), Semantic, w)
            })
            .collect();

        let state_proj = store.add_normal(
            "act.state_proj",
            Action,
            (cfg.proprio_dim.max(1), ah),
            fan(cfg.proprio_dim.max(1)),
            &mut rng,
        );
        let state_bias = store.add("act.state_bias", Action, Array2::zeros((1, ah)));
        let in_proj = store.add_normal(
            "act.in_proj",
            Action,
            (cfg.action_dim, ah),
            fan(cfg.action_dim),
            &mut rng,
        );
        let in_bias = store.add("act.in_bias", Action, Array2::zeros((1, ah)));
        let act_pos = store.add_normal("act.pos", Action, (cfg.horizon, ah), std, &mut rng);
        let act_layers = (0..cfg.layers)
            .map(|l| {
                let w = LayerWeights::random(ah, inner, ah * cfg.ffn_mult, &mut rng);
                LayerIds::add(&mut store, &format!("act.layer{l}"), Action, w)
            })
            .collect();
        let out_norm = store.add("act.out_norm", Action, Array2::ones((1, ah)));
        let out_proj = store.add_normal(
            "act.out_proj",
            Action,
            (ah, cfg.action_dim),
            fan(ah),
            &mut rng,
        );
        let out_bias = store.add("act.out_bias", Action, Array2::zeros((1, cfg.action_dim)));

        Ok(MotPolicy {
            cfg,
            store,
            ids: ModelIds {
                vis_proj,
                vis_bias,
                view_emb,
                patch_pos,
                tok_emb,
                text_pos,
                sem_layers,
                state_proj,
                state_bias,
                in_proj,
                in_bias,
                act_pos,
                act_layers,
                out_norm,
                out_proj,
                out_bias,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// `(semantic, action)` weights of block `l`.
    pub fn layer_weights(&self, l: usize) -> (LayerWeights, LayerWeights) {
        (
            self.ids.sem_layers[l].weights(&self.store),
            self.ids.act_layers[l].weights(&self.store),
        )
    }

    fn sem_tokens(
        &self,
        g: &mut Graph,
        p: &[Var],
        input: &PolicyInput,
    ) -> Result<Var, PolicyError> {
        let cfg = &self.cfg;
        let mut parts = Vec::new();
        for view in &input.views {
            if view.slot >= cfg.max_views
                || view.patches.dim() != (cfg.patches_per_view, cfg.vis_feat_dim)
            {
                return Err(PolicyError::ShapeMismatch(format!(
                    "view slot {} with patches {:?}",
                    view.slot,
                    view.patches.dim()
                )));
            }
            let x = g.constant(view.patches.clone());
            let h = g.matmul(x, p[self.ids.vis_proj.0]);
            let h = g.add_row(h, p[self.ids.vis_bias.0]);
            let slot = g.gather(p[self.ids.view_emb.0], &[view.slot]);
            let h = g.add_row(h, slot);
            parts.push(g.add(h, p[self.ids.patch_pos.0]));
        }
        let n_text = input.text_ids.len().min(cfg.text_tokens);
        if n_text > 0 {
            if input.text_ids.iter().any(|&t| t >= cfg.vocab) {
                return Err(PolicyError::ShapeMismatch("token id outside vocab".into()));
            }
            let t = g.gather(p[self.ids.tok_emb.0], &input.text_ids[..n_text]);
            let pos = g.slice_rows(p[self.ids.text_pos.0], 0, n_text);
            parts.push(g.add(t, pos));
        }
        if parts.is_empty() {
            return Err(PolicyError::ShapeMismatch(
                "no visual or instruction tokens".into(),
            ));
        }
        Ok(g.concat_rows(&parts))
    }

    /// Predicted velocity at `x_tau` and flow time `tau`, as an `H × D` graph node.
    /// Masked-out dims of `x_tau` are zeroed before entering the model.
    pub fn velocity_var(
        &self,
        g: &mut Graph,
        p: &[Var],
        input: &PolicyInput,
        x_tau: &Array2<f64>,
        tau: f64,
        mask: &ActionMask,
    ) -> Result<Var, PolicyError> {
        let cfg = &self.cfg;
        if x_tau.dim() != (cfg.horizon, cfg.action_dim) || mask.len() != cfg.action_dim {
            return Err(PolicyError::ShapeMismatch(format!(
                "action chunk {:?} (mask {}), model expects {}×{}",
                x_tau.dim(),
                mask.len(),
                cfg.horizon,
                cfg.action_dim
            )));
        }
        if input.proprio.len() != cfg.proprio_dim {
            return Err(PolicyError::ShapeMismatch(format!(
                "proprio has {} entries, model expects {}",
                input.proprio.len(),
                cfg.proprio_dim
            )));
        }
        let sem = self.sem_tokens(g, p, input)?;

        let mut proprio = Array2::zeros((1, cfg.proprio_dim.max(1)));
        for (j, &v) in input.proprio.iter().enumerate() {
            proprio[(0, j)] = v;
        }
        let s = g.constant(proprio);
        let s = g.matmul(s, p[self.ids.state_proj.0]);
        let s = g.add_row(s, p[self.ids.state_bias.0]);

        let x = g.constant(x_tau * &mask.to_array(cfg.horizon));
        let a = g.matmul(x, p[self.ids.in_proj.0]);
        let a = g.add_row(a, p[self.ids.in_bias.0]);
        let a = g.add(a, p[self.ids.act_pos.0]);
        let te = g.constant(tau_embedding(tau, cfg.act_hidden));
        let a = g.add_row(a, te);
        let mut act = g.concat_rows(&[s, a]);

        let mut sem = sem;
        for (sl, al) in self.ids.sem_layers.iter().zip(&self.ids.act_layers) {
            let (s2, a2) = shared_attention_block(
                g,
                sem,
                Some(act),
                &sl.vars(p),
                &al.vars(p),
                cfg.heads,
                cfg.head_dim,
            )?;
            sem = s2;
            act = a2.expect("action stream present");
        }

        let latents = g.slice_rows(act, 1, cfg.horizon);
        let n = g.rms_norm(latents, p[self.ids.out_norm.0]);
        let v = g.matmul(n, p[self.ids.out_proj.0]);
        Ok(g.add_row(v, p[self.ids.out_bias.0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    fn small() -> ModelConfig {
        ModelConfig {
            sem_hidden: 8,
            act_hidden: 6,
            heads: 2,
            head_dim: 3,
            layers: 2,
            horizon: 3,
            action_dim: 4,
            proprio_dim: 4,
            vis_feat_dim: 3,
            patches_per_view: 2,
            max_views: 2,
            text_tokens: 3,
            vocab: 10,
            ..ModelConfig::default()
        }
    }

    fn input(cfg: &ModelConfig) -> PolicyInput {
        PolicyInput {
            views: vec![ViewTokens {
                slot: 1,
                patches: view_features("cam0", cfg.patches_per_view, cfg.vis_feat_dim),
            }],
            text_ids: vec![3, 7],
            proprio: vec![0.1, -0.2, 0.3, 0.0],
        }
    }

    #[test]
    fn empty_action_stream_is_single_expert_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sw = LayerWeights::random(8, 6, 16, &mut rng);
        let aw = LayerWeights::random(4, 6, 8, &mut rng);
        let x = view_features("x", 5, 8);
        let (joint, act) = shared_attention(&x, &Array2::zeros((0, 4)), &sw, &aw, 2, 3).unwrap();
        let (alone, _) = shared_attention(&x, &Array2::zeros((0, 4)), &sw, &sw, 2, 3).unwrap();
        assert_eq!(act.nrows(), 0);
        assert_eq!(joint, alone);
    }

    #[test]
    fn mismatched_widths_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sw = LayerWeights::random(8, 6, 16, &mut rng);
        let aw = LayerWeights::random(4, 4, 8, &mut rng);
        let r = shared_attention(
            &view_features("a", 2, 8),
            &view_features("b", 2, 4),
            &sw,
            &aw,
            2,
            3,
        );
        assert!(matches!(r, Err(PolicyError::ShapeMismatch(_))));
    }

    #[test]
    fn later_action_tokens_do_not_affect_earlier_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sw = LayerWeights::random(8, 6, 16, &mut rng);
        let aw = LayerWeights::random(4, 6, 8, &mut rng);
        let sem = view_features("s", 3, 8);
        let act = view_features("a", 4, 4);
        let (s1, a1) =
            shared_attention(&sem, &act.slice(s![..2, ..]).to_owned(), &sw, &aw, 2, 3).unwrap();
        let (s2, a2) = shared_attention(&sem, &act, &sw, &aw, 2, 3).unwrap();
        assert_eq!(s1, s2);
        assert!((&a2.slice(s![..2, ..]) - &a1)
            .iter()
            .all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn velocity_has_chunk_shape_and_ignores_masked_inputs() {
        let cfg = small();
        let m = MotPolicy::new(cfg.clone()).unwrap();
        let mask = ActionMask(vec![true, false, true, false]);
        let x = view_features("x", 3, 4);
        let mut g = Graph::new();
        let p = m.params().bind(&mut g);
        let v = m
            .velocity_var(&mut g, &p, &input(&cfg), &x, 0.3, &mask)
            .unwrap();
        assert_eq!(g.shape(v), (3, 4));
        let mut x2 = x.clone();
        x2.column_mut(1).fill(9.0);
        let v2 = m
            .velocity_var(&mut g, &p, &input(&cfg), &x2, 0.3, &mask)
            .unwrap();
        assert_eq!(g.value(v), g.value(v2));
        let bad = m.velocity_var(&mut g, &p, &input(&cfg), &Array2::zeros((2, 4)), 0.3, &mask);
        assert!(bad.is_err());
    }

    #[test]
    fn tau_embedding_is_bounded_and_distinct() {
        let a = tau_embedding(0.0, 8);
        let b = tau_embedding(1.0, 8);
        assert_eq!(a[(0, 1)], 1.0);
        assert!(a.iter().chain(b.iter()).all(|v| v.abs() <= 1.0));
        assert_ne!(a, b);
    }

    #[test]
    fn tokens_are_case_insensitive_and_bounded() {
        let a = tokenize("Stack the Bowls", 10, 8);
        assert_eq!(a, tokenize("stack the bowls", 10, 8));
        assert!(a.iter().all(|&t| t < 10));
        assert_eq!(tokenize("a b c d", 10, 2).len(), 2);
    }
}
