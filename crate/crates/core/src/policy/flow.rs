//! Flow-matching objective and the explicit Euler sampler.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autograd::{Graph, Var};
use super::model::{MotPolicy, PolicyInput};
use super::PolicyError;
use crate::action_space::{masked_mse, ActionMask, UnifiedChunk};

/// Anything that predicts a velocity chunk `v(x, τ, c)`.
pub trait VelocityField {
    fn velocity(
        &self,
        x: &Array2<f64>,
        tau: f64,
        input: &PolicyInput,
        mask: &ActionMask,
    ) -> Result<Array2<f64>, PolicyError>;
}

impl<F> VelocityField for F
where
    F: Fn(&Array2<f64>, f64, &PolicyInput, &ActionMask) -> Array2<f64>,
{
    fn velocity(
        &self,
        x: &Array2<f64>,
        tau: f64,
        input: &PolicyInput,
        mask: &ActionMask,
    ) -> Result<Array2<f64>, PolicyError> {
        Ok(self(x, tau, input, mask))
    }
}

impl VelocityField for MotPolicy {
    fn velocity(
        &self,
        x: &Array2<f64>,
        tau: f64,
        input: &PolicyInput,
        mask: &ActionMask,
    ) -> Result<Array2<f64>, PolicyError> {
        let mut g = Graph::new();
        let p = self.params().bind(&mut g);
        let v = self.velocity_var(&mut g, &p, input, x, tau, mask)?;
        Ok(g.value(v).clone())
    }
}

/// One training pair on the straight path from noise to data.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub x0: Array2<f64>,
    pub x1: Array2<f64>,
    pub tau: f64,
    pub x_tau: Array2<f64>,
    pub input: PolicyInput,
    pub mask: ActionMask,
}

impl FlowSample {
    pub fn new(
        x0: Array2<f64>,
        x1: Array2<f64>,
        tau: f64,
        input: PolicyInput,
        mask: ActionMask,
    ) -> Result<Self, PolicyError> {
        if x0.dim() != x1.dim() || x1.ncols() != mask.len() {
            return Err(PolicyError::ShapeMismatch(format!(
                "noise {:?}, data {:?}, mask {}",
                x0.dim(),
                x1.dim(),
                mask.len()
            )));
        }
        let x_tau = &x0 * (1.0 - tau) + &x1 * tau;
        Ok(FlowSample {
            x0,
            x1,
            tau,
            x_tau,
            input,
            mask,
        })
    }

    /// The regression target `x1 − x0`.
    pub fn target(&self) -> Array2<f64> {
        &self.x1 - &self.x0
    }
}

/// Mean over the batch of the masked MSE between predicted and target velocity.
pub fn fm_loss<F: VelocityField + ?Sized>(
    field: &F,
    batch: &[FlowSample],
) -> Result<f64, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::ShapeMismatch("empty batch".into()));
    }
    let mut total = 0.0;
    for s in batch {
        let v = field.velocity(&s.x_tau, s.tau, &s.input, &s.mask)?;
        if v.dim() != s.x1.dim() {
            return Err(PolicyError::ShapeMismatch(format!(
                "velocity {:?} vs chunk {:?}",
                v.dim(),
                s.x1.dim()
            )));
        }
        let pred = UnifiedChunk::new(v, s.mask.clone())?;
        let target = UnifiedChunk::new(s.target(), s.mask.clone())?;
        total += masked_mse(&pred, &target)?;
    }
    Ok(total / batch.len() as f64)
}

/// Seeded standard-normal `rows × cols` array.
pub fn sample_noise(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

/// Integrates the field from seeded noise at `τ = 0` to `τ = 1` in `steps`
/// explicit Euler steps. Masked dims are zero in the result.
pub fn euler_sample<F: VelocityField + ?Sized>(
    field: &F,
    input: &PolicyInput,
    mask: &ActionMask,
    horizon: usize,
    steps: usize,
    seed: u64,
) -> Result<UnifiedChunk, PolicyError> {
    if steps == 0 {
        return Err(PolicyError::Config("euler_steps must be at least 1".into()));
    }
    let mut x = sample_noise(seed, horizon, mask.len());
    let dt = 1.0 / steps as f64;
    for k in 0..steps {
        let v = field.velocity(&x, k as f64 * dt, input, mask)?;
        x.scaled_add(dt, &v);
    }
    Ok(UnifiedChunk::new(x, mask.clone())?)
}

impl MotPolicy {
    /// Sampling with the model's own horizon and step count.
    pub fn sample(
        &self,
        input: &PolicyInput,
        mask: &ActionMask,
        seed: u64,
    ) -> Result<UnifiedChunk, PolicyError> {
        let cfg = self.config();
        euler_sample(self, input, mask, cfg.horizon, cfg.euler_steps, seed)
    }

    /// The flow-matching loss as a `1 × 1` graph node.
    pub fn loss_var(
        &self,
        g: &mut Graph,
        p: &[Var],
        batch: &[FlowSample],
    ) -> Result<Var, PolicyError> {
        if batch.is_empty() {
            return Err(PolicyError::ShapeMismatch("empty batch".into()));
        }
        let mut parts = Vec::with_capacity(batch.len());
        for s in batch {
            let v = self.velocity_var(g, p, &s.input, &s.x_tau, s.tau, &s.mask)?;
            let m = s.mask.to_array(s.x1.nrows());
            parts.push(g.masked_mse(v, &s.target(), &m));
        }
        let total = g.sum(&parts);
        Ok(g.scale(total, 1.0 / batch.len() as f64))
    }

    /// Loss and one gradient per parameter tensor, in store order.
    pub fn loss_and_grads(
        &self,
        batch: &[FlowSample],
    ) -> Result<(f64, Vec<Array2<f64>>), PolicyError> {
        let mut g = Graph::new();
        let p = self.params().bind(&mut g);
        let loss = self.loss_var(&mut g, &p, batch)?;
        let grads = g.backward(loss);
        let out = p
            .iter()
            .zip(self.params().values())
            .map(|(&v, val)| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(val.dim()))
            })
            .collect();
        Ok((g.scalar(loss), out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn input() -> PolicyInput {
        PolicyInput {
            views: vec![],
            text_ids: vec![1],
            proprio: vec![],
        }
    }

    fn sample(x0: Array2<f64>, x1: Array2<f64>, tau: f64, mask: ActionMask) -> FlowSample {
        FlowSample::new(x0, x1, tau, input(), mask).unwrap()
    }

    #[test]
    fn interpolation_matches_path() {
        let s = sample(
            array![[0.0, 2.0]],
            array![[4.0, -2.0]],
            0.25,
            ActionMask::full(2),
        );
        assert_eq!(s.x_tau, array![[1.0, 1.0]]);
    }

    #[test]
    fn oracle_field_has_zero_loss() {
        let batch = vec![
            sample(
                array![[0.3, -1.0]],
                array![[1.0, 2.0]],
                0.1,
                ActionMask::full(2),
            ),
            sample(
                array![[0.0, 0.5]],
                array![[-1.0, 0.0]],
                0.9,
                ActionMask(vec![true, false]),
            ),
        ];
        // Recover x1 − x0 from x_tau and τ is not possible in general, so the
        // oracle looks the sample up by its interpolant.
        let lookup = batch.clone();
        let oracle = move |x: &Array2<f64>, _t: f64, _c: &PolicyInput, _m: &ActionMask| {
            lookup.iter().find(|s| s.x_tau == x).unwrap().target()
        };
        assert_eq!(fm_loss(&oracle, &batch).unwrap(), 0.0);
    }

    #[test]
    fn zero_field_loss_is_mean_square_target() {
        let batch = vec![
            sample(
                array![[0.0, 0.0]],
                array![[1.0, 3.0]],
                0.5,
                ActionMask::full(2),
            ),
            sample(
                array![[1.0, 0.0]],
                array![[3.0, 7.0]],
                0.5,
                ActionMask(vec![true, false]),
            ),
        ];
        let zero =
            |x: &Array2<f64>, _t: f64, _c: &PolicyInput, _m: &ActionMask| Array2::zeros(x.dim());
        // (1 + 9)/2 for the first, 2²/1 for the second.
        assert!((fm_loss(&zero, &batch).unwrap() - (5.0 + 4.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_field_integrates_exactly() {
        let c = array![[0.5, -0.25], [1.0, 2.0]];
        let cc = c.clone();
        let field = move |_x: &Array2<f64>, _t: f64, _c: &PolicyInput, _m: &ActionMask| cc.clone();
        let x0 = sample_noise(7, 2, 2);
        for steps in [1, 3, 10] {
            let out = euler_sample(&field, &input(), &ActionMask::full(2), 2, steps, 7).unwrap();
            let err = (out.values() - &(&x0 + &c))
                .mapv(f64::abs)
                .fold(0.0f64, |a, &b| a.max(b));
            assert!(err < 1e-14, "steps {steps}: {err}");
        }
    }

    #[test]
    fn masked_dims_are_zero_after_sampling() {
        let field =
            |x: &Array2<f64>, _t: f64, _c: &PolicyInput, _m: &ActionMask| Array2::ones(x.dim());
        let out = euler_sample(&field, &input(), &ActionMask(vec![false, true]), 3, 4, 1).unwrap();
        assert!(out.values().column(0).iter().all(|&v| v == 0.0));
        assert!(euler_sample(&field, &input(), &ActionMask::full(1), 1, 0, 1).is_err());
    }
}
