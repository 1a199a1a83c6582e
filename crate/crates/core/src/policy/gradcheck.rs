//! Central finite-difference gradient verification.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::autograd::Graph;
use super::flow::FlowSample;
use super::model::MotPolicy;
use super::PolicyError;

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn num_params(&self) -> usize;
    fn get(&self, i: usize) -> f64;
    fn set(&mut self, i: usize, x: f64);
    fn loss(&self) -> Result<f64, PolicyError>;
    fn gradient(&self) -> Result<Vec<f64>, PolicyError>;
    /// Name of the tensor holding flat index `i`, for error messages.
    fn describe(&self, i: usize) -> String {
        format!("#{i}")
    }
}

/// The flow-matching loss of a policy on a fixed batch.
pub struct FlowObjective<'a> {
    pub policy: MotPolicy,
    pub batch: &'a [FlowSample],
}

impl Objective for FlowObjective<'_> {
    fn num_params(&self) -> usize {
        self.policy.params().num_scalars()
    }

    fn get(&self, i: usize) -> f64 {
        self.policy.params().flat_get(i)
    }

    fn set(&mut self, i: usize, x: f64) {
        self.policy.params_mut().flat_set(i, x)
    }

    fn loss(&self) -> Result<f64, PolicyError> {
        let mut g = Graph::new();
        let p = self.policy.params().bind(&mut g);
        let l = self.policy.loss_var(&mut g, &p, self.batch)?;
        Ok(g.scalar(l))
    }

    fn gradient(&self) -> Result<Vec<f64>, PolicyError> {
        let (_, grads) = self.policy.loss_and_grads(self.batch)?;
        Ok(grads.iter().flat_map(|g| g.iter().copied()).collect())
    }

    fn describe(&self, i: usize) -> String {
        let (t, _) = self.policy.params().locate(i);
        self.policy.params().specs()[t].name.clone()
    }
}

/// `k` distinct indices below `n`, sorted, seeded.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = index::sample(&mut rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}

/// Max relative error `|ga − gfd| / max(1e-8, |ga| + |gfd|)` over `indices`.
pub fn grad_check(
    obj: &mut dyn Objective,
    indices: &[usize],
    eps: f64,
) -> Result<f64, PolicyError> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(PolicyError::Config(format!(
            "epsilon {eps} outside [1e-6, 1e-3]"
        )));
    }
    let analytic = obj.gradient()?;
    let mut worst: f64 = 0.0;
    for &i in indices {
        let ga = analytic[i];
        if !ga.is_finite() {
            return Err(PolicyError::NonFiniteGradient(obj.describe(i)));
        }
        let x = obj.get(i);
        obj.set(i, x + eps);
        let up = obj.loss()?;
        obj.set(i, x - eps);
        let down = obj.loss()?;
        obj.set(i, x);
        let fd = (up - down) / (2.0 * eps);
        if !fd.is_finite() {
            return Err(PolicyError::NonFiniteGradient(obj.describe(i)));
        }
        worst = worst.max((ga - fd).abs() / (ga.abs() + fd.abs()).max(1e-8));
    }
    Ok(worst)
}
