//! AdamW with a linear-warmup cosine schedule.

use ndarray::Array2;

/// Linear warmup from 0 to the peak, then cosine decay to 0 at `total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LrSchedule {
    /// `warmup = ceil(ratio · total)`.
    pub fn new(total_steps: usize, warmup_ratio: f64) -> Self {
        let warmup_steps = ((warmup_ratio * total_steps as f64).ceil() as usize).min(total_steps);
        LrSchedule {
            total_steps,
            warmup_steps,
        }
    }

    /// Multiplier in `[0, 1]` applied to the peak rate at `step`.
    pub fn factor(&self, step: usize) -> f64 {
        if step >= self.total_steps {
            return 0.0;
        }
        if step < self.warmup_steps {
            return step as f64 / self.warmup_steps as f64;
        }
        let span = (self.total_steps - self.warmup_steps) as f64;
        let progress = (step - self.warmup_steps) as f64 / span;
        0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }

    pub fn lr(&self, step: usize, peak: f64) -> f64 {
        peak * self.factor(step)
    }
}

/// Adaptive moments with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: Vec<u64>,
}

impl AdamW {
    pub fn new(
        shapes: impl IntoIterator<Item = (usize, usize)>,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    ) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes
            .into_iter()
            .map(|s| (Array2::zeros(s), Array2::zeros(s)))
            .unzip();
        let t = vec![0; m.len()];
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            m,
            v,
            t,
        }
    }

    /// Updates tensor `i` in place. Each tensor keeps its own step count so
    /// tensors that start training late get fresh bias correction.
    pub fn step(&mut self, i: usize, param: &mut Array2<f64>, grad: &Array2<f64>, lr: f64) {
        self.t[i] += 1;
        let t = self.t[i] as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let m = &mut self.m[i];
        let v = &mut self.v[i];
        m.zip_mut_with(grad, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
        v.zip_mut_with(grad, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (eps, wd) = (self.eps, self.weight_decay);
        ndarray::Zip::from(param)
            .and(&*m)
            .and(&*v)
            .for_each(|p, &m, &v| {
                let update = (m / c1) / ((v / c2).sqrt() + eps);
                *p -= lr * (update + wd * *p);
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::new(200, 0.05);
        assert_eq!(s.warmup_steps, 10);
        assert_eq!(s.lr(0, 1e-4), 0.0);
        assert!((s.lr(10, 1e-4) - 1e-4).abs() < 1e-18);
        assert!(s.lr(199, 1e-4) < 1e-7);
        assert_eq!(s.lr(200, 1e-4), 0.0);
        assert!((s.factor(5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut opt = AdamW::new([(1, 2)], 0.9, 0.999, 0.0, 0.0);
        let mut p = array![[1.0, 1.0]];
        opt.step(0, &mut p, &array![[3.0, -0.5]], 0.1);
        assert!((p[(0, 0)] - 0.9).abs() < 1e-12);
        assert!((p[(0, 1)] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut opt = AdamW::new([(1, 1)], 0.9, 0.999, 1e-8, 0.5);
        let mut p = array![[2.0]];
        opt.step(0, &mut p, &array![[0.0]], 0.1);
        assert!((p[(0, 0)] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }
}
