//! Oracles shared by integration and acceptance tests. Written against
//! plain arrays so they do not reuse the code under test.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlascale::policy::LayerWeights;
use vlascale::se3::{Pose, PoseChunk, RotVec};

pub fn rms_rows(x: &Array2<f64>, gain: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let ms = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
        let r = (ms + 1e-6).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v / r * gain[(0, j)];
        }
    }
    out
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn ffn(x: &Array2<f64>, w: &LayerWeights) -> Array2<f64> {
    let n = rms_rows(x, &w.norm2);
    let h = (n.dot(&w.w1) + &w.b1).mapv(gelu);
    x + &(h.dot(&w.w2) + &w.b2)
}

/// One causal attention layer over a single sequence whose projections are
/// the per-stream maps stacked into a block matrix acting on `[sem | act]`
/// zero-padded rows. Row norms use each stream's own width and gain.
pub fn single_sequence_attention(
    sem: &Array2<f64>,
    act: &Array2<f64>,
    sw: &LayerWeights,
    aw: &LayerWeights,
    heads: usize,
    hd: usize,
) -> (Array2<f64>, Array2<f64>) {
    let (ns, na, ds, da) = (sem.nrows(), act.nrows(), sem.ncols(), act.ncols());
    let n = ns + na;
    let mut z = Array2::zeros((n, ds + da));
    z.slice_mut(s![..ns, ..ds])
        .assign(&rms_rows(sem, &sw.norm1));
    z.slice_mut(s![ns.., ds..])
        .assign(&rms_rows(act, &aw.norm1));
    let stack = |a: &Array2<f64>, b: &Array2<f64>| {
        let mut m = Array2::zeros((ds + da, a.ncols()));
        m.slice_mut(s![..ds, ..]).assign(a);
        m.slice_mut(s![ds.., ..]).assign(b);
        m
    };
    let q = z.dot(&stack(&sw.wq, &aw.wq));
    let k = z.dot(&stack(&sw.wk, &aw.wk));
    let v = z.dot(&stack(&sw.wv, &aw.wv));
    let mut o = Array2::zeros((n, heads * hd));
    for h in 0..heads {
        let c = s![.., h * hd..(h + 1) * hd];
        let (qh, kh, vh) = (q.slice(c), k.slice(c), v.slice(c));
        for i in 0..n {
            let scores: Vec<f64> = (0..=i)
                .map(|j| qh.row(i).dot(&kh.row(j)) / (hd as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let total: f64 = e.iter().sum();
            for j in 0..=i {
                for d in 0..hd {
                    o[(i, h * hd + d)] += e[j] / total * vh[(j, d)];
                }
            }
        }
    }
    let sem_out = ffn(&(sem + &o.slice(s![..ns, ..]).dot(&sw.wo)), sw);
    let act_out = ffn(&(act + &o.slice(s![ns.., ..]).dot(&aw.wo)), aw);
    (sem_out, act_out)
}

pub fn normal_array(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, d| m.max(d.abs()))
}

/// Uniform random axis.
pub fn random_axis(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rotvec(rng: &mut ChaCha8Rng, max_angle: f64) -> RotVec {
    RotVec::new(random_axis(rng) * rng.random_range(0.0..max_angle))
}

/// A chunk of `horizon` targets after a random start, where each step
/// rotates by less than `max_angle` and translates by up to half a metre.
pub fn random_chunk(rng: &mut ChaCha8Rng, horizon: usize, max_angle: f64) -> PoseChunk {
    let start = Pose::new(
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..1.5),
        ),
        random_rotvec(rng, std::f64::consts::PI),
    );
    let mut poses = vec![start];
    for _ in 0..horizon {
        let step = Pose::new(
            Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ),
            random_rotvec(rng, max_angle),
        );
        poses.push(poses.last().unwrap().compose(&step));
    }
    PoseChunk::new(poses).unwrap()
}

/// `‖R_a − R_b‖_F`, computed directly.
pub fn frobenius(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
