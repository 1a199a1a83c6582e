use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::registry::MixtureConfig;
use super::trajectory::{build_example, stride_sample, Example, Trajectory, Window};
use super::MixtureError;
use crate::action_space::{EmbodimentCatalog, EmbodimentSpec};

/// Draws dataset indices with probability proportional to their weights.
#[derive(Clone, Debug)]
pub struct WeightedDatasetSampler {
    weights: Vec<u64>,
    dist: WeightedIndex<u64>,
    rng: ChaCha8Rng,
}

impl WeightedDatasetSampler {
    pub fn new(weights: Vec<u64>, seed: u64) -> Result<Self, MixtureError> {
        let dist = WeightedIndex::new(&weights).map_err(|_| MixtureError::EmptyMixture)?;
        Ok(WeightedDatasetSampler {
            weights,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `(dataset index, uniform index below that dataset's weight)`.
    pub fn draw(&mut self) -> (usize, u64) {
        let d = self.dist.sample(&mut self.rng);
        let within = self.rng.random_range(0..self.weights[d]);
        (d, within)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total: u64 = self.weights.iter().sum();
        self.weights
            .iter()
            .map(|&w| w as f64 / total as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Draw {
    pub dataset: String,
    /// Index among the dataset's effective (strided) frames.
    pub effective_index: u64,
    /// The corresponding raw frame index, `effective_index · S`.
    pub raw_frame: u64,
}

/// Infinite stream over a registry, weighted by effective frame counts.
#[derive(Clone, Debug)]
pub struct BalancedIterator {
    cfg: MixtureConfig,
    sampler: WeightedDatasetSampler,
}

pub fn balanced_iterator(cfg: &MixtureConfig, seed: u64) -> Result<BalancedIterator, MixtureError> {
    let weights = cfg.entries.iter().map(|e| e.effective_count()).collect();
    Ok(BalancedIterator {
        cfg: cfg.clone(),
        sampler: WeightedDatasetSampler::new(weights, seed)?,
    })
}

impl BalancedIterator {
    pub fn probabilities(&self) -> Vec<(String, f64)> {
        self.cfg
            .entries
            .iter()
            .map(|e| e.name.clone())
            .zip(self.sampler.probabilities())
            .collect()
    }
}

impl Iterator for BalancedIterator {
    type Item = Draw;

    fn next(&mut self) -> Option<Draw> {
        let (d, idx) = self.sampler.draw();
        let e = &self.cfg.entries[d];
        Some(Draw {
            dataset: e.name.clone(),
            effective_index: idx,
            raw_frame: idx * e.step,
        })
    }
}

/// Trajectories of one dataset with their precomputed strided windows.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub name: String,
    pub spec: EmbodimentSpec,
    pub trajectories: Vec<Trajectory>,
    windows: Vec<(usize, Window)>,
}

impl LoadedDataset {
    pub fn new(
        name: impl Into<String>,
        spec: EmbodimentSpec,
        trajectories: Vec<Trajectory>,
        step: usize,
        horizon: usize,
    ) -> Self {
        let windows = trajectories
            .iter()
            .enumerate()
            .flat_map(|(i, t)| {
                stride_sample(t.len(), step, horizon)
                    .into_iter()
                    .map(move |w| (i, w))
            })
            .collect();
        LoadedDataset {
            name: name.into(),
            spec,
            trajectories,
            windows,
        }
    }

    pub fn num_windows(&self) -> usize {
        self.windows.len()
    }
}

/// Balanced stream of unified examples drawn from loaded trajectories.
///
/// Datasets are weighted by the registry's effective counts, then a window is
/// drawn uniformly within the chosen dataset.
pub struct ExampleMixture {
    datasets: Vec<LoadedDataset>,
    catalog: EmbodimentCatalog,
    dist: WeightedIndex<u64>,
    rng: ChaCha8Rng,
}

impl ExampleMixture {
    pub fn new(
        cfg: &MixtureConfig,
        datasets: Vec<LoadedDataset>,
        catalog: EmbodimentCatalog,
        seed: u64,
    ) -> Result<Self, MixtureError> {
        let weights: Vec<u64> = datasets
            .iter()
            .map(|d| {
                if d.windows.is_empty() {
                    0
                } else {
                    cfg.get(&d.name).map(|e| e.effective_count()).unwrap_or(0)
                }
            })
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| MixtureError::EmptyMixture)?;
        Ok(ExampleMixture {
            datasets,
            catalog,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn next_example(&mut self) -> Result<Example, MixtureError> {
        let d = &self.datasets[self.dist.sample(&mut self.rng)];
        let (t, w) = &d.windows[self.rng.random_range(0..d.windows.len())];
        build_example(
            &d.name,
            &d.trajectories[*t],
            w,
            &d.spec,
            &self.catalog.layout,
        )
    }
}

impl Iterator for ExampleMixture {
    type Item = Result<Example, MixtureError>;
    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_example())
    }
}
