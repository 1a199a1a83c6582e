use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::autograd::{Graph, Var};
use super::PolicyError;

/// Which expert owns a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expert {
    Semantic,
    Action,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: (usize, usize),
    pub expert: Expert,
}

/// Named 2-D parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    specs: Vec<ParamSpec>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, expert: Expert, value: Array2<f64>) -> ParamId {
        self.specs.push(ParamSpec {
            name: name.into(),
            shape: value.dim(),
            expert,
        });
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Gaussian init with standard deviation `std`.
    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        expert: Expert,
        shape: (usize, usize),
        std: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let v = Array2::from_shape_simple_fn(shape, || std * rng.sample::<f64, _>(StandardNormal));
        self.add(name, expert, v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.values
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }

    /// Adds every tensor to `g` as a parameter leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| g.param(i, v.clone()))
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array2::len).sum()
    }

    /// `(tensor, row-major offset)` of flat index `i`.
    pub fn locate(&self, mut i: usize) -> (usize, usize) {
        for (t, v) in self.values.iter().enumerate() {
            if i < v.len() {
                return (t, i);
            }
            i -= v.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn flat_get(&self, i: usize) -> f64 {
        let (t, k) = self.locate(i);
        let v = &self.values[t];
        v[(k / v.ncols(), k % v.ncols())]
    }

    pub fn flat_set(&mut self, i: usize, x: f64) {
        let (t, k) = self.locate(i);
        let v = &mut self.values[t];
        let c = v.ncols();
        v[(k / c, k % c)] = x;
    }

    /// Concatenated values of one expert, for freeze checks.
    pub fn snapshot(&self, expert: Expert) -> Vec<f64> {
        self.specs
            .iter()
            .zip(&self.values)
            .filter(|(s, _)| s.expert == expert)
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    /// Writes `<stem>.bin` (little-endian f64, row-major, tensors in order)
    /// and `<stem>.json` (names, shapes, offsets).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), PolicyError> {
        fs::create_dir_all(dir)?;
        let bin = dir.join(format!("{stem}.bin"));
        let manifest = dir.join(format!("{stem}.json"));
        let mut bytes = Vec::with_capacity(self.num_scalars() * 8);
        let mut entries = Vec::with_capacity(self.len());
        let mut offset = 0;
        for (s, v) in self.specs.iter().zip(&self.values) {
            for x in v.iter() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            entries.push(ManifestEntry {
                name: s.name.clone(),
                shape: [s.shape.0, s.shape.1],
                expert: s.expert,
                offset,
            });
            offset += v.len();
        }
        fs::File::create(&bin)?.write_all(&bytes)?;
        let m = Manifest {
            dtype: "f64le".into(),
            total: offset,
            params: entries,
        };
        fs::write(&manifest, serde_json::to_string_pretty(&m)?)?;
        Ok((bin, manifest))
    }

    /// Loads values saved by [`ParamStore::save`] into a store of identical layout.
    pub fn load_into(&mut self, dir: &Path, stem: &str) -> Result<(), PolicyError> {
        let m: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
        if m.params.len() != self.len() || bytes.len() != m.total * 8 {
            return Err(PolicyError::Checkpoint(
                "layout does not match model".into(),
            ));
        }
        for (e, (s, v)) in m
            .params
            .iter()
            .zip(self.specs.iter().zip(self.values.iter_mut()))
        {
            if e.name != s.name || e.shape != [s.shape.0, s.shape.1] {
                return Err(PolicyError::Checkpoint(format!(
                    "tensor `{}` mismatch",
                    e.name
                )));
            }
            for (k, x) in v.iter_mut().enumerate() {
                let at = (e.offset + k) * 8;
                *x = f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: [usize; 2],
    expert: Expert,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    dtype: String,
    total: usize,
    params: Vec<ManifestEntry>,
}
