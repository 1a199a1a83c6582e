//! Python bindings. Structured results cross the boundary as JSON and are
//! decoded with the standard `json` module, so Python sees plain dicts and lists.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use vlascale::action_space::{
    embed_native, extract_native, EmbodimentCatalog, DEFAULT_EMBODIMENTS,
};
use vlascale::eval::{
    alias_report, deanonymize_report, parse_tasks, Dispatch, EvalConfig, EvalError, IterationOrder,
    PersistentSession, DEFAULT_TASKS,
};
use vlascale::mixture::{
    balanced_iterator, mixture_report, MixtureConfig, MixtureTag, PRETRAINING_REGISTRY,
};
use vlascale::policy::{
    euler_sample, train, MotPolicy, PolicyError, PolicyInput, RunConfig, Schedule, TrainOptions,
};
use vlascale::se3::{decode_chunk, encode_chunk, CoordinateMode, EefAction, Pose, PoseChunk};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn policy_err(e: PolicyError) -> PyErr {
    match e {
        PolicyError::Config(_) | PolicyError::ShapeMismatch(_) => value_err(e),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn eval_err(e: EvalError) -> PyErr {
    match e {
        EvalError::UnknownQueue { .. } => PyKeyError::new_err(format!("{}: {e}", e.kind())),
        EvalError::Io(_) | EvalError::Log(_) => {
            PyRuntimeError::new_err(format!("{}: {e}", e.kind()))
        }
        _ => PyValueError::new_err(format!("{}: {e}", e.kind())),
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Encodes `H + 1` poses `[x, y, z, rx, ry, rz]` into `H` actions.
#[pyfunction]
fn encode_actions(poses: Vec<[f64; 6]>, mode: &str) -> PyResult<Vec<[f64; 6]>> {
    let mode: CoordinateMode = mode.parse().map_err(value_err)?;
    let chunk =
        PoseChunk::new(poses.into_iter().map(Pose::from_array6).collect()).map_err(value_err)?;
    Ok(encode_chunk(&chunk, mode)
        .iter()
        .map(EefAction::to_array6)
        .collect())
}

/// Inverse of `encode_actions`; returns all `H + 1` poses including `start`.
#[pyfunction]
fn decode_actions(actions: Vec<[f64; 6]>, start: [f64; 6], mode: &str) -> PyResult<Vec<[f64; 6]>> {
    let mode: CoordinateMode = mode.parse().map_err(value_err)?;
    let actions: Vec<EefAction> = actions.into_iter().map(EefAction::from_array6).collect();
    let chunk = decode_chunk(&actions, &Pose::from_array6(start), mode).map_err(value_err)?;
    Ok(chunk.poses().iter().map(Pose::to_array6).collect())
}

/// Places a native action vector into the 42-dim unified space.
#[pyfunction]
fn embed_action(embodiment: &str, native: Vec<f64>) -> PyResult<(Vec<f64>, Vec<bool>)> {
    let catalog = EmbodimentCatalog::parse(DEFAULT_EMBODIMENTS).map_err(value_err)?;
    let spec = catalog.get(embodiment).map_err(value_err)?;
    let u = embed_native(&catalog.layout, spec, &native).map_err(value_err)?;
    Ok((u.values().to_vec(), u.mask().0.clone()))
}

#[pyfunction]
fn extract_action(embodiment: &str, values: Vec<f64>, mask: Vec<bool>) -> PyResult<Vec<f64>> {
    let catalog = EmbodimentCatalog::parse(DEFAULT_EMBODIMENTS).map_err(value_err)?;
    let spec = catalog.get(embodiment).map_err(value_err)?;
    let u = vlascale::action_space::UnifiedAction::new(
        values,
        vlascale::action_space::ActionMask(mask),
    )
    .map_err(value_err)?;
    extract_native(&catalog.layout, spec, &u).map_err(value_err)
}

fn load_registry(text: Option<&str>, mixture: &str) -> PyResult<MixtureConfig> {
    let tag: MixtureTag = mixture.parse().map_err(value_err)?;
    MixtureConfig::parse(text.unwrap_or(PRETRAINING_REGISTRY), tag).map_err(value_err)
}

/// Rendered frame-count table for a registry (built-in when `registry` is None).
#[pyfunction]
#[pyo3(signature = (registry=None, mixture="d4"))]
fn mix_report(registry: Option<&str>, mixture: &str) -> PyResult<String> {
    Ok(mixture_report(&load_registry(registry, mixture)?).render())
}

/// `(name, raw frames, effective frames)` per dataset.
#[pyfunction]
#[pyo3(signature = (registry=None, mixture="d4"))]
fn effective_counts(registry: Option<&str>, mixture: &str) -> PyResult<Vec<(String, u64, u64)>> {
    let cfg = load_registry(registry, mixture)?;
    Ok(cfg
        .entries
        .iter()
        .map(|e| (e.name.clone(), e.raw_frames, e.effective_count()))
        .collect())
}

/// `n` weighted draws as `(dataset, raw frame index)`.
#[pyfunction]
#[pyo3(signature = (seed, n, mixture="d4"))]
fn mix_sample(seed: u64, n: usize, mixture: &str) -> PyResult<Vec<(String, u64)>> {
    let cfg = load_registry(None, mixture)?;
    Ok(balanced_iterator(&cfg, seed)
        .map_err(value_err)?
        .take(n)
        .map(|d| (d.dataset, d.raw_frame))
        .collect())
}

/// The dual-expert flow policy.
#[pyclass]
struct Policy {
    run: RunConfig,
    inner: MotPolicy,
}

#[pymethods]
impl Policy {
    /// `config` is the text of a run file; defaults apply when omitted.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let run = match config {
            Some(text) => RunConfig::parse(text).map_err(policy_err)?,
            None => RunConfig::default(),
        };
        let inner = MotPolicy::new(run.model.clone()).map_err(policy_err)?;
        Ok(Policy { run, inner })
    }

    fn num_params(&self) -> usize {
        self.inner.params().num_scalars()
    }

    /// Trains in place and returns the metric records.
    #[pyo3(signature = (steps, seed=0, schedule="two_stage", checkpoint_dir=None))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        steps: usize,
        seed: u64,
        schedule: &str,
        checkpoint_dir: Option<PathBuf>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = TrainOptions {
            schedule: Schedule::from_name(schedule, steps).map_err(policy_err)?,
            seed,
            checkpoint_dir,
        };
        let mut source =
            vlascale::policy::source_from_config(&self.run.data, &self.run.model, seed)
                .map_err(policy_err)?;
        let out = train(
            &mut self.inner,
            &self.run.train,
            source.as_mut(),
            &opts,
            &mut |_, _| {},
        )
        .map_err(policy_err)?;
        to_py(py, &out.records)
    }

    /// Integrates the learned field from seeded noise; returns an `H × D` list.
    #[pyo3(signature = (proprio, text_ids, seed=0, steps=None))]
    fn sample(
        &self,
        proprio: Vec<f64>,
        text_ids: Vec<usize>,
        seed: u64,
        steps: Option<usize>,
    ) -> PyResult<Vec<Vec<f64>>> {
        let cfg = self.inner.config();
        let input = PolicyInput {
            views: vec![],
            text_ids,
            proprio,
        };
        let mask = vlascale::action_space::ActionMask(vec![true; cfg.action_dim]);
        let chunk = euler_sample(
            &self.inner,
            &input,
            &mask,
            cfg.horizon,
            steps.unwrap_or(cfg.euler_steps),
            seed,
        )
        .map_err(policy_err)?;
        Ok(rows(chunk.values()))
    }
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// A persisted blind evaluation session.
#[pyclass]
struct EvalSession {
    inner: PersistentSession,
}

#[pymethods]
impl EvalSession {
    /// Creates a new session log; refuses to overwrite an existing file.
    #[staticmethod]
    #[pyo3(signature = (path, models, group_size=4, trials=10, seed=0, tasks=None, order="task_outer"))]
    fn create(
        path: PathBuf,
        models: Vec<String>,
        group_size: usize,
        trials: u32,
        seed: u64,
        tasks: Option<&str>,
        order: &str,
    ) -> PyResult<Self> {
        let order: IterationOrder = order.parse().map_err(eval_err)?;
        let cfg = EvalConfig {
            models,
            tasks: parse_tasks(tasks.unwrap_or(DEFAULT_TASKS)).map_err(eval_err)?,
            group_size,
            trials_per_model: trials,
            seed,
            order,
        };
        Ok(EvalSession {
            inner: PersistentSession::create(&path, cfg).map_err(eval_err)?,
        })
    }

    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        Ok(EvalSession {
            inner: PersistentSession::open(&path).map_err(eval_err)?,
        })
    }

    /// The `(task, group)` queue the protocol is on, or None when complete.
    fn current_queue(&self) -> Option<(String, usize)> {
        self.inner.session().current_queue()
    }

    /// Blind ticket dict, or None when the queue is exhausted.
    fn next_trial<'py>(
        &mut self,
        py: Python<'py>,
        task: &str,
        group: usize,
    ) -> PyResult<Option<Bound<'py, PyAny>>> {
        match self.inner.next_trial(task, group).map_err(eval_err)? {
            Dispatch::Trial(t) => Ok(Some(to_py(py, &t)?)),
            Dispatch::GroupComplete { .. } => Ok(None),
        }
    }

    /// Durably records binary checkpoint outcomes; returns the record id.
    fn record(
        &mut self,
        task: &str,
        group: usize,
        alias: &str,
        outcomes: Vec<u8>,
    ) -> PyResult<u64> {
        let r = self
            .inner
            .record_outcome(task, group, alias, &outcomes, vlascale::eval::now_ms())
            .map_err(eval_err)?;
        Ok(r.record_id)
    }

    fn progress<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.session().progress())
    }

    fn is_complete(&self) -> bool {
        self.inner.session().is_complete()
    }

    #[pyo3(signature = (deanonymize=false))]
    fn report<'py>(&self, py: Python<'py>, deanonymize: bool) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.session();
        let r = if deanonymize {
            deanonymize_report(s)
        } else {
            alias_report(s)
        };
        to_py(py, &r)
    }
}

#[pymodule]
fn vlascale_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(encode_actions, m)?)?;
    m.add_function(wrap_pyfunction!(decode_actions, m)?)?;
    m.add_function(wrap_pyfunction!(embed_action, m)?)?;
    m.add_function(wrap_pyfunction!(extract_action, m)?)?;
    m.add_function(wrap_pyfunction!(mix_report, m)?)?;
    m.add_function(wrap_pyfunction!(effective_counts, m)?)?;
    m.add_function(wrap_pyfunction!(mix_sample, m)?)?;
    m.add_class::<Policy>()?;
    m.add_class::<EvalSession>()?;
    Ok(())
}
