//! Fixed-width unified action space with per-embodiment slot maps and masks.
//!
//! The unified vector is a concatenation of subspaces (`eef`, `joint`,
//! `gripper`, `hand`, `aux`), each with a left and a right lane. An
//! [`EmbodimentSpec`] lists, for every native action dimension of a robot,
//! which unified slot it occupies. Slots the robot does not use are masked.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::CoordinateMode;

#[derive(Debug, Error)]
pub enum ActionSpaceError {
    #[error("native vector has {got} entries, embodiment `{id}` declares {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("mask mismatch: {0}")]
    MaskMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid slot `{0}`")]
    InvalidSlot(String),
    #[error("slot `{slot}` assigned twice in embodiment `{id}`")]
    DuplicateSlot { id: String, slot: String },
    #[error("unknown embodiment `{0}`")]
    UnknownEmbodiment(String),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    Eef,
    Joint,
    Gripper,
    Hand,
    Aux,
}

impl Subspace {
    pub const ALL: [Subspace; 5] = [
        Subspace::Eef,
        Subspace::Joint,
        Subspace::Gripper,
        Subspace::Hand,
        Subspace::Aux,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Subspace::Eef => "eef",
            Subspace::Joint => "joint",
            Subspace::Gripper => "gripper",
            Subspace::Hand => "hand",
            Subspace::Aux => "aux",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

impl FromStr for Subspace {
    type Err = ActionSpaceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subspace::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| ActionSpaceError::InvalidSlot(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Left,
    Right,
}

impl Lane {
    pub fn as_str(&self) -> &'static str {
        match self {
            Lane::Left => "left",
            Lane::Right => "right",
        }
    }
}

/// One unified slot: `subspace.lane.axis`, e.g. `eef.left.3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SlotRef {
    pub subspace: Subspace,
    pub lane: Lane,
    pub axis: usize,
}

impl SlotRef {
    pub fn new(subspace: Subspace, lane: Lane, axis: usize) -> Self {
        SlotRef {
            subspace,
            lane,
            axis,
        }
    }
}

impl fmt::Display for SlotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}",
            self.subspace.as_str(),
            self.lane.as_str(),
            self.axis
        )
    }
}

fn parse_lane(s: &str) -> Result<Lane, ActionSpaceError> {
    match s {
        "left" | "l" => Ok(Lane::Left),
        "right" | "r" => Ok(Lane::Right),
        _ => Err(ActionSpaceError::InvalidSlot(s.to_string())),
    }
}

impl FromStr for SlotRef {
    type Err = ActionSpaceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ActionSpaceError::InvalidSlot(s.to_string());
        let mut parts = s.split('.');
        let (Some(sub), Some(lane), Some(axis), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        Ok(SlotRef {
            subspace: sub.parse().map_err(|_| bad())?,
            lane: parse_lane(lane).map_err(|_| bad())?,
            axis: axis.parse().map_err(|_| bad())?,
        })
    }
}

/// Per-lane widths of each subspace. Both lanes of a subspace are adjacent,
/// left first, and subspaces follow [`Subspace::ALL`] order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedLayout {
    pub eef: usize,
    pub joint: usize,
    pub gripper: usize,
    pub hand: usize,
    pub aux: usize,
}

impl Default for UnifiedLayout {
    fn default() -> Self {
        UnifiedLayout {
            eef: 6,
            joint: 7,
            gripper: 1,
            hand: 6,
            aux: 1,
        }
    }
}

impl UnifiedLayout {
    pub fn lane_width(&self, s: Subspace) -> usize {
        match s {
            Subspace::Eef => self.eef,
            Subspace::Joint => self.joint,
            Subspace::Gripper => self.gripper,
            Subspace::Hand => self.hand,
            Subspace::Aux => self.aux,
        }
    }

    pub fn offset(&self, s: Subspace) -> usize {
        Subspace::ALL[..s.index()]
            .iter()
            .map(|&x| 2 * self.lane_width(x))
            .sum()
    }

    pub fn range(&self, s: Subspace) -> Range<usize> {
        let o = self.offset(s);
        o..o + 2 * self.lane_width(s)
    }

    pub fn dim(&self) -> usize {
        Subspace::ALL.iter().map(|&s| 2 * self.lane_width(s)).sum()
    }

    pub fn slot(&self, r: SlotRef) -> Result<usize, ActionSpaceError> {
        let w = self.lane_width(r.subspace);
        if r.axis >= w {
            return Err(ActionSpaceError::InvalidSlot(r.to_string()));
        }
        let lane = match r.lane {
            Lane::Left => 0,
            Lane::Right => w,
        };
        Ok(self.offset(r.subspace) + lane + r.axis)
    }

    pub fn slot_ref(&self, index: usize) -> Option<SlotRef> {
        Subspace::ALL.into_iter().find_map(|s| {
            let range = self.range(s);
            if !range.contains(&index) {
                return None;
            }
            let w = self.lane_width(s);
            let local = index - range.start;
            let lane = if local < w { Lane::Left } else { Lane::Right };
            Some(SlotRef::new(s, lane, local % w))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Eef,
    Joint,
    Mixed,
}

/// Linear map of a raw range onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRange(pub f64, pub f64);

impl NormRange {
    pub fn apply(&self, v: f64) -> f64 {
        let span = self.1 - self.0;
        if span == 0.0 {
            return 0.0;
        }
        ((v - self.0) / span).clamp(0.0, 1.0)
    }
}

/// A robot's native action layout and its embedding into the unified space.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbodimentSpec {
    pub id: String,
    /// Native dimension `i` lands in `dims[i]`.
    pub dims: Vec<SlotRef>,
    pub control_mode: ControlMode,
    pub eef_mode: Option<CoordinateMode>,
    /// Raw ranges for the gripper and hand subspaces.
    pub normalize: HashMap<Subspace, NormRange>,
}

impl EmbodimentSpec {
    pub fn new(id: impl Into<String>, dims: Vec<SlotRef>, control_mode: ControlMode) -> Self {
        EmbodimentSpec {
            id: id.into(),
            dims,
            control_mode,
            eef_mode: None,
            normalize: HashMap::new(),
        }
    }

    pub fn with_eef_mode(mut self, mode: CoordinateMode) -> Self {
        self.eef_mode = Some(mode);
        self
    }

    pub fn native_dim(&self) -> usize {
        self.dims.len()
    }

    /// Resolves native dims to unified indices, checking injectivity.
    pub fn slots(&self, layout: &UnifiedLayout) -> Result<Vec<usize>, ActionSpaceError> {
        let mut seen = vec![false; layout.dim()];
        self.dims
            .iter()
            .map(|&r| {
                let i = layout.slot(r)?;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(ActionSpaceError::DuplicateSlot {
                        id: self.id.clone(),
                        slot: r.to_string(),
                    });
                }
                Ok(i)
            })
            .collect()
    }

    pub fn mask(&self, layout: &UnifiedLayout) -> Result<ActionMask, ActionSpaceError> {
        let mut mask = vec![false; layout.dim()];
        for i in self.slots(layout)? {
            mask[i] = true;
        }
        Ok(ActionMask(mask))
    }

    /// Scales gripper and hand entries of a native vector onto `[0, 1]`.
    pub fn normalize_native(&self, native: &mut [f64]) {
        for (v, r) in native.iter_mut().zip(&self.dims) {
            if let Some(range) = self.normalize.get(&r.subspace) {
                *v = range.apply(*v);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionMask(pub Vec<bool>);

impl ActionMask {
    pub fn full(dim: usize) -> Self {
        ActionMask(vec![true; dim])
    }

    pub fn empty(dim: usize) -> Self {
        ActionMask(vec![false; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn active(&self) -> usize {
        self.0.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }

    /// Mask broadcast over `rows` steps as a `rows × D` array of 0/1.
    pub fn to_array(&self, rows: usize) -> Array2<f64> {
        let row = self.as_f64();
        Array2::from_shape_fn((rows, row.len()), |(_, j)| row[j])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedAction {
    values: Vec<f64>,
    mask: ActionMask,
}

impl UnifiedAction {
    /// Zeroes every masked-out entry of `values`.
    pub fn new(mut values: Vec<f64>, mask: ActionMask) -> Result<Self, ActionSpaceError> {
        if values.len() != mask.len() {
            return Err(ActionSpaceError::LengthMismatch(values.len(), mask.len()));
        }
        for (v, &m) in values.iter_mut().zip(&mask.0) {
            if !m {
                *v = 0.0;
            }
        }
        Ok(UnifiedAction { values, mask })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &ActionMask {
        &self.mask
    }
}

/// `H` unified actions sharing one mask, stored as an `H × D` array.
#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedChunk {
    values: Array2<f64>,
    mask: ActionMask,
}

impl UnifiedChunk {
    pub fn new(mut values: Array2<f64>, mask: ActionMask) -> Result<Self, ActionSpaceError> {
        if values.ncols() != mask.len() {
            return Err(ActionSpaceError::LengthMismatch(values.ncols(), mask.len()));
        }
        for (j, &m) in mask.0.iter().enumerate() {
            if !m {
                values.column_mut(j).fill(0.0);
            }
        }
        Ok(UnifiedChunk { values, mask })
    }

    pub fn from_steps(steps: &[UnifiedAction]) -> Result<Self, ActionSpaceError> {
        let first = steps
            .first()
            .ok_or(ActionSpaceError::LengthMismatch(0, 1))?;
        let d = first.values.len();
        let mut values = Array2::zeros((steps.len(), d));
        for (i, s) in steps.iter().enumerate() {
            if s.mask != first.mask {
                return Err(ActionSpaceError::MaskMismatch(format!(
                    "step {i} mask differs from step 0"
                )));
            }
            values.row_mut(i).assign(&ArrayView1::from(&s.values));
        }
        Ok(UnifiedChunk {
            values,
            mask: first.mask.clone(),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &ActionMask {
        &self.mask
    }

    pub fn horizon(&self) -> usize {
        self.values.nrows()
    }

    pub fn step(&self, i: usize) -> UnifiedAction {
        UnifiedAction {
            values: self.values.row(i).to_vec(),
            mask: self.mask.clone(),
        }
    }
}

/// Places native entries into their unified slots and masks the rest.
pub fn embed_native(
    layout: &UnifiedLayout,
    spec: &EmbodimentSpec,
    native: &[f64],
) -> Result<UnifiedAction, ActionSpaceError> {
    if native.len() != spec.native_dim() {
        return Err(ActionSpaceError::DimensionMismatch {
            id: spec.id.clone(),
            expected: spec.native_dim(),
            got: native.len(),
        });
    }
    let slots = spec.slots(layout)?;
    let mut values = vec![0.0; layout.dim()];
    let mut mask = vec![false; layout.dim()];
    for (&i, &v) in slots.iter().zip(native) {
        values[i] = v;
        mask[i] = true;
    }
    Ok(UnifiedAction {
        values,
        mask: ActionMask(mask),
    })
}

/// Inverse of [`embed_native`] for deployment.
pub fn extract_native(
    layout: &UnifiedLayout,
    spec: &EmbodimentSpec,
    u: &UnifiedAction,
) -> Result<Vec<f64>, ActionSpaceError> {
    if u.values.len() != layout.dim() {
        return Err(ActionSpaceError::LengthMismatch(
            u.values.len(),
            layout.dim(),
        ));
    }
    spec.slots(layout)?
        .into_iter()
        .map(|i| {
            if u.mask.0[i] {
                Ok(u.values[i])
            } else {
                Err(ActionSpaceError::MaskMismatch(format!(
                    "slot {} of `{}` is masked out",
                    layout
                        .slot_ref(i)
                        .map(|r| r.to_string())
                        .unwrap_or_default(),
                    spec.id
                )))
            }
        })
        .collect()
}

/// Mean squared error over active entries only; `0` when nothing is active.
pub fn masked_mse(pred: &UnifiedChunk, target: &UnifiedChunk) -> Result<f64, ActionSpaceError> {
    if pred.values.dim() != target.values.dim() {
        return Err(ActionSpaceError::LengthMismatch(
            pred.values.len(),
            target.values.len(),
        ));
    }
    if pred.mask != target.mask {
        return Err(ActionSpaceError::MaskMismatch(
            "prediction and target masks differ".into(),
        ));
    }
    let count = pred.mask.active() * pred.horizon();
    if count == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (p_row, t_row) in pred.values.rows().into_iter().zip(target.values.rows()) {
        for ((p, t), &m) in p_row.iter().zip(t_row.iter()).zip(&pred.mask.0) {
            if m {
                sum += (p - t) * (p - t);
            }
        }
    }
    Ok(sum / count as f64)
}

#[derive(Deserialize)]
struct EmbodimentFile {
    #[serde(default)]
    layout: Option<UnifiedLayout>,
    #[serde(default)]
    embodiment: Vec<EmbodimentRow>,
}

#[derive(Deserialize)]
struct EmbodimentRow {
    id: String,
    control_mode: ControlMode,
    #[serde(default)]
    eef_mode: Option<CoordinateMode>,
    dims: Vec<String>,
    #[serde(default)]
    normalize: HashMap<Subspace, NormRange>,
}

/// Expands `eef.left.*` to every axis of that lane.
fn expand_dims(layout: &UnifiedLayout, pattern: &str) -> Result<Vec<SlotRef>, ActionSpaceError> {
    if let Some(prefix) = pattern.strip_suffix(".*") {
        let (sub, lane) = prefix
            .split_once('.')
            .ok_or_else(|| ActionSpaceError::InvalidSlot(pattern.to_string()))?;
        let subspace: Subspace = sub.parse()?;
        let lane = parse_lane(lane)?;
        return Ok((0..layout.lane_width(subspace))
            .map(|axis| SlotRef::new(subspace, lane, axis))
            .collect());
    }
    Ok(vec![pattern.parse()?])
}

/// The checked-in catalog covering every embodiment of the pre-training registry.
pub const DEFAULT_EMBODIMENTS: &str = include_str!("../data/embodiments.toml");

/// Embodiment specs plus the layout they were validated against.
#[derive(Clone, Debug, Default)]
pub struct EmbodimentCatalog {
    pub layout: UnifiedLayout,
    specs: Vec<EmbodimentSpec>,
}

impl EmbodimentCatalog {
    pub fn new(
        layout: UnifiedLayout,
        specs: Vec<EmbodimentSpec>,
    ) -> Result<Self, ActionSpaceError> {
        for s in &specs {
            s.slots(&layout)?;
        }
        Ok(EmbodimentCatalog { layout, specs })
    }

    pub fn parse(text: &str) -> Result<Self, ActionSpaceError> {
        let file: EmbodimentFile =
            toml::from_str(text).map_err(|e| ActionSpaceError::Config(e.to_string()))?;
        let layout = file.layout.unwrap_or_default();
        let mut specs = Vec::with_capacity(file.embodiment.len());
        for row in file.embodiment {
            let mut dims = Vec::new();
            for d in &row.dims {
                dims.extend(expand_dims(&layout, d)?);
            }
            specs.push(EmbodimentSpec {
                id: row.id,
                dims,
                control_mode: row.control_mode,
                eef_mode: row.eef_mode,
                normalize: row.normalize,
            });
        }
        Self::new(layout, specs)
    }

    pub fn load(path: &Path) -> Result<Self, ActionSpaceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ActionSpaceError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, id: &str) -> Result<&EmbodimentSpec, ActionSpaceError> {
        self.specs
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| ActionSpaceError::UnknownEmbodiment(id.to_string()))
    }

    pub fn specs(&self) -> &[EmbodimentSpec] {
        &self.specs
    }
}
