//! Line-delimited trajectory records and strided chunk extraction.
//!
//! One JSON object per frame:
//!
//! ```text
//! {"embodiment":"franka","frame_index":0,"eef_left":[tx,ty,tz,rx,ry,rz],
//!  "gripper":[0.04],"view_ids":["wrist/0000"],"instruction":"stack the bowls"}
//! ```
//!
//! `eef_right`, `joints`, `gripper` and `hand` are optional; absent fields
//! are implied masked. The native action vector of an embodiment is the
//! concatenation `eef_left ‖ eef_right ‖ joints ‖ gripper ‖ hand` over the
//! fields its frames carry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MixtureError;
use crate::action_space::{
    embed_native, EmbodimentSpec, UnifiedAction, UnifiedChunk, UnifiedLayout,
};
use crate::se3::{encode_chunk, CoordinateMode, Pose, PoseChunk};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub embodiment: String,
    pub frame_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eef_left: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eef_right: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gripper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<Vec<f64>>,
    #[serde(default)]
    pub view_ids: Vec<String>,
    #[serde(default)]
    pub instruction: String,
}

impl Frame {
    fn arity(&self) -> [Option<usize>; 5] {
        [
            self.eef_left.map(|_| 6),
            self.eef_right.map(|_| 6),
            self.joints.as_ref().map(Vec::len),
            self.gripper.as_ref().map(Vec::len),
            self.hand.as_ref().map(Vec::len),
        ]
    }

    /// Absolute state in native order.
    pub fn native_state(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for pose in [self.eef_left, self.eef_right].into_iter().flatten() {
            v.extend(pose);
        }
        for part in [&self.joints, &self.gripper, &self.hand]
            .into_iter()
            .flatten()
        {
            v.extend(part);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub embodiment: String,
    pub frames: Vec<Frame>,
}

const MAX_JOINTS: usize = 14;
const MAX_GRIPPER: usize = 2;
const MAX_HAND: usize = 12;

impl Trajectory {
    pub fn new(frames: Vec<Frame>) -> Result<Self, MixtureError> {
        let first = frames
            .first()
            .ok_or_else(|| MixtureError::Trajectory("trajectory has no frames".into()))?;
        let arity = first.arity();
        let limits = [
            Some(6),
            Some(6),
            Some(MAX_JOINTS),
            Some(MAX_GRIPPER),
            Some(MAX_HAND),
        ];
        for (a, l) in arity.iter().zip(limits) {
            if a.unwrap_or(0) > l.unwrap_or(0) {
                return Err(MixtureError::Trajectory(format!(
                    "field arity {arity:?} exceeds limits"
                )));
            }
        }
        for (i, f) in frames.iter().enumerate() {
            if f.embodiment != first.embodiment {
                return Err(MixtureError::Trajectory(format!(
                    "frame {i}: embodiment `{}` differs from `{}`",
                    f.embodiment, first.embodiment
                )));
            }
            if f.arity() != arity {
                return Err(MixtureError::Trajectory(format!(
                    "frame {i}: field arity {:?} differs from {arity:?}",
                    f.arity()
                )));
            }
            if i > 0 && f.frame_index <= frames[i - 1].frame_index {
                return Err(MixtureError::Trajectory(format!(
                    "frame {i}: frame_index not increasing"
                )));
            }
        }
        Ok(Trajectory {
            embodiment: first.embodiment.clone(),
            frames,
        })
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, MixtureError> {
        let frames = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l)
                    .map_err(|e| MixtureError::Trajectory(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<Vec<Frame>, _>>()?;
        Self::new(frames)
    }

    pub fn load(path: &Path) -> Result<Self, MixtureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MixtureError::Trajectory(format!("{}: {e}", path.display())))?;
        Self::parse_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            out.push_str(&serde_json::to_string(f).expect("frame serializes"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Poses of one arm at the window's anchor and target frames.
    pub fn pose_chunk(&self, w: &Window, right: bool) -> Option<PoseChunk> {
        let pose_at = |i: usize| {
            let f = &self.frames[i];
            if right { f.eef_right } else { f.eef_left }.map(Pose::from_array6)
        };
        let mut poses = vec![pose_at(w.anchor)?];
        for &t in &w.targets {
            poses.push(pose_at(t)?);
        }
        PoseChunk::new(poses).ok()
    }
}

/// A training sample position: observation at `anchor`, targets at the next
/// `H` strided frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub anchor: usize,
    pub targets: Vec<usize>,
}

/// Anchors `0, S, 2S, …` whose full chunk `anchor + S·1 ..= anchor + S·H`
/// fits inside a trajectory of `len` frames.
pub fn stride_sample(len: usize, step: usize, horizon: usize) -> Vec<Window> {
    assert!(
        step >= 1 && horizon >= 1,
        "step and horizon must be positive"
    );
    let span = step * horizon;
    (0..len)
        .step_by(step)
        .take_while(|&a| a + span < len)
        .map(|anchor| Window {
            anchor,
            targets: (1..=horizon).map(|k| anchor + k * step).collect(),
        })
        .collect()
}

/// A model-ready sample: observation references, proprioceptive state and the
/// target chunk, all in the unified space.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub dataset: String,
    pub embodiment: String,
    pub anchor: usize,
    pub view_ids: Vec<String>,
    pub instruction: String,
    pub proprio: Vec<f64>,
    pub chunk: UnifiedChunk,
}

/// Converts one window into a unified example. End-effector targets are
/// re-expressed with the embodiment's coordinate mode; joint, gripper and
/// hand targets stay absolute.
pub fn build_example(
    dataset: &str,
    traj: &Trajectory,
    w: &Window,
    spec: &EmbodimentSpec,
    layout: &UnifiedLayout,
) -> Result<Example, MixtureError> {
    let mode = spec.eef_mode.unwrap_or(CoordinateMode::EefRel);
    let arms: Vec<Vec<[f64; 6]>> = [false, true]
        .into_iter()
        .filter_map(|right| traj.pose_chunk(w, right))
        .map(|c| {
            encode_chunk(&c, mode)
                .iter()
                .map(|a| a.to_array6())
                .collect()
        })
        .collect();

    let mut steps = Vec::with_capacity(w.targets.len());
    for (k, &t) in w.targets.iter().enumerate() {
        let f = &traj.frames[t];
        let mut native: Vec<f64> = arms.iter().flat_map(|a| a[k]).collect();
        for part in [&f.joints, &f.gripper, &f.hand].into_iter().flatten() {
            native.extend(part);
        }
        spec.normalize_native(&mut native);
        steps.push(embed_native(layout, spec, &native)?);
    }
    let chunk = UnifiedChunk::from_steps(&steps)?;

    let anchor = &traj.frames[w.anchor];
    let mut state = anchor.native_state();
    spec.normalize_native(&mut state);
    let proprio: UnifiedAction = embed_native(layout, spec, &state)?;

    Ok(Example {
        dataset: dataset.to_string(),
        embodiment: traj.embodiment.clone(),
        anchor: w.anchor,
        view_ids: anchor.view_ids.clone(),
        instruction: anchor.instruction.clone(),
        proprio: proprio.values().to_vec(),
        chunk,
    })
}
