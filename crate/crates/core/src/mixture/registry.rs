use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MixtureError;

/// Quadrant of the corpus: real vs. simulated, end-effector vs. joint control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    RealEef,
    SimEef,
    SimJoint,
    RealJoint,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::RealEef,
        Category::SimEef,
        Category::SimJoint,
        Category::RealJoint,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Category::RealEef => "Real EEF",
            Category::SimEef => "Sim EEF",
            Category::SimJoint => "Sim Joint",
            Category::RealJoint => "Real Joint",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub category: Category,
    pub raw_frames: u64,
    /// Frame step size `S ≥ 1`.
    pub step: u64,
    pub embodiment: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl DatasetEntry {
    pub fn effective_count(&self) -> u64 {
        effective_count(self)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

/// `⌊N_raw / S⌋`.
pub fn effective_count(e: &DatasetEntry) -> u64 {
    e.raw_frames / e.step.max(1)
}

/// The progressively richer mixtures: OXE only, then adding real EEF, sim
/// EEF and finally joint-space data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixtureTag {
    D1,
    D2,
    D3,
    D4,
    Custom,
}

impl MixtureTag {
    pub fn includes(&self, e: &DatasetEntry) -> bool {
        match self {
            MixtureTag::D1 => e.category == Category::RealEef && e.has_tag("oxe"),
            MixtureTag::D2 => e.category == Category::RealEef,
            MixtureTag::D3 => matches!(e.category, Category::RealEef | Category::SimEef),
            MixtureTag::D4 | MixtureTag::Custom => true,
        }
    }
}

impl FromStr for MixtureTag {
    type Err = MixtureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(MixtureTag::D1),
            "d2" => Ok(MixtureTag::D2),
            "d3" => Ok(MixtureTag::D3),
            "d4" => Ok(MixtureTag::D4),
            "custom" | "all" => Ok(MixtureTag::Custom),
            _ => Err(MixtureError::Config(format!("unknown mixture `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixtureConfig {
    pub entries: Vec<DatasetEntry>,
    pub tag: MixtureTag,
}

#[derive(Deserialize)]
struct RegistryFile {
    #[serde(default)]
    dataset: Vec<DatasetEntry>,
}

impl MixtureConfig {
    pub fn new(entries: Vec<DatasetEntry>, tag: MixtureTag) -> Result<Self, MixtureError> {
        let mut names = HashSet::new();
        for e in &entries {
            if e.step == 0 {
                return Err(MixtureError::Config(format!(
                    "dataset `{}` has step 0",
                    e.name
                )));
            }
            if !names.insert(e.name.as_str()) {
                return Err(MixtureError::Config(format!(
                    "duplicate dataset name `{}`",
                    e.name
                )));
            }
        }
        let entries = entries.into_iter().filter(|e| tag.includes(e)).collect();
        Ok(MixtureConfig { entries, tag })
    }

    pub fn empty() -> Self {
        MixtureConfig {
            entries: Vec::new(),
            tag: MixtureTag::Custom,
        }
    }

    /// Parses a registry and keeps the rows selected by `tag`.
    pub fn parse(text: &str, tag: MixtureTag) -> Result<Self, MixtureError> {
        let file: RegistryFile =
            toml::from_str(text).map_err(|e| MixtureError::Config(e.to_string()))?;
        Self::new(file.dataset, tag)
    }

    pub fn load(path: &Path, tag: MixtureTag) -> Result<Self, MixtureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MixtureError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, tag)
    }

    pub fn get(&self, name: &str) -> Option<&DatasetEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}
