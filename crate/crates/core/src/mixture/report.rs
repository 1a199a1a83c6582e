use std::fmt::Write as _;

use serde::Serialize;

use super::registry::{Category, MixtureConfig};

/// Formats a frame count in millions, rounded half-up to 0.01M.
pub fn format_millions(frames: u64) -> String {
    let hundredths = (frames + 5_000) / 10_000;
    format!("{}.{:02}M", hundredths / 100, hundredths % 100)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryRow {
    pub name: String,
    pub category: Category,
    pub step: u64,
    pub raw_frames: u64,
    pub effective_frames: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CategoryRow {
    pub category: Category,
    pub raw_frames: u64,
    pub effective_frames: u64,
    /// Share of the effective total, in percent.
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureReport {
    pub entries: Vec<EntryRow>,
    pub categories: Vec<CategoryRow>,
    pub total_raw: u64,
    pub total_effective: u64,
}

pub fn mixture_report(cfg: &MixtureConfig) -> MixtureReport {
    let entries: Vec<EntryRow> = cfg
        .entries
        .iter()
        .map(|e| EntryRow {
            name: e.name.clone(),
            category: e.category,
            step: e.step,
            raw_frames: e.raw_frames,
            effective_frames: e.effective_count(),
        })
        .collect();
    let total_raw = entries.iter().map(|r| r.raw_frames).sum();
    let total_effective: u64 = entries.iter().map(|r| r.effective_frames).sum();
    let categories = Category::ALL
        .iter()
        .map(|&c| {
            let (raw, eff) = entries
                .iter()
                .filter(|r| r.category == c)
                .fold((0, 0), |(a, b), r| {
                    (a + r.raw_frames, b + r.effective_frames)
                });
            CategoryRow {
                category: c,
                raw_frames: raw,
                effective_frames: eff,
                share: if total_effective == 0 {
                    0.0
                } else {
                    100.0 * eff as f64 / total_effective as f64
                },
            }
        })
        .collect();
    MixtureReport {
        entries,
        categories,
        total_raw,
        total_effective,
    }
}

impl MixtureReport {
    pub fn category(&self, c: Category) -> &CategoryRow {
        self.categories
            .iter()
            .find(|r| r.category == c)
            .expect("report carries every category")
    }

    /// Plain-text table grouped by category, ending in the grand total.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<11} {:<30} {:>3} {:>10} {:>10}",
            "category", "dataset", "S", "N_raw", "N_eff"
        );
        for cat in &self.categories {
            let rows: Vec<&EntryRow> = self
                .entries
                .iter()
                .filter(|r| r.category == cat.category)
                .collect();
            if rows.is_empty() {
                continue;
            }
            for r in rows {
                let _ = writeln!(
                    out,
                    "{:<11} {:<30} {:>3} {:>10} {:>10}",
                    cat.category.label(),
                    r.name,
                    r.step,
                    format_millions(r.raw_frames),
                    format_millions(r.effective_frames)
                );
            }
            let _ = writeln!(
                out,
                "{:<11} {:<30} {:>3} {:>10} {:>10}  ({:.1}%)",
                cat.category.label(),
                "subtotal",
                "",
                format_millions(cat.raw_frames),
                format_millions(cat.effective_frames),
                cat.share
            );
        }
        let _ = writeln!(
            out,
            "{:<11} {:<30} {:>3} {:>10} {:>10}",
            "total",
            "",
            "",
            format_millions(self.total_raw),
            format_millions(self.total_effective)
        );
        out
    }
}
