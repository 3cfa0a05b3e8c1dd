//! Rotation sweeps over synthetic pairs and the resulting report.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{rmse, rotate_about_center};
use super::stats::{welch_t, WelchResult};
use super::synth::{synth_pair, SynthSpec};
use crate::config::PipelineConfig;
use crate::geometry::TransformModel;
use crate::pipeline::{extract_features, register_sets};
use crate::Error;

/// Rotation angles, in degrees, of the standard sweep.
pub const DEFAULT_ANGLES: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0];

/// Outcome of one (pair, angle) registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub pair: String,
    pub rmse: f64,
    /// Registration produced no model; `rmse` is that of the identity.
    pub failed: bool,
    pub matches: usize,
    pub inliers: usize,
    pub model: Option<[f64; 9]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub angle: f64,
    pub cells: Vec<CellResult>,
    pub mean_rmse: f64,
    pub failures: usize,
}

impl AngleRow {
    fn new(angle: f64, cells: Vec<CellResult>) -> Self {
        let mean_rmse = cells.iter().map(|c| c.rmse).sum::<f64>() / cells.len().max(1) as f64;
        let failures = cells.iter().filter(|c| c.failed).count();
        Self {
            angle,
            cells,
            mean_rmse,
            failures,
        }
    }

    pub fn rmses(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.rmse).collect()
    }

    /// Fraction of cells that registered with RMSE below `max_rmse`.
    pub fn success_rate(&self, max_rmse: f64) -> f64 {
        let ok = self
            .cells
            .iter()
            .filter(|c| !c.failed && c.rmse < max_rmse)
            .count();
        ok as f64 / self.cells.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub angle: f64,
    pub welch: Option<WelchResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub grid_stride: usize,
    pub rows: Vec<AngleRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Vec<Comparison>>,
}

impl EvalReport {
    pub fn angles(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.angle).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_rmse).collect()
    }

    pub fn row(&self, angle: f64) -> Option<&AngleRow> {
        self.rows.iter().find(|r| r.angle == angle)
    }

    /// Per-angle Welch test of this report's RMSEs against `other`'s.
    pub fn compare_with(&mut self, other: &EvalReport) {
        let rows = self
            .rows
            .iter()
            .map(|row| match other.row(row.angle) {
                None => Comparison {
                    angle: row.angle,
                    welch: None,
                    note: Some("angle missing from comparison report".into()),
                },
                Some(o) => match welch_t(&row.rmses(), &o.rmses()) {
                    Ok(w) => Comparison {
                        angle: row.angle,
                        welch: Some(w),
                        note: w.degenerate.then(|| "both samples constant".to_string()),
                    },
                    Err(e) => Comparison {
                        angle: row.angle,
                        welch: None,
                        note: Some(e.to_string()),
                    },
                },
            })
            .collect();
        self.comparison = Some(rows);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Fixed-width text table: one line per angle.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>7}  {:>10}  {:>10}  {:>10}  {:>8}",
            "angle", "mean_rmse", "min_rmse", "max_rmse", "failed"
        );
        for row in &self.rows {
            let rm = row.rmses();
            let min = rm.iter().copied().fold(f64::INFINITY, f64::min);
            let max = rm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(
                out,
                "{:>7.2}  {:>10.4}  {:>10.4}  {:>10.4}  {:>4}/{:<3}",
                row.angle,
                row.mean_rmse,
                min,
                max,
                row.failures,
                row.cells.len()
            );
        }
        if let Some(cmp) = &self.comparison {
            let _ = writeln!(
                out,
                "\n{:>7}  {:>10}  {:>8}  {:>12}",
                "angle", "t", "dof", "p"
            );
            for c in cmp {
                match &c.welch {
                    Some(w) => {
                        let _ = writeln!(
                            out,
                            "{:>7.2}  {:>10.4}  {:>8.2}  {:>12.4e}",
                            c.angle, w.t, w.dof, w.p
                        );
                    }
                    None => {
                        let _ = writeln!(
                            out,
                            "{:>7.2}  {}",
                            c.angle,
                            c.note.as_deref().unwrap_or("n/a")
                        );
                    }
                }
            }
        }
        out
    }
}

/// Registers one synthetic pair rotated by `angle` about its center.
pub fn run_cell(
    spec: &SynthSpec,
    angle: f64,
    config: &PipelineConfig,
) -> Result<CellResult, Error> {
    let truth = rotate_about_center(angle, spec.width, spec.height);
    let pair = synth_pair(spec, &truth)?;
    let q = extract_features(&pair.query.features, &pair.query.mask, config)?;
    let r = extract_features(&pair.reference.features, &pair.reference.mask, config)?;
    let id = format!("seed-{}", spec.seed);
    let (w, h, g) = (spec.width, spec.height, config.grid_stride);
    match register_sets(&q, &r, config) {
        Ok(reg) => Ok(CellResult {
            pair: id,
            rmse: rmse(&reg.model, &truth, w, h, g)?,
            failed: false,
            matches: reg.matches.len(),
            inliers: reg.inlier_count,
            model: Some(reg.model.row_major()),
        }),
        Err(e) if e.is_no_consensus() => {
            log::info!("{id} at {angle} deg: registration failed: {e}");
            Ok(CellResult {
                pair: id,
                rmse: rmse(&TransformModel::identity(), &truth, w, h, g)?,
                failed: true,
                matches: 0,
                inliers: 0,
                model: None,
            })
        }
        Err(e) => Err(e),
    }
}

/// Runs every (spec, angle) cell. Cells run in parallel; the report is
/// ordered by angle list, then spec list, independent of scheduling.
pub fn run_sweep(
    specs: &[SynthSpec],
    angles: &[f64],
    config: &PipelineConfig,
) -> Result<EvalReport, Error> {
    if angles.is_empty() {
        return Err(Error::Config("angle list is empty".into()));
    }
    if specs.is_empty() {
        return Err(Error::Config("no synthetic pairs to evaluate".into()));
    }
    config.validate()?;
    for spec in specs {
        let state = config.rf_state();
        if state.jump != spec.stride as u64 || state.start != 0.5 {
            return Err(Error::Config(format!(
                "layer stack jump {} / start {} does not match synthetic stride {}",
                state.jump, state.start, spec.stride
            )));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..angles.len())
        .flat_map(|a| (0..specs.len()).map(move |s| (a, s)))
        .collect();
    let results: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(a, s)| run_cell(&specs[s], angles[a], config))
        .collect::<Result<_, _>>()?;

    let rows = angles
        .iter()
        .enumerate()
        .map(|(a, &angle)| {
            let cells = results[a * specs.len()..(a + 1) * specs.len()].to_vec();
            AngleRow::new(angle, cells)
        })
        .collect();
    Ok(EvalReport {
        grid_stride: config.grid_stride,
        rows,
        comparison: None,
    })
}
