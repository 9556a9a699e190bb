//! Steady-state diagrams over `UN`, the bistable window per pump ratio and
//! the pump ratio at which bistability first appears.

use rayon::prelude::*;
use ringlat_core::bistability::{
    bistability_range, continuation_scan, range_from_diagram, BistabilityRange, DiagramRow, Fold, ScanOptions,
};
use ringlat_core::localization::knobs_from_eta;
use serde::Serialize;

use super::common::{pct_label, scaled};
use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;

#[derive(Debug, Clone, Serialize)]
pub struct DiagramReport {
    pub chi0_minus: f64,
    pub folds: Vec<Fold>,
    /// First multistable window inside `[0, un_max]`.
    pub range: Option<BistabilityRange>,
    /// Same window searched up to `un_ceiling`; `un_high = None` there
    /// means the upper branch never terminates.
    pub range_to_ceiling: Option<BistabilityRange>,
    #[serde(skip)]
    pub rows: Vec<DiagramRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub chi0_minus: f64,
    pub bistable: bool,
    pub un_low: Option<f64>,
    pub un_high: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Report {
    pub un_max: f64,
    pub un_ceiling: f64,
    pub diagrams: Vec<DiagramReport>,
    pub threshold_scan: Vec<ThresholdRow>,
    /// Midpoint between the largest monostable and the smallest bistable
    /// pump ratio of the scan.
    pub threshold: Option<f64>,
}

impl Fig2Report {
    pub fn diagram(&self, chi0_minus: f64) -> Option<&DiagramReport> {
        self.diagrams.iter().find(|d| (d.chi0_minus - chi0_minus).abs() < 1e-9)
    }
}

fn options(cfg: &Config) -> ScanOptions {
    ScanOptions {
        form: cfg.fig2.form,
        n_grid: cfg.fig2.n_grid,
        ..ScanOptions::default()
    }
}

pub fn compute(cfg: &Config) -> Result<Fig2Report> {
    let c = &cfg.fig2;
    if !(c.un_max > 0.0 && c.un_ceiling >= c.un_max) || c.n_un < 2 {
        return Err(HarnessError::Precondition(
            "fig2 needs 0 < un_max <= un_ceiling and n_un >= 2".into(),
        ));
    }
    let opts = options(cfg);
    let knobs = |cm: f64| -> Result<_> { Ok(knobs_from_eta(&scaled(&cfg.sample, 1.0, cm.sqrt())?, 1.0 - cm)) };

    let diagrams = c
        .chi0_minus
        .iter()
        .map(|&cm| {
            let k = knobs(cm)?;
            let d = continuation_scan((0.0, c.un_max), c.n_un, cm, &k, &opts)?;
            let range_to_ceiling = bistability_range(cm, &k, c.un_ceiling, &opts)?;
            Ok(DiagramReport {
                chi0_minus: cm,
                folds: d.folds.clone(),
                range: range_from_diagram(&d),
                range_to_ceiling,
                rows: d.rows(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let threshold_scan = c
        .threshold_scan
        .par_iter()
        .map(|&cm| {
            let k = knobs(cm)?;
            let d = continuation_scan((0.0, c.un_max), c.n_un, cm, &k, &opts)?;
            let r = range_from_diagram(&d);
            Ok(ThresholdRow {
                chi0_minus: cm,
                bistable: r.is_some(),
                un_low: r.map(|r| r.un_low),
                un_high: r.and_then(|r| r.un_high),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let threshold = {
        let mut sorted = threshold_scan.clone();
        sorted.sort_by(|a, b| a.chi0_minus.total_cmp(&b.chi0_minus));
        sorted
            .windows(2)
            .find(|w| !w[0].bistable && w[1].bistable)
            .map(|w| 0.5 * (w[0].chi0_minus + w[1].chi0_minus))
    };

    Ok(Fig2Report {
        un_max: c.un_max,
        un_ceiling: c.un_ceiling,
        diagrams,
        threshold_scan,
        threshold,
    })
}

pub fn emit(r: &Fig2Report, out: &mut RunOutput) -> Result<()> {
    for d in &r.diagrams {
        out.write_csv(&format!("fig2_branches_{}.csv", pct_label(d.chi0_minus)), &d.rows)?;
    }
    out.write_csv("fig2_threshold_scan.csv", &r.threshold_scan)?;
    out.write_json("fig2_folds.json", r)
}
