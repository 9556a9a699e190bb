//! Without atoms the unlocked mode fills up as `sqrt(chi0-) (1 - e^{-tau})`.

use num_complex::Complex64;
use ringlat_core::adiabatic::{integrate, DriveSchedule, FieldState, IntegrateOptions};
use serde::Serialize;

use super::common::scaled;
use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;

#[derive(Debug, Clone, Serialize)]
pub struct FillRow {
    pub tau: f64,
    pub t_seconds: f64,
    pub chi_minus: f64,
    pub chi_closed_form: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmptyCavityReport {
    pub chi0_minus: f64,
    pub max_abs_error: f64,
    #[serde(skip)]
    pub rows: Vec<FillRow>,
}

pub fn compute(cfg: &Config) -> Result<EmptyCavityReport> {
    let c = &cfg.empty_cavity;
    if !(c.tau_end > 0.0 && c.stride > 0.0) {
        return Err(HarnessError::Precondition("empty_cavity needs tau_end > 0 and stride > 0".into()));
    }
    let gc = cfg.physics.gamma_c;
    let sp = scaled(&cfg.sample, 0.0, c.chi0_minus.sqrt())?;
    let sched = DriveSchedule::constant(c.chi0_minus, 0.0)?;
    let tr = integrate(
        FieldState::new(Complex64::new(0.0, 0.0)),
        &sched,
        &sp,
        (0.0, c.tau_end),
        &IntegrateOptions::new(c.stride, gc),
    )?;
    let rows: Vec<FillRow> = tr
        .samples
        .iter()
        .map(|s| {
            let exact = c.chi0_minus * (-(-s.tau).exp_m1()).powi(2);
            FillRow {
                tau: s.tau,
                t_seconds: s.t_seconds,
                chi_minus: s.chi_minus,
                chi_closed_form: exact,
                abs_error: (s.chi_minus - exact).abs(),
            }
        })
        .collect();
    Ok(EmptyCavityReport {
        chi0_minus: c.chi0_minus,
        max_abs_error: rows.iter().map(|r| r.abs_error).fold(0.0, f64::max),
        rows,
    })
}

pub fn emit(r: &EmptyCavityReport, out: &mut RunOutput) -> Result<()> {
    out.write_csv("empty_cavity_trace.csv", &r.rows)?;
    out.write_json("empty_cavity_report.json", r)
}
