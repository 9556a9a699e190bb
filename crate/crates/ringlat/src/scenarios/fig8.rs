//! Pump power reduced at `t = 0` and restored at `t_restore`.

use num_complex::Complex64;
use ringlat_core::adiabatic::{integrate, DriveSchedule, DriveSegment, FieldState, IntegrateOptions, TraceSample, UnSchedule};
use serde::Serialize;

use super::common::scaled;
use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;

#[derive(Debug, Clone, Serialize)]
pub struct Fig8Report {
    /// Settled value just before the step.
    pub chi_pre: f64,
    /// Minimum while the step is on, and when it occurs (s).
    pub chi_min: f64,
    pub t_min: f64,
    /// Value at the end of the step.
    pub chi_step: f64,
    /// Value at the end of the run.
    pub chi_final: f64,
    #[serde(skip)]
    pub trace: Vec<TraceSample>,
}

fn last_before(trace: &[TraceSample], t: f64) -> Option<&TraceSample> {
    trace.iter().take_while(|s| s.t_seconds < t).last()
}

pub fn compute(cfg: &Config) -> Result<Fig8Report> {
    let c = &cfg.fig8;
    let gc = cfg.physics.gamma_c;
    if !(c.t_pre > 0.0 && c.t_restore > 0.0 && c.t_end > c.t_restore && c.stride > 0.0) {
        return Err(HarnessError::Precondition(
            "fig8 needs t_pre > 0 and 0 < t_restore < t_end".into(),
        ));
    }
    let sp = scaled(&cfg.sample, c.un, c.chi0_minus.sqrt())?;
    let seg = |t: f64, f: f64| DriveSegment {
        tau_start: t * gc,
        chi0_minus: c.chi0_minus,
        i0_factor: f,
    };
    let sched = DriveSchedule::new(
        vec![seg(-c.t_pre, 1.0), seg(0.0, c.step_factor), seg(c.t_restore, 1.0)],
        UnSchedule::Constant(c.un),
    )?;
    let tr = integrate(
        FieldState::new(Complex64::new(c.chi0_minus.sqrt(), 0.0)),
        &sched,
        &sp,
        (-c.t_pre * gc, c.t_end * gc),
        &IntegrateOptions::new(c.stride * gc, gc),
    )?;
    let s = tr.samples;
    let pre = last_before(&s, 0.0).ok_or_else(|| HarnessError::Internal("no pre-step sample".into()))?;
    let step = last_before(&s, c.t_restore).ok_or_else(|| HarnessError::Internal("no step sample".into()))?;
    let min = s
        .iter()
        .filter(|x| x.t_seconds >= 0.0 && x.t_seconds < c.t_restore)
        .min_by(|a, b| a.chi_minus.total_cmp(&b.chi_minus))
        .ok_or_else(|| HarnessError::Internal("no samples during the step".into()))?;
    Ok(Fig8Report {
        chi_pre: pre.chi_minus,
        chi_min: min.chi_minus,
        t_min: min.t_seconds,
        chi_step: step.chi_minus,
        chi_final: s.last().map_or(f64::NAN, |x| x.chi_minus),
        trace: s.clone(),
    })
}

pub fn emit(r: &Fig8Report, out: &mut RunOutput) -> Result<()> {
    out.write_csv("fig8_trace.csv", &r.trace)?;
    out.write_json("fig8_report.json", r)
}
