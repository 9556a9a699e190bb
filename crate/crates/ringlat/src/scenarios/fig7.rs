//! Jumps of the unlocked-mode intensity while the trapped sample decays.
//! The decay law is fitted to a synthetic population series, then each
//! case starts on its low-intensity branch and is integrated adiabatically.

use ringlat_core::adiabatic::{integrate, AtomDecay, DriveSchedule, FieldState, IntegrateOptions, TraceSample, UnSchedule};
use ringlat_core::thermo::{fit_trap_decay, DecayFit};
use serde::Serialize;

use super::common::{field_of, pct_label, scaled, stable_states, synthesize_decay, PopulationRow};
use crate::config::{Config, JumpCase};
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub chi0_minus: f64,
    #[serde(rename = "UN0")]
    pub un0: f64,
    pub chi_initial: f64,
    pub phi_initial: f64,
    /// First time with `chi- >= jump_fraction * chi0-`, s.
    pub jump_time: Option<f64>,
    pub chi_final: f64,
    #[serde(skip)]
    pub trace: Vec<TraceSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig7Report {
    pub decay_fit: DecayFit,
    /// Fitted law normalized to one atom at `t = 0`.
    pub decay: AtomDecay,
    pub jump_fraction: f64,
    pub cases: Vec<CaseReport>,
    #[serde(skip)]
    pub decay_data: Vec<PopulationRow>,
}

impl Fig7Report {
    pub fn case(&self, chi0_minus: f64) -> Option<&CaseReport> {
        self.cases.iter().find(|c| (c.chi0_minus - chi0_minus).abs() < 1e-9)
    }
}

/// Decay law from the synthetic population series, rescaled so that
/// `N0 = 1`.
pub fn fitted_decay(cfg: &Config) -> Result<(Vec<PopulationRow>, DecayFit, AtomDecay)> {
    let data = synthesize_decay(&cfg.fig7.decay, cfg.seed, 7)?;
    let t: Vec<f64> = data.iter().map(|r| r.t_seconds).collect();
    let n: Vec<f64> = data.iter().map(|r| r.atoms).collect();
    let fit = fit_trap_decay(&t, &n)?;
    let decay = AtomDecay {
        n0: 1.0,
        gamma_bg: fit.gamma_bg,
        q: fit.q * fit.n0,
    };
    Ok((data, fit, decay))
}

pub fn run_case(cfg: &Config, case: &JumpCase, decay: &AtomDecay) -> Result<CaseReport> {
    let c = &cfg.fig7;
    let gc = cfg.physics.gamma_c;
    if !(c.t_end > 0.0 && c.stride > 0.0 && c.chi_init > 0.0) {
        return Err(HarnessError::Precondition("fig7 needs t_end, stride, chi_init > 0".into()));
    }
    let sp = scaled(&cfg.sample, case.un0, c.chi_init.sqrt())?;
    let low = stable_states(&sp, case.un0, case.chi0_minus)?[0];
    let sched = DriveSchedule::constant(case.chi0_minus, case.un0)?.with_un(UnSchedule::Decay {
        un0: case.un0,
        decay: *decay,
        gamma_c: gc,
    })?;
    let tr = integrate(
        FieldState::new(field_of(&low)),
        &sched,
        &sp,
        (0.0, c.t_end * gc),
        &IntegrateOptions::new(c.stride * gc, gc),
    )?;
    let level = c.jump_fraction * case.chi0_minus;
    Ok(CaseReport {
        chi0_minus: case.chi0_minus,
        un0: case.un0,
        chi_initial: low.intensity,
        phi_initial: low.phi,
        jump_time: tr.samples.iter().find(|s| s.chi_minus >= level).map(|s| s.t_seconds),
        chi_final: tr.samples.last().map_or(f64::NAN, |s| s.chi_minus),
        trace: tr.samples,
    })
}

pub fn compute(cfg: &Config) -> Result<Fig7Report> {
    let (decay_data, decay_fit, decay) = fitted_decay(cfg)?;
    let cases = cfg
        .fig7
        .cases
        .iter()
        .map(|case| run_case(cfg, case, &decay))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fig7Report {
        decay_fit,
        decay,
        jump_fraction: cfg.fig7.jump_fraction,
        cases,
        decay_data,
    })
}

pub fn emit(r: &Fig7Report, out: &mut RunOutput) -> Result<()> {
    out.write_csv("fig7_decay_data.csv", &r.decay_data)?;
    for c in &r.cases {
        out.write_csv(&format!("fig7_trace_{}.csv", pct_label(c.chi0_minus)), &c.trace)?;
    }
    out.write_json("fig7_jumps.json", r)
}
