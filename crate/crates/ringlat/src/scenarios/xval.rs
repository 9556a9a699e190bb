//! Full particle dynamics against the adiabatic model on the jump cases.
//!
//! Both models start from the adiabatic low-intensity state. The particle
//! ensemble temperature is calibrated so that its initial `|g|` equals the
//! adiabatic localization factor there; comparison windows are placed on
//! the plateaus of the adiabatic trace, away from its jump.

use ringlat_core::adiabatic::{
    integrate, AtomDecay, DriveSchedule, FieldState, IntegrateOptions, TraceSample, UnSchedule,
};
use ringlat_core::full::{
    calibrate_localization, init_bound_ensemble, integrate_full, rescale_for_simulation, BindingLattice,
    EnsembleSpec, FullIntegrator, FullModel, FullOptions, ObservableSample, RescalePlan,
};
use ringlat_core::params::PumpConfig;
use serde::Serialize;

use super::common::{field_of, interp, pct_label, scaled, stable_states};
use crate::config::{Config, JumpCase};
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowStats {
    pub window: Window,
    /// RMS of `(chi_full - chi_adiabatic) / chi_adiabatic`.
    pub rms_relative: f64,
    pub mean_full: f64,
    pub mean_adiabatic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FullRunReport {
    pub n_sim: usize,
    pub seed: u64,
    pub plan: RescalePlan,
    pub temperature_scale: f64,
    pub initial_g: f64,
    pub jump_time: Option<f64>,
    pub windows: Vec<WindowStats>,
    #[serde(skip)]
    pub trace: Vec<ObservableSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub chi0_minus: f64,
    #[serde(rename = "UN0")]
    pub un0: f64,
    pub t_end: f64,
    pub adiabatic_jump_time: Option<f64>,
    pub target_g: f64,
    pub runs: Vec<FullRunReport>,
    #[serde(skip)]
    pub adiabatic: Vec<TraceSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct XvalReport {
    pub cases: Vec<CaseReport>,
    /// Largest relative spread of plateau means across ensemble sizes
    /// (first case), per window.
    pub n_sim_spread: Vec<f64>,
}

impl CaseReport {
    pub fn primary(&self, n_sim: usize) -> Option<&FullRunReport> {
        self.runs.iter().find(|r| r.n_sim == n_sim)
    }
}

pub fn plateau_windows(jump: Option<f64>, t_end: f64, settle: f64, margin: f64) -> Vec<Window> {
    match jump {
        Some(tj) => vec![
            Window { t_start: settle, t_end: tj - settle },
            Window { t_start: tj + margin, t_end },
        ]
        .into_iter()
        .filter(|w| w.t_end > w.t_start)
        .collect(),
        None => vec![Window { t_start: settle, t_end }],
    }
}

fn window_stats(w: Window, full: &[ObservableSample], adi: &[TraceSample]) -> Result<WindowStats> {
    let ta: Vec<f64> = adi.iter().map(|s| s.t_seconds).collect();
    let ca: Vec<f64> = adi.iter().map(|s| s.chi_minus).collect();
    let pairs: Vec<(f64, f64)> = full
        .iter()
        .filter(|s| s.t_seconds >= w.t_start && s.t_seconds <= w.t_end)
        .filter_map(|s| interp(&ta, &ca, s.t_seconds).map(|a| (s.chi_minus, a)))
        .collect();
    if pairs.is_empty() {
        return Err(HarnessError::Precondition(format!(
            "comparison window [{}, {}] s holds no samples",
            w.t_start, w.t_end
        )));
    }
    let n = pairs.len() as f64;
    Ok(WindowStats {
        window: w,
        rms_relative: (pairs.iter().map(|(f, a)| ((f - a) / a).powi(2)).sum::<f64>() / n).sqrt(),
        mean_full: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        mean_adiabatic: pairs.iter().map(|p| p.1).sum::<f64>() / n,
    })
}

fn decay(cfg: &Config) -> AtomDecay {
    let d = &cfg.fig7.decay;
    AtomDecay {
        n0: 1.0,
        gamma_bg: d.gamma_bg,
        q: d.q_n0,
    }
}

pub fn run_case(cfg: &Config, case: &JumpCase, t_end: f64, n_sims: &[usize]) -> Result<CaseReport> {
    let x = &cfg.xval;
    let phys = cfg.physics.params();
    let gc = phys.gamma_c;
    let sp = scaled(&cfg.sample, case.un0, cfg.fig7.chi_init.sqrt())?;
    let low = stable_states(&sp, case.un0, case.chi0_minus)?[0];
    let a_init = field_of(&low);
    let sched = DriveSchedule::constant(case.chi0_minus, case.un0)?.with_un(UnSchedule::Decay {
        un0: case.un0,
        decay: decay(cfg),
        gamma_c: gc,
    })?;
    let adiabatic = integrate(
        FieldState::new(a_init),
        &sched,
        &sp,
        (0.0, t_end * gc),
        &IntegrateOptions::new(x.stride * gc, gc),
    )?
    .samples;
    let level = cfg.fig7.jump_fraction * case.chi0_minus;
    let adiabatic_jump_time = adiabatic.iter().find(|s| s.chi_minus >= level).map(|s| s.t_seconds);
    let target_g = adiabatic[0].l;
    let windows = plateau_windows(adiabatic_jump_time, t_end, x.t_settle, x.jump_margin);

    let model = FullModel::from_axial_frequency(&phys, x.nu_axial);
    let p = (1.0 - case.chi0_minus).sqrt();
    let lat = BindingLattice { p, a: a_init, model: &model };
    let pump = PumpConfig::new(case.chi0_minus, 1.0)?;
    let runs = n_sims
        .iter()
        .map(|&n_sim| {
            let spec =
                EnsembleSpec::from_boltzmann_ratios(n_sim, cfg.sample.eta_ax, cfg.sample.eta_rad, p, a_init, &model)?;
            let cal = calibrate_localization(&spec, &lat, target_g, x.pilot_atoms, cfg.seed.wrapping_add(9_999))?;
            let (ens, _) = init_bound_ensemble(cfg.seed, &cal.spec, &lat)?;
            let initial_g = ringlat_core::localization::discrete_localization(&ens.positions, model.k, model.w0)?.g_mod();
            let opts = FullOptions {
                dt: model.default_dt() * x.dt_periods / 0.02,
                stride: x.stride * gc,
                integrator: FullIntegrator::Dop853,
                frozen_field: false,
            };
            let run = integrate_full(&ens, a_init, &sched, &model, (0.0, t_end * gc), &opts)?;
            let trace = run.trace.samples;
            let stats = windows
                .iter()
                .map(|w| window_stats(*w, &trace, &adiabatic))
                .collect::<Result<Vec<_>>>()?;
            Ok(FullRunReport {
                n_sim,
                seed: cfg.seed,
                plan: rescale_for_simulation(x.n_real, n_sim, &phys, &pump)?,
                temperature_scale: cal.temperature_scale,
                initial_g,
                jump_time: trace.iter().find(|s| s.chi_minus >= level).map(|s| s.t_seconds),
                windows: stats,
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseReport {
        chi0_minus: case.chi0_minus,
        un0: case.un0,
        t_end,
        adiabatic_jump_time,
        target_g,
        runs,
        adiabatic,
    })
}

pub fn compute(cfg: &Config) -> Result<XvalReport> {
    let x = &cfg.xval;
    if x.cases.len() != x.t_end.len() || x.cases.is_empty() {
        return Err(HarnessError::Precondition("xval: need one t_end per case".into()));
    }
    let mut cases = Vec::new();
    for (i, (case, &t_end)) in x.cases.iter().zip(&x.t_end).enumerate() {
        let mut sizes = vec![x.n_sim];
        if i == 0 {
            sizes.extend(x.n_sim_scan.iter().filter(|&&n| n != x.n_sim));
        }
        cases.push(run_case(cfg, case, t_end, &sizes)?);
    }
    let first = &cases[0];
    let n_win = first.runs[0].windows.len();
    let n_sim_spread = (0..n_win)
        .map(|w| {
            let means: Vec<f64> = first.runs.iter().map(|r| r.windows[w].mean_full).collect();
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            means.iter().map(|m| ((m - mean) / mean).abs()).fold(0.0, f64::max)
        })
        .collect();
    Ok(XvalReport { cases, n_sim_spread })
}

pub fn emit(r: &XvalReport, out: &mut RunOutput) -> Result<()> {
    for c in &r.cases {
        let tag = pct_label(c.chi0_minus);
        out.write_csv(&format!("xval_adiabatic_{tag}.csv"), &c.adiabatic)?;
        for run in &c.runs {
            out.write_csv(&format!("xval_full_{tag}_n{}.csv", run.n_sim), &run.trace)?;
        }
    }
    out.write_json("xval_report.json", r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_skip_the_jump() {
        let w = plateau_windows(Some(0.02), 0.03, 1e-3, 2e-3);
        assert_eq!(w.len(), 2);
        assert!((w[0].t_end - 0.019).abs() < 1e-12);
        assert!((w[1].t_start - 0.022).abs() < 1e-12);
        let w = plateau_windows(None, 0.06, 1e-3, 2e-3);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].t_end, 0.06);
    }
}
