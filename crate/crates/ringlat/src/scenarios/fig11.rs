//! Bistable switching while a MOT keeps loading the lattice.
//!
//! Phenomenological model (a harness choice, not derived from the cavity
//! equations): the loading rate follows the current lattice depth,
//! `R * min(|a| / sqrt(chi0-), capture_limit)`, since the depth is linear
//! in the unlocked amplitude at a fixed locked mode. Atom number is in
//! units of the reference sample, so `UN = un_ref * n`.

use ringlat_core::adiabatic::{rhs_complex_floored, AtomDecay, DriveValues, EliminationForm, FieldState};
use ringlat_core::bistability::{continuation_scan, range_from_diagram, BistabilityRange, ScanOptions};
use ringlat_core::localization::knobs_from_eta;
use ringlat_core::ode::{Dopri5, Tolerances};
use ringlat_core::params::ScaledParams;
use serde::Serialize;

use super::common::{field_of, scaled, stable_states};
use crate::config::{Config, Fig11};
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;

const A_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Fig11Row {
    pub t_seconds: f64,
    pub chi_minus: f64,
    pub phi: f64,
    pub atoms: f64,
    #[serde(rename = "UN")]
    pub un: f64,
    pub depth_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Level {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Jump {
    pub t_seconds: f64,
    pub to: Level,
    #[serde(rename = "UN")]
    pub un: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig11Report {
    /// Bistable window of the field model in `UN`, for reference.
    pub window: Option<BistabilityRange>,
    pub jumps: Vec<Jump>,
    /// Times between successive upward jumps, s.
    pub periods: Vec<f64>,
    pub complete_cycles: usize,
    /// At least three complete low/high cycles.
    pub switching: bool,
    #[serde(skip)]
    pub trace: Vec<Fig11Row>,
}

/// Hysteretic level classification: a jump is registered when `chi-`
/// crosses 2/3 of `chi0-` upwards or 1/3 downwards.
pub fn detect_jumps(rows: &[Fig11Row], chi0_minus: f64) -> Vec<Jump> {
    let (hi, lo) = (2.0 * chi0_minus / 3.0, chi0_minus / 3.0);
    let mut level = match rows.first() {
        Some(r) if r.chi_minus >= 0.5 * chi0_minus => Level::High,
        _ => Level::Low,
    };
    let mut jumps = Vec::new();
    for r in rows {
        let next = match level {
            Level::Low if r.chi_minus >= hi => Level::High,
            Level::High if r.chi_minus <= lo => Level::Low,
            l => l,
        };
        if next != level {
            jumps.push(Jump {
                t_seconds: r.t_seconds,
                to: next,
                un: r.un,
            });
            level = next;
        }
    }
    jumps
}

fn check(c: &Fig11) -> Result<()> {
    let ok = c.loading_rate >= 0.0
        && c.capture_limit > 0.0
        && c.gamma_bg >= 0.0
        && c.q_ref >= 0.0
        && c.n_init > 0.0
        && c.un_ref > 0.0
        && c.t_end > 0.0
        && c.stride > 0.0;
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Precondition("fig11: rates must be >= 0 and times > 0".into()))
    }
}

pub fn simulate(cfg: &Config, c: &Fig11) -> Result<Vec<Fig11Row>> {
    check(c)?;
    let gc = cfg.physics.gamma_c;
    let cm = c.chi0_minus;
    let sp: ScaledParams = scaled(&cfg.sample, c.un_ref, c.chi_init.sqrt())?;
    let un0 = c.un_ref * c.n_init;
    let start = *stable_states(&sp, un0, cm)?.last().expect("non-empty");
    let a0 = field_of(&start);
    let ref_amp = cm.sqrt();
    let drive = DriveValues::new(cm, 1.0, 0.0)?;

    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let a = num_complex::Complex64::new(y[0], y[1]);
        let n = y[2].max(0.0);
        let d = DriveValues { un: c.un_ref * n, ..drive };
        let (da, _) = rhs_complex_floored(FieldState::new(a), &d, &sp, A_MIN);
        let depth = (a.norm() / ref_amp).min(c.capture_limit);
        dy[0] = da.re;
        dy[1] = da.im;
        dy[2] = (c.loading_rate * depth - c.gamma_bg * n - c.q_ref * n * n) / gc;
    };

    let mut y = vec![a0.re, a0.im, c.n_init];
    let mut ode = Dopri5::new(3, Tolerances::default());
    let row = |t: f64, y: &[f64]| {
        let a = num_complex::Complex64::new(y[0], y[1]);
        Fig11Row {
            t_seconds: t / gc,
            chi_minus: a.norm_sqr(),
            phi: a.arg(),
            atoms: y[2],
            un: c.un_ref * y[2].max(0.0),
            depth_ratio: a.norm() / ref_amp,
        }
    };
    let (tau_end, h) = (c.t_end * gc, c.stride * gc);
    let n_out = (tau_end / h).round() as usize;
    let mut rows = Vec::with_capacity(n_out + 1);
    rows.push(row(0.0, &y));
    for i in 1..=n_out {
        let (t0, t1) = ((i - 1) as f64 * h, (i as f64 * h).min(tau_end));
        ode.advance(&mut rhs, &mut y, t0, t1)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ringlat_core::Error::NonFinite {
                tau: t1,
                what: "field or atom number".into(),
            }
            .into());
        }
        rows.push(row(t1, &y));
    }
    Ok(rows)
}

/// `N(t)/N0` of the loading-free model, for comparison with the decay law.
pub fn decay_reference(c: &Fig11) -> AtomDecay {
    AtomDecay {
        n0: c.n_init,
        gamma_bg: c.gamma_bg,
        q: c.q_ref,
    }
}

pub fn compute(cfg: &Config) -> Result<Fig11Report> {
    let c = &cfg.fig11;
    let trace = simulate(cfg, c)?;
    let sp = scaled(&cfg.sample, c.un_ref, c.chi_init.sqrt())?;
    let knobs = knobs_from_eta(&sp, 1.0 - c.chi0_minus);
    let opts = ScanOptions {
        form: EliminationForm::Exact,
        ..ScanOptions::default()
    };
    let un_top = c.un_ref * trace.iter().map(|r| r.atoms).fold(c.n_init, f64::max) * 2.0;
    let diagram = continuation_scan((0.0, un_top.max(1.0)), 801, c.chi0_minus, &knobs, &opts)?;
    let jumps = detect_jumps(&trace, c.chi0_minus);
    let ups: Vec<f64> = jumps.iter().filter(|j| j.to == Level::High).map(|j| j.t_seconds).collect();
    let periods: Vec<f64> = ups.windows(2).map(|w| w[1] - w[0]).collect();
    // a cycle is complete when a downward jump lies between two upward ones
    let complete_cycles = periods.len();
    Ok(Fig11Report {
        window: range_from_diagram(&diagram),
        switching: complete_cycles >= 3,
        jumps,
        periods,
        complete_cycles,
        trace,
    })
}

pub fn emit(r: &Fig11Report, out: &mut RunOutput) -> Result<()> {
    out.write_csv("fig11_trace.csv", &r.trace)?;
    out.write_json("fig11_events.json", r)
}
