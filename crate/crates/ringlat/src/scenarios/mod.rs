//! Named scenarios. Each module exposes a `compute` step returning a typed
//! report and an `emit` step writing it to a [`RunOutput`].

use std::path::Path;
use std::time::Instant;

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::output::{Manifest, RunOutput};

pub mod common;
pub mod empty_cavity;
pub mod fig10;
pub mod fig11;
pub mod fig2;
pub mod fig5;
pub mod fig7;
pub mod fig8;
pub mod noise;
pub mod xval;

pub const SCENARIOS: &[(&str, &str)] = &[
    ("fig2-diagram", "steady-state branches, folds and bistability threshold"),
    ("empty-cavity", "UN = 0 fill-up against the closed form"),
    ("fig5-thermo", "trap-decay and evaporative-cooling fits on synthetic data"),
    ("fig7-adiabatic", "intensity jumps of the decaying lattice (adiabatic model)"),
    ("fig8-step", "response to halving the pump power"),
    ("fig10-breathing", "breathing oscillations from full particle dynamics"),
    ("fig11-mot-switching", "bistable switching under phenomenological MOT loading"),
    ("noise-budget", "parametric heating rates from intensity noise"),
    ("cross-validation", "full particle dynamics against the adiabatic model"),
];

pub fn run(name: &str, cfg: &Config, out_dir: &Path) -> Result<Manifest> {
    if !SCENARIOS.iter().any(|(n, _)| *n == name) {
        return Err(HarnessError::Config(format!(
            "unknown scenario `{name}` (see `ringlat list`)"
        )));
    }
    let start = Instant::now();
    let mut out = RunOutput::create(out_dir)?;
    match name {
        "fig2-diagram" => fig2::emit(&fig2::compute(cfg)?, &mut out)?,
        "empty-cavity" => empty_cavity::emit(&empty_cavity::compute(cfg)?, &mut out)?,
        "fig5-thermo" => fig5::emit(&fig5::compute(cfg)?, &mut out)?,
        "fig7-adiabatic" => fig7::emit(&fig7::compute(cfg)?, &mut out)?,
        "fig8-step" => fig8::emit(&fig8::compute(cfg)?, &mut out)?,
        "fig10-breathing" => fig10::emit(&fig10::compute(cfg)?, &mut out)?,
        "fig11-mot-switching" => fig11::emit(&fig11::compute(cfg)?, &mut out)?,
        "noise-budget" => noise::emit(&noise::compute(cfg)?, &mut out)?,
        "cross-validation" => xval::emit(&xval::compute(cfg)?, &mut out)?,
        _ => unreachable!("checked against SCENARIOS"),
    }
    out.finish(name, cfg, start.elapsed().as_secs_f64())
}
