//! Weak-coupling analysis: trap lifetime with two-body losses and the
//! evaporative-cooling fit of the temperature, on synthetic data.

use ringlat_core::adiabatic::AtomDecay;
use ringlat_core::thermo::{fit_temperature, fit_trap_decay, temperature_evolution, DecayFit, TemperatureFit};
use serde::Serialize;

use super::common::{rng, synthesize_decay, PopulationRow};
use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Serialize)]
pub struct TemperatureRow {
    pub t_seconds: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig5Report {
    pub truth: AtomDecay,
    pub decay_fit: DecayFit,
    pub epsilon_true: f64,
    pub temperature_fit: TemperatureFit,
    #[serde(skip)]
    pub populations: Vec<PopulationRow>,
    #[serde(skip)]
    pub temperatures: Vec<TemperatureRow>,
}

pub fn compute(cfg: &Config) -> Result<Fig5Report> {
    let c = &cfg.fig5;
    let d = &c.decay;
    if c.n_temperatures < 3 || !(d.gamma_bg > 0.0) {
        return Err(HarnessError::Precondition("fig5 needs >= 3 temperatures and gamma_bg > 0".into()));
    }
    let truth = AtomDecay {
        n0: d.n0,
        gamma_bg: d.gamma_bg,
        q: d.q_n0 / d.n0,
    };
    let populations = synthesize_decay(d, cfg.seed, 5)?;
    let t: Vec<f64> = populations.iter().map(|r| r.t_seconds).collect();
    let n: Vec<f64> = populations.iter().map(|r| r.atoms).collect();
    let decay_fit = fit_trap_decay(&t, &n)?;

    let brg = d.q_n0 / d.gamma_bg;
    let mut r = rng(cfg.seed, 6);
    let temperatures = (0..c.n_temperatures)
        .map(|i| {
            let t = d.t_end * i as f64 / (c.n_temperatures - 1) as f64;
            let z: f64 = StandardNormal.sample(&mut r);
            Ok(TemperatureRow {
                t_seconds: t,
                temperature: temperature_evolution(c.t0, c.epsilon, brg, d.gamma_bg, t)? * (1.0 + c.temperature_noise * z),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tt: Vec<f64> = temperatures.iter().map(|r| r.t_seconds).collect();
    let tv: Vec<f64> = temperatures.iter().map(|r| r.temperature).collect();
    let temperature_fit = fit_temperature(&tt, &tv, &decay_fit, decay_fit.n0)?;
    Ok(Fig5Report {
        truth,
        decay_fit,
        epsilon_true: c.epsilon,
        temperature_fit,
        populations,
        temperatures,
    })
}

pub fn emit(r: &Fig5Report, out: &mut RunOutput) -> Result<()> {
    out.write_csv("fig5_populations.csv", &r.populations)?;
    out.write_csv("fig5_temperatures.csv", &r.temperatures)?;
    out.write_json("fig5_fits.json", r)
}
