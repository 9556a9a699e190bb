//! Scenario configuration: one TOML document with a section per scenario.
//! Every section has complete defaults, unknown keys are rejected, and
//! `--set key.path=value` overrides are applied before validation.

use std::path::Path;

use ringlat_core::adiabatic::EliminationForm;
use ringlat_core::params::PhysicalParams;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub physics: Physics,
    pub sample: Sample,
    pub fig2: Fig2,
    pub empty_cavity: EmptyCavity,
    pub fig7: Fig7,
    pub fig8: Fig8,
    pub fig10: Fig10,
    pub fig11: Fig11,
    pub noise: Noise,
    pub fig5: Fig5,
    pub xval: CrossValidation,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            physics: Physics::default(),
            sample: Sample::default(),
            fig2: Fig2::default(),
            empty_cavity: EmptyCavity::default(),
            fig7: Fig7::default(),
            fig8: Fig8::default(),
            fig10: Fig10::default(),
            fig11: Fig11::default(),
            noise: Noise::default(),
            fig5: Fig5::default(),
            xval: CrossValidation::default(),
        }
    }
}

/// Dimensional constants; defaults are the 85Rb strong-coupling setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub gamma_c: f64,
    pub delta0: f64,
    pub n_atoms: f64,
    pub wavelength: f64,
    pub w0: f64,
    pub mass: f64,
}

impl Default for Physics {
    fn default() -> Self {
        let p = PhysicalParams::rb85();
        Self {
            gamma_c: p.gamma_c,
            delta0: p.delta0,
            n_atoms: p.n_atoms,
            wavelength: 2.0 * std::f64::consts::PI / p.k,
            w0: p.w0,
            mass: p.mass,
        }
    }
}

impl Physics {
    pub fn params(&self) -> PhysicalParams {
        PhysicalParams::new(self.gamma_c, self.delta0, self.n_atoms, self.wavelength, self.w0, self.mass)
    }
}

/// Thermal-to-depth ratios of the trapped sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sample {
    pub eta_ax: f64,
    pub eta_rad: f64,
}

impl Default for Sample {
    fn default() -> Self {
        Self { eta_ax: 0.5, eta_rad: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2 {
    pub chi0_minus: Vec<f64>,
    pub un_max: f64,
    pub n_un: usize,
    /// Ceiling used to decide whether the upper fold exists.
    pub un_ceiling: f64,
    /// `chi0_minus` grid for locating the monostable/bistable threshold.
    pub threshold_scan: Vec<f64>,
    pub form: EliminationForm,
    pub n_grid: usize,
}

impl Default for Fig2 {
    fn default() -> Self {
        Self {
            chi0_minus: vec![0.51, 0.50, 0.48, 0.43, 0.38],
            un_max: 6.0,
            n_un: 601,
            un_ceiling: 20.0,
            threshold_scan: (0..=24).map(|i| 0.38 + 0.005 * i as f64).collect(),
            form: EliminationForm::Printed,
            n_grid: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmptyCavity {
    pub chi0_minus: f64,
    pub tau_end: f64,
    pub stride: f64,
}

impl Default for EmptyCavity {
    fn default() -> Self {
        Self {
            chi0_minus: 0.5,
            tau_end: 10.0,
            stride: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpCase {
    pub chi0_minus: f64,
    #[serde(rename = "UN0")]
    pub un0: f64,
}

/// Synthetic trap-population series from which the two-body term is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySynthesis {
    pub n0: f64,
    pub gamma_bg: f64,
    /// Initial two-body loss rate `q N0`, 1/s.
    pub q_n0: f64,
    pub t_end: f64,
    pub n_samples: usize,
    /// Relative (log-normal) noise.
    pub noise: f64,
}

impl Default for DecaySynthesis {
    fn default() -> Self {
        Self {
            n0: 4e6,
            gamma_bg: 1.0 / 1.7,
            q_n0: 10.0,
            t_end: 4.0,
            n_samples: 41,
            noise: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig7 {
    pub cases: Vec<JumpCase>,
    /// Intensity at which the measured thermal ratios hold; sets `|a0|`.
    pub chi_init: f64,
    pub t_end: f64,
    pub stride: f64,
    /// Jump criterion as a fraction of `chi0_minus`.
    pub jump_fraction: f64,
    pub decay: DecaySynthesis,
}

impl Default for Fig7 {
    fn default() -> Self {
        Self {
            cases: vec![
                JumpCase { chi0_minus: 0.49, un0: 2.38 },
                JumpCase { chi0_minus: 0.46, un0: 2.23 },
                JumpCase { chi0_minus: 0.43, un0: 2.15 },
                JumpCase { chi0_minus: 0.36, un0: 1.75 },
            ],
            chi_init: 0.03,
            t_end: 0.08,
            stride: 2e-5,
            jump_fraction: 0.9,
            decay: DecaySynthesis::default(),
        }
    }
}

/// Pump-power step; the localization reference field is the empty-cavity
/// amplitude `sqrt(chi0_minus)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig8 {
    pub chi0_minus: f64,
    #[serde(rename = "UN")]
    pub un: f64,
    /// `I0` multiplier while the step is on.
    pub step_factor: f64,
    /// Step is applied at t = 0 and removed at this time, s.
    pub t_restore: f64,
    /// Settling time before the step, s.
    pub t_pre: f64,
    pub t_end: f64,
    pub stride: f64,
}

impl Default for Fig8 {
    fn default() -> Self {
        Self {
            chi0_minus: 0.45,
            un: 3.0,
            step_factor: 0.5,
            t_restore: 2e-3,
            t_pre: 1e-3,
            t_end: 5e-3,
            stride: 2e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig10 {
    pub n_sim: usize,
    #[serde(rename = "UN")]
    pub un: f64,
    pub chi0_minus: f64,
    /// Axial frequency of the balanced standing wave, Hz.
    pub nu_axial: f64,
    pub seeds: u64,
    pub t_end: f64,
    /// Start of the analysis window, s.
    pub t_start: f64,
    pub stride: f64,
    /// Step as a fraction of the reference axial period.
    pub dt_periods: f64,
    pub detrend_span: f64,
    pub band: [f64; 2],
    /// Band searched for the centre-of-mass (radial vibration) peak.
    pub radial_band: [f64; 2],
    /// Well-depth multipliers for the frequency-vs-depth scan (1 = main run).
    pub depth_factors: Vec<f64>,
    pub scan_seeds: u64,
}

impl Default for Fig10 {
    fn default() -> Self {
        Self {
            n_sim: 100,
            un: 2.0,
            chi0_minus: 0.43,
            nu_axial: 550e3,
            seeds: 4,
            t_end: 12e-3,
            t_start: 1e-3,
            stride: 2e-5,
            dt_periods: 0.05,
            detrend_span: 2e-3,
            band: [200.0, 5000.0],
            radial_band: [200.0, 1000.0],
            depth_factors: vec![1.0, 1.587, 2.52, 4.0],
            scan_seeds: 3,
        }
    }
}

/// Phenomenological MOT reloading coupled to the adiabatic field model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig11 {
    pub chi0_minus: f64,
    /// `UN` at the reference atom number (`n = 1`).
    pub un_ref: f64,
    pub n_init: f64,
    /// Loading rate at the reference depth, reference atoms per second.
    pub loading_rate: f64,
    /// Depth ratio at which loading saturates (MOT capture limit).
    pub capture_limit: f64,
    pub gamma_bg: f64,
    /// Two-body rate at `n = 1`, 1/s.
    pub q_ref: f64,
    pub chi_init: f64,
    pub t_end: f64,
    pub stride: f64,
}

impl Default for Fig11 {
    fn default() -> Self {
        Self {
            chi0_minus: 0.49,
            un_ref: 2.38,
            n_init: 1.0,
            loading_rate: 1.03,
            capture_limit: 1.0,
            gamma_bg: 1.0 / 1.7,
            q_ref: 0.0,
            chi_init: 0.03,
            t_end: 30.0,
            stride: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotValues {
    /// Spectral density at twice the axial frequency, 1/Hz.
    pub s_ax: f64,
    pub s_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    pub nu_ax: f64,
    pub nu_rad: f64,
    /// Two-column CSV `(t_seconds, value)`; used when set.
    pub series: Option<String>,
    /// Direct spectrum values; used when no series is given.
    pub spot: SpotValues,
    pub segment_length: usize,
    pub overlap: f64,
}

impl Default for SpotValues {
    fn default() -> Self {
        Self { s_ax: 1.5e-13, s_rad: 3e-9 }
    }
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            nu_ax: 350e3,
            nu_rad: 450.0,
            series: None,
            spot: SpotValues::default(),
            segment_length: 4096,
            overlap: 0.5,
        }
    }
}

/// Weak-coupling lifetime and evaporation analysis on synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig5 {
    pub decay: DecaySynthesis,
    pub t0: f64,
    pub epsilon: f64,
    /// Temperature noise (relative).
    pub temperature_noise: f64,
    pub n_temperatures: usize,
}

impl Default for Fig5 {
    fn default() -> Self {
        Self {
            decay: DecaySynthesis {
                q_n0: 2.0,
                ..DecaySynthesis::default()
            },
            t0: 100e-6,
            epsilon: 0.23,
            temperature_noise: 0.0,
            n_temperatures: 9,
        }
    }
}

/// Full particle dynamics against the adiabatic model on the fig7 cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossValidation {
    pub cases: Vec<JumpCase>,
    pub t_end: Vec<f64>,
    pub n_sim: usize,
    /// Ensemble sizes compared with each other on the first case.
    pub n_sim_scan: Vec<usize>,
    pub n_real: f64,
    pub nu_axial: f64,
    pub dt_periods: f64,
    pub stride: f64,
    /// Samples before this time are excluded (ensemble settling), s.
    pub t_settle: f64,
    /// Exclusion around the reference jump, s.
    pub jump_margin: f64,
    pub pilot_atoms: usize,
}

impl Default for CrossValidation {
    fn default() -> Self {
        Self {
            cases: vec![
                JumpCase { chi0_minus: 0.49, un0: 2.38 },
                JumpCase { chi0_minus: 0.36, un0: 1.75 },
            ],
            t_end: vec![0.03, 0.06],
            n_sim: 100,
            n_sim_scan: vec![50, 100, 200],
            n_real: 1e6,
            nu_axial: 550e3,
            dt_periods: 0.05,
            stride: 2e-5,
            t_settle: 1e-3,
            jump_margin: 2e-3,
            pilot_atoms: 4096,
        }
    }
}

/// Parses a TOML document (or the defaults when `text` is `None`) and
/// applies `key.path=value` overrides. Override values are parsed as TOML
/// literals, falling back to plain strings.
pub fn load_str(text: Option<&str>, sets: &[String]) -> Result<Config, HarnessError> {
    let mut doc: toml::Table = match text {
        Some(t) => t.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    let defaults = toml::Table::try_from(Config::default()).map_err(|e| HarnessError::Internal(e.to_string()))?;
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override `{s}` is not of the form key=value")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if !key_exists(&defaults, &path) {
            return Err(HarnessError::Config(format!("unknown key `{}`", key.trim())));
        }
        let value = parse_value(raw.trim());
        set_path(&mut doc, &path, value).map_err(|e| HarnessError::Config(format!("key `{}`: {e}", key.trim())))?;
    }
    toml::Value::Table(doc)
        .try_into::<Config>()
        .map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Config, HarnessError> {
    let text = path
        .map(|p| std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display()))))
        .transpose()?;
    load_str(text.as_deref(), sets)
}

fn key_exists(t: &toml::Table, path: &[&str]) -> bool {
    match path {
        [] => false,
        [k] => t.contains_key(*k) || optional_key(k),
        [k, rest @ ..] => matches!(t.get(*k), Some(toml::Value::Table(sub)) if key_exists(sub, rest)),
    }
}

/// Keys whose default is absent from the serialized document.
fn optional_key(k: &str) -> bool {
    k == "series"
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(t: &mut toml::Table, path: &[&str], value: toml::Value) -> Result<(), String> {
    match path {
        [] => Err("empty key".into()),
        [k] => {
            t.insert((*k).to_string(), value);
            Ok(())
        }
        [k, rest @ ..] => {
            let entry = t
                .entry((*k).to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(sub) => set_path(sub, rest, value),
                _ => Err(format!("`{k}` is not a table")),
            }
        }
    }
}
