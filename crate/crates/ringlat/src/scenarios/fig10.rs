//! Breathing oscillations of the trapped cloud from the full particle
//! model: spectral peak of `chi-`, its relation to the radial vibration,
//! the phase between radial size and momentum spread, and the scaling of
//! the peak with well depth.

use num_complex::Complex64;
use rayon::prelude::*;
use ringlat_core::adiabatic::DriveSchedule;
use ringlat_core::full::{
    detrend_moving_mean, init_bound_ensemble, integrate_full, periodogram, relative_phase, spectral_peak_averaged,
    BindingLattice, EnsembleSpec, FullIntegrator, FullModel, FullOptions, ObservableSample, SpectralPeak,
};
use serde::Serialize;

use super::common::linear_fit;
use crate::config::{Config, Fig10};
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;

/// Detrended analysis-window signals of one run.
#[derive(Debug, Clone)]
pub struct SeedSignals {
    pub seed: u64,
    pub chi: Vec<f64>,
    pub x_cm: Vec<f64>,
    pub sigma_r: Vec<f64>,
    pub sigma_pr: Vec<f64>,
    pub dt: f64,
    pub detrend_span: usize,
    pub redraws: usize,
    pub trace: Vec<ObservableSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthRow {
    pub depth_factor: f64,
    pub nu_axial: f64,
    pub peak_frequency: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub frequency: f64,
    pub chi_power: f64,
    pub x_cm_power: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig10Report {
    pub seeds: Vec<u64>,
    pub breathing: Option<SpectralPeak>,
    /// Centre-of-mass peak: the radial vibration frequency of the sample.
    pub radial: Option<SpectralPeak>,
    /// Harmonic radial frequency at the empty-cavity lattice, for reference.
    pub radial_harmonic: f64,
    /// `breathing / (2 radial)`.
    pub ratio_to_twice_radial: Option<f64>,
    /// Phase of the radial momentum spread relative to the radial size at
    /// the breathing frequency, per seed and circular mean (rad).
    pub phase_per_seed: Vec<f64>,
    pub phase_mean: Option<f64>,
    pub depth_scan: Vec<DepthRow>,
    /// Exponent of `f ~ depth^k` over the scan.
    pub depth_exponent: Option<f64>,
    pub redraws: Vec<usize>,
    #[serde(skip)]
    pub spectrum: Vec<SpectrumRow>,
    #[serde(skip)]
    pub traces: Vec<(u64, Vec<ObservableSample>)>,
}

/// One full-dynamics run at `depth` times the configured well depth. All
/// times of the analysis scale with the axial period, i.e. as
/// `1/sqrt(depth)`.
pub fn run_seed(cfg: &Config, depth: f64, seed: u64) -> Result<SeedSignals> {
    let c = &cfg.fig10;
    let phys = cfg.physics.params();
    let scale = depth.sqrt();
    let model = FullModel::from_axial_frequency(&phys, c.nu_axial * scale);
    let p = (1.0 - c.chi0_minus).sqrt();
    let a0 = Complex64::new(c.chi0_minus.sqrt(), 0.0);
    let spec = EnsembleSpec::from_boltzmann_ratios(c.n_sim, cfg.sample.eta_ax, cfg.sample.eta_rad, p, a0, &model)?;
    let lat = BindingLattice { p, a: a0, model: &model };
    let (ens, redraws) = init_bound_ensemble(seed, &spec, &lat)?;
    let sched = DriveSchedule::constant(c.chi0_minus, c.un)?;
    let opts = FullOptions {
        dt: model.default_dt() * c.dt_periods / 0.02,
        stride: c.stride * model.gamma_c,
        integrator: FullIntegrator::Dop853,
        frozen_field: false,
    };
    let t_end = c.t_end / scale;
    let run = integrate_full(&ens, a0, &sched, &model, (0.0, t_end * model.gamma_c), &opts)?;
    let s = run.trace.samples;
    if s.len() < 32 {
        return Err(HarnessError::Precondition("fig10 run too short for spectral analysis".into()));
    }
    let dt = s[1].t_seconds - s[0].t_seconds;
    let i0 = s.partition_point(|x| x.t_seconds < c.t_start / scale);
    let span = ((c.detrend_span / scale / dt).round() as usize).max(3);
    let col = |f: fn(&ObservableSample) -> f64| detrend_moving_mean(&s[i0..].iter().map(f).collect::<Vec<_>>(), span);
    Ok(SeedSignals {
        seed,
        chi: col(|x| x.chi_minus),
        x_cm: col(|x| x.x_cm),
        sigma_r: col(|x| x.sigma_r),
        sigma_pr: col(|x| x.sigma_pr),
        dt,
        detrend_span: span,
        redraws,
        trace: s,
    })
}

fn averaged_peak(runs: &[SeedSignals], pick: fn(&SeedSignals) -> &Vec<f64>, band: (f64, f64)) -> Result<Option<SpectralPeak>> {
    let xs: Vec<&[f64]> = runs.iter().map(|r| pick(r).as_slice()).collect();
    Ok(spectral_peak_averaged(&xs, runs[0].dt, band, 1.0)?)
}

fn scaled_band(b: [f64; 2], s: f64) -> (f64, f64) {
    (b[0] * s, b[1] * s)
}

fn seed_list(cfg: &Config, n: u64) -> Vec<u64> {
    (0..n).map(|i| cfg.seed + i).collect()
}

fn check(c: &Fig10) -> Result<()> {
    let ok = c.n_sim >= 1
        && c.seeds >= 1
        && c.t_end > c.t_start
        && c.t_start >= 0.0
        && c.stride > 0.0
        && c.dt_periods > 0.0
        && c.band[1] > c.band[0]
        && c.depth_factors.iter().all(|d| *d > 0.0);
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Precondition("fig10: inconsistent run or analysis settings".into()))
    }
}

pub fn compute(cfg: &Config) -> Result<Fig10Report> {
    let c = &cfg.fig10;
    check(c)?;
    let seeds = seed_list(cfg, c.seeds);
    let main: Vec<SeedSignals> = seeds
        .par_iter()
        .map(|&s| run_seed(cfg, 1.0, s))
        .collect::<Result<_>>()?;

    let breathing = averaged_peak(&main, |r| &r.chi, scaled_band(c.band, 1.0))?;
    let radial = averaged_peak(&main, |r| &r.x_cm, scaled_band(c.radial_band, 1.0))?;
    let model = FullModel::from_axial_frequency(&cfg.physics.params(), c.nu_axial);
    let (_, radial_harmonic) = model.harmonic_frequencies((1.0 - c.chi0_minus).sqrt(), c.chi0_minus.sqrt());

    let phase_per_seed = match breathing {
        Some(b) => main
            .iter()
            .map(|r| relative_phase(&r.sigma_r, &r.sigma_pr, r.dt, b.frequency, r.detrend_span))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    let phase_mean = (!phase_per_seed.is_empty()).then(|| {
        let z: Complex64 = phase_per_seed.iter().map(|p| Complex64::from_polar(1.0, *p)).sum();
        z.arg()
    });

    let mut depth_scan = Vec::new();
    for &d in &c.depth_factors {
        let scan_seeds = seed_list(cfg, c.scan_seeds);
        let runs: Vec<SeedSignals> = if d == 1.0 && c.scan_seeds <= c.seeds {
            main[..c.scan_seeds as usize].to_vec()
        } else {
            scan_seeds.par_iter().map(|&s| run_seed(cfg, d, s)).collect::<Result<_>>()?
        };
        let pk = averaged_peak(&runs, |r| &r.chi, scaled_band(c.band, d.sqrt()))?;
        depth_scan.push(DepthRow {
            depth_factor: d,
            nu_axial: c.nu_axial * d.sqrt(),
            peak_frequency: pk.map(|p| p.frequency),
        });
    }
    let pts: Vec<(f64, f64)> = depth_scan
        .iter()
        .filter_map(|r| r.peak_frequency.map(|f| (r.depth_factor.ln(), f.ln())))
        .collect();
    let depth_exponent = (pts.len() >= 2 && pts.len() == depth_scan.len()).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_fit(&x, &y).1
    });

    let spectrum = {
        let (df, mut chi_p) = periodogram(&main[0].chi, main[0].dt)?;
        let (_, mut x_p) = periodogram(&main[0].x_cm, main[0].dt)?;
        for r in &main[1..] {
            let (_, a) = periodogram(&r.chi, r.dt)?;
            let (_, b) = periodogram(&r.x_cm, r.dt)?;
            chi_p.iter_mut().zip(a).for_each(|(u, v)| *u += v);
            x_p.iter_mut().zip(b).for_each(|(u, v)| *u += v);
        }
        let n = main.len() as f64;
        chi_p
            .iter()
            .zip(&x_p)
            .enumerate()
            .map(|(i, (a, b))| SpectrumRow {
                frequency: i as f64 * df,
                chi_power: a / n,
                x_cm_power: b / n,
            })
            .collect()
    };

    Ok(Fig10Report {
        ratio_to_twice_radial: match (breathing, radial) {
            (Some(b), Some(r)) => Some(b.frequency / (2.0 * r.frequency)),
            _ => None,
        },
        seeds,
        breathing,
        radial,
        radial_harmonic,
        phase_per_seed,
        phase_mean,
        depth_scan,
        depth_exponent,
        redraws: main.iter().map(|r| r.redraws).collect(),
        spectrum,
        traces: main.into_iter().map(|r| (r.seed, r.trace)).collect(),
    })
}

pub fn emit(r: &Fig10Report, out: &mut RunOutput) -> Result<()> {
    for (seed, t) in &r.traces {
        out.write_csv(&format!("fig10_trace_seed{seed}.csv"), t)?;
    }
    out.write_csv("fig10_spectrum.csv", &r.spectrum)?;
    out.write_csv("fig10_depth_scan.csv", &r.depth_scan)?;
    out.write_json("fig10_report.json", r)
}
