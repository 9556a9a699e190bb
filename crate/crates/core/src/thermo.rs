//! Trap thermodynamics: relative-intensity-noise spectra, parametric heating
//! rates, trap-population decay fits and evaporative cooling.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::adiabatic::AtomDecay;
use crate::error::{ensure, invalid, Error, Result};

/// One-sided power spectral density of the fractional intensity
/// `(I - <I>) / <I>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    /// Hz, uniform from 0.
    pub frequency: Vec<f64>,
    /// 1/Hz.
    pub s: Vec<f64>,
}

impl NoiseSpectrum {
    /// Linear interpolation; `None` outside the grid.
    pub fn value_at(&self, f: f64) -> Option<f64> {
        let fr = &self.frequency;
        if fr.is_empty() || !(f >= fr[0] && f <= fr[fr.len() - 1]) {
            return None;
        }
        let i = fr.partition_point(|&x| x <= f).min(fr.len() - 1).max(1);
        let (f0, f1) = (fr[i - 1], fr[i]);
        if f1 == f0 {
            return Some(self.s[i]);
        }
        let w = (f - f0) / (f1 - f0);
        Some(self.s[i - 1] * (1.0 - w) + self.s[i] * w)
    }

    /// Trapezoidal integral of `S` over the whole grid.
    pub fn total_power(&self) -> f64 {
        self.frequency
            .windows(2)
            .zip(self.s.windows(2))
            .map(|(f, s)| 0.5 * (s[0] + s[1]) * (f[1] - f[0]))
            .sum()
    }

    /// Rectangle-rule integral over bins with `lo <= f <= hi`: exact
    /// counterpart of the discrete Parseval sum.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = if self.frequency.len() > 1 { self.frequency[1] - self.frequency[0] } else { 0.0 };
        self.frequency
            .iter()
            .zip(&self.s)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, s)| s * df)
            .sum()
    }
}

/// Welch estimate: mean-removed fractional signal, Hann window, segments of
/// `segment_length` samples overlapping by `overlap` (fraction in `[0, 1)`),
/// averaged and normalized by the window power.
pub fn psd_one_sided(samples: &[f64], sample_rate: f64, segment_length: usize, overlap: f64) -> Result<NoiseSpectrum> {
    ensure(sample_rate > 0.0 && sample_rate.is_finite(), "sample_rate", "must be finite and > 0")?;
    ensure(segment_length >= 4, "segment_length", "must be >= 4")?;
    ensure((0.0..1.0).contains(&overlap), "overlap", "must lie in [0, 1)")?;
    ensure(samples.iter().all(|x| x.is_finite()), "samples", "must be finite")?;
    let step = ((segment_length as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let n_seg = if samples.len() >= segment_length { (samples.len() - segment_length) / step + 1 } else { 0 };
    ensure(n_seg >= 2, "samples", "need at least two segments")?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if mean == 0.0 {
        return Err(Error::ZeroMeanSignal);
    }
    let frac: Vec<f64> = samples.iter().map(|x| x / mean - 1.0).collect();

    let n = segment_length;
    let win: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let wpow: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let n_out = n / 2 + 1;
    let mut acc = vec![0.0; n_out];
    let mut buf = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); n];
    for k in 0..n_seg {
        let seg = &frac[k * step..k * step + n];
        let m = seg.iter().sum::<f64>() / n as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = rustfft::num_complex::Complex64::new((x - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let scale = 1.0 / (sample_rate * wpow * n_seg as f64);
    let s = acc
        .iter()
        .enumerate()
        .map(|(i, p)| {
            // one-sided: fold negative frequencies except DC and Nyquist
            let fold = if i == 0 || (n % 2 == 0 && i == n / 2) { 1.0 } else { 2.0 };
            p * scale * fold
        })
        .collect();
    let df = sample_rate / n as f64;
    Ok(NoiseSpectrum {
        frequency: (0..n_out).map(|i| i as f64 * df).collect(),
        s,
    })
}

/// Parametric heating rates from intensity noise at twice the trap
/// frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingRates {
    pub gamma_a: f64,
    pub gamma_r: f64,
    /// e-fold heating time of the total energy, s; `None` without noise.
    pub tau_h: Option<f64>,
}

/// `gamma = pi^2 nu^2 S(2 nu)`, with the energy shared one third axial and
/// two thirds radial.
pub fn heating_rates_from_values(nu_ax: f64, s_ax: f64, nu_rad: f64, s_rad: f64) -> Result<HeatingRates> {
    for (name, v) in [("nu_ax", nu_ax), ("nu_rad", nu_rad), ("S(2 nu_ax)", s_ax), ("S(2 nu_rad)", s_rad)] {
        ensure(v >= 0.0 && v.is_finite(), name, "must be finite and >= 0")?;
    }
    let gamma_a = PI * PI * nu_ax * nu_ax * s_ax;
    let gamma_r = PI * PI * nu_rad * nu_rad * s_rad;
    let rate = gamma_a / 3.0 + 2.0 * gamma_r / 3.0;
    Ok(HeatingRates {
        gamma_a,
        gamma_r,
        tau_h: (rate > 0.0).then(|| 1.0 / rate),
    })
}

pub fn heating_rates(nu_ax: f64, nu_rad: f64, spectrum: &NoiseSpectrum) -> Result<HeatingRates> {
    let at = |nu: f64| -> Result<f64> {
        let f = 2.0 * nu;
        spectrum.value_at(f).ok_or_else(|| Error::FrequencyOutOfRange {
            freq: f,
            lo: spectrum.frequency.first().copied().unwrap_or(f64::NAN),
            hi: spectrum.frequency.last().copied().unwrap_or(f64::NAN),
        })
    };
    heating_rates_from_values(nu_ax, at(nu_ax)?, nu_rad, at(nu_rad)?)
}

/// Result of [`fit_trap_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma_bg: f64,
    /// Two-body coefficient per atom: `dN/dt = -gamma_bg N - q N^2`.
    pub q: f64,
    pub n0: f64,
    /// RMS of `ln(N_model / N_data)`.
    pub residual_rms: f64,
}

impl DecayFit {
    pub fn decay(&self) -> AtomDecay {
        AtomDecay {
            n0: self.n0,
            gamma_bg: self.gamma_bg,
            q: self.q,
        }
    }
}

/// Minimal Nelder-Mead on a 2-D problem; returns `(x, f(x))` or `None` if
/// the simplex has not collapsed after `max_iter` iterations.
fn nelder_mead(f: &dyn Fn([f64; 2]) -> f64, start: [f64; 2], scale: [f64; 2], ftol: f64, max_iter: usize) -> Option<([f64; 2], f64)> {
    let mut s = [start, [start[0] + scale[0], start[1]], [start[0], start[1] + scale[1]]];
    let mut v = s.map(f);
    for _ in 0..max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        s = idx.map(|i| s[i]);
        v = idx.map(|i| v[i]);
        let size = (s[1][0] - s[0][0]).abs().max((s[1][1] - s[0][1]).abs()).max((s[2][0] - s[0][0]).abs()).max((s[2][1] - s[0][1]).abs());
        let scale = 1.0 + s[0][0].abs().max(s[0][1].abs());
        if size < 1e-12 * scale || (v[2] - v[0]).abs() <= ftol * v[0].abs() + 1e-300 {
            return Some((s[0], v[0]));
        }
        let c = [(s[0][0] + s[1][0]) / 2.0, (s[0][1] + s[1][1]) / 2.0];
        let along = |t: f64| [c[0] + t * (s[2][0] - c[0]), c[1] + t * (s[2][1] - c[1])];
        let xr = along(-1.0);
        let fr = f(xr);
        if fr < v[0] {
            let xe = along(-2.0);
            let fe = f(xe);
            (s[2], v[2]) = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < v[1] {
            (s[2], v[2]) = (xr, fr);
        } else {
            let xc = if fr < v[2] { along(-0.5) } else { along(0.5) };
            let fc = f(xc);
            if fc < v[2].min(fr) {
                (s[2], v[2]) = (xc, fc);
            } else {
                for i in 1..3 {
                    s[i] = [(s[i][0] + s[0][0]) / 2.0, (s[i][1] + s[0][1]) / 2.0];
                    v[i] = f(s[i]);
                }
            }
        }
    }
    None
}

/// Least squares in `ln N` of the closed-form two-body decay. `ln N0` is
/// profiled out exactly; `(sqrt(gamma), sqrt(q N0))` are refined by
/// Nelder-Mead from the best point of a log-spaced grid.
pub fn fit_trap_decay(times: &[f64], populations: &[f64]) -> Result<DecayFit> {
    ensure(times.len() == populations.len(), "populations", "length differs from times")?;
    ensure(times.len() >= 4, "times", "need at least 4 samples")?;
    ensure(times.iter().all(|t| t.is_finite() && *t >= 0.0), "times", "must be finite and >= 0")?;
    ensure(populations.iter().all(|n| n.is_finite() && *n > 0.0), "populations", "must be finite and > 0")?;
    let span = times.iter().cloned().fold(f64::MIN, f64::max) - times.iter().cloned().fold(f64::MAX, f64::min);
    ensure(span > 0.0, "times", "need distinct sample times")?;
    let ln_n: Vec<f64> = populations.iter().map(|n| n.ln()).collect();

    // unit-N0 shape for (gamma, q N0)
    let ln_shape = |g: f64, qn: f64, t: f64| -> f64 {
        let s = if g == 0.0 { t } else { -(-g * t).exp_m1() / g };
        -g * t - (qn * s).ln_1p()
    };
    let profile = |x: [f64; 2]| -> (f64, f64) {
        let (g, qn) = (x[0] * x[0], x[1] * x[1]);
        let d: Vec<f64> = times.iter().zip(&ln_n).map(|(t, y)| y - ln_shape(g, qn, *t)).collect();
        let ln_n0 = d.iter().sum::<f64>() / d.len() as f64;
        let ss = d.iter().map(|r| (r - ln_n0).powi(2)).sum::<f64>();
        (ss, ln_n0)
    };
    let cost = |x: [f64; 2]| profile(x).0;

    let mut best = ([0.0, 0.0], cost([0.0, 0.0]));
    let rates: Vec<f64> = std::iter::once(0.0).chain((0..25).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 24.0) / span)).collect();
    for &g in &rates {
        for &qn in &rates {
            let x = [g.sqrt(), qn.sqrt()];
            let c = cost(x);
            if c < best.1 {
                best = (x, c);
            }
        }
    }
    let sc = [
        0.25 * best.0[0].max(0.3 / span.sqrt()),
        0.25 * best.0[1].max(0.3 / span.sqrt()),
    ];
    let (x, ss) = nelder_mead(&cost, best.0, sc, 1e-15, 20_000)
        .ok_or_else(|| Error::FitFailed("two-body decay fit: simplex did not converge".into()))?;
    // a second pass from the optimum guards against premature collapse
    let (x, ss) = nelder_mead(&cost, x, [sc[0] * 0.1, sc[1] * 0.1], 1e-15, 20_000)
        .filter(|r| r.1 <= ss)
        .unwrap_or((x, ss));
    let n0 = profile(x).1.exp();
    Ok(DecayFit {
        gamma_bg: x[0] * x[0],
        q: x[1] * x[1] / n0,
        n0,
        residual_rms: (ss / times.len() as f64).sqrt(),
    })
}

/// Evaporative cooling: `T0 (1 - eps (beta rho0 / 4 gamma)(1 - e^{-gamma t}))`.
pub fn temperature_evolution(t0: f64, epsilon: f64, beta_rho0_over_gamma: f64, gamma_bg: f64, t: f64) -> Result<f64> {
    ensure(t >= 0.0 && t.is_finite(), "t", "must be finite and >= 0")?;
    ensure(gamma_bg >= 0.0 && gamma_bg.is_finite(), "gamma_bg", "must be finite and >= 0")?;
    Ok(t0 * (1.0 - epsilon * cooling_shape(beta_rho0_over_gamma, gamma_bg, t)))
}

/// `(beta rho0 / 4 gamma)(1 - e^{-gamma t})`; the `gamma -> 0` limit is
/// taken at fixed `beta rho0 / gamma`.
fn cooling_shape(c: f64, gamma: f64, t: f64) -> f64 {
    0.25 * c * -(-gamma * t).exp_m1()
}

/// Result of [`fit_temperature`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub epsilon: f64,
    pub t0: f64,
    pub beta_rho0_over_gamma: f64,
    pub residual_rms: f64,
}

/// Fits `epsilon` (and the initial temperature) to a temperature series.
/// The composite `beta rho0 / gamma` is `decay.q * rho0 / decay.gamma_bg`,
/// with `rho0` in the normalization of `q` (so that `q rho0` is the initial
/// two-body loss rate). The model is linear in `(T0, T0 eps)`, so the
/// least-squares optimum is obtained in closed form.
pub fn fit_temperature(times: &[f64], temperatures: &[f64], decay: &DecayFit, rho0: f64) -> Result<TemperatureFit> {
    ensure(times.len() == temperatures.len(), "temperatures", "length differs from times")?;
    ensure(times.len() >= 3, "times", "need at least 3 samples")?;
    ensure(rho0 > 0.0 && rho0.is_finite(), "rho0", "must be finite and > 0")?;
    ensure(decay.gamma_bg > 0.0, "gamma_bg", "must be > 0 for the evaporation model")?;
    ensure(temperatures.iter().all(|t| t.is_finite()), "temperatures", "must be finite")?;
    let c = decay.q * rho0 / decay.gamma_bg;
    let mut x = Vec::with_capacity(times.len());
    for &t in times {
        ensure(t >= 0.0 && t.is_finite(), "times", "must be finite and >= 0")?;
        x.push(cooling_shape(c, decay.gamma_bg, t));
    }
    // T = A + B x with A = T0, B = -T0 eps
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, temperatures.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(temperatures).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("times", "cooling term does not vary over the samples"));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    if a == 0.0 {
        return Err(Error::FitFailed("fitted initial temperature is zero".into()));
    }
    let rms = (x.iter().zip(temperatures).map(|(xi, ti)| (a + b * xi - ti).powi(2)).sum::<f64>() / n).sqrt();
    Ok(TemperatureFit {
        epsilon: -b / a,
        t0: a,
        beta_rho0_over_gamma: c,
        residual_rms: rms,
    })
}
