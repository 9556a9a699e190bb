use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ringlat_core::adiabatic::{AtomDecay, EliminationForm};
use ringlat_core::bistability::{steady_states_with, ScanOptions, SteadyState};
use ringlat_core::localization::knobs_from_eta;
use ringlat_core::params::ScaledParams;
use serde::Serialize;

use crate::config::{DecaySynthesis, Sample};
use crate::error::{HarnessError, Result};

/// `0.49 -> "49"`, `0.435 -> "43.5"`.
pub fn pct_label(chi: f64) -> String {
    let p = (chi * 1000.0).round() / 10.0;
    if p.fract() == 0.0 {
        format!("{p:.0}")
    } else {
        format!("{p:.1}")
    }
}

pub fn scaled(sample: &Sample, un: f64, a0_mod: f64) -> Result<ScaledParams> {
    Ok(ScaledParams::new(un, sample.eta_ax, sample.eta_rad, a0_mod)?)
}

/// Stable fixed points of the field equation, lowest intensity first.
pub fn stable_states(sp: &ScaledParams, un: f64, chi0_minus: f64) -> Result<Vec<SteadyState>> {
    let knobs = knobs_from_eta(sp, 1.0 - chi0_minus);
    let opts = ScanOptions {
        form: EliminationForm::Exact,
        ..ScanOptions::default()
    };
    let mut st: Vec<SteadyState> = steady_states_with(un, chi0_minus, &knobs, &opts)?
        .into_iter()
        .filter(|s| s.stable)
        .collect();
    st.sort_by(|a, b| a.intensity.total_cmp(&b.intensity));
    if st.is_empty() {
        return Err(HarnessError::Precondition(format!(
            "no stable steady state at UN = {un}, chi0- = {chi0_minus}"
        )));
    }
    Ok(st)
}

pub fn field_of(s: &SteadyState) -> Complex64 {
    Complex64::from_polar(s.a_mod, s.phi)
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationRow {
    pub t_seconds: f64,
    pub atoms: f64,
}

/// Uniformly sampled two-body decay with log-normal measurement noise.
pub fn synthesize_decay(d: &DecaySynthesis, seed: u64, stream: u64) -> Result<Vec<PopulationRow>> {
    if d.n_samples < 3 || !(d.t_end > 0.0) || !(d.n0 > 0.0) {
        return Err(HarnessError::Precondition(
            "decay synthesis needs n_samples >= 3, t_end > 0, n0 > 0".into(),
        ));
    }
    let truth = AtomDecay {
        n0: d.n0,
        gamma_bg: d.gamma_bg,
        q: d.q_n0 / d.n0,
    };
    let mut r = rng(seed, stream);
    Ok((0..d.n_samples)
        .map(|i| {
            let t = d.t_end * i as f64 / (d.n_samples - 1) as f64;
            let z: f64 = StandardNormal.sample(&mut r);
            PopulationRow {
                t_seconds: t,
                atoms: truth.n_at(t) * (d.noise * z).exp(),
            }
        })
        .collect())
}

/// Linear interpolation on an increasing grid; `None` outside it.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == xs.len() {
        return Some(ys[i - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    Some(ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0))
}

/// Least-squares slope and intercept of `y = a + b x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(pct_label(0.49), "49");
        assert_eq!(pct_label(0.435), "43.5");
        assert_eq!(pct_label(0.38), "38");
    }

    #[test]
    fn interpolation() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [0.0, 2.0, 6.0];
        assert_eq!(interp(&xs, &ys, 2.0), Some(4.0));
        assert_eq!(interp(&xs, &ys, 3.0), Some(6.0));
        assert_eq!(interp(&xs, &ys, -0.1), None);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v).collect();
        let (a, b) = linear_fit(&x, &y);
        assert!((a - 0.5).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_decay_is_seeded() {
        let d = DecaySynthesis::default();
        let a = synthesize_decay(&d, 3, 0).unwrap();
        let b = synthesize_decay(&d, 3, 0).unwrap();
        let c = synthesize_decay(&d, 4, 0).unwrap();
        assert_eq!(a[5].atoms, b[5].atoms);
        assert_ne!(a[5].atoms, c[5].atoms);
        let clean = synthesize_decay(&DecaySynthesis { noise: 0.0, ..d.clone() }, 3, 0).unwrap();
        assert_eq!(clean[0].atoms, d.n0);
    }
}
