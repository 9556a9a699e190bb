//! The complete particle-field system: `N` classical atoms moving in the
//! lattice formed by the locked and the unlocked travelling wave, with the
//! unlocked amplitude driven by the instantaneous localization `g`.
//!
//! Positions and momenta are SI; time is scaled by `gamma_c`. The optical
//! potential is `-E0 |sqrt(f chi0+) e^{ikz} + a e^{-ikz}|^2 exp(-2 r^2/w0^2)`
//! with the light-shift energy scale `E0 = hbar |delta0| I0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{DriveSchedule, DriveValues};
use crate::error::{ensure, invalid, Error, Result};
use crate::localization::{discrete_localization, LocalizationState};
use crate::ode::{FixedRk, Tableau, DOP853, RK4};
use crate::params::{energy_scale_for_axial_frequency, PhysicalParams, PumpConfig, K_B};

/// Atom count above which force/localization sums run chunked in parallel.
const PAR_THRESHOLD: usize = 4096;
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub positions: Vec<[f64; 3]>,
    pub momenta: Vec<[f64; 3]>,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<[f64; 3]>, momenta: Vec<[f64; 3]>) -> Result<Self> {
        ensure(!positions.is_empty(), "n_sim", "must be >= 1")?;
        ensure(positions.len() == momenta.len(), "momenta", "length must match positions")?;
        let finite = positions
            .iter()
            .chain(&momenta)
            .all(|v| v.iter().all(|c| c.is_finite()));
        ensure(finite, "ensemble", "coordinates must be finite")?;
        Ok(Self { positions, momenta })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Constants of the particle dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullModel {
    pub k: f64,
    pub w0: f64,
    pub mass: f64,
    /// Light-shift energy scale `hbar |delta0| I0`, J.
    pub e0: f64,
    pub gamma_c: f64,
}

impl FullModel {
    /// Model whose balanced standing wave (`chi0+ = |a|^2 = 1/2`) has axial
    /// frequency `nu_v` Hz.
    pub fn from_axial_frequency(phys: &PhysicalParams, nu_v: f64) -> Self {
        Self {
            k: phys.k,
            w0: phys.w0,
            mass: phys.mass,
            e0: energy_scale_for_axial_frequency(nu_v, phys.k, phys.mass),
            gamma_c: phys.gamma_c,
        }
    }

    /// Axial frequency of the balanced standing wave, Hz.
    pub fn reference_axial_frequency(&self) -> f64 {
        2.0 * self.k * (self.e0 / self.mass).sqrt() / (2.0 * PI)
    }

    /// Default step: 1/50 of the reference axial period, in scaled time.
    pub fn default_dt(&self) -> f64 {
        self.gamma_c / (50.0 * self.reference_axial_frequency())
    }

    /// Local harmonic frequencies `(nu_ax, nu_rad)` in Hz of the lattice with
    /// locked amplitude `p` and unlocked modulus `a_mod`.
    pub fn harmonic_frequencies(&self, p: f64, a_mod: f64) -> (f64, f64) {
        let w_ax = (8.0 * self.e0 * p * a_mod * self.k * self.k / self.mass).sqrt();
        let w_rad = (2.0 / self.w0) * (self.e0 * (p + a_mod).powi(2) / self.mass).sqrt();
        (w_ax / (2.0 * PI), w_rad / (2.0 * PI))
    }
}

/// Gaussian/Maxwell-Boltzmann ensemble parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_sim: usize,
    pub sigma_z: f64,
    /// Per transverse coordinate.
    pub sigma_r: f64,
    pub t_ax: f64,
    pub t_rad: f64,
    /// Centre of the occupied well, m.
    pub z_center: f64,
}

impl EnsembleSpec {
    /// Harmonic-well ensemble with the given thermal-to-depth ratios in the
    /// lattice of locked amplitude `p` and unlocked field `a`.
    pub fn from_boltzmann_ratios(
        n_sim: usize,
        eta_ax: f64,
        eta_rad: f64,
        p: f64,
        a: Complex64,
        model: &FullModel,
    ) -> Result<Self> {
        ensure(eta_ax >= 0.0 && eta_rad >= 0.0, "eta", "must be >= 0")?;
        let m = a.norm();
        let depth = 4.0 * model.e0 * p * m;
        let v_an = model.e0 * (p + m).powi(2);
        Ok(Self {
            n_sim,
            sigma_z: (eta_ax / 2.0).sqrt() / model.k,
            sigma_r: 0.5 * model.w0 * eta_rad.sqrt(),
            t_ax: eta_ax * depth / K_B,
            t_rad: eta_rad * v_an / K_B,
            z_center: if m > 0.0 { a.arg() / (2.0 * model.k) } else { 0.0 },
        })
    }
}

impl EnsembleSpec {
    /// Same ensemble at `scale` times the temperature (widths scale as `sqrt`).
    pub fn with_temperature_scale(&self, scale: f64) -> Self {
        let r = scale.sqrt();
        Self {
            sigma_z: self.sigma_z * r,
            sigma_r: self.sigma_r * r,
            t_ax: self.t_ax * scale,
            t_rad: self.t_rad * scale,
            ..*self
        }
    }
}

/// Result of [`calibrate_localization`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub spec: EnsembleSpec,
    pub temperature_scale: f64,
    /// `|g|` of the pilot ensemble at the chosen scale.
    pub pilot_g: f64,
}

/// Rescales the ensemble temperature so that a bound pilot ensemble of
/// `pilot_n` atoms has `|g| = target_g`. Bisection in `ln(scale)` over
/// `[e^-4, e^4]` (a scale too hot to bind counts as `|g| = 0`); the pilot always uses the same seed, so the map is
/// deterministic.
pub fn calibrate_localization(
    spec: &EnsembleSpec,
    lat: &BindingLattice,
    target_g: f64,
    pilot_n: usize,
    pilot_seed: u64,
) -> Result<Calibration> {
    ensure(target_g > 0.0 && target_g < 1.0, "target_g", "must lie in (0, 1)")?;
    ensure(pilot_n >= 16, "pilot_n", "must be >= 16")?;
    let g_at = |ln_s: f64| -> Result<f64> {
        let pilot = EnsembleSpec { n_sim: pilot_n, ..spec.with_temperature_scale(ln_s.exp()) };
        let (e, _) = match init_bound_ensemble(pilot_seed, &pilot, lat) {
            // too hot to bind: treat as fully delocalized
            Err(Error::InvalidParameter { name: "eta", .. }) => return Ok(0.0),
            r => r?,
        };
        Ok(discrete_localization(&e.positions, lat.model.k, lat.model.w0)?.g_mod())
    };
    let (mut lo, mut hi) = (-4.0f64, 4.0f64);
    let (g_lo, g_hi) = (g_at(lo)?, g_at(hi)?);
    if !(g_lo >= target_g && g_hi <= target_g) {
        return Err(invalid(
            "target_g",
            &format!("{target_g} outside reachable range [{g_hi:.4}, {g_lo:.4}]"),
        ));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if g_at(mid)? > target_g {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ln_s = 0.5 * (lo + hi);
    Ok(Calibration {
        spec: spec.with_temperature_scale(ln_s.exp()),
        temperature_scale: ln_s.exp(),
        pilot_g: g_at(ln_s)?,
    })
}

pub fn init_ensemble(seed: u64, spec: &EnsembleSpec, mass: f64) -> Result<ParticleEnsemble> {
    ensure(spec.n_sim >= 1, "n_sim", "must be >= 1")?;
    for (name, v) in [
        ("sigma_z", spec.sigma_z),
        ("sigma_r", spec.sigma_r),
        ("t_ax", spec.t_ax),
        ("t_rad", spec.t_rad),
    ] {
        ensure(v >= 0.0 && v.is_finite(), name, "must be finite and >= 0")?;
    }
    ensure(mass > 0.0, "mass", "must be > 0")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sp_ax = (mass * K_B * spec.t_ax).sqrt();
    let sp_rad = (mass * K_B * spec.t_rad).sqrt();
    let mut positions = Vec::with_capacity(spec.n_sim);
    let mut momenta = Vec::with_capacity(spec.n_sim);
    for _ in 0..spec.n_sim {
        let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
        positions.push([spec.sigma_r * n(), spec.sigma_r * n(), spec.z_center + spec.sigma_z * n()]);
        momenta.push([sp_rad * n(), sp_rad * n(), sp_ax * n()]);
    }
    ParticleEnsemble::new(positions, momenta)
}

/// Lattice in which [`init_bound_ensemble`] judges whether an atom is trapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BindingLattice<'a> {
    pub p: f64,
    pub a: Complex64,
    pub model: &'a FullModel,
}

/// As [`init_ensemble`], but atoms with non-negative total energy in the
/// given lattice (free to leave the beam) are redrawn, so the sample
/// contains trapped atoms only. Returns the ensemble and the number of
/// redraws.
pub fn init_bound_ensemble(seed: u64, spec: &EnsembleSpec, lat: &BindingLattice) -> Result<(ParticleEnsemble, usize)> {
    let m = lat.model;
    let mut single = EnsembleSpec { n_sim: 1, ..*spec };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(spec.n_sim);
    let mut momenta = Vec::with_capacity(spec.n_sim);
    let mut redraws = 0usize;
    let max_redraws = 1000 * spec.n_sim.max(1);
    while positions.len() < spec.n_sim {
        single.n_sim = 1;
        let e = init_ensemble(rand::Rng::gen(&mut rng), &single, m.mass)?;
        let (x, q) = (e.positions[0], e.momenta[0]);
        let kinetic = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) / (2.0 * m.mass);
        if kinetic - m.e0 * lattice_intensity(&x, lat.p, lat.a, m) < 0.0 {
            positions.push(x);
            momenta.push(q);
        } else {
            redraws += 1;
            if redraws > max_redraws {
                return Err(invalid("eta", "thermal energy too high: almost no atoms are bound"));
            }
        }
    }
    Ok((ParticleEnsemble::new(positions, momenta)?, redraws))
}

/// Per-atom light-field quantities: `e^{-2ikz} R`, `R`, force.
#[inline]
fn atom_terms(pos: &[f64; 3], p: f64, a: Complex64, model: &FullModel) -> (Complex64, f64, [f64; 3]) {
    let w2 = model.w0 * model.w0;
    let radial = (-2.0 * (pos[0] * pos[0] + pos[1] * pos[1]) / w2).exp();
    let (s, c) = (2.0 * model.k * pos[2]).sin_cos();
    let back = Complex64::new(c, -s);
    // |p e^{ikz} + a e^{-ikz}|^2 = p^2 + |a|^2 + 2 p Re(a e^{-2ikz})
    let w = a * back;
    let axial = p * p + a.norm_sqr() + 2.0 * p * w.re;
    let fz = model.e0 * radial * 4.0 * model.k * p * w.im;
    let fr = -model.e0 * axial * radial * 4.0 / w2;
    (back * radial, radial, [fr * pos[0], fr * pos[1], fz])
}

/// Dimensionless intensity `|p e^{ikz} + a e^{-ikz}|^2 e^{-2 r^2/w0^2}` at `pos`.
pub fn lattice_intensity(pos: &[f64; 3], p: f64, a: Complex64, model: &FullModel) -> f64 {
    let radial = (-2.0 * (pos[0] * pos[0] + pos[1] * pos[1]) / (model.w0 * model.w0)).exp();
    let (s, c) = (2.0 * model.k * pos[2]).sin_cos();
    (p * p + a.norm_sqr() + 2.0 * p * (a * Complex64::new(c, -s)).re) * radial
}

/// Dipole forces on all atoms for locked amplitude `p` (real, scaled) and
/// unlocked field `a`.
pub fn forces(ens: &ParticleEnsemble, p: f64, a: Complex64, model: &FullModel) -> Vec<[f64; 3]> {
    ens.positions.iter().map(|x| atom_terms(x, p, a, model).2).collect()
}

/// Total mechanical energy of the atoms in a frozen field, J.
pub fn total_energy(ens: &ParticleEnsemble, p: f64, a: Complex64, model: &FullModel) -> f64 {
    ens.positions
        .iter()
        .zip(&ens.momenta)
        .map(|(x, q)| (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) / (2.0 * model.mass) - model.e0 * lattice_intensity(x, p, a, model))
        .sum()
}

/// Field derivative for a given localization state.
pub fn field_rhs_from_g(a: Complex64, loc: &LocalizationState, d: &DriveValues) -> Complex64 {
    let p = (d.i0_factor * d.chi0_plus).sqrt();
    let i = Complex64::i();
    i * (d.un / p) * loc.g * a * a - a - i * (d.un * p) * loc.g.conj() + (d.i0_factor * d.chi0_minus).sqrt()
}

pub fn field_rhs(a: Complex64, ens: &ParticleEnsemble, d: &DriveValues, model: &FullModel) -> Result<Complex64> {
    let loc = crate::localization::discrete_localization(&ens.positions, model.k, model.w0)?;
    Ok(field_rhs_from_g(a, &loc, d))
}

/// Maps a physical atom number onto a smaller simulated ensemble while
/// keeping `UN` and the single-atom light shift unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescalePlan {
    pub n_real: f64,
    pub n_sim: usize,
    pub delta0_scaled: f64,
    pub intensity_factor: f64,
}

impl RescalePlan {
    pub fn un(&self, gamma_c: f64) -> f64 {
        self.n_sim as f64 * self.delta0_scaled / gamma_c
    }
    /// Light-shift energy scale per unit reference photon number.
    pub fn single_atom_shift(&self, delta0: f64) -> f64 {
        let _ = delta0;
        self.delta0_scaled * self.intensity_factor
    }
}

pub fn rescale_for_simulation(n_real: f64, n_sim: usize, phys: &PhysicalParams, pump: &PumpConfig) -> Result<RescalePlan> {
    ensure(n_sim >= 1, "n_sim", "must be >= 1")?;
    ensure(n_real > 0.0 && n_real.is_finite(), "n_real", "must be finite and > 0")?;
    ensure(pump.i0 >= 0.0, "i0", "must be >= 0")?;
    let ratio = n_real / n_sim as f64;
    Ok(RescalePlan {
        n_real,
        n_sim,
        delta0_scaled: phys.delta0 * ratio,
        intensity_factor: 1.0 / ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSample {
    pub tau: f64,
    pub t_seconds: f64,
    pub chi_minus: f64,
    pub phi: f64,
    /// From the axial contrast `|<e^{-2ikz}>|`, m.
    pub sigma_z: f64,
    /// RMS per transverse coordinate, m.
    pub sigma_r: f64,
    /// RMS transverse momentum per coordinate, kg m/s.
    pub sigma_pr: f64,
    /// Transverse centre of mass, m.
    pub x_cm: f64,
    pub y_cm: f64,
    pub g_mod: f64,
    #[serde(rename = "E_kin_ax")]
    pub e_kin_ax: f64,
    #[serde(rename = "E_kin_rad")]
    pub e_kin_rad: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableTrace {
    pub samples: Vec<ObservableSample>,
}

impl ObservableTrace {
    pub fn column(&self, f: impl Fn(&ObservableSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }
}

fn observe(tau: f64, ens: &ParticleEnsemble, a: Complex64, model: &FullModel) -> ObservableSample {
    let n = ens.len() as f64;
    let (mut contrast, mut g) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let (mut r2, mut pr2, mut kz, mut kr) = (0.0, 0.0, 0.0, 0.0);
    let (mut xs, mut ys) = (0.0, 0.0);
    for (x, q) in ens.positions.iter().zip(&ens.momenta) {
        let (gb, _, _) = atom_terms(x, 0.0, Complex64::new(0.0, 0.0), model);
        let (s, c) = (2.0 * model.k * x[2]).sin_cos();
        contrast += Complex64::new(c, -s);
        g += gb;
        r2 += x[0] * x[0] + x[1] * x[1];
        xs += x[0];
        ys += x[1];
        pr2 += q[0] * q[0] + q[1] * q[1];
        kz += q[2] * q[2];
        kr += q[0] * q[0] + q[1] * q[1];
    }
    let r = (contrast.norm() / n).min(1.0);
    ObservableSample {
        tau,
        t_seconds: tau / model.gamma_c,
        chi_minus: a.norm_sqr(),
        phi: a.arg(),
        sigma_z: if r > 0.0 { (-r.ln() / 2.0).sqrt() / model.k } else { f64::INFINITY },
        sigma_r: (r2 / (2.0 * n)).sqrt(),
        sigma_pr: (pr2 / (2.0 * n)).sqrt(),
        x_cm: xs / n,
        y_cm: ys / n,
        g_mod: (g / n).norm(),
        e_kin_ax: kz / (2.0 * model.mass * n),
        e_kin_rad: kr / (2.0 * model.mass * n),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FullIntegrator {
    Rk4,
    #[default]
    Dop853,
}

impl FullIntegrator {
    pub fn tableau(self) -> &'static Tableau {
        match self {
            Self::Rk4 => &RK4,
            Self::Dop853 => &DOP853,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullOptions {
    /// Upper bound on the step, scaled time.
    pub dt: f64,
    /// Output spacing, scaled time; rounded to a whole number of steps.
    pub stride: f64,
    pub integrator: FullIntegrator,
    /// Hold the unlocked field at its initial value.
    pub frozen_field: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullRun {
    pub trace: ObservableTrace,
    pub ensemble: ParticleEnsemble,
    pub a: Complex64,
    pub steps: usize,
}

/// Derivative of the packed state `[x0 y0 z0 ..., px0 py0 pz0 ..., Re a, Im a]`.
struct System<'a> {
    model: &'a FullModel,
    n: usize,
    frozen: bool,
}

impl System<'_> {
    fn eval(&self, d: &DriveValues, y: &[f64], dy: &mut [f64]) {
        let n3 = 3 * self.n;
        let a = Complex64::new(y[2 * n3], y[2 * n3 + 1]);
        let p = (d.i0_factor * d.chi0_plus).sqrt();
        let m = self.model;
        let inv_mg = 1.0 / (m.mass * m.gamma_c);
        let inv_g = 1.0 / m.gamma_c;
        let (pos, mom) = y[..2 * n3].split_at(n3);
        let (dpos, rest) = dy.split_at_mut(n3);
        let (dmom, dfield) = rest.split_at_mut(n3);

        let chunk = |pos: &[f64], mom: &[f64], dpos: &mut [f64], dmom: &mut [f64]| -> Complex64 {
            let mut g = Complex64::new(0.0, 0.0);
            for i in 0..pos.len() / 3 {
                let x = [pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]];
                let (gb, _, f) = atom_terms(&x, p, a, m);
                g += gb;
                for c in 0..3 {
                    dpos[3 * i + c] = mom[3 * i + c] * inv_mg;
                    dmom[3 * i + c] = f[c] * inv_g;
                }
            }
            g
        };

        let g_sum = if self.n < PAR_THRESHOLD {
            chunk(pos, mom, dpos, dmom)
        } else {
            // fixed chunking and ordered combination: thread-count independent
            let parts: Vec<Complex64> = pos
                .par_chunks(3 * CHUNK)
                .zip(mom.par_chunks(3 * CHUNK))
                .zip(dpos.par_chunks_mut(3 * CHUNK))
                .zip(dmom.par_chunks_mut(3 * CHUNK))
                .map(|(((x, q), dx), dq)| chunk(x, q, dx, dq))
                .collect();
            parts.into_iter().fold(Complex64::new(0.0, 0.0), |s, v| s + v)
        };

        if self.frozen {
            dfield[0] = 0.0;
            dfield[1] = 0.0;
        } else {
            let loc = LocalizationState {
                g: g_sum / self.n as f64,
                g_r: 0.0,
            };
            let da = field_rhs_from_g(a, &loc, d);
            dfield[0] = da.re;
            dfield[1] = da.im;
        }
    }
}

/// Integrate atoms and field together with a fixed-step explicit RK.
pub fn integrate_full(
    ensemble: &ParticleEnsemble,
    a_init: Complex64,
    schedule: &DriveSchedule,
    model: &FullModel,
    tau_span: (f64, f64),
    opts: &FullOptions,
) -> Result<FullRun> {
    let (t0, t1) = tau_span;
    ensure(t0.is_finite() && t1.is_finite() && t1 > t0, "tau_span", "must be finite with end > start")?;
    ensure(opts.dt > 0.0 && opts.dt.is_finite(), "dt", "must be finite and > 0")?;
    ensure(opts.stride >= opts.dt, "stride", "must be >= dt")?;
    ensure(model.e0 >= 0.0 && model.mass > 0.0 && model.gamma_c > 0.0, "model", "non-physical constants")?;
    let n = ensemble.len();
    if n == 0 {
        return Err(invalid("n_sim", "must be >= 1"));
    }
    let n3 = 3 * n;
    let mut y = Vec::with_capacity(2 * n3 + 2);
    y.extend(ensemble.positions.iter().flatten());
    y.extend(ensemble.momenta.iter().flatten());
    y.push(a_init.re);
    y.push(a_init.im);

    let steps_per_out = (opts.stride / opts.dt).ceil() as usize;
    let h_nom = opts.stride / steps_per_out as f64;
    let breaks = schedule.breakpoints(t0, t1);
    let sys = System {
        model,
        n,
        frozen: opts.frozen_field,
    };
    let mut rk = FixedRk::new(opts.integrator.tableau(), y.len());

    let unpack = |y: &[f64]| -> (ParticleEnsemble, Complex64) {
        let pos = y[..n3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let mom = y[n3..2 * n3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        (
            ParticleEnsemble {
                positions: pos,
                momenta: mom,
            },
            Complex64::new(y[2 * n3], y[2 * n3 + 1]),
        )
    };

    let mut trace = ObservableTrace::default();
    trace.samples.push(observe(t0, ensemble, a_init, model));
    let mut t = t0;
    let mut steps = 0usize;
    let mut bi = 0usize;
    let mut k_out = 0usize;
    while t < t1 {
        k_out += 1;
        let t_out = (t0 + k_out as f64 * opts.stride).min(t1);
        while t < t_out {
            let mut t_next = (t + h_nom).min(t_out);
            if t_out - t_next < 1e-9 * h_nom {
                t_next = t_out;
            }
            if let Some(&b) = breaks.get(bi) {
                if b <= t_next {
                    t_next = b;
                    bi += 1;
                }
            }
            // drive held at its value on [t, t_next)
            let d = schedule.at(t);
            let mut f = |tau: f64, s: &[f64], ds: &mut [f64]| {
                let dv = DriveValues {
                    un: schedule.un_schedule().at(tau),
                    ..d
                };
                sys.eval(&dv, s, ds)
            };
            rk.step(&mut f, t, &mut y, t_next - t);
            steps += 1;
            t = t_next;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                tau: t,
                what: "particle/field state".into(),
            });
        }
        let (ens, a) = unpack(&y);
        trace.samples.push(observe(t, &ens, a, model));
    }
    let (ens, a) = unpack(&y);
    Ok(FullRun {
        trace,
        ensemble: ens,
        a,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    pub frequency: f64,
    /// Amplitude of the equivalent sinusoid.
    pub amplitude: f64,
    /// Peak power over the median power in the search band.
    pub prominence: f64,
}

/// Subtract a centred moving mean of `span` samples (shrinking at edges).
pub fn detrend_moving_mean(x: &[f64], span: usize) -> Vec<f64> {
    let half = span / 2;
    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            x[i] - (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Dominant periodogram peak of uniformly sampled `x` within `band` (Hz),
/// refined by parabolic interpolation of the log power. `None` when the peak
/// is less than `min_prominence` times the band median.
pub fn spectral_peak(x: &[f64], dt: f64, band: (f64, f64), min_prominence: f64) -> Result<Option<SpectralPeak>> {
    spectral_peak_averaged(&[x], dt, band, min_prominence)
}

/// Zero-padded Hann periodogram, `(df, power)`.
pub fn periodogram(x: &[f64], dt: f64) -> Result<(f64, Vec<f64>)> {
    ensure(x.len() >= 16, "signal", "needs at least 16 samples")?;
    ensure(dt > 0.0, "dt", "must be > 0")?;
    let n = x.len();
    let nfft = (4 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = (0..nfft)
        .map(|i| Complex64::new(if i < n { x[i] * hann(i, n) } else { 0.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    Ok((1.0 / (nfft as f64 * dt), buf[..nfft / 2 + 1].iter().map(|c| c.norm_sqr()).collect()))
}

fn hann(i: usize, n: usize) -> f64 {
    0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
}

/// As [`spectral_peak`] on the mean periodogram of equally long records,
/// e.g. independent seeds of one scenario.
pub fn spectral_peak_averaged(
    records: &[&[f64]],
    dt: f64,
    band: (f64, f64),
    min_prominence: f64,
) -> Result<Option<SpectralPeak>> {
    ensure(!records.is_empty(), "records", "need at least one record")?;
    let n = records[0].len();
    ensure(records.iter().all(|r| r.len() == n), "records", "must have equal lengths")?;
    let mut power: Vec<f64> = Vec::new();
    let mut df = 0.0;
    for r in records {
        let (d, p) = periodogram(r, dt)?;
        df = d;
        if power.is_empty() {
            power = p;
        } else {
            power.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
    }
    power.iter_mut().for_each(|p| *p /= records.len() as f64);
    let wsum: f64 = (0..n).map(|i| hann(i, n)).sum();
    let lo = ((band.0 / df).ceil() as usize).max(1);
    let hi = ((band.1 / df).floor() as usize).min(power.len() - 2);
    if lo >= hi {
        return Err(Error::FrequencyOutOfRange {
            freq: band.0,
            lo: 0.0,
            hi: 0.5 / dt,
        });
    }
    let (imax, &pmax) = power[lo..=hi]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, p)| (i + lo, p))
        .expect("non-empty band");
    let mut band_pw: Vec<f64> = power[lo..=hi].to_vec();
    band_pw.sort_by(f64::total_cmp);
    let median = band_pw[band_pw.len() / 2];
    let prominence = if median > 0.0 { pmax / median } else { f64::INFINITY };
    if !(pmax > 0.0) || prominence < min_prominence {
        return Ok(None);
    }
    let (l, c, r) = (power[imax - 1].max(1e-300).ln(), pmax.ln(), power[imax + 1].max(1e-300).ln());
    let den = l - 2.0 * c + r;
    let shift = if den < 0.0 { (0.5 * (l - r) / den).clamp(-0.5, 0.5) } else { 0.0 };
    Ok(Some(SpectralPeak {
        frequency: (imax as f64 + shift) * df,
        amplitude: 2.0 * pmax.sqrt() / wsum,
        prominence,
    }))
}

/// Analysis window for [`breathing_frequency`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreathingWindow {
    pub t_start: f64,
    pub t_end: f64,
    /// Moving-mean detrend span, s.
    pub detrend_span: f64,
    pub f_min: f64,
    pub f_max: f64,
}

fn window_indices(trace: &ObservableTrace, w: &BreathingWindow) -> Result<(usize, usize, f64)> {
    let s = &trace.samples;
    ensure(s.len() >= 16, "trace", "needs at least 16 samples")?;
    let i0 = s.partition_point(|x| x.t_seconds < w.t_start);
    let i1 = s.partition_point(|x| x.t_seconds <= w.t_end);
    ensure(i1 > i0 + 16, "window", "contains fewer than 16 samples")?;
    Ok((i0, i1, s[1].t_seconds - s[0].t_seconds))
}

/// Frequency (Hz) and amplitude of the dominant oscillation of `chi_minus`
/// inside the window.
pub fn breathing_frequency(trace: &ObservableTrace, w: &BreathingWindow) -> Result<Option<SpectralPeak>> {
    let (i0, i1, dt) = window_indices(trace, w)?;
    let x: Vec<f64> = trace.samples[i0..i1].iter().map(|s| s.chi_minus).collect();
    let span = ((w.detrend_span / dt).round() as usize).max(3);
    let d = detrend_moving_mean(&x, span);
    // rounding residue of a constant signal is not an oscillation
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if d.iter().all(|v| v.abs() <= 1e-12 * scale) {
        return Ok(None);
    }
    spectral_peak(&d, dt, (w.f_min, w.f_max), 5.0)
}

/// Phase of `y` relative to `x` at frequency `f` (Hz), in `(-pi, pi]`, from
/// the Hann-windowed Fourier projections of both detrended signals.
pub fn relative_phase(x: &[f64], y: &[f64], dt: f64, f: f64, detrend_span: usize) -> Result<f64> {
    ensure(x.len() == y.len() && x.len() >= 16, "signals", "need equal lengths >= 16")?;
    let n = x.len();
    let proj = |s: &[f64]| -> Complex64 {
        let d = detrend_moving_mean(s, detrend_span);
        d.iter()
            .enumerate()
            .map(|(i, v)| {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
                Complex64::from_polar(w * v, -2.0 * PI * f * i as f64 * dt)
            })
            .sum()
    };
    let (px, py) = (proj(x), proj(y));
    if px.norm() == 0.0 || py.norm() == 0.0 {
        return Err(Error::FitFailed("no spectral content at requested frequency".into()));
    }
    Ok((py / px).arg())
}
