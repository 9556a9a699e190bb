//! Reduced field dynamics with the atoms slaved adiabatically to the
//! lattice: complex form, phase/amplitude form, the 1-D eliminated phase
//! flow, a trace integrator and the atom-number drive.

use std::cell::Cell;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Error, Result};
use crate::localization::{localization_factor, ltilde_unchecked, LocalizationKnobs};
use crate::ode::{Dopri5, Tolerances};
use crate::params::ScaledParams;

/// Default lower clamp on `|a|` in the complex right-hand side.
pub const A_MIN: f64 = 1e-9;

/// Trace flag: the singular floor was hit since the previous sample.
pub const FLAG_FLOOR: u32 = 1;
/// Trace flag: a schedule discontinuity was crossed since the previous sample.
pub const FLAG_RESTART: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub a: Complex64,
}

impl FieldState {
    pub fn new(a: Complex64) -> Self {
        Self { a }
    }
    pub fn from_polar(a_mod: f64, phi: f64) -> Self {
        Self {
            a: Complex64::from_polar(a_mod, phi),
        }
    }
    pub fn a_mod(&self) -> f64 {
        self.a.norm()
    }
    pub fn phi(&self) -> f64 {
        self.a.arg()
    }
    pub fn intensity(&self) -> f64 {
        self.a.norm_sqr()
    }
}

/// Drive quantities at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveValues {
    pub chi0_minus: f64,
    pub chi0_plus: f64,
    /// Total pump power relative to the reference `I0`.
    pub i0_factor: f64,
    pub un: f64,
}

impl DriveValues {
    pub fn new(chi0_minus: f64, i0_factor: f64, un: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&chi0_minus), "chi0_minus", "must lie in [0, 1]")?;
        ensure(i0_factor > 0.0 && i0_factor.is_finite(), "i0_factor", "must be finite and > 0")?;
        ensure(un >= 0.0 && un.is_finite(), "un", "must be finite and >= 0")?;
        Ok(Self {
            chi0_minus,
            chi0_plus: 1.0 - chi0_minus,
            i0_factor,
            un,
        })
    }

    fn sqrt_plus(&self) -> f64 {
        (self.i0_factor * self.chi0_plus).sqrt()
    }
    fn sqrt_minus(&self) -> f64 {
        (self.i0_factor * self.chi0_minus).sqrt()
    }
}

#[inline]
fn l_of(a_mod: f64, d: &DriveValues, sp: &ScaledParams) -> f64 {
    localization_factor(a_mod, d.i0_factor, sp, d.chi0_plus)
}

/// `da/dtau` of the complex field equation, with `|a|` clamped at [`A_MIN`].
pub fn rhs_complex(a: FieldState, d: &DriveValues, sp: &ScaledParams) -> Complex64 {
    rhs_complex_floored(a, d, sp, A_MIN).0
}

/// As [`rhs_complex`] with an explicit floor; the flag reports clamping.
pub fn rhs_complex_floored(a: FieldState, d: &DriveValues, sp: &ScaledParams, a_min: f64) -> (Complex64, bool) {
    let raw = a.a.norm();
    let clamped = !(raw > a_min);
    let (m, dir) = if clamped {
        // direction is undefined at the origin; take the real axis
        let dir = if raw > 0.0 { a.a / raw } else { Complex64::new(1.0, 0.0) };
        (a_min, dir)
    } else {
        (raw, a.a / raw)
    };
    let l = l_of(m, d, sp);
    let (sp_plus, sp_minus) = (d.sqrt_plus(), d.sqrt_minus());
    let i = Complex64::i();
    let da = i * (d.un / sp_plus * l * m) * a.a - a.a + sp_minus - i * (d.un * sp_plus * l) * dir;
    (da, clamped)
}

/// `(d|a|/dtau, dphi/dtau)` of the polar decomposition.
pub fn rhs_phase_amplitude(a_mod: f64, phi: f64, d: &DriveValues, sp: &ScaledParams) -> Result<(f64, f64)> {
    if !(a_mod > 0.0) {
        return Err(Error::SingularField { a_mod });
    }
    let l = l_of(a_mod, d, sp);
    let (sp_plus, sp_minus) = (d.sqrt_plus(), d.sqrt_minus());
    let (s, c) = phi.sin_cos();
    let dmod = sp_minus * c - a_mod;
    let dphi = (d.un * l * (a_mod * a_mod / sp_plus - sp_plus) - sp_minus * s) / a_mod;
    Ok((dmod, dphi))
}

/// Which variant of the eliminated phase flow to evaluate.
///
/// `Printed` carries a `sqrt(chi0-)` on the `tan` term; its zeros coincide
/// with complex-form fixed points only after rescaling `UN -> UN / sqrt(chi0-)`.
/// `Exact` is the algebraic elimination whose zeros map directly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EliminationForm {
    #[default]
    Printed,
    Exact,
}

impl EliminationForm {
    fn tan_coefficient(self, chi0_minus: f64) -> f64 {
        match self {
            Self::Printed => chi0_minus.sqrt(),
            Self::Exact => 1.0,
        }
    }
}

fn check_phase(phi: f64) -> Result<f64> {
    let c = phi.cos();
    if !(phi.abs() < FRAC_PI_2) || c <= 0.0 {
        return Err(Error::PhaseDomain { phi });
    }
    Ok(c)
}

/// Eliminated phase flow `dphi/dtau` as a function of `phi` alone.
pub fn eliminated_flow(
    form: EliminationForm,
    phi: f64,
    knobs: &LocalizationKnobs,
    chi0_plus: f64,
    chi0_minus: f64,
    un: f64,
) -> Result<f64> {
    let c = check_phase(phi)?;
    Ok(eliminated_unchecked(form, phi, c, knobs, chi0_plus, chi0_minus, un))
}

#[inline]
pub(crate) fn eliminated_unchecked(
    form: EliminationForm,
    phi: f64,
    c: f64,
    knobs: &LocalizationKnobs,
    chi0_plus: f64,
    chi0_minus: f64,
    un: f64,
) -> f64 {
    let lt = ltilde_unchecked(c, knobs, chi0_plus, chi0_minus);
    un / (chi0_minus * chi0_plus).sqrt() * lt * (chi0_minus * c - chi0_plus / c)
        - form.tan_coefficient(chi0_minus) * phi.tan()
}

pub fn rhs_eliminated(phi: f64, knobs: &LocalizationKnobs, chi0_plus: f64, chi0_minus: f64, un: f64) -> Result<f64> {
    eliminated_flow(EliminationForm::Printed, phi, knobs, chi0_plus, chi0_minus, un)
}

pub fn rhs_eliminated_exact(
    phi: f64,
    knobs: &LocalizationKnobs,
    chi0_plus: f64,
    chi0_minus: f64,
    un: f64,
) -> Result<f64> {
    eliminated_flow(EliminationForm::Exact, phi, knobs, chi0_plus, chi0_minus, un)
}

/// Analytic `dF/dphi` of the eliminated flow.
pub fn eliminated_slope(
    form: EliminationForm,
    phi: f64,
    knobs: &LocalizationKnobs,
    chi0_plus: f64,
    chi0_minus: f64,
    un: f64,
) -> Result<f64> {
    let c = check_phase(phi)?;
    let s = phi.sin();
    let (p, m) = (chi0_plus.sqrt(), chi0_minus.sqrt());
    let root = (chi0_plus * chi0_minus).sqrt();

    let (axial, daxial_dc) = if knobs.ax == 0.0 {
        (1.0, 0.0)
    } else {
        let q = knobs.ax * (8.0 / root).sqrt();
        let ax = (-q / c.sqrt()).exp();
        (ax, ax * 0.5 * q * c.powf(-1.5))
    };
    let den = p + m * c + knobs.rad;
    let radial = (p + m * c) / den;
    let dradial_dc = m * knobs.rad / (den * den);
    let lt = axial * radial;
    let dlt = -s * (daxial_dc * radial + axial * dradial_dc);

    let g = chi0_minus * c - chi0_plus / c;
    let dg = -chi0_minus * s - chi0_plus * s / (c * c);
    Ok(un / root * (dlt * g + lt * dg) - form.tan_coefficient(chi0_minus) / (c * c))
}

/// Two-body plus background loss `dN/dt = -gamma_bg N - q N^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDecay {
    pub n0: f64,
    /// Background loss rate, 1/s.
    pub gamma_bg: f64,
    /// Two-body coefficient per atom, 1/s.
    pub q: f64,
}

impl AtomDecay {
    /// Atom number at `t` seconds.
    pub fn n_at(&self, t: f64) -> f64 {
        self.n0 * self.fraction(t)
    }

    /// `N(t) / N0`.
    pub fn fraction(&self, t: f64) -> f64 {
        let g = self.gamma_bg;
        // integral of e^{-g t'} over [0, t], exact at g = 0
        let s = if g == 0.0 { t } else { -(-g * t).exp_m1() / g };
        (-g * t).exp() / (1.0 + self.q * self.n0 * s)
    }
}

pub fn atom_number_schedule(n0: f64, gamma_bg: f64, q: f64) -> Result<AtomDecay> {
    ensure(n0 > 0.0 && n0.is_finite(), "n0", "must be finite and > 0")?;
    ensure(gamma_bg >= 0.0 && gamma_bg.is_finite(), "gamma_bg", "must be finite and >= 0")?;
    ensure(q >= 0.0 && q.is_finite(), "q", "must be finite and >= 0")?;
    Ok(AtomDecay { n0, gamma_bg, q })
}

/// Time dependence of `UN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnSchedule {
    Constant(f64),
    /// `UN(tau) = un0 * N(t)/N0` with `t = tau / gamma_c`.
    Decay { un0: f64, decay: AtomDecay, gamma_c: f64 },
    /// Linear interpolation in `(tau, UN)` knots, held constant outside.
    Table(Vec<(f64, f64)>),
}

impl UnSchedule {
    pub fn at(&self, tau: f64) -> f64 {
        match self {
            Self::Constant(u) => *u,
            Self::Decay { un0, decay, gamma_c } => un0 * decay.fraction((tau / gamma_c).max(0.0)),
            Self::Table(knots) => {
                let i = knots.partition_point(|&(t, _)| t <= tau);
                if i == 0 {
                    knots[0].1
                } else if i == knots.len() {
                    knots[i - 1].1
                } else {
                    let ((t0, u0), (t1, u1)) = (knots[i - 1], knots[i]);
                    u0 + (u1 - u0) * (tau - t0) / (t1 - t0)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Constant(u) => ensure(*u >= 0.0 && u.is_finite(), "un", "must be finite and >= 0"),
            Self::Decay { un0, decay, gamma_c } => {
                ensure(*un0 >= 0.0 && un0.is_finite(), "un0", "must be finite and >= 0")?;
                ensure(*gamma_c > 0.0, "gamma_c", "must be > 0")?;
                atom_number_schedule(decay.n0, decay.gamma_bg, decay.q).map(|_| ())
            }
            Self::Table(knots) => {
                ensure(!knots.is_empty(), "un_table", "needs at least one knot")?;
                ensure(knots.windows(2).all(|w| w[1].0 > w[0].0), "un_table", "tau must be strictly increasing")?;
                ensure(knots.iter().all(|k| k.1 >= 0.0 && k.1.is_finite()), "un_table", "UN must be finite and >= 0")
            }
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            Self::Table(k) => k.iter().map(|k| k.0).collect(),
            _ => Vec::new(),
        }
    }
}

/// Piecewise-constant pump settings, active from `tau_start` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSegment {
    pub tau_start: f64,
    pub chi0_minus: f64,
    pub i0_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSchedule {
    segments: Vec<DriveSegment>,
    un: UnSchedule,
}

impl DriveSchedule {
    pub fn constant(chi0_minus: f64, un: f64) -> Result<Self> {
        Self::new(
            vec![DriveSegment {
                tau_start: f64::NEG_INFINITY,
                chi0_minus,
                i0_factor: 1.0,
            }],
            UnSchedule::Constant(un),
        )
    }

    /// Segments must be sorted by `tau_start`; the first applies to all
    /// earlier times as well.
    pub fn new(segments: Vec<DriveSegment>, un: UnSchedule) -> Result<Self> {
        ensure(!segments.is_empty(), "segments", "need at least one drive segment")?;
        ensure(
            segments.windows(2).all(|w| w[1].tau_start > w[0].tau_start),
            "segments",
            "tau_start must be strictly increasing",
        )?;
        for s in &segments {
            DriveValues::new(s.chi0_minus, s.i0_factor, 0.0)?;
        }
        un.validate()?;
        Ok(Self { segments, un })
    }

    pub fn with_un(self, un: UnSchedule) -> Result<Self> {
        Self::new(self.segments, un)
    }

    pub fn segments(&self) -> &[DriveSegment] {
        &self.segments
    }

    pub fn un_schedule(&self) -> &UnSchedule {
        &self.un
    }

    fn segment_index(&self, tau: f64) -> usize {
        self.segments.partition_point(|s| s.tau_start <= tau).saturating_sub(1)
    }

    fn values_in(&self, seg: usize, tau: f64) -> DriveValues {
        let s = &self.segments[seg];
        DriveValues {
            chi0_minus: s.chi0_minus,
            chi0_plus: 1.0 - s.chi0_minus,
            i0_factor: s.i0_factor,
            un: self.un.at(tau),
        }
    }

    pub fn at(&self, tau: f64) -> DriveValues {
        self.values_in(self.segment_index(tau), tau)
    }

    /// Times in `(t0, t1)` where the right-hand side is not smooth.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .segments
            .iter()
            .map(|s| s.tau_start)
            .chain(self.un.knots())
            .filter(|&t| t > t0 && t < t1)
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub tau: f64,
    pub t_seconds: f64,
    pub chi_minus: f64,
    pub phi: f64,
    #[serde(rename = "UN")]
    pub un: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub flags: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldTrace {
    pub samples: Vec<TraceSample>,
    pub floor_events: usize,
    pub final_state: Option<FieldState>,
}

impl FieldTrace {
    pub fn tau(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tau).collect()
    }
    pub fn chi_minus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.chi_minus).collect()
    }
    pub fn t_seconds(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t_seconds).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateOptions {
    pub tolerances: Tolerances,
    pub a_min: f64,
    /// Output spacing in scaled time.
    pub stride: f64,
    /// Cavity half-linewidth, used only for the `t_seconds` column.
    pub gamma_c: f64,
}

impl IntegrateOptions {
    pub fn new(stride: f64, gamma_c: f64) -> Self {
        Self {
            tolerances: Tolerances::default(),
            a_min: A_MIN,
            stride,
            gamma_c,
        }
    }
}

/// Integrate the complex field equation over `tau_span` and sample it every
/// `opts.stride` (plus the end point). The integrator restarts at every
/// schedule breakpoint so that no step straddles a discontinuity.
pub fn integrate(
    initial: FieldState,
    schedule: &DriveSchedule,
    sp: &ScaledParams,
    tau_span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<FieldTrace> {
    let (t0, t1) = tau_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(invalid("tau_span", "must be finite with end > start"));
    }
    if !(opts.stride > 0.0) {
        return Err(invalid("stride", "must be > 0"));
    }
    if !(opts.gamma_c > 0.0) {
        return Err(invalid("gamma_c", "must be > 0"));
    }
    sp.validate()?;
    if !(initial.a.re.is_finite() && initial.a.im.is_finite()) {
        return Err(invalid("initial", "field must be finite"));
    }

    let n_out = ((t1 - t0) / opts.stride).floor() as usize;
    let mut outputs: Vec<f64> = (1..=n_out).map(|i| t0 + i as f64 * opts.stride).collect();
    if outputs.last().map_or(true, |&t| t1 - t > 1e-9 * opts.stride) {
        outputs.push(t1);
    } else if let Some(last) = outputs.last_mut() {
        *last = t1;
    }
    let breaks = schedule.breakpoints(t0, t1);

    let mut y = [initial.a.re, initial.a.im];
    let mut trace = FieldTrace {
        samples: Vec::with_capacity(outputs.len() + 1),
        ..FieldTrace::default()
    };
    let sample = |tau: f64, y: &[f64; 2], flags: u32| {
        let d = schedule.at(tau);
        let a = Complex64::new(y[0], y[1]);
        TraceSample {
            tau,
            t_seconds: tau / opts.gamma_c,
            chi_minus: a.norm_sqr(),
            phi: a.arg(),
            un: d.un,
            l: l_of(a.norm().max(opts.a_min), &d, sp),
            flags,
        }
    };
    trace.samples.push(sample(t0, &y, 0));

    let hit = Cell::new(false);
    let mut floor_events = 0usize;
    let mut ig = Dopri5::new(2, opts.tolerances);
    let mut t = t0;
    let mut seg = schedule.segment_index(t0);
    let mut bi = 0;
    for &t_out in &outputs {
        let mut flags = 0;
        while t < t_out {
            let t_next = match breaks.get(bi) {
                Some(&b) if b <= t_out => b,
                _ => t_out,
            };
            {
                let mut f = |tau: f64, s: &[f64], ds: &mut [f64]| {
                    let d = schedule.values_in(seg, tau);
                    let (da, clamped) =
                        rhs_complex_floored(FieldState::new(Complex64::new(s[0], s[1])), &d, sp, opts.a_min);
                    if clamped {
                        hit.set(true);
                    }
                    ds[0] = da.re;
                    ds[1] = da.im;
                };
                ig.advance(&mut f, &mut y, t, t_next)?;
            }
            if !(y[0].is_finite() && y[1].is_finite()) {
                return Err(Error::NonFinite {
                    tau: t_next,
                    what: "field".into(),
                });
            }
            t = t_next;
            if breaks.get(bi) == Some(&t_next) {
                bi += 1;
                seg = schedule.segment_index(t);
                ig.restart();
                flags |= FLAG_RESTART;
            }
        }
        if hit.replace(false) {
            flags |= FLAG_FLOOR;
            floor_events += 1;
        }
        trace.samples.push(sample(t_out, &y, flags));
    }
    trace.floor_events = floor_events;
    trace.final_state = Some(FieldState::new(Complex64::new(y[0], y[1])));
    Ok(trace)
}
