//! Physical constants, parameter records and the dimensional <-> scaled
//! conversions shared by every model in the crate.
//!
//! All model-internal time is the scaled time `tau = gamma_c * t`; seconds
//! only appear at I/O boundaries through [`to_seconds`] / [`to_scaled_time`].

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure, invalid, Result};

/// Reduced Planck constant (CODATA 2018), J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (CODATA 2018), J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Atomic mass unit (CODATA 2018), kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Speed of light, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

/// Mass of a 85Rb atom, kg.
pub const RB85_MASS: f64 = 84.911_789_738 * AMU;
/// Vacuum wavelength of the 85Rb D2 line, m.
pub const RB85_D2_WAVELENGTH: f64 = 780.241e-9;

/// Recoil frequency `hbar k^2 / 2m` in rad/s.
pub fn recoil_frequency(k: f64, mass: f64) -> f64 {
    HBAR * k * k / (2.0 * mass)
}

pub fn to_scaled_time(t_seconds: f64, gamma_c: f64) -> f64 {
    t_seconds * gamma_c
}

pub fn to_seconds(tau: f64, gamma_c: f64) -> f64 {
    tau / gamma_c
}

/// Dimensional cavity and atom constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Cavity field decay rate, 1/s.
    pub gamma_c: f64,
    /// Light shift per photon, 1/s.
    pub delta0: f64,
    /// Atom number.
    pub n_atoms: f64,
    /// Empty-cavity resonance, rad/s.
    pub omega_c: f64,
    /// Pump-cavity detuning, rad/s.
    pub delta_c: f64,
    /// Optical wavenumber, 1/m.
    pub k: f64,
    /// Mode radius (1/e^2 intensity), m.
    pub w0: f64,
    /// Atomic mass, kg.
    pub mass: f64,
    /// Recoil frequency, rad/s. Redundant with `k` and `mass`; checked by [`validate`](Self::validate).
    pub omega_r: f64,
}

impl PhysicalParams {
    pub fn new(gamma_c: f64, delta0: f64, n_atoms: f64, wavelength: f64, w0: f64, mass: f64) -> Self {
        let k = 2.0 * PI / wavelength;
        Self {
            gamma_c,
            delta0,
            n_atoms,
            omega_c: 2.0 * PI * C_LIGHT / wavelength,
            delta_c: 0.0,
            k,
            w0,
            mass,
            omega_r: recoil_frequency(k, mass),
        }
    }

    /// 85Rb in the strong-coupling configuration: 9.3 us photon lifetime
    /// (`1/2 gamma_c`), 0.091 1/s light shift per photon, 131.5 um mode
    /// radius (geometric mean of the sagittal and vertical waists).
    pub fn rb85() -> Self {
        Self::new(
            1.0 / (2.0 * 9.3e-6),
            0.091,
            2.36e6,
            RB85_D2_WAVELENGTH,
            131.5e-6,
            RB85_MASS,
        )
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.gamma_c > 0.0, "gamma_c", "must be > 0")?;
        ensure(self.w0 > 0.0, "w0", "must be > 0")?;
        ensure(self.k > 0.0, "k", "must be > 0")?;
        ensure(self.mass > 0.0, "mass", "must be > 0")?;
        ensure(self.n_atoms >= 0.0, "n_atoms", "must be >= 0")?;
        ensure(self.delta0.is_finite(), "delta0", "must be finite")?;
        let expected = recoil_frequency(self.k, self.mass);
        if ((self.omega_r - expected) / expected).abs() > 1e-12 {
            return Err(invalid(
                "omega_r",
                format!("{} inconsistent with hbar k^2/2m = {}", self.omega_r, expected),
            ));
        }
        Ok(())
    }

    /// Scaled single-atom interaction strength `U = delta0 / gamma_c`.
    pub fn u(&self) -> f64 {
        self.delta0 / self.gamma_c
    }
}

/// Split of the empty-cavity intensity between the two travelling-wave modes.
/// The split always sums to one; asymmetry lives in `chi0_minus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    pub chi0_plus: f64,
    pub chi0_minus: f64,
    /// Total empty-cavity intensity in photon-number units.
    pub i0: f64,
}

impl PumpConfig {
    pub fn new(chi0_minus: f64, i0: f64) -> Result<Self> {
        ensure(
            (0.0..=1.0).contains(&chi0_minus),
            "chi0_minus",
            "must lie in [0, 1]",
        )?;
        ensure(i0 >= 0.0, "i0", "must be >= 0")?;
        Ok(Self {
            chi0_plus: 1.0 - chi0_minus,
            chi0_minus,
            i0,
        })
    }

    pub fn symmetric(i0: f64) -> Self {
        Self {
            chi0_plus: 0.5,
            chi0_minus: 0.5,
            i0,
        }
    }

    /// Empty-cavity travelling-wave moduli `(|alpha_+|, |alpha_-|)`.
    pub fn empty_cavity_moduli(&self) -> (f64, f64) {
        ((self.chi0_plus * self.i0).sqrt(), (self.chi0_minus * self.i0).sqrt())
    }
}

/// Dimensionless parameters of the reduced field model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaledParams {
    /// Collective interaction strength `U N`.
    pub un: f64,
    /// Axial thermal energy over axial well depth at t = 0.
    pub eta_ax: f64,
    /// Radial thermal energy over antinode depth at t = 0.
    pub eta_rad: f64,
    /// Reference field modulus `|a(0)|`.
    pub a0_mod: f64,
}

impl ScaledParams {
    pub fn new(un: f64, eta_ax: f64, eta_rad: f64, a0_mod: f64) -> Result<Self> {
        let sp = Self {
            un,
            eta_ax,
            eta_rad,
            a0_mod,
        };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.un >= 0.0, "un", "must be >= 0")?;
        ensure(self.eta_ax >= 0.0, "eta_ax", "must be >= 0")?;
        ensure(self.eta_rad >= 0.0, "eta_rad", "must be >= 0")?;
        ensure(self.a0_mod >= 0.0, "a0_mod", "must be >= 0")
    }

    pub fn with_un(self, un: f64) -> Self {
        Self { un, ..self }
    }
}

/// Thermal state of the trapped sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleThermo {
    pub xi_ax: f64,
    pub xi_rad: f64,
    /// Axial temperature, K.
    pub t_ax: f64,
    /// Radial temperature, K.
    pub t_rad: f64,
    /// Axial vibrational frequency for symmetric pumping without atoms, rad/s.
    pub omega_v: f64,
}

/// Reduce dimensional parameters to the scaled model.
///
/// `eta_ax`/`eta_rad` are the sample temperatures over the empty-cavity
/// axial modulation depth and antinode depth; the reference field is the
/// empty-cavity unlocked amplitude `sqrt(chi0_minus)`.
pub fn scale_params(phys: &PhysicalParams, pump: &PumpConfig, thermo: &SampleThermo) -> Result<ScaledParams> {
    if !(phys.gamma_c > 0.0) {
        return Err(invalid("gamma_c", "must be > 0"));
    }
    phys.validate()?;
    let (ap, am) = pump.empty_cavity_moduli();
    let geom = trap_geometry(ap, am, phys);
    let v_antinode = antinode_depth(ap, am, phys.delta0);
    let eta = |t: f64, depth: f64, name: &'static str| -> Result<f64> {
        if t == 0.0 {
            Ok(0.0)
        } else if depth > 0.0 {
            Ok(K_B * t / depth)
        } else {
            Err(invalid(name, "finite temperature in a zero-depth trap"))
        }
    };
    ScaledParams::new(
        phys.n_atoms * phys.delta0 / phys.gamma_c,
        eta(thermo.t_ax, geom.well_depth, "t_ax")?,
        eta(thermo.t_rad, v_antinode, "t_rad")?,
        pump.chi0_minus.sqrt(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapGeometry {
    /// Peak-to-peak axial modulation depth, J.
    pub well_depth: f64,
    /// Axial vibrational frequency, Hz.
    pub nu_ax: f64,
    /// Radial vibrational frequency, Hz.
    pub nu_rad: f64,
}

/// On-axis antinode depth `hbar |delta0| (|alpha_+| + |alpha_-|)^2`, J.
pub fn antinode_depth(alpha_plus_mod: f64, alpha_minus_mod: f64, delta0: f64) -> f64 {
    let s = alpha_plus_mod + alpha_minus_mod;
    HBAR * delta0.abs() * s * s
}

/// Harmonic trap frequencies of the standing-wave lattice formed by two
/// travelling waves of moduli `|alpha_+|`, `|alpha_-|` (photon-number units).
pub fn trap_geometry(alpha_plus_mod: f64, alpha_minus_mod: f64, phys: &PhysicalParams) -> TrapGeometry {
    let depth = 4.0 * HBAR * phys.delta0.abs() * alpha_plus_mod * alpha_minus_mod;
    let omega_ax = phys.k * (2.0 * depth / phys.mass).sqrt();
    let v_an = antinode_depth(alpha_plus_mod, alpha_minus_mod, phys.delta0);
    let omega_rad = (2.0 / phys.w0) * (v_an / phys.mass).sqrt();
    TrapGeometry {
        well_depth: depth,
        nu_ax: omega_ax / (2.0 * PI),
        nu_rad: omega_rad / (2.0 * PI),
    }
}

/// Light-shift energy scale `hbar delta0 I0` that yields the axial
/// frequency `nu_v` (Hz) for symmetric pumping of an empty cavity.
pub fn energy_scale_for_axial_frequency(nu_v: f64, k: f64, mass: f64) -> f64 {
    let omega = 2.0 * PI * nu_v;
    mass * omega * omega / (4.0 * k * k)
}
