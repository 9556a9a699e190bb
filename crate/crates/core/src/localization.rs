//! Atom-field overlap quantities: the complex localization parameter `g`,
//! radial bunching `g_r`, and the adiabatic localization factors built on
//! the Gaussian-well ansatz.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ScaledParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationState {
    pub g: Complex64,
    pub g_r: f64,
}

impl LocalizationState {
    pub fn g_mod(&self) -> f64 {
        self.g.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub sigma_z: f64,
    pub sigma_r: f64,
    pub z_cm: f64,
}

/// Composite coefficients of the phase-parameterized localization factor
/// `L~(phi)`. In Boltzmann-factor terms `ax = xi_ax w_R / w_V` and
/// `rad = 8 xi_rad w_R / (k w0 w_V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationKnobs {
    pub ax: f64,
    pub rad: f64,
}

impl LocalizationKnobs {
    pub fn from_boltzmann_factors(xi_ax: f64, xi_rad: f64, omega_r: f64, omega_v: f64, k: f64, w0: f64) -> Self {
        Self {
            ax: xi_ax * omega_r / omega_v,
            rad: 8.0 * xi_rad * omega_r / (k * w0 * omega_v),
        }
    }
}

/// Per-atom contribution `exp(-2i k z - 2 r^2 / w0^2)` split into its
/// complex backscatter weight and its real radial weight.
#[inline]
pub(crate) fn atom_weights(pos: &[f64; 3], k: f64, w0: f64) -> (Complex64, f64) {
    let radial = (-2.0 * (pos[0] * pos[0] + pos[1] * pos[1]) / (w0 * w0)).exp();
    let (s, c) = (2.0 * k * pos[2]).sin_cos();
    (Complex64::new(radial * c, -radial * s), radial)
}

/// Ensemble averages `g = <exp(-2ikz - 2r^2/w0^2)>` and `g_r = <exp(-2r^2/w0^2)>`.
pub fn discrete_localization(positions: &[[f64; 3]], k: f64, w0: f64) -> Result<LocalizationState> {
    if positions.is_empty() {
        return Err(Error::Empty("position list"));
    }
    let (mut g, mut g_r) = (Complex64::new(0.0, 0.0), 0.0);
    for p in positions {
        let (gb, gr) = atom_weights(p, k, w0);
        g += gb;
        g_r += gr;
    }
    let n = positions.len() as f64;
    Ok(LocalizationState { g: g / n, g_r: g_r / n })
}

/// Closed form for uncorrelated Gaussian axial/radial distributions.
pub fn gaussian_localization(m: &GaussianMoments, k: f64, w0: f64) -> LocalizationState {
    let g_r = 1.0 / (1.0 + 4.0 * m.sigma_r * m.sigma_r / (w0 * w0));
    let modulus = g_r * (-2.0 * k * k * m.sigma_z * m.sigma_z).exp();
    LocalizationState {
        g: Complex64::from_polar(modulus, -2.0 * k * m.z_cm),
        g_r,
    }
}

/// Adiabatic localization factor of the reduced field model,
/// `L(|a|) = exp(-eta_ax sqrt(|a0|/|a|)) / (1 + eta_rad (sqrt(chi0+) + |a0|) / (sqrt(chi0+) + |a|))`.
pub fn adiabatic_l(a_mod: f64, sp: &ScaledParams, chi0_plus: f64) -> Result<f64> {
    if !(a_mod > 0.0) {
        return Err(Error::SingularField { a_mod });
    }
    Ok(localization_factor(a_mod, 1.0, sp, chi0_plus))
}

/// Localization factor with the total pump power scaled by `i0_factor`.
///
/// Thermal-to-depth ratios follow the adiabatic-invariant scaling: the
/// axial depth goes as `sqrt(f chi0+) |a|`, the radial antinode depth as
/// `(sqrt(f chi0+) + |a|)^2`, both referenced to `f = 1`, `|a| = |a0|`.
/// Callers guarantee `a_mod > 0` and `i0_factor > 0`.
pub(crate) fn localization_factor(a_mod: f64, i0_factor: f64, sp: &ScaledParams, chi0_plus: f64) -> f64 {
    let sp_plus = chi0_plus.sqrt();
    let sf = i0_factor.sqrt();
    let axial = if sp.eta_ax == 0.0 {
        1.0
    } else {
        (-sp.eta_ax * (sp.a0_mod / (sf * a_mod)).sqrt()).exp()
    };
    axial / (1.0 + sp.eta_rad * (sp_plus + sp.a0_mod) / (sf * sp_plus + a_mod))
}

/// Phase-parameterized localization factor `L~(phi)` of the eliminated flow.
pub fn ltilde(phi: f64, knobs: &LocalizationKnobs, chi0_plus: f64, chi0_minus: f64) -> Result<f64> {
    let c = phi.cos();
    if !(phi.abs() < std::f64::consts::FRAC_PI_2) || c <= 0.0 {
        return Err(Error::PhaseDomain { phi });
    }
    Ok(ltilde_unchecked(c, knobs, chi0_plus, chi0_minus))
}

#[inline]
pub(crate) fn ltilde_unchecked(cos_phi: f64, knobs: &LocalizationKnobs, chi0_plus: f64, chi0_minus: f64) -> f64 {
    let axial = if knobs.ax == 0.0 {
        1.0
    } else {
        (-knobs.ax * (8.0 / ((chi0_plus * chi0_minus).sqrt() * cos_phi)).sqrt()).exp()
    };
    axial / (1.0 + knobs.rad / (chi0_plus.sqrt() + chi0_minus.sqrt() * cos_phi))
}

/// Knobs that make `L~(phi)` coincide with `L(sqrt(chi0-) cos phi)`.
pub fn knobs_from_eta(sp: &ScaledParams, chi0_plus: f64) -> LocalizationKnobs {
    LocalizationKnobs {
        ax: sp.eta_ax * (sp.a0_mod * chi0_plus.sqrt() / 8.0).sqrt(),
        rad: sp.eta_rad * (chi0_plus.sqrt() + sp.a0_mod),
    }
}

/// Frequency shifts `N delta0 (1 +- |g|)` of the lattice-supporting and the
/// empty eigenmode, in the units of `n_delta0`.
pub fn mode_splitting(n_delta0: f64, g_mod: f64) -> (f64, f64) {
    (n_delta0 * (1.0 + g_mod), n_delta0 * (1.0 - g_mod))
}

/// First-order refractive indices `n_pm = 1 + N delta0/omega_c (1 + |g| |alpha_mp / alpha_pm|)`.
pub fn refractive_indices(
    n_atoms: f64,
    delta0: f64,
    omega_c: f64,
    g_mod: f64,
    alpha_plus_mod: f64,
    alpha_minus_mod: f64,
) -> Result<(f64, f64)> {
    if !(alpha_plus_mod > 0.0) {
        return Err(Error::SingularField { a_mod: alpha_plus_mod });
    }
    if !(alpha_minus_mod > 0.0) {
        return Err(Error::SingularField { a_mod: alpha_minus_mod });
    }
    let base = n_atoms * delta0 / omega_c;
    Ok((
        1.0 + base * (1.0 + g_mod * alpha_minus_mod / alpha_plus_mod),
        1.0 + base * (1.0 + g_mod * alpha_plus_mod / alpha_minus_mod),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const K: f64 = 2.0 * PI / 780e-9;
    const W0: f64 = 130e-6;

    #[test]
    fn single_atom_at_origin() {
        let s = discrete_localization(&[[0.0; 3]], K, W0).unwrap();
        assert_eq!(s.g, Complex64::new(1.0, 0.0));
        assert_eq!(s.g_r, 1.0);
    }

    #[test]
    fn quarter_wave_pair_cancels() {
        let s = discrete_localization(&[[0.0; 3], [0.0, 0.0, PI / (2.0 * K)]], K, W0).unwrap();
        assert!(s.g.norm() < 1e-15);
        assert_eq!(s.g_r, 1.0);
    }

    #[test]
    fn empty_positions_rejected() {
        assert_eq!(discrete_localization(&[], K, W0), Err(Error::Empty("position list")));
    }

    #[test]
    fn gaussian_closed_forms() {
        let perfect = gaussian_localization(&GaussianMoments { sigma_z: 0.0, sigma_r: 0.0, z_cm: 0.0 }, K, W0);
        assert_eq!(perfect.g, Complex64::new(1.0, 0.0));

        let m = GaussianMoments { sigma_z: 0.5 / K, sigma_r: W0 / 2.0, z_cm: 0.0 };
        let s = gaussian_localization(&m, K, W0);
        assert!((s.g.norm() - 0.303_265_329_856_316_7).abs() < 1e-12);
        assert!((s.g_r - 0.5).abs() < 1e-15);

        let shifted = gaussian_localization(&GaussianMoments { sigma_z: 0.0, sigma_r: 0.0, z_cm: PI / (2.0 * K) }, K, W0);
        assert!((shifted.g - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn adiabatic_l_values() {
        let cold = ScaledParams::new(2.0, 0.0, 0.0, 0.7).unwrap();
        for a in [1e-3, 0.3, 5.0] {
            assert_eq!(adiabatic_l(a, &cold, 0.5).unwrap(), 1.0);
        }
        let chi_p: f64 = 0.5;
        let sp = ScaledParams::new(2.0, 0.5, 0.3, chi_p.sqrt()).unwrap();
        let l = adiabatic_l(chi_p.sqrt(), &sp, chi_p).unwrap();
        assert!((l - (-0.5f64).exp() / 1.3).abs() < 1e-12, "L = {l}");
        assert!((l - 0.46656).abs() < 1e-5);

        // both suppressions vanish for a strong backward field
        let far = adiabatic_l(1e12, &sp, chi_p).unwrap();
        assert!((far - 1.0).abs() < 1e-5);
        assert!(matches!(adiabatic_l(0.0, &sp, chi_p), Err(Error::SingularField { .. })));
    }

    #[test]
    fn ltilde_limits_and_domain() {
        let zero = LocalizationKnobs { ax: 0.0, rad: 0.0 };
        assert_eq!(ltilde(0.3, &zero, 0.52, 0.48).unwrap(), 1.0);
        let knobs = LocalizationKnobs { ax: 0.2, rad: 0.4 };
        assert!(ltilde(FRAC_PI_2 - 1e-12, &knobs, 0.52, 0.48).unwrap() < 1e-30);
        assert!(ltilde(-FRAC_PI_2 + 1e-12, &knobs, 0.52, 0.48).unwrap() < 1e-30);
        assert!(ltilde(FRAC_PI_2, &knobs, 0.52, 0.48).is_err());
        assert!(ltilde(-2.0, &knobs, 0.52, 0.48).is_err());
    }

    #[test]
    fn knobs_values() {
        let zero = ScaledParams::new(1.0, 0.0, 0.0, 0.5).unwrap();
        assert_eq!(knobs_from_eta(&zero, 0.5), LocalizationKnobs { ax: 0.0, rad: 0.0 });

        // eta_ax = 0.5, |a0| = sqrt(chi0+) = sqrt(0.5):
        // ax = 0.5 sqrt(0.5 / 8) = 0.125, rad = 0.3 * 2 sqrt(0.5).
        let sp = ScaledParams::new(1.0, 0.5, 0.3, 0.5f64.sqrt()).unwrap();
        let k = knobs_from_eta(&sp, 0.5);
        assert!((k.ax - 0.125).abs() < 1e-15);
        assert!((k.rad - 0.6 * 0.5f64.sqrt()).abs() < 1e-15);
        let l = ltilde(0.0, &k, 0.5, 0.5).unwrap();
        assert!((l - adiabatic_l(0.5f64.sqrt(), &sp, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn splitting_and_indices() {
        assert_eq!(mode_splitting(3.0, 0.0), (3.0, 3.0));
        assert_eq!(mode_splitting(3.0, 1.0), (6.0, 0.0));
        let (hi, lo) = mode_splitting(2.15e5, 0.4);
        assert!((hi - lo - 1.72e5).abs() < 1e-6);

        let (np, nm) = refractive_indices(1e6, 0.1, 1e15, 0.0, 1.0, 3.0).unwrap();
        assert_eq!(np, nm);
        assert_eq!(np, 1.0 + 1e6 * 0.1 / 1e15);
        let (np, nm) = refractive_indices(1e6, 0.1, 1e15, 0.7, 2.0, 2.0).unwrap();
        assert_eq!(np, nm);
        let base = 1e6 * 0.1 / 1e15;
        let (np, nm) = refractive_indices(1e6, 0.1, 1e15, 0.5, 1.0, 2.0).unwrap();
        assert!(((np - 1.0) - base * 2.0).abs() < 1e-15);
        assert!(((nm - 1.0) - base * 1.25).abs() < 1e-15);
        assert!(refractive_indices(1e6, 0.1, 1e15, 0.5, 0.0, 2.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn positions() -> impl Strategy<Value = Vec<[f64; 3]>> {
            prop::collection::vec(
                (-2.0 * W0..2.0 * W0, -2.0 * W0..2.0 * W0, -5e-6f64..5e-6).prop_map(|(x, y, z)| [x, y, z]),
                1..64,
            )
        }

        proptest! {
            #[test]
            fn bounds(ps in positions()) {
                let s = discrete_localization(&ps, K, W0).unwrap();
                prop_assert!(s.g.norm() <= s.g_r + 1e-12);
                prop_assert!(s.g_r <= 1.0);
            }

            #[test]
            fn half_wavelength_translation(ps in positions(), n in -3i32..4) {
                let a = discrete_localization(&ps, K, W0).unwrap();
                let shift = n as f64 * PI / K;
                let moved: Vec<_> = ps.iter().map(|p| [p[0], p[1], p[2] + shift]).collect();
                let b = discrete_localization(&moved, K, W0).unwrap();
                prop_assert!((a.g.norm() - b.g.norm()).abs() < 1e-9);
            }

            #[test]
            fn l_monotone_in_field(a in 1e-3f64..3.0, da in 1e-6f64..1.0, ea in 0.0f64..2.0, er in 0.0f64..2.0, a0 in 0.0f64..1.0, chi in 0.01f64..0.99) {
                let sp = ScaledParams::new(1.0, ea, er, a0).unwrap();
                prop_assert!(adiabatic_l(a + da, &sp, chi).unwrap() >= adiabatic_l(a, &sp, chi).unwrap());
            }

            #[test]
            fn ltilde_matches_l(phi in -1.5f64..1.5, ea in 0.0f64..2.0, er in 0.0f64..2.0, a0 in 0.0f64..1.0, chi_m in 0.01f64..0.99) {
                let chi_p = 1.0 - chi_m;
                let sp = ScaledParams::new(1.0, ea, er, a0).unwrap();
                let lt = ltilde(phi, &knobs_from_eta(&sp, chi_p), chi_p, chi_m).unwrap();
                let l = adiabatic_l(chi_m.sqrt() * phi.cos(), &sp, chi_p).unwrap();
                prop_assert!((lt - l).abs() < 1e-12, "{} vs {}", lt, l);
            }
        }
    }
}
