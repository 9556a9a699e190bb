//! Particle-ensemble initialization, rescaling and conservation checks.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ringlat_core::adiabatic::DriveSchedule;
use ringlat_core::full::*;
use ringlat_core::localization::{discrete_localization, gaussian_localization, GaussianMoments};
use ringlat_core::params::{PhysicalParams, PumpConfig};

fn model() -> FullModel {
    FullModel::from_axial_frequency(&PhysicalParams::rb85(), 550e3)
}

#[test]
fn monte_carlo_localization_converges_to_gaussian_form() {
    let (k, w0) = (2.0 * std::f64::consts::PI / 780e-9, 100e-6);
    let (sz, sr) = (0.5 / k, w0 / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let nz = Normal::new(0.0, sz).unwrap();
    // per-coordinate rms w0/2: <exp(-2 x^2/w0^2)> = 1/sqrt(2) per axis
    let nr = Normal::new(0.0, sr).unwrap();
    let pos: Vec<[f64; 3]> = (0..1000).map(|_| [nr.sample(&mut rng), nr.sample(&mut rng), nz.sample(&mut rng)]).collect();
    let g = discrete_localization(&pos, k, w0).unwrap();
    let expect = gaussian_localization(&GaussianMoments { sigma_z: sz, sigma_r: sr, z_cm: 0.0 }, k, w0);
    assert!((expect.g_mod() - (-0.5f64).exp() / 2.0).abs() < 1e-12);
    // per-atom terms are bounded by 1, so 4/sqrt(N) is a generous bound
    assert!((g.g_mod() - expect.g_mod()).abs() < 4.0 / 1000f64.sqrt(), "{} vs {}", g.g_mod(), expect.g_mod());
    assert!((g.g_r - 0.5).abs() < 4.0 / 1000f64.sqrt());
}

#[test]
fn initial_moments_match_the_ensemble_parameters() {
    let m = model();
    let p = 0.5f64.sqrt();
    let spec = EnsembleSpec::from_boltzmann_ratios(20000, 0.5, 0.3, p, Complex64::new(p, 0.0), &m).unwrap();
    let e = init_ensemble(8, &spec, m.mass).unwrap();
    let n = e.len() as f64;
    let rms = |f: &dyn Fn(usize) -> f64| ((0..e.len()).map(|i| f(i).powi(2)).sum::<f64>() / n).sqrt();
    let kb = 1.380649e-23;
    let checks = [
        (rms(&|i| e.positions[i][0]), spec.sigma_r),
        (rms(&|i| e.positions[i][2] - spec.z_center), spec.sigma_z),
        (rms(&|i| e.momenta[i][1]), (m.mass * kb * spec.t_rad).sqrt()),
        (rms(&|i| e.momenta[i][2]), (m.mass * kb * spec.t_ax).sqrt()),
    ];
    // relative standard error of an rms estimate is 1/sqrt(2N)
    for (got, want) in checks {
        assert!((got / want - 1.0).abs() < 4.0 / (2.0 * n).sqrt(), "{got} vs {want}");
    }
}

#[test]
fn temperature_scaling_and_calibration() {
    let m = model();
    let p = 0.5f64.sqrt();
    let a = Complex64::new(0.2, 0.1);
    let spec = EnsembleSpec::from_boltzmann_ratios(100, 0.5, 0.3, p, a, &m).unwrap();
    let hot = spec.with_temperature_scale(4.0);
    assert!((hot.sigma_z / spec.sigma_z - 2.0).abs() < 1e-12);
    assert!((hot.t_rad / spec.t_rad - 4.0).abs() < 1e-12);
    assert_eq!(hot.z_center, spec.z_center);

    let lat = BindingLattice { p, a, model: &m };
    let cal = calibrate_localization(&spec, &lat, 0.4, 4096, 3).unwrap();
    assert!((cal.pilot_g - 0.4).abs() < 1e-3, "{cal:?}");
    let colder = calibrate_localization(&spec, &lat, 0.5, 4096, 3).unwrap();
    assert!(colder.temperature_scale < cal.temperature_scale);
    assert!(calibrate_localization(&spec, &lat, 1.5, 512, 3).is_err());
}

#[test]
fn rescaled_plans_share_the_collective_coupling() {
    let phys = PhysicalParams::rb85();
    let pump = PumpConfig::new(0.49, 1.0).unwrap();
    let uns: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| rescale_for_simulation(2.36e6, n, &phys, &pump).unwrap().un(phys.gamma_c))
        .collect();
    for u in &uns {
        assert!((u / uns[0] - 1.0).abs() < 1e-12);
    }
    assert!((uns[0] - 2.36e6 * phys.delta0 / phys.gamma_c).abs() < 1e-9 * uns[0]);
}

#[test]
fn frozen_field_energy_drift_over_ten_thousand_steps() {
    let m = model();
    let p = 0.5f64.sqrt();
    let a = Complex64::new(p, 0.0);
    let spec = EnsembleSpec::from_boltzmann_ratios(20, 0.5, 0.3, p, a, &m).unwrap();
    let (e, _) = init_bound_ensemble(4, &spec, &BindingLattice { p, a, model: &m }).unwrap();
    let dt = m.default_dt();
    let opts = FullOptions {
        dt,
        stride: dt * 1000.0,
        integrator: FullIntegrator::Dop853,
        frozen_field: true,
    };
    let sched = DriveSchedule::constant(0.5, 2.0).unwrap();
    let run = integrate_full(&e, a, &sched, &m, (0.0, dt * 1e4), &opts).unwrap();
    assert_eq!(run.steps, 10_000);
    let (e0, e1) = (total_energy(&e, p, a, &m), total_energy(&run.ensemble, p, a, &m));
    assert!(((e1 - e0) / e0).abs() < 1e-6, "drift {}", (e1 - e0) / e0);
}

#[test]
fn analytic_forces_match_finite_differences() {
    let m = model();
    let p = 0.6f64;
    let a = Complex64::from_polar(0.5, 0.3);
    let spec = EnsembleSpec::from_boltzmann_ratios(30, 0.5, 0.3, p, a, &m).unwrap();
    let e = init_ensemble(6, &spec, m.mass).unwrap();
    let f = forces(&e, p, a, &m);
    let pot = |x: [f64; 3]| {
        // potential from the energy of a single, momentum-free atom
        let one = ParticleEnsemble::new(vec![x], vec![[0.0; 3]]).unwrap();
        total_energy(&one, p, a, &m)
    };
    for (i, x) in e.positions.iter().enumerate() {
        for d in 0..3 {
            let h = if d == 2 { 1e-4 / m.k } else { 1e-4 * m.w0 };
            let (mut xp, mut xm) = (*x, *x);
            xp[d] += h;
            xm[d] -= h;
            let fd = -(pot(xp) - pot(xm)) / (2.0 * h);
            let scale = f[i].iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            assert!((fd - f[i][d]).abs() < 1e-6 * scale, "atom {i} axis {d}: {fd} vs {}", f[i][d]);
        }
    }
}
