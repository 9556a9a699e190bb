//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs the heavy scenarios in-process (about 5 min).

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ringlat::config::{load_str, Config};
use ringlat::scenarios::{self, fig10, fig2, fig5, fig7, fig8, noise, xval};
use ringlat_core::adiabatic::*;
use ringlat_core::bistability::{steady_states_with, ScanOptions};
use ringlat_core::full::{
    forces, init_bound_ensemble, init_ensemble, integrate_full, total_energy, BindingLattice, EnsembleSpec,
    FullIntegrator, FullModel, FullOptions, ParticleEnsemble,
};
use ringlat_core::localization::{adiabatic_l, knobs_from_eta, ltilde};
use ringlat_core::ode::{Dopri5, Tolerances};
use ringlat_core::params::{PhysicalParams, ScaledParams};
use ringlat_core::thermo::psd_one_sided;

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn cfg(sets: &[&str]) -> Config {
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    load_str(None, &sets).expect("override")
}

fn diagram() -> Check {
    let start = Instant::now();
    let r = fig2::compute(&Config::default())?;
    let secs = start.elapsed().as_secs_f64();
    let d48 = r.diagram(0.48).ok_or("no 48% diagram")?;
    let (lo, hi) = match &d48.range {
        Some(w) => (w.un_low, w.un_high.unwrap_or(f64::INFINITY)),
        None => (f64::NAN, f64::NAN),
    };
    let mono38 = r.diagram(0.38).ok_or("no 38% diagram")?.range.is_none() && r.un_max >= 6.0;
    let th = r.threshold.unwrap_or(f64::NAN);
    let ok = within(lo, 2.0, 0.5) && within(hi, 3.0, 0.7) && mono38 && (0.40..=0.48).contains(&th) && secs < 10.0;
    Ok((
        ok,
        format!("48%: folds {lo:.3} / {hi:.3}; 38% monostable: {mono38}; threshold {th:.4}; {secs:.1} s"),
    ))
}

fn unbounded() -> Check {
    let r = fig2::compute(&cfg(&["fig2.chi0_minus=[0.50, 0.51, 0.55]", "fig2.threshold_scan=[0.45]"]))?;
    let mut parts = Vec::new();
    let mut ok = r.un_ceiling >= 20.0;
    for d in &r.diagrams {
        let open = matches!(d.range_to_ceiling, Some(w) if w.un_high.is_none());
        ok &= open;
        parts.push(format!("{:.0}%: {}", 100.0 * d.chi0_minus, if open { "open" } else { "closed" }));
    }
    Ok((ok, format!("{} up to UN = {}", parts.join(", "), r.un_ceiling)))
}

fn symmetric() -> Check {
    let h = 0.5f64.sqrt();
    let mut worst: f64 = 0.0;
    for un in [0.0, 1.0, 5.0] {
        let sp = ScaledParams::new(un, 0.5, 0.3, h)?;
        let sched = DriveSchedule::constant(0.5, un)?;
        let tr = integrate(
            FieldState::new(Complex64::new(h, 0.0)),
            &sched,
            &sp,
            (0.0, 100.0),
            &IntegrateOptions::new(0.5, 5e4),
        )?;
        for s in &tr.samples {
            worst = worst.max((s.chi_minus.sqrt() - h).abs()).max(s.phi.abs());
        }
    }
    Ok((worst < 1e-8, format!("max deviation {worst:.2e}")))
}

fn jumps() -> Check {
    let start = Instant::now();
    let r = fig7::compute(&Config::default())?;
    let secs = start.elapsed().as_secs_f64();
    let t = |cm| r.case(cm).and_then(|c| c.jump_time).unwrap_or(f64::NAN);
    let (t49, t46, t43) = (t(0.49), t(0.46), t(0.43));
    let low_start = r.case(0.49).map(|c| c.chi_initial < 0.1 * c.chi0_minus).unwrap_or(false);
    let ok = low_start && within(t49, 0.020, 0.010) && t49 < t46 && t46 < t43 && secs < 30.0;
    Ok((
        ok,
        format!(
            "jump at {:.2} / {:.2} / {:.2} ms (49/46/43%); starts low: {low_start}; {secs:.1} s",
            1e3 * t49,
            1e3 * t46,
            1e3 * t43
        ),
    ))
}

fn step() -> Check {
    let c = Config::default();
    let r = fig8::compute(&c)?;
    let during = r.t_min > 0.0 && r.t_min < c.fig8.t_restore;
    let ok = during && r.chi_min < r.chi_pre && r.chi_step > r.chi_pre && (r.chi_final / r.chi_pre - 1.0).abs() < 0.1;
    Ok((
        ok,
        format!(
            "pre {:.4}, min {:.4} at {:.2} ms, step {:.4}, final {:.4}",
            r.chi_pre,
            r.chi_min,
            1e3 * r.t_min,
            r.chi_step,
            r.chi_final
        ),
    ))
}

fn breathing() -> Check {
    let c = Config::default();
    let start = Instant::now();
    let r = fig10::compute(&c)?;
    let secs = start.elapsed().as_secs_f64();
    let f = r.breathing.map(|p| p.frequency).unwrap_or(f64::NAN);
    let ratio = r.ratio_to_twice_radial.unwrap_or(f64::NAN);
    let k = r.depth_exponent.unwrap_or(f64::NAN);
    let phase = r.phase_mean.unwrap_or(f64::NAN);
    let span = c.fig10.depth_factors.iter().cloned().fold(f64::MIN, f64::max)
        / c.fig10.depth_factors.iter().cloned().fold(f64::MAX, f64::min);
    let ok_f = within(f, 1000.0, 300.0);
    let ok_ratio = within(ratio, 1.0, 0.25);
    let ok_k = within(k, 0.5, 0.1) && span >= 4.0;
    let ok_phase = within(phase.abs(), PI, 0.3);
    let ok_time = secs < 300.0;
    let flag = |b: bool| if b { "ok" } else { "FAIL" };
    Ok((
        ok_f && ok_ratio && ok_k && ok_phase && ok_time,
        format!(
            "peak {f:.0} Hz [{}]; radial {:.0} Hz, ratio {ratio:.3} [{}]; exponent {k:.3} over {span:.1}x [{}]; \
             phase {phase:.3} rad [{}]; {secs:.0} s [{}]",
            flag(ok_f),
            r.radial.map(|p| p.frequency).unwrap_or(f64::NAN),
            flag(ok_ratio),
            flag(ok_k),
            flag(ok_phase),
            flag(ok_time)
        ),
    ))
}

fn cross_validation() -> Check {
    let c = Config::default();
    let r = xval::compute(&c)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for case in &r.cases {
        let run = case.primary(c.xval.n_sim).ok_or("primary run missing")?;
        let rms: Vec<String> = run
            .windows
            .iter()
            .map(|w| {
                ok &= w.rms_relative < 0.1;
                format!("{:.3}", w.rms_relative)
            })
            .collect();
        parts.push(format!(
            "{:.0}%: plateau rms [{}], jump full {} vs adiabatic {}",
            100.0 * case.chi0_minus,
            rms.join(", "),
            ms(run.jump_time),
            ms(case.adiabatic_jump_time)
        ));
    }
    let spread: Vec<String> = r
        .n_sim_spread
        .iter()
        .map(|s| {
            ok &= *s < 0.05;
            format!("{s:.3}")
        })
        .collect();
    parts.push(format!("N_sim spread [{}]", spread.join(", ")));
    Ok((ok, parts.join("; ")))
}

fn ms(t: Option<f64>) -> String {
    t.map(|t| format!("{:.2} ms", 1e3 * t)).unwrap_or_else(|| "none".into())
}

fn oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut polar: f64 = 0.0;
    for _ in 0..1000 {
        let cm: f64 = rng.gen_range(0.05..0.95);
        let un: f64 = rng.gen_range(0.0..8.0);
        let sp = ScaledParams::new(un, rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.05..1.0))?;
        let d = DriveValues::new(cm, rng.gen_range(0.2..2.0), un)?;
        let (m, phi) = (rng.gen_range(1e-3..2.0), rng.gen_range(-3.1..3.1));
        let rot = rhs_complex(FieldState::from_polar(m, phi), &d, &sp) * Complex64::from_polar(1.0, -phi);
        let (dm, dp) = rhs_phase_amplitude(m, phi, &d, &sp)?;
        polar = polar.max((rot.re - dm).abs() / (1.0 + dm.abs())).max((rot.im / m - dp).abs() / (1.0 + dp.abs()));
    }

    let opts = ScanOptions {
        form: EliminationForm::Exact,
        ..ScanOptions::default()
    };
    let mut roots: f64 = 0.0;
    for cm in [0.36f64, 0.43, 0.46, 0.49, 0.5, 0.51] {
        for un in [0.0, 0.5, 1.75, 2.38, 3.0, 5.0] {
            let sp = ScaledParams::new(un, 0.5, 0.3, cm.sqrt())?;
            let k = knobs_from_eta(&sp, 1.0 - cm);
            let d = DriveValues::new(cm, 1.0, un)?;
            for s in steady_states_with(un, cm, &k, &opts)? {
                roots = roots.max(rhs_complex(FieldState::from_polar(s.a_mod, s.phi), &d, &sp).norm());
            }
        }
    }

    let mut lt: f64 = 0.0;
    for _ in 0..1000 {
        let cm: f64 = rng.gen_range(0.01..0.99);
        let sp = ScaledParams::new(1.0, rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0))?;
        let phi: f64 = rng.gen_range(-1.5..1.5);
        let k = knobs_from_eta(&sp, 1.0 - cm);
        lt = lt.max((ltilde(phi, &k, 1.0 - cm, cm)? - adiabatic_l(cm.sqrt() * phi.cos(), &sp, 1.0 - cm)?).abs());
    }

    let model = FullModel::from_axial_frequency(&PhysicalParams::rb85(), 550e3);
    let (p, a) = (0.6, Complex64::from_polar(0.5, 0.3));
    let spec = EnsembleSpec::from_boltzmann_ratios(30, 0.5, 0.3, p, a, &model)?;
    let ens = init_ensemble(6, &spec, model.mass)?;
    let f = forces(&ens, p, a, &model);
    let mut fd_err: f64 = 0.0;
    for (i, x) in ens.positions.iter().enumerate() {
        let scale = f[i].iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        for d in 0..3 {
            let h = if d == 2 { 1e-4 / model.k } else { 1e-4 * model.w0 };
            let (mut xp, mut xm) = (*x, *x);
            xp[d] += h;
            xm[d] -= h;
            let pot = |y: [f64; 3]| -> Result<f64, ringlat_core::Error> {
                Ok(total_energy(&ParticleEnsemble::new(vec![y], vec![[0.0; 3]])?, p, a, &model))
            };
            let fd = -(pot(xp)? - pot(xm)?) / (2.0 * h);
            fd_err = fd_err.max((fd - f[i][d]).abs() / scale);
        }
    }

    let h = 0.5f64.sqrt();
    let a = Complex64::new(h, 0.0);
    let spec = EnsembleSpec::from_boltzmann_ratios(20, 0.5, 0.3, h, a, &model)?;
    let (e0, _) = init_bound_ensemble(4, &spec, &BindingLattice { p: h, a, model: &model })?;
    let dt = model.default_dt();
    let fo = FullOptions {
        dt,
        stride: dt * 1000.0,
        integrator: FullIntegrator::Dop853,
        frozen_field: true,
    };
    let run = integrate_full(&e0, a, &DriveSchedule::constant(0.5, 2.0)?, &model, (0.0, dt * 1e4), &fo)?;
    let (en0, en1) = (total_energy(&e0, h, a, &model), total_energy(&run.ensemble, h, a, &model));
    let drift = ((en1 - en0) / en0).abs();

    let sp = ScaledParams::new(0.0, 0.5, 0.3, 0.5)?;
    let a0 = Complex64::new(0.2, -0.4);
    let sched = DriveSchedule::new(
        vec![DriveSegment {
            tau_start: 0.0,
            chi0_minus: 0.3,
            i0_factor: 0.5,
        }],
        UnSchedule::Constant(0.0),
    )?;
    let tr = integrate(FieldState::new(a0), &sched, &sp, (0.0, 12.0), &IntegrateOptions::new(0.1, 5e4))?;
    let target = 0.15f64.sqrt();
    let closed = tr
        .samples
        .iter()
        .map(|s| {
            let e = (-s.tau).exp();
            (s.chi_minus - (Complex64::new(target, 0.0) * (1.0 - e) + a0 * e).norm_sqr()).abs()
        })
        .fold(0.0, f64::max);

    let law = atom_number_schedule(1.0, 1.0 / 1.7, 10.0)?;
    let mut ode = Dopri5::new(1, Tolerances::default().with_rtol(1e-12).with_atol(1e-14));
    let mut y = [1.0];
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0] / 1.7 - 10.0 * y[0] * y[0];
    let mut bern: f64 = 0.0;
    for i in 0..40 {
        let t0 = 0.05 * i as f64;
        ode.advance(&mut rhs, &mut y, t0, t0 + 0.05)?;
        bern = bern.max((y[0] - law.fraction(t0 + 0.05)).abs());
    }

    let ok = polar < 1e-10 && roots < 1e-9 && lt < 1e-12 && fd_err < 1e-6 && drift < 1e-6 && closed < 1e-8 && bern < 1e-8;
    Ok((
        ok,
        format!(
            "polar {polar:.1e}, roots {roots:.1e}, L~ {lt:.1e}, forces {fd_err:.1e}, drift {drift:.1e}, \
             UN=0 {closed:.1e}, decay law {bern:.1e}"
        ),
    ))
}

fn thermo() -> Check {
    let r = noise::compute(&Config::default())?.rates;
    let tau = r.tau_h.unwrap_or(f64::NAN);
    let ok_rates = within(r.gamma_a, 0.181, 0.002) && within(r.gamma_r, 6.0e-3, 0.1e-3) && within(tau, 15.5, 0.5);

    let eps = fig5::compute(&cfg(&["fig5.decay.noise=0.0"]))?.temperature_fit.epsilon;
    let ok_eps = within(eps, 0.23, 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..1 << 17)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            1.0 + 0.01 * z
        })
        .collect();
    let s = psd_one_sided(&x, 1e4, 1024, 0.5)?;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v / mean - 1.0).powi(2)).sum::<f64>() / x.len() as f64;
    let parseval = s.total_power() / var - 1.0;
    let ok_parseval = parseval.abs() < 0.01;
    Ok((
        ok_rates && ok_eps && ok_parseval,
        format!(
            "gamma_a {:.4} /s, gamma_r {:.3e} /s, tau_h {tau:.2} s; epsilon {eps:.8}; Parseval {:+.2}%",
            r.gamma_a,
            r.gamma_r,
            100.0 * parseval
        ),
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir()?;
    let c = cfg(&["seed=7"]);
    let mut ok = true;
    let mut names = Vec::new();
    for name in ["fig7-adiabatic", "fig8-step", "fig5-thermo", "fig11-mot-switching", "noise-budget"] {
        let a = scenarios::run(name, &c, &dir.path().join(format!("{name}-a")))?;
        let b = scenarios::run(name, &c, &dir.path().join(format!("{name}-b")))?;
        let same = !a.files.is_empty() && a.files == b.files;
        ok &= same;
        names.push(format!("{name}: {}", if same { "identical" } else { "DIFFER" }));
    }
    Ok((ok, names.join(", ")))
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("bistability diagram", diagram),
        ("unbounded branch", unbounded),
        ("symmetric fixed point", symmetric),
        ("jump dynamics", jumps),
        ("intensity-step anomaly", step),
        ("breathing oscillations", breathing),
        ("model cross-validation", cross_validation),
        ("oracle equivalences", oracles),
        ("thermo", thermo),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failed += 1;
        }
        println!("{} #{} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{}/{} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
