use std::io::Write;

use ringlat::config::{load_str, Config};
use ringlat::scenarios::{empty_cavity, fig11, fig2, fig5, fig7, fig8, noise};

fn cfg(sets: &[&str]) -> Config {
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    load_str(None, &sets).unwrap()
}

#[test]
fn empty_cavity_matches_closed_form() {
    let r = empty_cavity::compute(&Config::default()).unwrap();
    assert!(r.max_abs_error < 1e-8, "{}", r.max_abs_error);
}

#[test]
fn step_without_atoms_tracks_pump() {
    let r = fig8::compute(&cfg(&["fig8.UN=0.0"])).unwrap();
    assert!((r.chi_pre - 0.45).abs() < 1e-8);
    assert!((r.chi_step - 0.225).abs() < 1e-8);
    assert!((r.chi_final - 0.45).abs() < 1e-8);
}

#[test]
fn unit_step_leaves_trace_constant() {
    let r = fig8::compute(&cfg(&["fig8.step_factor=1.0"])).unwrap();
    let settled: Vec<f64> = r.trace.iter().filter(|s| s.t_seconds >= 0.0).map(|s| s.chi_minus).collect();
    let (lo, hi) = settled.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi - lo < 1e-8 * hi, "{lo} .. {hi}");
}

#[test]
fn halving_the_pump_raises_the_steady_intensity() {
    let r = fig8::compute(&Config::default()).unwrap();
    assert!(r.chi_min < r.chi_pre);
    assert!(r.chi_step > r.chi_pre);
    assert!((r.chi_final / r.chi_pre - 1.0).abs() < 0.1);
}

#[test]
fn decay_fit_recovers_the_synthetic_law() {
    let r = fig7::compute(&Config::default()).unwrap();
    let d = Config::default().fig7.decay;
    assert!((r.decay.gamma_bg / d.gamma_bg - 1.0).abs() < 0.05);
    assert!((r.decay.q / d.q_n0 - 1.0).abs() < 0.1);
    let clean = fig7::fitted_decay(&cfg(&["fig7.decay.noise=0.0"])).unwrap().2;
    assert!((clean.gamma_bg / d.gamma_bg - 1.0).abs() < 1e-6);
    assert!((clean.q / d.q_n0 - 1.0).abs() < 1e-6);
}

#[test]
fn jump_cases_start_low_and_order_by_pump_ratio() {
    let r = fig7::compute(&Config::default()).unwrap();
    for c in &r.cases {
        assert!(c.chi_initial < 0.1 * c.chi0_minus, "{c:?}");
    }
    let t: Vec<f64> = r.cases[..3].iter().map(|c| c.jump_time.unwrap()).collect();
    assert!(t[0] < t[1] && t[1] < t[2], "{t:?}");
}

#[test]
fn no_loading_reduces_to_the_decay_law() {
    let c = cfg(&["fig11.loading_rate=0.0", "fig11.q_ref=10.0", "fig11.t_end=0.5"]);
    let rows = fig11::simulate(&c, &c.fig11).unwrap();
    let law = fig11::decay_reference(&c.fig11);
    for r in rows.iter().step_by(50) {
        let expect = law.n_at(r.t_seconds);
        assert!((r.atoms / expect - 1.0).abs() < 1e-6, "t={} n={} law={}", r.t_seconds, r.atoms, expect);
    }
}

#[test]
fn default_loading_produces_a_limit_cycle() {
    let r = fig11::compute(&Config::default()).unwrap();
    assert!(r.switching, "{:?}", r.jumps);
    let p = &r.periods;
    let spread = p.iter().fold(0.0f64, |m, v| m.max((v / p[0] - 1.0).abs()));
    assert!(spread < 0.02, "{p:?}");
    let w = r.window.unwrap();
    for j in &r.jumps {
        let fold = match j.to {
            fig11::Level::Low => w.un_high.unwrap(),
            fig11::Level::High => w.un_low,
        };
        assert!((j.un / fold - 1.0).abs() < 0.02, "{j:?} vs fold {fold}");
    }
}

#[test]
fn monostable_pump_ratio_never_switches() {
    for r in ["0.5", "1.03", "2.0", "10.0", "40.0"] {
        let c = cfg(&["fig11.chi0_minus=0.38", &format!("fig11.loading_rate={r}"), "fig11.t_end=10.0"]);
        let rep = fig11::compute(&c).unwrap();
        assert!(rep.window.is_none());
        assert_eq!(rep.complete_cycles, 0, "R = {r}");
    }
}

#[test]
fn spot_values_give_the_heating_time() {
    let r = noise::compute(&Config::default()).unwrap();
    assert!((r.rates.tau_h.unwrap() - 15.5).abs() < 0.5);
}

fn series_file(fs: f64, n: usize, f: impl Fn(f64) -> f64) -> tempfile::NamedTempFile {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "t_seconds,intensity").unwrap();
    for i in 0..n {
        let t = i as f64 / fs;
        writeln!(file, "{t:.12e},{:.15e}", f(t)).unwrap();
    }
    file
}

#[test]
fn noiseless_series_has_no_heating() {
    let f = series_file(20e3, 8192, |_| 2.5);
    let c = cfg(&[
        &format!("noise.series={}", f.path().display()),
        "noise.nu_ax=1000.0",
        "noise.nu_rad=100.0",
        "noise.segment_length=1024",
    ]);
    let r = noise::compute(&c).unwrap();
    assert!(!r.heating && r.rates.tau_h.is_none());
}

#[test]
fn modulation_at_twice_axial_frequency_dominates() {
    let f = series_file(20e3, 1 << 15, |t| 1.0 + 1e-3 * (2.0 * std::f64::consts::PI * 2000.0 * t).sin());
    let c = cfg(&[
        &format!("noise.series={}", f.path().display()),
        "noise.nu_ax=1000.0",
        "noise.nu_rad=100.0",
        "noise.segment_length=2048",
    ]);
    let r = noise::compute(&c).unwrap();
    assert!(r.rates.gamma_a > 1e3 * r.rates.gamma_r, "{:?}", r.rates);
}

#[test]
fn cooling_fit_recovers_epsilon_from_clean_data() {
    let c = cfg(&["fig5.decay.noise=0.0"]);
    let r = fig5::compute(&c).unwrap();
    assert!((r.temperature_fit.epsilon - 0.23).abs() < 1e-6, "{}", r.temperature_fit.epsilon);
}

#[test]
fn diagram_threshold_and_unbounded_branch() {
    let c = cfg(&["fig2.chi0_minus=[0.50, 0.38]", "fig2.threshold_scan=[0.40, 0.44, 0.45, 0.48]"]);
    let r = fig2::compute(&c).unwrap();
    let hi = r.diagram(0.50).unwrap();
    assert!(hi.range_to_ceiling.unwrap().un_high.is_none());
    assert!(r.diagram(0.38).unwrap().range.is_none());
    let th = r.threshold.unwrap();
    assert!((0.40..=0.48).contains(&th), "{th}");
}
