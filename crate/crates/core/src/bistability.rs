//! Steady states of the eliminated phase flow and their organisation into
//! branches, folds, bistable windows and hysteresis loops.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{eliminated_slope, eliminated_unchecked, EliminationForm};
use crate::error::{ensure, Error, Result};
use crate::localization::LocalizationKnobs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub phi: f64,
    pub a_mod: f64,
    pub intensity: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanOptions {
    /// Uniform phase grid used to bracket roots.
    pub n_grid: usize,
    /// Distance kept from the `tan` poles at `+-pi/2`.
    pub edge: f64,
    /// Bracket width at which bisection stops.
    pub phi_tol: f64,
    /// Largest phase jump still treated as the same branch.
    pub match_threshold: f64,
    /// Width in `UN` to which folds are bisected.
    pub fold_tol: f64,
    pub form: EliminationForm,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            n_grid: 4096,
            edge: 1e-6,
            phi_tol: 1e-10,
            match_threshold: 0.2,
            fold_tol: 1e-4,
            form: EliminationForm::Printed,
        }
    }
}

struct Flow<'a> {
    form: EliminationForm,
    knobs: &'a LocalizationKnobs,
    chi_p: f64,
    chi_m: f64,
    un: f64,
}

impl Flow<'_> {
    fn f(&self, phi: f64) -> f64 {
        eliminated_unchecked(self.form, phi, phi.cos(), self.knobs, self.chi_p, self.chi_m, self.un)
    }
}

fn bisect(flow: &Flow, mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64) -> f64 {
    // keep halving past `tol` while residual is still large, down to ulp
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = flow.f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= tol && fm.abs() < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// All roots of the eliminated flow at `un`, ordered by increasing `phi`.
pub fn steady_states(un: f64, chi0_minus: f64, knobs: &LocalizationKnobs) -> Result<Vec<SteadyState>> {
    steady_states_with(un, chi0_minus, knobs, &ScanOptions::default())
}

pub fn steady_states_with(
    un: f64,
    chi0_minus: f64,
    knobs: &LocalizationKnobs,
    opts: &ScanOptions,
) -> Result<Vec<SteadyState>> {
    ensure(chi0_minus > 0.0 && chi0_minus < 1.0, "chi0_minus", "must lie in (0, 1)")?;
    ensure(un >= 0.0 && un.is_finite(), "un", "must be finite and >= 0")?;
    ensure(opts.n_grid >= 3, "n_grid", "must be >= 3")?;
    ensure(opts.edge > 0.0 && opts.edge < FRAC_PI_2, "edge", "must lie in (0, pi/2)")?;
    let flow = Flow {
        form: opts.form,
        knobs,
        chi_p: 1.0 - chi0_minus,
        chi_m: chi0_minus,
        un,
    };
    let (lo, hi) = (-FRAC_PI_2 + opts.edge, FRAC_PI_2 - opts.edge);
    let step = (hi - lo) / (opts.n_grid - 1) as f64;
    let grid = |i: usize| if i + 1 == opts.n_grid { hi } else { lo + i as f64 * step };

    let mut roots = Vec::new();
    let mut x0 = grid(0);
    let mut f0 = flow.f(x0);
    if f0 == 0.0 {
        roots.push(x0);
    }
    for i in 1..opts.n_grid {
        let x1 = grid(i);
        let f1 = flow.f(x1);
        if f1 == 0.0 {
            // an exact zero on a grid node is a root; it must not also
            // produce brackets with its neighbours
            roots.push(x1);
        } else if f0 != 0.0 && (f0 > 0.0) != (f1 > 0.0) {
            roots.push(bisect(&flow, x0, x1, f0, opts.phi_tol));
        }
        x0 = x1;
        f0 = f1;
    }
    if roots.is_empty() {
        return Err(Error::Internal(format!(
            "no steady state found at UN = {un}, chi0- = {chi0_minus}"
        )));
    }
    roots
        .into_iter()
        .map(|phi| {
            let slope = eliminated_slope(opts.form, phi, knobs, flow.chi_p, chi0_minus, un)?;
            let a_mod = chi0_minus.sqrt() * phi.cos();
            Ok(SteadyState {
                phi,
                a_mod,
                intensity: a_mod * a_mod,
                stable: slope < 0.0,
            })
        })
        .collect()
}

fn root_count(un: f64, chi0_minus: f64, knobs: &LocalizationKnobs, opts: &ScanOptions) -> Result<usize> {
    Ok(steady_states_with(un, chi0_minus, knobs, opts)?.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramSample {
    pub un: f64,
    pub states: Vec<SteadyState>,
    /// Branch label for each entry of `states`.
    pub branch_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub un: f64,
    pub phi: f64,
    /// Root count below and above the fold in `UN`.
    pub count_below: usize,
    pub count_above: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDiagram {
    pub chi0_minus: f64,
    pub samples: Vec<DiagramSample>,
    pub folds: Vec<Fold>,
    pub n_branches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramRow {
    #[serde(rename = "UN")]
    pub un: f64,
    pub phi: f64,
    pub intensity: f64,
    pub stable: bool,
    pub branch_id: usize,
}

impl BranchDiagram {
    pub fn rows(&self) -> Vec<DiagramRow> {
        self.samples
            .iter()
            .flat_map(|s| {
                s.states.iter().zip(&s.branch_ids).map(move |(st, &id)| DiagramRow {
                    un: s.un,
                    phi: st.phi,
                    intensity: st.intensity,
                    stable: st.stable,
                    branch_id: id,
                })
            })
            .collect()
    }
}

/// Greedy nearest-phi assignment of branch labels.
fn match_branches(prev: &[(f64, usize)], cur: &[SteadyState], threshold: f64, next_id: &mut usize) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, s) in cur.iter().enumerate() {
        for (pi, &(phi, _)) in prev.iter().enumerate() {
            let d = (s.phi - phi).abs();
            if d < threshold {
                pairs.push((d, ci, pi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut ids = vec![usize::MAX; cur.len()];
    let mut taken = vec![false; prev.len()];
    for (_, ci, pi) in pairs {
        if ids[ci] == usize::MAX && !taken[pi] {
            ids[ci] = prev[pi].1;
            taken[pi] = true;
        }
    }
    for id in ids.iter_mut().filter(|id| **id == usize::MAX) {
        *id = *next_id;
        *next_id += 1;
    }
    ids
}

/// Steady-state diagram over `un_range` with `n_samples` uniformly spaced
/// values; folds are refined by bisection wherever the root count changes.
pub fn continuation_scan(
    un_range: (f64, f64),
    n_samples: usize,
    chi0_minus: f64,
    knobs: &LocalizationKnobs,
    opts: &ScanOptions,
) -> Result<BranchDiagram> {
    ensure(n_samples >= 2, "n_samples", "must be >= 2")?;
    let (u0, u1) = un_range;
    ensure(u0 >= 0.0 && u1 > u0 && u1.is_finite(), "un_range", "need 0 <= start < end < inf")?;
    let du = (u1 - u0) / (n_samples - 1) as f64;
    let uns: Vec<f64> = (0..n_samples)
        .map(|i| if i + 1 == n_samples { u1 } else { u0 + i as f64 * du })
        .collect();
    let states: Vec<Vec<SteadyState>> = uns
        .par_iter()
        .map(|&u| steady_states_with(u, chi0_minus, knobs, opts))
        .collect::<Result<_>>()?;

    let mut next_id = 0;
    let mut samples = Vec::with_capacity(n_samples);
    let mut prev: Vec<(f64, usize)> = Vec::new();
    for (&un, st) in uns.iter().zip(states) {
        let ids = match_branches(&prev, &st, opts.match_threshold, &mut next_id);
        prev = st.iter().zip(&ids).map(|(s, &id)| (s.phi, id)).collect();
        samples.push(DiagramSample {
            un,
            states: st,
            branch_ids: ids,
        });
    }

    let changes: Vec<usize> = (1..samples.len())
        .filter(|&i| samples[i].states.len() != samples[i - 1].states.len())
        .collect();
    let folds = changes
        .par_iter()
        .map(|&i| locate_fold(&samples[i - 1], &samples[i], chi0_minus, knobs, opts))
        .collect::<Result<Vec<_>>>()?;

    Ok(BranchDiagram {
        chi0_minus,
        samples,
        folds,
        n_branches: next_id,
    })
}

fn locate_fold(
    left: &DiagramSample,
    right: &DiagramSample,
    chi0_minus: f64,
    knobs: &LocalizationKnobs,
    opts: &ScanOptions,
) -> Result<Fold> {
    let (n_lo, n_hi) = (left.states.len(), right.states.len());
    let (mut a, mut b) = (left.un, right.un);
    while b - a > opts.fold_tol {
        let mid = 0.5 * (a + b);
        if root_count(mid, chi0_minus, knobs, opts)? == n_lo {
            a = mid;
        } else {
            b = mid;
        }
    }
    // the merging pair is the closest adjacent pair on the richer side
    let rich_un = if n_hi > n_lo { b } else { a };
    let rich = steady_states_with(rich_un, chi0_minus, knobs, opts)?;
    let phi = rich
        .windows(2)
        .min_by(|x, y| (x[1].phi - x[0].phi).total_cmp(&(y[1].phi - y[0].phi)))
        .map(|w| 0.5 * (w[0].phi + w[1].phi))
        .unwrap_or(rich[0].phi);
    Ok(Fold {
        un: 0.5 * (a + b),
        phi,
        count_below: n_lo,
        count_above: n_hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BistabilityRange {
    pub un_low: f64,
    /// `None` when the multistable window persists up to the scan ceiling.
    pub un_high: Option<f64>,
}

/// First multistable window of the diagram on `[0, un_max]`.
pub fn bistability_range(
    chi0_minus: f64,
    knobs: &LocalizationKnobs,
    un_max: f64,
    opts: &ScanOptions,
) -> Result<Option<BistabilityRange>> {
    let n = ((un_max / 0.01).ceil() as usize + 1).max(201);
    let diagram = continuation_scan((0.0, un_max), n, chi0_minus, knobs, opts)?;
    Ok(range_from_diagram(&diagram))
}

pub fn range_from_diagram(diagram: &BranchDiagram) -> Option<BistabilityRange> {
    let open = diagram.folds.iter().position(|f| f.count_above > f.count_below)?;
    let un_low = diagram.folds[open].un;
    let un_high = diagram.folds[open + 1..]
        .iter()
        .find(|f| f.count_above < f.count_below)
        .map(|f| f.un);
    Some(BistabilityRange { un_low, un_high })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisPoint {
    #[serde(rename = "UN")]
    pub un: f64,
    pub phi: f64,
    pub intensity: f64,
    /// The followed branch ended before this sample.
    pub jumped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisTrace {
    pub direction: SweepDirection,
    pub points: Vec<HysteresisPoint>,
}

impl HysteresisTrace {
    pub fn jump_uns(&self) -> Vec<f64> {
        self.points.iter().filter(|p| p.jumped).map(|p| p.un).collect()
    }
}

/// Quasi-static branch following over monotone `uns`. At each sample the
/// stable root nearest the previous phase is kept; when the followed
/// branch has vanished the trace lands on the nearest surviving stable root
/// and the sample is marked as a jump. An ambiguous start takes the
/// high-intensity state on an up-sweep and the low-intensity one on a
/// down-sweep.
pub fn hysteresis_sweep(
    direction: SweepDirection,
    uns: &[f64],
    chi0_minus: f64,
    knobs: &LocalizationKnobs,
    opts: &ScanOptions,
) -> Result<HysteresisTrace> {
    if uns.is_empty() {
        return Err(Error::Empty("UN samples"));
    }
    let monotone = match direction {
        SweepDirection::Up => uns.windows(2).all(|w| w[1] >= w[0]),
        SweepDirection::Down => uns.windows(2).all(|w| w[1] <= w[0]),
    };
    ensure(monotone, "uns", "must be monotone in the sweep direction")?;
    let states: Vec<Vec<SteadyState>> = uns
        .par_iter()
        .map(|&u| steady_states_with(u, chi0_minus, knobs, opts))
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(uns.len());
    let mut prev: Option<f64> = None;
    for (&un, st) in uns.iter().zip(&states) {
        let stable: Vec<&SteadyState> = st.iter().filter(|s| s.stable).collect();
        let pool: Vec<&SteadyState> = if stable.is_empty() { st.iter().collect() } else { stable };
        let (chosen, jumped) = match prev {
            None => {
                let pick = match direction {
                    SweepDirection::Up => pool.iter().max_by(|a, b| a.intensity.total_cmp(&b.intensity)),
                    SweepDirection::Down => pool.iter().min_by(|a, b| a.intensity.total_cmp(&b.intensity)),
                };
                (**pick.expect("non-empty"), false)
            }
            Some(p) => {
                let near = pool
                    .iter()
                    .min_by(|a, b| (a.phi - p).abs().total_cmp(&(b.phi - p).abs()))
                    .expect("non-empty");
                (**near, (near.phi - p).abs() > opts.match_threshold)
            }
        };
        prev = Some(chosen.phi);
        points.push(HysteresisPoint {
            un,
            phi: chosen.phi,
            intensity: chosen.intensity,
            jumped,
        });
    }
    Ok(HysteresisTrace { direction, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiabatic::rhs_eliminated;
    use crate::localization::knobs_from_eta;
    use crate::params::ScaledParams;

    fn knobs(chi_m: f64) -> LocalizationKnobs {
        let sp = ScaledParams::new(0.0, 0.5, 0.3, chi_m.sqrt()).unwrap();
        knobs_from_eta(&sp, 1.0 - chi_m)
    }

    #[test]
    fn single_root_without_atoms() {
        for cm in [0.1, 0.38, 0.48, 0.7] {
            let st = steady_states(0.0, cm, &knobs(cm)).unwrap();
            assert_eq!(st.len(), 1, "chi0- {cm}");
            assert!(st[0].phi.abs() < 1e-10);
            assert!((st[0].intensity - cm).abs() < 1e-12);
            assert!(st[0].stable);
        }
    }

    #[test]
    fn symmetric_pumping_keeps_zero_root() {
        for un in [0.5, 2.0, 5.0] {
            let st = steady_states(un, 0.5, &knobs(0.5)).unwrap();
            assert!(st.iter().any(|s| s.phi.abs() < 1e-10 && (s.intensity - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn three_roots_in_bistable_window() {
        let k = knobs(0.48);
        let st = steady_states(2.5, 0.48, &k).unwrap();
        assert_eq!(st.len(), 3);
        let labels: Vec<bool> = st.iter().map(|s| s.stable).collect();
        assert_eq!(labels, vec![true, false, true]);
        for s in &st {
            assert!(rhs_eliminated(s.phi, &k, 0.52, 0.48, 2.5).unwrap().abs() < 1e-9);
        }
        // dense sign-change oracle at 1e-4 rad
        let f = |p: f64| rhs_eliminated(p, &k, 0.52, 0.48, 2.5).unwrap();
        let n = ((std::f64::consts::PI - 2e-6) / 1e-4) as usize;
        let xs: Vec<f64> = (0..=n).map(|i| -FRAC_PI_2 + 1e-6 + i as f64 * 1e-4).collect();
        let oracle: Vec<f64> = xs.windows(2).filter(|w| f(w[0]) * f(w[1]) < 0.0).map(|w| w[0]).collect();
        assert_eq!(oracle.len(), 3);
        for (o, s) in oracle.iter().zip(&st) {
            assert!((o - s.phi).abs() <= 1e-4);
        }
    }

    #[test]
    fn exact_grid_zero_counted_once() {
        // an odd grid puts a node on phi = 0, where UN = 0 has its root
        let opts = ScanOptions { n_grid: 4097, ..ScanOptions::default() };
        let st = steady_states_with(0.0, 0.4, &knobs(0.4), &opts).unwrap();
        assert_eq!(st.len(), 1);
    }

    #[test]
    fn monostable_and_bistable_diagrams() {
        let opts = ScanOptions::default();
        let d = continuation_scan((0.0, 6.0), 121, 0.38, &knobs(0.38), &opts).unwrap();
        assert!(d.samples.iter().all(|s| s.states.len() == 1));
        assert!(d.folds.is_empty());
        assert_eq!(d.n_branches, 1);

        let d = continuation_scan((0.0, 6.0), 241, 0.48, &knobs(0.48), &opts).unwrap();
        assert_eq!(d.folds.len(), 2);
        let r = range_from_diagram(&d).unwrap();
        assert!((r.un_low - 2.09).abs() < 0.02, "{r:?}");
        assert!((r.un_high.unwrap() - 2.73).abs() < 0.02, "{r:?}");
        assert!(d.samples.iter().all(|s| s.states.len() == 1 || s.states.len() == 3));
        assert!(d.folds.iter().all(|f| f.count_below.abs_diff(f.count_above) == 2));
    }

    #[test]
    fn upper_fold_absent_above_half() {
        let r = bistability_range(0.51, &knobs(0.51), 20.0, &ScanOptions::default())
            .unwrap()
            .unwrap();
        assert!(r.un_high.is_none());
        assert!(bistability_range(0.38, &knobs(0.38), 6.0, &ScanOptions::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn hysteresis_loop() {
        let k = knobs(0.48);
        let opts = ScanOptions::default();
        let up: Vec<f64> = (0..=120).map(|i| i as f64 * 0.05).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let tu = hysteresis_sweep(SweepDirection::Up, &up, 0.48, &k, &opts).unwrap();
        let td = hysteresis_sweep(SweepDirection::Down, &down, 0.48, &k, &opts).unwrap();
        let (ju, jd) = (tu.jump_uns(), td.jump_uns());
        assert_eq!(ju.len(), 1);
        assert_eq!(jd.len(), 1);
        assert!(ju[0] > 2.5 && ju[0] < 3.0, "{ju:?}");
        assert!(jd[0] > 1.9 && jd[0] < 2.3, "{jd:?}");
        // identical outside the loop
        for (p, q) in tu.points.iter().zip(td.points.iter().rev()) {
            assert_eq!(p.un, q.un);
            if p.un < jd[0] - 0.05 || p.un > ju[0] + 0.05 {
                assert_eq!(p.phi, q.phi);
            }
        }
        assert!(hysteresis_sweep(SweepDirection::Up, &down, 0.48, &k, &opts).is_err());
    }

    #[test]
    fn monostable_sweeps_identical() {
        let k = knobs(0.38);
        let up: Vec<f64> = (0..=60).map(|i| i as f64 * 0.1).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let opts = ScanOptions::default();
        let tu = hysteresis_sweep(SweepDirection::Up, &up, 0.38, &k, &opts).unwrap();
        let td = hysteresis_sweep(SweepDirection::Down, &down, 0.38, &k, &opts).unwrap();
        for (p, q) in tu.points.iter().zip(td.points.iter().rev()) {
            assert_eq!(p.phi, q.phi);
        }
        assert!(tu.jump_uns().is_empty());
    }

    #[test]
    fn fold_stable_under_grid_doubling() {
        let k = knobs(0.48);
        let a = continuation_scan((1.0, 4.0), 61, 0.48, &k, &ScanOptions::default()).unwrap();
        let fine = ScanOptions { n_grid: 8192, ..ScanOptions::default() };
        let b = continuation_scan((1.0, 4.0), 61, 0.48, &k, &fine).unwrap();
        assert_eq!(a.folds.len(), b.folds.len());
        for (x, y) in a.folds.iter().zip(&b.folds) {
            assert!((x.un - y.un).abs() < 1e-3);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn roots_are_zeros_and_labels_alternate(cm in 0.05f64..0.95, un in 0.0f64..8.0) {
                let k = knobs(cm);
                let st = steady_states(un, cm, &k).unwrap();
                prop_assert!(st.len() % 2 == 1);
                for s in &st {
                    prop_assert!(rhs_eliminated(s.phi, &k, 1.0 - cm, cm, un).unwrap().abs() < 1e-9);
                }
                for w in st.windows(2) {
                    prop_assert!(w[0].stable != w[1].stable);
                }
            }
        }
    }
}
