//! Explicit Runge-Kutta integrators on flat `f64` state vectors.
//!
//! [`Dopri5`] is the adaptive Dormand-Prince 5(4) pair with local
//! extrapolation, used for the low-dimensional field models.
//! [`FixedRk`] steps an arbitrary explicit tableau at constant `h`; the
//! particle system uses it with [`RK4`] or the 12-stage 8th-order [`DOP853`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest accepted step before the integration is abandoned.
    pub h_min: f64,
    /// Largest step, `None` for unbounded.
    pub h_max: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-14,
            h_max: None,
        }
    }
}

impl Tolerances {
    pub fn with_rtol(self, rtol: f64) -> Self {
        Self { rtol, ..self }
    }
    pub fn with_atol(self, atol: f64) -> Self {
        Self { atol, ..self }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (error weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand-Prince 5(4) with FSAL and a standard PI-free
/// step controller. Keeps its step size between [`advance`](Self::advance)
/// calls so that output sampling does not reset the controller.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    tol: Tolerances,
    h: Option<f64>,
    k: [Vec<f64>; 7],
    y_new: Vec<f64>,
    y_stage: Vec<f64>,
    fsal_valid: bool,
    pub stats: StepStats,
}

impl Dopri5 {
    pub fn new(dim: usize, tol: Tolerances) -> Self {
        Self {
            tol,
            h: None,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            y_new: vec![0.0; dim],
            y_stage: vec![0.0; dim],
            fsal_valid: false,
            stats: StepStats::default(),
        }
    }

    /// Forget the cached derivative, e.g. after the right-hand side changes
    /// discontinuously at `t`.
    pub fn restart(&mut self) {
        self.fsal_valid = false;
    }

    fn initial_step<F>(&mut self, f: &mut F, t: f64, y: &[f64]) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let (atol, rtol) = (self.tol.atol, self.tol.rtol);
        let scale = |i: usize, v: f64| atol + rtol * v.abs().max(y[i].abs());
        let n = y.len() as f64;
        let d0 = (y.iter().enumerate().map(|(i, v)| (v / scale(i, *v)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (self.k[0].iter().enumerate().map(|(i, v)| (v / scale(i, y[i])).powi(2)).sum::<f64>() / n).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..y.len() {
            self.y_stage[i] = y[i] + h0 * self.k[0][i];
        }
        f(t + h0, &self.y_stage, &mut self.k[1]);
        self.stats.evaluations += 1;
        let d2 = (0..y.len())
            .map(|i| ((self.k[1][i] - self.k[0][i]) / scale(i, y[i])).powi(2))
            .sum::<f64>()
            .sqrt()
            / (n.sqrt() * h0);
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1)
    }

    /// Integrate `y` from `t` to exactly `t_end`.
    pub fn advance<F>(&mut self, f: &mut F, y: &mut [f64], t: f64, t_end: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let mut t = t;
        if !self.fsal_valid {
            f(t, y, &mut self.k[0]);
            self.stats.evaluations += 1;
            self.fsal_valid = true;
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(f, t, y),
        };
        if let Some(hmax) = self.tol.h_max {
            h = h.min(hmax);
        }
        while t < t_end {
            let remaining = t_end - t;
            let last = h >= remaining;
            let h_step = if last { remaining } else { h };

            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            let ys = &mut self.y_stage;
            for i in 0..n {
                ys[i] = y[i] + h_step * A21 * k1[i];
            }
            f(t + C2 * h_step, ys, k2);
            for i in 0..n {
                ys[i] = y[i] + h_step * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h_step, ys, k3);
            for i in 0..n {
                ys[i] = y[i] + h_step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h_step, ys, k4);
            for i in 0..n {
                ys[i] = y[i] + h_step * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h_step, ys, k5);
            for i in 0..n {
                ys[i] = y[i] + h_step * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h_step, ys, k6);
            let yn = &mut self.y_new;
            for i in 0..n {
                yn[i] = y[i] + h_step * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            f(t + h_step, yn, k7);
            self.stats.evaluations += 6;

            let mut err = 0.0;
            for i in 0..n {
                let e = h_step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(yn[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();

            if !err.is_finite() {
                return Err(Error::NonFinite {
                    tau: t,
                    what: "error estimate".into(),
                });
            }
            if err <= 1.0 {
                t = if last { t_end } else { t + h_step };
                y.copy_from_slice(yn);
                std::mem::swap(k1, k7);
                self.stats.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // A truncated final step says nothing about the natural step.
                if !last || h_step == h {
                    h = h_step * fac;
                }
            } else {
                self.stats.rejected += 1;
                h = h_step * (0.9 * err.powf(-0.2)).max(0.1);
            }
            if let Some(hmax) = self.tol.h_max {
                h = h.min(hmax);
            }
            if h < self.tol.h_min {
                return Err(Error::StepUnderflow {
                    tau: t,
                    step: h,
                    last_state: y.to_vec(),
                });
            }
        }
        self.h = Some(h);
        Ok(())
    }
}

/// Butcher tableau of an explicit method; `a` is strictly lower triangular.
#[derive(Debug)]
pub struct Tableau {
    pub name: &'static str,
    pub order: u32,
    pub a: &'static [&'static [f64]],
    pub b: &'static [f64],
    pub c: &'static [f64],
}

pub static RK4: Tableau = Tableau {
    name: "rk4",
    order: 4,
    a: &[&[], &[0.5], &[0.0, 0.5], &[0.0, 0.0, 1.0]],
    b: &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
    c: &[0.0, 0.5, 0.5, 1.0],
};

/// The 8th-order propagating solution of Dormand-Prince 8(5,3), used at fixed step.
pub static DOP853: Tableau = Tableau {
    name: "dop853",
    order: 8,
    a: &[
        &[],
        &[0.05260015195876773],
        &[0.0197250569845379, 0.0591751709536137],
        &[0.02958758547680685, 0.0, 0.08876275643042054],
        &[0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792],
        &[0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242],
        &[0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125],
        &[
            0.03709200011850479,
            0.0,
            0.0,
            0.17038392571223998,
            0.10726203044637328,
            -0.015319437748624402,
            0.008273789163814023,
        ],
        &[
            0.6241109587160757,
            0.0,
            0.0,
            -3.3608926294469414,
            -0.868219346841726,
            27.59209969944671,
            20.154067550477894,
            -43.48988418106996,
        ],
        &[
            0.47766253643826434,
            0.0,
            0.0,
            -2.4881146199716677,
            -0.590290826836843,
            21.230051448181193,
            15.279233632882423,
            -33.28821096898486,
            -0.020331201708508627,
        ],
        &[
            -0.9371424300859873,
            0.0,
            0.0,
            5.186372428844064,
            1.0914373489967295,
            -8.149787010746927,
            -18.52006565999696,
            22.739487099350505,
            2.4936055526796523,
            -3.0467644718982196,
        ],
        &[
            2.273310147516538,
            0.0,
            0.0,
            -10.53449546673725,
            -2.0008720582248625,
            -17.9589318631188,
            27.94888452941996,
            -2.8589982771350235,
            -8.87285693353063,
            12.360567175794303,
            0.6433927460157636,
        ],
    ],
    b: &[
        0.054293734116568765,
        0.0,
        0.0,
        0.0,
        0.0,
        4.450312892752409,
        1.8915178993145003,
        -5.801203960010585,
        0.3111643669578199,
        -0.1521609496625161,
        0.20136540080403034,
        0.04471061572777259,
    ],
    c: &[
        0.0,
        0.05260015195876773,
        0.0789002279381516,
        0.1183503419072274,
        0.2816496580927726,
        0.3333333333333333,
        0.25,
        0.3076923076923077,
        0.6512820512820513,
        0.6,
        0.8571428571428571,
        1.0,
    ],
};

/// Constant-step driver for an explicit tableau with reusable stage storage.
#[derive(Debug)]
pub struct FixedRk {
    tableau: &'static Tableau,
    k: Vec<Vec<f64>>,
    stage: Vec<f64>,
}

impl FixedRk {
    pub fn new(tableau: &'static Tableau, dim: usize) -> Self {
        Self {
            tableau,
            k: vec![vec![0.0; dim]; tableau.b.len()],
            stage: vec![0.0; dim],
        }
    }

    pub fn tableau(&self) -> &'static Tableau {
        self.tableau
    }

    pub fn step<F>(&mut self, f: &mut F, t: f64, y: &mut [f64], h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let tab = self.tableau;
        for s in 0..tab.b.len() {
            self.stage.copy_from_slice(y);
            for (j, &a) in tab.a[s].iter().enumerate() {
                if a != 0.0 {
                    let ha = h * a;
                    for (yi, kj) in self.stage.iter_mut().zip(&self.k[j]) {
                        *yi += ha * kj;
                    }
                }
            }
            let (done, rest) = self.k.split_at_mut(s);
            let _ = done;
            f(t + tab.c[s] * h, &self.stage, &mut rest[0]);
        }
        for (s, &b) in tab.b.iter().enumerate() {
            if b != 0.0 {
                let hb = h * b;
                for (yi, ks) in y.iter_mut().zip(&self.k[s]) {
                    *yi += hb * ks;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -y[0];
        dy[1] = y[0] - 0.5 * y[1];
    }

    #[test]
    fn dopri5_exponential() {
        let mut y = [1.0, 0.0];
        let mut ig = Dopri5::new(2, Tolerances::default());
        ig.advance(&mut decay, &mut y, 0.0, 5.0).unwrap();
        let e = (-5.0f64).exp();
        // y1 = 2 (e^{-t/2} - e^{-t})
        let y1 = 2.0 * ((-2.5f64).exp() - e);
        assert!((y[0] - e).abs() < 1e-9);
        assert!((y[1] - y1).abs() < 1e-9);
    }

    #[test]
    fn dopri5_chunked_matches_single_call() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut y1 = [1.0, 0.0];
        let mut a = Dopri5::new(2, Tolerances::default().with_rtol(1e-10).with_atol(1e-12));
        for i in 0..100 {
            a.advance(&mut f, &mut y1, i as f64 * 0.1, (i + 1) as f64 * 0.1).unwrap();
        }
        assert!((y1[0] - 10f64.cos()).abs() < 1e-8);
        assert!((y1[1] + 10f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn step_underflow_reported() {
        // finite-time blow-up forces ever smaller steps
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let mut y = [1.0];
        let mut ig = Dopri5::new(1, Tolerances { h_min: 1e-6, ..Tolerances::default() });
        let err = ig.advance(&mut f, &mut y, 0.0, 2.0).unwrap_err();
        match err {
            Error::StepUnderflow { tau, last_state, .. } => {
                assert!(tau < 1.0 && tau > 0.9);
                assert_eq!(last_state.len(), 1);
            }
            Error::NonFinite { .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    fn harmonic(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    fn fixed_error(tab: &'static Tableau, n: usize) -> f64 {
        let mut rk = FixedRk::new(tab, 2);
        let mut y = [1.0, 0.0];
        let h = 2.0 / n as f64;
        for i in 0..n {
            rk.step(&mut harmonic, i as f64 * h, &mut y, h);
        }
        ((y[0] - 2f64.cos()).powi(2) + (y[1] + 2f64.sin()).powi(2)).sqrt()
    }

    #[test]
    fn tableaus_are_consistent() {
        for tab in [&RK4, &DOP853] {
            assert!((tab.b.iter().sum::<f64>() - 1.0).abs() < 1e-14, "{}", tab.name);
            for (row, c) in tab.a.iter().zip(tab.c) {
                assert!((row.iter().sum::<f64>() - c).abs() < 1e-14, "{}", tab.name);
            }
        }
    }

    #[test]
    fn fixed_step_convergence_orders() {
        let r4 = fixed_error(&RK4, 20) / fixed_error(&RK4, 40);
        assert!((r4.log2() - 4.0).abs() < 0.2, "rk4 observed order {}", r4.log2());
        let r8 = fixed_error(&DOP853, 4) / fixed_error(&DOP853, 8);
        assert!(r8.log2() > 7.5, "dop853 observed order {}", r8.log2());
    }
}
