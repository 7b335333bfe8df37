//! Runge–Kutta–Fehlberg 4(5) with adaptive step size.
//!
//! The fourth-order solution is propagated; the fifth-order companion only
//! feeds the local error estimate.

use serde::Serialize;

use crate::error::{GridError, Result};

const C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];

const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];

const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

/// Fifth-order weights minus fourth-order weights.
const E: [f64; 6] = [
    16.0 / 135.0 - 25.0 / 216.0,
    0.0,
    6656.0 / 12825.0 - 1408.0 / 2565.0,
    28561.0 / 56430.0 - 2197.0 / 4104.0,
    -9.0 / 50.0 + 0.2,
    2.0 / 55.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejections: usize,
    pub rhs_evals: usize,
}

/// Adaptive RKF45 stepper with preallocated stage storage.
pub struct Rkf45 {
    k: [Vec<f64>; 6],
    tmp: Vec<f64>,
    y4: Vec<f64>,
    start_failed: bool,
    pub stats: IntegratorStats,
}

impl Rkf45 {
    pub fn new(dim: usize) -> Self {
        Rkf45 {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            y4: vec![0.0; dim],
            start_failed: false,
            stats: IntegratorStats::default(),
        }
    }

    /// Integrates `y` from `t` to exactly `t_stop`.
    ///
    /// `h` is the proposed step on entry and the next proposed step on exit;
    /// the final step is clipped to land on `t_stop` without shrinking the
    /// proposal. `f(t, y, dy)` may fail; a failure at the start of a step is
    /// returned, a failure at an interior stage rejects the step.
    pub fn advance<F>(&mut self, f: &mut F, t: f64, t_stop: f64, y: &mut [f64], h: &mut f64, ctl: &StepControl) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let mut t = t;
        let span = t_stop - t;
        if span <= 0.0 {
            return Ok(());
        }
        *h = h.min(ctl.max_step);
        while t < t_stop {
            let remaining = t_stop - t;
            let last = *h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { *h };

            let err = match self.trial(f, t, y, step, ctl) {
                Ok(err) => err,
                Err(e) if self.start_failed => return Err(e),
                Err(e) => {
                    self.stats.rejections += 1;
                    *h = step * 0.25;
                    if *h < ctl.min_step {
                        return Err(e);
                    }
                    continue;
                }
            };

            if err <= 1.0 {
                y.copy_from_slice(&self.y4);
                t = if last { t_stop } else { t + step };
                self.stats.steps += 1;
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                let proposal = (step * factor).min(ctl.max_step);
                // A clipped final step says nothing about the attainable size.
                if !last || proposal > *h {
                    *h = proposal;
                }
            } else {
                self.stats.rejections += 1;
                let factor = (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                *h = step * factor;
                if *h < ctl.min_step {
                    return Err(GridError::StepUnderflow { time: t, step: *h });
                }
            }
        }
        Ok(())
    }

    /// One trial step; returns the scaled error norm and leaves the
    /// candidate in `self.y4`.
    fn trial<F>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64, ctl: &StepControl) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        self.start_failed = false;
        for s in 0..6 {
            for j in 0..y.len() {
                let mut acc = y[j];
                for (r, a) in A[s][..s].iter().enumerate() {
                    acc += h * a * self.k[r][j];
                }
                self.tmp[j] = acc;
            }
            self.stats.rhs_evals += 1;
            if let Err(e) = f(t + C[s] * h, &self.tmp, &mut self.k[s]) {
                self.start_failed = s == 0;
                return Err(e);
            }
        }
        let mut err: f64 = 0.0;
        for j in 0..y.len() {
            let mut y4 = y[j];
            let mut e = 0.0;
            for s in 0..6 {
                y4 += h * B4[s] * self.k[s][j];
                e += h * E[s] * self.k[s][j];
            }
            self.y4[j] = y4;
            let scale = ctl.abs_tol + ctl.rel_tol * y[j].abs().max(y4.abs());
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            return Ok(f64::INFINITY);
        }
        Ok(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctl(max_step: f64) -> StepControl {
        StepControl {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step,
            min_step: 1e-14,
        }
    }

    #[test]
    fn tableau_rows_sum_to_nodes() {
        for s in 0..6 {
            let sum: f64 = A[s].iter().sum();
            assert!((sum - C[s]).abs() < 1e-14, "row {s}");
        }
        assert!((B4.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(E.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn exponential_decay() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -2.0 * y[0];
            Ok(())
        };
        let mut y = vec![1.0];
        let mut h = 1e-3;
        let mut rk = Rkf45::new(1);
        rk.advance(&mut f, 0.0, 1.0, &mut y, &mut h, &ctl(0.1)).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-8);
        assert!(rk.stats.steps > 0);
    }

    #[test]
    fn harmonic_oscillator_with_stops() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let mut y = vec![1.0, 0.0];
        let mut h = 1e-3;
        let mut rk = Rkf45::new(2);
        let mut t = 0.0;
        for k in 1..=100 {
            let stop = k as f64 * 0.0314159;
            rk.advance(&mut f, t, stop, &mut y, &mut h, &ctl(0.01)).unwrap();
            t = stop;
        }
        assert!((y[0] - t.cos()).abs() < 1e-7);
        assert!((y[1] + t.sin()).abs() < 1e-7);
    }

    #[test]
    fn fourth_order_convergence() {
        // Fixed steps via tight max_step and loose tolerance.
        let run = |h_max: f64| {
            let mut f = |t: f64, _y: &[f64], dy: &mut [f64]| {
                dy[0] = t.cos();
                Ok(())
            };
            let mut y = vec![0.0];
            let mut h = h_max;
            let mut rk = Rkf45::new(1);
            let c = StepControl {
                rel_tol: 1.0,
                abs_tol: 1.0,
                max_step: h_max,
                min_step: 1e-14,
            };
            rk.advance(&mut f, 0.0, 2.0, &mut y, &mut h, &c).unwrap();
            (y[0] - 2.0f64.sin()).abs()
        };
        let e1 = run(0.2);
        let e2 = run(0.1);
        let order = (e1 / e2).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    #[test]
    fn start_failure_propagates() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            if y[0] <= 0.0 {
                return Err(GridError::NonPositiveVoltage { bus: 0, voltage: y[0] });
            }
            dy[0] = -1.0;
            Ok(())
        };
        let mut y = vec![0.5];
        let mut h = 0.1;
        let mut rk = Rkf45::new(1);
        let res = rk.advance(&mut f, 0.0, 2.0, &mut y, &mut h, &ctl(0.1));
        assert!(res.is_err());
        assert!(y[0] > 0.0);
    }
}
