//! Adaptive Dormand–Prince 5(4) integrator with PI step-size control.
//!
//! Works on flat `f64` state slices so the same stepper drives the 2×2
//! monodromy system, geodesics in any chart dimension and the uniform
//! wave-map ODE.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h0: None,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

/// How a call to [`Dopri5::advance`] ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Advance {
    Reached,
    /// The stop predicate fired after an accepted step at this time.
    Stopped(f64),
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

pub struct Dopri5<F> {
    rhs: F,
    opts: OdeOptions,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    h: Option<f64>,
    err_old: f64,
    fsal_valid: bool,
    steps: usize,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(rhs: F, dim: usize, opts: OdeOptions) -> Self {
        let z = || vec![0.0; dim];
        Dopri5 {
            rhs,
            opts,
            k: [z(), z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            ynew: z(),
            h: opts.h0,
            err_old: 1e-4,
            fsal_valid: false,
            steps: 0,
        }
    }

    /// Number of accepted steps so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    fn initial_step(&mut self, t: f64, y: &[f64], direction: f64) -> f64 {
        // Hairer–Wanner starting-step heuristic.
        let dim = y.len();
        let sk = |i: usize, y: &[f64]| self.opts.atol + self.opts.rtol * y[i].abs();
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..dim {
            let s = sk(i, y);
            d0 += (y[i] / s).powi(2);
            d1 += (self.k[0][i] / s).powi(2);
        }
        let d0 = (d0 / dim as f64).sqrt();
        let d1 = (d1 / dim as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        for i in 0..dim {
            self.ytmp[i] = y[i] + direction * h0 * self.k[0][i];
        }
        (self.rhs)(t + direction * h0, &self.ytmp, &mut self.k[1]);
        let mut d2 = 0.0;
        for i in 0..dim {
            d2 += ((self.k[1][i] - self.k[0][i]) / sk(i, y)).powi(2);
        }
        let d2 = (d2 / dim as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.opts.h_max)
    }

    /// Advance `(t, y)` to `t_end`, stopping early if `stop(t, y)` returns true
    /// after an accepted step.
    pub fn advance<S>(&mut self, t: &mut f64, y: &mut [f64], t_end: f64, mut stop: S) -> Result<Advance>
    where
        S: FnMut(f64, &[f64]) -> bool,
    {
        let dim = y.len();
        if *t == t_end {
            return Ok(Advance::Reached);
        }
        let direction = (t_end - *t).signum();
        if !self.fsal_valid {
            (self.rhs)(*t, y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        let mut h = match self.h {
            Some(h) => h.abs(),
            None => self.initial_step(*t, y, direction),
        };
        loop {
            let remaining = (t_end - *t).abs();
            if remaining <= 1e-14 * t_end.abs().max(1.0) {
                *t = t_end;
                return Ok(Advance::Reached);
            }
            if self.steps >= self.opts.max_steps {
                return Err(Error::Integration {
                    t: *t,
                    reason: format!("exceeded {} steps", self.opts.max_steps),
                });
            }
            let mut last = false;
            if h >= remaining {
                h = remaining;
                last = true;
            }
            let hs = direction * h;
            let tt = *t;

            for i in 0..dim {
                self.ytmp[i] = y[i] + hs * A21 * self.k[0][i];
            }
            (self.rhs)(tt + C2 * hs, &self.ytmp, &mut self.k[1]);
            for i in 0..dim {
                self.ytmp[i] = y[i] + hs * (A31 * self.k[0][i] + A32 * self.k[1][i]);
            }
            (self.rhs)(tt + C3 * hs, &self.ytmp, &mut self.k[2]);
            for i in 0..dim {
                self.ytmp[i] =
                    y[i] + hs * (A41 * self.k[0][i] + A42 * self.k[1][i] + A43 * self.k[2][i]);
            }
            (self.rhs)(tt + C4 * hs, &self.ytmp, &mut self.k[3]);
            for i in 0..dim {
                self.ytmp[i] = y[i]
                    + hs * (A51 * self.k[0][i]
                        + A52 * self.k[1][i]
                        + A53 * self.k[2][i]
                        + A54 * self.k[3][i]);
            }
            (self.rhs)(tt + C5 * hs, &self.ytmp, &mut self.k[4]);
            for i in 0..dim {
                self.ytmp[i] = y[i]
                    + hs * (A61 * self.k[0][i]
                        + A62 * self.k[1][i]
                        + A63 * self.k[2][i]
                        + A64 * self.k[3][i]
                        + A65 * self.k[4][i]);
            }
            (self.rhs)(tt + hs, &self.ytmp, &mut self.k[5]);
            for i in 0..dim {
                self.ynew[i] = y[i]
                    + hs * (A71 * self.k[0][i]
                        + A73 * self.k[2][i]
                        + A74 * self.k[3][i]
                        + A75 * self.k[4][i]
                        + A76 * self.k[5][i]);
            }
            let t_new = if last { t_end } else { tt + hs };
            (self.rhs)(t_new, &self.ynew, &mut self.k[6]);

            let mut err = 0.0;
            for i in 0..dim {
                let e = hs
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
                let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(self.ynew[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / dim as f64).sqrt();

            if !err.is_finite() {
                h *= 0.25;
                if h < self.opts.h_min {
                    return Err(Error::Integration {
                        t: tt,
                        reason: "non-finite state".into(),
                    });
                }
                continue;
            }

            let fac11 = err.powf(EXPO);
            if err <= 1.0 {
                let fac = (fac11 / self.err_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.err_old = err.max(1e-4);
                y.copy_from_slice(&self.ynew);
                self.k.swap(0, 6);
                *t = t_new;
                self.steps += 1;
                let h_next = (h / fac).min(self.opts.h_max);
                // keep the controller's step, not the truncated last one
                if !last || h_next < h {
                    self.h = Some(h_next);
                }
                h = h_next;
                if stop(*t, y) {
                    return Ok(Advance::Stopped(*t));
                }
                if last {
                    return Ok(Advance::Reached);
                }
            } else {
                h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
                if h < self.opts.h_min {
                    return Err(Error::Integration {
                        t: tt,
                        reason: format!("step size underflow (h = {h:e})"),
                    });
                }
            }
        }
    }
}

/// Integrate `y' = rhs(t, y)` from `t0` to `t1` and return the final state.
pub fn integrate<F>(rhs: F, t0: f64, y0: &[f64], t1: f64, opts: OdeOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut stepper = Dopri5::new(rhs, y0.len(), opts);
    stepper.advance(&mut t, &mut y, t1, |_, _| false)?;
    Ok(y)
}

/// Integrate and record the state at each of `times` (which must be monotone
/// and start at or after `t0`).
pub fn integrate_at<F>(rhs: F, t0: f64, y0: &[f64], times: &[f64], opts: OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut stepper = Dopri5::new(rhs, y0.len(), opts);
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        stepper.advance(&mut t, &mut y, target, |_, _| false)?;
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = integrate(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], 2.0, OdeOptions::with_tol(1e-12)).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn harmonic_oscillator_many_periods() {
        let w = 3.0;
        let y = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -w * w * y[0];
            },
            0.0,
            &[0.0, 1.0],
            10.0,
            OdeOptions::with_tol(1e-12),
        )
        .unwrap();
        assert!((y[0] - (w * 10.0).sin() / w).abs() < 1e-10);
        assert!((y[1] - (w * 10.0).cos()).abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let y = integrate(|_, y, dy| dy[0] = y[0], 1.0, &[1.0], 0.0, OdeOptions::with_tol(1e-12)).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn records_requested_times() {
        let times = [0.5, 1.0, 1.5];
        let out = integrate_at(|_, _, dy| dy[0] = 1.0, 0.0, &[0.0], &times, OdeOptions::default()).unwrap();
        for (t, y) in times.iter().zip(&out) {
            assert!((y[0] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn stop_predicate_fires_on_blowup() {
        // y' = y^2, y(0) = 1 blows up at t = 1
        let mut y = vec![1.0];
        let mut t = 0.0;
        let mut s = Dopri5::new(|_, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0], 1, OdeOptions::with_tol(1e-12));
        let out = s.advance(&mut t, &mut y, 2.0, |_, y| y[0].abs() > 1e8).unwrap();
        match out {
            Advance::Stopped(ts) => assert!((ts - 1.0).abs() < 1e-7),
            Advance::Reached => panic!("should have stopped"),
        }
    }

    #[test]
    fn underflow_reports_time() {
        let mut opts = OdeOptions::with_tol(1e-12);
        opts.h_min = 1e-6;
        let err = integrate(|_, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], 2.0, opts).unwrap_err();
        match err {
            Error::Integration { t, .. } => assert!(t > 0.9 && t < 1.0),
            e => panic!("unexpected {e:?}"),
        }
    }
}
