//! Method-of-lines evolution on a periodic torus of the linear equation
//! `v_tt = n(ḃ/b)v_t + b²Δv` and of the scalar wave-map equation
//! `u_tt = n(ḃ/b)u_t + b²Δu − f(u)(u_t² − b²|∇u|²)`, plus the spatially
//! uniform solution. Fourier derivatives in space, classical RK4 in time.

use crate::blowup::{BlowupCertificate, TorusGrid};
use crate::coeffs::PeriodicCoefficient;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::ode::{Advance, Dopri5, OdeOptions};
use crate::spectral::{mode_index, unravel, wavenumbers, GridFft};
use crate::transform::{ScalarFn, TransformPair};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Amplitude beyond which a run is declared blown up.
pub const BLOWUP_AMPLITUDE: f64 = 1e8;
/// Relative distance to a finite endpoint of `G` that counts as blow-up.
pub const ENDPOINT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub length: f64,
    pub points: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Number of stored snapshots after the initial one.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
}

fn default_snapshots() -> usize {
    10
}

impl GridSpec {
    pub fn torus(&self) -> TorusGrid {
        TorusGrid {
            dim: self.dim,
            length: self.length,
            points: self.points,
        }
    }

    /// Largest stable step for the speed `max b`.
    pub fn cfl_limit(&self, b: &PeriodicCoefficient) -> f64 {
        0.5 * (self.length / self.points as f64) / b.max_value()
    }

    pub fn validate(&self, b: &PeriodicCoefficient) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::domain(format!("simulation dimension must be 1 or 2 (got {})", self.dim)));
        }
        if self.points < 8 || !self.points.is_power_of_two() {
            return Err(Error::domain(format!("points must be a power of two >= 8 (got {})", self.points)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::domain("torus length must be positive"));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::domain("dt and t_end must be positive"));
        }
        if self.snapshots == 0 {
            return Err(Error::domain("at least one snapshot is required"));
        }
        let limit = self.cfl_limit(b);
        if self.dt > limit {
            return Err(Error::Cfl { dt: self.dt, limit });
        }
        Ok(())
    }

    /// Flat index of the grid point `x = 0`.
    pub fn origin_index(&self) -> usize {
        (0..self.dim).fold(0, |acc, _| acc * self.points + self.points / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    BlowupDetected,
    CflViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub u_t: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSample {
    pub t: f64,
    pub max_abs: f64,
    pub at_origin: f64,
    /// `½∫(u_t² + b²|∇u|²)`.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub grid: GridSpec,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticSample>,
    pub termination: Termination,
    pub t_final: f64,
    pub note: Option<String>,
}

impl SimResult {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a run stores its initial snapshot")
    }

    pub fn manifest(&self) -> serde_json::Value {
        json!({
            "grid": self.grid,
            "termination": self.termination,
            "t_final": self.t_final,
            "note": self.note,
            "diagnostics": self.diagnostics,
        })
    }

    /// A run that never started because the step violates the CFL bound.
    pub fn cfl_violation(grid: GridSpec, err: &Error) -> Self {
        SimResult {
            grid,
            snapshots: Vec::new(),
            diagnostics: Vec::new(),
            termination: Termination::CflViolation,
            t_final: 0.0,
            note: Some(err.to_string()),
        }
    }
}

/// `x,u` rows (`x,y,u` in two dimensions).
pub fn snapshot_csv(grid: &GridSpec, snap: &Snapshot) -> String {
    let torus = grid.torus();
    let mut out = String::from(if grid.dim == 1 { "x,u\n" } else { "x,y,u\n" });
    for (i, u) in snap.u.iter().enumerate() {
        for x in torus.point(i) {
            out.push_str(&fmt_f64(x));
            out.push(',');
        }
        out.push_str(&fmt_f64(*u));
        out.push('\n');
    }
    out
}

struct Spectral {
    fft: GridFft,
    dim: usize,
    k: Vec<f64>,
    /// Per flat index: multi-index of the mode.
    modes: Vec<Vec<usize>>,
    keep: Vec<bool>,
    length: f64,
    buf: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl Spectral {
    fn new(grid: &GridSpec) -> Self {
        let shape = vec![grid.points; grid.dim];
        let fft = GridFft::new(&shape);
        let len = fft.len();
        let mut modes = Vec::with_capacity(len);
        let mut keep = Vec::with_capacity(len);
        let mut multi = vec![0; grid.dim];
        for i in 0..len {
            unravel(i, &shape, &mut multi);
            keep.push(
                multi
                    .iter()
                    .all(|&j| 3 * mode_index(j, grid.points).unsigned_abs() as usize <= grid.points),
            );
            modes.push(multi.clone());
        }
        Spectral {
            fft,
            dim: grid.dim,
            k: wavenumbers(grid.points, grid.length),
            modes,
            keep,
            length: grid.length,
            buf: vec![Complex64::new(0.0, 0.0); len],
            work: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    fn load(&mut self, u: &[f64]) {
        for (z, &x) in self.buf.iter_mut().zip(u) {
            *z = Complex64::new(x, 0.0);
        }
        self.fft.forward(&mut self.buf);
    }

    fn ksq(&self, i: usize) -> f64 {
        self.modes[i].iter().map(|&j| self.k[j] * self.k[j]).sum()
    }

    /// `Δu` into `lap`; when `grad2` is given also `|∇u|²`.
    fn derivatives(&mut self, u: &[f64], lap: &mut [f64], grad2: Option<&mut [f64]>) {
        self.load(u);
        for i in 0..self.buf.len() {
            self.work[i] = self.buf[i] * -self.ksq(i);
        }
        self.fft.inverse(&mut self.work);
        for (l, z) in lap.iter_mut().zip(&self.work) {
            *l = z.re;
        }
        if let Some(g2) = grad2 {
            g2.iter_mut().for_each(|x| *x = 0.0);
            let n = self.k.len();
            for axis in 0..self.dim {
                for i in 0..self.buf.len() {
                    let j = self.modes[i][axis];
                    // the Nyquist mode has no real derivative
                    let kj = if j == n / 2 { 0.0 } else { self.k[j] };
                    self.work[i] = self.buf[i] * Complex64::new(0.0, kj);
                }
                self.fft.inverse(&mut self.work);
                for (g, z) in g2.iter_mut().zip(&self.work) {
                    *g += z.re * z.re;
                }
            }
        }
    }

    /// Zero the modes outside the central two thirds.
    fn dealias(&mut self, field: &mut [f64]) {
        self.load(field);
        for (z, &k) in self.buf.iter_mut().zip(&self.keep) {
            if !k {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        self.fft.inverse(&mut self.buf);
        for (x, z) in field.iter_mut().zip(&self.buf) {
            *x = z.re;
        }
    }

    fn energy(&mut self, u: &[f64], u_t: &[f64], b: f64) -> f64 {
        self.load(u);
        let len = self.buf.len() as f64;
        let vol = self.length.powi(self.dim as i32);
        let grad: f64 = (0..self.buf.len()).map(|i| self.ksq(i) * (self.buf[i] / len).norm_sqr()).sum();
        let kinetic: f64 = u_t.iter().map(|p| p * p).sum::<f64>() / len;
        0.5 * vol * (kinetic + b * b * grad)
    }
}

enum Nonlinearity<'a> {
    None,
    Scalar { f: &'a ScalarFn, guard: Option<&'a TransformPair> },
}

struct Stepper<'a> {
    b: &'a PeriodicCoefficient,
    n: f64,
    nl: Nonlinearity<'a>,
    spec: Spectral,
    lap: Vec<f64>,
    grad2: Vec<f64>,
    nonlin: Vec<f64>,
}

impl Stepper<'_> {
    /// `(u_t, u_tt)` at time `t`.
    fn rhs(&mut self, t: f64, u: &[f64], p: &[f64], du: &mut [f64], dp: &mut [f64]) {
        let (b, db, _) = self.b.derivs(t);
        let damp = self.n * db / b;
        let b2 = b * b;
        du.copy_from_slice(p);
        match self.nl {
            Nonlinearity::None => {
                self.spec.derivatives(u, &mut self.lap, None);
                for i in 0..u.len() {
                    dp[i] = damp * p[i] + b2 * self.lap[i];
                }
            }
            Nonlinearity::Scalar { f, .. } => {
                self.spec.derivatives(u, &mut self.lap, Some(&mut self.grad2));
                for i in 0..u.len() {
                    self.nonlin[i] = f.eval(u[i]) * (p[i] * p[i] - b2 * self.grad2[i]);
                }
                self.spec.dealias(&mut self.nonlin);
                for i in 0..u.len() {
                    dp[i] = damp * p[i] + b2 * self.lap[i] - self.nonlin[i];
                }
            }
        }
    }

    /// Reason to stop, if the state has left the regime of a classical
    /// solution.
    fn blown_up(&self, u: &[f64], p: &[f64]) -> Option<String> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (&x, &y) in u.iter().zip(p) {
            if !x.is_finite() || !y.is_finite() {
                return Some("non-finite value".into());
            }
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if hi.abs().max(lo.abs()) > BLOWUP_AMPLITUDE {
            return Some(format!("max |u| exceeded {BLOWUP_AMPLITUDE:e}"));
        }
        if let Nonlinearity::Scalar { f, guard } = self.nl {
            if !f.contains(lo) || !f.contains(hi) {
                return Some("u left the domain of f".into());
            }
            if let Some(tp) = guard {
                let (a_g, b_g) = (tp.a_g(), tp.b_g());
                if b_g.is_finite() {
                    match tp.g(hi) {
                        Ok(g) if b_g.value - g >= ENDPOINT_MARGIN * b_g.value.abs() => {}
                        _ => return Some(format!("G(max u) within {ENDPOINT_MARGIN:e}|b_G| of b_G")),
                    }
                }
                if a_g.is_finite() {
                    match tp.g(lo) {
                        Ok(g) if g - a_g.value >= ENDPOINT_MARGIN * a_g.value.abs() => {}
                        _ => return Some(format!("G(min u) within {ENDPOINT_MARGIN:e}|a_G| of a_G")),
                    }
                }
            }
        }
        None
    }

    fn diagnostics(&mut self, t: f64, u: &[f64], p: &[f64], origin: usize) -> DiagnosticSample {
        DiagnosticSample {
            t,
            max_abs: u.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            at_origin: u[origin],
            energy: self.spec.energy(u, p, self.b.eval(t)),
        }
    }
}

fn run(
    b: &PeriodicCoefficient,
    n_coeff: u32,
    grid: &GridSpec,
    u0: &[f64],
    u1: &[f64],
    nl: Nonlinearity<'_>,
) -> Result<SimResult> {
    grid.validate(b)?;
    let len = grid.torus().len();
    if u0.len() != len || u1.len() != len {
        return Err(Error::domain(format!("initial fields must have {len} values")));
    }
    let mut st = Stepper {
        b,
        n: n_coeff as f64,
        nl,
        spec: Spectral::new(grid),
        lap: vec![0.0; len],
        grad2: vec![0.0; len],
        nonlin: vec![0.0; len],
    };
    if let Some(reason) = st.blown_up(u0, u1) {
        return Err(Error::domain(format!("initial data rejected: {reason}")));
    }
    // a whole number of steps between snapshots
    let per_snap = (grid.t_end / (grid.dt * grid.snapshots as f64)).ceil().max(1.0) as usize;
    let steps = per_snap * grid.snapshots;
    let dt = grid.t_end / steps as f64;
    let origin = grid.origin_index();

    let mut u = u0.to_vec();
    let mut p = u1.to_vec();
    let mut snapshots = vec![Snapshot {
        t: 0.0,
        u: u.clone(),
        u_t: p.clone(),
    }];
    let mut diagnostics = vec![st.diagnostics(0.0, &u, &p, origin)];

    let mut k = vec![[vec![0.0; len], vec![0.0; len]]; 4];
    let mut tmp_u = vec![0.0; len];
    let mut tmp_p = vec![0.0; len];
    let mut new_u = vec![0.0; len];
    let mut new_p = vec![0.0; len];
    for step in 0..steps {
        let t = step as f64 * dt;
        for stage in 0..4 {
            let (c, src) = match stage {
                0 => (0.0, None),
                1 | 2 => (0.5, Some(stage - 1)),
                _ => (1.0, Some(2)),
            };
            if let Some(s) = src {
                for i in 0..len {
                    tmp_u[i] = u[i] + c * dt * k[s][0][i];
                    tmp_p[i] = p[i] + c * dt * k[s][1][i];
                }
            } else {
                tmp_u.copy_from_slice(&u);
                tmp_p.copy_from_slice(&p);
            }
            let [du, dp] = &mut k[stage];
            st.rhs(t + c * dt, &tmp_u, &tmp_p, du, dp);
        }
        for i in 0..len {
            new_u[i] = u[i] + dt / 6.0 * (k[0][0][i] + 2.0 * k[1][0][i] + 2.0 * k[2][0][i] + k[3][0][i]);
            new_p[i] = p[i] + dt / 6.0 * (k[0][1][i] + 2.0 * k[1][1][i] + 2.0 * k[2][1][i] + k[3][1][i]);
        }
        let t_new = (step + 1) as f64 * dt;
        if let Some(reason) = st.blown_up(&new_u, &new_p) {
            // keep the last valid state unless the new one is still finite
            let finite = new_u.iter().chain(&new_p).all(|x| x.is_finite());
            let (t_keep, uu, pp) = if finite { (t_new, &new_u, &new_p) } else { (t, &u, &p) };
            if snapshots.last().map(|s| s.t) != Some(t_keep) {
                snapshots.push(Snapshot {
                    t: t_keep,
                    u: uu.clone(),
                    u_t: pp.clone(),
                });
                diagnostics.push(st.diagnostics(t_keep, uu, pp, origin));
            }
            return Ok(SimResult {
                grid: *grid,
                snapshots,
                diagnostics,
                termination: Termination::BlowupDetected,
                t_final: t_new,
                note: Some(reason),
            });
        }
        std::mem::swap(&mut u, &mut new_u);
        std::mem::swap(&mut p, &mut new_p);
        if (step + 1) % per_snap == 0 {
            snapshots.push(Snapshot {
                t: t_new,
                u: u.clone(),
                u_t: p.clone(),
            });
            diagnostics.push(st.diagnostics(t_new, &u, &p, origin));
        }
    }
    Ok(SimResult {
        grid: *grid,
        snapshots,
        diagnostics,
        termination: Termination::Completed,
        t_final: grid.t_end,
        note: None,
    })
}

/// Evolve the linear equation from `(v0, v1)`.
pub fn evolve_linear(b: &PeriodicCoefficient, n_coeff: u32, grid: &GridSpec, v0: &[f64], v1: &[f64]) -> Result<SimResult> {
    run(b, n_coeff, grid, v0, v1, Nonlinearity::None)
}

/// Evolve the nonlinear scalar equation from `(u0, u1)`. With a guard the
/// run stops once `G(u)` comes within `1e-3` (relative) of a finite endpoint.
pub fn evolve_nonlinear(
    b: &PeriodicCoefficient,
    n_coeff: u32,
    f: &ScalarFn,
    grid: &GridSpec,
    u0: &[f64],
    u1: &[f64],
    guard: Option<&TransformPair>,
) -> Result<SimResult> {
    run(b, n_coeff, grid, u0, u1, Nonlinearity::Scalar { f, guard })
}

/// `(v0, v1) = (G(u0), F(u0)·u1)` pointwise.
pub fn transform_data(tp: &TransformPair, u0: &[f64], u1: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v0 = Vec::with_capacity(u0.len());
    let mut v1 = Vec::with_capacity(u0.len());
    for (&a, &b) in u0.iter().zip(u1) {
        v0.push(tp.g(a)?);
        v1.push(tp.big_f(a)? * b);
    }
    Ok((v0, v1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformRun {
    /// `(t, u, u_t)`.
    pub samples: Vec<(f64, f64, f64)>,
    /// Time at which `u` left the domain of `f` or exceeded the blow-up
    /// amplitude.
    pub truncated_at: Option<f64>,
}

/// The spatially uniform solution `u'' = n(ḃ/b)u' − f(u)u'²`, sampled at
/// `samples + 1` equally spaced times on `[0, t_end]`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_uniform(
    b: &PeriodicCoefficient,
    n_coeff: u32,
    f: &ScalarFn,
    u0: f64,
    u1: f64,
    t_end: f64,
    samples: usize,
    tol: f64,
) -> Result<UniformRun> {
    if !(t_end > 0.0) || samples == 0 {
        return Err(Error::domain("t_end and the sample count must be positive"));
    }
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::domain(format!("tolerance must lie in (0, 1e-4] (got {tol})")));
    }
    if u0 != 0.0 && !f.contains(u0) {
        return Err(Error::domain(format!("u0 = {u0} lies outside the domain of f")));
    }
    let n = n_coeff as f64;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (bb, db, _) = b.derivs(t);
        dy[0] = y[1];
        dy[1] = n * db / bb * y[1] - f.eval(y[0]) * y[1] * y[1];
    };
    let mut opts = OdeOptions::with_tol(tol);
    opts.h_max = 0.05;
    let mut stepper = Dopri5::new(rhs, 2, opts);
    let mut y = [u0, u1];
    let mut t = 0.0;
    let mut out = vec![(0.0, u0, u1)];
    let escaped = |_: f64, y: &[f64]| !(y[0].abs() <= BLOWUP_AMPLITUDE && f.contains(y[0]) && y[1].is_finite());
    for j in 1..=samples {
        let target = t_end * j as f64 / samples as f64;
        match stepper.advance(&mut t, &mut y, target, escaped) {
            Ok(Advance::Reached) => out.push((target, y[0], y[1])),
            Ok(Advance::Stopped(ts)) => {
                return Ok(UniformRun {
                    samples: out,
                    truncated_at: Some(ts),
                })
            }
            Err(Error::Integration { t, .. }) => {
                return Ok(UniformRun {
                    samples: out,
                    truncated_at: Some(t),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(UniformRun {
        samples: out,
        truncated_at: None,
    })
}

/// A one-dimensional torus version of a certified scenario: the plane wave
/// `cos(√λ x)` fits exactly once on `L = 2π/√λ`, the cutoff is dropped
/// and `u₀ = M^{-S}` is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusScenario {
    pub grid: GridSpec,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
}

pub fn torus_scenario(cert: &BlowupCertificate, tp: &TransformPair, b: &PeriodicCoefficient, points: usize) -> Result<TorusScenario> {
    let plan = &cert.plan;
    let length = 2.0 * std::f64::consts::PI / plan.lambda.sqrt();
    let t_end = match cert.t_star {
        Some(ts) => (1.3 * ts).min(plan.m as f64 + 1.0),
        None => plan.m as f64,
    };
    let mut grid = GridSpec {
        dim: 1,
        length,
        points,
        dt: 1.0,
        t_end,
        snapshots: 400,
    };
    grid.dt = 0.8 * grid.cfl_limit(b);
    grid.validate(b)?;
    let amp = plan.amplitude();
    let damp = (-tp.log_big_f(amp)?).exp();
    let y = plan.lambda.sqrt();
    let torus = grid.torus();
    Ok(TorusScenario {
        grid,
        u0: vec![amp; points],
        u1: torus.sample(|x| plan.a_sign * amp * damp * (y * x[0]).cos()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(points: usize, t_end: f64) -> GridSpec {
        GridSpec {
            dim: 1,
            length: 1.0,
            points,
            dt: 0.2 / points as f64,
            t_end,
            snapshots: 4,
        }
    }

    #[test]
    fn standing_wave() {
        let b = PeriodicCoefficient::constant(1.0).unwrap();
        let g = grid(32, 2.0);
        let two_pi = 2.0 * std::f64::consts::PI;
        let v0 = g.torus().sample(|x| (two_pi * x[0]).cos());
        let res = evolve_linear(&b, 3, &g, &v0, &vec![0.0; 32]).unwrap();
        assert_eq!(res.termination, Termination::Completed);
        assert_eq!(res.snapshots.len(), 5);
        let last = res.last();
        assert_eq!(last.t, 2.0);
        for (i, v) in last.u.iter().enumerate() {
            let x = g.torus().point(i)[0];
            assert!((v - (two_pi * x).cos() * (two_pi * 2.0).cos()).abs() < 1e-6);
        }
        // energy is conserved for constant b
        let e0 = res.diagnostics[0].energy;
        assert!(res.diagnostics.iter().all(|d| (d.energy - e0).abs() < 1e-7 * e0));
    }

    #[test]
    fn cfl_is_checked_before_stepping() {
        let b = PeriodicCoefficient::sqrt_sin(0.5).unwrap();
        let mut g = grid(64, 1.0);
        g.dt = 0.01;
        let err = evolve_linear(&b, 3, &g, &[0.0; 64], &[0.0; 64]).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
        let res = SimResult::cfl_violation(g, &err);
        assert_eq!(res.termination, Termination::CflViolation);
    }

    #[test]
    fn origin_index_is_zero_point() {
        let mut g = grid(16, 1.0);
        assert_eq!(g.torus().point(g.origin_index()), vec![0.0]);
        g.dim = 2;
        assert_eq!(g.torus().point(g.origin_index()), vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_linear_case_is_linear_in_time() {
        let b = PeriodicCoefficient::constant(1.0).unwrap();
        let run = evolve_uniform(&b, 3, &ScalarFn::zero(), 0.0, 1.0, 5.0, 10, 1e-12).unwrap();
        assert!(run.truncated_at.is_none());
        for (t, u, ut) in run.samples {
            assert!((u - t).abs() < 1e-12 && (ut - 1.0).abs() < 1e-12);
        }
    }
}
