//! Target-manifold metrics in a single chart: Christoffel symbols, the
//! distinguished-line test `Σ Γ^i_jk(a t) a_j a_k = a_i f(t)`, geodesics and
//! the Gaussian curvature of 2-D conformal metrics.

use crate::error::{Error, Result};
use crate::ode::{Advance, Dopri5, OdeOptions};
use crate::transform::ScalarFn;
use nalgebra::{DMatrix, DVector};
use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

/// Runaway geodesics stop once `|u|` exceeds this.
pub const CHART_BOUND: f64 = 1e6;

/// `(1 + Σ c·Π u_k^{e_k})^α` with analytic partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPower {
    m: usize,
    terms: Vec<(f64, Vec<u32>)>,
    alpha: f64,
}

impl PolyPower {
    pub fn new(m: usize, terms: Vec<(f64, Vec<u32>)>, alpha: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("metric dimension must be >= 1"));
        }
        if terms.iter().any(|(_, e)| e.len() != m) {
            return Err(Error::domain(format!("every monomial needs {m} exponents")));
        }
        Ok(PolyPower { m, terms, alpha })
    }

    /// `(1 + Σ u_k²)^α` on `ℝ^m`.
    pub fn radial(m: usize, alpha: f64) -> Self {
        let terms = (0..m)
            .map(|k| {
                let mut e = vec![0; m];
                e[k] = 2;
                (1.0, e)
            })
            .collect();
        PolyPower { m, terms, alpha }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn monomial(u: &[f64], e: &[u32], skip: &[usize]) -> f64 {
        // Π u_k^{e_k} with the listed indices differentiated once each
        let mut p = 1.0;
        for (k, (&uk, &ek)) in u.iter().zip(e).enumerate() {
            let d = skip.iter().filter(|&&s| s == k).count() as u32;
            if d > ek {
                return 0.0;
            }
            let mut coef = 1.0;
            for r in 0..d {
                coef *= (ek - r) as f64;
            }
            p *= coef * uk.powi((ek - d) as i32);
        }
        p
    }

    /// Base polynomial, its gradient and Hessian.
    fn base(&self, u: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let m = self.m;
        let mut b = 1.0;
        let mut g = vec![0.0; m];
        let mut hess = vec![0.0; m * m];
        for (c, e) in &self.terms {
            b += c * Self::monomial(u, e, &[]);
            for k in 0..m {
                if e[k] == 0 {
                    continue;
                }
                g[k] += c * Self::monomial(u, e, &[k]);
                for l in 0..m {
                    hess[k * m + l] += c * Self::monomial(u, e, &[k, l]);
                }
            }
        }
        (b, g, hess)
    }

    fn base_value(&self, u: &[f64]) -> f64 {
        1.0 + self.terms.iter().map(|(c, e)| c * Self::monomial(u, e, &[])).sum::<f64>()
    }

    /// `(h, ∇h, ∇²h)`; errors where the base is not positive.
    pub fn derivs(&self, u: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let m = self.m;
        let (b, bg, bh) = self.base(u);
        if !(b > 0.0) {
            return Err(Error::domain(format!("point {u:?} lies outside the chart (base {b})")));
        }
        let a = self.alpha;
        let h = b.powf(a);
        let g: Vec<f64> = bg.iter().map(|&x| a * h / b * x).collect();
        let mut hess = vec![0.0; m * m];
        for k in 0..m {
            for l in 0..m {
                hess[k * m + l] = a * (a - 1.0) * h / (b * b) * bg[k] * bg[l] + a * h / b * bh[k * m + l];
            }
        }
        Ok((h, g, hess))
    }

    pub fn value(&self, u: &[f64]) -> Result<f64> {
        Ok(self.derivs(u)?.0)
    }

    /// Largest `|t|` interval around 0 on which `base(a t) > 0`.
    fn line_domain(&self, a: &[f64]) -> (f64, f64) {
        let point = |t: f64| a.iter().map(|x| x * t).collect::<Vec<_>>();
        let mut out = [f64::NEG_INFINITY, f64::INFINITY];
        for (slot, dir) in [(0usize, -1.0), (1usize, 1.0)] {
            let mut prev = 0.0;
            let mut t = 1e-3;
            while t < 1e7 {
                if self.base_value(&point(dir * t)) <= 0.0 {
                    let (mut lo, mut hi) = (prev, t);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if self.base_value(&point(dir * mid)) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    out[slot] = dir * hi;
                    break;
                }
                prev = t;
                t *= 1.05;
            }
        }
        (out[0], out[1])
    }
}

type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub enum MetricFamily {
    /// `h_ij = s(u) δ_ij`.
    Conformal(PolyPower),
    /// `h_ij = s(u)(δ_ij + κ φ(u) / m)` with `φ = d²/(1+d²)` and `d` the
    /// distance from the diagonal: zero with zero gradient on the diagonal.
    DiagonalPerturbed { scalar: PolyPower, kappa: f64 },
    /// Any matrix function; partials by central differences.
    Custom { m: usize, h: MatrixFn },
}

impl fmt::Debug for MetricFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricFamily::Conformal(p) => write!(f, "Conformal({p:?})"),
            MetricFamily::DiagonalPerturbed { scalar, kappa } => {
                write!(f, "DiagonalPerturbed({scalar:?}, kappa = {kappa})")
            }
            MetricFamily::Custom { m, .. } => write!(f, "Custom(m = {m})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricChart {
    family: MetricFamily,
}

const FD_STEP: f64 = 1e-4;

impl MetricChart {
    pub fn conformal(scalar: PolyPower) -> Self {
        MetricChart {
            family: MetricFamily::Conformal(scalar),
        }
    }

    pub fn diagonal_perturbed(scalar: PolyPower, kappa: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&kappa) {
            return Err(Error::domain(format!("perturbation size kappa must lie in [0, 1) (got {kappa})")));
        }
        Ok(MetricChart {
            family: MetricFamily::DiagonalPerturbed { scalar, kappa },
        })
    }

    pub fn custom<F>(m: usize, h: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        MetricChart {
            family: MetricFamily::Custom { m, h: Arc::new(h) },
        }
    }

    pub fn flat(m: usize) -> Self {
        Self::conformal(PolyPower::radial(m, 0.0))
    }

    /// `(1 + u² + v²)^α`.
    pub fn example1(alpha: f64) -> Self {
        Self::conformal(PolyPower::radial(2, alpha))
    }

    /// `(1 + v)^{-ℓ}` on `v > -1`.
    pub fn example2(ell: f64) -> Self {
        Self::conformal(PolyPower {
            m: 2,
            terms: vec![(1.0, vec![0, 1])],
            alpha: -ell,
        })
    }

    /// `(1 + u² + v⁴)^α`.
    pub fn example3(alpha: f64) -> Self {
        Self::conformal(PolyPower {
            m: 2,
            terms: vec![(1.0, vec![2, 0]), (1.0, vec![0, 4])],
            alpha,
        })
    }

    /// `(1 + u² + v² + uv)^α`, conformal but without reflection symmetry in
    /// the coordinate axes.
    pub fn skew(alpha: f64) -> Self {
        Self::conformal(PolyPower {
            m: 2,
            terms: vec![(1.0, vec![2, 0]), (1.0, vec![0, 2]), (1.0, vec![1, 1])],
            alpha,
        })
    }

    pub fn family(&self) -> &MetricFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            MetricFamily::Conformal(p) => p.m,
            MetricFamily::DiagonalPerturbed { scalar, .. } => scalar.m,
            MetricFamily::Custom { m, .. } => *m,
        }
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::domain(format!("point has {} components, chart has {}", u.len(), self.dim())));
        }
        Ok(())
    }

    fn perturbation(m: usize, u: &[f64]) -> (f64, Vec<f64>) {
        let mean = u.iter().sum::<f64>() / m as f64;
        let d2: f64 = u.iter().map(|x| (x - mean) * (x - mean)).sum();
        let phi = d2 / (1.0 + d2);
        let denom = (1.0 + d2) * (1.0 + d2);
        let grad = u.iter().map(|x| 2.0 * (x - mean) / denom).collect();
        (phi, grad)
    }

    /// `h(u)`.
    pub fn h(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(u)?;
        let m = self.dim();
        match &self.family {
            MetricFamily::Conformal(p) => Ok(DMatrix::identity(m, m) * p.value(u)?),
            MetricFamily::DiagonalPerturbed { scalar, kappa } => {
                let s = scalar.value(u)?;
                let (phi, _) = Self::perturbation(m, u);
                let off = kappa * phi / m as f64;
                Ok(DMatrix::from_fn(m, m, |i, j| s * (if i == j { 1.0 } else { 0.0 } + off)))
            }
            MetricFamily::Custom { h, .. } => {
                let mat = h(u);
                if mat.nrows() != m || mat.ncols() != m {
                    return Err(Error::domain("custom metric returned a matrix of the wrong size"));
                }
                Ok(mat)
            }
        }
    }

    /// `∂h/∂u^k` for every `k`.
    pub fn dh(&self, u: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_point(u)?;
        let m = self.dim();
        match &self.family {
            MetricFamily::Conformal(p) => {
                let (_, g, _) = p.derivs(u)?;
                Ok(g.iter().map(|&gk| DMatrix::identity(m, m) * gk).collect())
            }
            MetricFamily::DiagonalPerturbed { scalar, kappa } => {
                let (s, g, _) = scalar.derivs(u)?;
                let (phi, dphi) = Self::perturbation(m, u);
                let mf = m as f64;
                Ok((0..m)
                    .map(|k| {
                        DMatrix::from_fn(m, m, |i, j| {
                            let delta = if i == j { 1.0 } else { 0.0 };
                            g[k] * (delta + kappa * phi / mf) + s * kappa * dphi[k] / mf
                        })
                    })
                    .collect())
            }
            MetricFamily::Custom { .. } => self.dh_fd(u),
        }
    }

    /// Fourth-order central differences of `h`.
    pub fn dh_fd(&self, u: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let m = self.dim();
        let mut out = Vec::with_capacity(m);
        for k in 0..m {
            let shifted = |d: f64| -> Result<DMatrix<f64>> {
                let mut v = u.to_vec();
                v[k] += d;
                self.h(&v)
            };
            let h = FD_STEP;
            let d = (shifted(-2.0 * h)? - shifted(2.0 * h)? + (shifted(h)? - shifted(-h)?) * 8.0) / (12.0 * h);
            out.push(d);
        }
        Ok(out)
    }

    fn inverse(&self, u: &[f64], h: DMatrix<f64>) -> Result<DMatrix<f64>> {
        let singular = |h: &DMatrix<f64>| {
            let eig = h.clone().symmetric_eigen().eigenvalues;
            let max = eig.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            let min = eig.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
            Error::SingularMetric {
                point: u.to_vec(),
                condition: if min > 0.0 { max / min } else { f64::INFINITY },
            }
        };
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularMetric {
                point: u.to_vec(),
                condition: f64::INFINITY,
            });
        }
        match h.clone().cholesky() {
            Some(ch) => {
                let inv = ch.inverse();
                if inv.iter().all(|x| x.is_finite()) {
                    Ok(inv)
                } else {
                    Err(singular(&h))
                }
            }
            None => Err(singular(&h)),
        }
    }
}

/// `Γ^i_jk` at a point, stored as `gamma[(i * m + j) * m + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelValue {
    pub point: Vec<f64>,
    pub m: usize,
    pub gamma: Vec<f64>,
}

impl ChristoffelValue {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[(i * self.m + j) * self.m + k]
    }

    /// `Σ_jk Γ^i_jk v^j v^k` for every `i`.
    pub fn contract(&self, v: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..m {
                    for k in 0..m {
                        acc += self.gamma[(i * m + j) * m + k] * v[j] * v[k];
                    }
                }
                acc
            })
            .collect()
    }
}

pub fn christoffel(chart: &MetricChart, u: &[f64]) -> Result<ChristoffelValue> {
    chart.check_point(u)?;
    let m = chart.dim();
    let mut gamma = vec![0.0; m * m * m];
    if let MetricFamily::Conformal(p) = &chart.family {
        let (h, g, _) = p.derivs(u)?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::SingularMetric {
                point: u.to_vec(),
                condition: f64::INFINITY,
            });
        }
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let mut v = 0.0;
                    if k == i {
                        v += g[j];
                    }
                    if j == i {
                        v += g[k];
                    }
                    if j == k {
                        v -= g[i];
                    }
                    gamma[(i * m + j) * m + k] = v / (2.0 * h);
                }
            }
        }
    } else {
        let h = chart.h(u)?;
        let inv = chart.inverse(u, h)?;
        let dh = chart.dh(u)?;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let mut v = 0.0;
                    for l in 0..m {
                        v += inv[(i, l)] * (dh[j][(k, l)] + dh[k][(j, l)] - dh[l][(k, j)]);
                    }
                    gamma[(i * m + j) * m + k] = 0.5 * v;
                }
            }
        }
    }
    Ok(ChristoffelValue {
        point: u.to_vec(),
        m,
        gamma,
    })
}

/// Result of the distinguished-line test along `u = a t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinguishedLine {
    pub a: Vec<f64>,
    pub f_samples: Vec<(f64, f64)>,
    pub max_residual: f64,
}

/// `f(t)` by least squares over the components, and the residual.
fn line_f(chart: &MetricChart, a: &[f64], t: f64) -> Result<(f64, f64)> {
    let u: Vec<f64> = a.iter().map(|x| x * t).collect();
    let c = christoffel(chart, &u)?.contract(a);
    let norm2: f64 = a.iter().map(|x| x * x).sum();
    let f = a.iter().zip(&c).map(|(ai, ci)| ai * ci).sum::<f64>() / norm2;
    let res = a.iter().zip(&c).map(|(ai, ci)| (ci - ai * f).abs()).fold(0.0, f64::max);
    Ok((f, res))
}

pub fn check_self_coherence(
    chart: &MetricChart,
    a: &[f64],
    t_range: (f64, f64),
    samples: usize,
) -> Result<DistinguishedLine> {
    chart.check_point(a)?;
    if samples < 16 {
        return Err(Error::domain(format!("samples must be >= 16 (got {samples})")));
    }
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::domain("direction must be non-zero"));
    }
    let (lo, hi) = t_range;
    if !(lo < hi) {
        return Err(Error::domain(format!("t range must satisfy lo < hi (got ({lo}, {hi}))")));
    }
    let mut f_samples = Vec::with_capacity(samples);
    let mut max_residual: f64 = 0.0;
    for j in 0..samples {
        let t = lo + (hi - lo) * j as f64 / (samples - 1) as f64;
        let (f, r) = line_f(chart, a, t)?;
        f_samples.push((t, f));
        max_residual = max_residual.max(r);
    }
    Ok(DistinguishedLine {
        a: a.to_vec(),
        f_samples,
        max_residual,
    })
}

/// The reduced coefficient `f(t)` of the line `u = a t` as a function,
/// restricted to the part of the line inside the chart.
pub fn line_function(chart: &MetricChart, a: &[f64]) -> Result<ScalarFn> {
    chart.check_point(a)?;
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::domain("direction must be non-zero"));
    }
    let (lo, hi) = match &chart.family {
        MetricFamily::Conformal(p) | MetricFamily::DiagonalPerturbed { scalar: p, .. } => p.line_domain(a),
        MetricFamily::Custom { .. } => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let chart = chart.clone();
    let a = a.to_vec();
    ScalarFn::new(format!("line {a:?}"), lo, hi, move |t| {
        line_f(&chart, &a, t).map(|(f, _)| f).unwrap_or(f64::NAN)
    })
}

/// `u̇(0)` giving unit speed along `a`: `(Σ h_kj(u0) a_j a_k)^{-1/2}`.
pub fn unit_speed_factor(chart: &MetricChart, u0: &[f64], a: &[f64]) -> Result<f64> {
    let h = chart.h(u0)?;
    let av = DVector::from_column_slice(a);
    let q = (av.transpose() * &h * &av)[(0, 0)];
    if !(q > 0.0) {
        return Err(Error::domain("direction has zero length in the metric"));
    }
    Ok(q.powf(-0.5))
}

pub const GEODESIC_SAMPLES: usize = 401;

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSample {
    pub s: f64,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub samples: Vec<GeodesicSample>,
    /// `Σ h_ij u̇^i u̇^j` at `s = 0`.
    pub speed: f64,
    pub max_speed_drift: f64,
    /// Arclength at which `|u|` left the chart bound, if it did.
    pub truncated_at: Option<f64>,
}

fn speed_sq(chart: &MetricChart, u: &[f64], du: &[f64]) -> Result<f64> {
    let h = chart.h(u)?;
    let v = DVector::from_column_slice(du);
    Ok((v.transpose() * h * &v)[(0, 0)])
}

pub fn geodesic_full(chart: &MetricChart, u0: &[f64], v0: &[f64], s_max: f64, tol: f64) -> Result<GeodesicPath> {
    chart.check_point(u0)?;
    chart.check_point(v0)?;
    if v0.iter().all(|&x| x == 0.0) {
        return Err(Error::domain("initial velocity must be non-zero"));
    }
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::domain(format!("s_max must be positive (got {s_max})")));
    }
    let m = chart.dim();
    let failure = RefCell::new(None);
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let (u, du) = y.split_at(m);
        dy[..m].copy_from_slice(du);
        match christoffel(chart, u) {
            Ok(g) => {
                for (d, c) in dy[m..].iter_mut().zip(g.contract(du)) {
                    *d = -c;
                }
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                dy[m..].iter_mut().for_each(|d| *d = f64::NAN);
            }
        }
    };
    let mut y: Vec<f64> = u0.iter().chain(v0).copied().collect();
    let speed = speed_sq(chart, u0, v0)?;
    let mut stepper = Dopri5::new(rhs, 2 * m, OdeOptions::with_tol(tol));
    let mut s = 0.0;
    let mut samples = vec![GeodesicSample {
        s: 0.0,
        u: u0.to_vec(),
        du: v0.to_vec(),
    }];
    let mut truncated_at = None;
    let out_of_chart = |_s: f64, y: &[f64]| y[..m].iter().map(|x| x * x).sum::<f64>().sqrt() > CHART_BOUND;
    for j in 1..GEODESIC_SAMPLES {
        let target = s_max * j as f64 / (GEODESIC_SAMPLES - 1) as f64;
        let r = stepper.advance(&mut s, &mut y, target, out_of_chart);
        match r {
            Ok(Advance::Reached) => {}
            Ok(Advance::Stopped(at)) => truncated_at = Some(at),
            // the path ran into the edge of the chart or a metric singularity
            Err(Error::Integration { .. }) => {
                truncated_at = Some(s);
                samples.push(GeodesicSample {
                    s,
                    u: y[..m].to_vec(),
                    du: y[m..].to_vec(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
        samples.push(GeodesicSample {
            s,
            u: y[..m].to_vec(),
            du: y[m..].to_vec(),
        });
        if truncated_at.is_some() {
            break;
        }
    }
    drop(stepper);
    if let (Some(e), None) = (failure.into_inner(), truncated_at) {
        return Err(e);
    }
    // the state at a failed step may be garbage
    if truncated_at.is_some() && samples.last().is_some_and(|x| x.u.iter().chain(&x.du).any(|v| !v.is_finite())) {
        samples.pop();
    }
    let mut drift: f64 = 0.0;
    for smp in &samples {
        let sp = speed_sq(chart, &smp.u, &smp.du)?;
        drift = drift.max((sp - speed).abs() / speed);
    }
    // near a chart singularity the drift is reported, not enforced
    if truncated_at.is_none() && drift > 1e-6f64.max(1e3 * tol) {
        return Err(Error::Integration {
            t: samples.last().map(|x| x.s).unwrap_or(0.0),
            reason: format!("metric speed drifted by {drift:e} (relative)"),
        });
    }
    Ok(GeodesicPath {
        samples,
        speed,
        max_speed_drift: drift,
        truncated_at,
    })
}

/// `ü + f(u) u̇² = 0` with `u(0) = u0`, `u̇(0) = xi_hat`.
pub fn geodesic_reduced(f: &ScalarFn, u0: f64, xi_hat: f64, s_max: f64, tol: f64) -> Result<Vec<(f64, f64, f64)>> {
    if xi_hat == 0.0 {
        return Err(Error::domain("xi_hat must be non-zero"));
    }
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::domain(format!("s_max must be positive (got {s_max})")));
    }
    if !(f.contains(u0) || u0 == 0.0) {
        return Err(Error::domain(format!("u0 = {u0} lies outside the domain of f")));
    }
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = -f.eval(y[0]) * y[1] * y[1];
    };
    let mut stepper = Dopri5::new(rhs, 2, OdeOptions::with_tol(tol));
    let mut s = 0.0;
    let mut y = vec![u0, xi_hat];
    let mut out = vec![(0.0, u0, xi_hat)];
    for j in 1..GEODESIC_SAMPLES {
        let target = s_max * j as f64 / (GEODESIC_SAMPLES - 1) as f64;
        let r = stepper.advance(&mut s, &mut y, target, |_, y| y[0].abs() > CHART_BOUND || !f.contains(y[0]))?;
        out.push((s, y[0], y[1]));
        if let Advance::Stopped(_) = r {
            break;
        }
    }
    Ok(out)
}

/// `K = -(1/h) Δ ln h` for a 2-D conformal metric `h δ_ij`.
pub fn gaussian_curvature(chart: &MetricChart, u: &[f64]) -> Result<f64> {
    let p = match &chart.family {
        MetricFamily::Conformal(p) if p.m == 2 => p,
        _ => return Err(Error::domain("Gaussian curvature needs a 2-D conformal metric")),
    };
    let (h, g, hess) = p.derivs(u)?;
    // Δ ln h = Σ_k (h_kk / h - h_k² / h²)
    let lap = (hess[0] + hess[3]) / h - (g[0] * g[0] + g[1] * g[1]) / (h * h);
    Ok(-lap / h)
}

/// CSV `s,u1..um,du1..dum`.
pub fn path_csv(path: &GeodesicPath) -> String {
    let m = path.samples.first().map(|s| s.u.len()).unwrap_or(0);
    let mut out = String::from("s");
    for k in 1..=m {
        out.push_str(&format!(",u{k}"));
    }
    for k in 1..=m {
        out.push_str(&format!(",du{k}"));
    }
    out.push('\n');
    for smp in &path.samples {
        out.push_str(&crate::io::fmt_f64(smp.s));
        for x in smp.u.iter().chain(&smp.du) {
            out.push(',');
            out.push_str(&crate::io::fmt_f64(*x));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_metric_has_no_symbols() {
        let g = christoffel(&MetricChart::flat(3), &[0.3, -1.0, 2.0]).unwrap();
        assert!(g.gamma.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn conformal_closed_forms() {
        let (u, v, alpha) = (0.7, -0.4, -1.3);
        let g = christoffel(&MetricChart::example1(alpha), &[u, v]).unwrap();
        assert!((g.get(0, 0, 0) - alpha * u / (1.0 + u * u + v * v)).abs() < 1e-14);
        let g = christoffel(&MetricChart::example3(alpha), &[u, v]).unwrap();
        let base = 1.0 + u * u + v.powi(4);
        assert!((g.get(0, 1, 0) - 2.0 * alpha * v.powi(3) / base).abs() < 1e-14);
        assert!((g.get(1, 1, 0) - alpha * u / base).abs() < 1e-14);
    }

    #[test]
    fn general_formula_matches_fast_path() {
        let conformal = MetricChart::example3(-0.8);
        let p = PolyPower {
            m: 2,
            terms: vec![(1.0, vec![2, 0]), (1.0, vec![0, 4])],
            alpha: -0.8,
        };
        let custom = MetricChart::custom(2, move |u| DMatrix::identity(2, 2) * p.value(u).unwrap());
        let u = [0.4, 0.9];
        let a = christoffel(&conformal, &u).unwrap();
        let b = christoffel(&custom, &u).unwrap();
        for (x, y) in a.gamma.iter().zip(&b.gamma) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn half_plane_symbols() {
        let ell = 3.0;
        let v = 0.6;
        let g = christoffel(&MetricChart::example2(ell), &[0.2, v]).unwrap();
        let expect = -ell / (2.0 * (1.0 + v));
        assert!((g.get(0, 1, 0) - expect).abs() < 1e-14);
        assert!((g.get(1, 1, 1) - expect).abs() < 1e-14);
        assert!((g.get(1, 0, 0) + expect).abs() < 1e-14);
        assert!(christoffel(&MetricChart::example2(ell), &[0.0, -1.5]).is_err());
    }

    #[test]
    fn singular_custom_metric_reports_condition() {
        let chart = MetricChart::custom(2, |_| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        match christoffel(&chart, &[0.0, 0.0]) {
            Err(Error::SingularMetric { condition, .. }) => assert!(condition > 1e10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn curvature_values() {
        assert_eq!(gaussian_curvature(&MetricChart::flat(2), &[0.5, 0.5]).unwrap(), 0.0);
        for (u, v) in [(0.0, 0.0), (1.0, -2.0), (0.3, 0.7)] {
            let k = gaussian_curvature(&MetricChart::example1(-2.0), &[u, v]).unwrap();
            assert!((k - 8.0).abs() < 1e-12);
        }
        let k = gaussian_curvature(&MetricChart::example3(0.6), &[0.0, 0.0]).unwrap();
        assert!((k + 1.2).abs() < 1e-14);
        assert!(gaussian_curvature(&MetricChart::flat(3), &[0.0; 3]).is_err());
    }

    #[test]
    fn skew_metric_axis_is_not_distinguished() {
        let line = check_self_coherence(&MetricChart::skew(-1.0), &[1.0, 0.0], (-2.0, 2.0), 32).unwrap();
        assert!(line.max_residual > 1e-2);
    }

    #[test]
    fn half_plane_line_domain() {
        let f = line_function(&MetricChart::example2(2.0), &[0.0, 1.0]).unwrap();
        let (lo, hi) = f.domain();
        assert!((lo + 1.0).abs() < 1e-12);
        assert!(hi.is_infinite());
        assert!((f.eval(1.0) + 0.5).abs() < 1e-14);
    }
}
