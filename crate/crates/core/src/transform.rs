//! The transform `G(u) = ∫₀ᵘ exp(∫₀ˢ f) ds`, its inverse `H`, the limits
//! `a_G = G(-∞)`, `b_G = G(+∞)` and the tail classifier that decides whether
//! both improper integrals diverge.
//!
//! `F = exp(∫₀ˢ f)` and `G` are evaluated from a cache of knots: each knot
//! stores the cumulative integrals of `f` and `F`, so any evaluation only
//! integrates from the nearest knot.

use crate::error::{Error, Result};
use crate::quad::{self, QuadTol};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// A real function of one variable on an open interval `(lo, hi)`.
#[derive(Clone)]
pub struct ScalarFn {
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lo: f64,
    hi: f64,
    label: String,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({} on ({}, {}))", self.label, self.lo, self.hi)
    }
}

impl ScalarFn {
    pub fn new<F>(label: impl Into<String>, lo: f64, hi: f64, func: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lo < 0.0 && hi > 0.0) {
            return Err(Error::domain(format!("function domain ({lo}, {hi}) must contain 0")));
        }
        Ok(ScalarFn {
            func: Arc::new(func),
            lo,
            hi,
            label: label.into(),
        })
    }

    pub fn on_line<F>(label: impl Into<String>, func: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ScalarFn {
            func: Arc::new(func),
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            label: label.into(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn zero() -> Self {
        Self::on_line("0", |_| 0.0)
    }

    /// `4αr/(1+2r²)`, so that `exp(∫f) = (1+2s²)^α`.
    pub fn example1(alpha: f64) -> Self {
        Self::on_line(format!("4*{alpha}*r/(1+2r^2)"), move |r| 4.0 * alpha * r / (1.0 + 2.0 * r * r))
    }

    /// `-ℓ/(2(1+t))` on `t > -1`.
    pub fn example2(ell: f64) -> Self {
        ScalarFn {
            func: Arc::new(move |t| -ell / (2.0 * (1.0 + t))),
            lo: -1.0,
            hi: f64::INFINITY,
            label: format!("-{ell}/(2(1+t))"),
        }
    }

    /// `αt/(1+t²)` (the `v = 0` axis of the quartic metric).
    pub fn example3_u(alpha: f64) -> Self {
        Self::on_line(format!("{alpha}*t/(1+t^2)"), move |t| alpha * t / (1.0 + t * t))
    }

    /// `2αt³/(1+t⁴)` (the `u = 0` axis of the quartic metric).
    pub fn example3_v(alpha: f64) -> Self {
        Self::on_line(format!("2*{alpha}*t^3/(1+t^4)"), move |t| {
            2.0 * alpha * t * t * t / (1.0 + t.powi(4))
        })
    }

    /// `mαu/(1+mu²)` (the diagonal of `(1+|u|²)^α` on `ℝ^m`).
    pub fn example4(m: usize, alpha: f64) -> Self {
        let mf = m as f64;
        Self::on_line(format!("{m}*{alpha}*u/(1+{m}u^2)"), move |u| mf * alpha * u / (1.0 + mf * u * u))
    }

    /// `p/(1+|s|)`, whose `F` behaves like `|s|^p` on both sides.
    pub fn power_tail(p: f64) -> Self {
        Self::on_line(format!("{p}/(1+|s|)*sign(s)"), move |s| p * s.signum() / (1.0 + s.abs()))
    }
}

/// Stop extending the knot cache once `|∫f|` exceeds this.
const LOG_CAP: f64 = 650.0;
const LN_MAX: f64 = 709.0;

fn f_tol() -> QuadTol {
    QuadTol {
        abs: 1e-15,
        rel: 1e-14,
        max_intervals: 4000,
    }
}

fn cap_tol(scale: f64) -> QuadTol {
    QuadTol {
        abs: 1e-15 * scale.max(1e-290),
        rel: 2e-13,
        max_intervals: 4000,
    }
}

#[derive(Debug, Clone)]
struct Side {
    /// Sign of the direction away from 0.
    dir: f64,
    /// `s_0 = 0, s_1, ...` moving monotonically away from 0.
    knots: Vec<f64>,
    int_f: Vec<f64>,
    int_big_f: Vec<f64>,
    /// Finite domain boundary on this side, if any.
    boundary: Option<f64>,
}

impl Side {
    fn build(f: &ScalarFn, dir: f64) -> Result<Side> {
        let boundary = if dir > 0.0 { f.hi } else { f.lo };
        let boundary = boundary.is_finite().then_some(boundary);
        let mut targets = Vec::new();
        match boundary {
            None => {
                for k in 1..=256 {
                    targets.push(dir * 0.25 * k as f64);
                }
                let mut s = 64.0;
                while s < 1e7 {
                    s *= 1.25;
                    targets.push(dir * s);
                }
            }
            Some(b) => {
                let mut d = b.abs();
                while d > b.abs() * 1e-10 {
                    d *= 0.8;
                    targets.push(b - dir * d);
                }
            }
        }
        let mut side = Side {
            dir,
            knots: vec![0.0],
            int_f: vec![0.0],
            int_big_f: vec![0.0],
            boundary,
        };
        for s in targets {
            let k = side.knots.len() - 1;
            let a = side.knots[k];
            let i_f = side.int_f[k] + quad::integrate(|x| f.eval(x), a, s, f_tol())?.value;
            let g = side.int_big_f[k] + side.integrate_big_f(f, k, s)?;
            if !(i_f.is_finite() && g.is_finite()) {
                break;
            }
            side.knots.push(s);
            side.int_f.push(i_f);
            side.int_big_f.push(g);
            if i_f.abs() > LOG_CAP {
                break;
            }
        }
        Ok(side)
    }

    /// Index of the last knot not beyond `u`.
    fn locate(&self, u: f64) -> usize {
        let x = u * self.dir;
        let idx = self.knots.partition_point(|&s| s * self.dir <= x);
        idx.saturating_sub(1)
    }

    fn log_big_f(&self, f: &ScalarFn, k: usize, s: f64) -> Result<f64> {
        Ok(self.int_f[k] + quad::integrate(|x| f.eval(x), self.knots[k], s, f_tol())?.value)
    }

    /// `∫_{s_k}^{u} F`.
    fn integrate_big_f(&self, f: &ScalarFn, k: usize, u: f64) -> Result<f64> {
        let a = self.knots[k];
        let base = self.int_f[k];
        let scale = base.min(LN_MAX).exp();
        let mut inner_err = None;
        let r = quad::integrate(
            |x| match quad::integrate(|y| f.eval(y), a, x, f_tol()) {
                Ok(r) => (base + r.value).min(LN_MAX + 10.0).exp(),
                Err(e) => {
                    inner_err.get_or_insert(e);
                    f64::NAN
                }
            },
            a,
            u,
            cap_tol(scale),
        );
        if let Some(e) = inner_err {
            return Err(e);
        }
        match r {
            Ok(r) => Ok(r.value),
            Err(Error::Quadrature { estimate, .. }) if estimate.is_infinite() => Ok(self.dir * f64::INFINITY),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideVerdict {
    Divergent,
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Holds {
    Yes,
    No,
    Inconclusive,
}

/// Outcome of the two-sided divergence test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NocVerdict {
    pub forward: SideVerdict,
    pub backward: SideVerdict,
    pub holds: Holds,
    pub p_hat_fwd: f64,
    pub p_hat_bwd: f64,
    #[serde(skip)]
    pub notes: Vec<String>,
}

impl NocVerdict {
    fn combine(forward: SideReport, backward: SideReport) -> Self {
        let holds = match (forward.verdict, backward.verdict) {
            (SideVerdict::Divergent, SideVerdict::Divergent) => Holds::Yes,
            (SideVerdict::Convergent, _) | (_, SideVerdict::Convergent) => Holds::No,
            _ => Holds::Inconclusive,
        };
        let mut notes = forward.notes;
        notes.extend(backward.notes);
        NocVerdict {
            forward: forward.verdict,
            backward: backward.verdict,
            holds,
            p_hat_fwd: forward.p_hat,
            p_hat_bwd: backward.p_hat,
            notes,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("verdict serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SideReport {
    verdict: SideVerdict,
    p_hat: f64,
    notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Finite,
    Infinite,
    /// Tail could not be classified; `value` is `G` at the sampling limit.
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub value: f64,
    pub kind: EndpointKind,
    pub error: f64,
}

impl Endpoint {
    pub fn is_finite(&self) -> bool {
        self.kind == EndpointKind::Finite
    }
}

pub const DEFAULT_S_MAX: f64 = 1e5;
pub const DEFAULT_MARGIN: f64 = 0.1;

/// `f`, `F`, `G`, `H` and the limits of `G`.
#[derive(Debug, Clone)]
pub struct TransformPair {
    f: ScalarFn,
    pos: Side,
    neg: Side,
    tol: f64,
    a_g: Endpoint,
    b_g: Endpoint,
}

/// Value of `H` together with whether the argument had to be clamped into
/// the open range of `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverse {
    pub u: f64,
    pub clamped: bool,
}

pub fn build_transform(f: ScalarFn, tol: f64) -> Result<TransformPair> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::domain(format!("transform tolerance must lie in (0, 1e-4] (got {tol:e})")));
    }
    if !f.eval(0.0).is_finite() {
        return Err(Error::domain("f must be finite at 0"));
    }
    let pos = Side::build(&f, 1.0)?;
    let neg = Side::build(&f, -1.0)?;
    let placeholder = Endpoint {
        value: 0.0,
        kind: EndpointKind::LowerBound,
        error: 0.0,
    };
    let mut tp = TransformPair {
        f,
        pos,
        neg,
        tol,
        a_g: placeholder,
        b_g: placeholder,
    };
    let (a, b) = endpoints(&tp, DEFAULT_S_MAX)?;
    tp.a_g = a;
    tp.b_g = b;
    Ok(tp)
}

impl TransformPair {
    pub fn f(&self) -> &ScalarFn {
        &self.f
    }

    fn side(&self, u: f64) -> &Side {
        if u >= 0.0 {
            &self.pos
        } else {
            &self.neg
        }
    }

    fn check_domain(&self, u: f64) -> Result<()> {
        if u.is_nan() || (u != 0.0 && !self.f.contains(u)) {
            return Err(Error::domain(format!(
                "u = {u} lies outside the domain ({}, {}) of f",
                self.f.lo, self.f.hi
            )));
        }
        Ok(())
    }

    /// `∫₀ᵘ f`.
    pub fn log_big_f(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        let side = self.side(u);
        side.log_big_f(&self.f, side.locate(u), u)
    }

    /// `F(u) = exp(∫₀ᵘ f)`.
    pub fn big_f(&self, u: f64) -> Result<f64> {
        Ok(self.log_big_f(u)?.exp())
    }

    /// `G(u)`; saturates to `±∞` when `F` overflows.
    pub fn g(&self, u: f64) -> Result<f64> {
        self.check_domain(u)?;
        let side = self.side(u);
        let k = side.locate(u);
        Ok(side.int_big_f[k] + side.integrate_big_f(&self.f, k, u)?)
    }

    pub fn a_g(&self) -> Endpoint {
        self.a_g
    }

    pub fn b_g(&self) -> Endpoint {
        self.b_g
    }

    /// `H(v) = G⁻¹(v)`.
    pub fn h(&self, v: f64) -> Result<f64> {
        self.h_checked(v).map(|r| r.u)
    }

    /// `H(v)`, clamping `v` into `(a_G + 1e-12, b_G - 1e-12)` when the
    /// corresponding endpoint is finite.
    pub fn h_checked(&self, v: f64) -> Result<Inverse> {
        if !v.is_finite() {
            return Err(Error::domain(format!("H needs a finite argument (got {v})")));
        }
        let mut v = v;
        let mut clamped = false;
        if self.b_g.is_finite() && v > self.b_g.value - 1e-12 {
            v = self.b_g.value - 1e-12;
            clamped = true;
        }
        if self.a_g.is_finite() && v < self.a_g.value + 1e-12 {
            v = self.a_g.value + 1e-12;
            clamped = true;
        }
        if v == 0.0 {
            return Ok(Inverse { u: 0.0, clamped });
        }
        let dir = v.signum();
        let boundary = if dir > 0.0 { self.f.hi } else { self.f.lo };
        // bracket [lo, hi] in the direction of v
        let mut inner = 0.0;
        let mut step = 1.0;
        let outer;
        let mut iterations = 0;
        loop {
            let mut cand = inner + dir * step;
            if boundary.is_finite() && (cand - boundary) * dir >= 0.0 {
                cand = inner + 0.5 * (boundary - inner);
            }
            let gc = self.g(cand)?;
            if (gc - v) * dir >= 0.0 {
                outer = cand;
                break;
            }
            inner = cand;
            step *= 2.0;
            iterations += 1;
            if iterations > 2000 || step > 1e300 {
                return Err(Error::Exhausted(format!("could not bracket H({v})")));
            }
        }
        let (mut lo, mut hi) = if dir > 0.0 { (inner, outer) } else { (outer, inner) };
        let mut x = 0.5 * (lo + hi);
        for _ in 0..300 {
            let gx = self.g(x)? - v;
            if gx == 0.0 {
                break;
            }
            if gx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let fx = self.big_f(x)?;
            let newton = x - gx / fx;
            let next = if newton > lo && newton < hi && fx.is_finite() && fx > 0.0 {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let converged = (next - x).abs() <= self.tol * x.abs().max(1.0) || gx.abs() <= 4.0 * f64::EPSILON * v.abs();
            x = next;
            if converged || hi - lo <= f64::EPSILON * x.abs().max(1e-300) {
                break;
            }
        }
        Ok(Inverse { u: x, clamped })
    }

    /// Tail classification of `∫₀^{±∞} F` with default margin.
    pub fn noc(&self, s_max: f64, margin: f64) -> Result<NocVerdict> {
        if s_max < 1e4 {
            return Err(Error::domain(format!("s_max must be >= 1e4 (got {s_max})")));
        }
        if !(margin > 0.0 && margin < 1.0) {
            return Err(Error::domain(format!("margin must lie in (0, 1) (got {margin})")));
        }
        let fwd = self.classify_side(&self.pos, s_max, margin)?;
        let bwd = self.classify_side(&self.neg, s_max, margin)?;
        Ok(NocVerdict::combine(fwd, bwd))
    }

    /// Sample point at distance parameter `x` on a side: `±x` on an infinite
    /// side, `boundary ∓ x` on a finite one.
    fn sample_point(side: &Side, x: f64) -> f64 {
        match side.boundary {
            None => side.dir * x,
            Some(b) => b - side.dir * x,
        }
    }

    /// Range `[x_lo, x_hi]` of the tail variable for the regression.
    fn tail_range(side: &Side, s_max: f64) -> (f64, f64) {
        match side.boundary {
            None => (s_max / 100.0, s_max),
            Some(b) => {
                let d = b.abs() / s_max;
                (d, 100.0 * d)
            }
        }
    }

    fn classify_side(&self, side: &Side, s_max: f64, margin: f64) -> Result<SideReport> {
        let (x_lo, x_hi) = Self::tail_range(side, s_max);
        let n = 32;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut overflow = false;
        for j in 0..n {
            let x = x_lo * (x_hi / x_lo).powf(j as f64 / (n - 1) as f64);
            let s = Self::sample_point(side, x);
            let k = side.locate(s);
            let lf = side.log_big_f(&self.f, k, s)?;
            if lf > LN_MAX {
                overflow = true;
            }
            xs.push(x.ln());
            ys.push(lf);
        }
        let p_hat = slope(&xs, &ys);
        let mut notes = Vec::new();
        if overflow {
            notes.push(format!("F overflows on the {} side", side_name(side)));
            return Ok(SideReport {
                verdict: SideVerdict::Divergent,
                p_hat,
                notes,
            });
        }
        // F ~ x^p: at infinity ∫ diverges iff p >= -1; at a finite boundary
        // (x = distance) it diverges iff p <= -1
        let sign = if side.boundary.is_some() { -1.0 } else { 1.0 };
        let z = sign * (p_hat + 1.0);
        let mut verdict = if z > margin {
            SideVerdict::Divergent
        } else if z < -margin {
            SideVerdict::Convergent
        } else {
            SideVerdict::Inconclusive
        };
        if verdict != SideVerdict::Inconclusive {
            if let Some(p_inc) = self.increment_exponent(side, x_hi)? {
                let z_inc = sign * (p_inc + 1.0);
                if z_inc * z < 0.0 {
                    notes.push(format!(
                        "{} side: regression exponent {p_hat:.4} and increment exponent {p_inc:.4} disagree",
                        side_name(side)
                    ));
                    verdict = SideVerdict::Inconclusive;
                }
            }
        }
        Ok(SideReport { verdict, p_hat, notes })
    }

    /// Exponent implied by the ratio of successive quadrature increments over
    /// `[x/4, x/2]` and `[x/2, x]`; `None` when the increments underflow.
    fn increment_exponent(&self, side: &Side, x: f64) -> Result<Option<f64>> {
        let (x1, x2, x4) = match side.boundary {
            None => (x, x / 2.0, x / 4.0),
            Some(_) => {
                let d = x / 100.0;
                (d, 2.0 * d, 4.0 * d)
            }
        };
        let s1 = Self::sample_point(side, x1);
        let s2 = Self::sample_point(side, x2);
        let s4 = Self::sample_point(side, x4);
        let g1 = self.g(s1)?;
        let g2 = self.g(s2)?;
        let g4 = self.g(s4)?;
        let near = (g2 - g4).abs();
        let far = (g1 - g2).abs();
        if !(near > 0.0 && far > 0.0 && near.is_finite() && far.is_finite()) {
            return Ok(None);
        }
        Ok(Some(match side.boundary {
            // increments over [x/4, x/2] then [x/2, x] scale by 2^{p+1}
            None => (far / near).log2() - 1.0,
            // distances shrink: [2d, 4d] then [d, 2d] scale by 2^{-(p+1)}
            Some(_) => (near / far).log2() - 1.0,
        }))
    }
}

fn side_name(side: &Side) -> &'static str {
    if side.dir > 0.0 {
        "forward"
    } else {
        "backward"
    }
}

/// Least-squares slope of `ys` against `xs`.
pub(crate) fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Two-sided divergence test for `f` built into a fresh transform.
pub fn noc_check(f: &ScalarFn, s_max: f64, margin: f64) -> Result<NocVerdict> {
    let tp = build_transform(f.clone(), 1e-12)?;
    tp.noc(s_max, margin)
}

/// `(a_G, b_G)`: the limits of `G` with a power-law tail correction beyond
/// the sampling limit.
pub fn endpoints(tp: &TransformPair, s_max: f64) -> Result<(Endpoint, Endpoint)> {
    if s_max < 1e4 {
        return Err(Error::domain(format!("s_max must be >= 1e4 (got {s_max})")));
    }
    let a = tp.endpoint_side(&tp.neg, s_max)?;
    let b = tp.endpoint_side(&tp.pos, s_max)?;
    Ok((a, b))
}

impl TransformPair {
    fn endpoint_side(&self, side: &Side, s_max: f64) -> Result<Endpoint> {
        let report = self.classify_side(side, s_max, DEFAULT_MARGIN)?;
        let (x_lo, x_hi) = Self::tail_range(side, s_max);
        // for an infinite side the tail starts at x_hi, for a finite one at x_lo
        let (x_edge, x_half) = match side.boundary {
            None => (x_hi, x_hi / 2.0),
            Some(_) => (x_lo, 2.0 * x_lo),
        };
        let s_edge = Self::sample_point(side, x_edge);
        match report.verdict {
            SideVerdict::Divergent => Ok(Endpoint {
                value: side.dir * f64::INFINITY,
                kind: EndpointKind::Infinite,
                error: 0.0,
            }),
            SideVerdict::Inconclusive => Ok(Endpoint {
                value: self.g(s_edge)?,
                kind: EndpointKind::LowerBound,
                error: f64::INFINITY,
            }),
            SideVerdict::Convergent => {
                let g_edge = self.g(s_edge)?;
                let s_half = Self::sample_point(side, x_half);
                let lf_edge = side.log_big_f(&self.f, side.locate(s_edge), s_edge)?;
                let lf_half = side.log_big_f(&self.f, side.locate(s_half), s_half)?;
                let p = (lf_edge - lf_half) / (x_edge / x_half).ln();
                let f_edge = lf_edge.exp();
                // ∫ of C x^p beyond the edge (toward ∞, or toward distance 0)
                let tail = match side.boundary {
                    None if p < -1.0 => f_edge * x_edge / (-p - 1.0),
                    Some(_) if p > -1.0 => f_edge * x_edge / (p + 1.0),
                    _ => 0.0,
                };
                Ok(Endpoint {
                    value: g_edge + side.dir * tail,
                    kind: EndpointKind::Finite,
                    error: 1e-12 * g_edge.abs() + 1e-2 * tail,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_identity() {
        let tp = build_transform(ScalarFn::zero(), 1e-12).unwrap();
        for u in [-7.5, -1.0, 0.0, 0.3, 12.0] {
            assert!((tp.g(u).unwrap() - u).abs() < 1e-12);
            assert!((tp.h(u).unwrap() - u).abs() < 1e-10);
        }
        assert_eq!(tp.a_g().kind, EndpointKind::Infinite);
        assert_eq!(tp.b_g().kind, EndpointKind::Infinite);
    }

    #[test]
    fn arctan_case() {
        let tp = build_transform(ScalarFn::example1(-1.0), 1e-12).unwrap();
        let r2 = 2f64.sqrt();
        for u in [-40.0, -3.0, 0.5, 2.0, 100.0, 3000.0] {
            let exact = (r2 * u).atan() / r2;
            assert!((tp.g(u).unwrap() - exact).abs() < 1e-11, "u = {u}");
        }
        let b = tp.b_g();
        assert!(b.is_finite());
        assert!((b.value - std::f64::consts::PI / (2.0 * r2)).abs() < 1e-8);
        assert!((tp.a_g().value + b.value).abs() < 1e-8);
    }

    #[test]
    fn log_case_on_half_line() {
        let tp = build_transform(ScalarFn::example2(2.0), 1e-12).unwrap();
        for u in [-0.9, -0.5, 0.5, 10.0, 1e4] {
            assert!((tp.g(u).unwrap() - (1.0 + u).ln()).abs() < 1e-10, "u = {u}");
        }
        assert!(tp.g(-1.0).is_err());
        let tp = build_transform(ScalarFn::example2(4.0), 1e-12).unwrap();
        assert!((tp.b_g().value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn h_clamps_near_finite_endpoint() {
        let tp = build_transform(ScalarFn::example1(-1.0), 1e-12).unwrap();
        let b = tp.b_g().value;
        let r = tp.h_checked(b + 1.0).unwrap();
        assert!(r.clamped);
        assert!(r.u > 1e9);
        let r = tp.h_checked(0.5).unwrap();
        assert!(!r.clamped);
        assert!((tp.g(r.u).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn verdict_json_shape() {
        let v = noc_check(&ScalarFn::example1(-0.4), 1e5, 0.1).unwrap();
        let j = v.to_json();
        let keys: Vec<_> = j.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 5);
        assert_eq!(j["holds"], "yes");
    }

    #[test]
    fn preconditions() {
        assert!(noc_check(&ScalarFn::zero(), 10.0, 0.1).is_err());
        assert!(build_transform(ScalarFn::zero(), 0.0).is_err());
        assert!(ScalarFn::new("x", 0.5, 2.0, |x| x).is_err());
    }

    #[test]
    fn example_verdicts() {
        let v = |f: ScalarFn| noc_check(&f, DEFAULT_S_MAX, DEFAULT_MARGIN).unwrap();
        assert_eq!(v(ScalarFn::example1(-0.4)).holds, Holds::Yes);
        assert_eq!(v(ScalarFn::example1(-1.0)).holds, Holds::No);
        assert_eq!(v(ScalarFn::example3_u(-1.5)).forward, SideVerdict::Convergent);
        assert_eq!(v(ScalarFn::example4(3, -2.0)).holds, Holds::No);
        let ex2 = v(ScalarFn::example2(4.0));
        assert_eq!(ex2.forward, SideVerdict::Convergent);
        assert_eq!(ex2.backward, SideVerdict::Divergent);
        let ex2 = v(ScalarFn::example2(1.0));
        assert_eq!(ex2.forward, SideVerdict::Divergent);
        assert_eq!(ex2.backward, SideVerdict::Convergent);
        let zero = v(ScalarFn::zero());
        assert_eq!(zero.holds, Holds::Yes);
        assert!(zero.p_hat_fwd.abs() < 1e-12);
    }

    #[test]
    fn calibration_on_power_family() {
        for p in [-3.0, -1.5, -1.2, -0.8, -0.5, 0.0, 0.7] {
            let v = noc_check(&ScalarFn::power_tail(p), DEFAULT_S_MAX, DEFAULT_MARGIN).unwrap();
            let expect = if p > -1.0 { SideVerdict::Divergent } else { SideVerdict::Convergent };
            assert_eq!(v.forward, expect, "p = {p}");
            assert_eq!(v.backward, expect, "p = {p}");
        }
        let v = noc_check(&ScalarFn::power_tail(-1.02), DEFAULT_S_MAX, DEFAULT_MARGIN).unwrap();
        assert_eq!(v.holds, Holds::Inconclusive);
    }

    #[test]
    fn overflowing_f_counts_as_divergent() {
        let v = noc_check(&ScalarFn::on_line("1", |_| 1.0), DEFAULT_S_MAX, DEFAULT_MARGIN).unwrap();
        assert_eq!(v.forward, SideVerdict::Divergent);
        assert!(!v.notes.is_empty());
        assert_eq!(v.backward, SideVerdict::Convergent);
    }

    #[test]
    fn round_trip() {
        let fs = [
            ScalarFn::zero(),
            ScalarFn::example1(-1.0),
            ScalarFn::example1(0.5),
            ScalarFn::example3_v(-0.7),
            ScalarFn::example4(3, -2.0),
        ];
        for f in fs {
            let tp = build_transform(f, 1e-13).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=40 {
                let u = -10.0 + 0.5 * j as f64;
                let g = tp.g(u).unwrap();
                assert!(g > prev);
                prev = g;
                assert!((tp.h(g).unwrap() - u).abs() < 1e-9, "{:?} at {u}", tp.f());
            }
        }
    }
}
