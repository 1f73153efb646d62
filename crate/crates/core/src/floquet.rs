//! Monodromy matrices, Floquet multipliers, instability-interval scans and the
//! closed-form multi-period values of the fundamental solutions.
//!
//! The state vector is `x = (w_t, w)` and the system is
//! `x' = [[0, -λα + q], [1, 0]] x`, so for the monodromy `X(1, 0)`:
//! `b21 = w(1)` for data `(w, w_t)(0) = (0, 1)` and `b22 = w(1)` for
//! `(w, w_t)(0) = (1, 0)`.

use crate::coeffs::HillPotential;
use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `|trace| = 2` band used for classification.
pub const BOUNDARY_BAND: f64 = 1e-9;

/// Overflow threshold for `M ln μ₀`.
const LN_OVERFLOW: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub lambda: f64,
    pub b11: f64,
    pub b12: f64,
    pub b21: f64,
    pub b22: f64,
}

impl Monodromy {
    pub fn from_entries(lambda: f64, b11: f64, b12: f64, b21: f64, b22: f64) -> Self {
        Monodromy { lambda, b11, b12, b21, b22 }
    }

    pub fn det(&self) -> f64 {
        self.b11 * self.b22 - self.b12 * self.b21
    }

    pub fn trace(&self) -> f64 {
        self.b11 + self.b22
    }

    fn matrix(&self) -> Mat2 {
        [[self.b11, self.b12], [self.b21, self.b22]]
    }
}

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn mat_pow(m: &Mat2, mut k: u64) -> Mat2 {
    let mut result = [[1.0, 0.0], [0.0, 1.0]];
    let mut base = *m;
    while k > 0 {
        if k & 1 == 1 {
            result = mat_mul(&result, &base);
        }
        base = mat_mul(&base, &base);
        k >>= 1;
    }
    result
}

fn hill_rhs<'a>(pot: &'a HillPotential, lambda: f64) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    // pairs (w_t, w) stacked column after column
    move |t, y, dy| {
        let (alpha, q) = pot.alpha_q(t);
        let k = -lambda * alpha + q;
        for c in 0..y.len() / 2 {
            dy[2 * c] = k * y[2 * c + 1];
            dy[2 * c + 1] = y[2 * c];
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(Error::domain(format!("tolerance must lie in [1e-13, 1e-6] (got {tol:e})")));
    }
    Ok(())
}

/// Period map `X_λ(1, 0)` of the Hill system.
pub fn monodromy(pot: &HillPotential, lambda: f64, tol: f64) -> Result<Monodromy> {
    check_tol(tol)?;
    if !lambda.is_finite() {
        return Err(Error::domain("lambda must be finite"));
    }
    let y = ode::integrate(hill_rhs(pot, lambda), 0.0, &[1.0, 0.0, 0.0, 1.0], 1.0, OdeOptions::with_tol(tol))
        .map_err(|e| e.at_lambda(lambda))?;
    let m = Monodromy::from_entries(lambda, y[0], y[2], y[1], y[3]);
    let drift = (m.det() - 1.0).abs();
    if drift > 100.0 * tol {
        return Err(Error::Integration {
            t: 1.0,
            reason: format!("Liouville determinant drifted by {drift:e}"),
        }
        .at_lambda(lambda));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityClass {
    Stable,
    Unstable,
    Boundary,
}

impl StabilityClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityClass::Stable => "stable",
            StabilityClass::Unstable => "unstable",
            StabilityClass::Boundary => "boundary",
        }
    }
}

/// The multipliers `μ₀`, `μ₀⁻¹` of a monodromy matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPair {
    pub class: StabilityClass,
    /// `|μ|` of the dominant multiplier; `> 1` when unstable, `1` otherwise.
    pub mu0: f64,
    /// Sign of the real multipliers (`-1` when trace < -2).
    pub sign: f64,
    /// For stable pairs the multipliers are `exp(±iθ)` with `2cos θ = trace`.
    pub rotation: Option<f64>,
}

impl MultiplierPair {
    /// The dominant multiplier with its sign.
    pub fn eigenvalue(&self) -> f64 {
        self.sign * self.mu0
    }
}

pub fn classify(m: &Monodromy, boundary_tol: f64) -> MultiplierPair {
    let tr = m.trace();
    let excess = tr.abs() - 2.0;
    let sign = if tr < 0.0 { -1.0 } else { 1.0 };
    if excess > boundary_tol {
        let mu0 = 0.5 * (tr.abs() + (tr * tr - 4.0).sqrt());
        MultiplierPair {
            class: StabilityClass::Unstable,
            mu0,
            sign,
            rotation: None,
        }
    } else if excess < -boundary_tol {
        MultiplierPair {
            class: StabilityClass::Stable,
            mu0: 1.0,
            sign,
            rotation: Some((0.5 * tr).acos()),
        }
    } else {
        MultiplierPair {
            class: StabilityClass::Boundary,
            mu0: 1.0,
            sign,
            rotation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstabilityInterval {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub max_abs_trace: f64,
    pub witness_lambda: f64,
}

impl InstabilityInterval {
    pub fn width(&self) -> f64 {
        self.lambda_hi - self.lambda_lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartRow {
    pub lambda: f64,
    pub trace: f64,
    pub abs_trace: f64,
    pub class: StabilityClass,
}

/// A uniform λ-scan: one chart row per grid point plus refined intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityScan {
    pub rows: Vec<ChartRow>,
    pub intervals: Vec<InstabilityInterval>,
}

pub fn scan(pot: &HillPotential, range: (f64, f64), grid_points: usize, tol: f64) -> Result<StabilityScan> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::domain(format!("lambda range must satisfy 0 < lo < hi (got ({lo}, {hi}))")));
    }
    if grid_points < 100 {
        return Err(Error::domain(format!("grid_points must be >= 100 (got {grid_points})")));
    }
    check_tol(tol)?;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let lambdas: Vec<f64> = (0..grid_points)
        .map(|j| if j + 1 == grid_points { hi } else { lo + step * j as f64 })
        .collect();
    let traces: Vec<f64> = lambdas
        .par_iter()
        .map(|&lambda| monodromy(pot, lambda, tol).map(|m| m.trace()))
        .collect::<Result<_>>()?;

    let rows: Vec<ChartRow> = lambdas
        .iter()
        .zip(&traces)
        .map(|(&lambda, &trace)| {
            let excess = trace.abs() - 2.0;
            let class = if excess > BOUNDARY_BAND {
                StabilityClass::Unstable
            } else if excess < -BOUNDARY_BAND {
                StabilityClass::Stable
            } else {
                StabilityClass::Boundary
            };
            ChartRow {
                lambda,
                trace,
                abs_trace: trace.abs(),
                class,
            }
        })
        .collect();

    // contiguous unstable runs
    let mut runs = Vec::new();
    let mut j = 0;
    while j < rows.len() {
        if rows[j].class == StabilityClass::Unstable {
            let start = j;
            while j + 1 < rows.len() && rows[j + 1].class == StabilityClass::Unstable {
                j += 1;
            }
            runs.push((start, j));
        }
        j += 1;
    }

    let width = step * 1e-3;
    let g = |lambda: f64| monodromy(pot, lambda, tol).map(|m| m.trace().abs() - 2.0);
    let intervals = runs
        .par_iter()
        .map(|&(start, end)| {
            let lambda_lo = if start == 0 {
                lo
            } else {
                bisect_crossing(&g, lambdas[start - 1], lambdas[start], width)?
            };
            let lambda_hi = if end + 1 == rows.len() {
                hi
            } else {
                bisect_crossing(&g, lambdas[end + 1], lambdas[end], width)?
            };
            let (witness, best) = rows[start..=end]
                .iter()
                .map(|r| (r.lambda, r.abs_trace))
                .fold((f64::NAN, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
            Ok(InstabilityInterval {
                lambda_lo,
                lambda_hi,
                max_abs_trace: best,
                witness_lambda: witness,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityScan { rows, intervals })
}

/// Bisection for `g = 0` between a point with `g <= 0` and one with `g > 0`;
/// returns the midpoint of the final bracket.
fn bisect_crossing<G: Fn(f64) -> Result<f64>>(g: &G, mut inside_stable: f64, mut inside_unstable: f64, width: f64) -> Result<f64> {
    while (inside_unstable - inside_stable).abs() > width {
        let mid = 0.5 * (inside_stable + inside_unstable);
        if g(mid)? > 0.0 {
            inside_unstable = mid;
        } else {
            inside_stable = mid;
        }
    }
    Ok(0.5 * (inside_stable + inside_unstable))
}

/// Sorted, disjoint instability intervals of `pot` inside `range`.
pub fn scan_instability(
    pot: &HillPotential,
    range: (f64, f64),
    grid_points: usize,
    tol: f64,
) -> Result<Vec<InstabilityInterval>> {
    scan(pot, range, grid_points, tol).map(|s| s.intervals)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// A λ inside one of `intervals` where the hypotheses `b21 ≠ 0` and
/// `b22 ≠ μ₀⁻¹` of the multi-period formulas hold (both by more than 1e-6).
/// Each interval's witness is tried first, then a golden-ratio sequence of
/// interior points.
pub fn find_good_lambda(intervals: &[InstabilityInterval], pot: &HillPotential, tol: f64) -> Result<(f64, Monodromy)> {
    if intervals.is_empty() {
        return Err(Error::domain("find_good_lambda needs at least one instability interval"));
    }
    let mut max_b21: f64 = 0.0;
    for iv in intervals {
        let width = iv.width();
        let mut candidates = vec![iv.witness_lambda];
        let mut frac: f64 = 0.5;
        for _ in 0..48 {
            frac = (frac + GOLDEN).fract();
            candidates.push(iv.lambda_lo + width * (0.02 + 0.96 * frac));
        }
        for lambda in candidates {
            if !(lambda > iv.lambda_lo && lambda < iv.lambda_hi) {
                continue;
            }
            let m = monodromy(pot, lambda, tol)?;
            let pair = classify(&m, BOUNDARY_BAND);
            if pair.class != StabilityClass::Unstable {
                continue;
            }
            max_b21 = max_b21.max(m.b21.abs());
            let mu = pair.eigenvalue();
            if m.b21.abs() > 1e-6 && (m.b22 - 1.0 / mu).abs() > 1e-6 {
                return Ok((lambda, m));
            }
        }
    }
    Err(Error::Exhausted(format!(
        "no sampled lambda satisfies |b21| > 1e-6 and |b22 - 1/mu0| > 1e-6 (max |b21| found {max_b21:e})"
    )))
}

/// A real number stored as `mantissa · e^{ln_scale}` so that values beyond
/// the `f64` range survive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledReal {
    pub mantissa: f64,
    pub ln_scale: f64,
}

impl ScaledReal {
    pub fn plain(x: f64) -> Self {
        ScaledReal { mantissa: x, ln_scale: 0.0 }
    }

    pub fn is_scaled(&self) -> bool {
        self.ln_scale != 0.0
    }

    /// Value as `f64` (may be infinite when scaled).
    pub fn value(&self) -> f64 {
        self.mantissa * self.ln_scale.exp()
    }

    pub fn ln_abs(&self) -> f64 {
        self.mantissa.abs().ln() + self.ln_scale
    }
}

fn unstable_eigenvalue(m: &Monodromy) -> Result<f64> {
    let pair = classify(m, BOUNDARY_BAND);
    if pair.class != StabilityClass::Unstable {
        return Err(Error::domain(format!(
            "multi-period formulas need an unstable monodromy (trace = {})",
            m.trace()
        )));
    }
    Ok(pair.eigenvalue())
}

/// `W(M)` and `V(M)` for the solutions with data `(W, W_t)(0) = (0, 1)` and
/// `(V, V_t)(0) = (1, 0)`:
///
/// ```text
/// W(M) = b21 (μ^M - μ^{-M}) / (μ - μ^{-1})
/// V(M) = [μ^M (b22 - μ^{-1}) + μ^{-M} (μ - b22)] / (μ - μ^{-1})
/// ```
///
/// with `μ` the signed dominant multiplier. When `M ln|μ| > 700` both values
/// come back scaled by `|μ|^{-M}`.
pub fn multi_period_values(m: &Monodromy, big_m: u32) -> Result<(ScaledReal, ScaledReal)> {
    let mu = unstable_eigenvalue(m)?;
    if m.b21 == 0.0 || m.b22 == 1.0 / mu {
        return Err(Error::domain("need b21 != 0 and b22 != 1/mu0"));
    }
    let d = mu - 1.0 / mu;
    let mm = big_m as i32;
    let ln_growth = big_m as f64 * mu.abs().ln();
    if ln_growth <= LN_OVERFLOW {
        let up = mu.powi(mm);
        let down = mu.powi(-mm);
        let w = m.b21 * (up - down) / d;
        let v = (up * (m.b22 - 1.0 / mu) + down * (mu - m.b22)) / d;
        Ok((ScaledReal::plain(w), ScaledReal::plain(v)))
    } else {
        let sign_m = if mu < 0.0 && big_m % 2 == 1 { -1.0 } else { 1.0 };
        // μ^{-M} / |μ|^M underflows to zero here
        let w = m.b21 * sign_m / d;
        let v = sign_m * (m.b22 - 1.0 / mu) / d;
        Ok((
            ScaledReal { mantissa: w, ln_scale: ln_growth },
            ScaledReal { mantissa: v, ln_scale: ln_growth },
        ))
    }
}

/// An alternative closed form
/// `V(M) = -μ^M (b22 - μ^{-1})/(μ - μ^{-1}) + μ^{-M} b21 b12 / ((μ - b11)(μ - μ^{-1}))`,
/// kept for diagnostics only: it does not reduce to `b22` at `M = 1`.
pub fn multi_period_alt_v(m: &Monodromy, big_m: u32) -> Result<f64> {
    let mu = unstable_eigenvalue(m)?;
    let d = mu - 1.0 / mu;
    let mm = big_m as i32;
    Ok(-mu.powi(mm) * (m.b22 - 1.0 / mu) / d + mu.powi(-mm) * m.b21 * m.b12 / ((mu - m.b11) * d))
}

/// Evolve data `(w, w_t)` from 0 to `t` using `X(t,0) = X(t-⌊t⌋,0) X(1,0)^⌊t⌋`:
/// integer periods by repeated squaring, the remainder by direct integration.
pub fn propagate(m: &Monodromy, pot: &HillPotential, lambda: f64, t: f64, data: (f64, f64), tol: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("propagate needs t >= 0 (got {t})")));
    }
    let periods = t.floor();
    let frac = t - periods;
    let x0 = [data.1, data.0];
    let p = mat_pow(&m.matrix(), periods as u64);
    let x = [p[0][0] * x0[0] + p[0][1] * x0[1], p[1][0] * x0[0] + p[1][1] * x0[1]];
    if !(x[0].is_finite() && x[1].is_finite()) {
        return Err(Error::Overflow(format!("solution overflows after {periods} periods")));
    }
    let x = if frac > 0.0 {
        ode::integrate(hill_rhs(pot, lambda), 0.0, &x, frac, OdeOptions::with_tol(tol.clamp(1e-13, 1e-6)))?
    } else {
        x.to_vec()
    };
    Ok((x[1], x[0]))
}

/// Direct integration of the Hill equation over `[0, t]`; the oracle for
/// [`propagate`] and the multi-period closed forms.
pub fn integrate_direct(pot: &HillPotential, lambda: f64, t: f64, data: (f64, f64), tol: f64) -> Result<(f64, f64)> {
    let y = ode::integrate(hill_rhs(pot, lambda), 0.0, &[data.1, data.0], t, OdeOptions::with_tol(tol))?;
    Ok((y[1], y[0]))
}

/// One-period fundamental matrix `X(τ, 0)` sampled on `τ = j/per_period`.
pub(crate) fn period_samples(pot: &HillPotential, lambda: f64, per_period: usize, tol: f64) -> Result<Vec<Mat2>> {
    let times: Vec<f64> = (1..=per_period).map(|j| j as f64 / per_period as f64).collect();
    let states = ode::integrate_at(hill_rhs(pot, lambda), 0.0, &[1.0, 0.0, 0.0, 1.0], &times, OdeOptions::with_tol(tol))?;
    let mut out = vec![[[1.0, 0.0], [0.0, 1.0]]];
    out.extend(states.iter().map(|y| [[y[0], y[2]], [y[1], y[3]]]));
    Ok(out)
}

pub(crate) fn apply_power_then(sample: &Mat2, m: &Monodromy, periods: u64, x0: [f64; 2]) -> [f64; 2] {
    let p = mat_mul(sample, &mat_pow(&m.matrix(), periods));
    [p[0][0] * x0[0] + p[0][1] * x0[1], p[1][0] * x0[0] + p[1][1] * x0[1]]
}

/// The fundamental pair `W` (data `(0, 1)`) and `V` (data `(1, 0)`).
#[derive(Debug, Clone)]
pub struct FundamentalPair {
    pot: HillPotential,
    lambda: f64,
    monodromy: Monodromy,
    tol: f64,
}

impl FundamentalPair {
    pub fn new(pot: &HillPotential, lambda: f64, tol: f64) -> Result<Self> {
        let monodromy = monodromy(pot, lambda, tol)?;
        Ok(FundamentalPair {
            pot: pot.clone(),
            lambda,
            monodromy,
            tol,
        })
    }

    pub fn monodromy(&self) -> &Monodromy {
        &self.monodromy
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn potential(&self) -> &HillPotential {
        &self.pot
    }

    /// `(W(t), W_t(t))`.
    pub fn w(&self, t: f64) -> Result<(f64, f64)> {
        propagate(&self.monodromy, &self.pot, self.lambda, t, (0.0, 1.0), self.tol)
    }

    /// `(V(t), V_t(t))`.
    pub fn v(&self, t: f64) -> Result<(f64, f64)> {
        propagate(&self.monodromy, &self.pot, self.lambda, t, (1.0, 0.0), self.tol)
    }

    /// `V W_t - W V_t`, identically 1.
    pub fn wronskian(&self, t: f64) -> Result<f64> {
        let (w, wt) = self.w(t)?;
        let (v, vt) = self.v(t)?;
        Ok(v * wt - w * vt)
    }
}
