//! Small-data blow-up construction: the initial-data family, discrete
//! Sobolev norms, the exact local solution of the linear equation and the
//! search for a certified crossing of a finite endpoint of `G`.

use crate::coeffs::{hill_potential, PeriodicCoefficient};
use crate::error::{Error, Result};
use crate::floquet::{self, classify, FundamentalPair, ScaledReal, StabilityClass, BOUNDARY_BAND};
use crate::spectral::{unravel, wavenumbers, GridFft};
use crate::transform::TransformPair;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Sobolev order used for `u₁` by default; `u₀` is measured one order higher.
pub fn default_sobolev_order(n: u32) -> u32 {
    (n + 2) / 2 + 1
}

/// Default decay exponent `S = 2n + 1`.
pub fn default_s(n: u32) -> f64 {
    2.0 * n as f64 + 1.0
}

/// Parameters of one member of the data family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupPlan {
    pub s_exp: f64,
    pub m: u32,
    pub a_sign: f64,
    pub y: Vec<f64>,
    pub lambda: f64,
    pub n: u32,
    pub sobolev_order: u32,
    /// `Σ|a_i|` over the chart components the scalar data is copied into.
    pub weight: f64,
}

impl BlowupPlan {
    pub fn new(s_exp: f64, m: u32, a_sign: f64, lambda: f64, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("dimension n must be >= 1"));
        }
        let mut y = vec![0.0; n as usize];
        y[0] = lambda.max(0.0).sqrt();
        let plan = BlowupPlan {
            s_exp,
            m,
            a_sign,
            y,
            lambda,
            n,
            sobolev_order: default_sobolev_order(n),
            weight: 1.0,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n as f64;
        if !(self.s_exp > 2.0 * n) {
            return Err(Error::domain(format!("S must exceed 2n = {} (got {})", 2.0 * n, self.s_exp)));
        }
        if self.m == 0 {
            return Err(Error::domain("M must be a positive integer"));
        }
        if self.a_sign != 1.0 && self.a_sign != -1.0 {
            return Err(Error::domain(format!("A must be +1 or -1 (got {})", self.a_sign)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::domain(format!("lambda must be positive (got {})", self.lambda)));
        }
        if self.y.len() != self.n as usize {
            return Err(Error::domain("y must have n components"));
        }
        let y2: f64 = self.y.iter().map(|v| v * v).sum();
        if (y2 - self.lambda).abs() > 1e-12 * self.lambda.max(1.0) {
            return Err(Error::domain(format!("|y|^2 = {y2} differs from lambda = {}", self.lambda)));
        }
        if !(self.weight > 0.0) {
            return Err(Error::domain("component weight must be positive"));
        }
        Ok(())
    }

    /// `M^{-S}`.
    pub fn amplitude(&self) -> f64 {
        (self.m as f64).powf(-self.s_exp)
    }

    /// `M²`, the cutoff radius of the plateau.
    pub fn sigma(&self) -> f64 {
        (self.m as f64).powi(2)
    }

    /// The region `[0, M] × {|x| ≤ M^{3/2}}` is inside the domain of
    /// dependence of the plateau `|x| ≤ M²` when `M^{3/2} + M max b ≤ M²`.
    pub fn validity_holds(&self, max_b: f64) -> bool {
        let m = self.m as f64;
        m.powf(1.5) + m * max_b <= m * m
    }
}

fn psi(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Radial cutoff: 1 on `|z| ≤ 1`, 0 on `|z| ≥ 2`, smooth in between.
pub fn chi(r: f64) -> f64 {
    let a = psi(2.0 - r);
    let b = psi(r - 1.0);
    if b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The data `u₀ = M^{-S} χ(x/M²)` and
/// `u₁ = A M^{-S} χ(x/M²) exp(-∫₀^{u₀} f) cos(x·y)`.
pub struct DataFields<'a> {
    plan: &'a BlowupPlan,
    tp: &'a TransformPair,
}

pub fn make_data<'a>(plan: &'a BlowupPlan, tp: &'a TransformPair) -> DataFields<'a> {
    DataFields { plan, tp }
}

impl DataFields<'_> {
    pub fn u0(&self, x: &[f64]) -> f64 {
        self.plan.amplitude() * chi(norm(x) / self.plan.sigma())
    }

    pub fn u1(&self, x: &[f64]) -> Result<f64> {
        let c = chi(norm(x) / self.plan.sigma());
        if c == 0.0 {
            return Ok(0.0);
        }
        let u0 = self.plan.amplitude() * c;
        let phase: f64 = x.iter().zip(&self.plan.y).map(|(a, b)| a * b).sum();
        Ok(self.plan.a_sign * self.plan.amplitude() * c * (-self.tp.log_big_f(u0)?).exp() * phase.cos())
    }
}

/// A periodic sampling grid `[-L/2, L/2)^dim` with `points` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub dim: usize,
    pub length: f64,
    pub points: usize,
}

impl TorusGrid {
    pub fn shape(&self) -> Vec<usize> {
        vec![self.points; self.dim]
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of flat index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut multi = vec![0; self.dim];
        unravel(idx, &self.shape(), &mut multi);
        let h = self.length / self.points as f64;
        multi.iter().map(|&j| -0.5 * self.length + h * j as f64).collect()
    }

    pub fn sample<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }

    fn check(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::domain(format!("grid dimension must be 1, 2 or 3 (got {})", self.dim)));
        }
        if self.points < 8 || !self.points.is_power_of_two() {
            return Err(Error::domain(format!("points per axis must be a power of two >= 8 (got {})", self.points)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::domain("grid length must be positive"));
        }
        Ok(())
    }
}

/// `Σ_k weight(ξ_k)|ĉ_k|²` with the top-octave share checked.
fn weighted_energy<W: Fn(&[f64]) -> f64>(values: &[f64], grid: &TorusGrid, weight: W) -> Result<f64> {
    grid.check()?;
    if values.len() != grid.len() {
        return Err(Error::domain("field does not match the grid"));
    }
    let fft = GridFft::new(&grid.shape());
    let spec = fft.forward_real(values);
    let k = wavenumbers(grid.points, grid.length);
    let norm = 1.0 / grid.len() as f64;
    let mut multi = vec![0; grid.dim];
    let mut xi = vec![0.0; grid.dim];
    let mut total = 0.0;
    let mut top = 0.0;
    let shape = grid.shape();
    for (i, z) in spec.iter().enumerate() {
        unravel(i, &shape, &mut multi);
        let mut high = false;
        for (axis, &j) in multi.iter().enumerate() {
            xi[axis] = k[j];
            let idx = crate::spectral::mode_index(j, grid.points).unsigned_abs() as usize;
            if idx > grid.points / 4 {
                high = true;
            }
        }
        let e = weight(&xi) * (z * norm).norm_sqr();
        total += e;
        if high {
            top += e;
        }
    }
    if total > 0.0 && top > 0.01 * total {
        return Err(Error::Resolution(format!(
            "{:.2}% of the weighted energy sits in the top octave",
            100.0 * top / total
        )));
    }
    Ok(total)
}

/// `‖u‖_{(s)}` on the torus: `(L^n Σ (1+|ξ|²)^s |c_k|²)^{1/2}`.
pub fn sobolev_norm(values: &[f64], grid: &TorusGrid, s: f64) -> Result<f64> {
    let e = weighted_energy(values, grid, |xi| (1.0 + xi.iter().map(|v| v * v).sum::<f64>()).powf(s))?;
    Ok((grid.length.powi(grid.dim as i32) * e).sqrt())
}

/// `‖u₀‖_{(s+1)} + ‖u₁‖_{(s)}`.
pub fn sobolev_smallness(u0: &[f64], u1: &[f64], s: u32, grid: &TorusGrid) -> Result<f64> {
    Ok(sobolev_norm(u0, grid, s as f64 + 1.0)? + sobolev_norm(u1, grid, s as f64)?)
}

const Z_LENGTH: f64 = 5.0;

fn z_points(n: u32) -> usize {
    match n {
        1 => 256,
        2 => 128,
        _ => 64,
    }
}

/// Smallness of the plan's data on `ℝⁿ`, computed on the rescaled variable
/// `z = x/M²` so the grid does not grow with `M`:
///
/// ```text
/// ‖u₀‖² = σⁿ L_zⁿ Σ (1+|η/σ|²)^{s+1} |c_k(u₀)|²
/// ‖u₁‖² = ½ σⁿ L_zⁿ Σ ½[(1+|η/σ+y|²)^s + (1+|η/σ-y|²)^s] |c_k(g)|²
/// ```
///
/// where `g` is `u₁` without the oscillating factor. The cross term between
/// the `±y` halves is dropped; it is negligible once `σ|y| ≫ 1`.
pub fn plan_smallness(plan: &BlowupPlan, tp: &TransformPair) -> Result<f64> {
    plan.validate()?;
    if plan.n > 3 {
        return Err(Error::domain("smallness is computed for n <= 3"));
    }
    let dim = plan.n as usize;
    let grid = TorusGrid {
        dim,
        length: Z_LENGTH,
        points: z_points(plan.n),
    };
    let sigma = plan.sigma();
    let amp = plan.amplitude();
    let s = plan.sobolev_order as f64;
    // χ is radial; cache If on the distinct radii
    let mut cache: Vec<(f64, f64)> = Vec::new();
    let mut u0 = Vec::with_capacity(grid.len());
    let mut g = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let z = grid.point(i);
        let c = chi(norm(&z));
        u0.push(amp * c);
        if c == 0.0 {
            g.push(0.0);
            continue;
        }
        let key = c.to_bits();
        let damp = match cache.iter().find(|(k, _)| k.to_bits() == key) {
            Some(&(_, d)) => d,
            None => {
                let d = (-tp.log_big_f(amp * c)?).exp();
                cache.push((c, d));
                d
            }
        };
        g.push(plan.a_sign * amp * c * damp);
    }
    let y = plan.y.clone();
    let vol = (sigma * Z_LENGTH).powi(dim as i32);
    let e0 = weighted_energy(&u0, &grid, |eta| {
        (1.0 + eta.iter().map(|e| (e / sigma).powi(2)).sum::<f64>()).powf(s + 1.0)
    })?;
    let e1 = weighted_energy(&g, &grid, |eta| {
        let plus: f64 = eta.iter().zip(&y).map(|(e, yy)| (e / sigma + yy).powi(2)).sum();
        let minus: f64 = eta.iter().zip(&y).map(|(e, yy)| (e / sigma - yy).powi(2)).sum();
        0.25 * ((1.0 + plus).powf(s) + (1.0 + minus).powf(s))
    })?;
    Ok(plan.weight * ((vol * e0).sqrt() + (vol * e1).sqrt()))
}

/// `V(t,x) = G(M^{-S}) + W(t)(b(t)/b(0))^{n/2}(A/M^S)cos(x·y)`, the solution
/// of the linear equation that agrees with `G(u)` on `Π_M`.
pub struct LocalSolution {
    plan: BlowupPlan,
    g0: f64,
    pair: FundamentalPair,
    b: PeriodicCoefficient,
}

pub fn exact_local_solution(plan: &BlowupPlan, tp: &TransformPair, pair: &FundamentalPair) -> Result<LocalSolution> {
    plan.validate()?;
    if pair.potential().n() != plan.n {
        return Err(Error::domain("fundamental pair was built for a different n"));
    }
    if (pair.lambda() - plan.lambda).abs() > 1e-12 * plan.lambda {
        return Err(Error::domain("fundamental pair was built for a different lambda"));
    }
    Ok(LocalSolution {
        plan: plan.clone(),
        g0: tp.g(plan.amplitude())?,
        pair: pair.clone(),
        b: pair.potential().coefficient().clone(),
    })
}

impl LocalSolution {
    fn check(&self, t: f64, x: &[f64]) -> Result<()> {
        let m = self.plan.m as f64;
        if !(0.0..=m).contains(&t) || norm(x) > m.powf(1.5) || x.len() != self.plan.n as usize {
            return Err(Error::domain(format!("(t, x) = ({t}, {x:?}) lies outside the validity region")));
        }
        Ok(())
    }

    fn factor(&self, t: f64) -> (f64, f64) {
        let half = self.plan.n as f64 / 2.0;
        let (b, db, _) = self.b.derivs(t);
        let ratio = (b / self.b.eval(0.0)).powf(half);
        (ratio, ratio * half * db / b)
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    /// `V(t, x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check(t, x)?;
        let (w, _) = self.pair.w(t)?;
        let (r, _) = self.factor(t);
        let phase: f64 = x.iter().zip(&self.plan.y).map(|(a, b)| a * b).sum();
        Ok(self.g0 + w * r * self.plan.a_sign * self.plan.amplitude() * phase.cos())
    }

    /// `∂_t V(t, x)`.
    pub fn eval_t(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check(t, x)?;
        let (w, wt) = self.pair.w(t)?;
        let (r, dr) = self.factor(t);
        let phase: f64 = x.iter().zip(&self.plan.y).map(|(a, b)| a * b).sum();
        Ok((wt * r + w * dr) * self.plan.a_sign * self.plan.amplitude() * phase.cos())
    }
}

/// What to search over when certifying.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSearch {
    pub s_exp: f64,
    pub lambdas: Vec<f64>,
    pub m_max: u32,
    pub sobolev_order: Option<u32>,
    pub weight: f64,
    pub tol: f64,
}

impl PlanSearch {
    pub fn new(n: u32, lambdas: Vec<f64>) -> Self {
        PlanSearch {
            s_exp: default_s(n),
            lambdas,
            m_max: 2000,
            sobolev_order: None,
            weight: 1.0,
            tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupCertificate {
    pub plan: BlowupPlan,
    /// `|μ₀|`.
    pub mu0: f64,
    pub mu_sign: f64,
    pub b21: f64,
    /// The finite endpoint being crossed (`b_G`, or `a_G` when only that one
    /// is finite).
    pub endpoint: f64,
    pub t_star: Option<f64>,
    pub smallness: f64,
    /// Closed-form `v(M, 0)`.
    pub v_m: ScaledReal,
    pub trajectory: Vec<(f64, f64)>,
}

impl BlowupCertificate {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "S": self.plan.s_exp,
            "M": self.plan.m,
            "A": self.plan.a_sign,
            "lambda": self.plan.lambda,
            "y": self.plan.y,
            "mu0": self.mu0,
            "b21": self.b21,
            "b_G": self.endpoint,
            "t_star": self.t_star,
            "smallness": self.smallness,
            "trajectory": self.trajectory.iter().map(|&(t, v)| [t, v]).collect::<Vec<_>>(),
        })
    }
}

struct Candidate {
    lambda: f64,
    pair: FundamentalPair,
    mu: f64,
    b21: f64,
}

/// Find the smallest `M ≤ m_max` (then the smallest λ) for which the data
/// are `δ`-small, the validity region fits inside the plateau and the
/// closed-form `v(M, 0)` lies beyond the finite endpoint of `G`.
pub fn certify_blowup(
    search: &PlanSearch,
    tp: &TransformPair,
    b: &PeriodicCoefficient,
    n: u32,
    delta: f64,
) -> Result<BlowupCertificate> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("delta must be positive (got {delta})")));
    }
    if search.lambdas.is_empty() {
        return Err(Error::domain("no candidate lambda supplied (need an instability interval)"));
    }
    if !(search.s_exp > 2.0 * n as f64) {
        return Err(Error::domain(format!("S must exceed 2n = {} (got {})", 2 * n, search.s_exp)));
    }
    let (a_g, b_g) = (tp.a_g(), tp.b_g());
    let (endpoint, dir) = if b_g.is_finite() {
        (b_g.value, 1.0)
    } else if a_g.is_finite() {
        (a_g.value, -1.0)
    } else {
        return Err(Error::NotApplicable(
            "both limits of G are infinite; the divergence condition holds and this construction certifies no blow-up"
                .into(),
        ));
    };
    let pot = hill_potential(b, n)?;
    let max_b = b.max_value();
    let results: Vec<Result<BlowupCertificate>> = search
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let pair = FundamentalPair::new(&pot, lambda, search.tol)?;
            let m = *pair.monodromy();
            let mp = classify(&m, BOUNDARY_BAND);
            if mp.class != StabilityClass::Unstable {
                return Err(Error::domain(format!("lambda = {lambda} is not in an instability interval")));
            }
            let cand = Candidate {
                lambda,
                pair,
                mu: mp.eigenvalue(),
                b21: m.b21,
            };
            certify_candidate(search, tp, &cand, n, delta, endpoint, dir, max_b)
        })
        .collect();
    let mut best: Option<BlowupCertificate> = None;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(c) => {
                let better = match &best {
                    None => true,
                    Some(b) => (c.plan.m, c.plan.lambda) < (b.plan.m, b.plan.lambda),
                };
                if better {
                    best = Some(c);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one candidate"))
}

/// `ln(M^{-S}|W_M|)`, the log of the oscillation amplitude at `x = 0`.
fn ln_growth(cand: &Candidate, m: u32, s_exp: f64) -> Result<(f64, f64)> {
    let mono = cand.pair.monodromy();
    let (w, _) = floquet::multi_period_values(mono, m)?;
    Ok((w.ln_abs() - s_exp * (m as f64).ln(), w.mantissa.signum()))
}

#[allow(clippy::too_many_arguments)]
fn certify_candidate(
    search: &PlanSearch,
    tp: &TransformPair,
    cand: &Candidate,
    n: u32,
    delta: f64,
    endpoint: f64,
    dir: f64,
    max_b: f64,
) -> Result<BlowupCertificate> {
    let order = search.sobolev_order.unwrap_or_else(|| default_sobolev_order(n));
    let plan_at = |m: u32, a: f64| -> Result<BlowupPlan> {
        let mut p = BlowupPlan::new(search.s_exp, m, a, cand.lambda, n)?;
        p.sobolev_order = order;
        p.weight = search.weight;
        Ok(p)
    };
    // crossing: M^{-S}|W_M| ≥ |endpoint - G(M^{-S})|
    let crosses = |m: u32| -> Result<bool> {
        let amp = (m as f64).powf(-search.s_exp);
        let gap = dir * (endpoint - tp.g(amp)?);
        Ok(ln_growth(cand, m, search.s_exp)?.0 >= gap.ln())
    };
    // at small M the data vary on the scale of the grid spacing in ξ and the
    // rescaled grid cannot resolve them; such M are not certifiably small
    let small = |m: u32| -> Result<(bool, f64)> {
        match plan_smallness(&plan_at(m, 1.0)?, tp) {
            Ok(s) => Ok((s <= delta, s)),
            Err(Error::Resolution(_)) => Ok((false, f64::INFINITY)),
            Err(e) => Err(e),
        }
    };
    let valid = |m: u32| plan_at(m, 1.0).map(|p| p.validity_holds(max_b));

    // each condition is monotone in M; find each threshold and start from
    // the largest
    let first = |pred: &dyn Fn(u32) -> Result<bool>| -> Result<Option<u32>> {
        let mut lo = 0u32;
        let mut hi = 1u32;
        while !pred(hi)? {
            lo = hi;
            if hi >= search.m_max {
                return Ok(None);
            }
            hi = (hi * 2).min(search.m_max);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pred(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    };
    let deficit = || -> Result<String> {
        let (g, _) = ln_growth(cand, search.m_max, search.s_exp)?;
        Ok(format!(
            "lambda = {}: at M = {} the growth reaches exp({g:.3}) against the endpoint gap {:.3e}",
            cand.lambda,
            search.m_max,
            endpoint.abs()
        ))
    };
    let m_valid = first(&|m| valid(m))?
        .ok_or_else(|| Error::Exhausted(format!("validity region never fits below M_max = {}", search.m_max)))?;
    let m_cross = match first(&|m| crosses(m))? {
        Some(m) => m,
        None => return Err(Error::Exhausted(deficit()?)),
    };
    let m_small = first(&|m| small(m).map(|r| r.0))?.ok_or_else(|| {
        Error::Exhausted(format!("data never {delta:e}-small below M_max = {}", search.m_max))
    })?;
    let mut m = m_valid.max(m_cross).max(m_small);
    let smallness = loop {
        if m > search.m_max {
            return Err(Error::Exhausted(deficit()?));
        }
        let (ok_small, s) = small(m)?;
        if ok_small && crosses(m)? && valid(m)? {
            break s;
        }
        m += 1;
    };

    let (_, w_sign) = ln_growth(cand, m, search.s_exp)?;
    // push the oscillation toward the finite endpoint
    let a = dir * w_sign;
    let plan = plan_at(m, a)?;
    let mono = *cand.pair.monodromy();
    let (w_m, _) = floquet::multi_period_values(&mono, m)?;
    let g0 = tp.g(plan.amplitude())?;
    let v_m = ScaledReal {
        mantissa: a * plan.amplitude() * w_m.mantissa + g0 * (-w_m.ln_scale).exp(),
        ln_scale: w_m.ln_scale,
    };
    let (t_star, trajectory) = crossing_time(&plan, cand, g0, endpoint, dir, search.tol)?;
    Ok(BlowupCertificate {
        plan,
        mu0: cand.mu.abs(),
        mu_sign: cand.mu.signum(),
        b21: cand.b21,
        endpoint,
        t_star,
        smallness,
        v_m,
        trajectory,
    })
}

const SAMPLES_PER_PERIOD: usize = 64;

/// First `t ≤ M` where `v(t, 0)` comes within `1e-9|endpoint|` of the
/// endpoint, plus `v(t, 0)` at integer and half-integer times.
fn crossing_time(
    plan: &BlowupPlan,
    cand: &Candidate,
    g0: f64,
    endpoint: f64,
    dir: f64,
    tol: f64,
) -> Result<(Option<f64>, Vec<(f64, f64)>)> {
    let pot = cand.pair.potential();
    let b = pot.coefficient();
    let b0 = b.eval(0.0);
    let half = plan.n as f64 / 2.0;
    let scale = plan.a_sign * plan.amplitude();
    let v_of = |t: f64, w: f64| g0 + scale * w * (b.eval(t) / b0).powf(half);
    let target = endpoint - dir * 1e-9 * endpoint.abs();
    let reached = |v: f64| dir * (v - target) >= 0.0;

    let samples = floquet::period_samples(pot, cand.lambda, SAMPLES_PER_PERIOD, tol)?;
    let mono = *cand.pair.monodromy();
    let mut trajectory = vec![(0.0, g0)];
    let mut t_star = None;
    let mut prev_t = 0.0;
    'outer: for k in 0..plan.m as u64 {
        for (j, sample) in samples.iter().enumerate().skip(1) {
            let t = k as f64 + j as f64 / SAMPLES_PER_PERIOD as f64;
            let x = floquet::apply_power_then(sample, &mono, k, [1.0, 0.0]);
            let v = v_of(t, x[1]);
            if !v.is_finite() {
                break 'outer;
            }
            if j % (SAMPLES_PER_PERIOD / 2) == 0 {
                trajectory.push((t, v));
            }
            if t_star.is_none() && reached(v) {
                // refine on [prev_t, t]
                let (mut lo, mut hi) = (prev_t, t);
                while hi - lo > 1e-12 * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    let (w, _) = cand.pair.w(mid)?;
                    if reached(v_of(mid, w)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                t_star = Some(hi);
            }
            prev_t = t;
        }
    }
    Ok((t_star, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{build_transform, ScalarFn};

    #[test]
    fn cutoff_shape() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert_eq!(chi(3.0), 0.0);
        let mut prev = 1.0;
        for j in 0..=100 {
            let c = chi(1.0 + j as f64 / 100.0);
            assert!(c <= prev && (0.0..=1.0).contains(&c));
            prev = c;
        }
    }

    #[test]
    fn plan_validation() {
        assert!(BlowupPlan::new(6.0, 4, 1.0, 9.0, 3).is_err());
        assert!(BlowupPlan::new(7.0, 4, 0.5, 9.0, 3).is_err());
        assert!(BlowupPlan::new(7.0, 0, 1.0, 9.0, 3).is_err());
        let p = BlowupPlan::new(7.0, 4, -1.0, 9.0, 3).unwrap();
        assert_eq!(p.y, vec![3.0, 0.0, 0.0]);
        assert!(!BlowupPlan::new(7.0, 3, 1.0, 9.0, 3).unwrap().validity_holds(1.3));
        assert!(BlowupPlan::new(7.0, 9, 1.0, 9.0, 3).unwrap().validity_holds(1.3));
    }

    #[test]
    fn data_values() {
        let tp = build_transform(ScalarFn::example1(-1.0), 1e-12).unwrap();
        let plan = BlowupPlan::new(3.0, 4, 1.0, 4.0, 1).unwrap();
        let d = make_data(&plan, &tp);
        let amp = 4f64.powf(-3.0);
        assert_eq!(d.u0(&[0.0]), amp);
        let expect = amp * (-tp.log_big_f(amp).unwrap()).exp();
        assert!((d.u1(&[0.0]).unwrap() - expect).abs() < 1e-18);
        assert_eq!(d.u0(&[32.0]), 0.0);
        assert_eq!(d.u1(&[-40.0]).unwrap(), 0.0);
    }

    #[test]
    fn sobolev_trivial_cases() {
        let grid = TorusGrid {
            dim: 1,
            length: 1.0,
            points: 16,
        };
        let zero = vec![0.0; 16];
        assert_eq!(sobolev_smallness(&zero, &zero, 2, &grid).unwrap(), 0.0);
        let c = vec![-0.75; 16];
        assert!((sobolev_norm(&c, &grid, 0.0).unwrap() - 0.75).abs() < 1e-15);
        let noisy: Vec<f64> = (0..16).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(matches!(sobolev_norm(&noisy, &grid, 0.0), Err(Error::Resolution(_))));
    }
}
