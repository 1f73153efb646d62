//! Periodic scale functions `b(t)` and the Hill-equation coefficients derived
//! from them.
//!
//! All coefficients have period 1. The Hill potential is obtained from the
//! substitution `v = b^{n/2} w`, which removes the first-order term of
//! `v'' - n (b'/b) v' + λ b² v = 0` and leaves `w'' + (λ α - q) w = 0` with
//! `α = b²` and `q = (n²/4 + n/2)(b'/b)² - (n/2)(b''/b)`.

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const TWO_PI: f64 = 2.0 * PI;

/// Named closed-form coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    /// `b ≡ c`.
    Constant,
    /// `b(t) = √(1 + ε sin 2πt)`.
    SqrtSin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientKind {
    BuiltinClosedForm,
    UserTabulated,
}

#[derive(Debug, Clone)]
enum Repr {
    Constant(f64),
    SqrtSin(f64),
    Tabulated(Arc<Tabulated>),
}

/// A smooth, positive, 1-periodic function with its first two derivatives.
#[derive(Debug, Clone)]
pub struct PeriodicCoefficient {
    repr: Repr,
}

impl PeriodicCoefficient {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("constant coefficient requires c > 0 (got {c})")));
        }
        Ok(PeriodicCoefficient { repr: Repr::Constant(c) })
    }

    pub fn sqrt_sin(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::domain(format!(
                "sqrt-sin coefficient requires epsilon in (0, 1) (got {epsilon})"
            )));
        }
        Ok(PeriodicCoefficient {
            repr: Repr::SqrtSin(epsilon),
        })
    }

    /// Build from samples `b(j/N)`, `j = 0..N`, covering one full period.
    pub fn tabulated(samples: Vec<f64>) -> Result<Self> {
        Ok(PeriodicCoefficient {
            repr: Repr::Tabulated(Arc::new(Tabulated::new(samples)?)),
        })
    }

    pub fn period(&self) -> f64 {
        1.0
    }

    pub fn kind(&self) -> CoefficientKind {
        match self.repr {
            Repr::Tabulated(_) => CoefficientKind::UserTabulated,
            _ => CoefficientKind::BuiltinClosedForm,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.repr, Repr::Constant(_))
    }

    /// `(b, b', b'')` at `t`.
    pub fn derivs(&self, t: f64) -> (f64, f64, f64) {
        match &self.repr {
            Repr::Constant(c) => (*c, 0.0, 0.0),
            Repr::SqrtSin(eps) => {
                let (s, c) = (TWO_PI * t).sin_cos();
                let g = 1.0 + eps * s;
                let g1 = TWO_PI * eps * c;
                let g2 = -TWO_PI * TWO_PI * eps * s;
                let b = g.sqrt();
                (b, g1 / (2.0 * b), g2 / (2.0 * b) - g1 * g1 / (4.0 * b * g))
            }
            Repr::Tabulated(tab) => tab.derivs(t),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.derivs(t).0
    }

    pub fn d1(&self, t: f64) -> f64 {
        self.derivs(t).1
    }

    pub fn d2(&self, t: f64) -> f64 {
        self.derivs(t).2
    }

    /// Maximum of `b` over one period (closed form where available).
    pub fn max_value(&self) -> f64 {
        match &self.repr {
            Repr::Constant(c) => *c,
            Repr::SqrtSin(eps) => (1.0 + eps).sqrt(),
            Repr::Tabulated(tab) => {
                let n = 8 * tab.values.len();
                (0..n).map(|j| tab.derivs(j as f64 / n as f64).0).fold(f64::MIN, f64::max)
            }
        }
    }

    /// Short human-readable description used in manifests.
    pub fn describe(&self) -> String {
        match &self.repr {
            Repr::Constant(c) => format!("constant(c={c})"),
            Repr::SqrtSin(eps) => format!("sqrt-sin(epsilon={eps})"),
            Repr::Tabulated(tab) => format!("tabulated({} samples)", tab.values.len()),
        }
    }
}

/// Construct a builtin coefficient; `param` is `c` for [`Builtin::Constant`]
/// and `ε` for [`Builtin::SqrtSin`].
pub fn make_builtin(name: Builtin, param: f64) -> Result<PeriodicCoefficient> {
    match name {
        Builtin::Constant => PeriodicCoefficient::constant(param),
        Builtin::SqrtSin => PeriodicCoefficient::sqrt_sin(param),
    }
}

/// Piecewise quintic Hermite interpolant of periodic samples. Node slopes and
/// curvatures come from 8th-order periodic central differences, so the
/// interpolant is C² and differentiated analytically.
#[derive(Debug)]
struct Tabulated {
    values: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

const MIN_TABULATED_SAMPLES: usize = 256;

impl Tabulated {
    fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < MIN_TABULATED_SAMPLES {
            return Err(Error::domain(format!(
                "tabulated coefficient needs at least {MIN_TABULATED_SAMPLES} samples per period (got {n})"
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::domain(format!("tabulated coefficient must be positive (found {bad})")));
        }
        let h = 1.0 / n as f64;
        let at = |j: isize| values[j.rem_euclid(n as isize) as usize];
        const W1: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
        const W2: [f64; 4] = [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
        const W2_CENTER: f64 = -205.0 / 72.0;
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        for j in 0..n {
            let ji = j as isize;
            let mut s1 = 0.0;
            let mut s2 = W2_CENTER * values[j];
            for (k, (w1, w2)) in W1.iter().zip(W2.iter()).enumerate() {
                let off = k as isize + 1;
                s1 += w1 * (at(ji + off) - at(ji - off));
                s2 += w2 * (at(ji + off) + at(ji - off));
            }
            d1[j] = s1 / h;
            d2[j] = s2 / (h * h);
        }
        Ok(Tabulated { values, d1, d2 })
    }

    fn derivs(&self, t: f64) -> (f64, f64, f64) {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        let tt = t.rem_euclid(1.0) * n as f64;
        let j = (tt.floor() as usize).min(n - 1);
        let s = tt - j as f64;
        let k = (j + 1) % n;
        let (y0, p0, c0) = (self.values[j], self.d1[j] * h, self.d2[j] * h * h);
        let (y1, p1, c1) = (self.values[k], self.d1[k] * h, self.d2[k] * h * h);

        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        // quintic Hermite basis and its first two derivatives in s
        let h0 = [1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5, -30.0 * s2 + 60.0 * s3 - 30.0 * s4, -60.0 * s + 180.0 * s2 - 120.0 * s3];
        let h1 = [s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5, 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4, -36.0 * s + 96.0 * s2 - 60.0 * s3];
        let h2 = [
            0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
            s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
            1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3,
        ];
        let h3 = [10.0 * s3 - 15.0 * s4 + 6.0 * s5, 30.0 * s2 - 60.0 * s3 + 30.0 * s4, 60.0 * s - 180.0 * s2 + 120.0 * s3];
        let h4 = [-4.0 * s3 + 7.0 * s4 - 3.0 * s5, -12.0 * s2 + 28.0 * s3 - 15.0 * s4, -24.0 * s + 84.0 * s2 - 60.0 * s3];
        let h5 = [0.5 * s3 - s4 + 0.5 * s5, 1.5 * s2 - 4.0 * s3 + 2.5 * s4, 3.0 * s - 12.0 * s2 + 10.0 * s3];
        let comb = |d: usize| y0 * h0[d] + p0 * h1[d] + c0 * h2[d] + y1 * h3[d] + p1 * h4[d] + c1 * h5[d];
        (comb(0), comb(1) / h, comb(2) / (h * h))
    }
}

/// Which formula for `q` a [`HillPotential`] uses.
///
/// Only [`QVariant::Derived`] is consistent with the substitution
/// `v = b^{n/2} w`; the other two are alternative closed forms,
/// kept for the substitution diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QVariant {
    /// `(n²/4 + n/2)(b'/b)² - (n/2)(b''/b)`.
    Derived,
    /// `(n/4)(n/4 - 1)(b'/b)² - (n/2)(b''/b)`.
    QuarterForm,
    /// `(n/4)[(3/2)(α'/α)² - α''/α] - (n/8)(n/2 - 1)(α'/α)²` with `α = b²`.
    AlphaForm,
}

impl QVariant {
    pub const ALL: [QVariant; 3] = [QVariant::Derived, QVariant::QuarterForm, QVariant::AlphaForm];
}

/// Coefficients `α(t) = b(t)²` and `q(t)` of `y'' + (λα - q) y = 0`.
#[derive(Debug, Clone)]
pub struct HillPotential {
    coeff: PeriodicCoefficient,
    n: u32,
    variant: QVariant,
}

impl HillPotential {
    pub fn coefficient(&self) -> &PeriodicCoefficient {
        &self.coeff
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn variant(&self) -> QVariant {
        self.variant
    }

    /// The same coefficient with a different `q` formula.
    pub fn with_variant(&self, variant: QVariant) -> Self {
        HillPotential {
            variant,
            ..self.clone()
        }
    }

    pub fn alpha(&self, t: f64) -> f64 {
        let b = self.coeff.eval(t);
        b * b
    }

    pub fn q(&self, t: f64) -> f64 {
        let (b, b1, b2) = self.coeff.derivs(t);
        q_from_derivs(self.variant, self.n as f64, b, b1, b2)
    }

    /// `(α(t), q(t))` from a single coefficient evaluation.
    pub fn alpha_q(&self, t: f64) -> (f64, f64) {
        let (b, b1, b2) = self.coeff.derivs(t);
        (b * b, q_from_derivs(self.variant, self.n as f64, b, b1, b2))
    }
}

fn q_from_derivs(variant: QVariant, n: f64, b: f64, b1: f64, b2: f64) -> f64 {
    let r = b1 / b;
    match variant {
        QVariant::Derived => (n * n / 4.0 + n / 2.0) * r * r - (n / 2.0) * (b2 / b),
        QVariant::QuarterForm => (n / 4.0) * (n / 4.0 - 1.0) * r * r - (n / 2.0) * (b2 / b),
        QVariant::AlphaForm => {
            // α = b², α'/α = 2r, α''/α = 2 b''/b + 2 r²
            let ra = 2.0 * r;
            let raa = 2.0 * b2 / b + 2.0 * r * r;
            (n / 4.0) * (1.5 * ra * ra - raa) - (n / 8.0) * (n / 2.0 - 1.0) * ra * ra
        }
    }
}

pub fn hill_potential(b: &PeriodicCoefficient, n: u32) -> Result<HillPotential> {
    if n < 1 {
        return Err(Error::domain("spatial dimension n must be >= 1"));
    }
    Ok(HillPotential {
        coeff: b.clone(),
        n,
        variant: QVariant::Derived,
    })
}

/// Integrate `v'' - n(b'/b)v' + λb²v = 0` and `w'' + (λα - q)w = 0` from
/// matched data `v(0) = w(0) = 1`, `v'(0) = 0.3`, and return
/// `max_t |v(t) - (b(t)/b(0))^{n/2} w(t)|` over `[0, t_end]`, scaled by
/// `max(1, max|v|)`.
pub fn substitution_residual(pot: &HillPotential, lambda: f64, t_end: f64, tol: f64) -> Result<f64> {
    let b = &pot.coeff;
    let half_n = pot.n as f64 / 2.0;
    let n = pot.n as f64;
    let (b0, b0d, _) = b.derivs(0.0);
    let v0 = 1.0;
    let v0t = 0.3;
    let w0t = v0t - half_n * (b0d / b0) * v0;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (bt, bd, _) = b.derivs(t);
        let (alpha, q) = pot.alpha_q(t);
        dy[0] = y[1];
        dy[1] = n * (bd / bt) * y[1] - lambda * bt * bt * y[0];
        dy[2] = y[3];
        dy[3] = -(lambda * alpha - q) * y[2];
    };
    let samples = 300;
    let times: Vec<f64> = (1..=samples).map(|j| t_end * j as f64 / samples as f64).collect();
    let states = ode::integrate_at(rhs, 0.0, &[v0, v0t, v0, w0t], &times, OdeOptions::with_tol(tol))?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (t, y) in times.iter().zip(&states) {
        let factor = (b.eval(*t) / b0).powf(half_n);
        worst = worst.max((y[0] - factor * y[2]).abs());
        scale = scale.max(y[0].abs());
    }
    Ok(worst / scale)
}
