//! Model parameters, their admissibility window and derived constants.
//!
//! A [`RawParams`] is an unchecked candidate; [`validate`] turns it into a
//! [`ModelParams`] or reports the first violated constraint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest nonlinearity exponent accepted. Beyond this `κ` and `b` lose
/// all useful precision.
pub const P_MAX: f64 = 1.0e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("params: {name} is not finite")]
    NonFinite { name: &'static str },
    #[error("params: p must exceed 3 (got {p})")]
    PTooSmall { p: f64 },
    #[error("params: p = {p} exceeds the sanity cap {P_MAX}")]
    PTooLarge { p: f64 },
    #[error("params: q = {q} outside the open window ({lo}, {hi})")]
    QOutOfWindow { q: f64, lo: f64, hi: f64 },
    #[error("params: beta = {beta} outside the open window ({lo}, {hi})")]
    BetaOutOfWindow { beta: f64, lo: f64, hi: f64 },
    #[error("params: eps = {eps} outside the open window (0, {hi})")]
    EpsOutOfWindow { eps: f64, hi: f64 },
    #[error("params: {name} = {value} must be at least 1")]
    BelowOne { name: &'static str, value: f64 },
    #[error("params: T must be positive (got {t})")]
    TNotPositive { t: f64 },
    #[error("params: only the one-dimensional problem is supported (got N = {n})")]
    Dimension { n: u32 },
}

/// Unchecked parameter candidate. `eps = None` selects the midpoint of the
/// admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub beta: f64,
    pub eps: Option<f64>,
    pub n: u32,
    pub k0: f64,
    pub a: f64,
    pub s0: f64,
    pub t: f64,
}

impl Default for RawParams {
    /// The reference configuration.
    fn default() -> Self {
        Self {
            p: 5.0,
            q: 4.0,
            mu: 1.0,
            beta: 0.4,
            eps: Some(0.5),
            n: 1,
            k0: 5.0,
            a: 20.0,
            s0: 50.0,
            t: 1.0,
        }
    }
}

/// Validated parameters. Construct through [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub beta: f64,
    pub eps: f64,
    pub n: u32,
    pub k0: f64,
    pub a: f64,
    pub s0: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// Coefficient of `z²` in the profile denominator, `(p-1)²/(4p)`.
    pub b: f64,
    /// Constant self-similar state `(p-1)^{-1/(p-1)}`.
    pub kappa: f64,
    /// Decay rate of the nonlocal coefficient in similarity time.
    pub gamma: f64,
}

/// Open window for `q` given `p` (N = 1).
pub fn q_window(p: f64, n: u32) -> (f64, f64) {
    let nf = f64::from(n);
    let base = nf * (p - 1.0) / 2.0;
    (base + 1.0, base + (p + 1.0) / 2.0)
}

/// Open window for `beta`. The lower end is only active when the nonlocal
/// term is switched on.
pub fn beta_window(p: f64, q: f64, mu: f64, n: u32) -> (f64, f64) {
    let hi = 2.0 / (p - 1.0);
    let lo = if mu != 0.0 { f64::from(n) / (q - 1.0) } else { 0.0 };
    (lo, hi)
}

/// Upper end of the open `eps` window.
pub fn eps_upper(p: f64) -> f64 {
    1.0_f64.min((p - 1.0) / 4.0)
}

pub fn validate(raw: &RawParams) -> Result<ModelParams, ParamError> {
    let finite = [
        ("p", raw.p),
        ("q", raw.q),
        ("mu", raw.mu),
        ("beta", raw.beta),
        ("eps", raw.eps.unwrap_or(0.5)),
        ("K0", raw.k0),
        ("A", raw.a),
        ("s0", raw.s0),
        ("T", raw.t),
    ];
    for (name, value) in finite {
        if !value.is_finite() {
            return Err(ParamError::NonFinite { name });
        }
    }
    if raw.n != 1 {
        return Err(ParamError::Dimension { n: raw.n });
    }
    if raw.p <= 3.0 {
        return Err(ParamError::PTooSmall { p: raw.p });
    }
    if raw.p > P_MAX {
        return Err(ParamError::PTooLarge { p: raw.p });
    }
    let (lo, hi) = q_window(raw.p, raw.n);
    if !(raw.q > lo && raw.q < hi) {
        return Err(ParamError::QOutOfWindow { q: raw.q, lo, hi });
    }
    let (lo, hi) = beta_window(raw.p, raw.q, raw.mu, raw.n);
    if !(raw.beta > lo && raw.beta < hi) {
        return Err(ParamError::BetaOutOfWindow { beta: raw.beta, lo, hi });
    }
    let eps_hi = eps_upper(raw.p);
    let eps = raw.eps.unwrap_or(0.5 * eps_hi);
    if !(eps > 0.0 && eps < eps_hi) {
        return Err(ParamError::EpsOutOfWindow { eps, hi: eps_hi });
    }
    for (name, value) in [("K0", raw.k0), ("A", raw.a), ("s0", raw.s0)] {
        if value < 1.0 {
            return Err(ParamError::BelowOne { name, value });
        }
    }
    if raw.t <= 0.0 {
        return Err(ParamError::TNotPositive { t: raw.t });
    }
    Ok(ModelParams {
        p: raw.p,
        q: raw.q,
        mu: raw.mu,
        beta: raw.beta,
        eps,
        n: raw.n,
        k0: raw.k0,
        a: raw.a,
        s0: raw.s0,
        t: raw.t,
    })
}

impl ModelParams {
    /// The validated reference configuration.
    pub fn reference() -> Self {
        validate(&RawParams::default()).expect("reference configuration is admissible")
    }

    pub fn derived(&self) -> DerivedConstants {
        let p = self.p;
        DerivedConstants {
            b: (p - 1.0) * (p - 1.0) / (4.0 * p),
            kappa: (p - 1.0).powf(-1.0 / (p - 1.0)),
            gamma: (p - self.q) / (p - 1.0) + (f64::from(self.n) - 1.0) / 2.0,
        }
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            p: self.p,
            q: self.q,
            mu: self.mu,
            beta: self.beta,
            eps: Some(self.eps),
            n: self.n,
            k0: self.k0,
            a: self.a,
            s0: self.s0,
            t: self.t,
        }
    }
}
