//! Physical-variable heat semigroup and Duhamel (Picard) solver.
//!
//! `S(t)` acts on the piecewise-linear interpolant of grid data and is
//! evaluated exactly, so `S(t)1 = 1` and positivity hold to rounding.

use crate::grid::{gradient_into, Field, Grid1D, GridError};
use crate::params::ModelParams;
use crate::similarity::{
    pow_abs, Boundary, Phase, PrefixTable, SimilaritySolver, SolverError, SolverOptions, SolverState, Verdict,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DuhamelError {
    #[error("duhamel: time {0} must be positive")]
    TimeNotPositive(f64),
    #[error("duhamel: weight exponent m = {0} outside [0, 1)")]
    WeightOutOfRange(f64),
    #[error("duhamel: contraction failure at iteration {iteration}: distance ratio {ratio}")]
    ContractionFailure { iteration: usize, ratio: f64 },
    #[error("duhamel: iterate not finite at t = {0}")]
    NonFinite(f64),
    #[error("duhamel: invalid option: {0}")]
    BadOption(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("duhamel: similarity side failed: {0}")]
    Solver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// Period `2L`; the last node duplicates the first.
    Periodic,
    /// Data vanish outside the grid.
    ZeroExtension,
}

fn phi_cdf_diff(a: f64, b: f64) -> f64 {
    // Φ(b) - Φ(a) for a ≤ b, evaluated in the tail that avoids cancellation.
    if a >= 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(-a / SQRT_2) - 0.5 * libm::erfc(b / SQRT_2)
    }
}

fn std_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// `∫_a^b (α + β z) N(z; μ, σ²) dz`.
fn linear_moment(alpha: f64, beta: f64, a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let ua = (a - mu) / sigma;
    let ub = (b - mu) / sigma;
    let mass = phi_cdf_diff(ua, ub);
    let first = mu * mass - sigma * (std_pdf(ub) - std_pdf(ua));
    alpha * mass + beta * first
}

/// Translation-invariant weights of `S(t)` and `∂_x S(t)` on spacing `h`.
#[derive(Debug, Clone)]
pub struct HeatStencil {
    pub t: f64,
    pub h: f64,
    /// `value[w + d]` for offsets `d ∈ [-w, w]`.
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub half: usize,
}

impl HeatStencil {
    pub fn new(t: f64, h: f64) -> Result<Self, DuhamelError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(DuhamelError::TimeNotPositive(t));
        }
        let sigma = (2.0 * t).sqrt();
        let half = ((12.0 * sigma / h).ceil() as usize + 2).min(1 << 22);
        let mut value = Vec::with_capacity(2 * half + 1);
        let mut grad = Vec::with_capacity(2 * half + 1);
        for k in 0..=2 * half {
            let d = k as f64 - half as f64;
            let mu = d * h;
            let left = linear_moment(1.0, 1.0 / h, -h, 0.0, mu, sigma);
            let right = linear_moment(1.0, -1.0 / h, 0.0, h, mu, sigma);
            value.push(left + right);
            let pl = phi_cdf_diff((-h - mu) / sigma, -mu / sigma);
            let pr = phi_cdf_diff(-mu / sigma, (h - mu) / sigma);
            grad.push((pl - pr) / h);
        }
        Ok(Self { t, h, value, grad, half })
    }

    fn apply(&self, f: &[f64], ext: Extension, use_grad: bool) -> Vec<f64> {
        let n = f.len();
        let weights = if use_grad { &self.grad } else { &self.value };
        let w = self.half as isize;
        let mut out = vec![0.0; n];
        match ext {
            Extension::ZeroExtension => {
                for (i, o) in out.iter_mut().enumerate() {
                    let lo = (i as isize - w).max(0) as usize;
                    let hi = ((i as isize + w) as usize).min(n - 1);
                    let mut acc = 0.0;
                    for j in lo..=hi {
                        // Offset d = i - j.
                        acc += weights[(i as isize - j as isize + w) as usize] * f[j];
                    }
                    *o = acc;
                }
            }
            Extension::Periodic => {
                let m = n - 1;
                for i in 0..m {
                    let mut acc = 0.0;
                    for (k, wk) in weights.iter().enumerate() {
                        let d = k as isize - w;
                        let j = (i as isize - d).rem_euclid(m as isize) as usize;
                        acc += wk * f[j];
                    }
                    out[i] = acc;
                }
                out[m] = out[0];
            }
        }
        out
    }
}

pub fn heat_apply(t: f64, f: &Field, ext: Extension) -> Result<Field, DuhamelError> {
    let st = HeatStencil::new(t, f.grid.spacing())?;
    Ok(Field { grid: f.grid, values: st.apply(&f.values, ext, false) })
}

/// `∂_x S(t) f` (equivalently `S(t) ∂_x f`).
pub fn heat_grad(t: f64, f: &Field, ext: Extension) -> Result<Field, DuhamelError> {
    let st = HeatStencil::new(t, f.grid.spacing())?;
    Ok(Field { grid: f.grid, values: st.apply(&f.values, ext, true) })
}

/// One `(t, probe)` row of the weighted semigroup estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupRow {
    pub t: f64,
    pub probe: usize,
    /// `‖(1+|x|^m) S(t) f‖ / ‖(1+|x|^m) f‖`.
    pub c_value: f64,
    /// Analytic bound `1 + E|Z|^m ≤ 1 + (2t)^{m/2}` for the value ratio.
    pub c_value_bound: f64,
    /// `√t ‖(1+|x|^m) ∇S(t) f‖ / ‖(1+|x|^m) f‖`.
    pub c_grad: f64,
    /// Analytic bound `(1 + 2^m t^{m/2} Γ(1+m/2)) / √π`.
    pub c_grad_bound: f64,
    /// `‖(1+|x|^m) ∇S(t) f‖`.
    pub raw_grad: f64,
}

pub fn weighted_semigroup_check(m: f64, ts: &[f64], probes: &[Field]) -> Result<Vec<SemigroupRow>, DuhamelError> {
    if !(0.0..1.0).contains(&m) {
        return Err(DuhamelError::WeightOutOfRange(m));
    }
    let mut rows = Vec::new();
    for &t in ts {
        for (k, f) in probes.iter().enumerate() {
            let st = HeatStencil::new(t, f.grid.spacing())?;
            let sf = Field { grid: f.grid, values: st.apply(&f.values, Extension::ZeroExtension, false) };
            let gf = Field { grid: f.grid, values: st.apply(&f.values, Extension::ZeroExtension, true) };
            let base = f.weighted_sup(m);
            let raw = gf.weighted_sup(m);
            rows.push(SemigroupRow {
                t,
                probe: k,
                c_value: sf.weighted_sup(m) / base,
                c_value_bound: 1.0 + (2.0 * t).powf(m / 2.0),
                c_grad: t.sqrt() * raw / base,
                c_grad_bound: (1.0 + 2f64.powf(m) * t.powf(m / 2.0) * libm::tgamma(1.0 + m / 2.0)) / PI.sqrt(),
                raw_grad: raw,
            });
        }
    }
    Ok(rows)
}

/// Probes for [`weighted_semigroup_check`] on `[-150, 150]`: a step at
/// `x = 50` tempered by a wide Gaussian (its gradient blows up like
/// `t^{-1/2}`; away from the origin the weight is flat across the jump), a
/// weighted oscillation and a smooth bump.
pub fn standard_probes(m: f64) -> Result<Vec<Field>, DuhamelError> {
    let grid = Grid1D::with_spacing(150.0, 0.02)?;
    Ok(vec![
        Field::from_fn(grid, |x| (x - 50.0).signum() * (-(x - 50.0).powi(2) / 2000.0).exp()),
        Field::from_fn(grid, |x| (3.0 * x).cos() / (1.0 + x.abs().powf(m))),
        Field::from_fn(grid, |x| 1.0 / (1.0 + x * x)),
    ])
}

/// Log-log slope in `t` of the raw weighted gradient for one probe.
pub fn raw_gradient_slope(rows: &[SemigroupRow], probe: usize) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.probe == probe).map(|r| (r.t.ln(), r.raw_grad.ln())).unzip();
    crate::kernel_lab::fit_slope(&xs, &ys)
}

/// `w(y) = (T-t)^{1/(p-1)} u(x)`, `y = x/√(T-t)`, given the remaining time
/// `tau = T - t` (passed directly: near blow-up `T - t` underflows `t`).
pub fn to_similarity(u: &Field, tau: f64, p: f64) -> Result<Field, GridError> {
    let grid = u.grid.scaled(1.0 / tau.sqrt())?;
    Ok(Field { grid, values: u.values.iter().map(|v| v * tau.powf(1.0 / (p - 1.0))).collect() })
}

pub fn from_similarity(w: &Field, s: f64, p: f64) -> Result<Field, GridError> {
    let tau = (-s).exp();
    let grid = w.grid.scaled(tau.sqrt())?;
    Ok(Field { grid, values: w.values.iter().map(|v| v * tau.powf(-1.0 / (p - 1.0))).collect() })
}

/// `‖(1+|x|^β) f‖∞ + ‖(1+|x|^β) ∇f‖∞`.
pub fn w1inf_beta(f: &Field, beta: f64) -> f64 {
    f.weighted_sup(beta) + f.gradient().weighted_sup(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    /// Uniform time intervals on `[0, t_end]`.
    pub intervals: usize,
    /// Geometric refinement levels of the last interval before each node.
    pub geometric_levels: usize,
    pub max_iterations: usize,
    /// Stop once the iterate distance falls below `tol` times its norm.
    pub tol: f64,
    pub extension: Extension,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { intervals: 20, geometric_levels: 4, max_iterations: 30, tol: 1e-12, extension: Extension::ZeroExtension }
    }
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub times: Vec<f64>,
    pub iterate: Vec<Field>,
    /// `sup_t ‖u^{k+1}(t) - u^k(t)‖_{W^{1,∞}_β}` per sweep.
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub converged: bool,
}

impl PicardReport {
    pub fn worst_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

struct Nonlinearity {
    p: f64,
    q: f64,
    mu: f64,
}

impl Nonlinearity {
    fn eval(&self, u: &[f64], h: f64) -> Vec<f64> {
        let n = u.len();
        let mut grad = vec![0.0; n];
        gradient_into(u, h, &mut grad);
        let table = if self.mu != 0.0 { Some(PrefixTable::build(u, h, self.q, 0.0)) } else { None };
        (0..n)
            .map(|i| {
                let mut g = pow_abs(u[i], self.p - 1.0) * u[i];
                if let Some(t) = &table {
                    g += self.mu * grad[i].abs() * t.symmetric(i);
                }
                g
            })
            .collect()
    }
}

fn cubic_interp(times: &[f64], vals: &[Field], tau: f64) -> Vec<f64> {
    let k = times.len() - 1;
    let dt = times[1] - times[0];
    let x = tau / dt;
    let max_base = k.saturating_sub(3) as isize;
    let base = (x.floor() as isize - 1).clamp(0, max_base) as usize;
    let idx: Vec<usize> = (base..(base + 4).min(k + 1)).collect();
    let n = vals[0].values.len();
    let mut out = vec![0.0; n];
    for &a in &idx {
        let mut l = 1.0;
        for &b in &idx {
            if a != b {
                l *= (tau - times[b]) / (times[a] - times[b]);
            }
        }
        for (o, v) in out.iter_mut().zip(&vals[a].values) {
            *o += l * v;
        }
    }
    out
}

/// Picard iteration of `F(u) = S(t)u0 + ∫_0^t S(t-τ) G(u(τ)) dτ` on `[0, t_end]`.
pub fn picard_solve(
    u0: &Field,
    t_end: f64,
    params: &ModelParams,
    opts: PicardOptions,
) -> Result<PicardReport, DuhamelError> {
    if !(t_end > 0.0) {
        return Err(DuhamelError::TimeNotPositive(t_end));
    }
    if opts.intervals < 3 {
        return Err(DuhamelError::BadOption(format!("intervals = {}", opts.intervals)));
    }
    let grid: Grid1D = u0.grid;
    let h = grid.spacing();
    let k = opts.intervals;
    let dt = t_end / k as f64;
    let times: Vec<f64> = (0..=k).map(|i| i as f64 * dt).collect();
    let nl = Nonlinearity { p: params.p, q: params.q, mu: params.mu };
    let mut cache: HashMap<u64, HeatStencil> = HashMap::new();
    let mut stencil = |d: f64| -> Result<HeatStencil, DuhamelError> {
        let key = d.to_bits();
        if let Some(s) = cache.get(&key) {
            return Ok(s.clone());
        }
        let s = HeatStencil::new(d, h)?;
        cache.insert(key, s.clone());
        Ok(s)
    };
    let mut free = vec![u0.clone()];
    for &t in &times[1..] {
        free.push(Field { grid, values: stencil(t)?.apply(&u0.values, opts.extension, false) });
    }
    let mut current = free.clone();
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let mut converged = false;
    // Geometric pieces [t_i - Δ 2^{-l}, t_i - Δ 2^{-(l+1)}], then [t_i - Δ 2^{-M}, t_i].
    let levels = opts.geometric_levels;
    let mut pieces: Vec<(f64, f64)> = (0..levels)
        .map(|l| {
            let a = dt * 2f64.powi(-(l as i32));
            let b = dt * 2f64.powi(-(l as i32 + 1));
            (0.5 * (a + b), a - b)
        })
        .collect();
    let last = dt * 2f64.powi(-(levels as i32));
    pieces.push((0.5 * last, last));
    for iteration in 0..opts.max_iterations {
        let g_mid: Vec<Vec<f64>> = (0..k)
            .map(|j| nl.eval(&cubic_interp(&times, &current, (j as f64 + 0.5) * dt), h))
            .collect();
        let mut next = vec![u0.clone()];
        for i in 1..=k {
            let mut acc = free[i].values.clone();
            for (j, g) in g_mid.iter().enumerate().take(i - 1) {
                let d = times[i] - (j as f64 + 0.5) * dt;
                let add = stencil(d)?.apply(g, opts.extension, false);
                for (a, b) in acc.iter_mut().zip(add) {
                    *a += dt * b;
                }
            }
            for &(back, width) in &pieces {
                let g = nl.eval(&cubic_interp(&times, &current, times[i] - back), h);
                let add = stencil(back)?.apply(&g, opts.extension, false);
                for (a, b) in acc.iter_mut().zip(add) {
                    *a += width * b;
                }
            }
            if acc.iter().any(|v| !v.is_finite()) {
                return Err(DuhamelError::NonFinite(times[i]));
            }
            next.push(Field { grid, values: acc });
        }
        let mut dist = 0.0_f64;
        let mut norm = 0.0_f64;
        for (a, b) in next.iter().zip(&current) {
            dist = dist.max(w1inf_beta(&a.sub(b)?, params.beta));
            norm = norm.max(w1inf_beta(a, params.beta));
        }
        current = next;
        if let Some(&prev) = distances.last() {
            let prev: f64 = prev;
            if prev > 1e-13 * norm {
                let ratio = dist / prev;
                ratios.push(ratio);
                if ratio > 1.0 {
                    return Err(DuhamelError::ContractionFailure { iteration, ratio });
                }
            }
        }
        distances.push(dist);
        if dist <= opts.tol * norm {
            converged = true;
            break;
        }
    }
    Ok(PicardReport { times, iterate: current, distances, ratios, converged })
}

/// `a (1 - (p-1) a^{p-1} t)^{-1/(p-1)}`, the spatially constant solution
/// without the gradient term.
pub fn ode_solution(a: f64, p: f64, t: f64) -> f64 {
    a * (1.0 - (p - 1.0) * a.powf(p - 1.0) * t).powf(-1.0 / (p - 1.0))
}

pub fn ode_blowup_time(a: f64, p: f64) -> f64 {
    1.0 / ((p - 1.0) * a.powf(p - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeComparison {
    pub times: Vec<f64>,
    pub exact: Vec<f64>,
    pub duhamel: Vec<f64>,
    pub similarity: Vec<f64>,
    pub worst_rel_duhamel: f64,
    pub worst_rel_similarity: f64,
}

fn no_monitor(_: &SolverState, _: Phase) -> Result<Verdict, SolverError> {
    Ok(Verdict::Continue)
}

fn solver_err(e: SolverError) -> DuhamelError {
    DuhamelError::Solver(e.to_string())
}

/// Spatially constant data `u0 = a` up to `fraction` of the ODE blow-up
/// time, through both solvers. Requires `mu = 0`; the similarity run starts
/// at `s0` so the physical clock starts at `T - e^{-s0}`.
pub fn ode_comparison(
    params: &ModelParams,
    a: f64,
    fraction: f64,
    picard: PicardOptions,
    ds: f64,
) -> Result<OdeComparison, DuhamelError> {
    if params.mu != 0.0 {
        return Err(DuhamelError::BadOption("the ODE comparison needs mu = 0".into()));
    }
    let p = params.p;
    let t_end = fraction * ode_blowup_time(a, p);
    let tau0 = (-params.s0).exp();
    if !(fraction > 0.0 && fraction < 1.0) || t_end >= tau0 {
        return Err(DuhamelError::BadOption(format!("t_end = {t_end} must lie before blow-up and before T")));
    }
    let grid = Grid1D::new(2.0, 9)?;
    let u0 = Field { grid, values: vec![a; grid.len()] };
    let rep = picard_solve(&u0, t_end, params, PicardOptions { extension: Extension::Periodic, ..picard })?;

    let opts = SolverOptions { ds, adaptive: false, boundary: Boundary::Neumann, ..SolverOptions::default() };
    let mut solver = SimilaritySolver::new(*params, grid, opts).map_err(solver_err)?;
    let w0 = Field { grid, values: vec![tau0.powf(1.0 / (p - 1.0)) * a; grid.len()] };
    let mut state = solver.state_from_field(w0, params.s0).map_err(solver_err)?;
    let mut out = OdeComparison {
        times: rep.times.clone(),
        exact: Vec::new(),
        duhamel: Vec::new(),
        similarity: Vec::new(),
        worst_rel_duhamel: 0.0,
        worst_rel_similarity: 0.0,
    };
    for (t, u) in rep.times.iter().zip(&rep.iterate) {
        let tau = tau0 - t;
        let s = -tau.ln();
        if s > state.s {
            state = solver.run(state, s, &mut no_monitor).map_err(solver_err)?.state;
        }
        let exact = ode_solution(a, p, *t);
        let d = u.values[grid.len() / 2];
        let w = state.w.values[grid.len() / 2] * tau.powf(-1.0 / (p - 1.0));
        out.worst_rel_duhamel = out.worst_rel_duhamel.max((d / exact - 1.0).abs());
        out.worst_rel_similarity = out.worst_rel_similarity.max((w / exact - 1.0).abs());
        out.exact.push(exact);
        out.duhamel.push(d);
        out.similarity.push(w);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSolverReport {
    /// Physical times measured from the start `T - e^{-s0}`.
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    /// `‖(1+|y|^β)(w_D - w_S)‖ / ‖(1+|y|^β) w_S‖` over the compared nodes.
    pub rel_errors: Vec<f64>,
    pub picard_ratios: Vec<f64>,
    pub picard_converged: bool,
    /// Only nodes with `|y| ≤ interior` are compared.
    pub interior: f64,
}

impl CrossSolverReport {
    pub fn worst(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_ratio(&self) -> f64 {
        self.picard_ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Evolves `w0` at `s0` for a physical time `fraction · e^{-s0}` with the
/// similarity solver and, after pulling back, with the Picard iteration.
/// The comparison excludes nodes within `margin` of the boundary, where the
/// two boundary treatments differ.
pub fn cross_solver_check(
    params: &ModelParams,
    w0: &Field,
    fraction: f64,
    margin: f64,
    solver_opts: SolverOptions,
    picard: PicardOptions,
) -> Result<CrossSolverReport, DuhamelError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DuhamelError::BadOption(format!("fraction = {fraction}")));
    }
    let p = params.p;
    let s0 = params.s0;
    let tau0 = (-s0).exp();
    let u0 = from_similarity(w0, s0, p)?;
    let rep = picard_solve(&u0, fraction * tau0, params, picard)?;
    let mut solver = SimilaritySolver::new(*params, w0.grid, solver_opts).map_err(solver_err)?;
    let mut state = solver.state_from_field(w0.clone(), s0).map_err(solver_err)?;
    let interior = w0.grid.half_width() - margin;
    let beta = params.beta;
    let mut out = CrossSolverReport {
        times: rep.times.clone(),
        s: Vec::new(),
        rel_errors: Vec::new(),
        picard_ratios: rep.ratios.clone(),
        picard_converged: rep.converged,
        interior,
    };
    for (t, u) in rep.times.iter().zip(&rep.iterate) {
        // τ = τ0 - t without forming T - t.
        let tau = tau0 * (1.0 - t / tau0);
        let s = -tau.ln();
        if s > state.s {
            state = solver.run(state, s, &mut no_monitor).map_err(solver_err)?.state;
        }
        let wd = to_similarity(u, tau, p)?;
        let mut num = 0.0_f64;
        let mut den = 0.0_f64;
        for (y, v) in wd.grid.nodes().zip(&wd.values) {
            if y.abs() > interior {
                continue;
            }
            let ws = state.w.interpolate(y);
            let wt = 1.0 + y.abs().powf(beta);
            num = num.max(wt * (v - ws).abs());
            den = den.max(wt * ws.abs());
        }
        out.s.push(s);
        out.rel_errors.push(if den > 0.0 { num / den } else { num });
    }
    Ok(out)
}
