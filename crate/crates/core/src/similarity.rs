//! IMEX finite-difference solver for the equation in similarity variables
//!
//! `w_s = w_yy - ½ y w_y - w/(p-1) + |w|^{p-1} w + μ e^{-γ s} |w_y| ∫_{-|y|}^{|y|} |w|^{q-1}`.
//!
//! The linear part (diffusion, drift, damping) is backward Euler with a
//! tridiagonal factorisation cached per step size; the power and nonlocal
//! terms are explicit.

use crate::grid::{gradient_into, Field, Grid1D};
use crate::params::{DerivedConstants, ModelParams};
use crate::profiles::Profile;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("solver: pointwise blow-up |w| > {limit} at y = {y}, s = {s}")]
    PointwiseBlowUp { y: f64, s: f64, limit: f64 },
    #[error("solver: step {ds} outside the stability window (max {max})")]
    StepTooLarge { ds: f64, max: f64 },
    #[error("solver: adaptive step fell below {min} at s = {s}")]
    StepUnderflow { s: f64, min: f64 },
    #[error("solver: nonlocal prefix table built at s = {table} used at s = {used}")]
    StalePrefix { table: f64, used: f64 },
    #[error("solver: field does not live on the solver grid")]
    GridMismatch,
    #[error("solver: invalid option: {0}")]
    BadOption(String),
    #[error("solver: monitor failed: {0}")]
    Monitor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// The drift `-½ y w_y` points out of the domain at both ends, so the end
    /// nodes use `w_yy = 0` and a one-sided drift from the interior.
    Outflow,
    /// `w(±L, s) = φ(±L, s)`.
    ProfileDirichlet,
    /// `w_y(±L, s) = 0`.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub ds: f64,
    pub adaptive: bool,
    /// Step-doubling tolerance on `‖w_full - w_half‖∞`.
    pub local_tol: f64,
    /// Monitor cadence in accepted steps.
    pub monitor_every: usize,
    pub boundary: Boundary,
    /// Switch to one-sided drift differences where the mesh Péclet number
    /// `|y| h / 4` exceeds one.
    pub upwind: bool,
    pub overflow: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            ds: 0.01,
            adaptive: false,
            local_tol: 1e-7,
            monitor_every: 10,
            boundary: Boundary::Outflow,
            upwind: true,
            overflow: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub s: f64,
    pub w: Field,
    pub steps: usize,
}

/// Cumulative `∫_{-L}^{y_i} |w|^{q-1}` tagged with the time it was built at.
#[derive(Debug, Clone)]
pub struct PrefixTable {
    pub s: f64,
    pub values: Vec<f64>,
}

impl PrefixTable {
    pub fn build(w: &[f64], h: f64, q: f64, s: f64) -> Self {
        let mut values = vec![0.0; w.len()];
        let mut prev = pow_abs(w[0], q - 1.0);
        for i in 1..w.len() {
            let cur = pow_abs(w[i], q - 1.0);
            values[i] = values[i - 1] + 0.5 * h * (prev + cur);
            prev = cur;
        }
        Self { s, values }
    }

    /// `∫_{-|y_i|}^{|y_i|}` on a symmetric grid.
    pub fn symmetric(&self, i: usize) -> f64 {
        let j = self.values.len() - 1 - i;
        (self.values[i] - self.values[j]).abs()
    }
}

#[inline]
pub(crate) fn pow_abs(x: f64, e: f64) -> f64 {
    let a = x.abs();
    if e == e.trunc() && e.abs() < 64.0 {
        a.powi(e as i32)
    } else {
        a.powf(e)
    }
}

/// Pre-eliminated tridiagonal system `(I - ds Λ)`.
#[derive(Debug, Clone)]
struct Factorisation {
    mult: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Factorisation {
    fn new(lower: &[f64], main: &[f64], upper: &[f64]) -> Self {
        let n = main.len();
        let mut mult = vec![0.0; n];
        let mut diag = vec![0.0; n];
        diag[0] = main[0];
        for i in 1..n {
            mult[i] = lower[i] / diag[i - 1];
            diag[i] = main[i] - mult[i] * upper[i - 1];
        }
        Self { mult, diag, upper: upper.to_vec() }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 1..n {
            rhs[i] -= self.mult[i] * rhs[i - 1];
        }
        rhs[n - 1] /= self.diag[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) / self.diag[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Scheduled check; may be recorded.
    Regular,
    /// Bisection probe while locating an exit; never recorded.
    Probe,
}

/// States bracketing the located stopping step: `first_out` is the first
/// state at which the monitor stopped, `other` its neighbour (previous step,
/// or the next step for a stop at the very first check).
#[derive(Debug, Clone)]
pub struct ExitStates {
    pub first_out: SolverState,
    pub other: SolverState,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SolverState,
    pub exit: Option<ExitStates>,
    pub rejected_steps: usize,
}

pub struct SimilaritySolver {
    pub params: ModelParams,
    pub consts: DerivedConstants,
    pub profile: Profile,
    pub grid: Grid1D,
    pub opts: SolverOptions,
    lower: Vec<f64>,
    main: Vec<f64>,
    upper: Vec<f64>,
    factors: HashMap<u64, Factorisation>,
    scratch: Vec<f64>,
    grad: Vec<f64>,
}

impl SimilaritySolver {
    pub fn new(params: ModelParams, grid: Grid1D, opts: SolverOptions) -> Result<Self, SolverError> {
        if !(opts.ds.is_finite() && opts.ds > 0.0) {
            return Err(SolverError::BadOption(format!("ds = {}", opts.ds)));
        }
        if opts.monitor_every == 0 {
            return Err(SolverError::BadOption("monitor_every = 0".into()));
        }
        let n = grid.len();
        let h = grid.spacing();
        let damp = 1.0 / (params.p - 1.0);
        let mut lower = vec![0.0; n];
        let mut main = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 1..n - 1 {
            let y = grid.node(i);
            let mut a = 1.0 / (h * h) + y / (4.0 * h);
            let mut b = -2.0 / (h * h) - damp;
            let mut c = 1.0 / (h * h) - y / (4.0 * h);
            if opts.upwind && y.abs() * h / 4.0 > 1.0 {
                a = 1.0 / (h * h);
                c = 1.0 / (h * h);
                if y > 0.0 {
                    a += y / (2.0 * h);
                    b -= y / (2.0 * h);
                } else {
                    c -= y / (2.0 * h);
                    b += y / (2.0 * h);
                }
            }
            lower[i] = a;
            main[i] = b;
            upper[i] = c;
        }
        match opts.boundary {
            Boundary::Outflow => {
                let l = grid.half_width();
                main[0] = -l / (2.0 * h) - damp;
                upper[0] = l / (2.0 * h);
                main[n - 1] = -l / (2.0 * h) - damp;
                lower[n - 1] = l / (2.0 * h);
            }
            Boundary::ProfileDirichlet => {}
            Boundary::Neumann => {
                main[0] = -2.0 / (h * h) - damp;
                upper[0] = 2.0 / (h * h);
                main[n - 1] = -2.0 / (h * h) - damp;
                lower[n - 1] = 2.0 / (h * h);
            }
        }
        Ok(Self {
            params,
            consts: params.derived(),
            profile: Profile::new(params),
            grid,
            opts,
            lower,
            main,
            upper,
            factors: HashMap::new(),
            scratch: vec![0.0; n],
            grad: vec![0.0; n],
        })
    }

    /// State `w = φ + v` at time `s`.
    pub fn state_from_perturbation(&self, v: &Field, s: f64) -> Result<SolverState, SolverError> {
        if v.grid != self.grid {
            return Err(SolverError::GridMismatch);
        }
        let values = self.grid.nodes().zip(&v.values).map(|(y, v)| self.profile.phi(y, s) + v).collect();
        Ok(SolverState { s, w: Field { grid: self.grid, values }, steps: 0 })
    }

    pub fn state_from_field(&self, w: Field, s: f64) -> Result<SolverState, SolverError> {
        if w.grid != self.grid {
            return Err(SolverError::GridMismatch);
        }
        Ok(SolverState { s, w, steps: 0 })
    }

    /// `v = w - φ(·, s)`.
    pub fn perturbation(&self, state: &SolverState) -> Field {
        let values =
            self.grid.nodes().zip(&state.w.values).map(|(y, w)| w - self.profile.phi(y, state.s)).collect();
        Field { grid: self.grid, values }
    }

    /// `∂_y v = ∂_y w - ∂_y φ`, with the discrete derivative of `w`.
    pub fn perturbation_gradient(&self, state: &SolverState) -> Field {
        let gw = state.w.gradient();
        let values =
            self.grid.nodes().zip(&gw.values).map(|(y, g)| g - self.profile.grad_phi(y, state.s)).collect();
        Field { grid: self.grid, values }
    }

    fn factor_for(&mut self, ds: f64) -> &Factorisation {
        let key = ds.to_bits();
        if !self.factors.contains_key(&key) {
            let n = self.grid.len();
            let mut lo = vec![0.0; n];
            let mut mid = vec![0.0; n];
            let mut up = vec![0.0; n];
            for i in 0..n {
                lo[i] = -ds * self.lower[i];
                mid[i] = 1.0 - ds * self.main[i];
                up[i] = -ds * self.upper[i];
            }
            if self.opts.boundary == Boundary::ProfileDirichlet {
                mid[0] = 1.0;
                up[0] = 0.0;
                mid[n - 1] = 1.0;
                lo[n - 1] = 0.0;
            }
            if self.factors.len() > 64 {
                self.factors.clear();
            }
            self.factors.insert(key, Factorisation::new(&lo, &mid, &up));
        }
        &self.factors[&key]
    }

    /// Nonlocal term `μ e^{-γ s} |w_y| ∫_{-|y|}^{|y|} |w|^{q-1}` at every node.
    pub fn nonlocal_term(&self, w: &[f64], s: f64) -> Vec<f64> {
        let mut grad = vec![0.0; w.len()];
        gradient_into(w, self.grid.spacing(), &mut grad);
        let table = PrefixTable::build(w, self.grid.spacing(), self.params.q, s);
        (0..w.len())
            .map(|i| nonlocal_at(&table, s, self.params.mu, self.consts.gamma, grad[i], i).unwrap_or(0.0))
            .collect()
    }

    /// Explicit part `|w|^{p-1} w + N` of the right-hand side.
    pub fn explicit_rhs(&mut self, w: &[f64], s: f64, out: &mut [f64]) {
        let p = self.params.p;
        let h = self.grid.spacing();
        gradient_into(w, h, &mut self.grad);
        let coeff = self.params.mu * (-self.consts.gamma * s).exp();
        let table = if self.params.mu != 0.0 { Some(PrefixTable::build(w, h, self.params.q, s)) } else { None };
        for i in 0..w.len() {
            let mut f = pow_abs(w[i], p - 1.0) * w[i];
            if let Some(t) = &table {
                f += coeff * self.grad[i].abs() * t.symmetric(i);
            }
            out[i] = f;
        }
    }

    /// Full discrete right-hand side `Λ_h w + F(w)`; Dirichlet rows are zero.
    pub fn full_rhs(&mut self, w: &[f64], s: f64) -> Vec<f64> {
        let n = w.len();
        let mut out = vec![0.0; n];
        self.explicit_rhs(w, s, &mut out);
        for i in 1..n - 1 {
            out[i] += self.lower[i] * w[i - 1] + self.main[i] * w[i] + self.upper[i] * w[i + 1];
        }
        if self.opts.boundary == Boundary::ProfileDirichlet {
            out[0] = 0.0;
            out[n - 1] = 0.0;
        } else {
            out[0] += self.main[0] * w[0] + self.upper[0] * w[1];
            out[n - 1] += self.lower[n - 1] * w[n - 2] + self.main[n - 1] * w[n - 1];
        }
        out
    }

    /// Largest step for which the explicit power term stays within the
    /// stability window at this state.
    pub fn max_stable_step(&self, w: &[f64]) -> f64 {
        let p = self.params.p;
        let m = w.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        0.5 / (p * m.powf(p - 1.0)).max(1e-300)
    }

    fn check_finite(&self, w: &[f64], s: f64) -> Result<(), SolverError> {
        let limit = self.opts.overflow;
        for (i, v) in w.iter().enumerate() {
            if !v.is_finite() || v.abs() > limit {
                return Err(SolverError::PointwiseBlowUp { y: self.grid.node(i), s, limit });
            }
        }
        Ok(())
    }

    /// One IMEX step of size `ds`.
    pub fn step(&mut self, state: &mut SolverState, ds: f64) -> Result<(), SolverError> {
        let max = self.max_stable_step(&state.w.values);
        if !(ds > 0.0 && ds <= max) {
            return Err(SolverError::StepTooLarge { ds, max });
        }
        self.step_unchecked(state, ds)
    }

    fn step_unchecked(&mut self, state: &mut SolverState, ds: f64) -> Result<(), SolverError> {
        let n = self.grid.len();
        let mut rhs = std::mem::take(&mut self.scratch);
        self.explicit_rhs(&state.w.values, state.s, &mut rhs);
        for i in 0..n {
            rhs[i] = state.w.values[i] + ds * rhs[i];
        }
        let s_new = state.s + ds;
        if self.opts.boundary == Boundary::ProfileDirichlet {
            let l = self.grid.half_width();
            rhs[0] = self.profile.phi(-l, s_new);
            rhs[n - 1] = self.profile.phi(l, s_new);
        }
        self.factor_for(ds).solve(&mut rhs);
        std::mem::swap(&mut state.w.values, &mut rhs);
        self.scratch = rhs;
        state.s = s_new;
        state.steps += 1;
        self.check_finite(&state.w.values, state.s)
    }

    /// Step-doubling attempt. Returns the local error estimate; the state is
    /// only advanced when the estimate is within tolerance.
    fn try_adaptive(&mut self, state: &mut SolverState, ds: f64) -> Result<(f64, bool), SolverError> {
        let mut full = state.clone();
        self.step_unchecked(&mut full, ds)?;
        let mut half = state.clone();
        self.step_unchecked(&mut half, 0.5 * ds)?;
        self.step_unchecked(&mut half, 0.5 * ds)?;
        let err = full.w.values.iter().zip(&half.w.values).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        let ok = err <= self.opts.local_tol;
        if ok {
            half.steps = state.steps + 1;
            *state = half;
        }
        Ok((err, ok))
    }

    /// Integrates to `s_end`, calling `monitor` at the start and every
    /// `monitor_every` accepted steps. On `Stop` the stopping step is located
    /// by bisection over the steps since the previous check.
    pub fn run(
        &mut self,
        mut state: SolverState,
        s_end: f64,
        monitor: &mut dyn FnMut(&SolverState, Phase) -> Result<Verdict, SolverError>,
    ) -> Result<RunOutcome, SolverError> {
        let base = self.opts.ds;
        let min_ds = base * 2f64.powi(-24);
        let mut ds = base;
        let mut rejected = 0;
        if monitor(&state, Phase::Regular)? == Verdict::Stop {
            let mut next = state.clone();
            let step = self.opts.ds.min(self.max_stable_step(&state.w.values));
            self.step_unchecked(&mut next, step)?;
            return Ok(RunOutcome {
                state: state.clone(),
                exit: Some(ExitStates { first_out: state, other: next }),
                rejected_steps: 0,
            });
        }
        let mut checkpoint = state.clone();
        let mut taken: Vec<f64> = Vec::with_capacity(self.opts.monitor_every);
        while state.s < s_end - 1e-12 * s_end.abs().max(1.0) {
            let remaining = s_end - state.s;
            if self.opts.adaptive {
                let stable = self.max_stable_step(&state.w.values);
                while ds > stable {
                    ds *= 0.5;
                }
                let try_ds = ds.min(remaining);
                let (err, ok) = self.try_adaptive(&mut state, try_ds)?;
                if !ok {
                    rejected += 1;
                    ds *= 0.5;
                    if ds < min_ds {
                        return Err(SolverError::StepUnderflow { s: state.s, min: min_ds });
                    }
                    continue;
                }
                taken.push(try_ds);
                if err < 0.25 * self.opts.local_tol && ds < 64.0 * base {
                    ds *= 2.0;
                }
            } else {
                let step = ds.min(remaining);
                self.step(&mut state, step)?;
                taken.push(step);
            }
            if taken.len() == self.opts.monitor_every || state.s >= s_end - 1e-12 * s_end.abs().max(1.0) {
                if monitor(&state, Phase::Regular)? == Verdict::Stop {
                    let exit = self.locate_stop(&checkpoint, &taken, monitor)?;
                    return Ok(RunOutcome { state, exit: Some(exit), rejected_steps: rejected });
                }
                checkpoint = state.clone();
                taken.clear();
            }
        }
        Ok(RunOutcome { state, exit: None, rejected_steps: rejected })
    }

    fn replay(&mut self, from: &SolverState, steps: &[f64]) -> Result<SolverState, SolverError> {
        let mut st = from.clone();
        for &ds in steps {
            if self.opts.adaptive {
                // Accepted adaptive steps were taken as two half steps.
                self.step_unchecked(&mut st, 0.5 * ds)?;
                self.step_unchecked(&mut st, 0.5 * ds)?;
                st.steps -= 1;
            } else {
                self.step_unchecked(&mut st, ds)?;
            }
        }
        Ok(st)
    }

    fn locate_stop(
        &mut self,
        checkpoint: &SolverState,
        taken: &[f64],
        monitor: &mut dyn FnMut(&SolverState, Phase) -> Result<Verdict, SolverError>,
    ) -> Result<ExitStates, SolverError> {
        // Invariant: after `lo` steps still running, after `hi` steps stopped.
        let mut lo = 0;
        let mut hi = taken.len();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let st = self.replay(checkpoint, &taken[..mid])?;
            if monitor(&st, Phase::Probe)? == Verdict::Stop {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let other = self.replay(checkpoint, &taken[..lo])?;
        let first_out = self.replay(&other, &taken[lo..hi])?;
        Ok(ExitStates { first_out, other })
    }
}

/// Nonlocal term at node `i` from a prefix table that must have been built
/// at the same time `s`.
pub fn nonlocal_at(
    table: &PrefixTable,
    s: f64,
    mu: f64,
    gamma: f64,
    grad_w: f64,
    i: usize,
) -> Result<f64, SolverError> {
    if table.s != s {
        return Err(SolverError::StalePrefix { table: table.s, used: s });
    }
    Ok(mu * (-gamma * s).exp() * grad_w.abs() * table.symmetric(i))
}

/// `N = μ e^{-γ s} |∂_y(v+φ)| ∫_{-|y|}^{|y|} |v+φ|^{q-1}` at node `i`, with
/// `v` and its gradient given on the grid.
pub fn new_term(v: &Field, grad_v: &Field, i: usize, s: f64, params: &ModelParams) -> f64 {
    let profile = Profile::new(*params);
    let grid = v.grid;
    let w: Vec<f64> = grid.nodes().zip(&v.values).map(|(y, v)| v + profile.phi(y, s)).collect();
    let table = PrefixTable::build(&w, grid.spacing(), params.q, s);
    let gw = grad_v.values[i] + profile.grad_phi(grid.node(i), s);
    nonlocal_at(&table, s, params.mu, params.derived().gamma, gw, i).unwrap_or(f64::NAN)
}

/// `‖N(·, s)‖∞` for the state `w`.
pub fn nonlocal_sup(solver: &SimilaritySolver, state: &SolverState) -> f64 {
    solver.nonlocal_term(&state.w.values, state.s).iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Grid recommended for shrinking-set work up to time `s_max`: covers the
/// cut-off support with a margin.
pub fn recommended_grid(params: &ModelParams, s_max: f64, h: f64) -> Result<Grid1D, crate::grid::GridError> {
    Grid1D::with_spacing(2.0 * params.k0 * s_max.sqrt() + 4.0, h)
}
