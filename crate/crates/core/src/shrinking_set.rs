//! Membership in the shrinking set `V_A(s)` and trajectory tracking.

use crate::grid::Field;
use crate::params::ModelParams;
use crate::similarity::{Phase, SimilaritySolver, SolverError, SolverState, Verdict};
use crate::spectral::{decompose, ModeDecomposition, SpectralError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetError {
    #[error("shrinking set: bound meaningless after exit (left through {component:?} at s = {s})")]
    AfterExit { component: ExitComponent, s: f64 },
    #[error("shrinking set: s = {0} is below 1")]
    TimeTooSmall(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Component constraints in check order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExitComponent {
    V0,
    V1,
    V2,
    VMinus,
    VeInf,
    VeBeta,
}

impl ExitComponent {
    pub const ALL: [ExitComponent; 6] = [Self::V0, Self::V1, Self::V2, Self::VMinus, Self::VeInf, Self::VeBeta];

    pub fn name(&self) -> &'static str {
        match self {
            Self::V0 => "v0",
            Self::V1 => "v1",
            Self::V2 => "v2",
            Self::VMinus => "v_minus",
            Self::VeInf => "ve_inf",
            Self::VeBeta => "ve_beta",
        }
    }
}

/// Thresholds of `V_A(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetBounds {
    pub v01: f64,
    pub v2: f64,
    pub v_minus: f64,
    pub ve_inf: f64,
    pub ve_beta: f64,
}

impl SetBounds {
    pub fn at(s: f64, params: &ModelParams) -> Result<Self, SetError> {
        if !(s >= 1.0) {
            return Err(SetError::TimeTooSmall(s));
        }
        let a = params.a;
        Ok(Self {
            v01: a / (s * s),
            v2: a * a * s.ln() / (s * s),
            v_minus: a / (s * s),
            ve_inf: a * a / s.sqrt(),
            ve_beta: a * a / s.powf((1.0 - params.beta) / 2.0),
        })
    }
}

/// Signed slack `threshold - |value|` per component; `≥ 0` means inside.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    pub v_minus: f64,
    pub ve_inf: f64,
    pub ve_beta: f64,
}

impl Margins {
    pub fn get(&self, c: ExitComponent) -> f64 {
        match c {
            ExitComponent::V0 => self.v0,
            ExitComponent::V1 => self.v1,
            ExitComponent::V2 => self.v2,
            ExitComponent::VMinus => self.v_minus,
            ExitComponent::VeInf => self.ve_inf,
            ExitComponent::VeBeta => self.ve_beta,
        }
    }

    pub fn first_violation(&self) -> Option<ExitComponent> {
        ExitComponent::ALL.into_iter().find(|c| self.get(*c) < 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitReport {
    pub s: f64,
    /// `None` while inside.
    pub component: Option<ExitComponent>,
    pub margins: Margins,
    /// Diagnostic only: `sup (1+|y|^β)|∂_y v|`.
    pub grad_beta: f64,
}

impl ExitReport {
    pub fn inside(&self) -> bool {
        self.component.is_none()
    }
}

pub fn check_membership(
    d: &ModeDecomposition,
    grad_v: &Field,
    s: f64,
    params: &ModelParams,
) -> Result<ExitReport, SetError> {
    let b = SetBounds::at(s, params)?;
    let margins = Margins {
        v0: b.v01 - d.v0.abs(),
        v1: b.v01 - d.v1.abs(),
        v2: b.v2 - d.v2.abs(),
        v_minus: b.v_minus - d.vminus_weighted(),
        ve_inf: b.ve_inf - d.ve_sup(),
        ve_beta: b.ve_beta - d.ve_beta(params.beta),
    };
    Ok(ExitReport {
        s,
        component: margins.first_violation(),
        margins,
        grad_beta: grad_v.weighted_sup(params.beta),
    })
}

/// Normalised global bounds `‖v‖∞ √s / A²` and
/// `‖(1+|y|^β) v‖∞ s^{(1-β)/2} / A²`. Both stay below a fixed constant on
/// the set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalBounds {
    pub sup: f64,
    pub weighted: f64,
}

pub fn global_bounds_check(d: &ModeDecomposition, params: &ModelParams) -> Result<GlobalBounds, SetError> {
    let s = d.s;
    let b = SetBounds::at(s, params)?;
    let v = d.reconstruct();
    Ok(GlobalBounds { sup: v.sup_norm() / b.ve_inf, weighted: v.weighted_sup(params.beta) / b.ve_beta })
}

/// One row of a recorded trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub s: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    pub norm_vminus_weighted: f64,
    pub norm_ve_inf: f64,
    pub norm_ve_beta: f64,
    pub norm_gradv_beta: f64,
    pub in_set: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitEvent {
    pub report: ExitReport,
    /// `d/ds` of the exiting component, from the bracketing states.
    pub derivative: f64,
    /// Sign of the exiting component at exit.
    pub sign: f64,
}

impl ExitEvent {
    /// `ω · v_m' > 0`: the trajectory leaves transversally.
    pub fn transverse(&self) -> bool {
        self.sign * self.derivative > 0.0
    }
}

/// Recorded run: monitor samples, optional field snapshots, exit event.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// `(s, w)` snapshots.
    pub fields: Vec<(f64, Field)>,
    pub exit: Option<ExitEvent>,
    pub s_end: f64,
}

impl Trajectory {
    pub fn survived(&self) -> bool {
        self.exit.is_none()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    /// Keep a `w` snapshot every this many regular checks (0 = never).
    pub field_every: usize,
    pub record_samples: bool,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { field_every: 0, record_samples: true }
    }
}

fn sample_of(report: &ExitReport, d: &ModeDecomposition, params: &ModelParams) -> TrajectorySample {
    TrajectorySample {
        s: d.s,
        v0: d.v0,
        v1: d.v1,
        v2: d.v2,
        norm_vminus_weighted: d.vminus_weighted(),
        norm_ve_inf: d.ve_sup(),
        norm_ve_beta: d.ve_beta(params.beta),
        norm_gradv_beta: report.grad_beta,
        in_set: report.inside(),
    }
}

fn component_value(d: &ModeDecomposition, c: ExitComponent, params: &ModelParams) -> f64 {
    match c {
        ExitComponent::V0 => d.v0,
        ExitComponent::V1 => d.v1,
        ExitComponent::V2 => d.v2,
        ExitComponent::VMinus => d.vminus_weighted(),
        ExitComponent::VeInf => d.ve_sup(),
        ExitComponent::VeBeta => d.ve_beta(params.beta),
    }
}

pub fn evaluate(solver: &SimilaritySolver, state: &SolverState) -> Result<(ModeDecomposition, ExitReport), SetError> {
    let v = solver.perturbation(state);
    let d = decompose(&v, state.s, &solver.params)?;
    let g = solver.perturbation_gradient(state);
    let r = check_membership(&d, &g, state.s, &solver.params)?;
    Ok((d, r))
}

/// Runs `solver` from `state` to `s_end`, stopping at the first exit from
/// the set and locating it to one step.
pub fn track(
    solver: &mut SimilaritySolver,
    state: SolverState,
    s_end: f64,
    opts: TrackOptions,
) -> Result<Trajectory, SolverError> {
    let params = solver.params;
    let mut traj = Trajectory::default();
    let mut regular = 0usize;
    let profile = solver.profile;
    let grid = solver.grid;
    let mut monitor = |st: &SolverState, phase: Phase| -> Result<Verdict, SolverError> {
        let v = Field {
            grid,
            values: grid.nodes().zip(&st.w.values).map(|(y, w)| w - profile.phi(y, st.s)).collect(),
        };
        let d = decompose(&v, st.s, &params).map_err(|e| SolverError::Monitor(e.to_string()))?;
        let gw = st.w.gradient();
        let g = Field {
            grid,
            values: grid.nodes().zip(&gw.values).map(|(y, g)| g - profile.grad_phi(y, st.s)).collect(),
        };
        let r = check_membership(&d, &g, st.s, &params).map_err(|e| SolverError::Monitor(e.to_string()))?;
        if phase == Phase::Regular {
            if opts.record_samples {
                traj.samples.push(sample_of(&r, &d, &params));
            }
            if opts.field_every > 0 && regular % opts.field_every == 0 && r.inside() {
                traj.fields.push((st.s, st.w.clone()));
            }
            regular += 1;
        }
        Ok(if r.inside() { Verdict::Continue } else { Verdict::Stop })
    };
    let outcome = solver.run(state, s_end, &mut monitor)?;
    traj.s_end = outcome.state.s;
    if let Some(ex) = outcome.exit {
        let (d1, r1) = evaluate(solver, &ex.first_out).map_err(|e| SolverError::Monitor(e.to_string()))?;
        let (d0, _) = evaluate(solver, &ex.other).map_err(|e| SolverError::Monitor(e.to_string()))?;
        let c = r1.component.expect("stopped state lies outside");
        let x1 = component_value(&d1, c, &params);
        let x0 = component_value(&d0, c, &params);
        let derivative = (x1 - x0) / (ex.first_out.s - ex.other.s);
        if opts.record_samples {
            if let Some(last) = traj.samples.last_mut() {
                if !last.in_set {
                    traj.samples.pop();
                }
            }
            traj.samples.push(sample_of(&r1, &d1, &params));
        }
        traj.s_end = ex.first_out.s;
        traj.exit = Some(ExitEvent { sign: x1.signum(), derivative, report: r1 });
    }
    Ok(traj)
}

impl TrajectorySample {
    pub fn margins(&self, params: &ModelParams) -> Result<Margins, SetError> {
        let b = SetBounds::at(self.s, params)?;
        Ok(Margins {
            v0: b.v01 - self.v0.abs(),
            v1: b.v01 - self.v1.abs(),
            v2: b.v2 - self.v2.abs(),
            v_minus: b.v_minus - self.norm_vminus_weighted,
            ve_inf: b.ve_inf - self.norm_ve_inf,
            ve_beta: b.ve_beta - self.norm_ve_beta,
        })
    }

    fn component(&self, c: ExitComponent) -> f64 {
        match c {
            ExitComponent::V0 => self.v0,
            ExitComponent::V1 => self.v1,
            ExitComponent::V2 => self.v2,
            ExitComponent::VMinus => self.norm_vminus_weighted,
            ExitComponent::VeInf => self.norm_ve_inf,
            ExitComponent::VeBeta => self.norm_ve_beta,
        }
    }
}

impl Trajectory {
    /// Rebuilds a trajectory from stored samples and snapshots. The exit, if
    /// any, is the first sample outside the set; its derivative is the
    /// difference quotient against the preceding sample.
    pub fn from_records(
        samples: Vec<TrajectorySample>,
        fields: Vec<(f64, Field)>,
        params: &ModelParams,
    ) -> Result<Self, SetError> {
        let mut exit = None;
        let mut s_end = samples.last().map_or(0.0, |t| t.s);
        for (k, t) in samples.iter().enumerate() {
            let margins = t.margins(params)?;
            if let Some(c) = margins.first_violation() {
                let x1 = t.component(c);
                let derivative = match k.checked_sub(1).map(|j| &samples[j]) {
                    Some(prev) if prev.s < t.s => (x1 - prev.component(c)) / (t.s - prev.s),
                    _ => 0.0,
                };
                exit = Some(ExitEvent {
                    report: ExitReport { s: t.s, component: Some(c), margins, grad_beta: t.norm_gradv_beta },
                    derivative,
                    sign: x1.signum(),
                });
                s_end = t.s;
                break;
            }
        }
        Ok(Self { samples, fields, exit, s_end })
    }
}

/// Fails when asked for a bound outside the set.
pub fn require_inside(traj: &Trajectory) -> Result<(), SetError> {
    match &traj.exit {
        None => Ok(()),
        Some(e) => Err(SetError::AfterExit {
            component: e.report.component.unwrap_or(ExitComponent::V0),
            s: e.report.s,
        }),
    }
}
