//! Quantitative checks of the profile bounds on recorded trajectories.
//!
//! Every bound is evaluated twice: in similarity variables and after pulling
//! the snapshot back to `u(x, t)` with `T - t = e^{-s}`. Constants are fitted
//! as window maxima and judged by their stability across windows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Field;
use crate::kernel_lab::fit_slope;
use crate::params::ModelParams;
use crate::profiles::Profile;
use crate::shrinking_set::{require_inside, SetError, Trajectory};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    AfterExit(#[from] SetError),
    #[error("verify: need at least {need} field snapshots, got {got}")]
    TooFewSnapshots { got: usize, need: usize },
    #[error("verify: outer region |y| >= {edge:.4e} is empty at s = {s} (grid half-width {half_width})")]
    OuterRegionEmpty { s: f64, edge: f64, half_width: f64 },
}

/// Largest allowed ratio between window constants.
pub const STABILITY_FACTOR: f64 = 2.0;
/// Largest allowed gap between window slopes.
pub const SLOPE_AGREEMENT: f64 = 0.15;

const MIN_SNAPSHOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileErrorRecord {
    pub s: f64,
    /// `sup (1+|y|^β) |w - f(y/√s)|`.
    pub e: f64,
    /// `sup (1+|y|^β) |w_y - ∂_y f(y/√s)|`.
    pub e_grad: f64,
    pub scaled: f64,
    pub scaled_grad: f64,
    /// Same quantities computed from the physical pullback.
    pub physical: f64,
    pub physical_grad: f64,
}

/// Window maxima of a scaled error over the two halves of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConstants {
    pub first: f64,
    pub second: f64,
}

impl WindowConstants {
    fn of(records: &[(f64, f64)], s_mid: f64) -> Self {
        let mut first = 0.0_f64;
        let mut second = 0.0_f64;
        for &(s, x) in records {
            if s <= s_mid {
                first = first.max(x);
            } else {
                second = second.max(x);
            }
        }
        Self { first, second }
    }

    pub fn ratio(&self) -> f64 {
        let hi = self.first.max(self.second);
        let lo = self.first.min(self.second);
        if hi == 0.0 {
            1.0
        } else {
            hi / lo
        }
    }

    pub fn stable(&self) -> bool {
        self.ratio() <= STABILITY_FACTOR
    }

    pub fn max(&self) -> f64 {
        self.first.max(self.second)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileErrorSeries {
    pub records: Vec<ProfileErrorRecord>,
    /// Log-log slope of `E` over the whole run.
    pub slope: f64,
    pub slope_grad: f64,
    /// Slopes of `E` over the two halves.
    pub window_slopes: (f64, f64),
    pub constants: WindowConstants,
    pub constants_grad: WindowConstants,
    pub physical_constants: WindowConstants,
    pub physical_constants_grad: WindowConstants,
}

impl ProfileErrorSeries {
    pub fn slopes_agree(&self) -> bool {
        (self.window_slopes.0 - self.window_slopes.1).abs() <= SLOPE_AGREEMENT
    }

    pub fn stable(&self) -> bool {
        self.constants.stable() && self.constants_grad.stable()
    }

    pub fn physical_stable(&self) -> bool {
        self.physical_constants.stable() && self.physical_constants_grad.stable()
    }

    /// Both variable sets reach the same verdict.
    pub fn pullback_consistent(&self) -> bool {
        self.stable() == self.physical_stable()
    }
}

fn snapshots(traj: &Trajectory) -> Result<&[(f64, Field)], VerifyError> {
    require_inside(traj)?;
    if traj.fields.len() < MIN_SNAPSHOTS {
        return Err(VerifyError::TooFewSnapshots { got: traj.fields.len(), need: MIN_SNAPSHOTS });
    }
    Ok(&traj.fields)
}

fn midpoint(fields: &[(f64, Field)]) -> f64 {
    0.5 * (fields[0].0 + fields[fields.len() - 1].0)
}

fn log_slope(pts: &[(f64, f64)]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().filter(|(_, e)| *e > 0.0).map(|(s, e)| (s.ln(), e.ln())).unzip();
    if xs.len() < 2 {
        return 0.0;
    }
    fit_slope(&xs, &ys)
}

fn profile_record(profile: &Profile, s: f64, w: &Field) -> ProfileErrorRecord {
    let p = profile.params.p;
    let beta = profile.params.beta;
    let rs = s.sqrt();
    let gw = w.gradient();
    let mut e = 0.0_f64;
    let mut eg = 0.0_f64;
    for (i, y) in w.grid.nodes().enumerate() {
        let (f, f1, _) = profile.flat_derivs(y / rs);
        let wt = 1.0 + y.abs().powf(beta);
        e = e.max(wt * (w.values[i] - f).abs());
        eg = eg.max(wt * (gw.values[i] - f1 / rs).abs());
    }
    let scale = s.powf(0.5 * (1.0 - beta));

    // Physical side: u(x,t), ∂_x u with T - t = e^{-s}.
    let tau = (-s).exp();
    let log_tau = -tau.ln();
    let lift = tau.powf(-1.0 / (p - 1.0));
    let rt = tau.sqrt();
    let mut pe = 0.0_f64;
    let mut pg = 0.0_f64;
    for (i, y) in w.grid.nodes().enumerate() {
        let x = rt * y;
        let u = lift * w.values[i];
        let ux = lift / rt * gw.values[i];
        let z = x / (tau * log_tau).sqrt();
        let (f, f1, _) = profile.flat_derivs(z);
        let wt = 1.0 + (x / rt).abs().powf(beta);
        pe = pe.max(wt * (u / lift - f).abs());
        pg = pg.max(wt * (ux * rt / lift - f1 / log_tau.sqrt()).abs());
    }
    let pscale = log_tau.powf(0.5 * (1.0 - beta));
    ProfileErrorRecord {
        s,
        e,
        e_grad: eg,
        scaled: e * scale,
        scaled_grad: eg * scale,
        physical: pe * pscale,
        physical_grad: pg * pscale,
    }
}

/// Weighted distance to the flat profile along a trajectory that stayed in
/// the shrinking set.
pub fn theorem_bound(traj: &Trajectory, params: &ModelParams) -> Result<ProfileErrorSeries, VerifyError> {
    let fields = snapshots(traj)?;
    let profile = Profile::new(*params);
    let records: Vec<ProfileErrorRecord> = fields.par_iter().map(|(s, w)| profile_record(&profile, *s, w)).collect();
    let s_mid = midpoint(fields);
    let pick = |f: fn(&ProfileErrorRecord) -> f64| -> Vec<(f64, f64)> { records.iter().map(|r| (r.s, f(r))).collect() };
    let e = pick(|r| r.e);
    let (lo, hi): (Vec<_>, Vec<_>) = e.iter().partition(|(s, _)| *s <= s_mid);
    Ok(ProfileErrorSeries {
        slope: log_slope(&e),
        slope_grad: log_slope(&pick(|r| r.e_grad)),
        window_slopes: (log_slope(&lo), log_slope(&hi)),
        constants: WindowConstants::of(&pick(|r| r.scaled), s_mid),
        constants_grad: WindowConstants::of(&pick(|r| r.scaled_grad), s_mid),
        physical_constants: WindowConstants::of(&pick(|r| r.physical), s_mid),
        physical_constants_grad: WindowConstants::of(&pick(|r| r.physical_grad), s_mid),
        records,
    })
}

/// Exponent `a` of the outer region `|y| ≥ s^a`.
pub fn outer_region_exponent(params: &ModelParams) -> f64 {
    0.5 * (1.0 + 1.0 / (2.0 / (params.p - 1.0) - params.beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub s: f64,
    pub edge: f64,
    pub nodes: usize,
    /// `sup |y|^β |w| s^{(1-β)/2}` over the region.
    pub c_value: f64,
    pub c_grad: f64,
    pub physical_value: f64,
    pub physical_grad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterBoundReport {
    pub exponent: f64,
    pub records: Vec<OuterRecord>,
    pub constants: WindowConstants,
    pub constants_grad: WindowConstants,
    pub physical_constants: WindowConstants,
    pub physical_constants_grad: WindowConstants,
}

impl OuterBoundReport {
    pub fn stable(&self) -> bool {
        self.constants.stable() && self.constants_grad.stable()
    }

    pub fn pullback_consistent(&self) -> bool {
        self.stable() == (self.physical_constants.stable() && self.physical_constants_grad.stable())
    }
}

fn outer_record(params: &ModelParams, exponent: f64, s: f64, w: &Field) -> Result<OuterRecord, VerifyError> {
    let p = params.p;
    let beta = params.beta;
    let edge = s.powf(exponent);
    let gw = w.gradient();
    let scale = s.powf(0.5 * (1.0 - beta));
    let tau = (-s).exp();
    let rt = tau.sqrt();
    let log_tau = -tau.ln();
    let mut rec = OuterRecord { s, edge, nodes: 0, c_value: 0.0, c_grad: 0.0, physical_value: 0.0, physical_grad: 0.0 };
    for (i, y) in w.grid.nodes().enumerate() {
        if y.abs() < edge {
            continue;
        }
        rec.nodes += 1;
        let wt = y.abs().powf(beta);
        rec.c_value = rec.c_value.max(wt * w.values[i].abs() * scale);
        rec.c_grad = rec.c_grad.max(wt * gw.values[i].abs() * scale);

        // |u| / (|x|^{-β} τ^{β/2 - 1/(p-1)} |log τ|^{-(1-β)/2}) and the gradient analogue.
        let x = rt * y;
        let u = tau.powf(-1.0 / (p - 1.0)) * w.values[i];
        let ux = tau.powf(-1.0 / (p - 1.0) - 0.5) * gw.values[i];
        let env = x.abs().powf(-beta) * tau.powf(0.5 * beta - 1.0 / (p - 1.0)) * log_tau.powf(-0.5 * (1.0 - beta));
        rec.physical_value = rec.physical_value.max(u.abs() / env);
        rec.physical_grad = rec.physical_grad.max(ux.abs() / (env / rt));
    }
    if rec.nodes == 0 {
        return Err(VerifyError::OuterRegionEmpty { s, edge, half_width: w.grid.half_width() });
    }
    Ok(rec)
}

/// Fits the constants of the outer-region decay bound for `u` and `∇u`.
pub fn corollary_outer_bound(traj: &Trajectory, params: &ModelParams) -> Result<OuterBoundReport, VerifyError> {
    let fields = snapshots(traj)?;
    let exponent = outer_region_exponent(params);
    let records = fields
        .par_iter()
        .map(|(s, w)| outer_record(params, exponent, *s, w))
        .collect::<Result<Vec<_>, _>>()?;
    let s_mid = midpoint(fields);
    let pick = |f: fn(&OuterRecord) -> f64| -> Vec<(f64, f64)> { records.iter().map(|r| (r.s, f(r))).collect() };
    Ok(OuterBoundReport {
        exponent,
        constants: WindowConstants::of(&pick(|r| r.c_value), s_mid),
        constants_grad: WindowConstants::of(&pick(|r| r.c_grad), s_mid),
        physical_constants: WindowConstants::of(&pick(|r| r.physical_value), s_mid),
        physical_constants_grad: WindowConstants::of(&pick(|r| r.physical_grad), s_mid),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralSeries {
    pub kappa: f64,
    /// `(s, w(0, s))`.
    pub values: Vec<(f64, f64)>,
    /// `max |w(0,s) - κ| √s`; divide by `A²` for the envelope constant.
    pub envelope: f64,
    /// First `s` from which `|w(0,s) - κ|` never increases again, scanning
    /// up to `s_end - HORIZON_LAYER`.
    pub monotone_from: Option<f64>,
    /// Largest increase of `|w(0,s) - κ|` inside the final layer.
    pub horizon_rise: f64,
}

impl CentralSeries {
    pub fn deviations(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().map(|(s, w)| (*s, (w - self.kappa).abs()))
    }

    pub fn envelope_constant(&self, a: f64) -> f64 {
        self.envelope / (a * a)
    }

    /// Monotone approach over the second half of the series at least.
    pub fn monotone_after_transient(&self) -> bool {
        match (self.monotone_from, self.values.first(), self.values.last()) {
            (Some(m), Some(a), Some(b)) => m <= 0.5 * (a.0 + b.0),
            _ => false,
        }
    }
}

/// Width in `s` of the end layer excluded from the monotonicity scan. A
/// trajectory shot to vanish in the unstable modes at `s_end` carries a
/// correction growing like `e^(s - s_end)`, which bends `w(0,s)` there.
pub const HORIZON_LAYER: f64 = 1.0;

/// Central value `w(0, s)` of every snapshot.
pub fn central_value(traj: &Trajectory, params: &ModelParams) -> CentralSeries {
    let kappa = params.derived().kappa;
    let values: Vec<(f64, f64)> = traj.fields.iter().map(|(s, w)| (*s, w.interpolate(0.0))).collect();
    let envelope = values.iter().map(|(s, w)| (w - kappa).abs() * s.sqrt()).fold(0.0, f64::max);
    let dev: Vec<f64> = values.iter().map(|(_, w)| (w - kappa).abs()).collect();
    let cut = values.last().map_or(0.0, |v| v.0) - HORIZON_LAYER;
    let scan = values.iter().take_while(|v| v.0 <= cut).count();
    let mut start = 0;
    for k in 1..scan {
        if dev[k] > dev[k - 1] * (1.0 + 1e-12) + 1e-15 {
            start = k;
        }
    }
    let mut horizon_rise = 0.0f64;
    for k in scan.max(1)..dev.len() {
        horizon_rise = horizon_rise.max(dev[k] - dev[k - 1]);
    }
    let monotone_from = if scan == 0 { None } else { Some(values[start].0) };
    CentralSeries { kappa, values, envelope, monotone_from, horizon_rise }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::params::{validate, RawParams};

    fn synthetic(grid: Grid1D, ss: &[f64], f: impl Fn(f64, f64) -> f64) -> Trajectory {
        Trajectory {
            fields: ss.iter().map(|&s| (s, Field::from_fn(grid, |y| f(y, s)))).collect(),
            s_end: *ss.last().unwrap(),
            ..Default::default()
        }
    }

    fn ss() -> Vec<f64> {
        (0..=20).map(|k| 50.0 + k as f64).collect()
    }

    #[test]
    fn flat_profile_has_no_error() {
        let params = ModelParams::reference();
        let prof = Profile::new(params);
        let grid = Grid1D::with_spacing(90.0, 0.1).unwrap();
        let t = synthetic(grid, &ss(), |y, s| prof.flat(y / s.sqrt()));
        let r = theorem_bound(&t, &params).unwrap();
        for rec in &r.records {
            assert!(rec.e < 1e-15);
            assert!(rec.e_grad < 1e-3 * rec.s.powf(-1.0), "{}", rec.e_grad);
        }
    }

    #[test]
    fn modified_profile_error_decays() {
        let params = ModelParams::reference();
        let prof = Profile::new(params);
        let grid = Grid1D::with_spacing(90.0, 0.05).unwrap();
        let t = synthetic(grid, &ss(), |y, s| prof.phi(y, s));
        let r = theorem_bound(&t, &params).unwrap();
        assert!(r.stable());
        assert!(r.pullback_consistent());
        for w in r.records.windows(2) {
            assert!(w[1].scaled < w[0].scaled);
        }
        let k = params.derived().kappa / (2.0 * params.p);
        for rec in &r.records {
            assert!((rec.scaled - rec.physical).abs() <= 1e-9 * rec.scaled);
            // χ0 ≤ 1 and χ0 = 1 for |y| ≤ g, so E ≥ k/s (1+g^β)|_{interior nodes}.
            let g = rec.s.powf(0.5 + params.eps);
            let lo = k / rec.s * (1.0 + grid.node(grid.nearest(g.min(89.0))).abs().powf(params.beta));
            assert!(rec.e >= 0.99 * lo);
        }
    }

    #[test]
    fn exited_trajectory_rejected() {
        let mut t = Trajectory::default();
        let grid = Grid1D::with_spacing(10.0, 0.5).unwrap();
        t.fields = (0..5).map(|k| (50.0 + k as f64, Field::zeros(grid))).collect();
        t.exit = Some(crate::shrinking_set::ExitEvent {
            report: crate::shrinking_set::ExitReport {
                s: 53.0,
                component: Some(crate::shrinking_set::ExitComponent::V0),
                margins: Default::default(),
                grad_beta: 0.0,
            },
            derivative: 1.0,
            sign: 1.0,
        });
        let e = theorem_bound(&t, &ModelParams::reference()).unwrap_err();
        assert!(e.to_string().contains("bound meaningless after exit"));
    }

    #[test]
    fn outer_region_empty_on_reference_grid() {
        let params = ModelParams::reference();
        let grid = Grid1D::with_spacing(90.0, 0.1).unwrap();
        let t = synthetic(grid, &ss(), |_, _| 0.0);
        assert!(matches!(corollary_outer_bound(&t, &params), Err(VerifyError::OuterRegionEmpty { .. })));
    }

    fn wide_params() -> ModelParams {
        validate(&RawParams { mu: 0.0, beta: 0.1, ..RawParams::default() }).unwrap()
    }

    #[test]
    fn zero_field_satisfies_outer_bound() {
        let params = wide_params();
        let grid = Grid1D::with_spacing(2500.0, 1.0).unwrap();
        let t = synthetic(grid, &ss(), |_, _| 0.0);
        let r = corollary_outer_bound(&t, &params).unwrap();
        assert_eq!(r.constants.max(), 0.0);
        assert!(r.stable());
    }

    #[test]
    fn flat_profile_outer_constant_matches_asymptotics() {
        let params = wide_params();
        let prof = Profile::new(params);
        let grid = Grid1D::with_spacing(2500.0, 0.5).unwrap();
        let t = synthetic(grid, &ss(), |y, s| prof.flat(y / s.sqrt()));
        let r = corollary_outer_bound(&t, &params).unwrap();
        let c = params.derived().b.powf(-1.0 / (params.p - 1.0));
        for rec in &r.records {
            assert!((rec.c_value / c - 1.0).abs() < 0.01, "{} vs {c}", rec.c_value);
            assert!((rec.physical_value / rec.c_value - 1.0).abs() < 1e-9);
        }
        assert!(r.stable());
        assert!(r.pullback_consistent());
    }

    #[test]
    fn central_value_of_constant_and_modified_profile() {
        let params = ModelParams::reference();
        let kappa = params.derived().kappa;
        let grid = Grid1D::with_spacing(20.0, 0.1).unwrap();
        let c = central_value(&synthetic(grid, &ss(), |_, _| kappa), &params);
        assert!(c.values.iter().all(|(_, w)| *w == kappa));
        assert_eq!(c.envelope, 0.0);

        let prof = Profile::new(params);
        let c = central_value(&synthetic(grid, &ss(), |y, s| prof.phi(y, s)), &params);
        for (s, w) in &c.values {
            let expect = kappa * (1.0 + 1.0 / (2.0 * params.p * s));
            assert!((w - expect).abs() < 1e-14);
        }
        assert_eq!(c.monotone_from, Some(50.0));
        assert!(c.monotone_after_transient());
    }
}
