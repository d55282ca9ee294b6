//! Two-parameter shooting over `(d0, d1)`: initial data, exit classification
//! and a degree-preserving rectangle subdivision search.

use crate::grid::{Field, Grid1D};
use crate::params::ModelParams;
use crate::profiles::Cutoff;
use crate::shrinking_set::{track, ExitComponent, SetBounds, TrackOptions, Trajectory};
use crate::similarity::{SimilaritySolver, SolverError, SolverOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShootError {
    #[error("shooting: grid cannot resolve the initial-data support (half width {half_width}, spacing {h}, support {support})")]
    Unresolved { half_width: f64, h: f64, support: f64 },
    #[error("shooting: boundary of the initial rectangle has winding {0:?}, need ±1")]
    InitialDegree(Option<i32>),
    #[error("shooting: degree lost at level {level} on {rect:?}")]
    DegreeLost { level: usize, rect: Rect },
    #[error("shooting: no horizon survivor after {levels} levels")]
    NoSurvivor { levels: usize },
    #[error("shooting: no sign change of mode {coordinate} within ±{step}")]
    PolishBracket { coordinate: usize, step: f64 },
    #[error("shooting: {0}")]
    Solver(#[from] SolverError),
}

/// `ψ(y) = (A/s0²)(d0 + d1 y) χ(2y, s0)`.
pub fn initial_data(d0: f64, d1: f64, params: &ModelParams, grid: Grid1D) -> Result<Field, ShootError> {
    let s0 = params.s0;
    let plateau = params.k0 * s0.sqrt() / 2.0;
    let support = 2.0 * plateau;
    let h = grid.spacing();
    if grid.half_width() < support || h > plateau / 8.0 {
        return Err(ShootError::Unresolved { half_width: grid.half_width(), h, support });
    }
    let c = params.a / (s0 * s0);
    Ok(Field::from_fn(grid, |y| c * (d0 + d1 * y) * Cutoff::value(y / plateau)))
}

/// Quadrant label of an exit, or the dominant component of a survivor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExitLabel {
    V0Plus,
    V1Plus,
    V0Minus,
    V1Minus,
    /// Left through a constraint other than `v0`, `v1`.
    Other(ExitComponent),
}

impl ExitLabel {
    pub fn quadrant(&self) -> Option<i32> {
        match self {
            Self::V0Plus => Some(0),
            Self::V1Plus => Some(1),
            Self::V0Minus => Some(2),
            Self::V1Minus => Some(3),
            Self::Other(_) => None,
        }
    }

    pub fn from_mode(index: usize, sign: f64) -> Self {
        match (index, sign >= 0.0) {
            (0, true) => Self::V0Plus,
            (0, false) => Self::V0Minus,
            (_, true) => Self::V1Plus,
            (_, false) => Self::V1Minus,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::V0Plus => "v0+".into(),
            Self::V1Plus => "v1+".into(),
            Self::V0Minus => "v0-".into(),
            Self::V1Minus => "v1-".into(),
            Self::Other(c) => c.name().into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ExitLabel,
    /// Exit time, or the horizon for survivors.
    pub s_exit: f64,
    pub survived: bool,
    /// `ω · v_m' > 0` at the exit; `None` for survivors.
    pub transverse: Option<bool>,
}

pub trait ExitClassifier: Sync {
    fn classify(&self, d: [f64; 2]) -> Result<Classification, ShootError>;
}

/// Classifier backed by the similarity solver and shrinking-set tracker.
#[derive(Debug, Clone)]
pub struct PdeClassifier {
    pub params: ModelParams,
    pub grid: Grid1D,
    pub opts: SolverOptions,
    pub s_end: f64,
}

impl PdeClassifier {
    pub fn new(params: ModelParams, grid: Grid1D, opts: SolverOptions, horizon: f64) -> Self {
        let opts = SolverOptions { adaptive: false, ..opts };
        Self { params, grid, opts, s_end: params.s0 + horizon }
    }

    pub fn trajectory(&self, d: [f64; 2], track_opts: TrackOptions) -> Result<Trajectory, ShootError> {
        let mut solver = SimilaritySolver::new(self.params, self.grid, self.opts)?;
        let v = initial_data(d[0], d[1], &self.params, self.grid)?;
        let st = solver.state_from_perturbation(&v, self.params.s0)?;
        Ok(track(&mut solver, st, self.s_end, track_opts)?)
    }
}

impl ExitClassifier for PdeClassifier {
    fn classify(&self, d: [f64; 2]) -> Result<Classification, ShootError> {
        let traj = self.trajectory(d, TrackOptions { field_every: 0, record_samples: true })?;
        Ok(classify_trajectory(&traj, &self.params))
    }
}

pub fn classify_trajectory(traj: &Trajectory, params: &ModelParams) -> Classification {
    match &traj.exit {
        Some(ev) => {
            let c = ev.report.component.unwrap_or(ExitComponent::V0);
            let label = match c {
                ExitComponent::V0 => ExitLabel::from_mode(0, ev.sign),
                ExitComponent::V1 => ExitLabel::from_mode(1, ev.sign),
                other => ExitLabel::Other(other),
            };
            Classification { label, s_exit: ev.report.s, survived: false, transverse: Some(ev.transverse()) }
        }
        None => {
            let last = traj.samples.last().copied();
            let (v0, v1, s) = last.map(|x| (x.v0, x.v1, x.s)).unwrap_or((0.0, 0.0, traj.s_end));
            let thr = SetBounds::at(s.max(1.0), params).map(|b| b.v01).unwrap_or(1.0);
            let label = if v0.abs() / thr >= v1.abs() / thr {
                ExitLabel::from_mode(0, v0)
            } else {
                ExitLabel::from_mode(1, v1)
            };
            Classification { label, s_exit: traj.s_end, survived: true, transverse: None }
        }
    }
}

/// Linear model of the exit map: `(v0, v1) = M (d - d*)` with growth rates
/// `1` and `1/2`, threshold `1`. Useful for testing the search logic.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticClassifier {
    pub target: [f64; 2],
    pub matrix: [[f64; 2]; 2],
    pub horizon: f64,
}

impl ExitClassifier for SyntheticClassifier {
    fn classify(&self, d: [f64; 2]) -> Result<Classification, ShootError> {
        let x = [d[0] - self.target[0], d[1] - self.target[1]];
        let m = self.matrix;
        let phi = [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]];
        let rates = [1.0, 0.5];
        let time = |k: usize| {
            let a = phi[k].abs();
            if a >= 1.0 {
                0.0
            } else if a == 0.0 {
                f64::INFINITY
            } else {
                -a.ln() / rates[k]
            }
        };
        let (t0, t1) = (time(0), time(1));
        let (k, t) = if t0 <= t1 { (0, t0) } else { (1, t1) };
        if t > self.horizon {
            let k = if phi[0].abs() * (0.5 * self.horizon).exp() >= phi[1].abs() { 0 } else { 1 };
            return Ok(Classification {
                label: ExitLabel::from_mode(k, phi[k]),
                s_exit: self.horizon,
                survived: true,
                transverse: None,
            });
        }
        Ok(Classification { label: ExitLabel::from_mode(k, phi[k]), s_exit: t, survived: false, transverse: Some(true) })
    }
}

/// Mode coefficients `(v0, v1)` at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalModes {
    pub v: [f64; 2],
    pub survived: bool,
    pub s_end: f64,
}

/// Access to the end-of-run modes, for [`polish`].
pub trait ModeProbe: Sync {
    fn final_modes(&self, d: [f64; 2]) -> Result<FinalModes, ShootError>;
}

impl ModeProbe for PdeClassifier {
    fn final_modes(&self, d: [f64; 2]) -> Result<FinalModes, ShootError> {
        let traj = self.trajectory(d, TrackOptions { field_every: 0, record_samples: true })?;
        let last = traj.samples.last().ok_or(ShootError::NoSurvivor { levels: 0 })?;
        Ok(FinalModes { v: [last.v0, last.v1], survived: traj.survived(), s_end: traj.s_end })
    }
}

impl ModeProbe for SyntheticClassifier {
    fn final_modes(&self, d: [f64; 2]) -> Result<FinalModes, ShootError> {
        let x = [d[0] - self.target[0], d[1] - self.target[1]];
        let m = self.matrix;
        let phi = [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]];
        let c = self.classify(d)?;
        let t = c.s_exit.min(self.horizon);
        Ok(FinalModes { v: [phi[0] * t.exp(), phi[1] * (0.5 * t).exp()], survived: c.survived, s_end: t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolishOptions {
    /// Half-width of the first bracket tried around each coordinate.
    pub initial_step: f64,
    pub max_step: f64,
    /// A coordinate is done once its own mode ends below this in size.
    pub target: f64,
    pub max_bisections: usize,
    /// Passes over `(d0, d1)`.
    pub rounds: usize,
}

impl Default for PolishOptions {
    fn default() -> Self {
        Self { initial_step: 1e-3, max_step: 0.5, target: 1e-6, max_bisections: 80, rounds: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolishResult {
    pub d: [f64; 2],
    pub modes: FinalModes,
    pub runs: usize,
}

/// Sharpens `d` by bisecting each coordinate on the sign of its own mode at
/// the end of the run. The linear growth of the unstable modes makes that
/// sign change exactly once across the stable point.
pub fn polish<P: ModeProbe>(probe: &P, d: [f64; 2], opts: PolishOptions) -> Result<PolishResult, ShootError> {
    let mut d = d;
    let mut runs = 0;
    let eval = |d: [f64; 2], runs: &mut usize| {
        *runs += 1;
        probe.final_modes(d)
    };
    let mut cur = eval(d, &mut runs)?;
    for _ in 0..opts.rounds {
        for k in 0..2 {
            let f0 = cur.v[k];
            if f0.abs() <= opts.target {
                continue;
            }
            let mut step = opts.initial_step;
            let (mut a, mut b, mut fa) = loop {
                if step > opts.max_step {
                    return Err(ShootError::PolishBracket { coordinate: k, step });
                }
                let mut dp = d;
                dp[k] += step;
                let up = eval(dp, &mut runs)?;
                if up.v[k].signum() != f0.signum() {
                    break (d[k], dp[k], cur);
                }
                let mut dm = d;
                dm[k] -= step;
                let down = eval(dm, &mut runs)?;
                if down.v[k].signum() != f0.signum() {
                    break (dm[k], d[k], down);
                }
                step *= 4.0;
            };
            let mut best = (d[k], cur);
            for _ in 0..opts.max_bisections {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let mut dm = d;
                dm[k] = mid;
                let fm = eval(dm, &mut runs)?;
                if fm.v[k].abs() < best.1.v[k].abs() {
                    best = (mid, fm);
                }
                if fm.v[k].abs() <= opts.target {
                    break;
                }
                if fm.v[k].signum() == fa.v[k].signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            d[k] = best.0;
            cur = best.1;
        }
    }
    Ok(PolishResult { d, modes: cur, runs })
}

/// Fraction at which rectangles are cut. Off the midpoint so that a zero
/// sitting on a symmetry line of the initial rectangle (the reflection
/// `y -> -y` forces `d1* = 0`) ends up strictly inside one child.
pub const SPLIT: f64 = 0.5 + 1.0 / 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn centered(c: [f64; 2], half: f64) -> Self {
        Self::new(c[0] - half, c[0] + half, c[1] - half, c[1] + half)
    }

    pub fn diameter(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn contains(&self, d: [f64; 2]) -> bool {
        d[0] >= self.x0 && d[0] <= self.x1 && d[1] >= self.y0 && d[1] <= self.y1
    }

    /// Split point used by [`Rect::quarters`].
    pub fn split_point(&self) -> [f64; 2] {
        [self.x0 + SPLIT * (self.x1 - self.x0), self.y0 + SPLIT * (self.y1 - self.y0)]
    }

    /// Children in the order SW, SE, NW, NE, cut at [`SPLIT`].
    pub fn quarters(&self) -> [Rect; 4] {
        let [cx, cy] = self.split_point();
        [
            Rect::new(self.x0, cx, self.y0, cy),
            Rect::new(cx, self.x1, self.y0, cy),
            Rect::new(self.x0, cx, cy, self.y1),
            Rect::new(cx, self.x1, cy, self.y1),
        ]
    }

    /// Counter-clockwise boundary samples, `per_side` intervals per side.
    /// Points on a side are generated from its lower-left end so that shared
    /// edges of neighbouring rectangles produce bit-identical samples.
    pub fn boundary(&self, per_side: usize) -> Vec<[f64; 2]> {
        let k = per_side.max(1);
        let lerp = |a: f64, b: f64, j: usize| if j == k { b } else { a + (b - a) * (j as f64 / k as f64) };
        let mut pts = Vec::with_capacity(4 * k);
        for j in 0..k {
            pts.push([lerp(self.x0, self.x1, j), self.y0]);
        }
        for j in 0..k {
            pts.push([self.x1, lerp(self.y0, self.y1, j)]);
        }
        for j in (1..=k).rev() {
            pts.push([lerp(self.x0, self.x1, j), self.y1]);
        }
        for j in (1..=k).rev() {
            pts.push([self.x0, lerp(self.y0, self.y1, j)]);
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub tol: f64,
    pub max_levels: usize,
    pub samples_per_side: usize,
    /// Maximum bisection depth when adjacent labels are opposite.
    pub max_refine_depth: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { tol: 1e-3, max_levels: 60, samples_per_side: 2, max_refine_depth: 40 }
    }
}

/// Progress record emitted once per subdivision level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub rect: Rect,
    pub winding: i32,
    pub exit_pattern: Vec<String>,
    /// Earliest exit among the retained rectangle's boundary samples.
    pub worst_exit: f64,
    pub classifications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub d: [f64; 2],
    pub rect: Rect,
    pub survived: bool,
    pub s_exit: f64,
    pub levels: Vec<LevelRecord>,
    pub classifications: usize,
}

/// Boundary labels, refined at opposite-label jumps.
#[derive(Debug, Clone)]
pub struct BoundaryScan {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<Classification>,
    /// `None` when a non-(v0,v1) exit or an unresolved jump occurred.
    pub winding: Option<i32>,
}

pub struct Searcher<'a, C: ExitClassifier> {
    classifier: &'a C,
    opts: SearchOptions,
    memo: HashMap<(u64, u64), Classification>,
}

fn key(d: [f64; 2]) -> (u64, u64) {
    (d[0].to_bits(), d[1].to_bits())
}

impl<'a, C: ExitClassifier> Searcher<'a, C> {
    pub fn new(classifier: &'a C, opts: SearchOptions) -> Self {
        Self { classifier, opts, memo: HashMap::new() }
    }

    pub fn evaluations(&self) -> usize {
        self.memo.len()
    }

    fn classify_all(&mut self, pts: &[[f64; 2]]) -> Result<Vec<Classification>, ShootError> {
        let mut fresh: Vec<[f64; 2]> = pts.iter().copied().filter(|p| !self.memo.contains_key(&key(*p))).collect();
        fresh.sort_by_key(|p| key(*p));
        fresh.dedup();
        let results: Vec<Result<Classification, ShootError>> =
            fresh.par_iter().map(|p| self.classifier.classify(*p)).collect();
        for (p, r) in fresh.iter().zip(results) {
            self.memo.insert(key(*p), r?);
        }
        Ok(pts.iter().map(|p| self.memo[&key(*p)]).collect())
    }

    fn classify(&mut self, p: [f64; 2]) -> Result<Classification, ShootError> {
        Ok(self.classify_all(&[p])?[0])
    }

    /// Label differences along the closed polygon, bisecting opposite jumps.
    pub fn scan(&mut self, rect: &Rect, per_side: usize) -> Result<BoundaryScan, ShootError> {
        let base = rect.boundary(per_side);
        let base_labels = self.classify_all(&base)?;
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let mut total = Some(0);
        let n = base.len();
        for i in 0..n {
            let j = (i + 1) % n;
            points.push(base[i]);
            labels.push(base_labels[i]);
            let mut seg_pts = Vec::new();
            let mut seg_labels = Vec::new();
            let d = self.refine(base[i], base_labels[i], base[j], base_labels[j], 0, &mut seg_pts, &mut seg_labels)?;
            points.extend(seg_pts);
            labels.extend(seg_labels);
            total = match (total, d) {
                (Some(t), Some(d)) => Some(t + d),
                _ => None,
            };
        }
        let winding = total.and_then(|t| if t % 4 == 0 { Some(t / 4) } else { None });
        Ok(BoundaryScan { points, labels, winding })
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        a: [f64; 2],
        la: Classification,
        b: [f64; 2],
        lb: Classification,
        depth: usize,
        pts: &mut Vec<[f64; 2]>,
        labels: &mut Vec<Classification>,
    ) -> Result<Option<i32>, ShootError> {
        let (qa, qb) = match (la.label.quadrant(), lb.label.quadrant()) {
            (Some(x), Some(y)) => (x, y),
            _ => return Ok(None),
        };
        match (qb - qa).rem_euclid(4) {
            0 => Ok(Some(0)),
            1 => Ok(Some(1)),
            3 => Ok(Some(-1)),
            _ => {
                if depth >= self.opts.max_refine_depth {
                    return Ok(None);
                }
                // Midpoint of the canonically ordered pair.
                let (lo, hi) = if key(a) <= key(b) { (a, b) } else { (b, a) };
                let m = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
                let lm = self.classify(m)?;
                let first = self.refine(a, la, m, lm, depth + 1, pts, labels)?;
                pts.push(m);
                labels.push(lm);
                let second = self.refine(m, lm, b, lb, depth + 1, pts, labels)?;
                Ok(match (first, second) {
                    (Some(x), Some(y)) => Some(x + y),
                    _ => None,
                })
            }
        }
    }

    /// Survivors seen so far inside `rect`, latest first.
    fn best_in(&self, rect: &Rect) -> Option<([f64; 2], Classification)> {
        self.memo
            .iter()
            .map(|(k, c)| ([f64::from_bits(k.0), f64::from_bits(k.1)], *c))
            .filter(|(p, c)| c.survived && rect.contains(*p))
            .min_by(|a, b| {
                let da = dist(a.0, rect.center());
                let db = dist(b.0, rect.center());
                da.total_cmp(&db).then(key(a.0).cmp(&key(b.0)))
            })
    }

    pub fn search(
        &mut self,
        rect0: Rect,
        progress: &mut dyn FnMut(&LevelRecord),
    ) -> Result<ShootResult, ShootError> {
        let per_side = self.opts.samples_per_side;
        let scan = self.scan(&rect0, per_side)?;
        let w0 = scan.winding;
        if w0.map(|w| w.abs()) != Some(1) {
            return Err(ShootError::InitialDegree(w0));
        }
        let mut rect = rect0;
        let mut levels = Vec::new();
        let record = |level: usize, rect: Rect, scan: &BoundaryScan, evals: usize| LevelRecord {
            level,
            rect,
            winding: scan.winding.unwrap_or(0),
            exit_pattern: scan.labels.iter().map(|c| c.label.name()).collect(),
            worst_exit: scan.labels.iter().map(|c| c.s_exit).fold(f64::INFINITY, f64::min),
            classifications: evals,
        };
        let first = record(0, rect, &scan, self.evaluations());
        progress(&first);
        levels.push(first);
        for level in 1..=self.opts.max_levels {
            if rect.diameter() <= self.opts.tol {
                if let Some((d, c)) = self.best_in(&rect) {
                    return Ok(ShootResult {
                        d,
                        rect,
                        survived: true,
                        s_exit: c.s_exit,
                        levels,
                        classifications: self.evaluations(),
                    });
                }
            }
            let children = rect.quarters();
            let order = self.child_order(&rect, &children);
            let mut next = None;
            for idx in order {
                let scan = self.scan(&children[idx], per_side)?;
                if scan.winding.map(|w| w.abs()) == Some(1) {
                    next = Some((children[idx], scan));
                    break;
                }
            }
            let Some((child, scan)) = next else {
                return Err(ShootError::DegreeLost { level, rect });
            };
            rect = child;
            let rec = record(level, rect, &scan, self.evaluations());
            progress(&rec);
            levels.push(rec);
        }
        Err(ShootError::NoSurvivor { levels: self.opts.max_levels })
    }

    /// Children sorted by distance of their centre from a bilinear estimate
    /// of the zero built from the parent's corner exit times.
    fn child_order(&self, rect: &Rect, children: &[Rect; 4]) -> Vec<usize> {
        let guess = self.best_in(rect).map(|(p, _)| p).unwrap_or_else(|| self.zero_estimate(rect));
        let mut idx: Vec<usize> = (0..4).collect();
        idx.sort_by(|&a, &b| {
            let da = if children[a].contains(guess) { -1.0 } else { dist(children[a].center(), guess) };
            let db = if children[b].contains(guess) { -1.0 } else { dist(children[b].center(), guess) };
            da.total_cmp(&db)
        });
        idx
    }

    /// Weighted centroid of classified points inside `rect`, weighting late
    /// exits exponentially.
    fn zero_estimate(&self, rect: &Rect) -> [f64; 2] {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sw = 0.0;
        let pts: Vec<([f64; 2], f64)> = self
            .memo
            .iter()
            .map(|(k, c)| ([f64::from_bits(k.0), f64::from_bits(k.1)], c.s_exit))
            .filter(|(p, _)| rect.contains(*p))
            .collect();
        let tmax = pts.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        for (p, t) in pts {
            let w = (2.0 * (t - tmax)).exp();
            sx += w * p[0];
            sy += w * p[1];
            sw += w;
        }
        if sw > 0.0 {
            [sx / sw, sy / sw]
        } else {
            rect.center()
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Runs the full search on `rect0` for `classifier`.
pub fn search<C: ExitClassifier>(
    classifier: &C,
    rect0: Rect,
    opts: SearchOptions,
    progress: &mut dyn FnMut(&LevelRecord),
) -> Result<ShootResult, ShootError> {
    Searcher::new(classifier, opts).search(rect0, progress)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(target: [f64; 2]) -> SyntheticClassifier {
        SyntheticClassifier { target, matrix: [[1.0, 0.0], [0.0, 1.0]], horizon: 20.0 }
    }

    #[test]
    fn identity_map_has_degree_one() {
        let c = synthetic([0.0, 0.0]);
        let mut s = Searcher::new(&c, SearchOptions::default());
        let scan = s.scan(&Rect::new(-2.0, 2.0, -2.0, 2.0), 16).unwrap();
        assert_eq!(scan.winding, Some(1));
    }

    #[test]
    fn reflected_map_has_degree_minus_one() {
        let c = SyntheticClassifier { matrix: [[-1.0, 0.0], [0.0, 1.0]], ..synthetic([0.0, 0.0]) };
        let mut s = Searcher::new(&c, SearchOptions::default());
        let scan = s.scan(&Rect::new(-2.0, 2.0, -2.0, 2.0), 16).unwrap();
        assert_eq!(scan.winding, Some(-1));
    }

    #[test]
    fn search_converges_on_synthetic_target() {
        let target = [0.37, -1.21];
        let c = synthetic(target);
        let res = search(&c, Rect::new(-2.0, 2.0, -2.0, 2.0), SearchOptions::default(), &mut |_| {}).unwrap();
        assert!(res.survived);
        assert!(res.rect.diameter() <= 1e-3);
        assert!(dist(res.d, target) < 1e-3);
    }

    #[test]
    fn polish_reaches_coupled_target() {
        let target = [0.123, -0.456];
        let c = SyntheticClassifier { matrix: [[1.0, 0.3], [0.2, 1.0]], ..synthetic(target) };
        let opts = PolishOptions { rounds: 6, target: 1e-9, ..PolishOptions::default() };
        let r = polish(&c, [0.1235, -0.4557], opts).unwrap();
        assert!(dist(r.d, target) < 1e-10, "{:?}", r.d);
        assert!(r.modes.survived);
    }

    #[test]
    fn polish_without_sign_change_fails() {
        let c = synthetic([5.0, 5.0]);
        let opts = PolishOptions { max_step: 0.1, ..PolishOptions::default() };
        assert!(matches!(polish(&c, [0.0, 0.0], opts), Err(ShootError::PolishBracket { coordinate: 0, .. })));
    }

    #[test]
    fn rect_without_zero_has_degree_zero() {
        let c = synthetic([5.0, 5.0]);
        let res = search(&c, Rect::new(-2.0, 2.0, -2.0, 2.0), SearchOptions::default(), &mut |_| {});
        assert!(matches!(res, Err(ShootError::InitialDegree(Some(0)))));
    }

    #[test]
    fn shared_edges_sample_identically() {
        let r = Rect::new(-1.0, 1.0, -1.0, 1.0);
        let [sw, se, _, _] = r.quarters();
        let a: Vec<_> = sw.boundary(4).into_iter().filter(|p| p[0] == 0.0).collect();
        let b: Vec<_> = se.boundary(4).into_iter().filter(|p| p[0] == 0.0).collect();
        for p in &a {
            assert!(b.contains(p));
        }
    }

    #[test]
    fn initial_data_vanishes_outside_support() {
        let params = ModelParams::reference();
        let grid = Grid1D::with_spacing(88.0, 0.1).unwrap();
        let f = initial_data(1.0, 1.0, &params, grid).unwrap();
        let support = params.k0 * params.s0.sqrt();
        for (y, v) in grid.nodes().zip(&f.values) {
            if y.abs() >= support {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let params = ModelParams::reference();
        let grid = Grid1D::with_spacing(88.0, 5.0).unwrap();
        assert!(matches!(initial_data(0.0, 0.0, &params, grid), Err(ShootError::Unresolved { .. })));
    }
}
