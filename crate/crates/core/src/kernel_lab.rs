//! Mehler semigroup `e^{θL}`, oscillator-bridge sampling and Feynman–Kac
//! estimates of the kernel of `L + V`.

use crate::grid::{Field, GridError};
use crate::params::ModelParams;
use crate::profiles::Profile;
use crate::spectral::{hermite, quadrature_inner, GaussHermite, SpectralError};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel: θ = {0} must be positive")]
    ThetaNotPositive(f64),
    #[error("kernel: {0} paths is too few (need at least {MIN_PATHS})")]
    TooFewPaths(usize),
    #[error("kernel: potential is not finite at y = {y}, s = {s}")]
    NonFinitePotential { y: f64, s: f64 },
    #[error("kernel: weight exponent m = {m} outside [{lo}, {hi})")]
    WeightOutOfRange { m: f64, lo: f64, hi: f64 },
    #[error("kernel: bridge covariance is not positive definite")]
    Covariance,
    #[error("kernel: need at least 2 distinct θ values for a rate fit")]
    FitPoints,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub const MIN_PATHS: usize = 100;
/// Kernel windows are truncated at this many standard deviations.
const WINDOW_SIGMAS: f64 = 12.0;

/// Mehler kernel of `e^{θL}`, `L = Δ - ½ y·∇ + 1`.
pub fn mehler_kernel(theta: f64, y: f64, x: f64) -> f64 {
    let a = 1.0 - (-theta).exp();
    let d = y * (-0.5 * theta).exp() - x;
    theta.exp() / (4.0 * PI * a).sqrt() * (-d * d / (4.0 * a)).exp()
}

fn check_theta(theta: f64) -> Result<(), KernelError> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(KernelError::ThetaNotPositive(theta))
    }
}

fn apply_with(theta: f64, g: &Field, derivative: bool) -> Result<Field, KernelError> {
    check_theta(theta)?;
    let grid = g.grid;
    let w = grid.simpson_weights();
    let a = 1.0 - (-theta).exp();
    let sigma = (2.0 * a).sqrt();
    let contraction = (-0.5 * theta).exp();
    let pref = theta.exp() / (4.0 * PI * a).sqrt();
    let h = grid.spacing();
    let l = grid.half_width();
    let n = grid.len();
    let mut truncated = false;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let c = grid.node(i) * contraction;
            let lo_x = c - WINDOW_SIGMAS * sigma;
            let hi_x = c + WINDOW_SIGMAS * sigma;
            if grid.node(i).abs() <= 0.5 * l && (lo_x < -l || hi_x > l) {
                truncated = true;
            }
            let lo = (((lo_x + l) / h).floor().max(0.0)) as usize;
            let hi = ((((hi_x + l) / h).ceil()) as usize).min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                let d = c - grid.node(j);
                let k = (-d * d / (4.0 * a)).exp();
                let k = if derivative { -k * contraction * d / (2.0 * a) } else { k };
                acc += w[j] * k * g.values[j];
            }
            pref * acc
        })
        .collect();
    if truncated {
        log::warn!("mehler: kernel window leaves the grid for |y| ≤ L/2 (θ = {theta}); tail mass ignored");
    }
    Ok(Field { grid, values })
}

/// `e^{θL} g` by grid quadrature.
pub fn apply_mehler(theta: f64, g: &Field) -> Result<Field, KernelError> {
    apply_with(theta, g, false)
}

/// `∂_y e^{θL} g`, differentiating the kernel.
pub fn apply_mehler_grad(theta: f64, g: &Field) -> Result<Field, KernelError> {
    apply_with(theta, g, true)
}

/// `e^{θL} f (y) = e^θ E f(y e^{-θ/2} + √(1-e^{-θ}) Y)`, `Y ~ ρ`, by
/// Gauss–Hermite quadrature. For closed-form probes.
pub fn apply_mehler_fn(theta: f64, f: impl Fn(f64) -> f64, y: f64, gh: &GaussHermite) -> f64 {
    let c = y * (-0.5 * theta).exp();
    let r = (1.0 - (-theta).exp()).sqrt();
    theta.exp() * gh.integrate(|u| f(c + r * u))
}

/// `‖e^{θL} h_m - e^{(1-m/2)θ} h_m‖_{L²_ρ}` on `grid`.
pub fn semigroup_eigen_check(m: usize, theta: f64, grid: crate::grid::Grid1D) -> Result<f64, KernelError> {
    let hm = Field::from_fn(grid, |y| hermite(m, y));
    let evolved = apply_mehler(theta, &hm)?;
    let lambda = (1.0 - m as f64 / 2.0) * theta;
    let diff = evolved.sub(&hm.scale(lambda.exp()))?;
    Ok(quadrature_inner(&diff, &diff)?.max(0.0).sqrt())
}

/// `sup_{|y|≤y_max} |e^{θ1 L} e^{θ2 L} g - e^{(θ1+θ2)L} g|`.
pub fn composition_error(theta1: f64, theta2: f64, g: &Field, y_max: f64) -> Result<f64, KernelError> {
    let two = apply_mehler(theta1, &apply_mehler(theta2, g)?)?;
    let one = apply_mehler(theta1 + theta2, g)?;
    Ok(g.grid
        .nodes()
        .zip(two.values.iter().zip(&one.values))
        .filter(|(y, _)| y.abs() <= y_max)
        .fold(0.0, |acc, (_, (a, b))| acc.max((a - b).abs())))
}

/// Ratios of the weighted regularisation estimates; both are bounded by a
/// constant independent of `θ` and the probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationReport {
    pub theta: f64,
    pub m: f64,
    /// `‖(1+|y|^m) ∇e^{θL}r‖ / (e^{(m+1)θ/2} ‖(1+|y|^m) ∇r‖)`.
    pub gradient_ratio: f64,
    /// `√(1-e^{-θ}) ‖(1+|y|^m) ∇e^{θL}r‖ / (e^{(m+1)θ/2} ‖(1+|y|^m) r‖)`.
    pub smoothing_ratio: f64,
    /// `‖(1+|y|^m) ∇e^{θL}r‖`, for growth fits as `θ → 0`.
    pub raw_gradient: f64,
}

/// Weighted estimates for `e^{θL}` on a probe `r`. `m = 0` is the
/// unweighted case; otherwise `m` must lie in `(0, 1)`.
pub fn weighted_regularization_check(theta: f64, m: f64, r: &Field) -> Result<RegularizationReport, KernelError> {
    if !(0.0..1.0).contains(&m) {
        return Err(KernelError::WeightOutOfRange { m, lo: 0.0, hi: 1.0 });
    }
    let inner = apply_mehler_grad(theta, r)?;
    let l = r.grid.half_width();
    // Edge nodes see a truncated kernel; measure on the central half.
    let central = |f: &Field| {
        f.grid
            .nodes()
            .zip(&f.values)
            .filter(|(y, _)| y.abs() <= 0.5 * l)
            .fold(0.0_f64, |acc, (y, v)| acc.max((1.0 + y.abs().powf(m)) * v.abs()))
    };
    let num = central(&inner);
    let growth = ((m + 1.0) * theta / 2.0).exp();
    let grad_r = r.gradient().weighted_sup(m);
    let sup_r = r.weighted_sup(m);
    Ok(RegularizationReport {
        theta,
        m,
        gradient_ratio: if grad_r > 0.0 { num / (growth * grad_r) } else { f64::NAN },
        smoothing_ratio: (1.0 - (-theta).exp()).sqrt() * num / (growth * sup_r),
        raw_gradient: num,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Ornstein–Uhlenbeck bridge of `dX = -½X dt + √2 dW` pinned at `X(0) = x`,
/// `X(θ) = y`, sampled on a uniform `τ` grid.
#[derive(Debug, Clone)]
pub struct OuBridge {
    pub theta: f64,
    pub taus: Vec<f64>,
    chol: DMatrix<f64>,
}

impl OuBridge {
    /// Exact bridge covariance between interior times.
    pub fn covariance(theta: f64, t1: f64, t2: f64) -> f64 {
        let (a, b) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        4.0 * (0.5 * a).sinh() * (0.5 * (theta - b)).sinh() / (0.5 * theta).sinh()
    }

    /// `ω0(τ) = (y sinh(τ/2) + x sinh((θ-τ)/2)) / sinh(θ/2)`.
    pub fn mean(theta: f64, x: f64, y: f64, tau: f64) -> f64 {
        (y * (0.5 * tau).sinh() + x * (0.5 * (theta - tau)).sinh()) / (0.5 * theta).sinh()
    }

    /// `points` includes both endpoints (at least 3).
    pub fn new(theta: f64, points: usize) -> Result<Self, KernelError> {
        check_theta(theta)?;
        let points = points.max(3);
        let taus: Vec<f64> = (0..points).map(|k| theta * k as f64 / (points - 1) as f64).collect();
        let m = points - 2;
        let cov = DMatrix::from_fn(m, m, |i, j| Self::covariance(theta, taus[i + 1], taus[j + 1]));
        let chol = cov.cholesky().ok_or(KernelError::Covariance)?;
        Ok(Self { theta, taus, chol: chol.l() })
    }

    pub fn sample_into(&self, x: f64, y: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let m = self.taus.len() - 2;
        let z = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
        let dev = &self.chol * z;
        out[0] = x;
        out[m + 1] = y;
        for k in 0..m {
            out[k + 1] = Self::mean(self.theta, x, y, self.taus[k + 1]) + dev[k];
        }
    }

    /// Trapezoid `∫_0^θ V(ω(τ), σ + τ) dτ`.
    pub fn action(&self, path: &[f64], sigma: f64, v: &dyn Potential) -> Result<f64, KernelError> {
        let dt = self.taus[1] - self.taus[0];
        let n = path.len();
        let mut acc = 0.0;
        for k in 0..n {
            let val = v.value(path[k], sigma + self.taus[k]);
            if !val.is_finite() {
                return Err(KernelError::NonFinitePotential { y: path[k], s: sigma + self.taus[k] });
            }
            let wk = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            acc += wk * val;
        }
        Ok(acc * dt)
    }
}

pub trait Potential: Sync {
    fn value(&self, y: f64, s: f64) -> f64;
}

/// `V ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPotential(pub f64);

impl Potential for ConstantPotential {
    fn value(&self, _: f64, _: f64) -> f64 {
        self.0
    }
}

/// The linearised potential `p φ^{p-1} - p/(p-1)`.
#[derive(Debug, Clone, Copy)]
pub struct ProfilePotential(pub Profile);

impl Potential for ProfilePotential {
    fn value(&self, y: f64, s: f64) -> f64 {
        self.0.potential(y, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub value: f64,
    pub stderr: f64,
    pub paths: usize,
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

const BATCH: usize = 256;

/// Mean and standard error of `f(path index)` over `paths` samples,
/// reduced in batch order.
fn mc_mean(paths: usize, f: impl Fn(usize) -> Result<f64, KernelError> + Sync) -> Result<(f64, f64), KernelError> {
    let batches: Vec<Result<(f64, f64), KernelError>> = (0..paths.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for i in b * BATCH..((b + 1) * BATCH).min(paths) {
                let v = f(i)?;
                s += v;
                s2 += v * v;
            }
            Ok((s, s2))
        })
        .collect();
    let mut s = 0.0;
    let mut s2 = 0.0;
    for b in batches {
        let (a, c) = b?;
        s += a;
        s2 += c;
    }
    let n = paths as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Monte-Carlo Feynman–Kac estimate of the kernel of `L + V` from time
/// `sigma` to `s` between `x` (at `sigma`) and `y` (at `s`).
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_mc(
    s: f64,
    sigma: f64,
    y: f64,
    x: f64,
    paths: usize,
    tau_points: usize,
    potential: &dyn Potential,
    seed: u64,
) -> Result<KernelEstimate, KernelError> {
    if paths < MIN_PATHS {
        return Err(KernelError::TooFewPaths(paths));
    }
    let theta = s - sigma;
    let bridge = OuBridge::new(theta, tau_points)?;
    let base = mehler_kernel(theta, y, x);
    let (mean, se) = mc_mean(paths, |i| {
        let mut rng = path_rng(seed, i as u64);
        let mut path = vec![0.0; bridge.taus.len()];
        bridge.sample_into(x, y, &mut rng, &mut path);
        Ok(bridge.action(&path, sigma, potential)?.exp())
    })?;
    Ok(KernelEstimate { value: base * mean, stderr: base * se, paths })
}

/// `∫ K(s, σ, y, x) (1+|x|^m)^{-1} 1{|x| ≥ cut} dx`: `x` is drawn from the
/// Mehler Gaussian, then a bridge from `x` to `y`.
#[allow(clippy::too_many_arguments)]
pub fn outer_mass_mc(
    s: f64,
    sigma: f64,
    y: f64,
    m: f64,
    cut: f64,
    paths: usize,
    tau_points: usize,
    potential: &dyn Potential,
    seed: u64,
) -> Result<KernelEstimate, KernelError> {
    if paths < MIN_PATHS {
        return Err(KernelError::TooFewPaths(paths));
    }
    let theta = s - sigma;
    let bridge = OuBridge::new(theta, tau_points)?;
    let centre = y * (-0.5 * theta).exp();
    let spread = (2.0 * (1.0 - (-theta).exp())).sqrt();
    let (mean, se) = mc_mean(paths, |i| {
        let mut rng = path_rng(seed, i as u64);
        let z: f64 = StandardNormal.sample(&mut rng);
        let x = centre + spread * z;
        if x.abs() < cut {
            return Ok(0.0);
        }
        let mut path = vec![0.0; bridge.taus.len()];
        bridge.sample_into(x, y, &mut rng, &mut path);
        Ok(bridge.action(&path, sigma, potential)?.exp() / (1.0 + x.abs().powf(m)))
    })?;
    let e = theta.exp();
    Ok(KernelEstimate { value: e * mean, stderr: e * se, paths })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterSample {
    pub theta: f64,
    pub y: f64,
    pub estimate: KernelEstimate,
    pub envelope: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterBoundReport {
    pub m: f64,
    pub sigma: f64,
    pub samples: Vec<OuterSample>,
}

impl OuterBoundReport {
    /// Largest estimate over `y` for each `θ`, in input order.
    pub fn sup_over_y(&self) -> Vec<(f64, f64, f64)> {
        let mut thetas: Vec<f64> = Vec::new();
        for s in &self.samples {
            if !thetas.contains(&s.theta) {
                thetas.push(s.theta);
            }
        }
        thetas
            .into_iter()
            .map(|t| {
                let best = self
                    .samples
                    .iter()
                    .filter(|s| s.theta == t)
                    .max_by(|a, b| a.estimate.value.total_cmp(&b.estimate.value))
                    .expect("theta present");
                (t, best.estimate.value, best.estimate.stderr)
            })
            .collect()
    }

    /// Fitted exponential rate of the `y`-supremum against `θ`.
    pub fn sup_rate(&self) -> Result<f64, KernelError> {
        let sup = self.sup_over_y();
        if sup.len() < 2 {
            return Err(KernelError::FitPoints);
        }
        let xs: Vec<f64> = sup.iter().map(|x| x.0).collect();
        let ys: Vec<f64> = sup.iter().map(|x| x.1.max(1e-300).ln()).collect();
        Ok(fit_slope(&xs, &ys))
    }
}

/// Outer-region estimate with polynomial weight `m ∈ [0, 2/(p-1))`:
/// estimate against the envelope `e^{-½(1/(p-1) - m/2)θ} / (1+|y|^m)`.
#[allow(clippy::too_many_arguments)]
pub fn outer_bound_check(
    m: f64,
    sigma: f64,
    thetas: &[f64],
    ys: &[f64],
    params: &ModelParams,
    paths: usize,
    tau_points: usize,
    seed: u64,
) -> Result<OuterBoundReport, KernelError> {
    let hi = 2.0 / (params.p - 1.0);
    if !(0.0..hi).contains(&m) {
        return Err(KernelError::WeightOutOfRange { m, lo: 0.0, hi });
    }
    let pot = ProfilePotential(Profile::new(*params));
    let cut = params.k0 * sigma.sqrt();
    let mut samples = Vec::new();
    for (ti, &theta) in thetas.iter().enumerate() {
        for (yi, &y) in ys.iter().enumerate() {
            let sub_seed = seed.wrapping_add(((ti as u64) << 32) | yi as u64);
            let est = outer_mass_mc(sigma + theta, sigma, y, m, cut, paths, tau_points, &pot, sub_seed)?;
            let envelope = (-0.5 * (1.0 / (params.p - 1.0) - m / 2.0) * theta).exp() / (1.0 + y.abs().powf(m));
            samples.push(OuterSample { theta, y, estimate: est, envelope, ratio: est.value / envelope });
        }
    }
    Ok(OuterBoundReport { m, sigma, samples })
}
