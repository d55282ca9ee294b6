//! Hermite eigenbasis of `L = Δ - ½ y·∇ + 1` in `L²_ρ`, Gauss-weighted
//! quadrature and the mode decomposition used by the shrinking set.

use crate::grid::{Field, Grid1D, GridError};
use crate::params::ModelParams;
use crate::profiles::inner_cutoff;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("spectral: grid half width {half_width} too narrow for the Gaussian weight (need ≥ {needed})")]
    WeightTail { half_width: f64, needed: f64 },
    #[error("spectral: grid half width {half_width} narrower than the cut-off support {needed}")]
    CutoffSupport { half_width: f64, needed: f64 },
    #[error("spectral: mode index {0} exceeds the basis degree")]
    DegreeTooHigh(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Half width beyond which the Gaussian weight's mass is below `1e-14`.
pub const WEIGHT_TAIL_HALF_WIDTH: f64 = 11.0;

/// `ρ(y) = e^{-y²/4} / √(4π)`.
pub fn gaussian_weight(y: f64) -> f64 {
    (-0.25 * y * y).exp() / (4.0 * PI).sqrt()
}

/// `h_m(y)` by the three-term recurrence `h_{m+1} = y h_m - 2m h_{m-1}`.
pub fn hermite(m: usize, y: f64) -> f64 {
    let mut prev = 1.0;
    if m == 0 {
        return prev;
    }
    let mut cur = y;
    for k in 1..m {
        let next = y * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `‖h_m‖²_{L²_ρ} = 2^m m!`.
pub fn hermite_norm_sq(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, k| acc * 2.0 * k as f64)
}

/// Explicit coefficient tables for `h_0 .. h_M`.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    /// `coeffs[m][j]` multiplies `y^j` in `h_m`.
    pub coeffs: Vec<Vec<f64>>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

impl HermiteBasis {
    pub fn new(max_degree: usize) -> Self {
        let coeffs = (0..=max_degree)
            .map(|m| {
                let mut c = vec![0.0; m + 1];
                for k in 0..=m / 2 {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    c[m - 2 * k] = sign * factorial(m) / (factorial(k) * factorial(m - 2 * k));
                }
                c
            })
            .collect();
        Self { coeffs }
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, m: usize, y: f64) -> Result<f64, SpectralError> {
        let c = self.coeffs.get(m).ok_or(SpectralError::DegreeTooHigh(m))?;
        Ok(c.iter().rev().fold(0.0, |acc, a| acc * y + a))
    }

    /// Eigenvalue `1 - m/2` of `L` on `h_m`.
    pub fn eigenvalue(m: usize) -> f64 {
        1.0 - m as f64 / 2.0
    }
}

/// Gauss–Hermite rule rescaled so that `Σ w_i g(y_i) ≈ ∫ g ρ dy`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// `n`-point rule: Jacobi-matrix eigenvalues as starting roots, then
    /// Newton polishing on the orthonormal Hermite recurrence, which also
    /// yields the weights.
    pub fn new(n: usize) -> Self {
        let n = n.max(1);
        let nf = n as f64;
        let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut roots: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        roots.sort_by(f64::total_cmp);
        let pim4 = PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for (k, &guess) in roots.iter().enumerate() {
            let mut z = guess;
            let mut pp = 1.0;
            for _ in 0..20 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[k] = z;
            w[k] = 2.0 / (pp * pp);
        }
        // x = y/2 maps e^{-x²} dx onto ρ(y) dy up to 1/√π.
        let nodes = x.iter().map(|v| 2.0 * v).collect();
        let weights = w.iter().map(|v| v / PI.sqrt()).collect();
        Self { nodes, weights }
    }

    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(y, w)| w * g(*y)).sum()
    }
}

/// Composite-Simpson `⟨f, g⟩_{L²_ρ}` on the fields' common grid.
pub fn quadrature_inner(f: &Field, g: &Field) -> Result<f64, SpectralError> {
    f.same_grid(g)?;
    let grid = f.grid;
    if grid.half_width() < WEIGHT_TAIL_HALF_WIDTH {
        return Err(SpectralError::WeightTail { half_width: grid.half_width(), needed: WEIGHT_TAIL_HALF_WIDTH });
    }
    let w = grid.simpson_weights();
    Ok(grid
        .nodes()
        .zip(&w)
        .zip(f.values.iter().zip(&g.values))
        .map(|((y, w), (a, b))| w * gaussian_weight(y) * a * b)
        .sum())
}

/// `⟨f, h_m⟩ / ‖h_m‖²` on the grid.
pub fn mode_coefficient(f: &Field, m: usize) -> Result<f64, SpectralError> {
    let grid = f.grid;
    if grid.half_width() < WEIGHT_TAIL_HALF_WIDTH {
        return Err(SpectralError::WeightTail { half_width: grid.half_width(), needed: WEIGHT_TAIL_HALF_WIDTH });
    }
    let w = grid.simpson_weights();
    let s: f64 = grid
        .nodes()
        .zip(&w)
        .zip(&f.values)
        .map(|((y, w), a)| w * gaussian_weight(y) * hermite(m, y) * a)
        .sum();
    Ok(s / hermite_norm_sq(m))
}

/// Largest disagreement between grid Simpson and Gauss–Hermite Gram
/// matrices of `h_0 .. h_max`, relative to `‖h_n‖‖h_m‖`.
pub fn cross_validate(grid: Grid1D, max_degree: usize) -> Result<f64, SpectralError> {
    let gh = GaussHermite::new(128);
    let fields: Vec<Field> = (0..=max_degree).map(|m| Field::from_fn(grid, |y| hermite(m, y))).collect();
    let mut worst = 0.0_f64;
    for n in 0..=max_degree {
        for m in n..=max_degree {
            let a = quadrature_inner(&fields[n], &fields[m])?;
            let b = gh.integrate(|y| hermite(n, y) * hermite(m, y));
            let scale = (hermite_norm_sq(n) * hermite_norm_sq(m)).sqrt();
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(worst)
}

/// Split of a perturbation `v` at time `s` into the inner modes, the inner
/// remainder and the outer part.
#[derive(Debug, Clone)]
pub struct ModeDecomposition {
    pub s: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    /// `P_-(v χ)`, defined on the whole grid.
    pub v_minus: Field,
    /// `v (1 - χ)`.
    pub v_e: Field,
}

impl ModeDecomposition {
    pub fn modes(&self) -> [f64; 3] {
        [self.v0, self.v1, self.v2]
    }

    /// `‖v_-/(1 + |y|³)‖∞`.
    pub fn vminus_weighted(&self) -> f64 {
        self.v_minus.inverse_weighted_sup(3.0)
    }

    pub fn ve_sup(&self) -> f64 {
        self.v_e.sup_norm()
    }

    pub fn ve_beta(&self, beta: f64) -> f64 {
        self.v_e.weighted_sup(beta)
    }

    /// Reassembles `v = Σ v_m h_m + v_- + v_e`.
    pub fn reconstruct(&self) -> Field {
        let grid = self.v_e.grid;
        let values = grid
            .nodes()
            .enumerate()
            .map(|(i, y)| {
                self.v0 + self.v1 * y + self.v2 * hermite(2, y) + self.v_minus.values[i] + self.v_e.values[i]
            })
            .collect();
        Field { grid, values }
    }
}

pub fn decompose(v: &Field, s: f64, params: &ModelParams) -> Result<ModeDecomposition, SpectralError> {
    let grid = v.grid;
    let support = 2.0 * params.k0 * s.sqrt();
    if grid.half_width() < support {
        return Err(SpectralError::CutoffSupport { half_width: grid.half_width(), needed: support });
    }
    let chi: Vec<f64> = grid.nodes().map(|y| inner_cutoff(y, s, params.k0)).collect();
    let vb = Field { grid, values: v.values.iter().zip(&chi).map(|(a, c)| a * c).collect() };
    let ve = Field { grid, values: v.values.iter().zip(&chi).map(|(a, c)| a * (1.0 - c)).collect() };
    let v0 = mode_coefficient(&vb, 0)?;
    let v1 = mode_coefficient(&vb, 1)?;
    let v2 = mode_coefficient(&vb, 2)?;
    let v_minus = Field {
        grid,
        values: grid
            .nodes()
            .zip(&vb.values)
            .map(|(y, b)| b - v0 - v1 * y - v2 * hermite(2, y))
            .collect(),
    };
    Ok(ModeDecomposition { s, v0, v1, v2, v_minus, v_e: ve })
}
