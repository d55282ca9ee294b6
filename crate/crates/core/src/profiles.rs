//! Closed-form profiles: the flat self-similar profile, the corrected
//! profile `φ`, the linearised potential, the quadratic remainder and the
//! rest term with its three-way split.

use crate::params::{DerivedConstants, ModelParams};

/// Smooth even cut-off: `1` on `|z| ≤ 1`, `0` on `|z| ≥ 2`, with its first
/// two derivatives.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cutoff;

fn bump(u: f64) -> f64 {
    if u <= 0.0 || 1.0 / u > 700.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

fn bump_d1(u: f64) -> f64 {
    let e = bump(u);
    if e == 0.0 {
        0.0
    } else {
        e / (u * u)
    }
}

fn bump_d2(u: f64) -> f64 {
    let e = bump(u);
    if e == 0.0 {
        0.0
    } else {
        e * (1.0 - 2.0 * u) / u.powi(4)
    }
}

impl Cutoff {
    /// Returns `(χ0, χ0', χ0'')` at `z`.
    pub fn eval(z: f64) -> (f64, f64, f64) {
        let t = z.abs();
        if t <= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        if t >= 2.0 {
            return (0.0, 0.0, 0.0);
        }
        let a = bump(2.0 - t);
        let c = bump(t - 1.0);
        let a1 = -bump_d1(2.0 - t);
        let c1 = bump_d1(t - 1.0);
        let a2 = bump_d2(2.0 - t);
        let c2 = bump_d2(t - 1.0);
        let s = a + c;
        let chi = a / s;
        let num = a1 * c - a * c1;
        let d1 = num / (s * s);
        let num1 = a2 * c - a * c2;
        let den1 = 2.0 * s * (a1 + c1);
        let d2 = (num1 * s * s - num * den1) / s.powi(4);
        (chi, z.signum() * d1, d2)
    }

    pub fn value(z: f64) -> f64 {
        Self::eval(z).0
    }
}

/// Inner cut-off `χ(y, s) = χ0(|y| / (K0 √s))`.
pub fn inner_cutoff(y: f64, s: f64, k0: f64) -> f64 {
    Cutoff::value(y / (k0 * s.sqrt()))
}

/// All profile quantities at one `(y, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub phi: f64,
    pub phi_y: f64,
    pub phi_yy: f64,
    pub phi_s: f64,
    /// `f(y/√s)` alone.
    pub flat: f64,
    pub flat_y: f64,
}

/// Profile family for one parameter set.
#[derive(Debug, Clone, Copy)]
pub struct Profile {
    pub params: ModelParams,
    pub consts: DerivedConstants,
}

/// The three parts of the rest term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestSplit {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
}

impl RestSplit {
    pub fn total(&self) -> f64 {
        self.i + self.ii + self.iii
    }
}

impl Profile {
    pub fn new(params: ModelParams) -> Self {
        Self { params, consts: params.derived() }
    }

    /// `f(z) = (p - 1 + b z²)^{-1/(p-1)}`.
    pub fn flat(&self, z: f64) -> f64 {
        let p = self.params.p;
        (p - 1.0 + self.consts.b * z * z).powf(-1.0 / (p - 1.0))
    }

    /// `(f, f', f'')` at `z`, using `f' = -(p-1)/(2p) z f^p`.
    pub fn flat_derivs(&self, z: f64) -> (f64, f64, f64) {
        let p = self.params.p;
        let b = self.consts.b;
        let d = p - 1.0 + b * z * z;
        let f = d.powf(-1.0 / (p - 1.0));
        let fp = f.powf(p);
        let c = 2.0 * b / (p - 1.0);
        let f1 = -c * z * fp;
        let f2 = -c * fp * (1.0 - 2.0 * b * p * z * z / ((p - 1.0) * d));
        (f, f1, f2)
    }

    /// `g_ε(s) = s^{1/2 + ε}` and its derivative.
    pub fn outer_scale(&self, s: f64) -> (f64, f64) {
        let e = 0.5 + self.params.eps;
        (s.powf(e), e * s.powf(e - 1.0))
    }

    fn correction_coeff(&self, s: f64) -> f64 {
        self.consts.kappa * f64::from(self.params.n) / (2.0 * self.params.p * s)
    }

    pub fn point(&self, y: f64, s: f64) -> ProfilePoint {
        let rs = s.sqrt();
        let z = y / rs;
        let (f, f1, f2) = self.flat_derivs(z);
        let (g, g1) = self.outer_scale(s);
        let big_z = y / g;
        let (c0, c1, c2) = Cutoff::eval(big_z);
        let k = self.correction_coeff(s);
        ProfilePoint {
            phi: f + k * c0,
            phi_y: f1 / rs + k * c1 / g,
            phi_yy: f2 / s + k * c2 / (g * g),
            phi_s: -z * f1 / (2.0 * s) - (k / s) * c0 - k * (g1 / g) * big_z * c1,
            flat: f,
            flat_y: f1 / rs,
        }
    }

    pub fn phi(&self, y: f64, s: f64) -> f64 {
        self.point(y, s).phi
    }

    pub fn grad_phi(&self, y: f64, s: f64) -> f64 {
        self.point(y, s).phi_y
    }

    /// `V = p φ^{p-1} - p/(p-1)`.
    pub fn potential(&self, y: f64, s: f64) -> f64 {
        let p = self.params.p;
        p * self.phi(y, s).powf(p - 1.0) - p / (p - 1.0)
    }

    /// `B(v) = |v+φ|^{p-1}(v+φ) - φ^p - p φ^{p-1} v`.
    pub fn quadratic(&self, v: f64, y: f64, s: f64) -> f64 {
        quadratic_remainder(self.params.p, self.phi(y, s), v)
    }

    /// Split form of the rest term.
    pub fn rest_split(&self, y: f64, s: f64) -> RestSplit {
        let p = self.params.p;
        let z = y / s.sqrt();
        let (f, f1, f2) = self.flat_derivs(z);
        let (g, g1) = self.outer_scale(s);
        let big_z = y / g;
        let (c0, c1, c2) = Cutoff::eval(big_z);
        let k = self.correction_coeff(s);
        let i = f2 / s + z * f1 / (2.0 * s);
        let ii = if c0 == 0.0 { 0.0 } else { (f + k * c0).powf(p) - f.powf(p) };
        let iii = k * (c2 / (g * g) - (0.5 - g1 / g) * big_z * c1 + (1.0 / s - 1.0 / (p - 1.0)) * c0);
        RestSplit { i, ii, iii }
    }

    pub fn rest_term(&self, y: f64, s: f64) -> f64 {
        self.rest_split(y, s).total()
    }

    /// Rest term evaluated straight from its definition with the analytic
    /// derivatives of `φ`.
    pub fn rest_term_direct(&self, y: f64, s: f64) -> f64 {
        let p = self.params.p;
        let pt = self.point(y, s);
        pt.phi_yy - 0.5 * y * pt.phi_y - pt.phi / (p - 1.0) + pt.phi.powf(p) - pt.phi_s
    }

    /// Outer part `R (1 - χ)`.
    pub fn rest_outer(&self, y: f64, s: f64) -> f64 {
        self.rest_term(y, s) * (1.0 - inner_cutoff(y, s, self.params.k0))
    }

    /// `sup (1 + |y|^β) |R_e(y, s)|` over a dense sample of the outer region.
    pub fn rest_outer_weighted_sup(&self, s: f64) -> f64 {
        let beta = self.params.beta;
        let (g, _) = self.outer_scale(s);
        let lo = self.params.k0 * s.sqrt();
        let hi = 4.0 * g.max(lo) + 10.0 * s.sqrt();
        let samples = 20_000;
        (0..=samples)
            .map(|k| {
                let y = lo + (hi - lo) * k as f64 / samples as f64;
                (1.0 + y.powf(beta)) * self.rest_outer(y, s).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `|v+φ|^{p-1}(v+φ) - φ^p - p φ^{p-1} v`, computed from the Taylor series
/// when `|v| ≪ φ` to avoid cancellation.
pub fn quadratic_remainder(p: f64, phi: f64, v: f64) -> f64 {
    if phi > 0.0 && v.abs() < 1e-3 * phi {
        let r = v / phi;
        // Σ_{k≥2} C(p,k) r^k, truncated once terms fall below rounding.
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..12 {
            term *= (p - k as f64) / (k as f64 + 1.0) * r;
            if k >= 1 {
                sum += term;
            }
        }
        phi.powf(p) * sum
    } else {
        let w = v + phi;
        w.abs().powf(p - 1.0) * w - phi.abs().powf(p - 1.0) * phi - p * phi.abs().powf(p - 1.0) * v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prof() -> Profile {
        Profile::new(ModelParams::reference())
    }

    #[test]
    fn flat_at_origin_is_kappa() {
        let p = prof();
        assert!((p.flat(0.0) - p.consts.kappa).abs() < 1e-15);
    }

    #[test]
    fn flat_solves_profile_ode() {
        let pr = prof();
        let pp = pr.params.p;
        for z in [0.0, 0.3, 1.0, 4.0, 17.0] {
            let (f, f1, _) = pr.flat_derivs(z);
            let r = -0.5 * z * f1 - f / (pp - 1.0) + f.powf(pp);
            assert!(r.abs() < 1e-14, "z = {z}: {r}");
        }
    }

    #[test]
    fn flat_derivatives_match_differences() {
        let pr = prof();
        let h = 1e-4;
        for z in [0.2, 1.1, 3.0, 9.0] {
            let (_, f1, f2) = pr.flat_derivs(z);
            let d1 = (pr.flat(z + h) - pr.flat(z - h)) / (2.0 * h);
            let d2 = (pr.flat(z + h) - 2.0 * pr.flat(z) + pr.flat(z - h)) / (h * h);
            assert!((f1 - d1).abs() < 1e-8);
            assert!((f2 - d2).abs() < 1e-6);
        }
    }

    #[test]
    fn cutoff_plateau_and_support() {
        assert_eq!(Cutoff::eval(0.7), (1.0, 0.0, 0.0));
        assert_eq!(Cutoff::eval(-2.5), (0.0, 0.0, 0.0));
        assert!((Cutoff::value(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cutoff_derivatives_match_differences() {
        let h = 1e-5;
        for z in [1.05, 1.3, 1.5, -1.7, 1.95] {
            let (_, d1, d2) = Cutoff::eval(z);
            let f = |x: f64| Cutoff::value(x);
            let n1 = (f(z + h) - f(z - h)) / (2.0 * h);
            let n2 = (f(z + h) - 2.0 * f(z) + f(z - h)) / (h * h);
            assert!((d1 - n1).abs() < 1e-7, "{z}: {d1} {n1}");
            assert!((d2 - n2).abs() < 1e-3 * (1.0 + n2.abs()), "{z}: {d2} {n2}");
        }
    }

    #[test]
    fn potential_at_origin_large_s() {
        let pr = prof();
        let v = pr.potential(0.0, 1e9);
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn quadratic_branches_agree() {
        let p = 5.0;
        let phi = 0.6;
        for v in [1e-4, -3e-4, 5.9e-4] {
            let series = quadratic_remainder(p, phi, v);
            let w: f64 = v + phi;
            let direct = w.powf(p) - phi.powf(p) - p * phi.powf(p - 1.0) * v;
            assert!((series - direct).abs() < 1e-14, "{series} {direct}");
        }
    }
}
