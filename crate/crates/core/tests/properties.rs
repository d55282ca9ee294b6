use blowup_core::duhamel::{from_similarity, heat_apply, to_similarity, Extension};
use blowup_core::io::{read_fields_csv, read_trajectory_csv, write_fields_csv, write_trajectory_csv, RunConfig};
use blowup_core::kernel_lab::{apply_mehler, mehler_kernel, OuBridge};
use blowup_core::params::{beta_window, q_window, validate, ParamError, RawParams};
use blowup_core::profiles::{Cutoff, Profile};
use blowup_core::shrinking_set::{check_membership, TrajectorySample};
use blowup_core::spectral::{decompose, hermite, hermite_norm_sq, mode_coefficient};
use blowup_core::{Field, Grid1D, ModelParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Valid parameter sets spread over the admissible windows.
fn valid_params() -> impl Strategy<Value = ModelParams> {
    (3.5f64..12.0, 0.05f64..0.95, 0.01f64..0.99, prop::bool::ANY, 0.05f64..0.95).prop_map(|(p, tq, tb, nonlocal, te)| {
        let (qlo, qhi) = q_window(p, 1);
        let q = qlo + tq * (qhi - qlo);
        let mu = if nonlocal { 1.0 } else { 0.0 };
        let (blo, bhi) = beta_window(p, q, mu, 1);
        let beta = blo + tb * (bhi - blo);
        let eps = te * 1f64.min((p - 1.0) / 4.0);
        validate(&RawParams { p, q, mu, beta, eps: Some(eps), ..RawParams::default() }).unwrap()
    })
}

fn small_grid() -> Grid1D {
    Grid1D::with_spacing(30.0, 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derived_constants_hold(params in valid_params()) {
        let d = params.derived();
        prop_assert!(d.gamma > 0.0);
        prop_assert!((d.kappa.powf(params.p - 1.0) * (params.p - 1.0) - 1.0).abs() < 1e-14);
        prop_assert!(params.beta < 1.0);
        if params.mu != 0.0 {
            prop_assert!(params.beta * (params.q - 1.0) > 1.0);
        }
    }

    #[test]
    fn q_outside_window_rejected(p in 3.5f64..12.0, off in 0.0f64..2.0, above in prop::bool::ANY) {
        let (lo, hi) = q_window(p, 1);
        let q = if above { hi + off } else { lo - off };
        let r = validate(&RawParams { p, q, ..RawParams::default() });
        let rejected = matches!(r, Err(ParamError::QOutOfWindow { .. }));
        prop_assert!(rejected, "{:?}", r);
    }

    #[test]
    fn p_at_most_three_rejected(p in 0.5f64..=3.0) {
        let rejected = matches!(validate(&RawParams { p, ..RawParams::default() }), Err(ParamError::PTooSmall { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn decompose_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, c in prop::array::uniform4(-1.0f64..1.0)) {
        let params = ModelParams::reference();
        let grid = Grid1D::with_spacing(80.0, 0.1).unwrap();
        let u = Field::from_fn(grid, |y| c[0] + c[1] * y / 10.0 + c[2] * (-y * y / 50.0).exp());
        let v = Field::from_fn(grid, |y| c[3] * (y / 7.0).sin());
        let w = u.scale(a).add(&v.scale(b)).unwrap();
        let (du, dv, dw) = (
            decompose(&u, 50.0, &params).unwrap(),
            decompose(&v, 50.0, &params).unwrap(),
            decompose(&w, 50.0, &params).unwrap(),
        );
        for m in 0..3 {
            let lin = a * du.modes()[m] + b * dv.modes()[m];
            prop_assert!((dw.modes()[m] - lin).abs() <= 1e-10 * (1.0 + lin.abs()));
        }
    }

    #[test]
    fn decomposition_reconstructs(c in prop::array::uniform4(-1.0f64..1.0)) {
        let params = ModelParams::reference();
        let grid = Grid1D::with_spacing(80.0, 0.1).unwrap();
        let v = Field::from_fn(grid, |y| c[0] + c[1] * y + c[2] * (y / 9.0).cos() + c[3] / (1.0 + y * y));
        let d = decompose(&v, 50.0, &params).unwrap();
        let r = d.reconstruct();
        let err = v.values.iter().zip(&r.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err <= 1e-9, "{}", err);
        for m in 0..3 {
            prop_assert!(mode_coefficient(&d.v_minus, m).unwrap().abs() <= 1e-8);
        }
        let inner = params.k0 * 50f64.sqrt();
        for (y, x) in grid.nodes().zip(&d.v_e.values) {
            if y.abs() <= inner {
                prop_assert_eq!(*x, 0.0);
            }
        }
    }

    #[test]
    fn parseval_for_low_polynomials(c in prop::array::uniform3(-2.0f64..2.0)) {
        let grid = small_grid();
        let v = Field::from_fn(grid, |y| c[0] + c[1] * hermite(1, y) + c[2] * hermite(2, y));
        let sum: f64 = (0..3).map(|m| mode_coefficient(&v, m).unwrap().powi(2) * hermite_norm_sq(m)).sum();
        let direct = c[0] * c[0] * hermite_norm_sq(0) + c[1] * c[1] * hermite_norm_sq(1) + c[2] * c[2] * hermite_norm_sq(2);
        prop_assert!((sum - direct).abs() <= 1e-8 * (1.0 + direct));
    }

    #[test]
    fn membership_monotone_in_a(scale in 0.0f64..3.0, a in 1.0f64..40.0, extra in 0.0f64..40.0) {
        let base = ModelParams::reference();
        let small = ModelParams { a, ..base };
        let big = ModelParams { a: a + extra, ..base };
        let grid = Grid1D::with_spacing(80.0, 0.1).unwrap();
        let s = 50.0;
        let v = Field::from_fn(grid, |y| scale * small.a / (s * s) * ((y / 3.0).cos() + 0.3 * y / (1.0 + y.abs())));
        let g = v.gradient();
        let inside_small = check_membership(&decompose(&v, s, &small).unwrap(), &g, s, &small).unwrap().inside();
        let inside_big = check_membership(&decompose(&v, s, &big).unwrap(), &g, s, &big).unwrap().inside();
        prop_assert!(!inside_small || inside_big);
    }

    #[test]
    fn flat_profile_even_positive_decreasing(params in valid_params(), z in 0.0f64..50.0, dz in 0.01f64..5.0) {
        let pr = Profile::new(params);
        let f = pr.flat(z);
        prop_assert!(f > 0.0);
        prop_assert_eq!(f, pr.flat(-z));
        prop_assert!(pr.flat(z + dz) < f);
    }

    #[test]
    fn cutoff_bounds(z in -4.0f64..4.0) {
        let c = Cutoff::value(z);
        prop_assert!((0.0..=1.0).contains(&c));
        if z.abs() >= 2.0 {
            prop_assert_eq!(c, 0.0);
        }
        if z.abs() <= 1.0 {
            prop_assert_eq!(c, 1.0);
        }
    }

    #[test]
    fn profile_is_flat_beyond_cutoff(y in 0.0f64..1e4, s in 10.0f64..1e3) {
        let params = ModelParams::reference();
        let pr = Profile::new(params);
        let (g, _) = pr.outer_scale(s);
        if y >= 2.0 * g {
            prop_assert_eq!(pr.phi(y, s), pr.flat(y / s.sqrt()));
        }
    }

    #[test]
    fn mehler_kernel_positive(theta in 0.01f64..10.0, y in -20.0f64..20.0, x in -20.0f64..20.0) {
        prop_assert!(mehler_kernel(theta, y, x) > 0.0);
    }

    #[test]
    fn mehler_preserves_order(theta in 0.05f64..3.0, c in prop::array::uniform3(-1.0f64..1.0), gap in 0.0f64..1.0) {
        let grid = Grid1D::with_spacing(20.0, 0.1).unwrap();
        let r1 = Field::from_fn(grid, |y| c[0] + c[1] * (y / 2.0).sin() + c[2] * (-y * y).exp());
        let r2 = Field::from_fn(grid, |y| r1.values[grid.nearest(y)] + gap * (1.0 + (y / 3.0).cos()) / 2.0);
        let a = apply_mehler(theta, &r1).unwrap();
        let b = apply_mehler(theta, &r2).unwrap();
        for (lo, hi) in a.values.iter().zip(&b.values) {
            prop_assert!(*lo <= hi + 1e-10);
        }
    }

    #[test]
    fn bridge_endpoints_exact(theta in 0.05f64..5.0, x in -10.0f64..10.0, y in -10.0f64..10.0, seed in 0u64..1000) {
        let bridge = OuBridge::new(theta, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut path = vec![0.0; bridge.taus.len()];
        bridge.sample_into(x, y, &mut rng, &mut path);
        prop_assert_eq!(path[0], x);
        prop_assert_eq!(*path.last().unwrap(), y);
    }

    #[test]
    fn heat_preserves_positivity(t in 1e-3f64..2.0, c in prop::array::uniform3(0.0f64..1.0)) {
        let grid = Grid1D::with_spacing(20.0, 0.05).unwrap();
        let f = Field::from_fn(grid, |x| c[0] * (-x * x).exp() + c[1] / (1.0 + x * x) + c[2] * (x > 1.0) as u8 as f64);
        let u = heat_apply(t, &f, Extension::ZeroExtension).unwrap();
        prop_assert!(u.values.iter().all(|v| *v >= -1e-14));
    }

    #[test]
    fn similarity_pullback_round_trip(s in 1.0f64..40.0, c in prop::array::uniform2(-1.0f64..1.0)) {
        let grid = Grid1D::with_spacing(10.0, 0.1).unwrap();
        let w = Field::from_fn(grid, |y| c[0] + c[1] * (y / 2.0).sin());
        let u = from_similarity(&w, s, 5.0).unwrap();
        let back = to_similarity(&u, (-s).exp(), 5.0).unwrap();
        prop_assert_eq!(back.grid.len(), grid.len());
        for (i, (a, b)) in w.values.iter().zip(&back.values).enumerate() {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "node {}", i);
            prop_assert!((back.grid.node(i) - grid.node(i)).abs() <= 1e-9);
        }
    }

    #[test]
    fn config_text_round_trips(
        p in 3.5f64..12.0,
        d0 in -2.0f64..2.0,
        d1 in -2.0f64..2.0,
        h in 0.01f64..1.0,
        seed in any::<u64>(),
        paths in 100usize..100_000,
    ) {
        let mut cfg = RunConfig { d0, d1, h, seed, paths, ..RunConfig::default() };
        cfg.params.p = p;
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn trajectory_csv_round_trips(rows in prop::collection::vec((any::<f64>(), -1e3f64..1e3, any::<bool>()), 0..40)) {
        let samples: Vec<TrajectorySample> = rows
            .iter()
            .enumerate()
            .map(|(k, (x, y, inside))| TrajectorySample {
                s: 50.0 + k as f64 * 0.1,
                v0: if x.is_finite() { *x } else { 0.0 },
                v1: *y,
                v2: y * 1e-7,
                norm_vminus_weighted: y.abs(),
                norm_ve_inf: 1.0 / (1.0 + y.abs()),
                norm_ve_beta: y * y,
                norm_gradv_beta: 0.0,
                in_set: *inside,
            })
            .collect();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, "manifest.json", &samples).unwrap();
        prop_assert_eq!(read_trajectory_csv(buf.as_slice()).unwrap(), samples);
    }

    #[test]
    fn fields_csv_round_trips(n in 2usize..20, snaps in 1usize..4, c in -5.0f64..5.0) {
        let grid = Grid1D::new(3.0, 2 * n + 1).unwrap();
        let fields: Vec<(f64, Field)> =
            (0..snaps).map(|k| (50.0 + k as f64, Field::from_fn(grid, |y| c * y.sin() + k as f64))).collect();
        let mut buf = Vec::new();
        write_fields_csv(&mut buf, "manifest.json", &fields).unwrap();
        let back = read_fields_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), fields.len());
        for ((s, f), (t, g)) in fields.iter().zip(&back) {
            prop_assert_eq!(s, t);
            prop_assert_eq!(&f.values, &g.values);
            prop_assert_eq!(f.grid.len(), g.grid.len());
            prop_assert!((f.grid.half_width() - g.grid.half_width()).abs() <= 1e-12);
        }
    }
}
