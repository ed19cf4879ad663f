use super::*;
use crate::divest::fields::{Const, NetField, SinAvg, SumSq};
use crate::divest::{brute_divergence, q1_sphere_ad};
use crate::network::{init_params, NetworkConfig, ParamSet};
use crate::problems::{black_scholes, nonlinear_elliptic, poisson_highdim, poisson_lshape};
use crate::sampling::Points;

fn net(d: usize, width: usize, seed: u64) -> ParamSet {
    init_params(NetworkConfig::fcnn(d, width, 2), seed).unwrap()
}

fn cube_cfg(eps: f64) -> LossConfig {
    LossConfig::new(Method::DfvmCube, eps)
}

fn points(problem: &Problem, n_int: usize, n_bnd: usize, seed: u64) -> (Points, Points) {
    (
        problem.interior_points(0.05, n_int, seed).unwrap(),
        problem.boundary_points(n_bnd, seed + 1).unwrap(),
    )
}

#[test]
fn sphere_flux_of_sum_sq_is_minus_two_d() {
    for d in [2, 3, 7] {
        let cv = CvSpec {
            eps: 1e-2,
            k: 20,
            antithetic: true,
            qmc: true,
        };
        let x = vec![0.3; d];
        let f = flux_sphere(&SumSq(d), &Diffusion::Identity, &x, d, &cv, 5).unwrap();
        assert!((f + 2.0 * d as f64).abs() < 1e-10, "d={d}: {f}");

        let dirs = sphere_directions(d, cv.k, true, 5).unwrap();
        let q1 = q1_sphere_ad(&SinAvg(d), &Diffusion::Identity, &x, cv.eps, &dirs).unwrap();
        let flux = ControlVolume::sphere(&x, cv.eps, &dirs).flux(&SinAvg(d), &Diffusion::Identity);
        assert!((flux + q1).abs() < 1e-12, "{flux} vs {q1}");
    }
}

#[test]
fn constant_field_has_zero_flux() {
    let u = Const { dim: 3, value: 1.5 };
    let cv = CvSpec {
        eps: 1e-3,
        k: 4,
        antithetic: true,
        qmc: true,
    };
    let x = [0.2, 0.4, 0.6];
    assert_eq!(
        flux_sphere(&u, &Diffusion::Identity, &x, 3, &cv, 1).unwrap(),
        0.0
    );
    assert_eq!(
        flux_cube(&u, &Diffusion::Identity, &x, 3, &cv, 1).unwrap(),
        0.0
    );
}

#[test]
fn cube_flux_of_sum_sq_with_sixteen_points_per_face() {
    for qmc in [true, false] {
        let cv = CvSpec {
            eps: 1e-2,
            k: 16,
            antithetic: false,
            qmc,
        };
        let f = flux_cube(&SumSq(2), &Diffusion::Identity, &[0.4, 0.7], 2, &cv, 3).unwrap();
        assert!((f + 4.0).abs() < 1e-10, "{f}");
    }
}

#[test]
fn cube_flux_converges_at_second_order() {
    let u = SinAvg(3);
    let a = Diffusion::quadratic();
    let x = [0.3, -0.2, 0.5];
    let oracle = -brute_divergence(&u, &a, &x, 1e-4).unwrap();
    let gap = |eps: f64| {
        let cv = CvSpec {
            eps,
            k: 1,
            antithetic: false,
            qmc: true,
        };
        (flux_cube(&u, &a, &x, 3, &cv, 0).unwrap() - oracle).abs()
    };
    let (g1, g2) = (gap(2e-2), gap(1e-2));
    let ratio = g1 / g2;
    assert!((3.0..5.0).contains(&ratio), "{g1} {g2} ratio {ratio}");
}

#[test]
fn lower_order_term_of_constants() {
    let x = [0.3, 0.6, 0.2];
    let p = poisson_highdim(3).unwrap();
    let u = Const { dim: 3, value: 0.0 };
    let cv = ControlVolume::cube(&x, 3, 1e-3, 1, true, 0).unwrap();
    let h = lower_order_term(&u, &p, &x, LowerOrderRule::CenterPoint, &cv);
    assert_eq!(h, -p.source(&x));

    let p = nonlinear_elliptic(3).unwrap();
    let u = Const { dim: 3, value: 0.7 };
    let h = lower_order_term(&u, &p, &x, LowerOrderRule::CenterPoint, &cv);
    assert_eq!(h, -p.source(&x));
}

#[test]
fn cv_average_is_close_to_center_point() {
    for p in [nonlinear_elliptic(3).unwrap(), black_scholes()] {
        let params = net(p.dim(), 16, 2);
        let u = NetField(&params);
        let cfg = cube_cfg(1e-3);
        let (int, _) = points(&p, 20, 1, 4);
        for x in int.rows() {
            let cv = control_volume(&p, &cfg, x, 0).unwrap();
            let c = lower_order_term(&u, &p, x, LowerOrderRule::CenterPoint, &cv);
            let m = lower_order_term(&u, &p, x, LowerOrderRule::CvAverage, &cv);
            assert!((c - m).abs() <= 1e-2 * c.abs().max(1.0), "{c} vs {m}");
        }
    }
}

#[test]
fn exact_solution_has_tiny_residuals() {
    let p = poisson_highdim(2).unwrap();
    let (int, bnd) = points(&p, 200, 50, 7);
    let u = p.exact_field();
    for cfg in [cube_cfg(1e-3), LossConfig::new(Method::Pinn, 1e-3)] {
        let r = field_residuals(&u, &p, &cfg, &int, &bnd, 1).unwrap();
        let worst = r.interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-6, "{:?}: {worst}", cfg.method);
        assert!(r.boundary.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn zero_net_with_homogeneous_data_has_zero_loss() {
    let p = poisson_highdim(3)
        .unwrap()
        .with_source(|_| 0.0)
        .with_boundary(|_| 0.0);
    let params = ParamSet::zeros(NetworkConfig::fcnn(3, 8, 2)).unwrap();
    let (int, bnd) = points(&p, 30, 20, 1);
    for method in [Method::DfvmCube, Method::DfvmSphere, Method::Pinn] {
        let cfg = LossConfig::new(method, 1e-3);
        let out = loss_and_gradient(&params, &p, &cfg, &int, &bnd, 0, true).unwrap();
        assert_eq!(out.loss(), 0.0);
        assert!(out.gradient.unwrap().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn loss_is_mean_square_of_residuals() {
    let p = poisson_lshape();
    let params = net(2, 16, 3);
    let (int, bnd) = points(&p, 70, 40, 2);
    let out = dfvm_loss(&params, &p, &cube_cfg(1e-3), &int, &bnd, 9).unwrap();
    let b = &out.batch;
    let mi: f64 = b.interior.iter().map(|v| v * v).sum::<f64>() / b.interior.len() as f64;
    let mb: f64 = b.boundary.iter().map(|v| v * v).sum::<f64>() / b.boundary.len() as f64;
    assert!((b.loss - (mi + mb)).abs() <= 1e-12 * b.loss.max(1.0));
}

#[test]
fn zero_lambda_ignores_boundary() {
    let p = poisson_highdim(2).unwrap();
    let params = net(2, 16, 3);
    let (int, bnd) = points(&p, 40, 30, 5);
    let shifted = p.clone().with_boundary(|x| 100.0 + x[0]);
    let a = pinn_loss(&params, &p, &int, &bnd, 0.0).unwrap();
    let b = pinn_loss(&params, &shifted, &int, &bnd, 0.0).unwrap();
    assert_eq!(a.loss(), b.loss());
    assert_eq!(a.gradient, b.gradient);
    assert_ne!(a.batch.boundary, b.batch.boundary);
}

#[test]
fn pinn_and_dfvm_agree_on_random_nets() {
    for p in [
        poisson_highdim(3).unwrap(),
        poisson_lshape(),
        nonlinear_elliptic(3).unwrap(),
        black_scholes(),
    ] {
        for seed in 0..3 {
            let params = net(p.dim(), 16, seed);
            let (int, bnd) = points(&p, 50, 20, seed);
            let cube =
                loss_and_gradient(&params, &p, &cube_cfg(1e-3), &int, &bnd, 0, false).unwrap();
            let pinn = loss_and_gradient(
                &params,
                &p,
                &LossConfig::new(Method::Pinn, 1e-3),
                &int,
                &bnd,
                0,
                false,
            )
            .unwrap();
            let gap = (cube.loss() - pinn.loss()).abs();
            assert!(gap <= 1e-4, "{} seed {seed}: {gap}", p.name);
            for (a, b) in cube.batch.interior.iter().zip(&pinn.batch.interior) {
                assert!((a - b).abs() <= 1e-4, "{} seed {seed}: {a} vs {b}", p.name);
            }
        }
    }
}

#[test]
fn dfvm_approaches_pinn_as_eps_shrinks() {
    let p = poisson_lshape();
    let params = net(2, 16, 11);
    let (int, _) = points(&p, 10, 1, 3);
    let u = NetField(&params);
    let pinn = LossConfig::new(Method::Pinn, 1e-3);
    for x in int.rows() {
        let reference = interior_residual(&u, &p, &pinn, x, 0).unwrap();
        let gaps: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&eps| {
                (interior_residual(&u, &p, &cube_cfg(eps), x, 0).unwrap() - reference).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}

#[test]
fn bisection_conserves_flux() {
    let params = net(3, 16, 4);
    let u = NetField(&params);
    let a = Diffusion::Identity;
    for (axis, qmc) in [(0, true), (1, false), (2, true)] {
        let cv = ControlVolume::cube(&[0.1, -0.3, 0.4], 3, 0.05, 8, qmc, 6).unwrap();
        let (lo, hi) = cv.bisect(axis, 16, 8).unwrap();
        let whole = cv.surface_flux(&u, &a);
        let halves = lo.surface_flux(&u, &a) + hi.surface_flux(&u, &a);
        assert!((whole - halves).abs() <= 1e-10, "{whole} vs {halves}");
    }
}

#[test]
fn batched_residuals_match_pointwise() {
    let problems = [
        poisson_highdim(3).unwrap(),
        poisson_lshape(),
        nonlinear_elliptic(3).unwrap(),
        black_scholes(),
    ];
    for p in &problems {
        let params = net(p.dim(), 12, 1);
        let (int, bnd) = points(p, 23, 9, 2);
        for method in [Method::DfvmCube, Method::DfvmSphere, Method::Pinn] {
            for rule in [LowerOrderRule::CenterPoint, LowerOrderRule::CvAverage] {
                for estimator in [FluxEstimator::AdGradient, FluxEstimator::Difference] {
                    let mut cfg = LossConfig::new(method, 1e-2);
                    cfg.cv.k = if method == Method::DfvmCube { 2 } else { 6 };
                    cfg.lower_order = rule;
                    cfg.estimator = estimator;
                    cfg.chunk_rows = 50;
                    let out = loss_and_gradient(&params, p, &cfg, &int, &bnd, 3, false).unwrap();
                    let reference =
                        field_residuals(&NetField(&params), p, &cfg, &int, &bnd, 3).unwrap();
                    for (a, b) in out.batch.interior.iter().zip(&reference.interior) {
                        assert!(
                            (a - b).abs() <= 1e-9 * b.abs().max(1.0),
                            "{} {cfg:?}: {a} vs {b}",
                            p.name
                        );
                    }
                    for (a, b) in out.batch.boundary.iter().zip(&reference.boundary) {
                        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
                    }
                }
            }
        }
    }
}

fn check_gradient(p: &Problem, cfg: &LossConfig) {
    let params = net(p.dim(), 8, 21);
    let (int, bnd) = points(p, 12, 6, 4);
    let loss = |v: &[f64]| {
        let q = ParamSet::from_values(*params.config(), v.to_vec()).unwrap();
        loss_and_gradient(&q, p, cfg, &int, &bnd, 1, false)
            .unwrap()
            .loss()
    };
    let grad = loss_and_gradient(&params, p, cfg, &int, &bnd, 1, true)
        .unwrap()
        .gradient
        .unwrap();
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut r = crate::rng::rng(17);
    use rand::Rng as _;
    for _ in 0..20 {
        let i = r.random_range(0..params.len());
        let h = 1e-5;
        let mut v = params.values().to_vec();
        v[i] += h;
        let up = loss(&v);
        v[i] -= 2.0 * h;
        let down = loss(&v);
        let fd = (up - down) / (2.0 * h);
        let err = (grad[i] - fd).abs();
        assert!(
            err <= 1e-4 * grad[i].abs().max(1e-2 * scale),
            "{} {:?} param {i}: {} vs {fd}",
            p.name,
            cfg.method,
            grad[i]
        );
    }
}

#[test]
fn gradients_match_finite_differences() {
    for p in [
        poisson_highdim(3).unwrap(),
        nonlinear_elliptic(3).unwrap(),
        black_scholes(),
    ] {
        check_gradient(&p, &cube_cfg(1e-2));
        check_gradient(&p, &LossConfig::new(Method::DfvmSphere, 1e-2));
        check_gradient(&p, &LossConfig::new(Method::Pinn, 1e-2));
        let mut cfg = cube_cfg(1e-2);
        cfg.lower_order = LowerOrderRule::CvAverage;
        cfg.estimator = FluxEstimator::Difference;
        check_gradient(&p, &cfg);
    }
}

#[test]
fn loss_is_invariant_to_point_order() {
    let p = nonlinear_elliptic(3).unwrap();
    let params = net(3, 16, 8);
    let (int, bnd) = points(&p, 64, 32, 9);
    let reverse = |pts: &Points| {
        let mut out = Points::new(pts.dim());
        for i in (0..pts.len()).rev() {
            out.push(pts.row(i));
        }
        out
    };
    for method in [Method::DfvmCube, Method::DfvmSphere, Method::Pinn] {
        let cfg = LossConfig::new(method, 1e-3);
        let a = loss_and_gradient(&params, &p, &cfg, &int, &bnd, 4, false).unwrap();
        let b =
            loss_and_gradient(&params, &p, &cfg, &reverse(&int), &reverse(&bnd), 4, false).unwrap();
        assert!((a.loss() - b.loss()).abs() <= 1e-12 * a.loss().max(1.0));
    }
}

#[test]
fn control_volume_leaving_domain_is_reported() {
    let p = poisson_highdim(2).unwrap();
    let params = net(2, 8, 0);
    let int = Points::from_flat(2, vec![0.5, 0.5, 0.0005, 0.5]);
    let bnd = p.boundary_points(4, 0).unwrap();
    let err = dfvm_loss(&params, &p, &cube_cfg(1e-3), &int, &bnd, 0).unwrap_err();
    match err {
        LossError::NotEmbedded { index, point } => {
            assert_eq!(index, 1);
            assert_eq!(point, vec![0.0005, 0.5]);
        }
        other => panic!("unexpected {other}"),
    }
    assert!(pinn_loss(&params, &p, &int, &bnd, 1.0).is_ok());
}

#[test]
fn invalid_settings_are_rejected() {
    let mut cfg = LossConfig::new(Method::DfvmSphere, 1e-3);
    cfg.cv.k = 7;
    assert!(matches!(
        cfg.validate(),
        Err(LossError::Config { field: "k", .. })
    ));
    let mut cfg = cube_cfg(0.0);
    assert!(cfg.validate().is_err());
    cfg.cv.eps = 1e-3;
    cfg.lambda = -1.0;
    assert!(matches!(
        cfg.validate(),
        Err(LossError::Config {
            field: "lambda",
            ..
        })
    ));
}
