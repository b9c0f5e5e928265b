use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use socnav::dynamics::ControlInput;
use socnav::perception::Covariance2;
use socnav::socialcost::*;
use socnav::Vec2;

const H: f64 = 1e-6;

fn close(analytic: f64, fd: f64) -> bool {
    (analytic - fd).abs() <= 1e-4 * analytic.abs().max(fd.abs()).max(1.0)
}

fn fd_r(f: impl Fn(&Vec2) -> f64, r: &Vec2) -> Vec2 {
    let ex = Vec2::new(H, 0.0);
    let ey = Vec2::new(0.0, H);
    Vec2::new((f(&(r + ex)) - f(&(r - ex))) / (2.0 * H), (f(&(r + ey)) - f(&(r - ey))) / (2.0 * H))
}

fn covariance() -> impl Strategy<Value = Covariance2> {
    (0.05f64..1.0, 0.05f64..1.0, -3.2f64..3.2).prop_map(|(a, b, t)| Covariance2::from_axes(a, b, t))
}

/// Offset from the pedestrian kept away from the clamp region.
fn offset() -> impl Strategy<Value = Vec2> {
    (0.1f64..4.0, -3.2f64..3.2).prop_map(|(d, t)| Vec2::new(d * t.cos(), d * t.sin()))
}

fn point() -> impl Strategy<Value = Vec2> {
    (-4.0f64..4.0, -4.0f64..4.0).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn control_cost_gradients(v in -2.0f64..2.0, w in -2.0f64..2.0, delta in -0.5f64..0.5) {
        let wt = Weights::default();
        let g = control_cost_grad(&ControlInput::new(v, w), &wt);
        let fv = (control_cost(&ControlInput::new(v + H, w), &wt) - control_cost(&ControlInput::new(v - H, w), &wt)) / (2.0 * H);
        let fw = (control_cost(&ControlInput::new(v, w + H), &wt) - control_cost(&ControlInput::new(v, w - H), &wt)) / (2.0 * H);
        prop_assert!(close(g[0], fv) && close(g[1], fw));

        let u = ControlInput::new(v, w);
        let ga = augmented_control_cost_grad(&u, delta, &wt);
        let fd = (augmented_control_cost(&u, delta + H, &wt) - augmented_control_cost(&u, delta - H, &wt)) / (2.0 * H);
        let fv = (augmented_control_cost(&ControlInput::new(v + H, w), delta, &wt)
            - augmented_control_cost(&ControlInput::new(v - H, w), delta, &wt)) / (2.0 * H);
        prop_assert!(close(ga[2], fd) && close(ga[0], fv));
    }

    #[test]
    fn target_cost_gradient(rk in point(), r0 in point(), t in point()) {
        prop_assume!((r0 - t).norm() > 0.1);
        let g = target_cost(&rk, &r0, &t, 1000.0).grad;
        let fd = fd_r(|r| target_cost(r, &r0, &t, 1000.0).value, &rk);
        prop_assert!(close(g.x, fd.x) && close(g.y, fd.y));
    }

    #[test]
    fn penalty_gradients(p in point(), d1 in offset(), q in point(), s in covariance()) {
        let r = p + d1;
        prop_assume!((r - q).norm() > 0.1);
        let peds = [p, q];
        let g = ed_cost(&r, &peds, 500.0).grad;
        let fd = fd_r(|r| ed_cost(r, &peds, 500.0).value, &r);
        prop_assert!(close(g.x, fd.x) && close(g.y, fd.y), "{g:?} {fd:?}");

        let tracks = [(p, s)];
        let g = md_cost(&r, &tracks, 1000.0).unwrap().grad;
        let fd = fd_r(|r| md_cost(r, &tracks, 1000.0).unwrap().value, &r);
        prop_assert!(close(g.x, fd.x) && close(g.y, fd.y), "{g:?} {fd:?}");
    }

    #[test]
    fn residual_gradients(p in point(), d in offset(), s in covariance(), delta in -0.48f64..0.0, gamma in 1.0f64..3.5, slack in 0.0f64..0.5) {
        let geo = SafetyGeometry::default();
        let r = p + d;

        let e = edc_delta_residual(&r, &p, &geo, delta);
        let fd = fd_r(|r| edc_delta_residual(r, &p, &geo, delta).value, &r);
        let fdd = (edc_delta_residual(&r, &p, &geo, delta + H).value - edc_delta_residual(&r, &p, &geo, delta - H).value) / (2.0 * H);
        prop_assert!(close(e.grad_r.x, fd.x) && close(e.grad_r.y, fd.y) && close(e.grad_delta, fdd));

        let m = mdc_delta_residual(&r, &p, &s, &geo, delta).unwrap();
        let fd = fd_r(|r| mdc_delta_residual(r, &p, &s, &geo, delta).unwrap().value, &r);
        let fdd = (mdc_delta_residual(&r, &p, &s, &geo, delta + H).unwrap().value
            - mdc_delta_residual(&r, &p, &s, &geo, delta - H).unwrap().value) / (2.0 * H);
        prop_assert!(close(m.grad_r.x, fd.x) && close(m.grad_r.y, fd.y) && close(m.grad_delta, fdd));

        let ell = ellipse_from_covariance(&s, gamma, &geo, 0.0).unwrap();
        let e = elc_residual(&r, &p, &ell);
        let fd = fd_r(|r| elc_residual(r, &p, &ell).value, &r);
        prop_assert!(close(e.grad_r.x, fd.x) && close(e.grad_r.y, fd.y));

        let contour = IsoContour::new(&s, gamma, geo.margin()).unwrap();
        let c = contour.residual(&r, &p, slack);
        let fd = fd_r(|r| contour.residual(r, &p, slack).value, &r);
        let fdd = (contour.residual(&r, &p, slack + H).value - contour.residual(&r, &p, slack - H).value) / (2.0 * H);
        prop_assert!(close(c.grad_r.x, fd.x) && close(c.grad_r.y, fd.y) && close(c.grad_delta, fdd), "{c:?} {fd:?} {fdd}");
    }
}

proptest! {
    #[test]
    fn identity_covariance_gives_euclidean_distance(r in point(), p in point()) {
        let md = mahalanobis_distance(&r, &p, &Covariance2::identity()).unwrap();
        prop_assert!((md - euclidean_distance(&r, &p)).abs() <= 4.0 * f64::EPSILON * md.max(1.0));
    }

    #[test]
    fn isotropic_scaling_identity(r in point(), peds in prop::collection::vec(point(), 1..5), sigma in 0.1f64..2.0) {
        prop_assume!(peds.iter().all(|p| (r - p).norm() > 0.05));
        let s = Covariance2::isotropic(sigma * sigma);
        let tracks: Vec<_> = peds.iter().map(|p| (*p, s)).collect();
        let md = md_cost(&r, &tracks, 1000.0).unwrap().value;
        let ed = ed_cost(&r, &peds, 500.0).value;
        let expected = sigma * sigma * 1000.0 / 500.0 * ed;
        prop_assert!((md - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn kappa_monotone(s in covariance(), c in 1.01f64..5.0, p_col in 1e-4f64..0.05, p_step in 1.01f64..3.0) {
        let g = SafetyGeometry { p_col, ..SafetyGeometry::default() };
        let raw = |s: &Covariance2, g: &SafetyGeometry| {
            let det2pi = (2.0 * std::f64::consts::PI).powi(2) * s.det();
            -2.0 * (det2pi.sqrt() * g.p_col / g.sphere_volume()).ln()
        };
        let base = mdc_threshold(&s, &g).unwrap();
        prop_assert!((base - raw(&s, &g).max(0.0)).abs() < 1e-9);
        prop_assert!(raw(&s.scaled(c), &g) < raw(&s, &g));
        prop_assert!(mdc_threshold(&s.scaled(c), &g).unwrap() <= base);
        let looser = SafetyGeometry { p_col: p_col * p_step, ..g };
        prop_assert!(mdc_threshold(&s, &looser).unwrap() <= base);
    }

    #[test]
    fn isotropic_ellipse_is_a_circle(sigma in 0.05f64..1.0, gamma in 1.0f64..3.5, angle in -3.2f64..3.2) {
        let g = SafetyGeometry::default();
        let e = ellipse_from_covariance(&Covariance2::isotropic(sigma * sigma), gamma, &g, 0.0).unwrap();
        let radius = gamma * sigma + g.margin();
        let q = Vec2::new(radius * angle.cos(), radius * angle.sin());
        prop_assert!(elc_residual(&q, &Vec2::zeros(), &e).value.abs() < 1e-12);
        prop_assert!((e.a - e.b).abs() < 1e-12 && e.psi == 0.0);
    }

    #[test]
    fn costs_are_non_negative(v in -5.0f64..5.0, w in -5.0f64..5.0, delta in -1.0f64..1.0, r in point(), p in point(), s in covariance()) {
        let wt = Weights::default();
        let u = ControlInput::new(v, w);
        prop_assert!(control_cost(&u, &wt) >= 0.0);
        prop_assert!(augmented_control_cost(&u, delta, &wt) >= 0.0);
        prop_assert!(target_cost(&r, &p, &Vec2::zeros(), 100.0).value >= 0.0);
        prop_assert!(ed_cost(&r, &[p], 500.0).value >= 0.0);
        prop_assert!(md_cost(&r, &[(p, s)], 1000.0).unwrap().value >= 0.0);
    }
}

#[test]
fn two_sigma_ellipse_coverage() {
    // 1 − exp(−γ²/2) of a 2-D Gaussian lies inside the γ-sigma ellipse
    let s = Covariance2::from_axes(0.6, 0.2, 0.7);
    let contour = IsoContour::new(&s, 2.0, 0.0).unwrap();
    let chol = |z: (f64, f64)| {
        let l11 = s.sxx.sqrt();
        let l21 = s.sxy / l11;
        let l22 = (s.syy - l21 * l21).sqrt();
        Vec2::new(l11 * z.0, l21 * z.0 + l22 * z.1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let inside = (0..n)
        .filter(|_| {
            let z: (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            contour.residual(&chol(z), &Vec2::zeros(), 0.0).value < 0.0
        })
        .count();
    let frac = inside as f64 / n as f64;
    assert!((frac - (1.0 - (-2.0f64).exp())).abs() < 0.02, "{frac}");
    assert!((frac - 0.8647).abs() < 0.02);
}
