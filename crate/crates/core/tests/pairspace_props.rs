use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use vqm::gmm::{Covariance2, GaussianComponent, MixtureModel, Point2D};
use vqm::pairspace::{align, compose_covariance, decompose_covariance, extract_pair_features, wrap_half_turn, ShapeParams};

fn shape() -> impl Strategy<Value = ShapeParams> {
    (-PI..PI, 0.01f64..10.0, 0.01f64..10.0).prop_map(|(t, a, b)| ShapeParams::new(t, a, b))
}

fn point() -> impl Strategy<Value = Point2D> {
    (-20.0f64..20.0, -20.0f64..20.0).prop_map(|(x, y)| Point2D::new(x, y))
}

fn cov_close(a: &Covariance2, b: &Covariance2, tol: f64) -> bool {
    let scale = a.xx.abs().max(a.yy.abs()).max(1.0);
    [(a.xx - b.xx), (a.xy - b.xy), (a.yy - b.yy)].iter().all(|d| d.abs() <= tol * scale)
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

fn pair(w: (f64, f64), means: (Point2D, Point2D), shapes: (ShapeParams, ShapeParams)) -> MixtureModel {
    MixtureModel::from_components(vec![
        GaussianComponent { weight: w.0 / (w.0 + w.1), mean: means.0, cov: compose_covariance(&shapes.0) },
        GaussianComponent { weight: w.1 / (w.0 + w.1), mean: means.1, cov: compose_covariance(&shapes.1) },
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn compose_after_decompose_is_identity(s in shape()) {
        let cov = compose_covariance(&s);
        let d = decompose_covariance(&cov).unwrap();
        prop_assert!(d.sigma_x >= d.sigma_y);
        prop_assert!(d.theta > -FRAC_PI_2 && d.theta <= FRAC_PI_2);
        prop_assert!(cov_close(&compose_covariance(&d), &cov, 1e-9));
    }

    #[test]
    fn swapped_axes_give_the_same_representative(s in shape()) {
        let swapped = ShapeParams::new(wrap_half_turn(s.theta + FRAC_PI_2), s.sigma_y, s.sigma_x);
        let a = decompose_covariance(&compose_covariance(&s)).unwrap();
        let b = decompose_covariance(&compose_covariance(&swapped)).unwrap();
        prop_assert!((a.sigma_x - b.sigma_x).abs() < 1e-9 && (a.sigma_y - b.sigma_y).abs() < 1e-9);
        if (a.sigma_x - a.sigma_y) > 1e-6 * a.sigma_x {
            prop_assert!(angle_gap(a.theta, b.theta) < 1e-7);
        }
    }

    #[test]
    fn wrap_lands_in_half_open_interval(t in -100.0f64..100.0) {
        let w = wrap_half_turn(t);
        prop_assert!(w > -FRAC_PI_2 && w <= FRAC_PI_2);
        prop_assert!(angle_gap(w, t) < 1e-9);
    }

    #[test]
    fn aligned_features_ignore_similarity_transforms(
        w in (0.05f64..1.0, 0.05f64..1.0),
        means in (point(), point()),
        shapes in (shape(), shape()),
        phi in -PI..PI,
        scale in 0.1f64..10.0,
        shift in point(),
    ) {
        let model = pair(w, means, shapes);
        let (f, mu, mv) = extract_pair_features(&model, 0, 1).unwrap();
        let base = align(&f, mu, mv).to_array();

        let (s, c) = phi.sin_cos();
        let map = |p: Point2D| Point2D::new(scale * (c * p.x - s * p.y) + shift.x, scale * (s * p.x + c * p.y) + shift.y);
        let turn = |sh: ShapeParams| ShapeParams::new(sh.theta + phi, scale * sh.sigma_x, scale * sh.sigma_y);
        let moved = pair(w, (map(means.0), map(means.1)), (turn(shapes.0), turn(shapes.1)));
        let (g, nu, nv) = extract_pair_features(&moved, 0, 1).unwrap();
        let other = align(&g, nu, nv).to_array();

        for i in 0..6 {
            prop_assert!((base[i] - other[i]).abs() < 1e-9, "feature {} moved: {} vs {}", i, base[i], other[i]);
        }
        // Orientation is undefined for isotropic components.
        for (i, (sx, sy)) in [(6, (base[2], base[3])), (7, (base[4], base[5]))] {
            if sx - sy > 1e-6 {
                prop_assert!(angle_gap(base[i], other[i]) < 1e-9, "angle {} moved: {} vs {}", i, base[i], other[i]);
            }
        }
    }

    #[test]
    fn alignment_is_idempotent(
        w in (0.05f64..1.0, 0.05f64..1.0),
        means in (point(), point()),
        shapes in (shape(), shape()),
    ) {
        let model = pair(w, means, shapes);
        let (f, mu, mv) = extract_pair_features(&model, 0, 1).unwrap();
        let once = align(&f, mu, mv);
        let g = *once.features();
        let twice = align(&g, Point2D::new(0.0, 0.0), Point2D::new(0.0, g.mu));
        let (a, b) = (once.to_array(), twice.to_array());
        for i in 0..8 {
            prop_assert!((a[i] - b[i]).abs() < 1e-9);
        }
    }
}
