use manifold_nerf::features::{cosine_similarity, lerp_features, FeatureVector};
use manifold_nerf::geometry::{angle_between, look_at, orthonormality_error, select_pairs, slerp_position, WORLD_UP};
use manifold_nerf::metrics::{psnr, ssim};
use manifold_nerf::render::composite;
use manifold_nerf::{Image, Vec3};
use proptest::prelude::*;

fn unit_vec() -> impl Strategy<Value = Vec3> {
    (0.0..std::f64::consts::TAU, -1.0f64..1.0).prop_map(|(phi, z)| {
        let r = (1.0 - z * z).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    })
}

/// Unit pairs at least a little away from antipodal.
fn unit_pair() -> impl Strategy<Value = (Vec3, Vec3)> {
    (unit_vec(), unit_vec()).prop_filter("antipodal", |(a, b)| a.dot(b) > -0.999)
}

fn hemisphere_point() -> impl Strategy<Value = Vec3> {
    (0.0..std::f64::consts::TAU, 0.05f64..1.4, 0.5f64..4.0).prop_map(|(az, el, r)| {
        r * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    })
}

proptest! {
    #[test]
    fn slerp_endpoints((a, b) in unit_pair()) {
        prop_assert!((slerp_position(&a, &b, 0.0).unwrap() - a).norm() < 1e-12);
        prop_assert!((slerp_position(&a, &b, 1.0).unwrap() - b).norm() < 1e-12);
    }

    #[test]
    fn slerp_keeps_unit_norm((a, b) in unit_pair(), s in 0.0f64..1.0) {
        prop_assert!((slerp_position(&a, &b, s).unwrap().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slerp_symmetric((a, b) in unit_pair(), s in 0.0f64..1.0) {
        let fwd = slerp_position(&a, &b, s).unwrap();
        let back = slerp_position(&b, &a, 1.0 - s).unwrap();
        prop_assert!((fwd - back).norm() < 1e-9);
    }

    #[test]
    fn slerp_angle_is_linear((a, b) in unit_pair(), s in 0.0f64..1.0) {
        let theta = angle_between(&a, &b).unwrap();
        prop_assume!(theta > 1e-3);
        let p = slerp_position(&a, &b, s).unwrap();
        prop_assert!((angle_between(&a, &p).unwrap() - s * theta).abs() < 1e-7);
    }

    #[test]
    fn slerp_radius_is_lerped(a in hemisphere_point(), b in hemisphere_point(), s in 0.0f64..1.0) {
        let p = slerp_position(&a, &b, s).unwrap();
        prop_assert!((p.norm() - ((1.0 - s) * a.norm() + s * b.norm())).abs() < 1e-9);
    }

    #[test]
    fn look_at_is_rotation(p in hemisphere_point()) {
        let pose = look_at(&p, &Vec3::zeros(), &WORLD_UP).unwrap();
        prop_assert!(orthonormality_error(&pose.rotation) < 1e-9);
        prop_assert!((pose.rotation.determinant() - 1.0).abs() < 1e-9);
        prop_assert!((pose.forward() + p.normalize()).norm() < 1e-9);
    }

    #[test]
    fn pairs_match_exhaustive_scan(points in prop::collection::vec(hemisphere_point(), 0..12), eps in 0.0f64..4.0) {
        if points.len() < 2 {
            prop_assert!(select_pairs(&points, eps).is_err());
            return Ok(());
        }
        let got = select_pairs(&points, eps).unwrap();
        let mut expected = Vec::new();
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if (points[i] - points[j]).norm() < eps {
                    expected.push((i, j));
                }
            }
        }
        let got: Vec<(usize, usize)> = got.iter().map(|p| (p.index_a, p.index_b)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn composite_weights_partition_unity(
        samples in prop::collection::vec((0.0f64..50.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.001f64..0.2), 1..40)
    ) {
        let dens: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let cols: Vec<[f64; 3]> = samples.iter().map(|s| [s.1, s.2, s.3]).collect();
        let deltas: Vec<f64> = samples.iter().map(|s| s.4).collect();
        let c = composite(&dens, &cols, &deltas, [1.0; 3]).unwrap();
        let total: f64 = c.weights.iter().sum::<f64>() + c.transmittance;
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(c.weights.iter().all(|&w| w >= 0.0));
        prop_assert!(c.color.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn lerp_features_symmetric(
        raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..16),
        s in 0.0f64..1.0,
    ) {
        let a = FeatureVector(raw.iter().map(|r| r.0).collect());
        let b = FeatureVector(raw.iter().map(|r| r.1).collect());
        let ab = lerp_features(&a, &b, s).unwrap();
        let ba = lerp_features(&b, &a, 1.0 - s).unwrap();
        for (x, y) in ab.as_slice().iter().zip(ba.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_bounded(raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..16)) {
        let a = FeatureVector(raw.iter().map(|r| r.0).collect());
        let b = FeatureVector(raw.iter().map(|r| r.1).collect());
        prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
        let c = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn metric_symmetry(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut gen = || Image::from_data(12, 12, (0..12 * 12 * 3).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (a, b) = (gen(), gen());
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn psnr_decreases_with_error_scale(seed in 0u64..1000, k in 1.1f64..3.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let base = Image::filled(6, 6, [0.5; 3]);
        let pattern: Vec<f64> = (0..6 * 6 * 3).map(|_| rng.random_range(-0.1..0.1)).collect();
        let shifted = |scale: f64| Image::from_data(6, 6, base.data.iter().zip(&pattern).map(|(b, p)| b + scale * p).collect()).unwrap();
        prop_assert!(psnr(&base, &shifted(k)).unwrap() < psnr(&base, &shifted(1.0)).unwrap());
    }
}
