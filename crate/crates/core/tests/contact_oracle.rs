//! Simulator checks against independent brute-force evaluation: per-taxel
//! sphere contact (bit-for-bit depths), SDF gradient magnitudes, and
//! Kelvin-Voigt force-law properties.

use flexitac_core::pad::{ConfigRegistry, PadGeometry};
use flexitac_core::sim::{
    kelvin_voigt_force, sample_depths, sdf_eval, step, ContactParams, SdfGeometry, SdfScene,
    SdfShape, TaxelContactSample,
};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(k_n: f64, k_d: f64) -> ContactParams {
    ContactParams {
        k_n,
        k_d,
        counts_per_newton: 400.0,
        noise_floor_counts: 50.0,
        noise_sigma_counts: 0.0,
    }
}

/// Plain-f64 re-derivation of the sphere-press scenario from the
/// definitions: centered grid placement, forward-Euler shape motion,
/// sphere distance, finite-difference rate, spring-damper law. No
/// simulator types involved.
struct BruteForceSphere {
    rows: usize,
    cols: usize,
    pitch: f64,
    cx: f64,
    cy: f64,
    cz: f64,
    vz: f64,
    radius: f64,
    prev: Option<Vec<f64>>,
}

impl BruteForceSphere {
    fn step(&mut self, dt: f64, k_n: f64, k_d: f64) -> Vec<(f64, f64, f64)> {
        self.cz += self.vz * dt;
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for row in 0..self.rows {
            for col in 0..self.cols {
                let px = (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch;
                let py = (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch;
                let dx = px - self.cx;
                let dy = py - self.cy;
                let dz = 0.0 - self.cz;
                let dist = (dx * dx + dy * dy + dz * dz).sqrt();
                let sdf = dist - self.radius;
                let depth = (-sdf).max(0.0);
                let idx = row * self.cols + col;
                let rate = match &self.prev {
                    Some(prev) => (depth - prev[idx]) / dt,
                    None => 0.0,
                };
                let force = if depth == 0.0 { 0.0 } else { (k_n * depth + k_d * rate).max(0.0) };
                out.push((depth, rate, force));
            }
        }
        self.prev = Some(out.iter().map(|(d, _, _)| *d).collect());
        out
    }
}

#[test]
fn sphere_press_matches_brute_force_bit_for_bit() {
    let reg = ConfigRegistry::standard();
    let grid = reg.get(0).unwrap().clone();
    let pad = PadGeometry::at_identity(grid.clone());
    let p = params(500.0, 5.0);
    let dt = 0.01;

    // Descends from above; max penetration reaches 1 mm at the last step.
    let (cx, cy, z0, vz, radius) = (0.001, 0.001, 0.0215, -0.005, 0.02);
    let mut scene = SdfScene::new(vec![SdfShape::new(
        SdfGeometry::Sphere { center: Vector3::new(cx, cy, z0), radius },
        Vector3::new(0.0, 0.0, vz),
    )
    .unwrap()]);
    let mut oracle = BruteForceSphere {
        rows: grid.rows(),
        cols: grid.cols(),
        pitch: grid.pitch(),
        cx,
        cy,
        cz: z0,
        vz,
        radius,
        prev: None,
    };

    let mut prev: Option<Vec<f64>> = None;
    let mut max_depth: f64 = 0.0;
    let mut contacting = 0usize;
    for k in 0..50u32 {
        let samples = step(&mut scene, &pad, &p, dt, prev.as_deref()).unwrap();
        let expected = oracle.step(dt, p.k_n, p.k_d);
        for (i, (s, (depth, rate, force))) in samples.iter().zip(&expected).enumerate() {
            assert_eq!(
                s.depth.to_bits(),
                depth.to_bits(),
                "step {k} taxel {i}: depth {} vs oracle {depth}",
                s.depth
            );
            assert!((s.depth_rate - rate).abs() <= 1e-12);
            assert!(
                (s.force_n - force).abs() <= 1e-12,
                "step {k} taxel {i}: force {} vs oracle {force}",
                s.force_n
            );
            if s.depth > 0.0 {
                contacting += 1;
            }
            max_depth = max_depth.max(s.depth);
        }
        prev = Some(sample_depths(&samples));
    }
    assert!(contacting > 0, "scenario must actually make contact");
    assert!((max_depth - 0.001).abs() < 1e-9, "max depth {max_depth}");
}

fn gradient_magnitude(scene: &SdfScene, p: &Vector3<f64>, eps: f64) -> f64 {
    let mut g = Vector3::zeros();
    for axis in 0..3 {
        let mut hi = *p;
        let mut lo = *p;
        hi[axis] += eps;
        lo[axis] -= eps;
        g[axis] = (sdf_eval(scene, &hi) - sdf_eval(scene, &lo)) / (2.0 * eps);
    }
    g.norm()
}

#[test]
fn sdf_gradients_have_unit_magnitude_outside() {
    let eps = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);

    let plane = SdfScene::new(vec![SdfShape::new(
        SdfGeometry::Plane {
            normal: Vector3::new(1.0, 2.0, -2.0).normalize(),
            offset: 0.01,
        },
        Vector3::zeros(),
    )
    .unwrap()]);
    let sphere = SdfScene::new(vec![SdfShape::new(
        SdfGeometry::Sphere { center: Vector3::new(0.01, -0.02, 0.03), radius: 0.05 },
        Vector3::zeros(),
    )
    .unwrap()]);
    let half_extents = Vector3::new(0.03, 0.02, 0.04);
    let box_scene = SdfScene::new(vec![SdfShape::new(
        SdfGeometry::Box {
            center: Vector3::new(0.005, 0.005, -0.01),
            half_extents,
            rotation: Matrix3::identity(),
        },
        Vector3::zeros(),
    )
    .unwrap()]);

    let mut sample = |scene: &SdfScene, accept: &dyn Fn(&Vector3<f64>) -> bool| {
        let mut checked = 0;
        while checked < 1000 {
            let p = Vector3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            );
            // Exterior points only, clear of the surface itself.
            if sdf_eval(scene, &p) < 1e-3 || !accept(&p) {
                continue;
            }
            let mag = gradient_magnitude(scene, &p, eps);
            assert!(
                (mag - 1.0).abs() < 1e-4,
                "gradient magnitude {mag} at {p:?}"
            );
            checked += 1;
        }
    };

    sample(&plane, &|_| true);
    // Sphere gradients are smooth everywhere except the center.
    sample(&sphere, &|p| (p - Vector3::new(0.01, -0.02, 0.03)).norm() > 1e-3);
    // Box: stay clear of the nearest-feature boundary planes where the
    // gradient direction switches.
    sample(&box_scene, &|p| {
        let local = p - Vector3::new(0.005, 0.005, -0.01);
        let q = local.abs() - half_extents;
        q.iter().all(|c| c.abs() > 1e-3)
    });
}

#[test]
fn stiffness_doubling_doubles_static_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let k_n = rng.random_range(1.0..5000.0);
        let depth = rng.random_range(1e-6..5e-3);
        let single = kelvin_voigt_force(&params(k_n, 0.0), depth, 0.0).unwrap();
        let double = kelvin_voigt_force(&params(2.0 * k_n, 0.0), depth, 0.0).unwrap();
        assert_eq!(double.to_bits(), (2.0 * single).to_bits());
    }
}

proptest! {
    #[test]
    fn zero_depth_means_zero_force(
        k_n in 0.0..1e5f64,
        k_d in 0.0..1e3f64,
        rate in -10.0..10.0f64,
    ) {
        prop_assert_eq!(kelvin_voigt_force(&params(k_n, k_d), 0.0, rate).unwrap(), 0.0);
    }

    #[test]
    fn force_is_never_negative(
        k_n in 0.0..1e5f64,
        k_d in 0.0..1e3f64,
        depth in 0.0..1e-2f64,
        rate in -10.0..10.0f64,
    ) {
        let f = kelvin_voigt_force(&params(k_n, k_d), depth, rate).unwrap();
        prop_assert!(f >= 0.0);
    }

    #[test]
    fn force_is_positively_homogeneous_where_unclamped(
        k_n in 1.0..1e4f64,
        k_d in 0.0..1e2f64,
        depth in 1e-6..1e-2f64,
        rate in -1.0..1.0f64,
        alpha in 0.01..100.0f64,
    ) {
        let p = params(k_n, k_d);
        prop_assume!(k_n * depth + k_d * rate >= 0.0);
        let base = kelvin_voigt_force(&p, depth, rate).unwrap();
        let scaled = kelvin_voigt_force(&p, alpha * depth, alpha * rate).unwrap();
        let expected = alpha * base;
        prop_assert!(
            (scaled - expected).abs() <= 1e-12 * expected.abs().max(1.0),
            "f(a d, a r) = {scaled}, a f(d, r) = {expected}"
        );
    }
}

#[test]
fn contact_sample_has_no_tangential_channel() {
    // Exhaustive destructuring: adding a shear/tangential field to the
    // sample type would break this compile-time.
    let TaxelContactSample { depth, depth_rate, force_n } = TaxelContactSample::ZERO;
    assert_eq!((depth, depth_rate, force_n), (0.0, 0.0, 0.0));
}

#[test]
fn step_is_bitwise_reproducible() {
    let reg = ConfigRegistry::standard();
    let pad = PadGeometry::at_identity(reg.get(2).unwrap().clone());
    let p = params(800.0, 4.0);
    let build = || {
        SdfScene::new(vec![SdfShape::new(
            SdfGeometry::Box {
                center: Vector3::new(0.0, 0.0, 0.0115),
                half_extents: Vector3::new(0.01, 0.01, 0.01),
                rotation: Matrix3::identity(),
            },
            Vector3::new(0.003, 0.0, -0.002),
        )
        .unwrap()])
    };

    let run = |mut scene: SdfScene| {
        let mut prev: Option<Vec<f64>> = None;
        let mut all = Vec::new();
        for _ in 0..40 {
            let samples = step(&mut scene, &pad, &p, 0.01, prev.as_deref()).unwrap();
            prev = Some(sample_depths(&samples));
            all.push(samples);
        }
        all
    };

    let a = run(build());
    let b = run(build());
    for (sa, sb) in a.iter().flatten().zip(b.iter().flatten()) {
        assert_eq!(sa.depth.to_bits(), sb.depth.to_bits());
        assert_eq!(sa.depth_rate.to_bits(), sb.depth_rate.to_bits());
        assert_eq!(sa.force_n.to_bits(), sb.force_n.to_bits());
    }
}
