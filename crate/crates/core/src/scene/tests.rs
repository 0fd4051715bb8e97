use super::*;
use crate::fixtures::{standard_humanoid, standing_q};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn random_transform(seed: u64) -> GroundTransform {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // A camera looking roughly level at the subject, rolled and pitched a little.
    let tilt = Quat::exp(&Vec3::c(r.random_range(-0.4..0.4), r.random_range(-3.0..3.0), r.random_range(-0.3..0.3)));
    let rot = tilt.to_mat().mul(&Quat::exp(&Vec3::c(std::f64::consts::PI, 0.0, 0.0)).to_mat());
    GroundTransform { rotation: rot.m, translation: [r.random_range(-1.0..1.0), r.random_range(0.8..2.0), r.random_range(2.0..5.0)] }
}

fn inverse_apply(t: &GroundTransform, p: &[f64; 3]) -> [f64; 3] {
    let d = [p[0] - t.translation[0], p[1] - t.translation[1], p[2] - t.translation[2]];
    let r = &t.rotation;
    [0, 1, 2].map(|j| r[0][j] * d[0] + r[1][j] * d[1] + r[2][j] * d[2])
}

/// World-frame clouds of standing poses with different upper-body postures.
fn standing_clouds(n: usize) -> Vec<Vec<[f64; 3]>> {
    let body = standard_humanoid();
    let base = standing_q(&body);
    (0..n)
        .map(|f| {
            let mut q = base.clone();
            q[0] = 0.1 * f as f64;
            q[2] = -0.05 * f as f64;
            for name in ["left_shoulder", "right_elbow", "neck"] {
                let l = &body.links[body.joint_id(name).unwrap()];
                let a = 0.3 * (f as f64 + 1.0);
                q[l.q_index..l.q_index + 4].copy_from_slice(&Quat::exp(&Vec3::c(a, 0.1, -0.2)).to_array());
            }
            body_surface_samples(&body, &q, 5)
        })
        .collect()
}

#[test]
fn samples_of_standing_pose_touch_ground() {
    let c = &standing_clouds(1)[0];
    let mut h: Vec<f64> = c.iter().map(|p| p[1]).collect();
    h.sort_by(f64::total_cmp);
    assert!(h[0].abs() < 1e-9);
    assert!(h[19].abs() < 1e-9, "20 sole samples rest on the ground: {:?}", &h[..24]);
}

#[test]
fn identity_is_global_minimum_on_grounded_clouds() {
    let clouds = standing_clouds(3);
    let cfg = GroundConfig::default();
    assert!(ground_loss(&clouds, &GroundTransform::identity(), &cfg) < 1e-18);
    let e = estimate_ground_transform(&clouds, &cfg).unwrap();
    assert!(e.loss < 1e-12);
    let up = e.transform.rotation[1];
    assert!((up[1] - 1.0).abs() < 1e-6, "{up:?}");
    assert!(e.transform.translation[1].abs() < 1e-6);
}

#[test]
fn recovers_known_transform_up_to_gauge() {
    let world = standing_clouds(5);
    let cfg = GroundConfig::default();
    for seed in 0..4 {
        let truth = random_transform(seed);
        let cam: Vec<Vec<[f64; 3]>> = world.iter().map(|c| c.iter().map(|p| inverse_apply(&truth, p)).collect()).collect();
        let e = estimate_ground_transform(&cam, &cfg).unwrap();
        e.transform.validate().unwrap();
        // Heights are the observable part: the world up row and the camera height.
        let (a, b) = (e.transform.rotation[1], truth.rotation[1]);
        let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        assert!(cos.clamp(-1.0, 1.0).acos().to_degrees() < 1.0, "seed {seed}: up rows {a:?} vs {b:?}");
        assert!((e.transform.translation[1] - truth.translation[1]).abs() < 0.01, "seed {seed}");
        for (c, w) in cam.iter().zip(&world) {
            for (p, q) in c.iter().zip(w) {
                assert!((e.transform.apply(p)[1] - q[1]).abs() < 0.01);
            }
            let low = c.iter().map(|p| e.transform.apply(p)[1]).fold(f64::INFINITY, f64::min);
            assert!(low > -0.02);
        }
        // Gauge: camera above the origin, looking along -z.
        assert_eq!(e.transform.translation[0], 0.0);
        assert_eq!(e.transform.translation[2], 0.0);
        assert!(e.transform.rotation[0][2].abs() < 1e-9 && e.transform.rotation[2][2] < 0.0);
    }
}

#[test]
fn airborne_frame_saturates() {
    let cfg = GroundConfig::default();
    let mut clouds = standing_clouds(2);
    let air: Vec<[f64; 3]> = clouds[1].iter().map(|p| [p[0], p[1] + 0.5, p[2]]).collect();
    let only_air = vec![air.clone()];
    let id = GroundTransform::identity();
    let bound = cfg.k as f64 * cfg.delta * cfg.delta;
    assert!((ground_loss(&only_air, &id, &cfg) - bound).abs() < 1e-12);
    let mut nudged = id;
    nudged.translation[1] = 1e-4;
    nudged.rotation = Quat::exp(&Vec3::c(1e-4, 0.0, 2e-4)).to_mat().m;
    assert_eq!(ground_loss(&only_air, &nudged, &cfg), ground_loss(&only_air, &id, &cfg));
    clouds[1] = air;
    assert!((ground_loss(&clouds, &id, &cfg) - bound).abs() < 1e-12);
}

#[test]
fn camera_round_trip() {
    let t = random_transform(11);
    let cam = t.camera(CameraIntrinsics { fx: 900.0, fy: 900.0, cx: 320.0, cy: 240.0 });
    let p = [0.3, -0.2, 3.0];
    let w = t.apply(&p);
    let back = cam.world_to_camera(&Vec3::c(w[0], w[1], w[2]));
    assert!((back.x - p[0]).abs() < 1e-12 && (back.y - p[1]).abs() < 1e-12 && (back.z - p[2]).abs() < 1e-12);
    assert_eq!(GroundTransform::from_camera(&cam), t);
}

#[test]
fn degenerate_input_rejected() {
    let cfg = GroundConfig::default();
    let line: Vec<[f64; 3]> = (0..40).map(|k| [0.1 * k as f64, 0.2 * k as f64, 0.0]).collect();
    assert!(matches!(estimate_ground_transform(&[line], &cfg), Err(Error::Degenerate(_))));
    let few: Vec<[f64; 3]> = (0..10).map(|k| [k as f64, 0.0, (k * k) as f64]).collect();
    assert!(estimate_ground_transform(&[few], &cfg).is_err());
    assert!(estimate_ground_transform(&[], &cfg).is_err());
    let mut bad = GroundTransform::identity();
    bad.rotation[0][0] = -1.0;
    assert!(bad.validate().is_err());
}

proptest! {
    #[test]
    fn loss_invariant_to_point_order(seed in 0u64..1000) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cloud: Vec<[f64; 3]> = (0..60).map(|_| [r.random_range(-1.0..1.0), r.random_range(-0.3..1.0), r.random_range(-1.0..1.0)]).collect();
        let mut shuffled = cloud.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r.random_range(0..=i));
        }
        let t = random_transform(seed);
        let cfg = GroundConfig::default();
        prop_assert_eq!(ground_loss(&[cloud], &t, &cfg), ground_loss(&[shuffled], &t, &cfg));
    }

    #[test]
    fn frame_contribution_bounded(seed in 0u64..1000) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cloud: Vec<[f64; 3]> = (0..30).map(|_| [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)]).collect();
        let cfg = GroundConfig::default();
        let l = ground_loss(&[cloud], &random_transform(seed), &cfg);
        prop_assert!(l <= cfg.k as f64 * cfg.delta * cfg.delta + 1e-12);
    }
}
