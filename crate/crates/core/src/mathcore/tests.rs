use super::*;
use proptest::prelude::*;

type M6 = nalgebra::SMatrix<f64, 6, 6>;
type V6 = nalgebra::SVector<f64, 6>;

fn dense_motion(x: &Xform<f64>) -> M6 {
    // [[E, 0], [-E r×, E]]
    let e = nalgebra::Matrix3::from_fn(|i, j| x.e.m[i][j]);
    let rx = Mat3::skew(&x.r);
    let rx = nalgebra::Matrix3::from_fn(|i, j| rx.m[i][j]);
    let mut m = M6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&e);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&e);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-e * rx));
    m
}

fn dense6(m: &Mat6<f64>) -> M6 {
    M6::from_fn(|i, j| m.m[i][j])
}

fn v6(s: &SVec<f64>) -> V6 {
    V6::from_row_slice(&s.to_array())
}

fn rot_strategy() -> impl Strategy<Value = Vec3<f64>> {
    (-2.5f64..2.5, -2.5f64..2.5, -2.5f64..2.5).prop_map(|(x, y, z)| Vec3::c(x, y, z))
}

fn vec_strategy() -> impl Strategy<Value = Vec3<f64>> {
    (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(x, y, z)| Vec3::c(x, y, z))
}

fn xform_strategy() -> impl Strategy<Value = Xform<f64>> {
    (rot_strategy(), vec_strategy()).prop_map(|(w, r)| Xform::new(Quat::exp(&w).to_mat(), r))
}

fn svec_strategy() -> impl Strategy<Value = SVec<f64>> {
    (vec_strategy(), vec_strategy()).prop_map(|(a, l)| SVec::new(a, l))
}

fn homogeneous(x: &Xform<f64>) -> nalgebra::Matrix4<f64> {
    // Maps B coordinates to A coordinates.
    let mut h = nalgebra::Matrix4::identity();
    let et = x.e.transpose();
    for i in 0..3 {
        for j in 0..3 {
            h[(i, j)] = et.m[i][j];
        }
        h[(i, 3)] = x.r.get(i);
    }
    h
}

#[test]
fn skew_matches_cross() {
    let a = Vec3::c(0.3, -1.2, 2.0);
    let b = Vec3::c(-0.7, 0.4, 1.1);
    let c = Mat3::skew(&a).mul_vec(&b);
    assert!((c - a.cross(&b)).norm() < 1e-15);
}

#[test]
fn quaternion_matrix_matches_rotate() {
    let q = Quat::exp(&Vec3::c(0.4, -0.9, 1.3));
    let v = Vec3::c(1.0, 2.0, -0.5);
    assert!((q.to_mat().mul_vec(&v) - q.rotate(&v)).norm() < 1e-14);
    let q2 = Quat::from_mat(&q.to_mat());
    assert!((q2.dot(&q).abs() - 1.0).abs() < 1e-14);
}

#[test]
fn axis_angle_about_z() {
    let q = Quat::from_axis_angle(&Vec3::c(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
    let v = q.rotate(&Vec3::c(1.0, 0.0, 0.0));
    assert!((v - Vec3::c(0.0, 1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn exp_near_zero_is_smooth() {
    let q = Quat::exp(&Vec3::c(1e-7, 0.0, 0.0));
    assert!((q.x - 0.5e-7).abs() < 1e-20);
    let back = Quat::exp(&Vec3::c(0.0, 0.0, 0.0)).log();
    assert_eq!(back.norm(), 0.0);
}

#[test]
fn quaternion_gradient_matches_finite_difference() {
    let f = |x: &[f64]| {
        let q = Quat::exp(&Vec3::new(x[0], x[1], x[2]));
        let r = Quat::exp(&Vec3::new(x[3], x[4], x[5]));
        q.conj().mul(&r).log().norm_sq() + q.rotate(&Vec3::c(0.2, 0.5, -1.0)).y
    };
    let x = [0.3, -0.2, 0.9, -0.4, 0.1, 0.5];
    let (v, g) = gradient(
        |x| {
            let q = Quat::exp(&Vec3::new(x[0], x[1], x[2]));
            let r = Quat::exp(&Vec3::new(x[3], x[4], x[5]));
            q.conj().mul(&r).log().norm_sq() + q.rotate(&Vec3::from_f64(Vec3::c(0.2, 0.5, -1.0))).y
        },
        &x,
    )
    .unwrap();
    assert!((v - f(&x)).abs() < 1e-14);
    let fd = finite_difference_gradient(f, &x, 1e-6);
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn gradient_through_exp_at_origin_is_finite() {
    let (_, g) = gradient(|x| Quat::exp(&Vec3::new(x[0], x[1], x[2])).x, &[0.0, 0.0, 0.0]).unwrap();
    assert!((g[0] - 0.5).abs() < 1e-15);
    assert_eq!(g[1], 0.0);
}

#[test]
fn slerp_endpoints_and_midpoint() {
    let a = Quat::exp(&Vec3::c(0.0, 0.0, 0.0));
    let b = Quat::exp(&Vec3::c(0.0, 1.0, 0.0));
    assert!((a.slerp(&b, 0.0).dot(&a) - 1.0).abs() < 1e-14);
    assert!((a.slerp(&b, 1.0).dot(&b) - 1.0).abs() < 1e-14);
    let m = a.slerp(&b, 0.5).log();
    assert!((m - Vec3::c(0.0, 0.5, 0.0)).norm() < 1e-12);
}

#[test]
fn combine_inertias_matches_dense_sum() {
    let a = SpatialInertia::new(2.0, Vec3::c(0.1, 0.0, 0.2), Mat3::diag(Vec3::c(0.1, 0.2, 0.15)));
    let b = SpatialInertia::new(1.0, Vec3::c(-0.3, 0.4, 0.0), Mat3::diag(Vec3::c(0.05, 0.02, 0.04)));
    let c = a.combine(&b);
    let d = dense6(&c.to_mat6()) - dense6(&a.to_mat6()) - dense6(&b.to_mat6());
    assert!(d.amax() < 1e-14);
    assert!(c.is_physical(1e-12));
}

#[test]
fn triangle_inequality_rejects_impossible_inertia() {
    let bad = SpatialInertia::new(1.0, Vec3::ZERO, Mat3::diag(Vec3::c(0.1, 0.1, 0.5)));
    assert!(!bad.is_physical(1e-12));
}

proptest! {
    #[test]
    fn compose_matches_homogeneous(a in xform_strategy(), b in xform_strategy()) {
        // a = C_X_B, b = B_X_A; homogeneous maps go the other way.
        let c = a.compose(&b);
        let h = homogeneous(&b) * homogeneous(&a);
        let hc = homogeneous(&c);
        prop_assert!((h - hc).amax() < 1e-12);
        let dm = dense_motion(&a) * dense_motion(&b) - dense_motion(&c);
        prop_assert!(dm.amax() < 1e-12);
    }

    #[test]
    fn inverse_is_identity(x in xform_strategy(), v in svec_strategy()) {
        let id = x.compose(&x.inverse());
        prop_assert!(id.e.max_abs_diff(&Mat3::identity()) < 1e-12);
        prop_assert!(id.r.norm() < 1e-12);
        let back = x.inv_apply_motion(&x.apply_motion(&v));
        prop_assert!((back - v).ang.norm() + (back - v).lin.norm() < 1e-12);
        let backf = x.inv_apply_force(&x.apply_force(&v));
        prop_assert!((backf - v).ang.norm() + (backf - v).lin.norm() < 1e-12);
    }

    #[test]
    fn motion_and_force_transforms_match_dense(x in xform_strategy(), v in svec_strategy()) {
        let m = dense_motion(&x);
        prop_assert!((m * v6(&v) - v6(&x.apply_motion(&v))).amax() < 1e-12);
        // Force transform is the inverse transpose of the motion transform.
        let f = m.try_inverse().unwrap().transpose();
        prop_assert!((f * v6(&v) - v6(&x.apply_force(&v))).amax() < 1e-11);
    }

    #[test]
    fn power_is_invariant(x in xform_strategy(), v in svec_strategy(), f in svec_strategy()) {
        let p0 = v.dot(&f);
        let p1 = x.apply_motion(&v).dot(&x.apply_force(&f));
        prop_assert!((p0 - p1).abs() < 1e-11);
    }

    #[test]
    fn inertia_to_parent_is_congruence(x in xform_strategy(), m in 0.1f64..5.0, c in vec_strategy(),
                                       d in (0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0)) {
        let i = SpatialInertia::new(m, c, Mat3::diag(Vec3::c(d.0, d.1, d.2))).to_mat6();
        let xm = dense_motion(&x);
        let expect = xm.transpose() * dense6(&i) * xm;
        let got = dense6(&i.to_parent(&x));
        prop_assert!((expect - got).amax() < 1e-10 * (1.0 + expect.amax()));
    }

    #[test]
    fn exp_log_roundtrip(w in rot_strategy()) {
        prop_assume!(w.norm() < std::f64::consts::PI - 1e-6);
        let q = Quat::exp(&w);
        prop_assert!((q.norm_sq() - 1.0).abs() < 1e-14);
        prop_assert!((q.log() - w).norm() < 1e-10);
        prop_assert!((q.neg().log() - w).norm() < 1e-10);
    }

    #[test]
    fn cross_force_is_dual_of_cross_motion(v in svec_strategy(), m in svec_strategy(), f in svec_strategy()) {
        let lhs = v.cross_force(&f).dot(&m);
        let rhs = -f.dot(&v.cross_motion(&m));
        prop_assert!((lhs - rhs).abs() < 1e-11);
        let vv = v.cross_motion(&v);
        prop_assert!(vv.ang.norm() + vv.lin.norm() < 1e-12);
    }
}
