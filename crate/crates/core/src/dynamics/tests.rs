use super::*;
use crate::fixtures::{floating_chain, free_capsule, point_mass_pendulum, random_state, standard_humanoid};
use nalgebra::{DMatrix, DVector, Matrix4, Quaternion, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

fn no_contact(body: BodySpec) -> Simulator {
    let cfg = PhysicsConfig {
        contact_links: Some(vec![]),
        ..PhysicsConfig::default()
    };
    Simulator::new(body, cfg, WorldGeometry::default()).unwrap()
}

fn dense(h: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, h)
}

// Homogeneous link-to-world transforms built by straight matrix products.
fn matrix_chain(body: &BodySpec, q: &[f64]) -> Vec<Matrix4<f64>> {
    let mut out: Vec<Matrix4<f64>> = Vec::new();
    for l in &body.links {
        let off = l.joint.offset;
        let trans = |x: f64, y: f64, z: f64| Matrix4::new_translation(&Vector3::new(x, y, z));
        let rot = |w: f64, x: f64, y: f64, z: f64| {
            UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)).to_homogeneous()
        };
        let i = l.q_index;
        let local = match l.joint.kind {
            JointKind::Floating => trans(q[i] + off.x, q[i + 1] + off.y, q[i + 2] + off.z) * rot(q[i + 3], q[i + 4], q[i + 5], q[i + 6]),
            JointKind::Spherical => trans(off.x, off.y, off.z) * rot(q[i], q[i + 1], q[i + 2], q[i + 3]),
            JointKind::Revolute(a) => {
                let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(a.x, a.y, a.z)), q[i]);
                trans(off.x, off.y, off.z) * r.to_homogeneous()
            }
            JointKind::Fixed => trans(off.x, off.y, off.z),
        };
        let t = match l.parent {
            None => local,
            Some(p) => out[p] * local,
        };
        out.push(t);
    }
    out
}

#[test]
fn zero_pose_links_at_rest_transforms() {
    let body = standard_humanoid();
    let q = body.neutral_q(Vec3::ZERO);
    let qd = vec![0.0; body.nv()];
    let kin = forward_kinematics(&body, &q, &qd);
    for i in 0..body.n_links() {
        let mut expect = Vec3::ZERO;
        let mut j = Some(i);
        while let Some(k) = j {
            expect += body.links[k].joint.offset;
            j = body.links[k].parent;
        }
        assert!((kin.position(i) - expect).norm() < 1e-15);
        assert!(kin.rotation(i).max_abs_diff(&crate::mathcore::Mat3::identity()) < 1e-15);
        assert!(kin.v[i].ang.norm() + kin.v[i].lin.norm() == 0.0);
    }
}

#[test]
fn base_translation_shifts_all_links() {
    let body = standard_humanoid();
    let mut r = rng();
    let (q, qd) = random_state(&body, &mut r, 0.0);
    let mut q2 = q.clone();
    q2[0] += 1.0;
    let k1 = forward_kinematics(&body, &q, &qd);
    let k2 = forward_kinematics(&body, &q2, &qd);
    for i in 0..body.n_links() {
        assert!((k2.position(i) - k1.position(i) - Vec3::c(1.0, 0.0, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn kinematics_match_matrix_chain() {
    let body = standard_humanoid();
    let mut r = rng();
    for _ in 0..20 {
        let (q, qd) = random_state(&body, &mut r, 1.0);
        let kin = forward_kinematics(&body, &q, &qd);
        let oracle = matrix_chain(&body, &q);
        for (i, t) in oracle.iter().enumerate() {
            let p = kin.position(i);
            assert!((p.x - t[(0, 3)]).abs() + (p.y - t[(1, 3)]).abs() + (p.z - t[(2, 3)]).abs() < 1e-10);
            let rm = kin.rotation(i);
            for a in 0..3 {
                for b in 0..3 {
                    assert!((rm.m[a][b] - t[(a, b)]).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn link_velocities_match_finite_differences() {
    let body = standard_humanoid();
    let mut r = rng();
    let (q, qd) = random_state(&body, &mut r, 1.0);
    let kin = forward_kinematics(&body, &q, &qd);
    let h = 1e-6;
    let qp = integrate_positions(&body, &q, &qd, h);
    let qm = integrate_positions(&body, &q, &qd, -h);
    let kp = forward_kinematics(&body, &qp, &qd);
    let km = forward_kinematics(&body, &qm, &qd);
    for i in 0..body.n_links() {
        let local = Vec3::c(0.05, -0.1, 0.02);
        let fd = (kp.point_world(i, &local) - km.point_world(i, &local)).scale(0.5 / h);
        let v = kin.point_velocity(i, &local);
        assert!((fd - v).norm() < 1e-6, "link {i}: {:?} vs {:?}", fd, v);
    }
}

#[test]
fn single_floating_body_mass_matrix() {
    let body = free_capsule(2.0, 0.1, 0.2);
    let mut r = rng();
    let (q, qd) = random_state(&body, &mut r, 0.0);
    let kin = forward_kinematics(&body, &q, &qd);
    let h = crba_mass_matrix(&body, &kin);
    let inertia = body.links[0].inertia.inertia;
    for a in 0..3 {
        for b in 0..3 {
            let e = if a == b { 2.0 } else { 0.0 };
            assert!((h[a * 6 + b] - e).abs() < 1e-12);
            assert!((h[(a + 3) * 6 + b + 3] - inertia.m[a][b]).abs() < 1e-12);
            assert!(h[a * 6 + b + 3].abs() < 1e-12);
        }
    }
}

fn rnea_columns(body: &BodySpec, q: &[f64]) -> DMatrix<f64> {
    let nv = body.nv();
    let zero = vec![0.0; nv];
    let kin = forward_kinematics(body, q, &zero);
    let mut m = DMatrix::zeros(nv, nv);
    for j in 0..nv {
        let mut e = vec![0.0; nv];
        e[j] = 1.0;
        let col = inverse_dynamics(body, &kin, &e, &Vec3::ZERO, &[]);
        for i in 0..nv {
            m[(i, j)] = col[i];
        }
    }
    m
}

#[test]
fn mass_matrix_matches_unit_acceleration_columns() {
    let mut r = rng();
    for body in [floating_chain(3), standard_humanoid()] {
        for _ in 0..5 {
            let (q, qd) = random_state(&body, &mut r, 0.0);
            let kin = forward_kinematics(&body, &q, &qd);
            let nv = body.nv();
            let h = dense(&crba_mass_matrix(&body, &kin), nv);
            let oracle = rnea_columns(&body, &q);
            assert!((&h - &oracle).amax() < 1e-10);
            assert!((&h - h.transpose()).amax() < 1e-10);
            let eig = h.symmetric_eigen().eigenvalues;
            assert!(eig.min() > 0.0);
        }
    }
}

#[test]
fn bias_zero_without_motion_or_gravity() {
    let body = standard_humanoid();
    let mut r = rng();
    let (q, _) = random_state(&body, &mut r, 0.0);
    let qd = vec![0.0; body.nv()];
    let kin = forward_kinematics(&body, &q, &qd);
    let c = bias_forces(&body, &kin, &Vec3::ZERO, &[]);
    assert!(c.iter().all(|x| x.abs() < 1e-15));
}

#[test]
fn horizontal_pendulum_gravity_torque() {
    let body = point_mass_pendulum(&[1.0], &[1.0]);
    // Rotate the rod to horizontal (+x).
    let q = vec![std::f64::consts::FRAC_PI_2];
    let kin = forward_kinematics(&body, &q, &[0.0]);
    let tip = kin.point_world(1, &Vec3::c(0.0, -1.0, 0.0));
    assert!((tip - Vec3::c(1.0, 0.0, 0.0)).norm() < 1e-12);
    let c = bias_forces(&body, &kin, &Vec3::c(0.0, -9.81, 0.0), &[]);
    assert!((c[0] - 9.81).abs() < 1e-12, "{}", c[0]);
}

#[test]
fn bias_matches_rnea_with_zero_acceleration_and_external_force() {
    let body = standard_humanoid();
    let mut r = rng();
    let (q, qd) = random_state(&body, &mut r, 1.0);
    let kin = forward_kinematics(&body, &q, &qd);
    let fext: Vec<_> = (0..body.n_links())
        .map(|i| SVec::new(Vec3::c(0.1 * i as f64, 0.0, -0.2), Vec3::c(1.0, -2.0, 0.5)))
        .collect();
    let g = Vec3::c(0.0, -9.81, 0.0);
    let c = bias_forces(&body, &kin, &g, &fext);
    // Generalized external force by the principle of virtual work: Σ Jᵢᵀ fᵢ.
    let c_noext = bias_forces(&body, &kin, &g, &[]);
    let nv = body.nv();
    let mut gen = vec![0.0; nv];
    for (i, f) in fext.iter().enumerate() {
        let mut j = Some(i);
        while let Some(k) = j {
            // columns of link k's joint seen from link i's frame
            let x_i_k = kin.x_world[i].compose(&kin.x_world[k].inverse());
            for (a, col) in kin.s[k].iter().enumerate() {
                gen[body.links[k].v_index + a] += x_i_k.apply_motion(col).dot(f);
            }
            j = body.links[k].parent;
        }
    }
    for d in 0..nv {
        assert!((c_noext[d] - gen[d] - c[d]).abs() < 1e-9, "dof {d}");
    }
}

use crate::mathcore::SVec;

#[test]
fn aba_matches_dense_solve() {
    let mut r = rng();
    for body in [floating_chain(4), standard_humanoid()] {
        for _ in 0..10 {
            let (q, qd) = random_state(&body, &mut r, 1.0);
            let nv = body.nv();
            let tau: Vec<f64> = (0..nv).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
            let kin = forward_kinematics(&body, &q, &qd);
            let g = Vec3::c(0.0, -9.81, 0.0);
            let a = aba_forward_dynamics(&body, &kin, &tau, &g, &[]);
            let h = dense(&crba_mass_matrix(&body, &kin), nv);
            let c = bias_forces(&body, &kin, &g, &[]);
            let rhs = DVector::from_iterator(nv, tau.iter().zip(&c).map(|(t, c)| t - c));
            let x = h.clone().cholesky().unwrap().solve(&rhs);
            for i in 0..nv {
                assert!((a[i] - x[i]).abs() < 1e-8, "dof {i}: {} vs {}", a[i], x[i]);
            }
            let ltl = LtlFactor::new(crba_mass_matrix(&body, &kin), &dof_parents(&body)).solve(rhs.as_slice());
            for i in 0..nv {
                assert!((ltl[i] - x[i]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn free_body_accelerations() {
    let body = free_capsule(3.0, 0.05, 0.2);
    let mut r = rng();
    let (q, _) = random_state(&body, &mut r, 0.0);
    let qd = vec![0.0; 6];
    let kin = forward_kinematics(&body, &q, &qd);
    let a = aba_forward_dynamics(&body, &kin, &[0.0; 6], &Vec3::ZERO, &[]);
    assert!(a.iter().all(|x| x.abs() < 1e-14));
    let a = aba_forward_dynamics(&body, &kin, &[0.0; 6], &Vec3::c(0.0, -9.81, 0.0), &[]);
    let expect = [0.0, -9.81, 0.0, 0.0, 0.0, 0.0];
    for k in 0..6 {
        assert!((a[k] - expect[k]).abs() < 1e-12);
    }
}

#[test]
fn free_fall_one_step_semi_implicit() {
    let sim = no_contact(free_capsule(1.0, 0.05, 0.1));
    let mut q = sim.body.neutral_q(Vec3::c(0.0, 2.0, 0.0));
    q[3] = 1.0;
    let st = SimState::at_rest(q, 6);
    let next = sim.step(&st, &[0.0; 6], &mut StepDiagnostics::default());
    assert!((next.qd[1] + 9.81e-3).abs() < 1e-15);
    assert!((next.q[1] - 2.0 + 9.81e-6).abs() < 1e-15);
}

#[test]
fn sphere_resting_on_plane_balances_gravity() {
    let body = free_capsule(2.0, 0.1, 0.0);
    let sim = Simulator::new(body, PhysicsConfig::default(), WorldGeometry::default()).unwrap();
    let q = sim.body.neutral_q(Vec3::c(0.0, 0.1, 0.0));
    let st = SimState::at_rest(q, 6);
    let kin = forward_kinematics(&sim.body, &st.q, &st.qd);
    let qdd = sim.unconstrained_acceleration(&kin, &[0.0; 6]);
    let mut qd: Vec<f64> = qdd.iter().map(|a| a * sim.cfg.dt).collect();
    let fac = LtlFactor::new(crba_mass_matrix(&sim.body, &kin), sim.dof_parents());
    let rows = sim.contact_rows(&kin, &fac);
    assert_eq!(rows.len(), 2);
    let p = solve_contact_lcp(&rows, &mut qd, 1, &mut SolverDiagnostics::default());
    let total: f64 = p.iter().map(|x| x[0]).sum();
    assert!((total - 2.0 * 9.81 * 1e-3).abs() < 1e-12);
    assert!(qd[1].abs() < 1e-12);
}

#[test]
fn inactive_contacts_get_no_impulse() {
    let sim = Simulator::new(free_capsule(1.0, 0.05, 0.1), PhysicsConfig::default(), WorldGeometry::default()).unwrap();
    let q = sim.body.neutral_q(Vec3::c(0.0, 1.0, 0.0));
    let st = SimState { q, qd: vec![0.0, -1.0, 0.0, 0.0, 0.0, 0.0] };
    let kin = forward_kinematics(&sim.body, &st.q, &st.qd);
    let fac = LtlFactor::new(crba_mass_matrix(&sim.body, &kin), sim.dof_parents());
    let rows = sim.contact_rows(&kin, &fac);
    assert!((rows[0].distance - 0.95).abs() < 1e-12);
    let mut qd = st.qd.clone();
    let p = solve_contact_lcp(&rows, &mut qd, 3, &mut SolverDiagnostics::default());
    assert!(p.iter().all(|x| x == &[0.0; 3]));
}

#[test]
fn touching_capsule_has_zero_distance() {
    let sim = Simulator::new(free_capsule(1.0, 0.05, 0.1), PhysicsConfig::default(), WorldGeometry::default()).unwrap();
    let q = sim.body.neutral_q(Vec3::c(0.0, 0.05, 0.0));
    let kin = forward_kinematics(&sim.body, &q, &[0.0; 6]);
    let c = detect_contacts(&sim.body, &kin, &sim.world, sim.candidates());
    assert!(c.iter().all(|c| c.distance.abs() < 1e-15));
}

#[test]
fn box_contact_matches_sampled_distance() {
    let world = WorldGeometry {
        boxes: vec![BoxObstacle {
            center: Vec3::c(0.3, 0.2, -0.1),
            rotation: crate::fixtures::rot_x(0.3),
            half_extents: Vec3::c(0.4, 0.2, 0.3),
        }],
        ..WorldGeometry::default()
    };
    let body = free_capsule(1.0, 0.05, 0.25);
    let sim = Simulator::new(body, PhysicsConfig::default(), world.clone()).unwrap();
    let mut r = rng();
    for _ in 0..10 {
        let (mut q, qd) = random_state(&sim.body, &mut r, 0.0);
        q[1] = 0.5 + 0.2 * (q[1] - 1.0);
        let kin = forward_kinematics(&sim.body, &q, &qd);
        let c = detect_contacts(&sim.body, &kin, &world, sim.candidates());
        let bc = c.iter().find(|c| matches!(c.source, CandidateSource::Box { .. })).unwrap();
        // brute force: sample the segment densely, exact box distance per sample
        let cap = &sim.body.capsules[0];
        let bx = &world.boxes[0];
        let rt = bx.rotation.transpose();
        let mut best = f64::INFINITY;
        let n = 200_000;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let pl = cap.a.scale(1.0 - t) + cap.b.scale(t);
            let pw = kin.point_world(0, &pl);
            let pb = rt.mul_vec(&(pw - bx.center));
            best = best.min(box_sdf(&pb, &bx.half_extents).0);
        }
        assert!((bc.distance - (best - cap.radius)).abs() < 1e-9, "{} vs {}", bc.distance, best - cap.radius);
        assert!((bc.normal.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn box_sdf_face_cases() {
    let h = Vec3::c(1.0, 2.0, 3.0);
    let (d, n) = box_sdf(&Vec3::c(1.5, 0.0, 0.0), &h);
    assert!((d - 0.5).abs() < 1e-15 && (n - Vec3::c(1.0, 0.0, 0.0)).norm() < 1e-15);
    let (d, n) = box_sdf(&Vec3::c(0.0, -1.5, 0.0), &h);
    assert!((d + 0.5).abs() < 1e-15 && (n - Vec3::c(0.0, -1.0, 0.0)).norm() < 1e-15);
    let (d, _) = box_sdf(&Vec3::c(2.0, 3.0, 3.0), &h);
    assert!((d - 2f64.sqrt()).abs() < 1e-15);
}

fn momentum(sim: &Simulator, st: &SimState<f64>) -> (Vec3<f64>, Vec3<f64>) {
    let kin = forward_kinematics(&sim.body, &st.q, &st.qd);
    let mut p = Vec3::ZERO;
    let mut l = Vec3::ZERO;
    for (i, link) in sim.body.links.iter().enumerate() {
        let m6 = link.inertia.to_mat6();
        let hb = crate::mathcore::Mat6::<f64>::mul_vec(&m6, &kin.v[i]);
        // world-frame spatial momentum about the world origin
        let hw = kin.x_world[i].inv_apply_force(&hb);
        l += hw.ang;
        p += hw.lin;
    }
    (p, l)
}

#[test]
fn free_floating_momentum_is_conserved() {
    let cfg = PhysicsConfig {
        gravity: Vec3::ZERO,
        contact_links: Some(vec![]),
        ..PhysicsConfig::default()
    };
    let sim = Simulator::new(standard_humanoid(), cfg, WorldGeometry::default()).unwrap();
    let mut r = rng();
    let (q, qd) = random_state(&sim.body, &mut r, 0.3);
    let mut st = SimState { q, qd };
    let (p0, l0) = momentum(&sim, &st);
    let tau = vec![0.0; sim.body.nv()];
    let mut diag = StepDiagnostics::default();
    for _ in 0..1000 {
        st = sim.step_checked(&st, &tau, &mut diag).unwrap();
    }
    let (p1, l1) = momentum(&sim, &st);
    let dp = (p1 - p0).norm();
    let dl = (l1 - l0).norm();
    assert!(dp <= 1e-6 * p0.norm().max(1.0), "linear drift {dp}");
    assert!(dl <= 1e-6 * l0.norm().max(1.0), "angular drift {dl}");
}

#[test]
fn steps_are_deterministic() {
    let sim = Simulator::new(standard_humanoid(), PhysicsConfig::default(), WorldGeometry::default()).unwrap();
    let mut r = rng();
    let (q, qd) = random_state(&sim.body, &mut r, 0.5);
    let mut a = SimState { q: q.clone(), qd: qd.clone() };
    let mut b = SimState { q, qd };
    let tau = vec![0.0; sim.body.nv()];
    let mut d = StepDiagnostics::default();
    for _ in 0..50 {
        a = sim.step(&a, &tau, &mut d);
        b = sim.step(&b, &tau, &mut d);
    }
    assert_eq!(a, b);
}
