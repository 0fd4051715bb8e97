//! Recursive dynamics over the kinematic tree: inverse dynamics, the joint-space
//! inertia matrix, articulated-body forward dynamics and the tree-sparse
//! `H = LᵀL` factorization.

use super::kinematics::{Kinematics, MotionCols};
use crate::body::BodySpec;
use crate::mathcore::{Mat6, Real, SVec, Vec3};

/// Spatial gravity acceleration seen by the root's parent (the world) with the
/// usual fictitious-acceleration trick.
fn base_accel<S: Real>(gravity: &Vec3<f64>) -> SVec<S> {
    SVec::new(Vec3::zero(), Vec3::from_f64(-*gravity))
}

fn inertia6<S: Real>(body: &BodySpec, i: usize) -> Mat6<S> {
    Mat6::from_f64(&body.links[i].inertia.to_mat6())
}

/// Recursive Newton-Euler: `τ = H q̈ + C(q, q̇, f_ext)`.
///
/// `f_ext` holds one spatial force per link in link coordinates (or is empty).
pub fn inverse_dynamics<S: Real>(
    body: &BodySpec,
    kin: &Kinematics<S>,
    qdd: &[S],
    gravity: &Vec3<f64>,
    f_ext: &[SVec<S>],
) -> Vec<S> {
    let n = body.n_links();
    let mut a = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for (i, l) in body.links.iter().enumerate() {
        let vi = l.v_index;
        let s = &kin.s[i];
        let ap = match l.parent {
            None => kin.x_parent[i].apply_motion(&base_accel(gravity)),
            Some(p) => kin.x_parent[i].apply_motion(&a[p]),
        };
        let ai = ap + s.mul(&qdd[vi..vi + s.n]) + kin.c[i];
        let inert = inertia6::<S>(body, i);
        let v = &kin.v[i];
        let mut fi = inert.mul_vec(&ai) + v.cross_force(&inert.mul_vec(v));
        if let Some(fe) = f_ext.get(i) {
            fi = fi - *fe;
        }
        a.push(ai);
        f.push(fi);
    }
    let mut tau = vec![S::zero(); body.nv()];
    for i in (0..n).rev() {
        let l = &body.links[i];
        for (k, col) in kin.s[i].iter().enumerate() {
            tau[l.v_index + k] = col.dot(&f[i]);
        }
        if let Some(p) = l.parent {
            let fp = kin.x_parent[i].inv_apply_force(&f[i]);
            f[p] += fp;
        }
    }
    for l in body.links.iter().filter(|l| l.joint.kind.is_actuated()) {
        for k in 0..l.joint.kind.nv() {
            tau[l.v_index + k] += qdd[l.v_index + k] * body.armature;
        }
    }
    tau
}

/// Joint-space bias force `C(q, q̇, f_ext)`.
pub fn bias_forces<S: Real>(body: &BodySpec, kin: &Kinematics<S>, gravity: &Vec3<f64>, f_ext: &[SVec<S>]) -> Vec<S> {
    let zero = vec![S::zero(); body.nv()];
    inverse_dynamics(body, kin, &zero, gravity, f_ext)
}

/// Dense joint-space inertia matrix by the composite-rigid-body algorithm,
/// row-major `nv × nv`, including joint armature.
pub fn crba_mass_matrix<S: Real>(body: &BodySpec, kin: &Kinematics<S>) -> Vec<S> {
    let n = body.n_links();
    let nv = body.nv();
    let mut ic: Vec<Mat6<S>> = (0..n).map(|i| inertia6(body, i)).collect();
    for i in (1..n).rev() {
        if let Some(p) = body.links[i].parent {
            let t = ic[i].to_parent(&kin.x_parent[i]);
            ic[p] = ic[p].add(&t);
        }
    }
    let mut h = vec![S::zero(); nv * nv];
    for i in 0..n {
        let li = &body.links[i];
        let s = &kin.s[i];
        let mut f: Vec<SVec<S>> = s.iter().map(|c| ic[i].mul_vec(c)).collect();
        for (a, fa) in f.iter().enumerate() {
            for (b, sb) in s.iter().enumerate() {
                h[(li.v_index + a) * nv + li.v_index + b] = fa.dot(sb);
            }
        }
        let mut j = i;
        while let Some(p) = body.links[j].parent {
            for fa in f.iter_mut() {
                *fa = kin.x_parent[j].inv_apply_force(fa);
            }
            j = p;
            let lj = &body.links[j];
            for (a, fa) in f.iter().enumerate() {
                for (b, sb) in kin.s[j].iter().enumerate() {
                    let val = fa.dot(sb);
                    h[(li.v_index + a) * nv + lj.v_index + b] = val;
                    h[(lj.v_index + b) * nv + li.v_index + a] = val;
                }
            }
        }
    }
    for l in body.links.iter().filter(|l| l.joint.kind.is_actuated()) {
        for k in 0..l.joint.kind.nv() {
            let d = l.v_index + k;
            h[d * nv + d] += S::cst(body.armature);
        }
    }
    h
}

/// Inverse of a small symmetric positive-definite matrix (n ≤ 6) by Cholesky.
fn spd_inverse<S: Real>(a: &[[S; 6]; 6], n: usize) -> [[S; 6]; 6] {
    let mut l = [[S::zero(); 6]; 6];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // inv = L⁻ᵀ L⁻¹, column by column
    let mut inv = [[S::zero(); 6]; 6];
    for c in 0..n {
        let mut y = [S::zero(); 6];
        for i in 0..n {
            let mut s = if i == c { S::one() } else { S::zero() };
            for k in 0..i {
                s -= l[i][k] * y[k];
            }
            y[i] = s / l[i][i];
        }
        let mut x = [S::zero(); 6];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k][i] * x[k];
            }
            x[i] = s / l[i][i];
        }
        for i in 0..n {
            inv[i][c] = x[i];
        }
    }
    inv
}

/// Articulated-body algorithm: unconstrained joint accelerations for torques `tau`.
pub fn aba_forward_dynamics<S: Real>(
    body: &BodySpec,
    kin: &Kinematics<S>,
    tau: &[S],
    gravity: &Vec3<f64>,
    f_ext: &[SVec<S>],
) -> Vec<S> {
    let n = body.n_links();
    let mut ia: Vec<Mat6<S>> = (0..n).map(|i| inertia6(body, i)).collect();
    let mut pa: Vec<SVec<S>> = (0..n)
        .map(|i| {
            let v = &kin.v[i];
            let mut p = v.cross_force(&ia[i].mul_vec(v));
            if let Some(fe) = f_ext.get(i) {
                p = p - *fe;
            }
            p
        })
        .collect();
    let mut u_cols: Vec<[SVec<S>; 6]> = vec![[SVec::zero(); 6]; n];
    let mut dinv: Vec<[[S; 6]; 6]> = vec![[[S::zero(); 6]; 6]; n];
    let mut u_vec: Vec<[S; 6]> = vec![[S::zero(); 6]; n];
    for i in (0..n).rev() {
        let l = &body.links[i];
        let s: &MotionCols<S> = &kin.s[i];
        let k = s.n;
        let arm = if l.joint.kind.is_actuated() { body.armature } else { 0.0 };
        let mut d = [[S::zero(); 6]; 6];
        for a in 0..k {
            u_cols[i][a] = ia[i].mul_vec(&s.cols[a]);
        }
        for a in 0..k {
            for b in 0..k {
                d[a][b] = s.cols[a].dot(&u_cols[i][b]);
            }
            d[a][a] += S::cst(arm);
            u_vec[i][a] = tau[l.v_index + a] - s.cols[a].dot(&pa[i]);
        }
        if k > 0 {
            dinv[i] = spd_inverse(&d, k);
        }
        if let Some(p) = l.parent {
            // Ia = IA - U D⁻¹ Uᵀ ; pa = pA + Ia c + U D⁻¹ u
            let mut udinv = [SVec::zero(); 6];
            for a in 0..k {
                let mut acc = SVec::zero();
                for b in 0..k {
                    acc += u_cols[i][b].scale(dinv[i][b][a]);
                }
                udinv[a] = acc;
            }
            let mut iai = ia[i];
            for a in 0..k {
                iai = iai.sub_outer(&udinv[a], &u_cols[i][a]);
            }
            let mut pai = pa[i] + iai.mul_vec(&kin.c[i]);
            for a in 0..k {
                pai += udinv[a].scale(u_vec[i][a]);
            }
            let xp = &kin.x_parent[i];
            let t = iai.to_parent(xp);
            ia[p] = ia[p].add(&t);
            let f = xp.inv_apply_force(&pai);
            pa[p] += f;
        }
    }
    let mut qdd = vec![S::zero(); body.nv()];
    let mut acc: Vec<SVec<S>> = Vec::with_capacity(n);
    for i in 0..n {
        let l = &body.links[i];
        let s = &kin.s[i];
        let k = s.n;
        let ap = match l.parent {
            None => kin.x_parent[i].apply_motion(&base_accel(gravity)),
            Some(p) => kin.x_parent[i].apply_motion(&acc[p]),
        } + kin.c[i];
        let mut rhs = [S::zero(); 6];
        for a in 0..k {
            rhs[a] = u_vec[i][a] - u_cols[i][a].dot(&ap);
        }
        let mut ai = ap;
        for a in 0..k {
            let mut x = S::zero();
            for b in 0..k {
                x += dinv[i][a][b] * rhs[b];
            }
            qdd[l.v_index + a] = x;
            ai += s.cols[a].scale(x);
        }
        acc.push(ai);
    }
    qdd
}

/// Parent DoF of every DoF in the kinematic tree (`usize::MAX` for none).
pub fn dof_parents(body: &BodySpec) -> Vec<usize> {
    let mut lam = vec![usize::MAX; body.nv()];
    for l in &body.links {
        let n = l.joint.kind.nv();
        if n == 0 {
            continue;
        }
        let mut prev = usize::MAX;
        let mut p = l.parent;
        while let Some(pi) = p {
            let pl = &body.links[pi];
            if pl.joint.kind.nv() > 0 {
                prev = pl.v_index + pl.joint.kind.nv() - 1;
                break;
            }
            p = pl.parent;
        }
        for k in 0..n {
            lam[l.v_index + k] = prev;
            prev = l.v_index + k;
        }
    }
    lam
}

/// Tree-sparse factorization `H = LᵀL` (no fill-in), stored in place of `H`'s
/// lower triangle.
#[derive(Clone, Debug)]
pub struct LtlFactor<S> {
    l: Vec<S>,
    n: usize,
    lam: Vec<usize>,
}

impl<S: Real> LtlFactor<S> {
    pub fn new(mut h: Vec<S>, lam: &[usize]) -> Self {
        let n = lam.len();
        const NONE: usize = usize::MAX;
        for k in (0..n).rev() {
            h[k * n + k] = h[k * n + k].sqrt();
            let mut i = lam[k];
            while i != NONE {
                h[k * n + i] = h[k * n + i] / h[k * n + k];
                i = lam[i];
            }
            let mut i = lam[k];
            while i != NONE {
                let mut j = i;
                while j != NONE {
                    let d = h[k * n + i] * h[k * n + j];
                    h[i * n + j] -= d;
                    j = lam[j];
                }
                i = lam[i];
            }
        }
        LtlFactor {
            l: h,
            n,
            lam: lam.to_vec(),
        }
    }

    /// Solves `H x = b`.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let (n, l, lam) = (self.n, &self.l, &self.lam);
        const NONE: usize = usize::MAX;
        let mut y = b.to_vec();
        // Lᵀ y = b
        for i in (0..n).rev() {
            y[i] = y[i] / l[i * n + i];
            let mut j = lam[i];
            while j != NONE {
                let d = l[i * n + j] * y[i];
                y[j] -= d;
                j = lam[j];
            }
        }
        // L x = y
        for i in 0..n {
            let mut j = lam[i];
            while j != NONE {
                let d = l[i * n + j] * y[j];
                y[i] -= d;
                j = lam[j];
            }
            y[i] = y[i] / l[i * n + i];
        }
        y
    }
}
