//! Contact candidates, contact Jacobians and the projected Gauss-Seidel impulse solver.

use super::kinematics::Kinematics;
use crate::body::BodySpec;
use crate::mathcore::{Mat3, Real, Vec3};

/// Static oriented box.
#[derive(Clone, Copy, Debug)]
pub struct BoxObstacle {
    pub center: Vec3<f64>,
    /// Box-to-world rotation.
    pub rotation: Mat3<f64>,
    pub half_extents: Vec3<f64>,
}

#[derive(Clone, Debug)]
pub struct WorldGeometry {
    pub plane_point: Vec3<f64>,
    pub plane_normal: Vec3<f64>,
    pub boxes: Vec<BoxObstacle>,
    pub friction: f64,
}

impl Default for WorldGeometry {
    fn default() -> Self {
        WorldGeometry {
            plane_point: Vec3::ZERO,
            plane_normal: Vec3::c(0.0, 1.0, 0.0),
            boxes: Vec::new(),
            friction: 0.8,
        }
    }
}

impl WorldGeometry {
    pub fn validate(&self) -> crate::Result<()> {
        if (self.plane_normal.norm() - 1.0).abs() > 1e-9 {
            return Err(crate::Error::InvalidConfig("ground normal must be unit length".into()));
        }
        for b in &self.boxes {
            if !(b.half_extents.x > 0.0 && b.half_extents.y > 0.0 && b.half_extents.z > 0.0) {
                return Err(crate::Error::InvalidConfig("box half extents must be positive".into()));
            }
        }
        if !(self.friction >= 0.0) {
            return Err(crate::Error::InvalidConfig("friction must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Where a candidate contact comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateSource {
    /// Capsule endpoint (`0` = a, `1` = b) against the ground plane.
    Plane { capsule: usize, endpoint: u8 },
    /// Closest point of a capsule's segment against a box.
    Box { capsule: usize, obstacle: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct ContactPoint<S> {
    pub link: usize,
    /// Surface point in world coordinates.
    pub point: Vec3<S>,
    /// Unit normal pointing from the environment toward the body.
    pub normal: Vec3<S>,
    /// Negative when penetrating.
    pub distance: S,
    pub mu: f64,
    pub source: CandidateSource,
}

/// Fixed candidate list: (link id, endpoint index) order for the plane, then boxes.
pub fn contact_candidates(body: &BodySpec, links: Option<&[usize]>, world: &WorldGeometry) -> Vec<CandidateSource> {
    let mut out = Vec::new();
    let allowed = |l: usize| links.is_none_or(|ls| ls.contains(&l));
    for (ci, c) in body.capsules.iter().enumerate() {
        if allowed(c.link) {
            out.push(CandidateSource::Plane { capsule: ci, endpoint: 0 });
            out.push(CandidateSource::Plane { capsule: ci, endpoint: 1 });
        }
    }
    for bi in 0..world.boxes.len() {
        for (ci, c) in body.capsules.iter().enumerate() {
            if allowed(c.link) {
                out.push(CandidateSource::Box { capsule: ci, obstacle: bi });
            }
        }
    }
    out
}

fn vabs<S: Real>(v: &Vec3<S>) -> Vec3<S> {
    Vec3::new(v.x.abs(), v.y.abs(), v.z.abs())
}

fn sign<S: Real>(x: S) -> S {
    S::select_le(S::zero(), x, S::one(), -S::one())
}

/// Signed distance from a point (box frame) to a box with half extents `h`,
/// and the outward unit normal at the closest surface point (box frame).
pub fn box_sdf<S: Real>(p: &Vec3<S>, h: &Vec3<f64>) -> (S, Vec3<S>) {
    let a = vabs(p);
    let q = Vec3::new(a.x - h.x, a.y - h.y, a.z - h.z);
    let z = S::zero();
    let qp = Vec3::new(q.x.max(z), q.y.max(z), q.z.max(z));
    let out_sq = qp.norm_sq();
    let outside = out_sq.safe_sqrt();
    let qmax = q.x.max(q.y).max(q.z);
    let inside = qmax.min(z);
    let d = outside + inside;
    // Outside: direction of the clamped offset. Inside: the face of least penetration.
    let s = Vec3::new(sign(p.x), sign(p.y), sign(p.z));
    let tiny = S::cst(1e-24);
    let inv = S::select_le(out_sq, tiny, S::one(), S::one() / outside);
    let n_out = Vec3::new(qp.x * s.x * inv, qp.y * s.y * inv, qp.z * s.z * inv);
    let is_x = S::select_le(q.y, q.x, S::select_le(q.z, q.x, S::one(), z), z);
    let is_y = S::select_le(is_x, z, S::select_le(q.z, q.y, S::one(), z), z);
    let is_z = S::one() - is_x - is_y;
    let n_in = Vec3::new(is_x * s.x, is_y * s.y, is_z * s.z);
    let n = Vec3::new(
        S::select_le(out_sq, tiny, n_in.x, n_out.x),
        S::select_le(out_sq, tiny, n_in.y, n_out.y),
        S::select_le(out_sq, tiny, n_in.z, n_out.z),
    );
    (d, n)
}

/// Minimizes the box distance along segment `a`–`b` (box frame) by golden-section search.
fn closest_on_segment<S: Real>(a: &Vec3<S>, b: &Vec3<S>, h: &Vec3<f64>) -> Vec3<S> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let at = |t: S| *a + (*b - *a).scale(t);
    let (mut lo, mut hi) = (S::zero(), S::one());
    let mut x1 = hi - (hi - lo) * g;
    let mut x2 = lo + (hi - lo) * g;
    let mut f1 = box_sdf(&at(x1), h).0;
    let mut f2 = box_sdf(&at(x2), h).0;
    for _ in 0..60 {
        // if f1 <= f2 the minimum lies in [lo, x2]
        let left = |t: S, f: S| S::select_le(f1, f2, t, f);
        let nlo = left(lo, x1);
        let nhi = left(x2, hi);
        lo = nlo;
        hi = nhi;
        let nx1 = hi - (hi - lo) * g;
        let nx2 = lo + (hi - lo) * g;
        x1 = nx1;
        x2 = nx2;
        f1 = box_sdf(&at(x1), h).0;
        f2 = box_sdf(&at(x2), h).0;
    }
    at((lo + hi) * 0.5)
}

/// Evaluates every candidate at the current poses.
pub fn detect_contacts<S: Real>(
    body: &BodySpec,
    kin: &Kinematics<S>,
    world: &WorldGeometry,
    candidates: &[CandidateSource],
) -> Vec<ContactPoint<S>> {
    let n = Vec3::<S>::from_f64(world.plane_normal);
    let p0 = Vec3::<S>::from_f64(world.plane_point);
    candidates
        .iter()
        .map(|&src| match src {
            CandidateSource::Plane { capsule, endpoint } => {
                let c = &body.capsules[capsule];
                let local = if endpoint == 0 { c.a } else { c.b };
                let center = kin.point_world(c.link, &Vec3::from_f64(local));
                let r = S::cst(c.radius);
                let dist = n.dot(&(center - p0)) - r;
                ContactPoint {
                    link: c.link,
                    point: center - n.scale(r),
                    normal: n,
                    distance: dist,
                    mu: world.friction,
                    source: src,
                }
            }
            CandidateSource::Box { capsule, obstacle } => {
                let c = &body.capsules[capsule];
                let bx = &world.boxes[obstacle];
                let rt = Mat3::<S>::from_f64(&bx.rotation.transpose());
                let bc = Vec3::from_f64(bx.center);
                let to_box = |p: Vec3<S>| rt.mul_vec(&(p - bc));
                let a = to_box(kin.point_world(c.link, &Vec3::from_f64(c.a)));
                let b = to_box(kin.point_world(c.link, &Vec3::from_f64(c.b)));
                let p = closest_on_segment(&a, &b, &bx.half_extents);
                let (d, nl) = box_sdf(&p, &bx.half_extents);
                let r = S::cst(c.radius);
                let rot = Mat3::<S>::from_f64(&bx.rotation);
                let nw = rot.mul_vec(&nl);
                let center = rot.mul_vec(&p) + bc;
                ContactPoint {
                    link: c.link,
                    point: center - nw.scale(r),
                    normal: nw,
                    distance: d - r,
                    mu: world.friction,
                    source: src,
                }
            }
        })
        .collect()
}

/// Orthonormal tangents for a unit normal.
pub fn tangents<S: Real>(n: &Vec3<S>) -> (Vec3<S>, Vec3<S>) {
    // Helper axis chosen away from the normal.
    let pick_x = S::select_le(n.x.abs(), S::cst(0.9), S::one(), S::zero());
    let helper = Vec3::new(pick_x, S::one() - pick_x, S::zero());
    let t1 = helper.cross(n);
    let t1 = t1.scale(S::one() / t1.norm_sq().sqrt());
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Dense Jacobian rows (normal, two tangents) of one contact.
pub fn contact_jacobian<S: Real>(body: &BodySpec, kin: &Kinematics<S>, c: &ContactPoint<S>) -> [Vec<S>; 3] {
    let nv = body.nv();
    let (t1, t2) = tangents(&c.normal);
    let dirs = [c.normal, t1, t2];
    let mut rows = [vec![S::zero(); nv], vec![S::zero(); nv], vec![S::zero(); nv]];
    let mut link = Some(c.link);
    while let Some(i) = link {
        let cols = kin.world_cols(i);
        let v0 = body.links[i].v_index;
        for (k, col) in cols.iter().enumerate() {
            let pv = col.lin + col.ang.cross(&c.point);
            for (r, d) in rows.iter_mut().zip(&dirs) {
                r[v0 + k] = d.dot(&pv);
            }
        }
        link = body.links[i].parent;
    }
    rows
}

/// One contact prepared for the impulse solver.
#[derive(Clone, Debug)]
pub struct ContactRows<S> {
    /// Rows: normal, tangent 1, tangent 2.
    pub j: [Vec<S>; 3],
    /// Columns of `H⁻¹ Jᵀ`.
    pub m: [Vec<S>; 3],
    pub distance: S,
    pub mu: f64,
    /// Desired minimum separating velocity (stabilization).
    pub bias: S,
    /// Equality constraint: normal impulse unbounded, no friction.
    pub bilateral: bool,
    /// World point and directions (normal, tangents) the rows measure.
    pub point: Vec3<S>,
    pub dirs: [Vec3<S>; 3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverDiagnostics {
    pub singular_skipped: usize,
}

fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

fn axpy<S: Real>(y: &mut [S], a: S, x: &[S]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

/// Projected Gauss-Seidel: sweeps contacts in order `iters` times and updates
/// `qd` in place. Returns per-contact impulses `[p_n, p_t1, p_t2]`.
pub fn solve_contact_lcp<S: Real>(
    contacts: &[ContactRows<S>],
    qd: &mut [S],
    iters: usize,
    diag: &mut SolverDiagnostics,
) -> Vec<[S; 3]> {
    let eps = S::cst(1e-12);
    let zero = S::zero();
    let diag_a: Vec<[S; 3]> = contacts
        .iter()
        .map(|c| [dot(&c.j[0], &c.m[0]), dot(&c.j[1], &c.m[1]), dot(&c.j[2], &c.m[2])])
        .collect();
    diag.singular_skipped += diag_a.iter().filter(|a| a[0].val() <= 1e-12).count();
    let mut p = vec![[zero; 3]; contacts.len()];
    for _ in 0..iters {
        for (ci, c) in contacts.iter().enumerate() {
            let a = diag_a[ci];
            // Contacts with positive separation and singular ones never push.
            let live = |x: S| {
                let x = S::select_le(a[0], eps, zero, x);
                if c.bilateral {
                    x
                } else {
                    S::select_le(c.distance, zero, x, zero)
                }
            };
            let vn = dot(&c.j[0], qd);
            let raw = p[ci][0] - (vn - c.bias) / a[0];
            let pn = if c.bilateral { raw } else { raw.max(zero) };
            let pn = live(pn);
            axpy(qd, pn - p[ci][0], &c.m[0]);
            p[ci][0] = pn;
            if c.bilateral {
                continue;
            }
            let bound = pn * c.mu;
            for k in 1..3 {
                let vt = dot(&c.j[k], qd);
                let safe = S::select_le(a[k], eps, S::one(), a[k]);
                let raw = p[ci][k] - vt / safe;
                let pt = live(raw.clamp_to(-bound, bound));
                let pt = S::select_le(a[k], eps, zero, pt);
                axpy(qd, pt - p[ci][k], &c.m[k]);
                p[ci][k] = pt;
            }
        }
    }
    p
}
