//! Fixed-size 3-D and spatial (6-D) algebra over [`Real`].
//!
//! Spatial vectors are ordered `[angular; linear]`. A [`Xform`] is a Plücker
//! coordinate transform `B_X_A` stored as the rotation `e` (A coordinates to B
//! coordinates) and the position `r` of B's origin expressed in A.

use std::ops::{Add, AddAssign, Neg, Sub};

use super::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Vec3<S> {
    #[inline]
    pub fn new(x: S, y: S, z: S) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(S::zero(), S::zero(), S::zero())
    }

    pub fn from_f64(v: Vec3<f64>) -> Self {
        Vec3::new(S::cst(v.x), S::cst(v.y), S::cst(v.z))
    }

    pub fn from_slice(s: &[S]) -> Self {
        Vec3::new(s[0], s[1], s[2])
    }

    pub fn val(&self) -> Vec3<f64> {
        Vec3::new(self.x.val(), self.y.val(), self.z.val())
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn scale(&self, s: S) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    #[inline]
    pub fn norm_sq(&self) -> S {
        self.dot(self)
    }

    pub fn norm(&self) -> S {
        self.norm_sq().safe_sqrt()
    }

    pub fn to_array(&self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn get(&self, i: usize) -> S {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl Vec3<f64> {
    pub const ZERO: Vec3<f64> = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn c(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scale(1.0 / n)
    }
}

impl<S: Real> Add for Vec3<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Real> AddAssign for Vec3<S> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Real> Sub for Vec3<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Real> Neg for Vec3<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<S> {
    pub m: [[S; 3]; 3],
}

impl<S: Real> Mat3<S> {
    pub fn zero() -> Self {
        Mat3 {
            m: [[S::zero(); 3]; 3],
        }
    }

    pub fn identity() -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            r.m[i][i] = S::one();
        }
        r
    }

    pub fn from_f64(a: &Mat3<f64>) -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = S::cst(a.m[i][j]);
            }
        }
        r
    }

    pub fn from_rows(r0: [S; 3], r1: [S; 3], r2: [S; 3]) -> Self {
        Mat3 { m: [r0, r1, r2] }
    }

    pub fn val(&self) -> Mat3<f64> {
        let mut r = Mat3::<f64>::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][j].val();
            }
        }
        r
    }

    /// Skew-symmetric matrix with `skew(v) * w == v × w`.
    pub fn skew(v: &Vec3<S>) -> Self {
        let z = S::zero();
        Mat3::from_rows([z, -v.z, v.y], [v.z, z, -v.x], [-v.y, v.x, z])
    }

    pub fn diag(d: Vec3<S>) -> Self {
        let mut r = Self::zero();
        r.m[0][0] = d.x;
        r.m[1][1] = d.y;
        r.m[2][2] = d.z;
        r
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vec3<S>) -> Vec3<S> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `selfᵀ * v`
    #[inline]
    pub fn tmul_vec(&self, v: &Vec3<S>) -> Vec3<S> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Self {
        let mut r = *self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[j][i];
            }
        }
        r
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        r
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = *self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] += o.m[i][j];
            }
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut r = *self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] -= o.m[i][j];
            }
        }
        r
    }

    pub fn scale(&self, s: S) -> Self {
        let mut r = *self;
        for row in r.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        r
    }

    pub fn col(&self, j: usize) -> Vec3<S> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }
}

impl Mat3<f64> {
    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.m[i][j] - o.m[i][j]).abs());
            }
        }
        d
    }
}

/// Quaternion `w + xi + yj + zk`; rotations use the unit ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<S> {
    pub w: S,
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Quat<S> {
    pub fn new(w: S, x: S, y: S, z: S) -> Self {
        Quat { w, x, y, z }
    }

    pub fn identity() -> Self {
        Quat::new(S::one(), S::zero(), S::zero(), S::zero())
    }

    pub fn from_f64(q: Quat<f64>) -> Self {
        Quat::new(S::cst(q.w), S::cst(q.x), S::cst(q.y), S::cst(q.z))
    }

    pub fn from_slice(s: &[S]) -> Self {
        Quat::new(s[0], s[1], s[2], s[3])
    }

    pub fn to_array(&self) -> [S; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn val(&self) -> Quat<f64> {
        Quat::new(self.w.val(), self.x.val(), self.y.val(), self.z.val())
    }

    pub fn vec(&self) -> Vec3<S> {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn dot(&self, o: &Self) -> S {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn conj(&self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn neg(&self) -> Self {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn scale(&self, s: S) -> Self {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    /// Hamilton product `self ⊗ o`.
    pub fn mul(&self, o: &Self) -> Self {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn norm_sq(&self) -> S {
        self.dot(self)
    }

    pub fn normalize(&self) -> Self {
        let inv = S::one() / self.norm_sq().sqrt();
        self.scale(inv)
    }

    /// Rotation matrix taking vectors from the rotated frame into the reference frame.
    pub fn to_mat(&self) -> Mat3<S> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (wx, wy, wz) = (w * x, w * y, w * z);
        let one = S::one();
        Mat3::from_rows(
            [one - (yy + zz) * 2.0, (xy - wz) * 2.0, (xz + wy) * 2.0],
            [(xy + wz) * 2.0, one - (xx + zz) * 2.0, (yz - wx) * 2.0],
            [(xz - wy) * 2.0, (yz + wx) * 2.0, one - (xx + yy) * 2.0],
        )
    }

    pub fn rotate(&self, v: &Vec3<S>) -> Vec3<S> {
        // v + 2w (u × v) + 2 u × (u × v)
        let u = self.vec();
        let t = u.cross(v).scale(S::cst(2.0));
        *v + t.scale(self.w) + u.cross(&t)
    }

    /// Quaternion of the rotation vector `r` (axis · angle).
    pub fn exp(r: &Vec3<S>) -> Self {
        let th2 = r.norm_sq();
        let small = S::cst(1e-10);
        // Series branch keeps sqrt'(0) out of the derivative near identity.
        let w_series = S::one() - th2 / 8.0;
        let s_series = S::cst(0.5) - th2 / 48.0;
        let th = S::select_le(th2, small, S::one(), th2.sqrt());
        let half = th * 0.5;
        let w_exact = half.cos();
        let s_exact = half.sin() / th;
        let w = S::select_le(th2, small, w_series, w_exact);
        let s = S::select_le(th2, small, s_series, s_exact);
        Quat::new(w, r.x * s, r.y * s, r.z * s)
    }

    /// Rotation vector of a unit quaternion, taking the shorter of `±q`.
    pub fn log(&self) -> Vec3<S> {
        let sign = S::select_le(S::zero(), self.w, S::one(), -S::one());
        let w = self.w * sign;
        let v = self.vec().scale(sign);
        let s2 = v.norm_sq();
        let small = S::cst(1e-14);
        let s = S::select_le(s2, small, S::one(), s2.sqrt());
        let exact = s.atan2(w) * 2.0 / s;
        // 2 atan(s/w)/s ≈ (2/w)(1 - s²/(3w²))
        let series = (S::one() - s2 / (w * w * 3.0)) * 2.0 / w;
        let k = S::select_le(s2, small, series, exact);
        v.scale(k)
    }

    /// Unit quaternion for a rotation of `angle` about unit `axis`.
    pub fn from_axis_angle(axis: &Vec3<S>, angle: S) -> Self {
        let h = angle * 0.5;
        let s = h.sin();
        Quat::new(h.cos(), axis.x * s, axis.y * s, axis.z * s)
    }
}

impl Quat<f64> {
    pub const IDENTITY: Quat<f64> = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(&self, o: &Self, t: f64) -> Self {
        let mut b = *o;
        let mut d = self.dot(o);
        if d < 0.0 {
            b = b.neg();
            d = -d;
        }
        if d > 0.9995 {
            return self.scale(1.0 - t).add(&b.scale(t)).normalize();
        }
        let th = d.min(1.0).acos();
        let s = th.sin();
        let wa = ((1.0 - t) * th).sin() / s;
        let wb = (t * th).sin() / s;
        self.scale(wa).add(&b.scale(wb)).normalize()
    }

    pub fn from_mat(m: &Mat3<f64>) -> Self {
        let a = &m.m;
        let tr = a[0][0] + a[1][1] + a[2][2];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quat::new(0.25 * s, (a[2][1] - a[1][2]) / s, (a[0][2] - a[2][0]) / s, (a[1][0] - a[0][1]) / s)
        } else if a[0][0] > a[1][1] && a[0][0] > a[2][2] {
            let s = (1.0 + a[0][0] - a[1][1] - a[2][2]).sqrt() * 2.0;
            Quat::new((a[2][1] - a[1][2]) / s, 0.25 * s, (a[0][1] + a[1][0]) / s, (a[0][2] + a[2][0]) / s)
        } else if a[1][1] > a[2][2] {
            let s = (1.0 + a[1][1] - a[0][0] - a[2][2]).sqrt() * 2.0;
            Quat::new((a[0][2] - a[2][0]) / s, (a[0][1] + a[1][0]) / s, 0.25 * s, (a[1][2] + a[2][1]) / s)
        } else {
            let s = (1.0 + a[2][2] - a[0][0] - a[1][1]).sqrt() * 2.0;
            Quat::new((a[1][0] - a[0][1]) / s, (a[0][2] + a[2][0]) / s, (a[1][2] + a[2][1]) / s, 0.25 * s)
        };
        q.normalize()
    }
}

/// Spatial vector `[angular; linear]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SVec<S> {
    pub ang: Vec3<S>,
    pub lin: Vec3<S>,
}

impl<S: Real> SVec<S> {
    pub fn new(ang: Vec3<S>, lin: Vec3<S>) -> Self {
        SVec { ang, lin }
    }

    pub fn zero() -> Self {
        SVec::new(Vec3::zero(), Vec3::zero())
    }

    pub fn get(&self, i: usize) -> S {
        if i < 3 {
            self.ang.get(i)
        } else {
            self.lin.get(i - 3)
        }
    }

    pub fn from_array(a: [S; 6]) -> Self {
        SVec::new(Vec3::new(a[0], a[1], a[2]), Vec3::new(a[3], a[4], a[5]))
    }

    pub fn to_array(&self) -> [S; 6] {
        [self.ang.x, self.ang.y, self.ang.z, self.lin.x, self.lin.y, self.lin.z]
    }

    pub fn scale(&self, s: S) -> Self {
        SVec::new(self.ang.scale(s), self.lin.scale(s))
    }

    pub fn dot(&self, o: &Self) -> S {
        self.ang.dot(&o.ang) + self.lin.dot(&o.lin)
    }

    /// Motion cross product `self × m`.
    pub fn cross_motion(&self, m: &Self) -> Self {
        SVec::new(
            self.ang.cross(&m.ang),
            self.ang.cross(&m.lin) + self.lin.cross(&m.ang),
        )
    }

    /// Force cross product `self ×* f`.
    pub fn cross_force(&self, f: &Self) -> Self {
        SVec::new(
            self.ang.cross(&f.ang) + self.lin.cross(&f.lin),
            self.ang.cross(&f.lin),
        )
    }

    pub fn val(&self) -> SVec<f64> {
        SVec::new(self.ang.val(), self.lin.val())
    }
}

impl<S: Real> Add for SVec<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        SVec::new(self.ang + o.ang, self.lin + o.lin)
    }
}

impl<S: Real> AddAssign for SVec<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Real> Sub for SVec<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        SVec::new(self.ang - o.ang, self.lin - o.lin)
    }
}

impl<S: Real> Neg for SVec<S> {
    type Output = Self;
    fn neg(self) -> Self {
        SVec::new(-self.ang, -self.lin)
    }
}

/// Plücker transform `B_X_A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Xform<S> {
    /// Rotation from A coordinates to B coordinates.
    pub e: Mat3<S>,
    /// Origin of B expressed in A coordinates.
    pub r: Vec3<S>,
}

impl<S: Real> Xform<S> {
    pub fn identity() -> Self {
        Xform {
            e: Mat3::identity(),
            r: Vec3::zero(),
        }
    }

    pub fn new(e: Mat3<S>, r: Vec3<S>) -> Self {
        Xform { e, r }
    }

    pub fn translation(r: Vec3<S>) -> Self {
        Xform {
            e: Mat3::identity(),
            r,
        }
    }

    /// Transform of a frame whose orientation relative to A is `rot`
    /// (B-to-A rotation) and whose origin in A is `pos`.
    pub fn from_pose(rot: &Mat3<S>, pos: Vec3<S>) -> Self {
        Xform {
            e: rot.transpose(),
            r: pos,
        }
    }

    pub fn apply_motion(&self, v: &SVec<S>) -> SVec<S> {
        let ang = self.e.mul_vec(&v.ang);
        let lin = self.e.mul_vec(&(v.lin - self.r.cross(&v.ang)));
        SVec::new(ang, lin)
    }

    pub fn apply_force(&self, f: &SVec<S>) -> SVec<S> {
        let ang = self.e.mul_vec(&(f.ang - self.r.cross(&f.lin)));
        let lin = self.e.mul_vec(&f.lin);
        SVec::new(ang, lin)
    }

    /// `A_X_B · v` for a motion expressed in B.
    pub fn inv_apply_motion(&self, v: &SVec<S>) -> SVec<S> {
        let ang = self.e.tmul_vec(&v.ang);
        let lin = self.e.tmul_vec(&v.lin) + self.r.cross(&ang);
        SVec::new(ang, lin)
    }

    /// `A_X*_B · f` for a force expressed in B.
    pub fn inv_apply_force(&self, f: &SVec<S>) -> SVec<S> {
        let lin = self.e.tmul_vec(&f.lin);
        let ang = self.e.tmul_vec(&f.ang) + self.r.cross(&lin);
        SVec::new(ang, lin)
    }

    /// `self ∘ o`: with `self = C_X_B` and `o = B_X_A` returns `C_X_A`.
    pub fn compose(&self, o: &Self) -> Self {
        Xform {
            e: self.e.mul(&o.e),
            r: o.r + o.e.tmul_vec(&self.r),
        }
    }

    pub fn inverse(&self) -> Self {
        Xform {
            e: self.e.transpose(),
            r: -self.e.mul_vec(&self.r),
        }
    }

    /// Maps a point given in A coordinates into B coordinates.
    pub fn point_to_b(&self, p: &Vec3<S>) -> Vec3<S> {
        self.e.mul_vec(&(*p - self.r))
    }

    /// Maps a point given in B coordinates into A coordinates.
    pub fn point_to_a(&self, p: &Vec3<S>) -> Vec3<S> {
        self.e.tmul_vec(p) + self.r
    }

    pub fn val(&self) -> Xform<f64> {
        Xform {
            e: self.e.val(),
            r: self.r.val(),
        }
    }
}

/// Dense symmetric-use 6×6 matrix, used for spatial and articulated-body inertias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat6<S> {
    pub m: [[S; 6]; 6],
}

impl<S: Real> Mat6<S> {
    pub fn zero() -> Self {
        Mat6 {
            m: [[S::zero(); 6]; 6],
        }
    }

    pub fn from_blocks(a: &Mat3<S>, b: &Mat3<S>, c: &Mat3<S>) -> Self {
        // [[A, B], [Bᵀ, C]]
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = a.m[i][j];
                r.m[i][j + 3] = b.m[i][j];
                r.m[i + 3][j] = b.m[j][i];
                r.m[i + 3][j + 3] = c.m[i][j];
            }
        }
        r
    }

    pub fn blocks(&self) -> (Mat3<S>, Mat3<S>, Mat3<S>) {
        let mut a = Mat3::zero();
        let mut b = Mat3::zero();
        let mut c = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                a.m[i][j] = self.m[i][j];
                b.m[i][j] = self.m[i][j + 3];
                c.m[i][j] = self.m[i + 3][j + 3];
            }
        }
        (a, b, c)
    }

    pub fn mul_vec(&self, v: &SVec<S>) -> SVec<S> {
        let x = v.to_array();
        let mut out = [S::zero(); 6];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = S::zero();
            for (j, xj) in x.iter().enumerate() {
                acc += self.m[i][j] * *xj;
            }
            *o = acc;
        }
        SVec::from_array(out)
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = *self;
        for i in 0..6 {
            for j in 0..6 {
                r.m[i][j] += o.m[i][j];
            }
        }
        r
    }

    /// Congruence `Xᵀ I X` for `X = self_X_parent`: re-expresses an inertia given
    /// in the child frame about the parent frame.
    pub fn to_parent(&self, x: &Xform<S>) -> Self {
        let (a, b, c) = self.blocks();
        let et = x.e.transpose();
        let a1 = et.mul(&a).mul(&x.e);
        let b1 = et.mul(&b).mul(&x.e);
        let c1 = et.mul(&c).mul(&x.e);
        let rx = Mat3::skew(&x.r);
        let b2 = b1.add(&rx.mul(&c1));
        let a2 = a1.add(&rx.mul(&b1.transpose())).sub(&b2.mul(&rx));
        Mat6::from_blocks(&a2, &b2, &c1)
    }

    pub fn val(&self) -> Mat6<f64> {
        let mut r = Mat6::<f64>::zero();
        for i in 0..6 {
            for j in 0..6 {
                r.m[i][j] = self.m[i][j].val();
            }
        }
        r
    }
}

/// Rigid-body inertia about a body frame origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    /// Center of mass in body coordinates.
    pub com: Vec3<f64>,
    /// Rotational inertia about the center of mass, body axes.
    pub inertia: Mat3<f64>,
}

impl SpatialInertia {
    pub fn new(mass: f64, com: Vec3<f64>, inertia: Mat3<f64>) -> Self {
        SpatialInertia { mass, com, inertia }
    }

    /// A point mass located at `com`.
    pub fn point_mass(mass: f64, com: Vec3<f64>) -> Self {
        SpatialInertia::new(mass, com, Mat3::zero())
    }

    /// 6×6 inertia about the body origin.
    pub fn to_mat6(&self) -> Mat6<f64> {
        let cx = Mat3::skew(&self.com);
        let a = self.inertia.add(&cx.mul(&cx.transpose()).scale(self.mass));
        let b = cx.scale(self.mass);
        let c = Mat3::identity().scale(self.mass);
        Mat6::from_blocks(&a, &b, &c)
    }

    /// Combines two inertias expressed in the same frame.
    pub fn combine(&self, o: &SpatialInertia) -> SpatialInertia {
        let m = self.mass + o.mass;
        let com = (self.com.scale(self.mass) + o.com.scale(o.mass)).scale(1.0 / m);
        let shift = |si: &SpatialInertia| {
            let d = si.com - com;
            let dd = d.dot(&d);
            let mut s = Mat3::identity().scale(dd);
            for i in 0..3 {
                for j in 0..3 {
                    s.m[i][j] -= d.get(i) * d.get(j);
                }
            }
            si.inertia.add(&s.scale(si.mass))
        };
        SpatialInertia::new(m, com, shift(self).add(&shift(o)))
    }

    /// Checks mass positivity, symmetry, PSD and the principal-moment triangle inequality.
    pub fn is_physical(&self, tol: f64) -> bool {
        if !(self.mass > 0.0) {
            return false;
        }
        let i = &self.inertia;
        for r in 0..3 {
            for c in 0..3 {
                if (i.m[r][c] - i.m[c][r]).abs() > tol {
                    return false;
                }
            }
        }
        let na = nalgebra::Matrix3::from_fn(|r, c| i.m[r][c]);
        let eig = na.symmetric_eigen().eigenvalues;
        let (a, b, c) = (eig[0], eig[1], eig[2]);
        a >= -tol && b >= -tol && c >= -tol && a + b + tol >= c && a + c + tol >= b && b + c + tol >= a
    }
}

impl<S: Real> Mat6<S> {
    pub fn from_f64(a: &Mat6<f64>) -> Self {
        let mut r = Self::zero();
        for i in 0..6 {
            for j in 0..6 {
                r.m[i][j] = S::cst(a.m[i][j]);
            }
        }
        r
    }

    /// `self - u vᵀ`
    pub fn sub_outer(&self, u: &SVec<S>, v: &SVec<S>) -> Self {
        let (ua, va) = (u.to_array(), v.to_array());
        let mut r = *self;
        for i in 0..6 {
            for j in 0..6 {
                r.m[i][j] -= ua[i] * va[j];
            }
        }
        r
    }
}
