use std::f64::consts::PI;

use crate::mathcore::{Mat3, SpatialInertia, Vec3};

/// Inertia of a solid capsule about its center of mass, axis along local z.
///
/// The mass is split between the cylinder and the two hemispherical caps in
/// proportion to their volumes.
pub fn capsule_inertia(mass: f64, radius: f64, half_length: f64) -> SpatialInertia {
    let (r, h) = (radius, 2.0 * half_length);
    let v_cyl = PI * r * r * h;
    let v_sph = 4.0 / 3.0 * PI * r * r * r;
    let m_c = mass * v_cyl / (v_cyl + v_sph);
    let m_s = mass - m_c;
    let axial = m_c * r * r / 2.0 + m_s * 2.0 * r * r / 5.0;
    let trans = m_c * (r * r / 4.0 + h * h / 12.0) + m_s * (2.0 * r * r / 5.0 + h * h / 4.0 + 3.0 * h * r / 8.0);
    SpatialInertia::new(mass, Vec3::ZERO, Mat3::diag(Vec3::c(trans, trans, axial)))
}

pub fn capsule_volume(radius: f64, half_length: f64) -> f64 {
    PI * radius * radius * 2.0 * half_length + 4.0 / 3.0 * PI * radius.powi(3)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Slices the capsule perpendicular to its axis and integrates the disk
    // contributions with composite Simpson's rule.
    fn slice_oracle(mass: f64, r: f64, hl: f64) -> (f64, f64) {
        let n = 20_000;
        let zmax = hl + r;
        let radius_at = |z: f64| {
            let a = z.abs();
            if a <= hl {
                r
            } else {
                (r * r - (a - hl) * (a - hl)).max(0.0).sqrt()
            }
        };
        let step = 2.0 * zmax / n as f64;
        let (mut vol, mut axial, mut trans) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let z = -zmax + i as f64 * step;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let rho = radius_at(z);
            let area = PI * rho * rho;
            vol += w * area;
            // disk: axial ρ²/2 per unit mass, transverse ρ²/4 + z²
            axial += w * area * rho * rho / 2.0;
            trans += w * area * (rho * rho / 4.0 + z * z);
        }
        let density = mass / vol;
        (density * axial, density * trans)
    }

    #[test]
    fn sphere_limit() {
        let i = capsule_inertia(3.0, 0.1, 0.0);
        let e = 0.4 * 3.0 * 0.01;
        for k in 0..3 {
            assert!((i.inertia.m[k][k] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn slender_rod_limit() {
        let l = 1.0;
        let i = capsule_inertia(2.0, 1e-3 * l, l / 2.0);
        let rod = 2.0 * l * l / 12.0;
        assert!((i.inertia.m[0][0] - rod).abs() / rod < 0.01);
    }

    #[test]
    fn matches_volume_integral() {
        let (m, r, l) = (1.0, 0.05, 0.4);
        let i = capsule_inertia(m, r, l / 2.0);
        let (ax, tr) = slice_oracle(m, r, l / 2.0);
        assert!((i.inertia.m[2][2] - ax).abs() < 1e-6, "{} {}", i.inertia.m[2][2], ax);
        assert!((i.inertia.m[0][0] - tr).abs() < 1e-6, "{} {}", i.inertia.m[0][0], tr);
        assert!(i.is_physical(1e-12));
    }
}
