use std::ops::{Mul, Neg};

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

/// A quaternion stored as `(w, x, y, z)`.
///
/// Rotations use unit quaternions; the type itself does not enforce unit norm so
/// that raw network outputs can be carried around before normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis`. The axis is normalized here.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = norm3(axis);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / n;
        Self::new(c, axis[0] * k, axis[1] * k, axis[2] * k)
    }

    pub fn dot(self, other: Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalize(self) -> Quat {
        let n = self.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Quat {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn scale(self, k: f64) -> Quat {
        Self::new(self.w * k, self.x * k, self.y * k, self.z * k)
    }

    /// Flip `self` onto the hemisphere of `reference` (non-negative dot product).
    pub fn aligned_to(self, reference: Quat) -> Quat {
        if self.dot(reference) < 0.0 {
            -self
        } else {
            self
        }
    }

    /// `q v q⁻¹` for a unit quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = [self.x, self.y, self.z];
        let t = scale3(cross(u, v), 2.0);
        let ut = cross(u, t);
        [
            v[0] + self.w * t[0] + ut[0],
            v[1] + self.w * t[1] + ut[1],
            v[2] + self.w * t[2] + ut[2],
        ]
    }

    /// Row-major 3×3 rotation matrix of a unit quaternion.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Unit quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Quat {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        q.normalize()
    }

    /// Spherical interpolation between unit quaternions, taking the short arc.
    pub fn slerp(self, other: Quat, t: f64) -> Quat {
        let other = other.aligned_to(self);
        let cos = self.dot(other).clamp(-1.0, 1.0);
        if cos > 1.0 - 1e-10 {
            // Nearly parallel: linear blend is exact to machine precision.
            let q = Quat::new(
                self.w + (other.w - self.w) * t,
                self.x + (other.x - self.x) * t,
                self.y + (other.y - self.y) * t,
                self.z + (other.z - self.z) * t,
            );
            return q.normalize();
        }
        let theta = cos.acos();
        let sin = theta.sin();
        let a = ((1.0 - t) * theta).sin() / sin;
        let b = (t * theta).sin() / sin;
        Quat::new(
            a * self.w + b * other.w,
            a * self.x + b * other.x,
            a * self.y + b * other.y,
            a * self.z + b * other.z,
        )
    }
}

/// Hamilton product.
pub fn quat_mul(a: Quat, b: Quat) -> Quat {
    Quat::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )
}

pub fn rotate_vec(q: Quat, v: Vec3) -> Vec3 {
    q.rotate(v)
}

impl Mul for Quat {
    type Output = Quat;

    fn mul(self, rhs: Quat) -> Quat {
        quat_mul(self, rhs)
    }
}

impl Neg for Quat {
    type Output = Quat;

    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn scale3(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub(crate) fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn norm3(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    // Rotation matrices built straight from trigonometry, independent of Quat.
    fn rot_x(a: f64) -> [[f64; 3]; 3] {
        [[1.0, 0.0, 0.0], [0.0, a.cos(), -a.sin()], [0.0, a.sin(), a.cos()]]
    }
    fn rot_y(a: f64) -> [[f64; 3]; 3] {
        [[a.cos(), 0.0, a.sin()], [0.0, 1.0, 0.0], [-a.sin(), 0.0, a.cos()]]
    }
    fn rot_z(a: f64) -> [[f64; 3]; 3] {
        [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]]
    }

    fn assert_mat_close(a: [[f64; 3]; 3], b: [[f64; 3]; 3], tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() < tol, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn identity_is_neutral() {
        let q = Quat::new(0.1, -0.4, 0.7, 0.2);
        assert_eq!(Quat::IDENTITY * q, q);
        assert_eq!(q * Quat::IDENTITY, q);
    }

    #[test]
    fn two_quarter_turns_about_z_make_a_half_turn() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = Quat::new(h, 0.0, 0.0, h);
        let r = q * q;
        assert!((r.w).abs() < 1e-15);
        assert!((r.z - 1.0).abs() < 1e-15);
        assert_mat_close(r.to_matrix(), matmul(rot_z(FRAC_PI_2), rot_z(FRAC_PI_2)), 1e-12);
        assert_mat_close(r.to_matrix(), rot_z(PI), 1e-12);
    }

    #[test]
    fn product_is_not_commutative() {
        let a = Quat::from_axis_angle([1.0, 0.0, 0.0], FRAC_PI_2);
        let b = Quat::from_axis_angle([0.0, 1.0, 0.0], FRAC_PI_2);
        let ab = (a * b).to_matrix();
        let ba = (b * a).to_matrix();
        assert_mat_close(ab, matmul(rot_x(FRAC_PI_2), rot_y(FRAC_PI_2)), 1e-12);
        assert_mat_close(ba, matmul(rot_y(FRAC_PI_2), rot_x(FRAC_PI_2)), 1e-12);
        assert!((ab[0][1] - ba[0][1]).abs() > 0.5 || (ab[2][0] - ba[2][0]).abs() > 0.5);
    }

    #[test]
    fn rotate_quarter_turn_about_z() {
        let q = Quat::from_axis_angle([0.0, 0.0, 1.0], FRAC_PI_2);
        let v = q.rotate([1.0, 0.0, 0.0]);
        let m = rot_z(FRAC_PI_2);
        let expected = [m[0][0], m[1][0], m[2][0]];
        for i in 0..3 {
            assert!((v[i] - expected[i]).abs() < 1e-15);
        }
        assert!((v[1] - 1.0).abs() < 1e-15);
        assert_eq!(Quat::IDENTITY.rotate([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0]);
        assert_eq!(q.rotate([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn matrix_round_trip() {
        for (i, axis) in [[1.0, 2.0, 3.0], [-1.0, 0.0, 0.2], [0.0, 0.0, -1.0]].iter().enumerate() {
            for angle in [0.3, 2.9, -1.7, PI - 1e-3] {
                let q = Quat::from_axis_angle(*axis, angle + i as f64 * 0.01);
                let back = Quat::from_matrix(q.to_matrix()).aligned_to(q);
                assert!((back.w - q.w).abs() < 1e-12 && (back.x - q.x).abs() < 1e-12, "{q:?} {back:?}");
            }
        }
    }

    #[test]
    fn slerp_midpoint_is_half_angle() {
        let a = Quat::IDENTITY;
        let b = Quat::from_axis_angle([0.0, 0.0, 1.0], FRAC_PI_2);
        let m = a.slerp(b, 0.5);
        assert!((m.w - (PI / 8.0).cos()).abs() < 1e-12);
        assert!((m.z - (PI / 8.0).sin()).abs() < 1e-12);
        assert!((m.w - 0.92388).abs() < 1e-5 && (m.z - 0.38268).abs() < 1e-5);
        // Antipodal representation of the endpoint takes the same short arc.
        let m2 = a.slerp(-b, 0.5);
        assert!((m2.dot(m) - 1.0).abs() < 1e-12);
    }
}
