use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::quat::Quat;

/// Order in which three elementary rotations are composed, as declared by a
/// BVH `CHANNELS` line. `Zxy` means `R = Rz(a) · Rx(b) · Ry(c)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum EulerOrder {
    Xyz,
    Xzy,
    Yxz,
    Yzx,
    Zxy,
    #[default]
    Zyx,
}

impl EulerOrder {
    pub const ALL: [EulerOrder; 6] = [
        EulerOrder::Xyz,
        EulerOrder::Xzy,
        EulerOrder::Yxz,
        EulerOrder::Yzx,
        EulerOrder::Zxy,
        EulerOrder::Zyx,
    ];

    /// Axis indices (0 = X, 1 = Y, 2 = Z) in composition order.
    pub fn axes(self) -> [usize; 3] {
        match self {
            EulerOrder::Xyz => [0, 1, 2],
            EulerOrder::Xzy => [0, 2, 1],
            EulerOrder::Yxz => [1, 0, 2],
            EulerOrder::Yzx => [1, 2, 0],
            EulerOrder::Zxy => [2, 0, 1],
            EulerOrder::Zyx => [2, 1, 0],
        }
    }

    pub fn from_axes(axes: [usize; 3]) -> Option<Self> {
        EulerOrder::ALL.into_iter().find(|o| o.axes() == axes)
    }

    /// Compose the three elementary rotations (angles in radians, in order).
    pub fn to_quat(self, angles: [f64; 3]) -> Quat {
        let axes = self.axes();
        let mut q = Quat::IDENTITY;
        for (axis, angle) in axes.into_iter().zip(angles) {
            let mut v = [0.0; 3];
            v[axis] = 1.0;
            q = q * Quat::from_axis_angle(v, angle);
        }
        q
    }

    /// Inverse of [`EulerOrder::to_quat`]. The middle angle lies in `[-π/2, π/2]`.
    pub fn from_quat(self, q: Quat) -> [f64; 3] {
        let m = q.normalize().to_matrix();
        let [i, j_decl, _] = self.axes();
        // Cyclic orders (XYZ, YZX, ZXY) have even parity.
        let odd = (i + 1) % 3 != j_decl;
        let j = (i + 1 + usize::from(odd)) % 3;
        let k = (i + 2 - usize::from(odd)) % 3;
        let a = m[j][k].atan2(m[k][k]);
        let c2 = m[i][i].hypot(m[i][j]);
        let b = (-m[i][k]).atan2(c2);
        let (s1, c1) = a.sin_cos();
        let c = (s1 * m[k][i] - c1 * m[j][i]).atan2(c1 * m[j][j] - s1 * m[k][j]);
        if odd {
            [a, b, c]
        } else {
            [-a, -b, -c]
        }
    }
}

impl fmt::Display for EulerOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self
            .axes()
            .iter()
            .map(|a| ['X', 'Y', 'Z'][*a])
            .collect();
        f.write_str(&s)
    }
}

impl FromStr for EulerOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut axes = [0usize; 3];
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 3 {
            return Err(format!("euler order must have three axes, got {s:?}"));
        }
        for (slot, c) in axes.iter_mut().zip(chars) {
            *slot = match c.to_ascii_uppercase() {
                'X' => 0,
                'Y' => 1,
                'Z' => 2,
                _ => return Err(format!("unknown axis {c:?} in {s:?}")),
            };
        }
        EulerOrder::from_axes(axes).ok_or_else(|| format!("{s:?} is not a Tait-Bryan order"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn every_order_round_trips() {
        let samples = [
            [0.3, -0.2, 1.1],
            [-2.5, 0.7, 0.1],
            [1.0, -1.4, -3.0],
            [0.0, 0.0, 0.0],
        ];
        for order in EulerOrder::ALL {
            for angles in samples {
                let q = order.to_quat(angles);
                let back = order.from_quat(q);
                for a in 0..3 {
                    assert!(
                        (back[a] - angles[a]).abs() < 1e-10,
                        "{order}: {angles:?} -> {back:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn gimbal_lock_still_reproduces_the_rotation() {
        for order in EulerOrder::ALL {
            let q = order.to_quat([0.4, FRAC_PI_2, -0.3]);
            let again = order.to_quat(order.from_quat(q));
            assert!(again.dot(q).abs() > 1.0 - 1e-10, "{order}");
        }
    }

    #[test]
    fn parse_and_display() {
        for order in EulerOrder::ALL {
            assert_eq!(order.to_string().parse::<EulerOrder>().unwrap(), order);
        }
        assert!("XXY".parse::<EulerOrder>().is_err());
        assert!("XY".parse::<EulerOrder>().is_err());
    }
}
