use std::ops::Mul;

use ndarray::ArrayView2;

use super::ActionSpaceSpec;

/// Quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation by `|v|` radians about `v / |v|`.
    pub fn from_rotation_vector(v: [f64; 3]) -> Self {
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if angle < 1e-300 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / angle;
        Self::new(c, v[0] * k, v[1] * k, v[2] * k)
    }

    /// Rotation about the z axis.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (0.5 * yaw).sin_cos();
        Self::new(c, 0.0, 0.0, s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn vector_norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn negated(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product.
    fn mul(self, r: Quaternion) -> Quaternion {
        let l = self;
        Quaternion {
            w: l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z,
            x: l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y,
            y: l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x,
            z: l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w,
        }
    }
}

/// Ordered product `dq_1 * dq_2 * ...` of per-step rotation offsets.
///
/// Each row of `offsets` holds `spec.rotation_dims` values: a single yaw
/// angle (lifted to a z-axis rotation) or an axis-angle rotation vector. The
/// running product is renormalized after every multiplication.
pub fn compose_rotations(offsets: ArrayView2<'_, f64>, spec: &ActionSpaceSpec) -> Quaternion {
    let mut q = Quaternion::IDENTITY;
    if spec.rotation_dims == 0 {
        return q;
    }
    for row in offsets.rows() {
        let dq = match spec.rotation_dims {
            1 => Quaternion::from_yaw(row[0]),
            _ => Quaternion::from_rotation_vector([row[0], row[1], row[2]]),
        };
        q = (q * dq).normalized();
    }
    q
}

/// Rotation angle of a unit quaternion, in `[0, pi]`.
pub fn rotation_angle(q: &Quaternion) -> f64 {
    2.0 * q.vector_norm().atan2(q.w.abs())
}
