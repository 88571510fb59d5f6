//! Small fixed-size vector/matrix helpers used by the kinematics code.

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}

/// 3x3 rotation stored as three orthonormal columns.
#[derive(Clone, Copy, Debug)]
pub struct Mat3 {
    pub cols: [Vec3; 3],
}

impl Mat3 {
    pub fn identity() -> Self {
        Self { cols: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Self {
        Self {
            cols: [
                [r0[0], r1[0], r2[0]],
                [r0[1], r1[1], r2[1]],
                [r0[2], r1[2], r2[2]],
            ],
        }
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        add(
            add(scale(self.cols[0], v[0]), scale(self.cols[1], v[1])),
            scale(self.cols[2], v[2]),
        )
    }

    /// `R^T v`, i.e. the coordinates of `v` in this frame.
    #[inline]
    pub fn tr_mul_vec(&self, v: Vec3) -> Vec3 {
        [dot(self.cols[0], v), dot(self.cols[1], v), dot(self.cols[2], v)]
    }

    pub fn mul_mat(&self, other: &Mat3) -> Mat3 {
        Mat3 {
            cols: [
                self.mul_vec(other.cols[0]),
                self.mul_vec(other.cols[1]),
                self.mul_vec(other.cols[2]),
            ],
        }
    }

    /// Max abs entry of `R^T R - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let v = dot(self.cols[i], self.cols[j]) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}
