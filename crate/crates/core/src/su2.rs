//! SU(2) propagators stored as unit quaternions, and their SO(3) images.
//!
//! A unitary is kept as `(w, v)` with `U = w·I − i v·σ`, so a rotation by
//! `θ` about `n̂` has `w = cos(θ/2)` and `v = sin(θ/2)·n̂`. Products are
//! renormalized after every composition.

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// 3×3 real rotation matrix.
pub type RotationMatrix = Matrix3<f64>;

/// Pauli matrices σ_x, σ_y, σ_z.
pub fn pauli() -> [Matrix2<Complex64>; 3] {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [
        Matrix2::new(z, o, o, z),
        Matrix2::new(z, -i, i, z),
        Matrix2::new(o, z, z, -o),
    ]
}

/// A single-qubit unitary modulo global phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2 {
    w: f64,
    v: Vector3<f64>,
}

impl Default for Su2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Su2 {
    pub fn identity() -> Self {
        Su2 {
            w: 1.0,
            v: Vector3::zeros(),
        }
    }

    /// Builds from raw quaternion components, normalizing them.
    pub fn from_components(w: f64, v: Vector3<f64>) -> Self {
        let n = (w * w + v.norm_squared()).sqrt();
        Su2 { w: w / n, v: v / n }
    }

    /// `exp(−i θ n̂·σ / 2)`. The axis must be unit length to within 1e-12.
    pub fn from_axis_angle(theta: f64, axis: Vector3<f64>) -> Result<Self> {
        let norm = axis.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Normalization { norm });
        }
        let (s, c) = (0.5 * theta).sin_cos();
        Ok(Self::from_components(c, axis * (s / norm)))
    }

    /// `exp(−i a·σ)` for an arbitrary real vector `a` (rotation angle `2|a|`).
    pub fn from_error_vector(a: Vector3<f64>) -> Self {
        let m = a.norm();
        if m == 0.0 {
            return Self::identity();
        }
        let (s, c) = m.sin_cos();
        Su2 { w: c, v: a * (s / m) }
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn v(&self) -> Vector3<f64> {
        self.v
    }

    /// Rotation angle in `[0, 2π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.v.norm().atan2(self.w)
    }

    /// Unit rotation axis; `ẑ` for the identity.
    pub fn axis(&self) -> Vector3<f64> {
        let n = self.v.norm();
        if n == 0.0 {
            Vector3::z()
        } else {
            self.v / n
        }
    }

    /// Materializes `w·I − i v·σ`.
    pub fn matrix(&self) -> Matrix2<Complex64> {
        let (w, x, y, z) = (self.w, self.v.x, self.v.y, self.v.z);
        Matrix2::new(
            Complex64::new(w, -z),
            Complex64::new(-y, -x),
            Complex64::new(y, -x),
            Complex64::new(w, z),
        )
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &Su2) -> Su2 {
        let w = self.w * rhs.w - self.v.dot(&rhs.v);
        let v = self.w * rhs.v + rhs.w * self.v + self.v.cross(&rhs.v);
        Self::from_components(w, v)
    }

    pub fn dagger(&self) -> Su2 {
        Su2 { w: self.w, v: -self.v }
    }

    pub fn neg(&self) -> Su2 {
        Su2 { w: -self.w, v: -self.v }
    }

    /// `R_ij = Tr(U† σ_i U σ_j) / 2`.
    pub fn so3(&self) -> RotationMatrix {
        let (w, v) = (self.w, self.v);
        let vv = v.norm_squared();
        let mut r = Matrix3::identity() * (w * w - vv) + 2.0 * v * v.transpose();
        r[(0, 1)] -= 2.0 * w * v.z;
        r[(0, 2)] += 2.0 * w * v.y;
        r[(1, 0)] += 2.0 * w * v.z;
        r[(1, 2)] -= 2.0 * w * v.x;
        r[(2, 0)] -= 2.0 * w * v.y;
        r[(2, 1)] += 2.0 * w * v.x;
        r
    }

    /// `|Tr U|² / 4`.
    pub fn trace_fidelity(&self) -> f64 {
        self.w * self.w
    }

    /// The vector `a` with `U = exp(−i a·σ)`, taking the representative with `w ≥ 0`.
    pub fn error_vector(&self) -> Vector3<f64> {
        let (w, v) = if self.w < 0.0 {
            (-self.w, -self.v)
        } else {
            (self.w, self.v)
        };
        let n = v.norm();
        if n == 0.0 {
            return Vector3::zeros();
        }
        v * (n.atan2(w) / n)
    }

    /// Equality modulo global sign.
    pub fn approx_eq(&self, other: &Su2, tol: f64) -> bool {
        let d = |s: f64| (self.w - s * other.w).abs().max((self.v - s * other.v).amax());
        d(1.0) <= tol || d(-1.0) <= tol
    }
}

impl std::ops::Mul for Su2 {
    type Output = Su2;
    fn mul(self, rhs: Su2) -> Su2 {
        self.compose(&rhs)
    }
}

pub fn unitary_from_axis_angle(theta: f64, axis: Vector3<f64>) -> Result<Su2> {
    Su2::from_axis_angle(theta, axis)
}

pub fn so3_from_su2(u: &Su2) -> RotationMatrix {
    u.so3()
}

pub fn compose(u1: &Su2, u2: &Su2) -> Su2 {
    u1.compose(u2)
}

pub fn dagger(u: &Su2) -> Su2 {
    u.dagger()
}

pub fn trace_fidelity(u: &Su2) -> f64 {
    u.trace_fidelity()
}

/// Max-entry deviation of `R Rᵀ` from the identity and of `det R` from 1.
pub fn rotation_defect(r: &RotationMatrix) -> f64 {
    let orth = (r * r.transpose() - Matrix3::identity()).amax();
    orth.max((r.determinant() - 1.0).abs())
}
