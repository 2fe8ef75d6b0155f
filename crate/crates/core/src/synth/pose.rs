use nalgebra::{Matrix3, Vector3};

/// Six-number rigid motion: translation `t` and Euler angles `(α, β, γ)`.
///
/// Maps points from the target frame into the source frame as
/// `X_source = R · X_target + t` with `R = R_z(γ) · R_y(β) · R_x(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6 {
    pub t: [f64; 3],
    pub r: [f64; 3],
}

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn ry(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rz(g: f64) -> Matrix3<f64> {
    let (s, c) = g.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn drx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn dry(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn drz(g: f64) -> Matrix3<f64> {
    let (s, c) = g.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

impl Pose6 {
    pub fn new(t: [f64; 3], r: [f64; 3]) -> Self {
        Self { t, r }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn translation(tx: f64, ty: f64, tz: f64) -> Self {
        Self::new([tx, ty, tz], [0.0; 3])
    }

    pub fn yaw(beta: f64) -> Self {
        Self::new([0.0; 3], [0.0, beta, 0.0])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.t[0], self.t[1], self.t[2], self.r[0], self.r[1], self.r[2]]
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rz(self.r[2]) * ry(self.r[1]) * rx(self.r[0])
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.t)
    }

    /// `(R, t)` such that `X_source = R · X_target + t`.
    pub fn to_transform(&self) -> (Matrix3<f64>, Vector3<f64>) {
        (self.rotation(), self.translation_vector())
    }

    /// Derivatives of `R` with respect to `α`, `β`, `γ`.
    pub fn rotation_derivatives(&self) -> [Matrix3<f64>; 3] {
        let (a, b, g) = (self.r[0], self.r[1], self.r[2]);
        [rz(g) * ry(b) * drx(a), rz(g) * dry(b) * rx(a), drz(g) * ry(b) * rx(a)]
    }

    /// Euler decomposition of a rotation matrix; `β` is taken in `[-π/2, π/2]`.
    pub fn from_transform(rot: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        let beta = (-rot[(2, 0)]).atan2(rot[(0, 0)].hypot(rot[(1, 0)]));
        let (alpha, gamma) = if rot[(0, 0)].hypot(rot[(1, 0)]) > 1e-12 {
            (rot[(2, 1)].atan2(rot[(2, 2)]), rot[(1, 0)].atan2(rot[(0, 0)]))
        } else {
            // gimbal lock: fold everything into α
            ((-rot[(1, 2)]).atan2(rot[(1, 1)]), 0.0)
        };
        Self::new([t.x, t.y, t.z], [alpha, beta, gamma])
    }

    /// The transform mapping source-frame points back to the target frame.
    pub fn inverse(&self) -> Self {
        let (r, t) = self.to_transform();
        let rt = r.transpose();
        Self::from_transform(&rt, &(-(rt * t)))
    }

    /// Position of the source camera centre expressed in the target frame.
    pub fn source_center_in_target(&self) -> Vector3<f64> {
        let (r, t) = self.to_transform();
        -(r.transpose() * t)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose6) -> Self {
        let (r1, t1) = self.to_transform();
        let (r2, t2) = other.to_transform();
        Self::from_transform(&(r1 * r2), &(r1 * t2 + t1))
    }

    /// Target-to-source motion between two camera-to-world poses.
    pub fn relative(target: &Pose6, source: &Pose6) -> Self {
        source.inverse().compose(target)
    }

    pub fn is_finite(&self) -> bool {
        self.t.iter().chain(&self.r).all(|v| v.is_finite())
    }
}
