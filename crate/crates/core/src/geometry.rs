//! Rigid transforms and the depth-parameterized RGBD camera model.
//!
//! An RGBD camera maps a point `x` in its own Cartesian frame to the feature
//! `y = (u, v, d)`: two pixel coordinates and a scaled depth. The map is
//! `y = Omega(z) * x`, where `z` is the point depth and
//!
//! ```text
//!             | fku/z   fku*cot(skew)/z   u0/z |
//! Omega(z) =  |   0     fkv/(z*sin(skew))  v0/z |
//!             |   0           0            mu   |
//! ```
//!
//! Units are meters, radians and pixels throughout.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Point3, Rotation3, Vector3};

use crate::error::{Error, Result};

/// A point in some named Cartesian frame (meters).
pub type CartesianPoint = Point3<f64>;

/// Re-orthonormalize rotations whose `R^T R - I` drifts past this.
const ORTHONORMAL_DRIFT: f64 = 1e-9;

/// Scalar intrinsics of an RGBD camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgbdIntrinsics {
    /// Focal length times horizontal pixel density (px).
    pub fku: f64,
    /// Focal length times vertical pixel density (px).
    pub fkv: f64,
    /// Angle between the image axes (rad), `pi/2` for a rectangular sensor.
    pub skew_angle: f64,
    /// Principal point (px).
    pub u0: f64,
    pub v0: f64,
    /// Ratio between the reported depth and the true depth.
    pub mu: f64,
}

impl Default for RgbdIntrinsics {
    fn default() -> Self {
        Self {
            fku: 600.0,
            fkv: 600.0,
            skew_angle: std::f64::consts::FRAC_PI_2,
            u0: 320.0,
            v0: 240.0,
            mu: 1.0,
        }
    }
}

impl RgbdIntrinsics {
    pub fn new(fku: f64, fkv: f64, skew_angle: f64, u0: f64, v0: f64, mu: f64) -> Result<Self> {
        let intr = Self {
            fku,
            fkv,
            skew_angle,
            u0,
            v0,
            mu,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.fku,
            self.fkv,
            self.skew_angle,
            self.u0,
            self.v0,
            self.mu,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fku <= 0.0 || self.fkv <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal terms must be positive (fku = {}, fkv = {})",
                self.fku, self.fkv
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.skew_angle > 0.0 && self.skew_angle < std::f64::consts::PI) {
            return Err(Error::InvalidIntrinsics(format!(
                "skew angle must lie in (0, pi), got {}",
                self.skew_angle
            )));
        }
        Ok(())
    }

    fn cot_skew(&self) -> f64 {
        self.skew_angle.cos() / self.skew_angle.sin()
    }

    /// Depth-free pinhole matrix `K` with `Omega(z) = diag(1/z, 1/z, 0) K + diag(0, 0, mu)`.
    pub fn pinhole_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fku,
            self.fku * self.cot_skew(),
            self.u0,
            0.0,
            self.fkv / self.skew_angle.sin(),
            self.v0,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// The intrinsic matrix `Omega(z)` of the RGBD camera at depth `z`.
pub fn omega_matrix(intr: &RgbdIntrinsics, z: f64) -> Result<Matrix3<f64>> {
    if z == 0.0 || !z.is_finite() {
        return Err(Error::SingularDepth(z));
    }
    let k = intr.pinhole_matrix();
    let mut omega = k / z;
    omega[(2, 0)] = 0.0;
    omega[(2, 1)] = 0.0;
    omega[(2, 2)] = intr.mu;
    Ok(omega)
}

/// An RGBD image feature: pixel coordinates and scaled depth `d = mu * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageFeature {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

impl ImageFeature {
    pub fn new(u: f64, v: f64, d: f64) -> Self {
        Self { u, v, d }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, self.d)
    }

    pub fn from_vector(y: &Vector3<f64>) -> Self {
        Self::new(y[0], y[1], y[2])
    }
}

/// Project a camera-frame point into the RGBD image.
pub fn project(intr: &RgbdIntrinsics, x_c: &CartesianPoint) -> Result<ImageFeature> {
    if !(x_c.z > 0.0) {
        return Err(Error::BehindCamera(x_c.z));
    }
    let y = omega_matrix(intr, x_c.z)? * x_c.coords;
    Ok(ImageFeature::from_vector(&y))
}

/// Recover the camera-frame point that produced an RGBD feature.
pub fn back_project(intr: &RgbdIntrinsics, y: &ImageFeature) -> Result<CartesianPoint> {
    if !(y.d > 0.0) {
        return Err(Error::InvalidDepth(y.d));
    }
    let z = y.d / intr.mu;
    let (s, c) = intr.skew_angle.sin_cos();
    // Invert the upper 2x2 block of the pinhole matrix on normalized coordinates.
    let yn = (y.v - intr.v0) * s / intr.fkv;
    let xn = (y.u - intr.u0) / intr.fku - yn * c / s;
    Ok(CartesianPoint::new(xn * z, yn * z, z))
}

/// Jacobian `dy/dx` of [`project`] with respect to the camera-frame point.
pub fn projection_jacobian(intr: &RgbdIntrinsics, x_c: &CartesianPoint) -> Result<Matrix3<f64>> {
    let y = project(intr, x_c)?;
    let k = intr.pinhole_matrix();
    let z = x_c.z;
    let mut jac = Matrix3::zeros();
    for col in 0..3 {
        jac[(0, col)] = k[(0, col)] / z;
        jac[(1, col)] = k[(1, col)] / z;
    }
    jac[(0, 2)] -= y.u / z;
    jac[(1, 2)] -= y.v / z;
    jac[(2, 2)] = intr.mu;
    Ok(jac)
}

/// A rigid transform `x' = R x + t`. Naming follows `a_from_b`: the transform
/// maps coordinates expressed in frame `b` into frame `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, projecting `rotation` back onto SO(3) if it drifted.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut t = Self {
            rotation,
            translation,
        };
        if t.orthonormality_error() > ORTHONORMAL_DRIFT {
            t.rotation = orthonormalize(&t.rotation);
        }
        t
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Roll-pitch-yaw about fixed x, y, z axes: `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn from_rpy(rpy: [f64; 3], translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]);
        Self {
            rotation: *r.matrix(),
            translation,
        }
    }

    pub fn rpy(&self) -> [f64; 3] {
        let (r, p, y) = Rotation3::from_matrix_unchecked(self.rotation).euler_angles();
        [r, p, y]
    }

    /// Pose of a camera at `eye` whose optical (z) axis points at `target`, with
    /// the image y axis as close as possible to `-up`. Returns `world_from_camera`.
    pub fn look_at(eye: &CartesianPoint, target: &CartesianPoint, up: &Vector3<f64>) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(up).normalize();
        let y = z.cross(&x);
        Self::new(Matrix3::from_columns(&[x, y, z]), eye.coords)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, x: &CartesianPoint) -> CartesianPoint {
        CartesianPoint::from(self.rotation * x.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// The `[R | t]` block of the homogeneous form.
    pub fn to_3x4(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Self {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// `max |R^T R - I|` together with `|det R - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        gram.amax().max((self.rotation.determinant() - 1.0).abs())
    }
}

impl std::ops::Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        compose(&self, &rhs)
    }
}

/// `a * b`: apply `b` first, then `a`.
pub fn compose(a: &Transform, b: &Transform) -> Transform {
    Transform::new(
        a.rotation * b.rotation,
        a.rotation * b.translation + a.translation,
    )
}

pub fn transform_point(t: &Transform, x: &CartesianPoint) -> CartesianPoint {
    t.transform_point(x)
}

/// Nearest rotation matrix in the Frobenius sense.
fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Skew-symmetric cross-product matrix: `skew(a) * b = a x b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn intr() -> RgbdIntrinsics {
        RgbdIntrinsics::new(500.0, 400.0, FRAC_PI_2, 320.0, 240.0, 1.0).unwrap()
    }

    #[test]
    fn omega_at_unit_and_double_depth() {
        let o1 = omega_matrix(&intr(), 1.0).unwrap();
        let expected = Matrix3::new(500.0, 0.0, 320.0, 0.0, 400.0, 240.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(o1, expected, epsilon = 1e-12);
        let o2 = omega_matrix(&intr(), 2.0).unwrap();
        let expected = Matrix3::new(250.0, 0.0, 160.0, 0.0, 200.0, 120.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(o2, expected, epsilon = 1e-12);
    }

    #[test]
    fn omega_skewed_sensor() {
        let mut i = intr();
        i.skew_angle = FRAC_PI_3;
        let o = omega_matrix(&i, 1.0).unwrap();
        // 500 * cot(pi/3) = 500 / sqrt(3)
        assert_relative_eq!(o[(0, 1)], 288.675_134_594_812_9, epsilon = 1e-9);
        assert_relative_eq!(o[(1, 1)], 400.0 / (FRAC_PI_3).sin(), epsilon = 1e-9);
    }

    #[test]
    fn omega_rejects_zero_depth() {
        assert_eq!(omega_matrix(&intr(), 0.0), Err(Error::SingularDepth(0.0)));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(RgbdIntrinsics::new(-1.0, 1.0, FRAC_PI_2, 0.0, 0.0, 1.0).is_err());
        assert!(RgbdIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(RgbdIntrinsics::new(1.0, 1.0, FRAC_PI_2, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn project_examples() {
        let y = project(&intr(), &CartesianPoint::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(y, ImageFeature::new(320.0, 240.0, 1.0));
        let y = project(&intr(), &CartesianPoint::new(0.1, 0.2, 1.0)).unwrap();
        assert_relative_eq!(
            y.to_vector(),
            Vector3::new(370.0, 320.0, 1.0),
            epsilon = 1e-9
        );
        let y = project(&intr(), &CartesianPoint::new(0.1, 0.2, 2.0)).unwrap();
        assert_relative_eq!(
            y.to_vector(),
            Vector3::new(345.0, 280.0, 2.0),
            epsilon = 1e-9
        );
        assert_eq!(
            project(&intr(), &CartesianPoint::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera(-1.0))
        );
    }

    #[test]
    fn back_project_examples() {
        let x = back_project(&intr(), &ImageFeature::new(320.0, 240.0, 1.0)).unwrap();
        assert_relative_eq!(x, CartesianPoint::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        let x = back_project(&intr(), &ImageFeature::new(370.0, 320.0, 1.0)).unwrap();
        assert_relative_eq!(x, CartesianPoint::new(0.1, 0.2, 1.0), epsilon = 1e-12);
        assert!(back_project(&intr(), &ImageFeature::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let mut i = intr();
        i.skew_angle = 1.3;
        i.mu = 1.2;
        let x = CartesianPoint::new(0.13, -0.07, 0.8);
        let jac = projection_jacobian(&i, &x).unwrap();
        let h = 1e-6;
        for c in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fd = (project(&i, &xp).unwrap().to_vector()
                - project(&i, &xm).unwrap().to_vector())
                / (2.0 * h);
            assert_relative_eq!(jac.column(c).into_owned(), fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn compose_identity_and_inverse() {
        let t = Transform::from_rpy([0.3, -0.2, 1.1], Vector3::new(0.5, -1.0, 2.0));
        assert_relative_eq!(
            compose(&Transform::identity(), &t).to_homogeneous(),
            t.to_homogeneous()
        );
        let e = compose(&t, &t.inverse()).to_homogeneous();
        assert_relative_eq!(e, Matrix4::identity(), epsilon = 1e-12);
    }

    #[test]
    fn transform_point_examples() {
        let p = CartesianPoint::new(0.3, 0.4, 0.5);
        assert_eq!(Transform::identity().transform_point(&p), p);
        let t = Transform::from_translation(Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(
            t.transform_point(&CartesianPoint::origin()),
            CartesianPoint::new(0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn drifted_rotation_is_repaired() {
        let mut r = *Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix();
        r[(0, 0)] += 1e-6;
        let t = Transform::new(r, Vector3::zeros());
        assert!(t.orthonormality_error() < 1e-12);
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = CartesianPoint::new(1.0, -1.0, 0.5);
        let target = CartesianPoint::new(0.2, 0.3, 0.1);
        let world_from_cam = Transform::look_at(&eye, &target, &Vector3::z());
        let in_cam = world_from_cam.inverse().transform_point(&target);
        assert_relative_eq!(in_cam.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(in_cam.y, 0.0, epsilon = 1e-12);
        assert!(in_cam.z > 0.0);
    }

    #[test]
    fn rpy_round_trip() {
        let rpy = [0.4, -0.3, 2.0];
        let t = Transform::from_rpy(rpy, Vector3::zeros());
        let back = t.rpy();
        for k in 0..3 {
            assert_relative_eq!(back[k], rpy[k], epsilon = 1e-12);
        }
    }
}
