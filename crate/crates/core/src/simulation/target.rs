use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DVector, Vector2, Vector3};

use crate::controller::DesiredImageState;
use crate::error::{Error, Result};
use crate::geometry::CartesianPoint;

/// Orthonormal in-plane axes `(e1, e2)` for a plane with the given normal,
/// with `e1 x e2` along the normal.
pub fn plane_basis(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let n = normal.normalize();
    let helper = if n.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let e1 = helper.cross(&n).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Motion of the fruit center in the base frame.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetMotion {
    Static {
        center: CartesianPoint,
    },
    Circle {
        center: CartesianPoint,
        radius: f64,
        angular_rate: f64,
        normal: Vector3<f64>,
    },
    /// Rounded rectangle traversed counter-clockwise (about `normal`) at
    /// constant speed, starting at the middle of the `+e1` side.
    Rectangle {
        center: CartesianPoint,
        width: f64,
        height: f64,
        speed: f64,
        corner_radius: f64,
        normal: Vector3<f64>,
    },
}

impl TargetMotion {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("target motion: {m}")));
        match *self {
            TargetMotion::Static { .. } => Ok(()),
            TargetMotion::Circle {
                radius,
                angular_rate,
                normal,
                ..
            } => {
                if !(radius >= 0.0) || !angular_rate.is_finite() || !(normal.norm() > 0.0) {
                    return bad("circle needs radius >= 0, finite rate and a nonzero normal");
                }
                Ok(())
            }
            TargetMotion::Rectangle {
                width,
                height,
                speed,
                corner_radius,
                normal,
                ..
            } => {
                if !(width > 0.0 && height > 0.0) || !speed.is_finite() || !(normal.norm() > 0.0) {
                    return bad(
                        "rectangle needs positive sides, finite speed and a nonzero normal",
                    );
                }
                if !(corner_radius >= 0.0 && 2.0 * corner_radius <= width.min(height)) {
                    return bad("corner radius must lie in [0, min(width, height) / 2]");
                }
                Ok(())
            }
        }
    }

    pub fn center(&self) -> CartesianPoint {
        match *self {
            TargetMotion::Static { center } => center,
            TargetMotion::Circle { center, .. } => center,
            TargetMotion::Rectangle { center, .. } => center,
        }
    }

    /// Fruit-center position and velocity at time `t`.
    pub fn state(&self, t: f64) -> (CartesianPoint, Vector3<f64>) {
        match *self {
            TargetMotion::Static { center } => (center, Vector3::zeros()),
            TargetMotion::Circle {
                center,
                radius,
                angular_rate,
                normal,
            } => {
                let (e1, e2) = plane_basis(&normal);
                let (s, c) = (angular_rate * t).sin_cos();
                (
                    center + (e1 * c + e2 * s) * radius,
                    (e2 * c - e1 * s) * (radius * angular_rate),
                )
            }
            TargetMotion::Rectangle {
                center,
                width,
                height,
                speed,
                corner_radius,
                normal,
            } => {
                let (e1, e2) = plane_basis(&normal);
                let path = RoundedRectangle::new(width, height, corner_radius);
                let (p, tangent) = path.at(speed * t);
                (
                    center + e1 * p.x + e2 * p.y,
                    (e1 * tangent.x + e2 * tangent.y) * speed,
                )
            }
        }
    }
}

/// Arc-length parameterized rounded rectangle centered at the origin.
#[derive(Debug, Clone, Copy)]
struct RoundedRectangle {
    a: f64,
    b: f64,
    r: f64,
}

impl RoundedRectangle {
    fn new(width: f64, height: f64, r: f64) -> Self {
        Self {
            a: width / 2.0,
            b: height / 2.0,
            r,
        }
    }

    fn perimeter(&self) -> f64 {
        4.0 * (self.a - self.r) + 4.0 * (self.b - self.r) + TAU * self.r
    }

    /// Position and unit tangent at arc length `s`.
    fn at(&self, s: f64) -> (Vector2<f64>, Vector2<f64>) {
        let (a, b, r) = (self.a, self.b, self.r);
        let mut s = s.rem_euclid(self.perimeter());
        // Half right side, then alternating corner arcs and sides.
        let half_side = b - r;
        if s < half_side {
            return (Vector2::new(a, s), Vector2::new(0.0, 1.0));
        }
        s -= half_side;
        let corners = [
            (Vector2::new(a - r, b - r), 0.0),
            (Vector2::new(-a + r, b - r), FRAC_PI_2),
            (Vector2::new(-a + r, -b + r), PI),
            (Vector2::new(a - r, -b + r), 3.0 * FRAC_PI_2),
        ];
        let sides = [2.0 * (a - r), 2.0 * (b - r), 2.0 * (a - r), half_side];
        for (i, (c, start)) in corners.iter().enumerate() {
            let arc = FRAC_PI_2 * r;
            if s < arc {
                let phi = start + if r > 0.0 { s / r } else { 0.0 };
                let (sp, cp) = phi.sin_cos();
                return (c + Vector2::new(cp, sp) * r, Vector2::new(-sp, cp));
            }
            s -= arc;
            let phi = start + FRAC_PI_2;
            let (sp, cp) = phi.sin_cos();
            let tangent = Vector2::new(-sp, cp);
            let side_start = c + Vector2::new(cp, sp) * r;
            if s < sides[i] || i == 3 {
                return (side_start + tangent * s, tangent);
            }
            s -= sides[i];
        }
        unreachable!("arc length reduced modulo the perimeter")
    }
}

/// Per-feature cylindrical spiral in image space about the depth axis:
/// `y_d(t) = y0 + [R cos wt, R sin wt, pitch wt / 2pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredTrajectory {
    /// Stacked anchor `y0` (3k).
    pub anchor: DVector<f64>,
    /// Radius in pixels.
    pub radius: f64,
    /// Scaled-depth advance per revolution.
    pub pitch: f64,
    /// rad/s.
    pub angular_rate: f64,
}

impl DesiredTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.anchor.len() % 3 != 0 || self.anchor.is_empty() {
            return Err(Error::InvalidArgument(
                "desired anchor must stack (u, v, d) triples".into(),
            ));
        }
        if !(self.radius >= 0.0 && self.pitch.is_finite() && self.angular_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "spiral needs radius >= 0 and finite pitch and rate".into(),
            ));
        }
        Ok(())
    }

    pub fn state(&self, t: f64) -> DesiredImageState {
        let w = self.angular_rate;
        let (s, c) = (w * t).sin_cos();
        let rise = self.pitch / TAU;
        let offset = [self.radius * c, self.radius * s, rise * w * t];
        let rate = [-self.radius * w * s, self.radius * w * c, rise * w];
        let accel = [-self.radius * w * w * c, -self.radius * w * w * s, 0.0];
        let n = self.anchor.len();
        DesiredImageState {
            y_d: DVector::from_fn(n, |i, _| self.anchor[i] + offset[i % 3]),
            y_d_dot: DVector::from_fn(n, |i, _| rate[i % 3]),
            y_d_ddot: DVector::from_fn(n, |i, _| accel[i % 3]),
        }
    }
}
