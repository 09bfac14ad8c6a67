//! Serial-manipulator kinematics and rigid-body dynamics.
//!
//! The dynamics are written as
//! `H(q) qdd + (Hdot/2 + C(q, qd)) qd + g(q) = tau` with `C` skew-symmetric.
//! `Hdot/2 + C` is the Christoffel-symbol Coriolis matrix, exposed as
//! [`RobotModel::coriolis_total`].

mod dynamics;
mod kinematics;
mod regressor;

pub use dynamics::DynamicsTerms;
pub use kinematics::{ChainKinematics, LinkGeometry};
pub use regressor::{DynamicParams, DynamicRegressor};

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

/// One Denavit-Hartenberg row (standard convention):
/// `T = Rz(q + theta_offset) Tz(d) Tx(a) Rx(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub fn new(a: f64, alpha: f64, d: f64, theta_offset: f64) -> Self {
        Self {
            a,
            alpha,
            d,
            theta_offset,
        }
    }
}

/// Mass properties of one link, expressed in the link's D-H frame (the frame at
/// the distal joint of the link).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkInertia {
    pub mass: f64,
    /// Center of mass (m).
    pub com: Vector3<f64>,
    /// Inertia tensor about the center of mass (kg m^2).
    pub inertia: Matrix3<f64>,
}

impl LinkInertia {
    pub fn new(mass: f64, com: Vector3<f64>, inertia: Matrix3<f64>) -> Self {
        Self { mass, com, inertia }
    }

    pub fn point_mass(mass: f64, com: Vector3<f64>) -> Self {
        Self::new(mass, com, Matrix3::zeros())
    }

    /// Uniform slender rod of length `length` lying along the link x axis and
    /// ending at the frame origin.
    pub fn rod_along_x(mass: f64, length: f64) -> Self {
        let i = mass * length * length / 12.0;
        Self::new(
            mass,
            Vector3::new(-length / 2.0, 0.0, 0.0),
            Matrix3::from_diagonal(&Vector3::new(i * 1e-2, i, i)),
        )
    }

    /// Standard inertial parameters `[m, m cx, m cy, m cz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]`
    /// with the inertia taken about the frame origin.
    pub fn standard_params(&self) -> [f64; 10] {
        let m = self.mass;
        let c = self.com;
        let io = self.inertia + (Matrix3::identity() * c.norm_squared() - c * c.transpose()) * m;
        [
            m,
            m * c.x,
            m * c.y,
            m * c.z,
            io[(0, 0)],
            io[(0, 1)],
            io[(0, 2)],
            io[(1, 1)],
            io[(1, 2)],
            io[(2, 2)],
        ]
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidModel(format!(
                "link {index}: mass must be positive"
            )));
        }
        let asym = (self.inertia - self.inertia.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "link {index}: inertia not symmetric"
            )));
        }
        let eig = self.inertia.symmetric_eigenvalues();
        if eig.iter().any(|&e| e < -1e-12) {
            return Err(Error::InvalidModel(format!(
                "link {index}: inertia has a negative eigenvalue"
            )));
        }
        Ok(())
    }
}

/// Kinematic structure of a revolute serial arm plus the gravity vector.
/// This is everything a regressor needs; it carries no mass properties.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialKinematics {
    pub dh: Vec<DhRow>,
    /// Gravity acceleration in the base frame (m/s^2).
    pub gravity: Vector3<f64>,
}

impl SerialKinematics {
    pub fn new(dh: Vec<DhRow>, gravity: Vector3<f64>) -> Result<Self> {
        if dh.is_empty() {
            return Err(Error::InvalidModel("at least one joint is required".into()));
        }
        Ok(Self { dh, gravity })
    }

    pub fn dof(&self) -> usize {
        self.dh.len()
    }

    pub fn chain(&self, q: &DVector<f64>) -> ChainKinematics {
        ChainKinematics::new(&self.dh, q)
    }

    /// End-effector pose in the base frame (`base_from_ee`).
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> crate::geometry::Transform {
        kinematics::forward_kinematics(&self.dh, q)
    }
}

/// Joint positions (rad) and velocities (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Self {
        Self { q, qdot }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self::new(q, DVector::zeros(n))
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|x| x.is_finite())
    }
}

/// A revolute serial manipulator with known mass properties.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub kinematics: SerialKinematics,
    pub links: Vec<LinkInertia>,
}

impl RobotModel {
    pub fn new(kinematics: SerialKinematics, links: Vec<LinkInertia>) -> Result<Self> {
        if links.len() != kinematics.dof() {
            return Err(Error::Dimension {
                context: "robot links",
                expected: kinematics.dof(),
                got: links.len(),
            });
        }
        for (i, l) in links.iter().enumerate() {
            l.validate(i)?;
        }
        Ok(Self { kinematics, links })
    }

    pub fn dof(&self) -> usize {
        self.kinematics.dof()
    }

    pub fn forward_kinematics(&self, q: &DVector<f64>) -> crate::geometry::Transform {
        self.kinematics.forward_kinematics(q)
    }

    fn params(&self) -> Vec<[f64; 10]> {
        self.links
            .iter()
            .map(LinkInertia::standard_params)
            .collect()
    }

    /// Inertia matrix with its partial derivatives and the gravity torques.
    pub fn dynamics_terms(&self, q: &DVector<f64>) -> DynamicsTerms {
        let chain = self.kinematics.chain(q);
        DynamicsTerms::assemble(&chain, &self.params(), &self.kinematics.gravity)
    }

    pub fn inertia_matrix(&self, q: &DVector<f64>) -> nalgebra::DMatrix<f64> {
        self.dynamics_terms(q).inertia
    }

    /// Skew-symmetric `C` such that `Hdot/2 + C` is the Coriolis/centrifugal matrix.
    pub fn coriolis_matrix(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> nalgebra::DMatrix<f64> {
        self.dynamics_terms(q).skew_coriolis(qdot)
    }

    /// `Hdot/2 + C`, the Christoffel-symbol Coriolis matrix.
    pub fn coriolis_total(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> nalgebra::DMatrix<f64> {
        self.dynamics_terms(q).christoffel(qdot)
    }

    pub fn inertia_derivative(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
    ) -> nalgebra::DMatrix<f64> {
        self.dynamics_terms(q).inertia_rate(qdot)
    }

    pub fn gravity_vector(&self, q: &DVector<f64>) -> DVector<f64> {
        self.dynamics_terms(q).gravity
    }

    pub fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let chain = self.kinematics.chain(q);
        dynamics::potential_energy(&chain, &self.params(), &self.kinematics.gravity)
    }

    pub fn kinetic_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
        0.5 * qdot.dot(&(self.inertia_matrix(q) * qdot))
    }

    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
    ) -> DVector<f64> {
        self.dynamics_terms(q).inverse_dynamics(qdot, qdot, qddot)
    }

    pub fn forward_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.dynamics_terms(q).forward_dynamics(qdot, tau)
    }

    /// Lumped dynamic parameters matching `regressor`.
    pub fn true_theta_d(&self, regressor: &DynamicRegressor) -> DynamicParams {
        regressor.lump(&self.links)
    }
}

#[cfg(test)]
pub(crate) mod test_arms {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    pub fn planar_point_mass(m1: f64, m2: f64, l1: f64, l2: f64, g: f64) -> RobotModel {
        let kin = SerialKinematics::new(
            vec![DhRow::new(l1, 0.0, 0.0, 0.0), DhRow::new(l2, 0.0, 0.0, 0.0)],
            Vector3::new(0.0, -g, 0.0),
        )
        .unwrap();
        RobotModel::new(
            kin,
            vec![
                LinkInertia::point_mass(m1, Vector3::zeros()),
                LinkInertia::point_mass(m2, Vector3::zeros()),
            ],
        )
        .unwrap()
    }

    pub fn spatial_3dof() -> RobotModel {
        let kin = SerialKinematics::new(
            vec![
                DhRow::new(0.05, FRAC_PI_2, 0.4, 0.1),
                DhRow::new(0.4, 0.0, 0.02, -0.2),
                DhRow::new(0.3, -0.3, 0.0, 0.0),
            ],
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap();
        let inertia =
            |a: f64, b: f64, c: f64, x: f64| Matrix3::new(a, x, 0.0, x, b, 0.0, 0.0, 0.0, c);
        RobotModel::new(
            kin,
            vec![
                LinkInertia::new(
                    3.0,
                    Vector3::new(0.01, -0.2, 0.02),
                    inertia(0.05, 0.02, 0.05, 0.001),
                ),
                LinkInertia::new(
                    2.0,
                    Vector3::new(-0.2, 0.01, 0.0),
                    inertia(0.003, 0.03, 0.03, 0.0005),
                ),
                LinkInertia::new(
                    1.0,
                    Vector3::new(-0.15, 0.0, 0.01),
                    inertia(0.001, 0.01, 0.01, 0.0),
                ),
            ],
        )
        .unwrap()
    }
}
