use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::kinematics::ChainKinematics;
use crate::error::{Error, Result};
use crate::geometry::skew;

const MAX_INERTIA_CONDITION: f64 = 1e12;

/// `H(q)`, its partial derivatives `dH/dq_k` and `g(q)` at one configuration.
///
/// All three are linear in the per-link standard inertial parameters, which is
/// what the dynamic regressor relies on.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub inertia: DMatrix<f64>,
    pub inertia_partials: Vec<DMatrix<f64>>,
    pub gravity: DVector<f64>,
}

fn inertia_from_params(p: &[f64; 10]) -> Matrix3<f64> {
    Matrix3::new(p[4], p[5], p[6], p[5], p[7], p[8], p[6], p[8], p[9])
}

impl DynamicsTerms {
    pub fn zeros(n: usize) -> Self {
        Self {
            inertia: DMatrix::zeros(n, n),
            inertia_partials: vec![DMatrix::zeros(n, n); n],
            gravity: DVector::zeros(n),
        }
    }

    pub fn assemble(chain: &ChainKinematics, params: &[[f64; 10]], gravity: &Vector3<f64>) -> Self {
        let mut terms = Self::zeros(chain.dof());
        for (i, p) in params.iter().enumerate() {
            terms.add_link(chain, i, p, gravity);
        }
        terms
    }

    /// Adds the contribution of link `i` with standard parameters `p`.
    pub fn add_link(
        &mut self,
        chain: &ChainKinematics,
        i: usize,
        p: &[f64; 10],
        gravity: &Vector3<f64>,
    ) {
        let n = chain.dof();
        let lg = &chain.links[i];
        let m = i + 1;
        let mass = p[0];
        let first_moment = Vector3::new(p[1], p[2], p[3]);
        let inertia_local = inertia_from_params(p);

        let rot = &lg.rotation;
        let a = rot * first_moment;
        let iw = rot * inertia_local * rot.transpose();
        let jv_t = lg.jv.transpose();
        let jw_t = lg.jw.transpose();

        let x = &jv_t * skew(&a) * &lg.jw;
        self.inertia += (&jv_t * &lg.jv) * mass - &x - x.transpose() + &jw_t * iw * &lg.jw;

        let mut grav = -(&jv_t * gravity) * mass;
        for k in 0..n {
            let drot = chain.rotation_derivative(m, k);
            let da = drot * first_moment;
            let diw =
                drot * inertia_local * rot.transpose() + rot * inertia_local * drot.transpose();
            let djv = &lg.djv[k];
            let djw = &lg.djw[k];
            let djv_t = djv.transpose();
            let djw_t = djw.transpose();

            let dx =
                &djv_t * skew(&a) * &lg.jw + &jv_t * skew(&da) * &lg.jw + &jv_t * skew(&a) * djw;
            let d_lin = &djv_t * &lg.jv;
            let d_rot = &djw_t * iw * &lg.jw;
            self.inertia_partials[k] += (&d_lin + d_lin.transpose()) * mass - &dx - dx.transpose()
                + &d_rot
                + d_rot.transpose()
                + &jw_t * diw * &lg.jw;

            grav[k] -= gravity.dot(&da);
        }
        self.gravity += grav;
    }

    pub fn dof(&self) -> usize {
        self.gravity.len()
    }

    /// `Hdot = sum_k dH/dq_k qdot_k`.
    pub fn inertia_rate(&self, qdot: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let mut hdot = DMatrix::zeros(n, n);
        for (k, dh) in self.inertia_partials.iter().enumerate() {
            hdot += dh * qdot[k];
        }
        hdot
    }

    /// Coriolis matrix from Christoffel symbols of the first kind; equals
    /// `Hdot/2 + C` with `C` skew-symmetric.
    pub fn christoffel(&self, qdot: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let dh = &self.inertia_partials;
        DMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| 0.5 * (dh[k][(i, j)] + dh[j][(i, k)] - dh[i][(j, k)]) * qdot[k])
                .sum()
        })
    }

    /// The skew-symmetric part `C = christoffel - Hdot/2`.
    pub fn skew_coriolis(&self, qdot: &DVector<f64>) -> DMatrix<f64> {
        let c = self.christoffel(qdot);
        (&c - c.transpose()) * 0.5
    }

    /// `H qr_ddot + (Hdot/2 + C(q, qdot)) qr_dot + g`.
    pub fn inverse_dynamics(
        &self,
        qdot: &DVector<f64>,
        qr_dot: &DVector<f64>,
        qr_ddot: &DVector<f64>,
    ) -> DVector<f64> {
        &self.inertia * qr_ddot + self.christoffel(qdot) * qr_dot + &self.gravity
    }

    pub fn forward_dynamics(
        &self,
        qdot: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let eig = self.inertia.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
            (lo.min(e), hi.max(e.abs()))
        });
        if !(lo > 0.0) || hi / lo > MAX_INERTIA_CONDITION {
            return Err(Error::SingularInertia(if lo > 0.0 {
                hi / lo
            } else {
                f64::INFINITY
            }));
        }
        let rhs = tau - self.christoffel(qdot) * qdot - &self.gravity;
        let chol = self
            .inertia
            .clone()
            .cholesky()
            .ok_or(Error::SingularInertia(f64::INFINITY))?;
        Ok(chol.solve(&rhs))
    }
}

pub(super) fn potential_energy(
    chain: &ChainKinematics,
    params: &[[f64; 10]],
    gravity: &Vector3<f64>,
) -> f64 {
    params
        .iter()
        .zip(&chain.links)
        .map(|(p, lg)| {
            let a = lg.rotation * Vector3::new(p[1], p[2], p[3]);
            -gravity.dot(&(lg.origin * p[0] + a))
        })
        .sum()
}
