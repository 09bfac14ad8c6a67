//! Linear parameterization of the manipulator dynamics.
//!
//! Every term of `H qr_ddot + (Hdot/2 + C) qr_dot + g` is linear in the ten
//! standard inertial parameters of each link, so the `n x 10n` "full"
//! regressor column for a parameter is the dynamics evaluated with that
//! parameter set to one and all others to zero. Many of those columns are
//! zero or linearly dependent for a given kinematic structure; the regressor
//! below keeps an independent subset (the base parameters) and folds the
//! dependent parameters into them:
//!
//! ```text
//! Y_full theta_full = Y_ind (theta_ind + beta theta_dep)
//! ```
//!
//! The split is found numerically from a fixed set of random states, so it is
//! a deterministic function of the D-H table and gravity vector alone.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dynamics::DynamicsTerms;
use super::{LinkInertia, SerialKinematics};

const PARAMS_PER_LINK: usize = 10;
const IDENTIFICATION_SEED: u64 = 0x00b5_e9a7;
const IDENTIFICATION_SAMPLES: usize = 40;
const INDEPENDENCE_TOL: f64 = 1e-8;

/// Lumped (base) dynamic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicParams {
    pub theta_d: DVector<f64>,
}

/// Dynamic regressor `Y_d(q, qd, qr_dot, qr_ddot)` over base parameters.
#[derive(Debug, Clone)]
pub struct DynamicRegressor {
    kinematics: SerialKinematics,
    independent: Vec<usize>,
    dependent: Vec<usize>,
    beta: DMatrix<f64>,
}

impl DynamicRegressor {
    pub fn new(kinematics: SerialKinematics) -> Self {
        let n = kinematics.dof();
        let cols = PARAMS_PER_LINK * n;
        let mut rng = ChaCha8Rng::seed_from_u64(IDENTIFICATION_SEED);
        let mut stacked = DMatrix::zeros(IDENTIFICATION_SAMPLES * n, cols);
        for s in 0..IDENTIFICATION_SAMPLES {
            let mut draw = |scale: f64| DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale));
            let q = draw(std::f64::consts::PI);
            let qd = draw(2.0);
            let qr_dot = draw(2.0);
            let qr_ddot = draw(2.0);
            let block = full_regressor(&kinematics, &q, &qd, &qr_dot, &qr_ddot);
            stacked.view_mut((s * n, 0), (n, cols)).copy_from(&block);
        }

        // Greedy Gram-Schmidt in natural column order.
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut independent = Vec::new();
        let mut dependent = Vec::new();
        for c in 0..cols {
            let col = stacked.column(c).into_owned();
            let norm = col.norm();
            if norm == 0.0 {
                dependent.push(c);
                continue;
            }
            let mut r = col.clone();
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dot(&r);
                    r.axpy(-proj, b, 1.0);
                }
            }
            let rn = r.norm();
            if rn > INDEPENDENCE_TOL * norm {
                basis.push(r / rn);
                independent.push(c);
            } else {
                dependent.push(c);
            }
        }

        let a_ind = stacked.select_columns(independent.iter());
        let a_dep = stacked.select_columns(dependent.iter());
        let mut beta = if dependent.is_empty() {
            DMatrix::zeros(independent.len(), 0)
        } else {
            a_ind
                .svd(true, true)
                .solve(&a_dep, 1e-14)
                .expect("svd with u and v")
        };
        beta.apply(|b| {
            if b.abs() < 1e-10 {
                *b = 0.0
            }
        });
        Self {
            kinematics,
            independent,
            dependent,
            beta,
        }
    }

    pub fn kinematics(&self) -> &SerialKinematics {
        &self.kinematics
    }

    /// Number of base parameters `p3`.
    pub fn p3(&self) -> usize {
        self.independent.len()
    }

    /// Indices (into the `10 n` standard parameter vector) kept as base parameters.
    pub fn base_indices(&self) -> &[usize] {
        &self.independent
    }

    /// `n x p3` regressor with `Y_d theta_d = H qr_ddot + (Hdot/2 + C(q, qd)) qr_dot + g`.
    pub fn regressor(
        &self,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        qr_dot: &DVector<f64>,
        qr_ddot: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = self.kinematics.dof();
        let chain = self.kinematics.chain(q);
        let mut y = DMatrix::zeros(n, self.p3());
        for (col, &idx) in self.independent.iter().enumerate() {
            let column = unit_column(&self.kinematics, &chain, idx, qd, qr_dot, qr_ddot);
            y.set_column(col, &column);
        }
        y
    }

    /// Folds per-link mass properties into base parameters.
    pub fn lump(&self, links: &[LinkInertia]) -> DynamicParams {
        let full = standard_parameter_vector(links);
        let ind = DVector::from_iterator(
            self.independent.len(),
            self.independent.iter().map(|&i| full[i]),
        );
        let dep = DVector::from_iterator(
            self.dependent.len(),
            self.dependent.iter().map(|&i| full[i]),
        );
        DynamicParams {
            theta_d: ind + &self.beta * dep,
        }
    }
}

/// Concatenated `[m, m c, I_o]` of every link.
pub fn standard_parameter_vector(links: &[LinkInertia]) -> DVector<f64> {
    DVector::from_iterator(
        PARAMS_PER_LINK * links.len(),
        links.iter().flat_map(|l| l.standard_params()),
    )
}

fn unit_column(
    kinematics: &SerialKinematics,
    chain: &super::ChainKinematics,
    idx: usize,
    qd: &DVector<f64>,
    qr_dot: &DVector<f64>,
    qr_ddot: &DVector<f64>,
) -> DVector<f64> {
    let mut p = [0.0; PARAMS_PER_LINK];
    p[idx % PARAMS_PER_LINK] = 1.0;
    let mut terms = DynamicsTerms::zeros(kinematics.dof());
    terms.add_link(chain, idx / PARAMS_PER_LINK, &p, &kinematics.gravity);
    terms.inverse_dynamics(qd, qr_dot, qr_ddot)
}

/// The `n x 10n` regressor over standard parameters.
pub fn full_regressor(
    kinematics: &SerialKinematics,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qr_dot: &DVector<f64>,
    qr_ddot: &DVector<f64>,
) -> DMatrix<f64> {
    let n = kinematics.dof();
    let chain = kinematics.chain(q);
    let mut y = DMatrix::zeros(n, PARAMS_PER_LINK * n);
    for idx in 0..PARAMS_PER_LINK * n {
        y.set_column(
            idx,
            &unit_column(kinematics, &chain, idx, qd, qr_dot, qr_ddot),
        );
    }
    y
}
