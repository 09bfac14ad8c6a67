//! The hybrid two-camera rig: an RGBD camera on the end-effector and a fixed
//! RGBD camera in the workspace.
//!
//! The eye-in-hand feature velocity splits into a part driven by the joints
//! and a part driven by the target's motion seen in the fixed camera:
//!
//! ```text
//! ydot = Q(q) qdot + J(q) ydot_fixed
//! ```
//!
//! Both products are linear in lumped camera parameters, `Q phi = Y theta_k`
//! and `J phi = W theta_m`, with regressors built from measured image
//! features, the joint angles and the (known) arm kinematics.
//!
//! # Parameterization
//!
//! Let `P = mu_e K_e R_ce` (rows `r1, r2, r3`), where `K_e` is the eye-in-hand
//! pinhole matrix and `R_ce` rotates end-effector coordinates into the camera.
//! Writing the target point in end-effector coordinates as `x_E`, the RGBD
//! projection differentiates to
//!
//! ```text
//! u' = (r1 - u r3) . x_E' / d,   v' = (r2 - v r3) . x_E' / d,   d' = r3 . x_E'
//! ```
//!
//! with `(u, v, d)` the measured eye-in-hand feature. The point itself is an
//! affine function `x = B ytilde` of the lifted feature
//! `ytilde = (u_f d_f, v_f d_f, d_f, 1)` of a reference camera, and its
//! end-effector velocity is `x_E' = -a - A B ytilde` for known `a`, `A`.
//! `theta_k` stacks, for each `r_i`, the 3 entries of `r_i` and the 36 products
//! `r_ij B_lm` (117 entries). `theta_m` stacks the 27 products `r_ij G_lm`
//! per `r_i`, with `G` the first three columns of `B` (81 entries).

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix3xX, Matrix4x3, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{
    back_project, omega_matrix, project, projection_jacobian, skew, CartesianPoint, ImageFeature,
    RgbdIntrinsics, Transform,
};
use crate::robot::SerialKinematics;

/// Length of `theta_k`.
pub const P1: usize = 117;
/// Length of `theta_m`.
pub const P2: usize = 81;

const BLOCK_K: usize = 39;
const BLOCK_M: usize = 27;

/// Damping used for the estimated-Jacobian inverse.
pub const DEFAULT_DAMPING: f64 = 1e-4;

/// Which camera the regressor lifts the target point from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Target point taken from the fixed camera (the hybrid controller).
    Hybrid,
    /// Target point taken from the eye-in-hand camera only (baseline).
    EyeInHand,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(Self::Hybrid),
            "eye_in_hand" => Ok(Self::EyeInHand),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme '{other}' (expected hybrid or eye_in_hand)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hybrid => "hybrid",
            Self::EyeInHand => "eye_in_hand",
        })
    }
}

/// Camera intrinsics and mounting transforms. These are the plant's ground
/// truth; a controller never sees them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridRig {
    pub eih_intr: RgbdIntrinsics,
    pub fixed_intr: RgbdIntrinsics,
    /// `T_eih<-EE`: end-effector coordinates to eye-in-hand camera coordinates.
    pub eih_from_ee: Transform,
    /// `T_BASE<-fixed`: fixed-camera coordinates to base coordinates.
    pub base_from_fixed: Transform,
}

/// Features seen by both cameras, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub eih: Vec<ImageFeature>,
    pub fixed: Vec<ImageFeature>,
}

impl FeatureSet {
    pub fn new(eih: Vec<ImageFeature>, fixed: Vec<ImageFeature>) -> Result<Self> {
        if eih.len() != fixed.len() || eih.is_empty() {
            return Err(Error::Dimension {
                context: "feature set",
                expected: eih.len().max(1),
                got: fixed.len(),
            });
        }
        Ok(Self { eih, fixed })
    }

    pub fn len(&self) -> usize {
        self.eih.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eih.is_empty()
    }

    /// Stacked eye-in-hand features `y` (3k).
    pub fn y(&self) -> DVector<f64> {
        stack(&self.eih)
    }

    /// Stacked fixed-camera features `y_fixed` (3k).
    pub fn y_fixed(&self) -> DVector<f64> {
        stack(&self.fixed)
    }
}

pub fn stack(features: &[ImageFeature]) -> DVector<f64> {
    DVector::from_iterator(
        3 * features.len(),
        features.iter().flat_map(|f| [f.u, f.v, f.d]),
    )
}

pub fn unstack(y: &DVector<f64>) -> Vec<ImageFeature> {
    y.as_slice()
        .chunks_exact(3)
        .map(|c| ImageFeature::new(c[0], c[1], c[2]))
        .collect()
}

/// `M = Omega(z) [R | t]`, so that `M x~ = project(transform(x))` for a point at depth `z`.
pub fn projection_matrix(
    intr: &RgbdIntrinsics,
    cam_from_x: &Transform,
    z: f64,
) -> Result<Matrix3x4<f64>> {
    Ok(omega_matrix(intr, z)? * cam_from_x.to_3x4())
}

/// Minimum-norm right inverse of a full-row-rank 3x4 matrix.
pub fn pseudo_inverse(m: &Matrix3x4<f64>) -> Result<Matrix4x3<f64>> {
    let svd = m.svd(true, true);
    let smin = svd.singular_values.min();
    if !(smin > 1e-9) {
        return Err(Error::DegenerateProjection(smin));
    }
    svd.pseudo_inverse(0.0)
        .map_err(|_| Error::DegenerateProjection(smin))
}

/// Damped least-squares inverse `Q^T (Q Q^T + rho^2 I)^-1`, computed through the SVD.
pub fn damped_pseudo_inverse(q: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let svd = q.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let gains = svd.singular_values.map(|s| {
        let den = s * s + rho * rho;
        if den > 0.0 {
            s / den
        } else {
            0.0
        }
    });
    v_t.transpose() * DMatrix::from_diagonal(&gains) * u.transpose()
}

impl HybridRig {
    /// Project base-frame points into both cameras.
    pub fn observe(
        &self,
        kin: &SerialKinematics,
        q: &DVector<f64>,
        points: &[CartesianPoint],
    ) -> Result<FeatureSet> {
        let ee_from_base = kin.forward_kinematics(q).inverse();
        let fixed_from_base = self.base_from_fixed.inverse();
        let mut eih = Vec::with_capacity(points.len());
        let mut fixed = Vec::with_capacity(points.len());
        for p in points {
            let xc = self
                .eih_from_ee
                .transform_point(&ee_from_base.transform_point(p));
            eih.push(project(&self.eih_intr, &xc)?);
            fixed.push(project(
                &self.fixed_intr,
                &fixed_from_base.transform_point(p),
            )?);
        }
        FeatureSet::new(eih, fixed)
    }

    /// Base-frame point behind a fixed-camera feature.
    pub fn locate(&self, y_fixed: &ImageFeature) -> Result<CartesianPoint> {
        Ok(self
            .base_from_fixed
            .transform_point(&back_project(&self.fixed_intr, y_fixed)?))
    }

    /// Fixed-camera feature velocity of a base-frame point moving at `velocity`.
    pub fn fixed_feature_rate(
        &self,
        point: &CartesianPoint,
        velocity: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        let fixed_from_base = self.base_from_fixed.inverse();
        let xf = fixed_from_base.transform_point(point);
        Ok(
            projection_jacobian(&self.fixed_intr, &xf)?
                * fixed_from_base.transform_vector(velocity),
        )
    }

    /// Ground-truth image Jacobians `(Q, J)` for stacked fixed-camera features.
    ///
    /// Computed by differentiating the full projection chain; returns `Q` (3k x n)
    /// and block-diagonal `J` (3k x 3k).
    pub fn image_jacobians(
        &self,
        kin: &SerialKinematics,
        q: &DVector<f64>,
        fixed: &[ImageFeature],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = kin.dof();
        let k = fixed.len();
        let chain = kin.chain(q);
        let ee = chain.end_effector();
        let (jv, jw) = chain.end_effector_jacobian();
        let rot_t = ee.rotation.transpose();
        let mut big_q = DMatrix::zeros(3 * k, n);
        let mut big_j = DMatrix::zeros(3 * k, 3 * k);
        for (i, yf) in fixed.iter().enumerate() {
            let xf = back_project(&self.fixed_intr, yf)?;
            let xb = self.base_from_fixed.transform_point(&xf);
            let lever = xb.coords - ee.translation;
            let xe = CartesianPoint::from(rot_t * lever);
            let xc = self.eih_from_ee.transform_point(&xe);
            let l_eih = projection_jacobian(&self.eih_intr, &xc)?;
            let m = l_eih * self.eih_from_ee.rotation * rot_t;
            for j in 0..n {
                let col = -(m * (jv.column(j) + jw.column(j).cross(&lever)));
                big_q.view_mut((3 * i, j), (3, 1)).copy_from(&col);
            }
            let l_fixed = projection_jacobian(&self.fixed_intr, &xf)?;
            let l_fixed_inv = l_fixed
                .try_inverse()
                .ok_or(Error::DegenerateProjection(l_fixed.determinant()))?;
            let block = m * self.base_from_fixed.rotation * l_fixed_inv;
            big_j.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&block);
        }
        Ok((big_q, big_j))
    }

    /// Rows `r1, r2, r3` of `mu_e K_e R_ce`.
    fn image_rows(&self) -> Matrix3<f64> {
        self.eih_intr.pinhole_matrix() * self.eih_from_ee.rotation * self.eih_intr.mu
    }

    /// `B` with `x = B ytilde` for the scheme's reference camera.
    fn lift_matrix(&self, scheme: Scheme) -> Matrix3x4<f64> {
        let mut b = Matrix3x4::zeros();
        match scheme {
            Scheme::Hybrid => {
                let k_inv = self
                    .fixed_intr
                    .pinhole_matrix()
                    .try_inverse()
                    .expect("validated intrinsics");
                let g = self.base_from_fixed.rotation * k_inv / self.fixed_intr.mu;
                b.fixed_view_mut::<3, 3>(0, 0).copy_from(&g);
                b.fixed_view_mut::<3, 1>(0, 3)
                    .copy_from(&self.base_from_fixed.translation);
            }
            Scheme::EyeInHand => {
                let k_inv = self
                    .eih_intr
                    .pinhole_matrix()
                    .try_inverse()
                    .expect("validated intrinsics");
                let r_t = self.eih_from_ee.rotation.transpose();
                b.fixed_view_mut::<3, 3>(0, 0)
                    .copy_from(&(r_t * k_inv / self.eih_intr.mu));
                b.fixed_view_mut::<3, 1>(0, 3)
                    .copy_from(&(-(r_t * self.eih_from_ee.translation)));
            }
        }
        b
    }

    /// Ground-truth `theta_k` for `scheme`.
    pub fn true_theta_k(&self, scheme: Scheme) -> DVector<f64> {
        let rows = self.image_rows();
        let b = self.lift_matrix(scheme);
        let mut theta = DVector::zeros(P1);
        for i in 0..3 {
            let base = i * BLOCK_K;
            for j in 0..3 {
                theta[base + j] = rows[(i, j)];
                for l in 0..3 {
                    for m in 0..4 {
                        theta[base + 3 + j * 12 + l * 4 + m] = rows[(i, j)] * b[(l, m)];
                    }
                }
            }
        }
        theta
    }

    /// Ground-truth `theta_m` (hybrid scheme only).
    pub fn true_theta_m(&self) -> DVector<f64> {
        let rows = self.image_rows();
        let b = self.lift_matrix(Scheme::Hybrid);
        let mut theta = DVector::zeros(P2);
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    for m in 0..3 {
                        theta[i * BLOCK_M + j * 9 + l * 3 + m] = rows[(i, j)] * b[(l, m)];
                    }
                }
            }
        }
        theta
    }
}

/// Kinematic quantities at one joint configuration shared by every regressor
/// evaluation: end-effector pose and Jacobian.
#[derive(Debug, Clone)]
pub struct RegressorFrame {
    rot: Matrix3<f64>,
    pos: Vector3<f64>,
    jv: Matrix3xX<f64>,
    jw: Matrix3xX<f64>,
}

impl RegressorFrame {
    pub fn new(kin: &SerialKinematics, q: &DVector<f64>) -> Self {
        let chain = kin.chain(q);
        let ee = *chain.end_effector();
        let (jv, jw) = chain.end_effector_jacobian();
        Self {
            rot: ee.rotation,
            pos: ee.translation,
            jv: jv.clone(),
            jw: jw.clone(),
        }
    }

    pub fn dof(&self) -> usize {
        self.jv.ncols()
    }

    /// `Y(features, q, phi)` with `Q phi = Y theta_k` (3k x 117).
    pub fn y(
        &self,
        scheme: Scheme,
        features: &FeatureSet,
        phi: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        check_len("joint-space phi", self.dof(), phi.len())?;
        let v = &self.jv * phi;
        let w = &self.jw * phi;
        let rot_t = self.rot.transpose();
        let (a_mat, a_vec) = match scheme {
            Scheme::Hybrid => (rot_t * skew(&w), rot_t * (v - skew(&w) * self.pos)),
            Scheme::EyeInHand => (skew(&(rot_t * w)), rot_t * v),
        };
        let k = features.len();
        let mut y = DMatrix::zeros(3 * k, P1);
        let mut signal = [0.0; BLOCK_K];
        for f in 0..k {
            let lifted = match scheme {
                Scheme::Hybrid => lift(&features.fixed[f]),
                Scheme::EyeInHand => lift(&features.eih[f]),
            };
            for j in 0..3 {
                signal[j] = -a_vec[j];
                for l in 0..3 {
                    for m in 0..4 {
                        signal[3 + j * 12 + l * 4 + m] = -a_mat[(j, l)] * lifted[m];
                    }
                }
            }
            fill_image_rows(&mut y, 3 * f, &features.eih[f], &signal, BLOCK_K);
        }
        Ok(y)
    }

    /// `W(features, q, phi)` with `J phi = W theta_m` (3k x 81).
    pub fn w(&self, features: &FeatureSet, phi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let k = features.len();
        check_len("fixed-image phi", 3 * k, phi.len())?;
        let rot_t = self.rot.transpose();
        let mut w = DMatrix::zeros(3 * k, P2);
        let mut signal = [0.0; BLOCK_M];
        for f in 0..k {
            let yf = &features.fixed[f];
            let lift_rate = Matrix3::new(yf.d, 0.0, yf.u, 0.0, yf.d, yf.v, 0.0, 0.0, 1.0)
                * Vector3::new(phi[3 * f], phi[3 * f + 1], phi[3 * f + 2]);
            for j in 0..3 {
                for l in 0..3 {
                    for m in 0..3 {
                        signal[j * 9 + l * 3 + m] = rot_t[(j, l)] * lift_rate[m];
                    }
                }
            }
            fill_image_rows(&mut w, 3 * f, &features.eih[f], &signal, BLOCK_M);
        }
        Ok(w)
    }

    /// Estimated Jacobian `Q^` assembled column by column from `Y(e_j) theta^_k`.
    pub fn estimated_jacobian(
        &self,
        scheme: Scheme,
        features: &FeatureSet,
        theta_k: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        check_len("theta_k", P1, theta_k.len())?;
        let n = self.dof();
        let mut q_hat = DMatrix::zeros(3 * features.len(), n);
        for j in 0..n {
            let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            q_hat.set_column(j, &(self.y(scheme, features, &e)? * theta_k));
        }
        Ok(q_hat)
    }
}

fn lift(y: &ImageFeature) -> Vector4<f64> {
    Vector4::new(y.u * y.d, y.v * y.d, y.d, 1.0)
}

/// Spreads a per-`r_i` signal over the `u`, `v`, `d` rows of one feature.
fn fill_image_rows(
    out: &mut DMatrix<f64>,
    row: usize,
    y: &ImageFeature,
    signal: &[f64],
    block: usize,
) {
    let inv_d = 1.0 / y.d;
    for (c, &s) in signal.iter().enumerate() {
        out[(row, c)] = inv_d * s;
        out[(row, 2 * block + c)] = -y.u * inv_d * s;
        out[(row + 1, block + c)] = inv_d * s;
        out[(row + 1, 2 * block + c)] = -y.v * inv_d * s;
        out[(row + 2, 2 * block + c)] = s;
    }
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

/// `(Q^ phi, J^ phi) = (Y theta^_k, W theta^_m)`.
pub fn estimated_products(
    y: &DMatrix<f64>,
    w: &DMatrix<f64>,
    theta_hat_k: &DVector<f64>,
    theta_hat_m: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len("theta_k", y.ncols(), theta_hat_k.len())?;
    check_len("theta_m", w.ncols(), theta_hat_m.len())?;
    Ok((y * theta_hat_k, w * theta_hat_m))
}

#[cfg(test)]
pub(crate) mod test_rigs {
    use super::*;
    use crate::geometry::Transform;

    /// Eye-in-hand camera looking along the end-effector x axis and a fixed
    /// camera looking at the region in front of the spatial test arm.
    pub fn rig() -> HybridRig {
        let cam_in_ee = Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let ee_from_eih = Transform::new(cam_in_ee, Vector3::new(0.02, 0.01, -0.03));
        let eye = CartesianPoint::new(0.9, -1.2, 1.1);
        let target = CartesianPoint::new(0.8, 0.0, 0.3);
        HybridRig {
            eih_intr: RgbdIntrinsics::new(600.0, 590.0, 1.55, 320.0, 240.0, 1.2).unwrap(),
            fixed_intr: RgbdIntrinsics::new(615.0, 620.0, 1.6, 310.0, 250.0, 0.9).unwrap(),
            eih_from_ee: ee_from_eih.inverse(),
            base_from_fixed: Transform::look_at(&eye, &target, &Vector3::z()),
        }
    }

    /// Points placed in front of the eye-in-hand camera at configuration `q`.
    pub fn points_ahead(kin: &SerialKinematics, q: &DVector<f64>, k: usize) -> Vec<CartesianPoint> {
        let ee = kin.forward_kinematics(q);
        (0..k)
            .map(|i| {
                let s = i as f64;
                ee.transform_point(&CartesianPoint::new(
                    0.35 + 0.03 * s,
                    0.02 - 0.04 * s,
                    0.03 * s - 0.01,
                ))
            })
            .collect()
    }
}
