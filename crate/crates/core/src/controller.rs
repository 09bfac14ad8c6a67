//! Adaptive hybrid visual-servoing tracking controller.
//!
//! Per tick the controller forms the reference image velocity
//! `ydot_r = ydot_d - lambda dy - J^ ydot_fixed`, maps it to joint space through
//! the damped inverse of the estimated Jacobian, builds the sliding vector
//! `s = qdot - qdot_r` and applies
//!
//! ```text
//! tau = Y_d(q, qdot, qdot_r, qddot_r) theta^_d - Q^T K1 dy - K2 s
//! ```
//!
//! The estimates then follow
//!
//! ```text
//! theta^_d' = -Psi_d^-1 Y_d^T s
//! theta^_k' = +Psi_k^-1 Y(qdot)^T K1 dy
//! theta^_m' = +Psi_m^-1 W(ydot_fixed)^T K1 dy
//! ```
//!
//! integrated with explicit Euler at the control rate.
//!
//! The controller is built from the arm's kinematic description, gains and
//! initial estimates only. It never sees true camera or mass parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rig::{
    damped_pseudo_inverse, FeatureSet, RegressorFrame, Scheme, DEFAULT_DAMPING, P1, P2,
};
use crate::robot::{DynamicRegressor, JointState, SerialKinematics};

/// Default filter time constant of the reference acceleration, in control
/// periods. Zero gives a plain backward difference.
pub const ACCEL_FILTER_STEPS: f64 = 0.0;

/// Controller gains. Inverses of the adaptation gains are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    lambda: f64,
    k1: DMatrix<f64>,
    k2: DMatrix<f64>,
    psi_d: DMatrix<f64>,
    psi_k: DMatrix<f64>,
    psi_m: DMatrix<f64>,
    psi_d_inv: DMatrix<f64>,
    psi_k_inv: DMatrix<f64>,
    psi_m_inv: DMatrix<f64>,
}

fn check_spd(name: &str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::InvalidGains(format!(
            "{name}: expected {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGains(format!("{name}: non-finite entry")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidGains(format!("{name}: not symmetric")));
    }
    let min_eig = m.clone().symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(Error::InvalidGains(format!(
            "{name}: not positive definite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

fn spd_inverse(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidGains(format!("{name}: Cholesky factorization failed")))
}

impl ControllerGains {
    /// Validates shapes for `k` features, `n` joints and `p3` dynamic parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda: f64,
        k1: DMatrix<f64>,
        k2: DMatrix<f64>,
        psi_d: DMatrix<f64>,
        psi_k: DMatrix<f64>,
        psi_m: DMatrix<f64>,
        k: usize,
        n: usize,
        p3: usize,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidGains(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        check_spd("k1", &k1, 3 * k)?;
        check_spd("k2", &k2, n)?;
        check_spd("psi_d", &psi_d, p3)?;
        check_spd("psi_k", &psi_k, P1)?;
        check_spd("psi_m", &psi_m, P2)?;
        Ok(Self {
            psi_d_inv: spd_inverse("psi_d", &psi_d)?,
            psi_k_inv: spd_inverse("psi_k", &psi_k)?,
            psi_m_inv: spd_inverse("psi_m", &psi_m)?,
            lambda,
            k1,
            k2,
            psi_d,
            psi_k,
            psi_m,
        })
    }

    /// Gains that are multiples of the identity.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        lambda: f64,
        k1: f64,
        k2: f64,
        psi_d: f64,
        psi_k: f64,
        psi_m: f64,
        k: usize,
        n: usize,
        p3: usize,
    ) -> Result<Self> {
        let eye = |d: usize, s: f64| DMatrix::identity(d, d) * s;
        Self::new(
            lambda,
            eye(3 * k, k1),
            eye(n, k2),
            eye(p3, psi_d),
            eye(P1, psi_k),
            eye(P2, psi_m),
            k,
            n,
            p3,
        )
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn k1(&self) -> &DMatrix<f64> {
        &self.k1
    }
    pub fn k2(&self) -> &DMatrix<f64> {
        &self.k2
    }
    pub fn psi_d(&self) -> &DMatrix<f64> {
        &self.psi_d
    }
    pub fn psi_k(&self) -> &DMatrix<f64> {
        &self.psi_k
    }
    pub fn psi_m(&self) -> &DMatrix<f64> {
        &self.psi_m
    }
    pub fn psi_d_inv(&self) -> &DMatrix<f64> {
        &self.psi_d_inv
    }
    pub fn psi_k_inv(&self) -> &DMatrix<f64> {
        &self.psi_k_inv
    }
    pub fn psi_m_inv(&self) -> &DMatrix<f64> {
        &self.psi_m_inv
    }
    pub fn features(&self) -> usize {
        self.k1.nrows() / 3
    }
}

/// Current parameter estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    pub theta_hat_k: DVector<f64>,
    pub theta_hat_m: DVector<f64>,
    pub theta_hat_d: DVector<f64>,
}

impl AdaptiveState {
    pub fn new(
        theta_hat_k: DVector<f64>,
        theta_hat_m: DVector<f64>,
        theta_hat_d: DVector<f64>,
    ) -> Result<Self> {
        let s = Self {
            theta_hat_k,
            theta_hat_m,
            theta_hat_d,
        };
        if s.theta_hat_k.len() != P1 {
            return Err(Error::Dimension {
                context: "theta_hat_k",
                expected: P1,
                got: s.theta_hat_k.len(),
            });
        }
        if s.theta_hat_m.len() != P2 {
            return Err(Error::Dimension {
                context: "theta_hat_m",
                expected: P2,
                got: s.theta_hat_m.len(),
            });
        }
        if !s.is_finite() {
            return Err(Error::NonFinite {
                t: 0.0,
                what: "initial estimates".into(),
            });
        }
        Ok(s)
    }

    pub fn is_finite(&self) -> bool {
        self.theta_hat_k
            .iter()
            .chain(self.theta_hat_m.iter())
            .chain(self.theta_hat_d.iter())
            .all(|x| x.is_finite())
    }
}

/// Desired image state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredImageState {
    pub y_d: DVector<f64>,
    pub y_d_dot: DVector<f64>,
    pub y_d_ddot: DVector<f64>,
}

/// Everything the controller measures at a tick.
#[derive(Debug, Clone, Copy)]
pub struct Measurement<'a> {
    pub features: &'a FeatureSet,
    pub y_fixed_dot: &'a DVector<f64>,
    pub joint: &'a JointState,
}

/// Result of one control evaluation. Besides the torque it keeps the
/// regressors the adaptive laws consume.
#[derive(Debug, Clone)]
pub struct ControllerOutput {
    pub tau: DVector<f64>,
    pub s_q: DVector<f64>,
    pub qr_dot: DVector<f64>,
    pub qr_ddot: DVector<f64>,
    pub y_r_dot: DVector<f64>,
    pub delta_y: DVector<f64>,
    /// Estimated joint-to-image Jacobian `Q^`.
    pub q_hat: DMatrix<f64>,
    /// `J^ ydot_fixed` (zero for the eye-in-hand scheme).
    pub j_hat_yfdot: DVector<f64>,
    pub y_d: DMatrix<f64>,
    pub y_k: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl ControllerOutput {
    pub fn is_finite(&self) -> bool {
        self.tau
            .iter()
            .chain(self.s_q.iter())
            .chain(self.qr_dot.iter())
            .all(|x| x.is_finite())
    }
}

/// `ydot_r = ydot_d - lambda (y - y_d) - J^ ydot_fixed`.
pub fn reference_image_velocity(
    y: &DVector<f64>,
    y_d: &DVector<f64>,
    y_d_dot: &DVector<f64>,
    j_hat_yfdot: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    y_d_dot - (y - y_d) * lambda - j_hat_yfdot
}

/// `qdot_r = Q^+ ydot_r`.
pub fn joint_reference_velocity(q_hat_pinv: &DMatrix<f64>, y_r_dot: &DVector<f64>) -> DVector<f64> {
    q_hat_pinv * y_r_dot
}

/// `s = qdot - qdot_r`.
pub fn sliding_vector(qdot: &DVector<f64>, qr_dot: &DVector<f64>) -> DVector<f64> {
    qdot - qr_dot
}

/// `tau = Y_d theta^_d - Q^T K1 dy - K2 s`.
pub fn control_torque(
    y_d: &DMatrix<f64>,
    theta_hat_d: &DVector<f64>,
    q_hat: &DMatrix<f64>,
    k1: &DMatrix<f64>,
    k2: &DMatrix<f64>,
    delta_y: &DVector<f64>,
    s_q: &DVector<f64>,
) -> DVector<f64> {
    y_d * theta_hat_d - q_hat.transpose() * (k1 * delta_y) - k2 * s_q
}

/// One explicit-Euler step of the three adaptive laws.
#[allow(clippy::too_many_arguments)]
pub fn adapt(
    state: &AdaptiveState,
    y_d: &DMatrix<f64>,
    y_k: &DMatrix<f64>,
    w: Option<&DMatrix<f64>>,
    delta_y: &DVector<f64>,
    s_q: &DVector<f64>,
    gains: &ControllerGains,
    dt: f64,
) -> AdaptiveState {
    let k1_dy = gains.k1() * delta_y;
    let theta_hat_d = &state.theta_hat_d - gains.psi_d_inv() * (y_d.transpose() * s_q) * dt;
    let theta_hat_k = &state.theta_hat_k + gains.psi_k_inv() * (y_k.transpose() * &k1_dy) * dt;
    let theta_hat_m = match w {
        Some(w) => &state.theta_hat_m + gains.psi_m_inv() * (w.transpose() * &k1_dy) * dt,
        None => state.theta_hat_m.clone(),
    };
    AdaptiveState {
        theta_hat_k,
        theta_hat_m,
        theta_hat_d,
    }
}

/// First-order low-pass on the backward difference of `qdot_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelerationFilter {
    time_constant: f64,
    previous: Option<DVector<f64>>,
    value: DVector<f64>,
}

impl AccelerationFilter {
    pub fn new(n: usize, time_constant: f64) -> Self {
        Self {
            time_constant: time_constant.max(0.0),
            previous: None,
            value: DVector::zeros(n),
        }
    }

    /// Feeds the newest `qdot_r` and returns the filtered `qddot_r`. The first
    /// sample returns zero.
    pub fn update(&mut self, qr_dot: &DVector<f64>, dt: f64) -> DVector<f64> {
        if let Some(prev) = &self.previous {
            let raw = (qr_dot - prev) / dt;
            let alpha = dt / (self.time_constant + dt);
            self.value += (raw - &self.value) * alpha;
        }
        self.previous = Some(qr_dot.clone());
        self.value.clone()
    }

    pub fn value(&self) -> &DVector<f64> {
        &self.value
    }
}

/// Stateful controller: one per simulation.
#[derive(Debug, Clone)]
pub struct AdaptiveController {
    kinematics: SerialKinematics,
    regressor: DynamicRegressor,
    gains: ControllerGains,
    scheme: Scheme,
    state: AdaptiveState,
    filter: AccelerationFilter,
    damping: f64,
    dt: f64,
}

impl AdaptiveController {
    pub fn new(
        regressor: DynamicRegressor,
        gains: ControllerGains,
        scheme: Scheme,
        initial: AdaptiveState,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if initial.theta_hat_d.len() != regressor.p3() {
            return Err(Error::Dimension {
                context: "theta_hat_d",
                expected: regressor.p3(),
                got: initial.theta_hat_d.len(),
            });
        }
        if gains.k2().nrows() != regressor.kinematics().dof()
            || gains.psi_d().nrows() != regressor.p3()
        {
            return Err(Error::InvalidGains(
                "gain shapes do not match the arm".into(),
            ));
        }
        let n = regressor.kinematics().dof();
        Ok(Self {
            kinematics: regressor.kinematics().clone(),
            regressor,
            gains,
            scheme,
            state: initial,
            filter: AccelerationFilter::new(n, ACCEL_FILTER_STEPS * dt),
            damping: DEFAULT_DAMPING,
            dt,
        })
    }

    pub fn with_damping(mut self, rho: f64) -> Self {
        self.damping = rho;
        self
    }

    /// Replaces the reference-acceleration filter with one whose time
    /// constant is `steps` control periods.
    pub fn with_filter_steps(mut self, steps: f64) -> Self {
        self.filter = AccelerationFilter::new(self.kinematics.dof(), steps * self.dt);
        self
    }

    pub fn state(&self) -> &AdaptiveState {
        &self.state
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn regressor(&self) -> &DynamicRegressor {
        &self.regressor
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Computes the torque. Only the reference-acceleration filter advances.
    pub fn control(
        &mut self,
        m: &Measurement<'_>,
        desired: &DesiredImageState,
    ) -> Result<ControllerOutput> {
        let q = &m.joint.q;
        let qdot = &m.joint.qdot;
        let k = m.features.len();
        if k != self.gains.features() {
            return Err(Error::Dimension {
                context: "feature count",
                expected: self.gains.features(),
                got: k,
            });
        }
        let frame = RegressorFrame::new(&self.kinematics, q);
        let y = m.features.y();
        let delta_y = &y - &desired.y_d;

        let (w, j_hat_yfdot) = match self.scheme {
            Scheme::Hybrid => {
                let w = frame.w(m.features, m.y_fixed_dot)?;
                let jy = &w * &self.state.theta_hat_m;
                (w, jy)
            }
            Scheme::EyeInHand => (DMatrix::zeros(3 * k, P2), DVector::zeros(3 * k)),
        };
        let y_r_dot = reference_image_velocity(
            &y,
            &desired.y_d,
            &desired.y_d_dot,
            &j_hat_yfdot,
            self.gains.lambda(),
        );
        let q_hat = frame.estimated_jacobian(self.scheme, m.features, &self.state.theta_hat_k)?;
        let qr_dot =
            joint_reference_velocity(&damped_pseudo_inverse(&q_hat, self.damping), &y_r_dot);
        let qr_ddot = self.filter.update(&qr_dot, self.dt);
        let s_q = sliding_vector(qdot, &qr_dot);
        let y_dyn = self.regressor.regressor(q, qdot, &qr_dot, &qr_ddot);
        let tau = control_torque(
            &y_dyn,
            &self.state.theta_hat_d,
            &q_hat,
            self.gains.k1(),
            self.gains.k2(),
            &delta_y,
            &s_q,
        );
        let y_k = frame.y(self.scheme, m.features, qdot)?;
        Ok(ControllerOutput {
            tau,
            s_q,
            qr_dot,
            qr_ddot,
            y_r_dot,
            delta_y,
            q_hat,
            j_hat_yfdot,
            y_d: y_dyn,
            y_k,
            w,
        })
    }

    /// Advances the estimates by one control period.
    pub fn adapt(&mut self, out: &ControllerOutput) {
        let w = match self.scheme {
            Scheme::Hybrid => Some(&out.w),
            Scheme::EyeInHand => None,
        };
        self.state = adapt(
            &self.state,
            &out.y_d,
            &out.y_k,
            w,
            &out.delta_y,
            &out.s_q,
            &self.gains,
            self.dt,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn gains(p3: usize) -> ControllerGains {
        ControllerGains::scalar(2.0, 0.5, 3.0, 10.0, 100.0, 1000.0, 1, 3, p3).unwrap()
    }

    #[test]
    fn reference_velocity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = vec(&mut rng, 3);
        let yd_dot = vec(&mut rng, 3);
        let zero = DVector::zeros(3);
        assert_eq!(
            reference_image_velocity(&y, &y, &yd_dot, &zero, 2.0),
            yd_dot
        );
        let yd = vec(&mut rng, 3);
        assert_relative_eq!(
            reference_image_velocity(&y, &yd, &zero, &zero, 2.0),
            (&y - &yd) * -2.0
        );
        let jy = vec(&mut rng, 3);
        let r = reference_image_velocity(&y, &yd, &yd_dot, &jy, 1.5);
        for i in 0..3 {
            assert_relative_eq!(
                r[i],
                yd_dot[i] - 1.5 * (y[i] - yd[i]) - jy[i],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn joint_reference_velocity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = mat(&mut rng, 3, 3) + DMatrix::identity(3, 3) * 3.0;
        let yr = vec(&mut rng, 3);
        let qr = joint_reference_velocity(&damped_pseudo_inverse(&q, 0.0), &yr);
        assert_relative_eq!(&q * qr, yr.clone(), epsilon = 1e-9);
        assert_eq!(
            joint_reference_velocity(&damped_pseudo_inverse(&q, 0.0), &DVector::zeros(3)),
            DVector::zeros(3)
        );
        let tall = mat(&mut rng, 9, 3);
        let yr9 = vec(&mut rng, 9);
        let qr = joint_reference_velocity(&damped_pseudo_inverse(&tall, 0.0), &yr9);
        let residual = &tall * &qr - &yr9;
        assert!((tall.transpose() * residual).amax() < 1e-8);
    }

    #[test]
    fn acceleration_filter_cases() {
        let mut f = AccelerationFilter::new(1, 0.01);
        let c = DVector::from_element(1, 0.7);
        assert_eq!(f.update(&c, 1e-3)[0], 0.0);
        for _ in 0..500 {
            f.update(&c, 1e-3);
        }
        assert!(f.value()[0].abs() < 1e-12);

        let mut exact = AccelerationFilter::new(1, 0.0);
        let mut out = 0.0;
        for i in 0..10 {
            out = exact.update(&DVector::from_element(1, 3.0 * i as f64 * 1e-3), 1e-3)[0];
        }
        assert_relative_eq!(out, 3.0, epsilon = 1e-9);

        // sin(w t) through the filter: compare with the analytic derivative
        // attenuated by the first-order response at w.
        let (dt, tf, w) = (1e-3, 1e-2, 2.0);
        let mut f = AccelerationFilter::new(1, tf);
        let mut err: f64 = 0.0;
        for i in 0..20000 {
            let t = i as f64 * dt;
            let a = f.update(&DVector::from_element(1, (w * t).sin()), dt)[0];
            if t > 5.0 {
                let gain = 1.0 / (1.0 + (w * tf).powi(2)).sqrt();
                let phase = (w * tf).atan();
                let expected = w * gain * (w * t - phase - w * dt / 2.0).cos();
                err = err.max((a - expected).abs());
            }
        }
        assert!(err < 1e-3 * w, "filter error {err}");
    }

    #[test]
    fn sliding_vector_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = vec(&mut rng, 3);
        let b = vec(&mut rng, 3);
        assert_eq!(sliding_vector(&a, &a), DVector::zeros(3));
        assert_eq!(sliding_vector(&a, &DVector::zeros(3)), a);
        assert_eq!(sliding_vector(&a, &b), &a - &b);
    }

    #[test]
    fn torque_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let yd = mat(&mut rng, 3, 7);
        let th = vec(&mut rng, 7);
        let q = mat(&mut rng, 9, 3);
        let k1 = DMatrix::identity(9, 9) * 2.0;
        let k2 = DMatrix::identity(3, 3) * 5.0;
        let dy = vec(&mut rng, 9);
        let s = vec(&mut rng, 3);
        let z3 = DVector::zeros(3);
        let z9 = DVector::zeros(9);
        assert_relative_eq!(control_torque(&yd, &th, &q, &k1, &k2, &z9, &z3), &yd * &th);
        let zt = DVector::zeros(7);
        assert_relative_eq!(
            control_torque(&yd, &zt, &q, &k1, &k2, &dy, &z3),
            -(q.transpose() * &dy * 2.0)
        );
        let tau = control_torque(&yd, &th, &q, &k1, &k2, &dy, &s);
        for i in 0..3 {
            let mut e = 0.0;
            for c in 0..7 {
                e += yd[(i, c)] * th[c];
            }
            for r in 0..9 {
                e -= q[(r, i)] * 2.0 * dy[r];
            }
            e -= 5.0 * s[i];
            assert_relative_eq!(tau[i], e, epsilon = 1e-12);
        }
    }

    #[test]
    fn adaptation_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p3 = 6;
        let g = gains(p3);
        let st =
            AdaptiveState::new(vec(&mut rng, P1), vec(&mut rng, P2), vec(&mut rng, p3)).unwrap();
        let yd = mat(&mut rng, 3, p3);
        let yk = mat(&mut rng, 3, P1);
        let w = mat(&mut rng, 3, P2);
        let z3 = DVector::zeros(3);

        assert_eq!(adapt(&st, &yd, &yk, Some(&w), &z3, &z3, &g, 1e-3), st);

        let s = vec(&mut rng, 3);
        let next = adapt(&st, &yd, &yk, Some(&w), &z3, &s, &g, 1e-3);
        assert_ne!(next.theta_hat_d, st.theta_hat_d);
        assert_eq!(next.theta_hat_k, st.theta_hat_k);
        assert_eq!(next.theta_hat_m, st.theta_hat_m);

        let dy = vec(&mut rng, 3);
        let g2 = ControllerGains::scalar(2.0, 0.5, 3.0, 10.0, 200.0, 1000.0, 1, 3, p3).unwrap();
        let a = adapt(&st, &yd, &yk, Some(&w), &dy, &z3, &g, 1e-3);
        let b = adapt(&st, &yd, &yk, Some(&w), &dy, &z3, &g2, 1e-3);
        let step_a = &a.theta_hat_k - &st.theta_hat_k;
        let step_b = &b.theta_hat_k - &st.theta_hat_k;
        assert_relative_eq!(step_a, step_b * 2.0, epsilon = 1e-15);

        let frozen = adapt(&st, &yd, &yk, None, &dy, &s, &g, 1e-3);
        assert_eq!(frozen.theta_hat_m, st.theta_hat_m);
    }

    #[test]
    fn gain_validation() {
        assert!(matches!(
            ControllerGains::scalar(-1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1, 3, 4),
            Err(Error::InvalidGains(m)) if m.contains("lambda")
        ));
        assert!(ControllerGains::scalar(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1, 3, 4).is_err());
        let mut k2 = DMatrix::identity(3, 3);
        k2[(0, 1)] = 0.5;
        let eye = |d| DMatrix::identity(d, d);
        assert!(ControllerGains::new(1.0, eye(3), k2, eye(4), eye(P1), eye(P2), 1, 3, 4).is_err());
        let g = gains(4);
        assert_relative_eq!(g.psi_k_inv()[(0, 0)], 0.01);
    }
}
