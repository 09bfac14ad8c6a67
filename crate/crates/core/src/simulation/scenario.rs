use std::f64::consts::FRAC_PI_2;

use nalgebra::{DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::target::{DesiredTrajectory, TargetMotion};
use crate::controller::{AdaptiveState, ControllerGains};
use crate::error::{Error, Result};
use crate::geometry::{CartesianPoint, RgbdIntrinsics, Transform};
use crate::rig::{HybridRig, Scheme};
use crate::robot::{
    DhRow, DynamicRegressor, JointState, LinkInertia, RobotModel, SerialKinematics,
};

/// Target-motion presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Circle,
    Rectangle,
    Static,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Self::Circle),
            "rectangle" => Ok(Self::Rectangle),
            "static" => Ok(Self::Static),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario '{other}' (expected circle, rectangle or static)"
            ))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Circle => "circle",
            Self::Rectangle => "rectangle",
            Self::Static => "static",
        })
    }
}

/// Scalar gains, each a multiple of the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSettings {
    pub lambda: f64,
    /// Weight on pixel rows of `K1`.
    pub k1: f64,
    /// Weight on depth rows of `K1`.
    pub k1_depth: f64,
    pub k2: f64,
    pub psi_d: f64,
    pub psi_k: f64,
    pub psi_m: f64,
    /// Scale each adaptation gain by the squared magnitude of the initial
    /// estimate so that every parameter adapts at a comparable relative rate.
    pub relative_adaptation: bool,
}

impl Default for GainSettings {
    fn default() -> Self {
        Self {
            lambda: 30.0,
            k1: 1e-4,
            k1_depth: 1.0,
            k2: 10.0,
            psi_d: 0.3,
            psi_k: 3e4,
            psi_m: 3e3,
            relative_adaptation: true,
        }
    }
}

impl GainSettings {
    /// Gains for `k` features, `n` joints and `p3` dynamic parameters.
    /// `initial` supplies the scales used by relative adaptation.
    pub fn build(
        &self,
        k: usize,
        n: usize,
        p3: usize,
        initial: &AdaptiveState,
    ) -> Result<ControllerGains> {
        let relative = self.relative_adaptation;
        let psi = |s: f64, theta: &DVector<f64>| {
            if relative {
                nalgebra::DMatrix::from_diagonal(&relative_scales(theta).map(|w| s * w))
            } else {
                nalgebra::DMatrix::identity(theta.len(), theta.len()) * s
            }
        };
        let k1 = nalgebra::DMatrix::from_diagonal(&DVector::from_fn(3 * k, |i, _| {
            if i % 3 == 2 {
                self.k1_depth
            } else {
                self.k1
            }
        }));
        ControllerGains::new(
            self.lambda,
            k1,
            nalgebra::DMatrix::identity(n, n) * self.k2,
            psi(self.psi_d, &initial.theta_hat_d),
            psi(self.psi_k, &initial.theta_hat_k),
            psi(self.psi_m, &initial.theta_hat_m),
            k,
            n,
            p3,
        )
    }
}

/// Smallest scale relative to the largest entry; keeps zero estimates adaptable.
const SCALE_FLOOR: f64 = 1e-3;

/// `1 / max(theta_i, floor)^2` per entry.
pub fn relative_scales(theta: &DVector<f64>) -> DVector<f64> {
    let floor = SCALE_FLOOR * theta.amax();
    theta.map(|x| {
        let m = x.abs().max(floor);
        if m > 0.0 {
            1.0 / (m * m)
        } else {
            1.0
        }
    })
}

/// How initial estimates are drawn from the true parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Scale each physical camera and link parameter, then lump.
    Physical,
    /// Scale each lumped parameter independently.
    Lumped,
}

impl std::str::FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physical" => Ok(Self::Physical),
            "lumped" => Ok(Self::Lumped),
            other => Err(Error::InvalidArgument(format!(
                "unknown perturbation '{other}' (expected physical or lumped)"
            ))),
        }
    }
}

impl std::fmt::Display for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Physical => "physical",
            Self::Lumped => "lumped",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSettings {
    /// Half-width of the multiplicative factor `U[1 - delta, 1 + delta]`.
    pub delta: f64,
    pub mode: Perturbation,
}

/// Measurement noise and velocity acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSettings {
    /// Standard deviation of additive pixel noise.
    pub pixel_sigma: f64,
    /// Standard deviation of additive scaled-depth noise.
    pub depth_sigma: f64,
    /// Estimate `ydot_fixed` by a backward difference of measured features
    /// instead of using the exact rate.
    pub difference_fixed_rate: bool,
}

/// Everything needed to run one closed-loop simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub robot: RobotModel,
    pub rig: HybridRig,
    pub motion: TargetMotion,
    /// Rigid offsets of the tracked features from the fruit center (base frame).
    pub feature_offsets: Vec<Vector3<f64>>,
    pub desired: DesiredTrajectory,
    pub initial: JointState,
    pub dt: f64,
    pub duration: f64,
    pub gains: GainSettings,
    pub scheme: Scheme,
    pub estimates: EstimateSettings,
    pub noise: NoiseSettings,
    pub seed: u64,
    /// Abort when `|dy|` exceeds this bound.
    pub divergence_bound: f64,
    /// Damping of the estimated-Jacobian inverse.
    pub damping: f64,
    /// Time constant of the reference-acceleration filter in control periods.
    pub accel_filter_steps: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "duration must be >= 0, got {}",
                self.duration
            )));
        }
        if !(self.accel_filter_steps >= 0.0 && self.accel_filter_steps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "accel_filter_steps must be >= 0, got {}",
                self.accel_filter_steps
            )));
        }
        if self.feature_offsets.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one feature is required".into(),
            ));
        }
        if self.desired.anchor.len() != 3 * self.feature_offsets.len() {
            return Err(Error::Dimension {
                context: "desired anchor",
                expected: 3 * self.feature_offsets.len(),
                got: self.desired.anchor.len(),
            });
        }
        if self.initial.q.len() != self.robot.dof() || self.initial.qdot.len() != self.robot.dof() {
            return Err(Error::Dimension {
                context: "initial joint state",
                expected: self.robot.dof(),
                got: self.initial.q.len(),
            });
        }
        if !self.initial.is_finite() {
            return Err(Error::InvalidArgument(
                "initial joint state must be finite".into(),
            ));
        }
        if !(self.estimates.delta >= 0.0 && self.estimates.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in [0, 1), got {}",
                self.estimates.delta
            )));
        }
        if !(self.noise.pixel_sigma >= 0.0 && self.noise.depth_sigma >= 0.0) {
            return Err(Error::InvalidArgument(
                "noise deviations must be >= 0".into(),
            ));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(Error::InvalidArgument(
                "divergence bound must be positive".into(),
            ));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidArgument("damping must be >= 0".into()));
        }
        self.rig.eih_intr.validate()?;
        self.rig.fixed_intr.validate()?;
        self.motion.validate()?;
        self.desired.validate()
    }

    /// Feature positions and velocities in the base frame at time `t`.
    pub fn feature_points(&self, t: f64) -> (Vec<CartesianPoint>, Vector3<f64>) {
        let (center, velocity) = self.motion.state(t);
        (
            self.feature_offsets.iter().map(|o| center + o).collect(),
            velocity,
        )
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Places the arm on the desired trajectory at `t = 0`: the features
    /// image at `y_d(0)` and the joint velocity reproduces `y_d_dot(0)` given
    /// the target's own image motion.
    pub fn start_on_trajectory(&mut self) -> Result<()> {
        let (points, velocity) = self.feature_points(0.0);
        let desired = self.desired.state(0.0);
        let q = solve_image_pose(
            &self.robot,
            &self.rig,
            &points,
            &desired.y_d,
            &self.initial.q,
        )?;
        let obs = self.rig.observe(&self.robot.kinematics, &q, &points)?;
        let (jac, fixed_jac) = self
            .rig
            .image_jacobians(&self.robot.kinematics, &q, &obs.fixed)?;
        let mut fixed_rate = DVector::zeros(3 * points.len());
        for (i, p) in points.iter().enumerate() {
            fixed_rate
                .fixed_rows_mut::<3>(3 * i)
                .copy_from(&self.rig.fixed_feature_rate(p, &velocity)?);
        }
        let rhs = &desired.y_d_dot - fixed_jac * fixed_rate;
        let qdot = jac
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        self.initial = JointState::new(q, qdot);
        Ok(())
    }
}

/// The three-joint elbow arm used by the presets.
pub fn elbow_arm() -> RobotModel {
    let kin = SerialKinematics::new(
        vec![
            DhRow::new(0.0, FRAC_PI_2, 0.4, 0.0),
            DhRow::new(0.4, 0.0, 0.0, 0.0),
            DhRow::new(0.3, 0.0, 0.0, 0.0),
        ],
        Vector3::new(0.0, 0.0, -9.81),
    )
    .expect("nonempty chain");
    let column = LinkInertia::new(
        3.0,
        Vector3::new(0.0, -0.2, 0.0),
        Matrix3::from_diagonal(&Vector3::new(0.045, 0.006, 0.045)),
    );
    RobotModel::new(
        kin,
        vec![
            column,
            LinkInertia::rod_along_x(2.0, 0.4),
            LinkInertia::rod_along_x(1.0, 0.3),
        ],
    )
    .expect("valid preset links")
}

/// Configuration at which the preset fruit images at the start of the
/// desired trajectory, `(330, 240, 0.30)`.
pub fn nominal_configuration() -> DVector<f64> {
    DVector::from_vec(vec![
        0.034_097_515_899_5,
        0.675_507_537_198_241,
        -1.098_803_660_288_29,
    ])
}

/// Fruit center of the presets.
pub fn fruit_center() -> CartesianPoint {
    CartesianPoint::new(0.88, 0.0, 0.40)
}

/// Eye-in-hand camera looking along the tool x axis, fixed camera looking at
/// the fruit from the side.
pub fn default_rig() -> HybridRig {
    let cam_in_ee = Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let ee_from_eih = Transform::new(cam_in_ee, Vector3::new(0.02, 0.0, 0.03));
    let eye = CartesianPoint::new(0.9, -0.9, 0.9);
    HybridRig {
        eih_intr: RgbdIntrinsics::new(600.0, 600.0, FRAC_PI_2, 320.0, 240.0, 1.0).expect("valid"),
        fixed_intr: RgbdIntrinsics::new(615.0, 615.0, FRAC_PI_2, 320.0, 240.0, 1.0).expect("valid"),
        eih_from_ee: ee_from_eih.inverse(),
        base_from_fixed: Transform::look_at(&eye, &fruit_center(), &Vector3::z()),
    }
}

/// Offsets of the three fruit features used when `k = 3`.
pub fn three_feature_offsets() -> Vec<Vector3<f64>> {
    vec![
        Vector3::new(0.0, 0.015, 0.0),
        Vector3::new(0.0, -0.01, 0.012),
        Vector3::new(-0.01, -0.005, -0.015),
    ]
}

pub fn default_motion(kind: ScenarioKind) -> TargetMotion {
    let center = fruit_center();
    match kind {
        ScenarioKind::Static => TargetMotion::Static { center },
        ScenarioKind::Circle => TargetMotion::Circle {
            center,
            radius: 0.05,
            angular_rate: 0.5,
            normal: Vector3::x(),
        },
        ScenarioKind::Rectangle => TargetMotion::Rectangle {
            center,
            width: 0.2,
            height: 0.1,
            speed: 0.02,
            corner_radius: 0.01,
            normal: Vector3::x(),
        },
    }
}

/// Offset of the default start configuration from the nominal one.
pub fn default_start_offset() -> DVector<f64> {
    DVector::from_vec(vec![0.03, -0.02, 0.04])
}

/// Default closed-loop scenario: one feature at the fruit center and a
/// spiral desired trajectory around `(300, 240, 0.30)`. The arm starts at
/// rest, offset by [`default_start_offset`] from the pose that images the
/// fruit at the start of the spiral.
pub fn preset(kind: ScenarioKind) -> Scenario {
    let robot = elbow_arm();
    let rig = default_rig();
    let motion = default_motion(kind);
    let offsets = vec![Vector3::zeros()];
    let radius = 30.0;
    let anchor = DVector::from_vec(vec![300.0, 240.0, 0.30]);
    let mut scenario = Scenario {
        initial: JointState::at_rest(nominal_configuration()),
        robot,
        rig,
        motion,
        feature_offsets: offsets,
        desired: DesiredTrajectory {
            anchor,
            radius,
            pitch: 0.05,
            angular_rate: 0.5,
        },
        dt: 1e-3,
        duration: 30.0,
        gains: GainSettings::default(),
        scheme: Scheme::Hybrid,
        estimates: EstimateSettings {
            delta: 0.5,
            mode: Perturbation::Lumped,
        },
        noise: NoiseSettings::default(),
        seed: 0,
        divergence_bound: 1e4,
        damping: crate::rig::DEFAULT_DAMPING,
        accel_filter_steps: crate::controller::ACCEL_FILTER_STEPS,
    };
    scenario
        .start_on_trajectory()
        .expect("preset start is reachable");
    scenario.initial = JointState::at_rest(&scenario.initial.q + default_start_offset());
    scenario
}

/// Ground-truth lumped parameters for the scenario's scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters {
    pub theta_k: DVector<f64>,
    pub theta_m: DVector<f64>,
    pub theta_d: DVector<f64>,
}

impl TrueParameters {
    pub fn new(
        robot: &RobotModel,
        rig: &HybridRig,
        scheme: Scheme,
        regressor: &DynamicRegressor,
    ) -> Self {
        Self {
            theta_k: rig.true_theta_k(scheme),
            theta_m: rig.true_theta_m(),
            theta_d: robot.true_theta_d(regressor).theta_d,
        }
    }

    pub fn as_estimates(&self) -> AdaptiveState {
        AdaptiveState {
            theta_hat_k: self.theta_k.clone(),
            theta_hat_m: self.theta_m.clone(),
            theta_hat_d: self.theta_d.clone(),
        }
    }
}

fn factor(rng: &mut ChaCha8Rng, delta: f64) -> f64 {
    if delta == 0.0 {
        1.0
    } else {
        rng.gen_range(1.0 - delta..=1.0 + delta)
    }
}

fn scale_intrinsics(i: &RgbdIntrinsics, rng: &mut ChaCha8Rng, delta: f64) -> RgbdIntrinsics {
    RgbdIntrinsics {
        fku: i.fku * factor(rng, delta),
        fkv: i.fkv * factor(rng, delta),
        skew_angle: i.skew_angle,
        u0: i.u0 * factor(rng, delta),
        v0: i.v0 * factor(rng, delta),
        mu: i.mu * factor(rng, delta),
    }
}

fn scale_transform(t: &Transform, rng: &mut ChaCha8Rng, delta: f64) -> Transform {
    let rpy = t.rpy().map(|a| a * factor(rng, delta));
    let translation = t.translation.map(|x| x * factor(rng, delta));
    Transform::from_rpy(rpy, translation)
}

fn scale_link(l: &LinkInertia, rng: &mut ChaCha8Rng, delta: f64) -> LinkInertia {
    let mass = l.mass * factor(rng, delta);
    let com = l.com.map(|x| x * factor(rng, delta));
    let mut inertia = l.inertia;
    for r in 0..3 {
        for c in r..3 {
            let v = inertia[(r, c)] * factor(rng, delta);
            inertia[(r, c)] = v;
            inertia[(c, r)] = v;
        }
    }
    LinkInertia { mass, com, inertia }
}

/// Draws initial estimates. With `delta = 0` they equal the truth.
pub fn initial_estimates(
    scenario: &Scenario,
    regressor: &DynamicRegressor,
    truth: &TrueParameters,
    rng: &mut ChaCha8Rng,
) -> AdaptiveState {
    let delta = scenario.estimates.delta;
    match scenario.estimates.mode {
        Perturbation::Lumped => AdaptiveState {
            theta_hat_k: truth.theta_k.map(|x| x * factor(rng, delta)),
            theta_hat_m: truth.theta_m.map(|x| x * factor(rng, delta)),
            theta_hat_d: truth.theta_d.map(|x| x * factor(rng, delta)),
        },
        Perturbation::Physical => {
            let rig = HybridRig {
                eih_intr: scale_intrinsics(&scenario.rig.eih_intr, rng, delta),
                fixed_intr: scale_intrinsics(&scenario.rig.fixed_intr, rng, delta),
                eih_from_ee: scale_transform(&scenario.rig.eih_from_ee, rng, delta),
                base_from_fixed: scale_transform(&scenario.rig.base_from_fixed, rng, delta),
            };
            let links: Vec<LinkInertia> = scenario
                .robot
                .links
                .iter()
                .map(|l| scale_link(l, rng, delta))
                .collect();
            AdaptiveState {
                theta_hat_k: rig.true_theta_k(scenario.scheme),
                theta_hat_m: rig.true_theta_m(),
                theta_hat_d: regressor.lump(&links).theta_d,
            }
        }
    }
}

/// Joint configuration whose image of the features at time `t` equals
/// `target` (Gauss-Newton on the true Jacobian).
pub fn solve_image_pose(
    robot: &RobotModel,
    rig: &HybridRig,
    points: &[CartesianPoint],
    target: &DVector<f64>,
    guess: &DVector<f64>,
) -> Result<DVector<f64>> {
    let kin = &robot.kinematics;
    let mut q = guess.clone();
    for _ in 0..100 {
        let obs = rig.observe(kin, &q, points)?;
        let err = target - obs.y();
        if err.norm() < 1e-11 {
            return Ok(q);
        }
        let (jac, _) = rig.image_jacobians(kin, &q, &obs.fixed)?;
        let step = jac
            .svd(true, true)
            .solve(&err, 1e-12)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        q += step;
    }
    Err(Error::InvalidArgument(
        "image-space pose solve did not converge".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn nominal_configuration_images_the_fruit() {
        let sc = preset(ScenarioKind::Static);
        let obs = sc
            .rig
            .observe(
                &sc.robot.kinematics,
                &nominal_configuration(),
                &[fruit_center()],
            )
            .unwrap();
        let y = obs.y();
        assert_relative_eq!(y[0], 330.0, epsilon = 1e-6);
        assert_relative_eq!(y[1], 240.0, epsilon = 1e-6);
        assert_relative_eq!(y[2], 0.30, epsilon = 1e-9);
    }

    #[test]
    fn presets_validate() {
        for kind in [
            ScenarioKind::Circle,
            ScenarioKind::Rectangle,
            ScenarioKind::Static,
        ] {
            let sc = preset(kind);
            sc.validate().unwrap();
            assert_eq!(sc.ticks(), 30_000);
            assert_eq!(kind.to_string().parse::<ScenarioKind>().unwrap(), kind);
        }
        assert!("ellipse".parse::<ScenarioKind>().is_err());
        assert!("neither".parse::<Perturbation>().is_err());
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let base = preset(ScenarioKind::Circle);
        let mut sc = base.clone();
        sc.dt = 0.0;
        assert!(sc.validate().is_err());
        let mut sc = base.clone();
        sc.estimates.delta = 1.0;
        assert!(sc.validate().is_err());
        let mut sc = base.clone();
        sc.desired.anchor = DVector::zeros(6);
        assert!(matches!(sc.validate(), Err(Error::Dimension { .. })));
        let mut sc = base.clone();
        sc.accel_filter_steps = -1.0;
        assert!(sc.validate().is_err());
        let mut sc = base;
        sc.noise.pixel_sigma = -0.1;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn relative_scales_cases() {
        let s = relative_scales(&DVector::from_vec(vec![2.0, -0.5, 0.0]));
        assert_relative_eq!(s[0], 0.25);
        assert_relative_eq!(s[1], 4.0);
        assert_relative_eq!(s[2], 1.0 / (2e-3 * 2e-3));
        assert_eq!(
            relative_scales(&DVector::zeros(2)),
            DVector::from_element(2, 1.0)
        );
    }

    fn truth(sc: &Scenario) -> (DynamicRegressor, TrueParameters) {
        let reg = DynamicRegressor::new(sc.robot.kinematics.clone());
        let t = TrueParameters::new(&sc.robot, &sc.rig, sc.scheme, &reg);
        (reg, t)
    }

    #[test]
    fn zero_delta_reproduces_truth() {
        for mode in [Perturbation::Physical, Perturbation::Lumped] {
            let mut sc = preset(ScenarioKind::Circle);
            sc.estimates = EstimateSettings { delta: 0.0, mode };
            let (reg, t) = truth(&sc);
            let est = initial_estimates(&sc, &reg, &t, &mut ChaCha8Rng::seed_from_u64(3));
            for (e, x) in [
                (&est.theta_hat_k, &t.theta_k),
                (&est.theta_hat_m, &t.theta_m),
                (&est.theta_hat_d, &t.theta_d),
            ] {
                assert!((e - x).amax() <= 1e-12 * x.amax(), "{mode}");
            }
        }
    }

    #[test]
    fn lumped_factors_stay_in_band_and_are_seeded() {
        let sc = preset(ScenarioKind::Circle);
        let (reg, t) = truth(&sc);
        let a = initial_estimates(&sc, &reg, &t, &mut ChaCha8Rng::seed_from_u64(11));
        let b = initial_estimates(&sc, &reg, &t, &mut ChaCha8Rng::seed_from_u64(11));
        let c = initial_estimates(&sc, &reg, &t, &mut ChaCha8Rng::seed_from_u64(12));
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (est, tr) in [
            (&a.theta_hat_k, &t.theta_k),
            (&a.theta_hat_m, &t.theta_m),
            (&a.theta_hat_d, &t.theta_d),
        ] {
            for (e, x) in est.iter().zip(tr.iter()) {
                if *x != 0.0 {
                    let f = e / x;
                    assert!((0.5..=1.5).contains(&f), "factor {f}");
                } else {
                    assert_eq!(*e, 0.0);
                }
            }
        }
    }

    #[test]
    fn gains_follow_settings() {
        let sc = preset(ScenarioKind::Circle);
        let (reg, t) = truth(&sc);
        let est = t.as_estimates();
        let g = sc.gains.build(1, 3, reg.p3(), &est).unwrap();
        assert_eq!(g.k1()[(0, 0)], sc.gains.k1);
        assert_eq!(g.k1()[(2, 2)], sc.gains.k1_depth);
        let mut abs = sc.gains;
        abs.relative_adaptation = false;
        let g = abs.build(1, 3, reg.p3(), &est).unwrap();
        assert_eq!(g.psi_k()[(5, 5)], abs.psi_k);
        let mut bad = sc.gains;
        bad.k2 = -1.0;
        assert!(bad.build(1, 3, reg.p3(), &est).is_err());
    }

    #[test]
    fn on_trajectory_start_matches_desired_state() {
        let mut sc = preset(ScenarioKind::Circle);
        sc.initial = JointState::at_rest(nominal_configuration());
        sc.start_on_trajectory().unwrap();
        let (points, velocity) = sc.feature_points(0.0);
        let desired = sc.desired.state(0.0);
        let obs = sc
            .rig
            .observe(&sc.robot.kinematics, &sc.initial.q, &points)
            .unwrap();
        assert!((obs.y() - &desired.y_d).norm() < 1e-9);
        let (jac, fixed_jac) = sc
            .rig
            .image_jacobians(&sc.robot.kinematics, &sc.initial.q, &obs.fixed)
            .unwrap();
        let rate = sc.rig.fixed_feature_rate(&points[0], &velocity).unwrap();
        let ydot = jac * &sc.initial.qdot + fixed_jac * DVector::from_column_slice(rate.as_slice());
        assert!((ydot - desired.y_d_dot).norm() < 1e-8);
    }
}
