//! Closed-loop world model: target motion, desired image trajectory, plant
//! integration, trace logging and metrics.
//!
//! One tick runs, in order: observe both cameras, sample the desired state,
//! evaluate the controller, log (including the Lyapunov value computed from
//! ground truth), adapt the estimates, integrate the arm with RK4 under the
//! held torque and advance time.

mod plant;
mod scenario;
mod target;
mod trace;

pub use plant::rk4_step;
pub use scenario::{
    default_motion, default_rig, default_start_offset, elbow_arm, fruit_center, initial_estimates,
    nominal_configuration, preset, solve_image_pose, three_feature_offsets, EstimateSettings,
    GainSettings, NoiseSettings, Perturbation, Scenario, ScenarioKind, TrueParameters,
};
pub use target::{plane_basis, DesiredTrajectory, TargetMotion};
pub use trace::{
    lyapunov_allowance, lyapunov_ascent, lyapunov_violations, metrics, velocity_consistency,
    Metrics, TraceLog, TraceRecord, LYAPUNOV_SLACK,
};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::controller::{
    AdaptiveController, AdaptiveState, ControllerGains, ControllerOutput, Measurement,
};
use crate::error::{Error, Result};
use crate::geometry::{project, CartesianPoint, ImageFeature};
use crate::rig::{FeatureSet, HybridRig, RegressorFrame, Scheme};
use crate::robot::{DynamicRegressor, JointState, RobotModel, SerialKinematics};

/// RNG stream used for initial estimates.
const ESTIMATE_STREAM: u64 = 0;
/// RNG stream used for measurement noise.
const NOISE_STREAM: u64 = 1;

/// Projects each point into both cameras, reporting the first feature with a
/// non-positive depth.
pub fn observe(
    rig: &HybridRig,
    kin: &SerialKinematics,
    q: &DVector<f64>,
    points: &[CartesianPoint],
    t: f64,
) -> Result<FeatureSet> {
    let ee_from_base = kin.forward_kinematics(q).inverse();
    let fixed_from_base = rig.base_from_fixed.inverse();
    let mut eih = Vec::with_capacity(points.len());
    let mut fixed = Vec::with_capacity(points.len());
    for (feature, p) in points.iter().enumerate() {
        let xc = rig
            .eih_from_ee
            .transform_point(&ee_from_base.transform_point(p));
        let xf = fixed_from_base.transform_point(p);
        for (camera, depth) in [("eye-in-hand", xc.z), ("fixed", xf.z)] {
            if !(depth > 0.0) {
                return Err(Error::Visibility {
                    t,
                    feature,
                    camera,
                    depth,
                });
            }
        }
        eih.push(project(&rig.eih_intr, &xc)?);
        fixed.push(project(&rig.fixed_intr, &xf)?);
    }
    FeatureSet::new(eih, fixed)
}

/// `V = s^T H s / 2 + dy^T K1 dy / 2 + sum dtheta^T Psi dtheta / 2`, where
/// `dtheta = theta^ - theta`. The `theta_m` term is dropped for the
/// eye-in-hand scheme, which does not adapt it.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov(
    inertia: &DMatrix<f64>,
    s_q: &DVector<f64>,
    delta_y: &DVector<f64>,
    gains: &ControllerGains,
    estimates: &AdaptiveState,
    truth: &TrueParameters,
    scheme: Scheme,
) -> f64 {
    let quad = |m: &DMatrix<f64>, v: &DVector<f64>| 0.5 * v.dot(&(m * v));
    let dd = &estimates.theta_hat_d - &truth.theta_d;
    let dk = &estimates.theta_hat_k - &truth.theta_k;
    let mut v = quad(inertia, s_q)
        + quad(gains.k1(), delta_y)
        + quad(gains.psi_d(), &dd)
        + quad(gains.psi_k(), &dk);
    if scheme == Scheme::Hybrid {
        let dm = &estimates.theta_hat_m - &truth.theta_m;
        v += quad(gains.psi_m(), &dm);
    }
    v
}

fn relative(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// One closed-loop simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    controller: AdaptiveController,
    truth: TrueParameters,
    joint: JointState,
    tick: usize,
    noise_rng: ChaCha8Rng,
    noise: Option<(Normal<f64>, Normal<f64>)>,
    previous_fixed: Option<DVector<f64>>,
}

impl Simulation {
    /// Builds the plant, the ground truth and a controller seeded with
    /// perturbed estimates drawn from `scenario.seed`.
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let regressor = DynamicRegressor::new(scenario.robot.kinematics.clone());
        let truth =
            TrueParameters::new(&scenario.robot, &scenario.rig, scenario.scheme, &regressor);
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(ESTIMATE_STREAM);
        let initial = initial_estimates(&scenario, &regressor, &truth, &mut rng);
        Self::with_estimates(scenario, regressor, truth, initial)
    }

    /// Same as [`new`](Self::new) with explicit initial estimates.
    pub fn with_estimates(
        scenario: Scenario,
        regressor: DynamicRegressor,
        truth: TrueParameters,
        initial: AdaptiveState,
    ) -> Result<Self> {
        scenario.validate()?;
        let k = scenario.feature_offsets.len();
        let gains = scenario
            .gains
            .build(k, scenario.robot.dof(), regressor.p3(), &initial)?;
        let controller =
            AdaptiveController::new(regressor, gains, scenario.scheme, initial, scenario.dt)?
                .with_damping(scenario.damping)
                .with_filter_steps(scenario.accel_filter_steps);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        noise_rng.set_stream(NOISE_STREAM);
        let noise = if scenario.noise.pixel_sigma > 0.0 || scenario.noise.depth_sigma > 0.0 {
            Some((
                Normal::new(0.0, scenario.noise.pixel_sigma)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
                Normal::new(0.0, scenario.noise.depth_sigma)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            ))
        } else {
            None
        };
        Ok(Self {
            joint: scenario.initial.clone(),
            scenario,
            controller,
            truth,
            tick: 0,
            noise_rng,
            noise,
            previous_fixed: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.scenario.dt
    }

    pub fn joint(&self) -> &JointState {
        &self.joint
    }

    pub fn controller(&self) -> &AdaptiveController {
        &self.controller
    }

    pub fn truth(&self) -> &TrueParameters {
        &self.truth
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn robot(&self) -> &RobotModel {
        &self.scenario.robot
    }

    fn add_noise(&mut self, features: &[ImageFeature]) -> Vec<ImageFeature> {
        match self.noise {
            None => features.to_vec(),
            Some((px, depth)) => features
                .iter()
                .map(|f| {
                    ImageFeature::new(
                        f.u + px.sample(&mut self.noise_rng),
                        f.v + px.sample(&mut self.noise_rng),
                        f.d + depth.sample(&mut self.noise_rng),
                    )
                })
                .collect(),
        }
    }

    /// Runs one tick and returns its record. With `integrate = false` the
    /// record is produced without adapting or advancing the plant.
    fn tick(&mut self, integrate: bool) -> Result<TraceRecord> {
        let t = self.time();
        let dt = self.scenario.dt;
        let (points, velocity) = self.scenario.feature_points(t);
        let exact = observe(
            &self.scenario.rig,
            &self.robot().kinematics,
            &self.joint.q,
            &points,
            t,
        )?;
        let exact_fixed_rate = {
            let mut r = DVector::zeros(3 * points.len());
            for (i, p) in points.iter().enumerate() {
                r.fixed_rows_mut::<3>(3 * i)
                    .copy_from(&self.scenario.rig.fixed_feature_rate(p, &velocity)?);
            }
            r
        };
        let measured = FeatureSet::new(self.add_noise(&exact.eih), self.add_noise(&exact.fixed))?;
        let fixed_rate = if self.scenario.noise.difference_fixed_rate {
            let now = measured.y_fixed();
            let rate = match &self.previous_fixed {
                Some(prev) => (&now - prev) / dt,
                None => DVector::zeros(now.len()),
            };
            self.previous_fixed = Some(now);
            rate
        } else {
            exact_fixed_rate.clone()
        };
        let desired = self.scenario.desired.state(t);
        let joint = self.joint.clone();
        let out = self.controller.control(
            &Measurement {
                features: &measured,
                y_fixed_dot: &fixed_rate,
                joint: &joint,
            },
            &desired,
        )?;
        if !out.is_finite() {
            return Err(Error::NonFinite {
                t,
                what: "control output".into(),
            });
        }
        let record = self.record(t, &exact, &exact_fixed_rate, &desired.y_d_dot, &out)?;
        let dy = record.delta_y_norm;
        if !(dy <= self.scenario.divergence_bound) {
            return Err(Error::Divergence {
                t,
                error_norm: dy,
                bound: self.scenario.divergence_bound,
            });
        }
        if integrate {
            self.controller.adapt(&out);
            if !self.controller.state().is_finite() {
                return Err(Error::NonFinite {
                    t,
                    what: "parameter estimates".into(),
                });
            }
            let next = rk4_step(&self.scenario.robot, &self.joint, &out.tau, dt)?;
            if !next.is_finite() {
                return Err(Error::NonFinite {
                    t,
                    what: "joint state".into(),
                });
            }
            self.joint = next;
            self.tick += 1;
        }
        Ok(record)
    }

    /// Builds the log record and the ground-truth diagnostics for one tick.
    fn record(
        &self,
        t: f64,
        exact: &FeatureSet,
        fixed_rate: &DVector<f64>,
        y_d_dot: &DVector<f64>,
        out: &ControllerOutput,
    ) -> Result<TraceRecord> {
        let robot = self.robot();
        let q = &self.joint.q;
        let qdot = &self.joint.qdot;
        let (big_q, big_j) =
            self.scenario
                .rig
                .image_jacobians(&robot.kinematics, q, &exact.fixed)?;
        let ydot = &big_q * qdot + &big_j * fixed_rate;
        let delta_ydot = &ydot - y_d_dot;
        let gains = self.controller.gains();
        let estimates = self.controller.state();
        let scheme = self.scenario.scheme;

        let terms = robot.dynamics_terms(q);
        let v = lyapunov(
            &terms.inertia,
            &out.s_q,
            &out.delta_y,
            gains,
            estimates,
            &self.truth,
            scheme,
        );

        // Sliding-vector identity.
        let frame = RegressorFrame::new(&robot.kinematics, q);
        let dk = &estimates.theta_hat_k - &self.truth.theta_k;
        let lhs = &out.q_hat * &out.s_q;
        let rhs = &delta_ydot + &out.delta_y * gains.lambda() + &out.j_hat_yfdot
            - &big_j * fixed_rate
            + frame.y(scheme, exact, qdot)? * dk;
        let sliding_residual = relative(&lhs, &rhs);

        // Closed-loop dynamic error identity.
        let qddot = terms.forward_dynamics(qdot, &out.tau)?;
        let sdot = &qddot - &out.qr_ddot;
        let lhs = &terms.inertia * &sdot + terms.christoffel(qdot) * &out.s_q;
        let dd = &estimates.theta_hat_d - &self.truth.theta_d;
        let rhs = &out.y_d * dd
            - out.q_hat.transpose() * (gains.k1() * &out.delta_y)
            - gains.k2() * &out.s_q;
        let dynamics_residual = relative(&lhs, &rhs);

        Ok(TraceRecord {
            t,
            q: q.clone(),
            qdot: qdot.clone(),
            tau: out.tau.clone(),
            y: &out.delta_y + self.scenario.desired.state(t).y_d,
            y_d: self.scenario.desired.state(t).y_d,
            ydot,
            delta_y_norm: out.delta_y.norm(),
            delta_ydot_norm: delta_ydot.norm(),
            s_norm: out.s_q.norm(),
            lyapunov: v,
            sliding_residual,
            dynamics_residual,
            theta_k_norm: estimates.theta_hat_k.norm(),
            theta_m_norm: estimates.theta_hat_m.norm(),
            theta_d_norm: estimates.theta_hat_d.norm(),
        })
    }

    /// Advances one tick: observe, control, log, adapt, integrate.
    pub fn step(&mut self) -> Result<TraceRecord> {
        self.tick(true)
    }

    /// Record for the current state without advancing.
    pub fn peek(&mut self) -> Result<TraceRecord> {
        self.tick(false)
    }
}

/// Outcome of [`run`]: the trace up to the last good tick and the error that
/// stopped the run, if any.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: TraceLog,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

/// Runs `duration / dt` ticks plus a final record at `t = duration`.
pub fn run(scenario: &Scenario) -> Result<RunOutcome> {
    let sim = Simulation::new(scenario.clone())?;
    Ok(run_simulation(sim))
}

/// Runs a prepared simulation to the end of its scenario.
pub fn run_simulation(mut sim: Simulation) -> RunOutcome {
    let ticks = sim.scenario().ticks();
    let mut trace = TraceLog::new(
        sim.scenario().dt,
        sim.scenario().robot.dof(),
        sim.scenario().feature_offsets.len(),
    );
    trace.records.reserve(ticks + 1);
    for _ in 0..ticks {
        match sim.step() {
            Ok(r) => trace.records.push(r),
            Err(e) => {
                return RunOutcome {
                    trace,
                    error: Some(e),
                }
            }
        }
    }
    match sim.peek() {
        Ok(r) => trace.records.push(r),
        Err(e) => {
            return RunOutcome {
                trace,
                error: Some(e),
            }
        }
    }
    RunOutcome { trace, error: None }
}
