//! Run configuration.
//!
//! The file format is flat `key = value` text with dotted keys, one entry per
//! line, `#` comments. Values are numbers, booleans, quoted strings or arrays
//! of numbers. This is a subset of TOML, so any TOML parser reads it. Every
//! key has a default (see [`RunConfig::default`]); unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use hvs_core::geometry::{CartesianPoint, RgbdIntrinsics, Transform};
use hvs_core::rig::{HybridRig, Scheme};
use hvs_core::robot::{DhRow, JointState, LinkInertia, RobotModel, SerialKinematics};
use hvs_core::simulation::{
    default_motion, default_rig, default_start_offset, elbow_arm, fruit_center,
    nominal_configuration, preset, DesiredTrajectory, EstimateSettings, GainSettings,
    NoiseSettings, Perturbation, Scenario, ScenarioKind, TargetMotion,
};
use nalgebra::{DVector, Matrix3, Vector3};
use toml::Value;

use crate::error::{CliError, Result};

/// Mass and geometry of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// `[a, alpha, d, theta_offset]`.
    pub dh: [f64; 4],
    pub mass: f64,
    pub com: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]` about the center of mass.
    pub inertia: [f64; 6],
}

/// Intrinsics `[fku, fkv, skew_angle, u0, v0, mu]` and a pose
/// `[x, y, z, roll, pitch, yaw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraConfig {
    pub intrinsics: [f64; 6],
    pub pose: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub divergence_bound: f64,
    /// A run converges when its final RMS error is below this fraction of the
    /// initial error.
    pub convergence_ratio: f64,
    pub scheme: Scheme,
    pub damping: f64,
    pub accel_filter_steps: f64,
    pub gains: GainSettings,
    pub estimates: EstimateSettings,
    pub noise: NoiseSettings,
    pub target_center: [f64; 3],
    pub target_normal: [f64; 3],
    pub circle_radius: f64,
    pub circle_rate: f64,
    pub rectangle_width: f64,
    pub rectangle_height: f64,
    pub rectangle_speed: f64,
    pub rectangle_corner_radius: f64,
    pub feature_offsets: Vec<[f64; 3]>,
    pub desired_anchor: Vec<f64>,
    pub desired_radius: f64,
    pub desired_pitch: f64,
    pub desired_rate: f64,
    /// Joint offset from the on-trajectory pose.
    pub start_offset: Vec<f64>,
    /// Start with the joint velocity that follows the desired trajectory
    /// instead of at rest.
    pub start_match_velocity: bool,
    /// Initial guess for the on-trajectory pose solve.
    pub start_guess: Vec<f64>,
    pub gravity: [f64; 3],
    pub links: Vec<LinkConfig>,
    /// Eye-in-hand camera; the pose is the camera frame in the end-effector frame.
    pub eih_camera: CameraConfig,
    /// Fixed camera; the pose is the camera frame in the base frame.
    pub fixed_camera: CameraConfig,
    pub output_dir: String,
}

fn arr<const N: usize>(v: impl IntoIterator<Item = f64>) -> [f64; N] {
    let mut out = [0.0; N];
    for (o, x) in out.iter_mut().zip(v) {
        *o = x;
    }
    out
}

fn pose_of(t: &Transform) -> [f64; 6] {
    let r = t.rpy();
    [
        t.translation.x,
        t.translation.y,
        t.translation.z,
        r[0],
        r[1],
        r[2],
    ]
}

fn transform_of(p: &[f64; 6]) -> Transform {
    Transform::from_rpy([p[3], p[4], p[5]], Vector3::new(p[0], p[1], p[2]))
}

fn intrinsics_of(i: &RgbdIntrinsics) -> [f64; 6] {
    [i.fku, i.fkv, i.skew_angle, i.u0, i.v0, i.mu]
}

impl Default for RunConfig {
    /// The circular-target preset with the built-in elbow arm and rig.
    fn default() -> Self {
        let sc = preset(ScenarioKind::Circle);
        let robot = elbow_arm();
        let rig = default_rig();
        let (circle_radius, circle_rate) = match default_motion(ScenarioKind::Circle) {
            TargetMotion::Circle {
                radius,
                angular_rate,
                ..
            } => (radius, angular_rate),
            _ => unreachable!(),
        };
        let (rectangle_width, rectangle_height, rectangle_speed, rectangle_corner_radius) =
            match default_motion(ScenarioKind::Rectangle) {
                TargetMotion::Rectangle {
                    width,
                    height,
                    speed,
                    corner_radius,
                    ..
                } => (width, height, speed, corner_radius),
                _ => unreachable!(),
            };
        let links = robot
            .kinematics
            .dh
            .iter()
            .zip(&robot.links)
            .map(|(dh, l)| LinkConfig {
                dh: [dh.a, dh.alpha, dh.d, dh.theta_offset],
                mass: l.mass,
                com: arr(l.com.iter().copied()),
                inertia: [
                    l.inertia[(0, 0)],
                    l.inertia[(1, 1)],
                    l.inertia[(2, 2)],
                    l.inertia[(0, 1)],
                    l.inertia[(0, 2)],
                    l.inertia[(1, 2)],
                ],
            })
            .collect();
        Self {
            scenario: ScenarioKind::Circle,
            duration: sc.duration,
            dt: sc.dt,
            seed: sc.seed,
            divergence_bound: sc.divergence_bound,
            convergence_ratio: 0.01,
            scheme: sc.scheme,
            damping: sc.damping,
            accel_filter_steps: sc.accel_filter_steps,
            gains: sc.gains,
            estimates: sc.estimates,
            noise: sc.noise,
            target_center: arr(fruit_center().iter().copied()),
            target_normal: [1.0, 0.0, 0.0],
            circle_radius,
            circle_rate,
            rectangle_width,
            rectangle_height,
            rectangle_speed,
            rectangle_corner_radius,
            feature_offsets: sc
                .feature_offsets
                .iter()
                .map(|o| arr(o.iter().copied()))
                .collect(),
            desired_anchor: sc.desired.anchor.iter().copied().collect(),
            desired_radius: sc.desired.radius,
            desired_pitch: sc.desired.pitch,
            desired_rate: sc.desired.angular_rate,
            start_offset: default_start_offset().iter().copied().collect(),
            start_match_velocity: false,
            start_guess: nominal_configuration().iter().copied().collect(),
            gravity: arr(robot.kinematics.gravity.iter().copied()),
            links,
            eih_camera: CameraConfig {
                intrinsics: intrinsics_of(&rig.eih_intr),
                pose: pose_of(&rig.eih_from_ee.inverse()),
            },
            fixed_camera: CameraConfig {
                intrinsics: intrinsics_of(&rig.fixed_intr),
                pose: pose_of(&rig.base_from_fixed),
            },
            output_dir: "out".into(),
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

fn number(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(invalid(key, format!("expected a number, got {v}"))),
    }
}

fn numbers(key: &str, v: &Value, len: Option<usize>) -> Result<Vec<f64>> {
    let items = v
        .as_array()
        .ok_or_else(|| invalid(key, format!("expected an array of numbers, got {v}")))?;
    let out = items
        .iter()
        .map(|x| number(key, x))
        .collect::<Result<Vec<_>>>()?;
    if let Some(len) = len {
        if out.len() != len {
            return Err(invalid(
                key,
                format!("expected {len} numbers, got {}", out.len()),
            ));
        }
    }
    Ok(out)
}

fn fixed<const N: usize>(key: &str, v: &Value) -> Result<[f64; N]> {
    Ok(arr(numbers(key, v, Some(N))?))
}

fn boolean(key: &str, v: &Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| invalid(key, format!("expected true or false, got {v}")))
}

fn text<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| invalid(key, format!("expected a quoted string, got {v}")))
}

fn parsed<T: std::str::FromStr<Err = hvs_core::Error>>(key: &str, v: &Value) -> Result<T> {
    text(key, v)?
        .parse()
        .map_err(|e: hvs_core::Error| invalid(key, e.to_string()))
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// Parses a config file body, validates it and returns the result.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Syntax {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
    let mut entries = Vec::new();
    flatten("", &table, &mut entries);
    let mut cfg = RunConfig::default();
    cfg.apply_all(entries)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Splits `key=value`. The value is read as a config value, or as a bare
/// string when it does not parse as one.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{s}' is not of the form key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

impl RunConfig {
    /// Applies a batch of entries. `robot.dof` is applied first so that link
    /// entries can extend the chain.
    pub fn apply_all(&mut self, mut entries: Vec<(String, Value)>) -> Result<()> {
        entries.sort_by_key(|(k, _)| k != "robot.dof");
        for (k, v) in &entries {
            self.apply(k, v)?;
        }
        Ok(())
    }

    /// Sets one key.
    pub fn apply(&mut self, key: &str, v: &Value) -> Result<()> {
        let g = &mut self.gains;
        match key {
            "scenario.kind" => self.scenario = parsed(key, v)?,
            "scenario.duration" => self.duration = number(key, v)?,
            "scenario.dt" => self.dt = number(key, v)?,
            "scenario.seed" => {
                self.seed = v
                    .as_integer()
                    .and_then(|i| u64::try_from(i).ok())
                    .ok_or_else(|| {
                        invalid(key, format!("expected a nonnegative integer, got {v}"))
                    })?
            }
            "scenario.divergence_bound" => self.divergence_bound = number(key, v)?,
            "scenario.convergence_ratio" => self.convergence_ratio = number(key, v)?,
            "controller.scheme" => self.scheme = parsed(key, v)?,
            "controller.damping" => self.damping = number(key, v)?,
            "controller.accel_filter_steps" => self.accel_filter_steps = number(key, v)?,
            "gains.lambda" => g.lambda = number(key, v)?,
            "gains.k1" => g.k1 = number(key, v)?,
            "gains.k1_depth" => g.k1_depth = number(key, v)?,
            "gains.k2" => g.k2 = number(key, v)?,
            "gains.psi_d" => g.psi_d = number(key, v)?,
            "gains.psi_k" => g.psi_k = number(key, v)?,
            "gains.psi_m" => g.psi_m = number(key, v)?,
            "gains.relative_adaptation" => g.relative_adaptation = boolean(key, v)?,
            "estimates.delta" => self.estimates.delta = number(key, v)?,
            "estimates.mode" => self.estimates.mode = parsed::<Perturbation>(key, v)?,
            "noise.pixel_sigma" => self.noise.pixel_sigma = number(key, v)?,
            "noise.depth_sigma" => self.noise.depth_sigma = number(key, v)?,
            "noise.difference_fixed_rate" => self.noise.difference_fixed_rate = boolean(key, v)?,
            "target.center" => self.target_center = fixed(key, v)?,
            "target.normal" => self.target_normal = fixed(key, v)?,
            "target.circle.radius" => self.circle_radius = number(key, v)?,
            "target.circle.angular_rate" => self.circle_rate = number(key, v)?,
            "target.rectangle.width" => self.rectangle_width = number(key, v)?,
            "target.rectangle.height" => self.rectangle_height = number(key, v)?,
            "target.rectangle.speed" => self.rectangle_speed = number(key, v)?,
            "target.rectangle.corner_radius" => self.rectangle_corner_radius = number(key, v)?,
            "features.offsets" => {
                let rows = v
                    .as_array()
                    .ok_or_else(|| invalid(key, "expected an array of [x, y, z] arrays"))?;
                self.feature_offsets = rows
                    .iter()
                    .map(|r| fixed::<3>(key, r))
                    .collect::<Result<_>>()?;
            }
            "desired.anchor" => self.desired_anchor = numbers(key, v, None)?,
            "desired.radius" => self.desired_radius = number(key, v)?,
            "desired.pitch" => self.desired_pitch = number(key, v)?,
            "desired.angular_rate" => self.desired_rate = number(key, v)?,
            "start.offset" => self.start_offset = numbers(key, v, None)?,
            "start.match_velocity" => self.start_match_velocity = boolean(key, v)?,
            "start.guess" => self.start_guess = numbers(key, v, None)?,
            "robot.gravity" => self.gravity = fixed(key, v)?,
            "robot.dof" => {
                let n = v
                    .as_integer()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| invalid(key, format!("expected a positive integer, got {v}")))?;
                self.links.resize(
                    n as usize,
                    LinkConfig {
                        dh: [0.0; 4],
                        mass: 0.0,
                        com: [0.0; 3],
                        inertia: [0.0; 6],
                    },
                );
            }
            "rig.eih.intrinsics" => self.eih_camera.intrinsics = fixed(key, v)?,
            "rig.eih.mount" => self.eih_camera.pose = fixed(key, v)?,
            "rig.fixed.intrinsics" => self.fixed_camera.intrinsics = fixed(key, v)?,
            "rig.fixed.pose" => self.fixed_camera.pose = fixed(key, v)?,
            "output.dir" => self.output_dir = text(key, v)?.to_string(),
            other => return self.apply_link(other, v),
        }
        Ok(())
    }

    fn apply_link(&mut self, key: &str, v: &Value) -> Result<()> {
        let unknown = || CliError::UnknownKey(key.to_string());
        let rest = key.strip_prefix("robot.link.").ok_or_else(unknown)?;
        let (index, field) = rest.split_once('.').ok_or_else(unknown)?;
        let index: usize = index.parse().map_err(|_| unknown())?;
        if index == 0 || index > self.links.len() {
            return Err(invalid(
                key,
                format!(
                    "link index must lie in 1..={} (set robot.dof to change the joint count)",
                    self.links.len()
                ),
            ));
        }
        let link = &mut self.links[index - 1];
        match field {
            "dh" => link.dh = fixed(key, v)?,
            "mass" => link.mass = number(key, v)?,
            "com" => link.com = fixed(key, v)?,
            "inertia" => link.inertia = fixed(key, v)?,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Checks every value, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(invalid(
                    key,
                    format!("must be positive and finite, got {x}"),
                ))
            }
        };
        let nonnegative = |key: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be >= 0 and finite, got {x}")))
            }
        };
        nonnegative("scenario.duration", self.duration)?;
        positive("scenario.dt", self.dt)?;
        positive("scenario.divergence_bound", self.divergence_bound)?;
        positive("scenario.convergence_ratio", self.convergence_ratio)?;
        nonnegative("controller.damping", self.damping)?;
        nonnegative("controller.accel_filter_steps", self.accel_filter_steps)?;
        let g = &self.gains;
        positive("gains.lambda", g.lambda)?;
        positive("gains.k1", g.k1)?;
        positive("gains.k1_depth", g.k1_depth)?;
        positive("gains.k2", g.k2)?;
        positive("gains.psi_d", g.psi_d)?;
        positive("gains.psi_k", g.psi_k)?;
        positive("gains.psi_m", g.psi_m)?;
        if !(self.estimates.delta >= 0.0 && self.estimates.delta < 1.0) {
            return Err(invalid(
                "estimates.delta",
                format!("must lie in [0, 1), got {}", self.estimates.delta),
            ));
        }
        nonnegative("noise.pixel_sigma", self.noise.pixel_sigma)?;
        nonnegative("noise.depth_sigma", self.noise.depth_sigma)?;
        if !(Vector3::from(self.target_normal).norm() > 0.0) {
            return Err(invalid("target.normal", "must be nonzero"));
        }
        nonnegative("target.circle.radius", self.circle_radius)?;
        if !self.circle_rate.is_finite() {
            return Err(invalid("target.circle.angular_rate", "must be finite"));
        }
        positive("target.rectangle.width", self.rectangle_width)?;
        positive("target.rectangle.height", self.rectangle_height)?;
        positive("target.rectangle.speed", self.rectangle_speed)?;
        let half = 0.5 * self.rectangle_width.min(self.rectangle_height);
        if !(self.rectangle_corner_radius >= 0.0 && self.rectangle_corner_radius <= half) {
            return Err(invalid(
                "target.rectangle.corner_radius",
                format!(
                    "must lie in [0, {half}], got {}",
                    self.rectangle_corner_radius
                ),
            ));
        }
        if self.feature_offsets.is_empty() {
            return Err(invalid(
                "features.offsets",
                "at least one feature is required",
            ));
        }
        if self.desired_anchor.len() != 3 * self.feature_offsets.len() {
            return Err(invalid(
                "desired.anchor",
                format!(
                    "needs 3 entries per feature ({}), got {}",
                    3 * self.feature_offsets.len(),
                    self.desired_anchor.len()
                ),
            ));
        }
        nonnegative("desired.radius", self.desired_radius)?;
        let n = self.links.len();
        for (key, v) in [
            ("start.offset", &self.start_offset),
            ("start.guess", &self.start_guess),
        ] {
            if v.len() != n {
                return Err(invalid(
                    key,
                    format!("needs one entry per joint ({n}), got {}", v.len()),
                ));
            }
        }
        for (key, cam) in [
            ("rig.eih.intrinsics", &self.eih_camera),
            ("rig.fixed.intrinsics", &self.fixed_camera),
        ] {
            let i = cam.intrinsics;
            RgbdIntrinsics::new(i[0], i[1], i[2], i[3], i[4], i[5])
                .map_err(|e| invalid(key, e.to_string()))?;
        }
        self.robot()?;
        if self.output_dir.is_empty() {
            return Err(invalid("output.dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn robot(&self) -> Result<RobotModel> {
        let dh = self
            .links
            .iter()
            .map(|l| DhRow::new(l.dh[0], l.dh[1], l.dh[2], l.dh[3]))
            .collect();
        let kin = SerialKinematics::new(dh, Vector3::from(self.gravity))
            .map_err(|e| invalid("robot.dof", e.to_string()))?;
        let links = self
            .links
            .iter()
            .map(|l| {
                let i = l.inertia;
                LinkInertia::new(
                    l.mass,
                    Vector3::from(l.com),
                    Matrix3::new(i[0], i[3], i[4], i[3], i[1], i[5], i[4], i[5], i[2]),
                )
            })
            .collect();
        RobotModel::new(kin, links).map_err(|e| invalid("robot.link", e.to_string()))
    }

    pub fn rig(&self) -> Result<HybridRig> {
        let intr = |key: &str, i: [f64; 6]| {
            RgbdIntrinsics::new(i[0], i[1], i[2], i[3], i[4], i[5])
                .map_err(|e| invalid(key, e.to_string()))
        };
        Ok(HybridRig {
            eih_intr: intr("rig.eih.intrinsics", self.eih_camera.intrinsics)?,
            fixed_intr: intr("rig.fixed.intrinsics", self.fixed_camera.intrinsics)?,
            eih_from_ee: transform_of(&self.eih_camera.pose).inverse(),
            base_from_fixed: transform_of(&self.fixed_camera.pose),
        })
    }

    pub fn motion(&self) -> TargetMotion {
        let center = CartesianPoint::from(self.target_center);
        let normal = Vector3::from(self.target_normal);
        match self.scenario {
            ScenarioKind::Static => TargetMotion::Static { center },
            ScenarioKind::Circle => TargetMotion::Circle {
                center,
                radius: self.circle_radius,
                angular_rate: self.circle_rate,
                normal,
            },
            ScenarioKind::Rectangle => TargetMotion::Rectangle {
                center,
                width: self.rectangle_width,
                height: self.rectangle_height,
                speed: self.rectangle_speed,
                corner_radius: self.rectangle_corner_radius,
                normal,
            },
        }
    }

    /// Builds the simulator scenario, solving for the start pose.
    pub fn scenario(&self) -> Result<Scenario> {
        self.validate()?;
        let mut sc = Scenario {
            robot: self.robot()?,
            rig: self.rig()?,
            motion: self.motion(),
            feature_offsets: self
                .feature_offsets
                .iter()
                .map(|o| Vector3::from(*o))
                .collect(),
            desired: DesiredTrajectory {
                anchor: DVector::from_vec(self.desired_anchor.clone()),
                radius: self.desired_radius,
                pitch: self.desired_pitch,
                angular_rate: self.desired_rate,
            },
            initial: JointState::at_rest(DVector::from_vec(self.start_guess.clone())),
            dt: self.dt,
            duration: self.duration,
            gains: self.gains,
            scheme: self.scheme,
            estimates: self.estimates,
            noise: self.noise,
            seed: self.seed,
            divergence_bound: self.divergence_bound,
            damping: self.damping,
            accel_filter_steps: self.accel_filter_steps,
        };
        sc.start_on_trajectory()
            .map_err(|e| invalid("start.guess", format!("start pose: {e}")))?;
        let q = &sc.initial.q + DVector::from_vec(self.start_offset.clone());
        sc.initial = if self.start_match_velocity {
            JointState::new(q, sc.initial.qdot.clone())
        } else {
            JointState::at_rest(q)
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(String, Value)> {
        let f = Value::Float;
        let list = |v: &[f64]| Value::Array(v.iter().map(|&x| Value::Float(x)).collect());
        let s = |x: String| Value::String(x);
        let g = &self.gains;
        let mut e: Vec<(String, Value)> = vec![
            ("scenario.kind".into(), s(self.scenario.to_string())),
            ("scenario.duration".into(), f(self.duration)),
            ("scenario.dt".into(), f(self.dt)),
            ("scenario.seed".into(), Value::Integer(self.seed as i64)),
            ("scenario.divergence_bound".into(), f(self.divergence_bound)),
            (
                "scenario.convergence_ratio".into(),
                f(self.convergence_ratio),
            ),
            ("controller.scheme".into(), s(self.scheme.to_string())),
            ("controller.damping".into(), f(self.damping)),
            (
                "controller.accel_filter_steps".into(),
                f(self.accel_filter_steps),
            ),
            ("gains.lambda".into(), f(g.lambda)),
            ("gains.k1".into(), f(g.k1)),
            ("gains.k1_depth".into(), f(g.k1_depth)),
            ("gains.k2".into(), f(g.k2)),
            ("gains.psi_d".into(), f(g.psi_d)),
            ("gains.psi_k".into(), f(g.psi_k)),
            ("gains.psi_m".into(), f(g.psi_m)),
            (
                "gains.relative_adaptation".into(),
                Value::Boolean(g.relative_adaptation),
            ),
            ("estimates.delta".into(), f(self.estimates.delta)),
            ("estimates.mode".into(), s(self.estimates.mode.to_string())),
            ("noise.pixel_sigma".into(), f(self.noise.pixel_sigma)),
            ("noise.depth_sigma".into(), f(self.noise.depth_sigma)),
            (
                "noise.difference_fixed_rate".into(),
                Value::Boolean(self.noise.difference_fixed_rate),
            ),
            ("target.center".into(), list(&self.target_center)),
            ("target.normal".into(), list(&self.target_normal)),
            ("target.circle.radius".into(), f(self.circle_radius)),
            ("target.circle.angular_rate".into(), f(self.circle_rate)),
            ("target.rectangle.width".into(), f(self.rectangle_width)),
            ("target.rectangle.height".into(), f(self.rectangle_height)),
            ("target.rectangle.speed".into(), f(self.rectangle_speed)),
            (
                "target.rectangle.corner_radius".into(),
                f(self.rectangle_corner_radius),
            ),
            (
                "features.offsets".into(),
                Value::Array(self.feature_offsets.iter().map(|o| list(o)).collect()),
            ),
            ("desired.anchor".into(), list(&self.desired_anchor)),
            ("desired.radius".into(), f(self.desired_radius)),
            ("desired.pitch".into(), f(self.desired_pitch)),
            ("desired.angular_rate".into(), f(self.desired_rate)),
            ("start.offset".into(), list(&self.start_offset)),
            (
                "start.match_velocity".into(),
                Value::Boolean(self.start_match_velocity),
            ),
            ("start.guess".into(), list(&self.start_guess)),
            ("robot.dof".into(), Value::Integer(self.links.len() as i64)),
            ("robot.gravity".into(), list(&self.gravity)),
        ];
        for (i, l) in self.links.iter().enumerate() {
            let p = format!("robot.link.{}", i + 1);
            e.push((format!("{p}.dh"), list(&l.dh)));
            e.push((format!("{p}.mass"), f(l.mass)));
            e.push((format!("{p}.com"), list(&l.com)));
            e.push((format!("{p}.inertia"), list(&l.inertia)));
        }
        e.extend([
            (
                "rig.eih.intrinsics".to_string(),
                list(&self.eih_camera.intrinsics),
            ),
            ("rig.eih.mount".to_string(), list(&self.eih_camera.pose)),
            (
                "rig.fixed.intrinsics".to_string(),
                list(&self.fixed_camera.intrinsics),
            ),
            ("rig.fixed.pose".to_string(), list(&self.fixed_camera.pose)),
            ("output.dir".to_string(), s(self.output_dir.clone())),
        ]);
        e
    }

    /// Serializes every key. Floats are written in shortest round-trip form,
    /// so parsing the text gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = String::new();
        for (key, value) in self.entries() {
            let head = key.split('.').next().unwrap_or_default().to_string();
            if head != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = head;
            }
            let _ = writeln!(out, "{key} = {}", format_value(&value));
        }
        out
    }

    /// Keys accepted by [`apply`](Self::apply) for the current joint count.
    pub fn keys(&self) -> Vec<String> {
        self.entries().into_iter().map(|(k, _)| k).collect()
    }
}

fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

fn format_value(v: &Value) -> String {
    match v {
        Value::Float(x) => format_float(*x),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(format_value).collect();
            format!("[{}]", parts.join(", "))
        }
        other => other.to_string(),
    }
}

/// Entries of `text` that differ from the defaults, keyed by name. Used to
/// report what a config file changes.
pub fn changed_keys(cfg: &RunConfig) -> BTreeMap<String, String> {
    let defaults: BTreeMap<String, Value> = RunConfig::default().entries().into_iter().collect();
    cfg.entries()
        .into_iter()
        .filter(|(k, v)| defaults.get(k) != Some(v))
        .map(|(k, v)| (k, format_value(&v)))
        .collect()
}
