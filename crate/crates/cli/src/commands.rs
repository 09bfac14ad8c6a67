//! The `run`, `sweep`, `plot` and `selftest` verbs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hvs_core::rig::{FeatureSet, RegressorFrame, Scheme};
use hvs_core::robot::{DynamicRegressor, JointState};
use hvs_core::simulation::{
    lyapunov_allowance, metrics, rk4_step, run, velocity_consistency, Metrics, RunOutcome,
    Scenario, TargetMotion, TraceLog, TrueParameters,
};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::trace_io::{format_float, read_trace, save_trace, write_trace};

/// Overrides the output directory of the config file; `--out` overrides both.
pub const OUT_DIR_ENV: &str = "HVS_OUT_DIR";

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

/// `--out`, then the environment, then `output.dir`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(&cfg.output_dir),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Converged,
    /// Completed without meeting the convergence test.
    NotConverged,
    /// Stopped early by divergence, loss of visibility or a non-finite state.
    Diverged(String),
    /// Could not be set up or failed for a reason other than divergence.
    Failed(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Converged => EXIT_CONVERGED,
            Status::NotConverged | Status::Diverged(_) => EXIT_DIVERGED,
            Status::Failed(_) => EXIT_ERROR,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::NotConverged => "not_converged",
            Status::Diverged(_) => "diverged",
            Status::Failed(_) => "failed",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Status::Diverged(m) | Status::Failed(m) => m,
            _ => "",
        }
    }
}

/// Result of one closed-loop run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub status: Status,
    pub metrics: Option<Metrics>,
    pub records: usize,
}

impl RunReport {
    /// `final_rms / initial_error`, or infinity when the run did not complete.
    pub fn ratio(&self) -> f64 {
        match (&self.status, &self.metrics) {
            (Status::Converged | Status::NotConverged, Some(m)) => m.final_rms / m.initial_error,
            _ => f64::INFINITY,
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "status = {}", self.status.label());
        if !self.status.message().is_empty() {
            let _ = writeln!(s, "message = {}", self.status.message());
        }
        let _ = writeln!(s, "records = {}", self.records);
        if let Some(m) = &self.metrics {
            let rows = [
                ("initial_error", m.initial_error),
                ("final_error", m.final_error),
                ("final_rms", m.final_rms),
                ("ratio", self.ratio()),
                ("early_rate_error", m.early_rate_error),
                ("late_rate_error", m.late_rate_error),
                ("peak_torque", m.peak_torque),
                ("max_sliding_residual", m.max_sliding_residual),
                ("max_dynamics_residual", m.max_dynamics_residual),
            ];
            for (k, v) in rows {
                let _ = writeln!(s, "{k} = {}", format_float(v));
            }
            let settle = m
                .settling_time
                .map(format_float)
                .unwrap_or_else(|| "none".into());
            let _ = writeln!(s, "settling_time = {settle}");
            let _ = writeln!(s, "lyapunov_violations = {}", m.lyapunov_violations);
        }
        s
    }
}

/// Classifies a finished run.
pub fn assess(seed: u64, outcome: &RunOutcome, convergence_ratio: f64) -> RunReport {
    let m = if outcome.trace.is_empty() {
        None
    } else {
        metrics(&outcome.trace, lyapunov_allowance(&outcome.trace)).ok()
    };
    let status = match (&outcome.error, &m) {
        (Some(e), _) if e.is_divergence() => Status::Diverged(e.to_string()),
        (Some(e), _) => Status::Failed(e.to_string()),
        (None, Some(m)) if m.converged(convergence_ratio) => Status::Converged,
        (None, Some(_)) => Status::NotConverged,
        (None, None) => Status::Failed("empty trace".into()),
    };
    RunReport {
        seed,
        status,
        metrics: m,
        records: outcome.trace.len(),
    }
}

/// Builds and runs the scenario of `cfg`.
pub fn simulate(cfg: &RunConfig) -> Result<(Scenario, RunOutcome)> {
    let sc = cfg.scenario()?;
    let outcome = run(&sc)?;
    Ok((sc, outcome))
}

/// Runs one simulation and writes `trace.csv`, `summary.txt` and the
/// resolved `config.toml` into `out`.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    let (_, outcome) = simulate(cfg)?;
    let report = assess(cfg.seed, &outcome, cfg.convergence_ratio);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    save_trace(&outcome.trace, &out.join("trace.csv"))?;
    write_file(&out.join("summary.txt"), &report.summary())?;
    write_file(&out.join("config.toml"), &cfg.to_text())?;
    Ok(report)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}

/// Seed of run `index` in a sweep with master seed `master`.
pub fn sweep_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(index as u64)
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: Vec<RunReport>,
}

impl SweepReport {
    pub fn converged(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| r.status == Status::Converged)
            .count()
    }

    pub fn fraction(&self) -> f64 {
        if self.runs.is_empty() {
            0.0
        } else {
            self.converged() as f64 / self.runs.len() as f64
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::from("seed,status,records,initial_error,final_rms,ratio,early_rate_error,late_rate_error,lyapunov_violations,message\n");
        for r in &self.runs {
            let (init, rms, early, late, viol) = match &r.metrics {
                Some(m) => (
                    format_float(m.initial_error),
                    format_float(m.final_rms),
                    format_float(m.early_rate_error),
                    format_float(m.late_rate_error),
                    m.lyapunov_violations.to_string(),
                ),
                None => Default::default(),
            };
            let message = r.status.message().replace(['"', '\n'], "'");
            let _ = writeln!(
                s,
                "{},{},{},{init},{rms},{},{early},{late},{viol},\"{message}\"",
                r.seed,
                r.status.label(),
                r.records,
                format_float(r.ratio())
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "runs = {}\nconverged = {}\nconvergence_fraction = {}\n",
            self.runs.len(),
            self.converged(),
            format_float(self.fraction())
        )
    }
}

fn run_isolated(cfg: &RunConfig, seed: u64, trace_dir: Option<&Path>) -> RunReport {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let failed = |m: String| RunReport {
        seed,
        status: Status::Failed(m),
        metrics: None,
        records: 0,
    };
    let attempt = std::panic::catch_unwind(|| -> Result<RunReport> {
        let (_, outcome) = simulate(&cfg)?;
        if let Some(dir) = trace_dir {
            save_trace(&outcome.trace, &dir.join(format!("trace_seed{seed}.csv")))?;
        }
        Ok(assess(seed, &outcome, cfg.convergence_ratio))
    });
    match attempt {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => failed(e.to_string()),
        Err(p) => failed(
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()),
        ),
    }
}

/// Runs `seeds` simulations in parallel with seeds derived from `cfg.seed`.
/// A failing run is recorded and does not stop the others. Writes
/// `sweep.csv` and `sweep.txt`, plus one trace per run when `traces` is set.
pub fn cmd_sweep(cfg: &RunConfig, seeds: usize, out: &Path, traces: bool) -> Result<SweepReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let trace_dir = traces.then_some(out);
    let runs = (0..seeds)
        .into_par_iter()
        .map(|i| run_isolated(cfg, sweep_seed(cfg.seed, i), trace_dir))
        .collect();
    let report = SweepReport { runs };
    write_file(&out.join("sweep.csv"), &report.table())?;
    write_file(&out.join("sweep.txt"), &report.summary())?;
    write_file(&out.join("config.toml"), &cfg.to_text())?;
    Ok(report)
}

/// Reads a trace file and writes the SVG plots into `out`.
pub fn cmd_plot(trace: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let file = std::fs::File::open(trace).map_err(|e| CliError::io(trace, e))?;
    let log = read_trace(std::io::BufReader::new(file))?;
    crate::plot::write_plots(&log, out)
}

/// One self-check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm()).max(f64::MIN_POSITIVE);
    (a - b).norm() / scale
}

fn probe(i: usize, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |j, _| {
        scale * ((i * 7 + j * 3 + 1) as f64 * 0.618_033_988_75).sin()
    })
}

/// Quick checks of the model identities and of the run pipeline on the
/// configured scenario.
pub fn selftest(cfg: &RunConfig) -> Result<Vec<Check>> {
    let sc = cfg.scenario()?;
    let robot = &sc.robot;
    let kin = &robot.kinematics;
    let n = robot.dof();
    let regressor = DynamicRegressor::new(kin.clone());
    let mut worst_k: f64 = 0.0;
    let mut worst_m: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    let mut worst_skew: f64 = 0.0;
    for scheme in [Scheme::Hybrid, Scheme::EyeInHand] {
        let truth = TrueParameters::new(robot, &sc.rig, scheme, &regressor);
        for i in 0..20 {
            let q = &sc.initial.q + probe(i, n, 0.05);
            let (points, _) = sc.feature_points(0.0);
            let features: FeatureSet = sc.rig.observe(kin, &q, &points)?;
            let phi = probe(i + 100, n, 1.0);
            let psi = probe(i + 200, 3 * features.len(), 1.0);
            let frame = RegressorFrame::new(kin, &q);
            let (big_q, big_j) = sc.rig.image_jacobians(kin, &q, &features.fixed)?;
            if scheme == Scheme::Hybrid {
                worst_k = worst_k.max(rel(
                    &(frame.y(scheme, &features, &phi)? * &truth.theta_k),
                    &(&big_q * &phi),
                ));
                worst_m = worst_m.max(rel(
                    &(frame.w(&features, &psi)? * &truth.theta_m),
                    &(&big_j * &psi),
                ));
            }
            let qd = probe(i + 300, n, 1.0);
            let qr_dot = probe(i + 400, n, 1.0);
            let qr_ddot = probe(i + 500, n, 1.0);
            let terms = robot.dynamics_terms(&q);
            let direct = terms.inverse_dynamics(&qd, &qr_dot, &qr_ddot);
            worst_d = worst_d.max(rel(
                &(regressor.regressor(&q, &qd, &qr_dot, &qr_ddot) * &truth.theta_d),
                &direct,
            ));
            let c = robot.coriolis_matrix(&q, &qd);
            worst_skew = worst_skew.max(phi.dot(&(&c * &phi)).abs());
        }
    }

    let mut free = robot.clone();
    free.kinematics.gravity = nalgebra::Vector3::zeros();
    let mut joint = JointState::new(sc.initial.q.clone(), probe(7, n, 1.0));
    let e0 = free.kinetic_energy(&joint.q, &joint.qdot);
    for _ in 0..1000 {
        joint = rk4_step(&free, &joint, &DVector::zeros(n), 1e-3)?;
    }
    let drift = ((free.kinetic_energy(&joint.q, &joint.qdot) - e0) / e0).abs();

    let mut fine = sc.clone();
    fine.dt = 1e-4;
    fine.duration = 0.05;
    let fine_run = run(&fine)?;
    let velocity_gap = match &fine_run.error {
        None => velocity_consistency(&fine_run.trace)?,
        Some(_) => f64::INFINITY,
    };

    let mut hold = sc.clone();
    hold.duration = 0.5;
    hold.estimates.delta = 0.0;
    hold.motion = TargetMotion::Static {
        center: hold.motion.center(),
    };
    hold.desired.radius = 0.0;
    hold.desired.pitch = 0.0;
    hold.start_on_trajectory()?;
    let held = run(&hold)?;
    let hold_error = match &held.error {
        None => held
            .trace
            .records
            .iter()
            .map(|r| r.delta_y_norm)
            .fold(0.0, f64::max),
        Some(_) => f64::INFINITY,
    };

    let mut short = cfg.clone();
    short.duration = short.duration.min(0.1);
    let a = simulate(&short)?.1.trace;
    let b = simulate(&short)?.1.trace;
    let same = if a.records == b.records { 0.0 } else { 1.0 };
    let round_trip = trace_round_trip(&a)?;
    let check = |name, value, tolerance| Check {
        name,
        value,
        tolerance,
    };
    Ok(vec![
        check("image regressor identity", worst_k, 1e-9),
        check("fixed-image regressor identity", worst_m, 1e-9),
        check("dynamic regressor identity", worst_d, 1e-9),
        check("coriolis skew symmetry", worst_skew, 1e-12),
        check("torque-free energy drift", drift, 1e-6),
        check("feature velocity model", velocity_gap, 1e-3),
        check("equilibrium hold", hold_error, 1e-6),
        check("repeat runs identical", same, 0.0),
        check("trace csv round trip", round_trip, 0.0),
    ])
}

fn trace_round_trip(trace: &TraceLog) -> Result<f64> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    let back = read_trace(buf.as_slice())?;
    Ok(if back.records == trace.records {
        0.0
    } else {
        1.0
    })
}
