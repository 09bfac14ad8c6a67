use nalgebra::DVector;

use crate::error::{Error, Result};

/// One logged control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub tau: DVector<f64>,
    /// Measured eye-in-hand features.
    pub y: DVector<f64>,
    pub y_d: DVector<f64>,
    /// Noise-free feature velocity `Q qdot + J ydot_fixed` from the true rig.
    pub ydot: DVector<f64>,
    pub delta_y_norm: f64,
    pub delta_ydot_norm: f64,
    pub s_norm: f64,
    /// Lyapunov value before this tick's adaptation step.
    pub lyapunov: f64,
    /// Relative residual of `Q^ s = dydot + lambda dy + (J^ - J) ydot_fixed + Y dtheta_k`.
    pub sliding_residual: f64,
    /// Relative residual of `H sdot + (Hdot/2 + C) s = Y_d dtheta_d - Q^T K1 dy - K2 s`.
    pub dynamics_residual: f64,
    pub theta_k_norm: f64,
    pub theta_m_norm: f64,
    pub theta_d_norm: f64,
}

/// A uniformly sampled closed-loop trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub dt: f64,
    /// Joint count.
    pub n: usize,
    /// Feature count.
    pub k: usize,
    pub records: Vec<TraceRecord>,
}

const SCALARS: [&str; 9] = [
    "dy_norm",
    "dydot_norm",
    "s_norm",
    "V",
    "sliding_residual",
    "dynamics_residual",
    "theta_k_norm",
    "theta_m_norm",
    "theta_d_norm",
];

impl TraceLog {
    pub fn new(dt: f64, n: usize, k: usize) -> Self {
        Self {
            dt,
            n,
            k,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Column names, in row order.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        let vecs: [(&str, usize); 6] = [
            ("q", self.n),
            ("qdot", self.n),
            ("tau", self.n),
            ("y", 3 * self.k),
            ("yd", 3 * self.k),
            ("ydot", 3 * self.k),
        ];
        for (name, len) in vecs {
            h.extend((0..len).map(|i| format!("{name}{i}")));
        }
        h.extend(SCALARS.iter().map(|s| s.to_string()));
        h
    }

    pub fn row(&self, r: &TraceRecord) -> Vec<f64> {
        let mut row = Vec::with_capacity(1 + 3 * self.n + 9 * self.k + SCALARS.len());
        row.push(r.t);
        for v in [&r.q, &r.qdot, &r.tau, &r.y, &r.y_d, &r.ydot] {
            row.extend(v.iter().copied());
        }
        row.extend([
            r.delta_y_norm,
            r.delta_ydot_norm,
            r.s_norm,
            r.lyapunov,
            r.sliding_residual,
            r.dynamics_residual,
            r.theta_k_norm,
            r.theta_m_norm,
            r.theta_d_norm,
        ]);
        row
    }

    /// Rebuilds a trace from a header and rows as produced by [`header`](Self::header)
    /// and [`row`](Self::row). `dt` is taken from the first two time stamps.
    pub fn from_table(header: &[String], rows: &[Vec<f64>]) -> Result<Self> {
        let count = |prefix: &str| {
            header
                .iter()
                .filter(|h| {
                    h.strip_prefix(prefix).is_some_and(|rest| {
                        !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
                    })
                })
                .count()
        };
        let n = count("q");
        let k = count("y") / 3;
        if n == 0 || k == 0 {
            return Err(Error::InvalidArgument(
                "trace header lacks q or y columns".into(),
            ));
        }
        let mut log = TraceLog::new(0.0, n, k);
        let expected = log.header();
        if header != expected.as_slice() {
            return Err(Error::InvalidArgument(
                "trace header does not match the expected layout".into(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != expected.len() {
                return Err(Error::InvalidArgument(format!(
                    "record {i}: expected {} columns, got {}",
                    expected.len(),
                    row.len()
                )));
            }
            let mut at = 1;
            let mut take = |len: usize| {
                let v = DVector::from_column_slice(&row[at..at + len]);
                at += len;
                v
            };
            let q = take(n);
            let qdot = take(n);
            let tau = take(n);
            let y = take(3 * k);
            let y_d = take(3 * k);
            let ydot = take(3 * k);
            let s = &row[at..];
            log.records.push(TraceRecord {
                t: row[0],
                q,
                qdot,
                tau,
                y,
                y_d,
                ydot,
                delta_y_norm: s[0],
                delta_ydot_norm: s[1],
                s_norm: s[2],
                lyapunov: s[3],
                sliding_residual: s[4],
                dynamics_residual: s[5],
                theta_k_norm: s[6],
                theta_m_norm: s[7],
                theta_d_norm: s[8],
            });
        }
        if log.records.len() >= 2 {
            log.dt = log.records[1].t - log.records[0].t;
        }
        Ok(log)
    }
}

/// Closed-form statistics of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub initial_error: f64,
    pub final_error: f64,
    /// RMS of `|dy|` over the final 20% of the records.
    pub final_rms: f64,
    /// Mean `|dydot|` over the first and final 20% of the records.
    pub early_rate_error: f64,
    pub late_rate_error: f64,
    /// First time after which `|dy|` stays within 5% of its initial value.
    pub settling_time: Option<f64>,
    pub peak_torque: f64,
    /// Ticks with `V(t_{k+1}) > V(t_k) + epsilon`.
    pub lyapunov_violations: usize,
    pub max_sliding_residual: f64,
    pub max_dynamics_residual: f64,
}

impl Metrics {
    /// Final RMS below `ratio` times the initial error with the rate error
    /// trending down.
    pub fn converged(&self, ratio: f64) -> bool {
        self.final_rms < ratio * self.initial_error && self.late_rate_error < self.early_rate_error
    }
}

fn tail_start(len: usize) -> usize {
    let count = ((len as f64) * 0.2).ceil().max(1.0) as usize;
    len - count.min(len)
}

/// Metrics with `lyapunov_tolerance` as the per-tick allowance.
pub fn metrics(trace: &TraceLog, lyapunov_tolerance: f64) -> Result<Metrics> {
    let r = &trace.records;
    if r.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let tail = tail_start(r.len());
    let head = r.len() - tail;
    let final_rms = (r[tail..]
        .iter()
        .map(|x| x.delta_y_norm.powi(2))
        .sum::<f64>()
        / (r.len() - tail) as f64)
        .sqrt();
    let mean =
        |it: &[TraceRecord]| it.iter().map(|x| x.delta_ydot_norm).sum::<f64>() / it.len() as f64;
    let initial = r[0].delta_y_norm;
    let band = 0.05 * initial;
    let settling_time = match r.iter().rposition(|x| x.delta_y_norm > band) {
        None => Some(r[0].t),
        Some(i) if i + 1 < r.len() => Some(r[i + 1].t),
        Some(_) => None,
    };
    let peak_torque = r
        .iter()
        .flat_map(|x| x.tau.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Metrics {
        initial_error: initial,
        final_error: r[r.len() - 1].delta_y_norm,
        final_rms,
        early_rate_error: mean(&r[..head]),
        late_rate_error: mean(&r[tail..]),
        settling_time,
        peak_torque,
        lyapunov_violations: lyapunov_violations(trace, lyapunov_tolerance),
        max_sliding_residual: r.iter().map(|x| x.sliding_residual).fold(0.0, f64::max),
        max_dynamics_residual: r.iter().map(|x| x.dynamics_residual).fold(0.0, f64::max),
    })
}

/// Per-tick Lyapunov allowance is `c dt^2` with `c = LYAPUNOV_SLACK * V(0)`.
/// The continuous-time derivative of `V` is nonpositive; the sampled sequence
/// can still rise by the local error of the explicit adaptation step and the
/// held torque. Scaling by `V(0)` makes the bound independent of the units
/// of the parameter-error terms, which dominate `V`. Units: 1/s^2.
pub const LYAPUNOV_SLACK: f64 = 1.0;

/// `c dt^2` for `trace`, with `c = LYAPUNOV_SLACK * V(0)`.
pub fn lyapunov_allowance(trace: &TraceLog) -> f64 {
    let v0 = trace.records.first().map_or(0.0, |r| r.lyapunov.abs());
    LYAPUNOV_SLACK * v0 * trace.dt * trace.dt
}

/// Sum of the positive per-tick increments of `V`.
pub fn lyapunov_ascent(trace: &TraceLog) -> f64 {
    trace
        .records
        .windows(2)
        .map(|w| (w[1].lyapunov - w[0].lyapunov).max(0.0))
        .sum()
}

pub fn lyapunov_violations(trace: &TraceLog, tolerance: f64) -> usize {
    trace
        .records
        .windows(2)
        .filter(|w| w[1].lyapunov > w[0].lyapunov + tolerance)
        .count()
}

/// Largest relative gap between the finite difference of the logged features
/// over each sample interval and the logged model velocity `Q qdot + J
/// ydot_fixed` averaged over the same interval. The torque is held within an
/// interval, so the features are smooth there and the gap is second order in
/// `dt`; a central difference across a tick would also pick up the jump in
/// acceleration between intervals. Intervals where the model velocity is
/// below 1% of its peak are skipped.
pub fn velocity_consistency(trace: &TraceLog) -> Result<f64> {
    let r = &trace.records;
    if r.len() < 2 {
        return Err(Error::EmptyTrace);
    }
    let peak = r.iter().map(|x| x.ydot.norm()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for w in r.windows(2) {
        let model = (&w[0].ydot + &w[1].ydot) * 0.5;
        if model.norm() < 0.01 * peak {
            continue;
        }
        let fd = (&w[1].y - &w[0].y) / (w[1].t - w[0].t);
        worst = worst.max((fd - &model).norm() / model.norm());
    }
    Ok(worst)
}
