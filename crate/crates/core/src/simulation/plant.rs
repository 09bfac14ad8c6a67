use nalgebra::DVector;

use crate::error::Result;
use crate::robot::{JointState, RobotModel};

/// One classical fourth-order Runge-Kutta step of the arm dynamics with the
/// torque held constant over the step.
pub fn rk4_step(
    model: &RobotModel,
    joint: &JointState,
    tau: &DVector<f64>,
    dt: f64,
) -> Result<JointState> {
    let f = |q: &DVector<f64>, qd: &DVector<f64>| model.forward_dynamics(q, qd, tau);
    let (q, v) = (&joint.q, &joint.qdot);
    let a1 = f(q, v)?;
    let q2 = q + v * (dt / 2.0);
    let v2 = v + &a1 * (dt / 2.0);
    let a2 = f(&q2, &v2)?;
    let q3 = q + &v2 * (dt / 2.0);
    let v3 = v + &a2 * (dt / 2.0);
    let a3 = f(&q3, &v3)?;
    let q4 = q + &v3 * dt;
    let v4 = v + &a3 * dt;
    let a4 = f(&q4, &v4)?;
    Ok(JointState::new(
        q + (v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0),
        v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0),
    ))
}
