use std::f64::consts::PI;

use hvs_core::geometry::{back_project, project, CartesianPoint, RgbdIntrinsics, Transform};
use hvs_core::robot::{DynamicRegressor, JointState};
use hvs_core::simulation::{elbow_arm, preset, rk4_step, run, ScenarioKind};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

fn intrinsics() -> impl Strategy<Value = RgbdIntrinsics> {
    (
        400.0..800.0f64,
        400.0..800.0f64,
        1.3..1.8f64,
        280.0..360.0f64,
        200.0..280.0f64,
        0.5..1.5f64,
    )
        .prop_map(|(a, b, s, u, v, mu)| RgbdIntrinsics::new(a, b, s, u, v, mu).unwrap())
}

fn joints() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-PI..PI, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn back_projection_inverts_projection(intr in intrinsics(), x in -0.5..0.5f64, y in -0.5..0.5f64, z in 0.1..3.0f64) {
        let p = CartesianPoint::new(x, y, z);
        let back = back_project(&intr, &project(&intr, &p).unwrap()).unwrap();
        prop_assert!((back - p).norm() < 1e-12 * (1.0 + p.coords.norm()));
    }

    #[test]
    fn transform_inverse_round_trips(r in -PI..PI, p in -1.5..1.5f64, yaw in -PI..PI, t in prop::array::uniform3(-2.0..2.0f64)) {
        let tf = Transform::from_rpy([r, p, yaw], Vector3::from(t));
        let x = CartesianPoint::new(0.3, -0.2, 0.9);
        let back = tf.inverse().transform_point(&tf.transform_point(&x));
        prop_assert!((back - x).norm() < 1e-12);
    }

    #[test]
    fn inertia_is_symmetric_positive_definite(q in joints()) {
        let robot = elbow_arm();
        let h = robot.inertia_matrix(&DVector::from_vec(q));
        prop_assert!((&h - h.transpose()).amax() < 1e-12);
        prop_assert!(h.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn inertia_rate_matches_finite_difference(q in joints(), qd in prop::collection::vec(-2.0..2.0f64, 3)) {
        let robot = elbow_arm();
        let q = DVector::from_vec(q);
        let qd = DVector::from_vec(qd);
        let h = 1e-6;
        let fd = (robot.inertia_matrix(&(&q + &qd * h)) - robot.inertia_matrix(&(&q - &qd * h))) / (2.0 * h);
        let analytic = robot.inertia_derivative(&q, &qd);
        prop_assert!((fd - &analytic).amax() < 1e-6 * (1.0 + analytic.amax()));
    }

    #[test]
    fn dynamic_regressor_is_linear_in_reference(q in joints(), a in -2.0..2.0f64) {
        let robot = elbow_arm();
        let reg = DynamicRegressor::new(robot.kinematics.clone());
        let q = DVector::from_vec(q);
        let qd = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let r1 = DVector::from_vec(vec![1.0, 0.5, -0.4]);
        let r2 = DVector::from_vec(vec![-0.2, 0.8, 0.1]);
        let zero = DVector::zeros(3);
        let g = reg.regressor(&q, &qd, &zero, &zero);
        let lhs = reg.regressor(&q, &qd, &(&r1 * a), &(&r2 * a)) - &g;
        let rhs = (reg.regressor(&q, &qd, &r1, &r2) - &g) * a;
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }
}

#[test]
fn gravity_free_arm_at_rest_stays_at_rest() {
    let mut robot = elbow_arm();
    robot.kinematics.gravity = Vector3::zeros();
    let mut joint = JointState::at_rest(DVector::from_vec(vec![0.2, 0.4, -0.7]));
    let start = joint.clone();
    for _ in 0..100 {
        joint = rk4_step(&robot, &joint, &DVector::zeros(3), 1e-3).unwrap();
    }
    assert_eq!(joint, start);
}

#[test]
fn known_parameters_track_the_circle() {
    let mut sc = preset(ScenarioKind::Circle);
    sc.estimates.delta = 0.0;
    sc.duration = 5.0;
    let out = run(&sc).unwrap();
    assert!(out.completed());
    let r = &out.trace.records;
    assert!(r[r.len() - 1].delta_y_norm < 0.01 * r[0].delta_y_norm);
}

#[test]
fn presets_start_near_the_target() {
    for kind in [
        ScenarioKind::Circle,
        ScenarioKind::Rectangle,
        ScenarioKind::Static,
    ] {
        let out = run(&{
            let mut sc = preset(kind);
            sc.duration = 0.0;
            sc
        })
        .unwrap();
        let e = out.trace.records[0].delta_y_norm;
        assert!(e > 10.0 && e < 100.0, "{kind}: {e}");
    }
}

#[test]
fn logged_feature_velocity_matches_difference() {
    let mut sc = preset(ScenarioKind::Circle);
    sc.dt = 1e-4;
    sc.duration = 0.2;
    let out = run(&sc).unwrap();
    assert!(hvs_core::simulation::velocity_consistency(&out.trace).unwrap() < 1e-5);
}
