use nalgebra::{DVector, Matrix3, Matrix3xX, Vector3};

use super::DhRow;
use crate::geometry::{skew, Transform};

fn dh_transform(row: &DhRow, q: f64) -> Transform {
    let (st, ct) = (q + row.theta_offset).sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    let rotation = Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca);
    Transform {
        rotation,
        translation: Vector3::new(row.a * ct, row.a * st, row.d),
    }
}

pub(super) fn forward_kinematics(dh: &[DhRow], q: &DVector<f64>) -> Transform {
    assert_eq!(q.len(), dh.len(), "joint vector length");
    dh.iter()
        .zip(q.iter())
        .fold(Transform::identity(), |acc, (row, &qi)| {
            crate::geometry::compose(&acc, &dh_transform(row, qi))
        })
}

/// Geometry of one link at a configuration: the Jacobians of its frame origin
/// and their partial derivatives with respect to each joint angle.
#[derive(Debug, Clone)]
pub struct LinkGeometry {
    /// Rotation of the link frame in the base frame.
    pub rotation: Matrix3<f64>,
    /// Origin of the link frame in the base frame.
    pub origin: Vector3<f64>,
    /// Linear velocity Jacobian of the frame origin (3 x n).
    pub jv: Matrix3xX<f64>,
    /// Angular velocity Jacobian (3 x n).
    pub jw: Matrix3xX<f64>,
    /// `d jv / d q_k` for every joint `k`.
    pub djv: Vec<Matrix3xX<f64>>,
    /// `d jw / d q_k` for every joint `k`.
    pub djw: Vec<Matrix3xX<f64>>,
}

/// All frames of the chain at a configuration. `frames[0]` is the base and
/// `frames[i]` sits at the distal end of link `i - 1`; joint `j` rotates about
/// the z axis of `frames[j]`.
#[derive(Debug, Clone)]
pub struct ChainKinematics {
    pub frames: Vec<Transform>,
    pub links: Vec<LinkGeometry>,
}

impl ChainKinematics {
    pub fn new(dh: &[DhRow], q: &DVector<f64>) -> Self {
        let n = dh.len();
        assert_eq!(q.len(), n, "joint vector length");
        let mut frames = Vec::with_capacity(n + 1);
        frames.push(Transform::identity());
        for (j, row) in dh.iter().enumerate() {
            let next = crate::geometry::compose(&frames[j], &dh_transform(row, q[j]));
            frames.push(next);
        }
        let axes: Vec<Vector3<f64>> = frames
            .iter()
            .map(|f| f.rotation.column(2).into_owned())
            .collect();
        let origins: Vec<Vector3<f64>> = frames.iter().map(|f| f.translation).collect();

        // d z_j / d q_k and d o_m / d q_k for the revolute chain.
        let daxis = |j: usize, k: usize| -> Vector3<f64> {
            if k < j {
                axes[k].cross(&axes[j])
            } else {
                Vector3::zeros()
            }
        };
        let dorigin = |m: usize, k: usize| -> Vector3<f64> {
            if k < m {
                axes[k].cross(&(origins[m] - origins[k]))
            } else {
                Vector3::zeros()
            }
        };

        let links = (0..n)
            .map(|i| {
                let m = i + 1;
                let mut jv = Matrix3xX::zeros(n);
                let mut jw = Matrix3xX::zeros(n);
                for j in 0..=i {
                    jv.set_column(j, &axes[j].cross(&(origins[m] - origins[j])));
                    jw.set_column(j, &axes[j]);
                }
                let mut djv = Vec::with_capacity(n);
                let mut djw = Vec::with_capacity(n);
                for k in 0..n {
                    let mut dv = Matrix3xX::zeros(n);
                    let mut dw = Matrix3xX::zeros(n);
                    for j in 0..=i {
                        let dz = daxis(j, k);
                        let lever = origins[m] - origins[j];
                        let dlever = dorigin(m, k) - dorigin(j, k);
                        dv.set_column(j, &(dz.cross(&lever) + axes[j].cross(&dlever)));
                        dw.set_column(j, &dz);
                    }
                    djv.push(dv);
                    djw.push(dw);
                }
                LinkGeometry {
                    rotation: frames[m].rotation,
                    origin: origins[m],
                    jv,
                    jw,
                    djv,
                    djw,
                }
            })
            .collect();
        Self { frames, links }
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    /// Joint axis `j` in the base frame.
    pub fn axis(&self, j: usize) -> Vector3<f64> {
        self.frames[j].rotation.column(2).into_owned()
    }

    /// `d R_m / d q_k` for the rotation of frame `m`.
    pub fn rotation_derivative(&self, m: usize, k: usize) -> Matrix3<f64> {
        if k < m {
            skew(&self.axis(k)) * self.frames[m].rotation
        } else {
            Matrix3::zeros()
        }
    }

    pub fn end_effector(&self) -> &Transform {
        self.frames.last().expect("chain has frames")
    }

    /// Geometric Jacobian of the end-effector origin: `(jv, jw)`.
    pub fn end_effector_jacobian(&self) -> (&Matrix3xX<f64>, &Matrix3xX<f64>) {
        let last = self.links.last().expect("chain has links");
        (&last.jv, &last.jw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;
    use std::f64::consts::FRAC_PI_2;

    fn planar() -> Vec<DhRow> {
        vec![
            DhRow::new(1.0, 0.0, 0.0, 0.0),
            DhRow::new(1.0, 0.0, 0.0, 0.0),
        ]
    }

    fn spatial() -> Vec<DhRow> {
        vec![
            DhRow::new(0.05, FRAC_PI_2, 0.4, 0.1),
            DhRow::new(0.4, 0.0, 0.02, -0.2),
            DhRow::new(0.3, -0.3, 0.0, 0.0),
        ]
    }

    #[test]
    fn planar_arm_extended_and_rotated() {
        let t = forward_kinematics(&planar(), &DVector::from_vec(vec![0.0, 0.0]));
        assert_relative_eq!(t.translation, Vector3::new(2.0, 0.0, 0.0), epsilon = 1e-12);
        let t = forward_kinematics(&planar(), &DVector::from_vec(vec![FRAC_PI_2, 0.0]));
        assert_relative_eq!(t.translation, Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn matches_dense_homogeneous_chain() {
        // Independent oracle: multiply explicit 4x4 Rz, Tz, Tx, Rx factors.
        let q = DVector::from_vec(vec![0.7, -1.1, 0.4]);
        let mut acc = Matrix4::identity();
        for (row, &qi) in spatial().iter().zip(q.iter()) {
            let th = qi + row.theta_offset;
            let rz = Matrix4::new(
                th.cos(),
                -th.sin(),
                0.0,
                0.0,
                th.sin(),
                th.cos(),
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
            );
            let mut tz = Matrix4::identity();
            tz[(2, 3)] = row.d;
            let mut tx = Matrix4::identity();
            tx[(0, 3)] = row.a;
            let (s, c) = row.alpha.sin_cos();
            let rx = Matrix4::new(
                1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0,
            );
            acc = acc * rz * tz * tx * rx;
        }
        let t = forward_kinematics(&spatial(), &q);
        assert_relative_eq!(t.to_homogeneous(), acc, epsilon = 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let dh = spatial();
        let q = DVector::from_vec(vec![0.3, 0.5, -0.8]);
        let chain = ChainKinematics::new(&dh, &q);
        let h = 1e-6;
        for k in 0..3 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let cp = ChainKinematics::new(&dh, &qp);
            let cm = ChainKinematics::new(&dh, &qm);
            for i in 0..3 {
                let fd = (cp.links[i].origin - cm.links[i].origin) / (2.0 * h);
                assert_relative_eq!(chain.links[i].jv.column(k).into_owned(), fd, epsilon = 1e-8);
                let fd_jv = (&cp.links[i].jv - &cm.links[i].jv) / (2.0 * h);
                assert_relative_eq!(chain.links[i].djv[k], fd_jv, epsilon = 1e-7);
                let fd_jw = (&cp.links[i].jw - &cm.links[i].jw) / (2.0 * h);
                assert_relative_eq!(chain.links[i].djw[k], fd_jw, epsilon = 1e-7);
                let fd_r = (cp.frames[i + 1].rotation - cm.frames[i + 1].rotation) / (2.0 * h);
                assert_relative_eq!(chain.rotation_derivative(i + 1, k), fd_r, epsilon = 1e-7);
            }
        }
    }
}
