//! Six-degree-of-freedom rigid transforms in world (mm) coordinates.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("transform text must hold 16 reals, found {0}")]
    WrongCount(usize),
    #[error("invalid number {0:?} in transform text")]
    BadNumber(String),
    #[error("matrix is not rigid: {0}")]
    NotRigid(String),
}

/// Rotation plus translation mapping moving-volume world points onto fixed-volume
/// world points: `p' = R·p + t`.
///
/// Euler angles are in degrees with `R = Rz(γ)·Ry(β)·Rx(α)` about the world
/// origin; `angles_deg()` returns `[α, β, γ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    angles_deg: [f64; 3],
    translation: [f64; 3],
    matrix: Matrix4<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub(crate) fn euler_rotation(angles_deg: [f64; 3]) -> Matrix3<f64> {
    let [a, b, g] = angles_deg.map(f64::to_radians);
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sg, cg) = g.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca);
    let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    let rz = Matrix3::new(cg, -sg, 0.0, sg, cg, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

fn euler_angles(r: &Matrix3<f64>) -> [f64; 3] {
    let sb = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let beta = sb.asin();
    let (alpha, gamma) = if sb.abs() < 1.0 - 1e-12 {
        (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
    } else {
        // Gimbal lock: fold everything into alpha.
        ((-r[(1, 2)]).atan2(r[(1, 1)]), 0.0)
    };
    [alpha.to_degrees(), beta.to_degrees(), gamma.to_degrees()]
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            angles_deg: [0.0; 3],
            translation: [0.0; 3],
            matrix: Matrix4::identity(),
        }
    }

    pub fn from_euler(angles_deg: [f64; 3], translation: [f64; 3]) -> Self {
        let rot = euler_rotation(angles_deg);
        let mut matrix = Matrix4::identity();
        matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        for a in 0..3 {
            matrix[(a, 3)] = translation[a];
        }
        Self {
            angles_deg,
            translation,
            matrix,
        }
    }

    /// Rotation by `angles_deg` about `center`, followed by `shift`:
    /// `p' = R·(p − c) + c + shift`.
    pub fn about_center(angles_deg: [f64; 3], shift: [f64; 3], center: Vector3<f64>) -> Self {
        let rot = euler_rotation(angles_deg);
        let t = center + Vector3::from(shift) - rot * center;
        Self::from_euler(angles_deg, [t.x, t.y, t.z])
    }

    /// Builds a transform from a 4×4 matrix, checking orthonormality to `tol`.
    pub fn from_matrix(matrix: Matrix4<f64>, tol: f64) -> Result<Self, TransformError> {
        let rot: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = rot.transpose() * rot - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > tol) {
            return Err(TransformError::NotRigid("rotation block is not orthonormal".into()));
        }
        if (rot.determinant() - 1.0).abs() > tol {
            return Err(TransformError::NotRigid("rotation block has determinant != +1".into()));
        }
        let last = matrix.row(3);
        if last[0].abs() > tol || last[1].abs() > tol || last[2].abs() > tol || (last[3] - 1.0).abs() > tol {
            return Err(TransformError::NotRigid("bottom row is not [0 0 0 1]".into()));
        }
        Ok(Self::from_matrix_unchecked(matrix))
    }

    fn from_matrix_unchecked(mut matrix: Matrix4<f64>) -> Self {
        matrix[(3, 0)] = 0.0;
        matrix[(3, 1)] = 0.0;
        matrix[(3, 2)] = 0.0;
        matrix[(3, 3)] = 1.0;
        let rot: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        Self {
            angles_deg: euler_angles(&rot),
            translation: [matrix[(0, 3)], matrix[(1, 3)], matrix[(2, 3)]],
            matrix,
        }
    }

    pub fn angles_deg(&self) -> [f64; 3] {
        self.angles_deg
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self::from_matrix_unchecked(self.matrix * other.matrix)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation().transpose();
        let t = -(rt * Vector3::from(self.translation));
        let mut matrix = Matrix4::identity();
        matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        matrix[(0, 3)] = t.x;
        matrix[(1, 3)] = t.y;
        matrix[(2, 3)] = t.z;
        Self::from_matrix_unchecked(matrix)
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.matrix * Vector4::new(p[0], p[1], p[2], 1.0);
        [q.x, q.y, q.z]
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.matrix - Matrix4::identity()).iter().all(|v| v.abs() <= tol)
    }

    /// Angle (degrees) of the rotation part.
    pub fn rotation_angle_deg(&self) -> f64 {
        let r = self.rotation();
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// 16 ASCII reals, row-major, one matrix row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..4 {
            let row: Vec<String> = (0..4).map(|c| format!("{:?}", self.matrix[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

impl FromStr for RigidTransform {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| TransformError::BadNumber(tok.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != 16 {
            return Err(TransformError::WrongCount(values.len()));
        }
        let matrix = Matrix4::from_row_slice(&values);
        Self::from_matrix(matrix, 1e-6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_matrix_close(a: &Matrix4<f64>, b: &Matrix4<f64>, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol, "{a} vs {b}");
        }
    }

    #[test]
    fn compose_with_identity() {
        let t = RigidTransform::from_euler([10.0, -20.0, 30.0], [1.0, 2.0, 3.0]);
        let c = RigidTransform::identity().compose(&t);
        assert_matrix_close(c.matrix(), t.matrix(), 1e-15);
    }

    #[test]
    fn euler_roundtrip_through_matrix() {
        let t = RigidTransform::from_euler([12.5, -7.0, 44.0], [0.0; 3]);
        let back = RigidTransform::from_matrix(*t.matrix(), 1e-9).unwrap();
        for (a, b) in back.angles_deg().iter().zip([12.5, -7.0, 44.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn about_center_fixes_center() {
        let c = Vector3::new(10.0, -3.0, 7.0);
        let t = RigidTransform::about_center([5.0, 6.0, -7.0], [0.0; 3], c);
        let p = t.apply([c.x, c.y, c.z]);
        assert!((p[0] - c.x).abs() < 1e-12 && (p[1] - c.y).abs() < 1e-12 && (p[2] - c.z).abs() < 1e-12);
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let t = RigidTransform::from_euler([1.0, 2.0, 3.0], [4.5, -6.25, 0.1]);
        let parsed: RigidTransform = t.to_text().parse().unwrap();
        assert_eq!(parsed.matrix(), t.matrix());
        assert_eq!(t.to_text().split_whitespace().count(), 16);
    }

    #[test]
    fn text_rejects_reflection_and_bad_count() {
        let mut m = Matrix4::<f64>::identity();
        m[(0, 0)] = -1.0;
        let text: Vec<String> = m.transpose().iter().map(|v| v.to_string()).collect();
        assert!(matches!(text.join(" ").parse::<RigidTransform>(), Err(TransformError::NotRigid(_))));
        assert_eq!("1 0 0".parse::<RigidTransform>(), Err(TransformError::WrongCount(3)));
        assert!(matches!("1 0 0 x".parse::<RigidTransform>(), Err(TransformError::BadNumber(_))));
    }

    proptest! {
        #[test]
        fn rigid_invariants_hold(
            a in -180.0f64..180.0, b in -89.0f64..89.0, g in -180.0f64..180.0,
            tx in -100.0f64..100.0, ty in -100.0f64..100.0, tz in -100.0f64..100.0,
            a2 in -180.0f64..180.0, b2 in -89.0f64..89.0, g2 in -180.0f64..180.0,
        ) {
            let t = RigidTransform::from_euler([a, b, g], [tx, ty, tz]);
            let u = RigidTransform::from_euler([a2, b2, g2], [ty, tz, tx]);
            let r = t.compose(&u).rotation();
            let gram = r.transpose() * r - Matrix3::identity();
            prop_assert!(gram.iter().all(|v| v.abs() < 1e-9));
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);

            let ident = t.inverse().compose(&t);
            prop_assert!(ident.is_identity(1e-9));
            let ident = t.compose(&t.inverse());
            prop_assert!(ident.is_identity(1e-9));
            let back = t.inverse().inverse();
            for (x, y) in back.matrix().iter().zip(t.matrix().iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
