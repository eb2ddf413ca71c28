//! Head pose from the four orbitomeatal landmarks.
//!
//! Axes follow the scanner grid: x runs across the sagittal plane (left to
//! right), y across the coronal plane (front to back) and z along the table
//! (slice direction).
//!
//! * **roll** (about x) is the tilt of the eye–ear-canal line in the y-z
//!   plane, measured on each side; the side with the smaller magnitude wins.
//! * **pitch** (about y) is the tilt of the inter-eye line and of the
//!   inter-canal line in the x-z plane; again the smaller magnitude wins.
//! * **yaw** (about z) is the tilt of the inter-eye line in the x-y plane.
//!
//! Each angle is the arctangent of a rise over a run, taken with `atan2` so a
//! zero run is not a division by zero, and then folded into `(-π/2, π/2]`:
//! the lines are undirected, so a vector and its negation give the same
//! angle.
//!
//! [`euler_to_matrix`] builds the head-pose rotation that carries an upright
//! head (orbitomeatal plane axial, eyes level) to one whose landmarks measure
//! exactly the given angles. Because the three angles are projections rather
//! than successive fixed-axis rotations, the matrix is assembled column by
//! column from the projected directions instead of as a product of
//! elementary rotations. For a single nonzero angle it coincides with the
//! elementary rotation: `Rx(roll)`, `Rz(yaw)` and `Ry(-pitch)` (a positive
//! pitch lifts +x toward +z, which is a negative right-handed turn about y).

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::detections::LandmarkClass;
use crate::landmarks::{CoordinateSpace, LandmarkSet};

/// Below this, a coordinate difference counts as zero (millimetres or voxels).
const DEGENERATE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrientationError {
    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(&'static str),
}

/// Roll, pitch and yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    /// `[roll, pitch, yaw]` in degrees.
    pub fn to_degrees(&self) -> [f64; 3] {
        [self.roll.to_degrees(), self.pitch.to_degrees(), self.yaw.to_degrees()]
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|a| a.is_finite())
    }
}

/// Orthonormal 3×3 matrix with determinant +1 (column-vector convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps `m` if it is a proper rotation within `tol`.
    pub fn from_matrix(m: Matrix3<f64>, tol: f64) -> Option<Self> {
        let r = Self(m);
        (r.orthonormality_error() <= tol && (m.determinant() - 1.0).abs() <= tol).then_some(r)
    }

    /// Rotation by `quarter_turns * 90°` about axis `axis` (0 = x, 1 = y,
    /// 2 = z), with exact integer entries.
    pub fn quarter_turns(axis: usize, quarter_turns: i32) -> Self {
        let (c, s) = match quarter_turns.rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        Self(elementary(axis, c, s))
    }

    /// Right-handed rotation by `angle` radians about axis `axis`.
    pub fn about_axis(axis: usize, angle: f64) -> Self {
        Self(elementary(axis, angle.cos(), angle.sin()))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.0 * Vector3::from(v);
        [r.x, r.y, r.z]
    }

    /// Rotates `p` about `center`.
    pub fn apply_about(&self, center: [f64; 3], p: [f64; 3]) -> [f64; 3] {
        let d = self.apply([p[0] - center[0], p[1] - center[1], p[2] - center[2]]);
        [center[0] + d[0], center[1] + d[1], center[2] + d[2]]
    }

    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    /// Largest entry of `|RᵀR − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }
}

fn elementary(axis: usize, c: f64, s: f64) -> Matrix3<f64> {
    match axis {
        0 => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        1 => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        2 => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        _ => panic!("axis must be 0, 1 or 2"),
    }
}

/// Folds an angle onto `(-π/2, π/2]`.
pub fn fold_undirected(theta: f64) -> f64 {
    let mut t = theta;
    while t > FRAC_PI_2 {
        t -= PI;
    }
    while t <= -FRAC_PI_2 {
        t += PI;
    }
    t
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Tilt of `v` (rise on `rise_axis` over run on `run_axis`), or `None` when
/// both components vanish.
fn tilt(v: [f64; 3], rise_axis: usize, run_axis: usize) -> Option<f64> {
    let (rise, run) = (v[rise_axis], v[run_axis]);
    if rise.abs() < DEGENERATE_EPS && run.abs() < DEGENERATE_EPS {
        return None;
    }
    Some(fold_undirected(rise.atan2(run)))
}

/// Of the available candidates, the one with the smallest magnitude (the
/// first on exact ties).
fn smaller_magnitude(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.abs() < x.abs() { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

pub fn compute_roll(l: &LandmarkSet, space: CoordinateSpace) -> Result<f64, OrientationError> {
    use LandmarkClass::*;
    let side = |eye, eac| tilt(sub(l.coords(eye, space), l.coords(eac, space)), 2, 1);
    smaller_magnitude(side(LeftEye, LeftEac), side(RightEye, RightEac))
        .ok_or(OrientationError::DegenerateLandmarks("eye and canal coincide on both sides"))
}

pub fn compute_pitch(l: &LandmarkSet, space: CoordinateSpace) -> Result<f64, OrientationError> {
    use LandmarkClass::*;
    let pair = |left, right| tilt(sub(l.coords(left, space), l.coords(right, space)), 2, 0);
    smaller_magnitude(pair(LeftEye, RightEye), pair(LeftEac, RightEac)).ok_or(
        OrientationError::DegenerateLandmarks("left and right coincide for both eyes and canals"),
    )
}

pub fn compute_yaw(l: &LandmarkSet, space: CoordinateSpace) -> Result<f64, OrientationError> {
    use LandmarkClass::*;
    tilt(sub(l.coords(LeftEye, space), l.coords(RightEye, space)), 1, 0)
        .ok_or(OrientationError::DegenerateLandmarks("eyes coincide in the axial plane"))
}

pub fn compute_angles(l: &LandmarkSet, space: CoordinateSpace) -> Result<EulerAngles, OrientationError> {
    Ok(EulerAngles {
        roll: compute_roll(l, space)?,
        pitch: compute_pitch(l, space)?,
        yaw: compute_yaw(l, space)?,
    })
}

/// Head-pose rotation whose landmark projections measure exactly `a`.
///
/// The first column is the direction of the inter-eye axis, with `y/x =
/// tan(yaw)` and `z/x = tan(pitch)`; the second is the front-to-back axis,
/// orthogonal to the first with `z/y = tan(roll)`; the third completes a
/// right-handed frame. Both are written with the tangents' denominators
/// multiplied through so ±90° entries stay finite.
pub fn euler_to_matrix(a: &EulerAngles) -> RotationMatrix {
    let (sr, cr) = a.roll.sin_cos();
    let (sp, cp) = a.pitch.sin_cos();
    let (sy, cy) = a.yaw.sin_cos();
    let lateral = Vector3::new(cp * cy, cp * sy, sp * cy).normalize();
    let frontal = Vector3::new(-(sy * cr * cp + sr * sp * cy), cy * cr * cp, sr * cy * cp).normalize();
    let axial = lateral.cross(&frontal);
    RotationMatrix(Matrix3::from_columns(&[lateral, frontal, axial]))
}

/// Outcome of [`plausibility_check`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "messages")]
pub enum Plausibility {
    Ok,
    Warning(Vec<String>),
}

impl Plausibility {
    pub fn is_ok(&self) -> bool {
        matches!(self, Plausibility::Ok)
    }

    pub fn messages(&self) -> &[String] {
        match self {
            Plausibility::Ok => &[],
            Plausibility::Warning(m) => m,
        }
    }
}

pub const DEFAULT_MAX_ANGLE_DEG: f64 = 45.0;

/// Flags every angle whose magnitude exceeds `max_deg` degrees.
pub fn plausibility_check(a: &EulerAngles, max_deg: f64) -> Plausibility {
    let names = ["roll", "pitch", "yaw"];
    let warnings: Vec<String> = a
        .to_degrees()
        .iter()
        .zip(names)
        .filter(|(deg, _)| deg.abs() > max_deg || !deg.is_finite())
        .map(|(deg, name)| format!("|{name}| = {:.2}° exceeds {max_deg:.2}°", deg.abs()))
        .collect();
    if warnings.is_empty() {
        Plausibility::Ok
    } else {
        Plausibility::Warning(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeGeometry;
    use proptest::prelude::*;

    fn set(points: [[f64; 3]; 4]) -> LandmarkSet {
        let g = VolumeGeometry::isotropic([512, 512, 512], 1.0).unwrap();
        LandmarkSet::from_physical("t", &g, points)
    }

    const P: CoordinateSpace = CoordinateSpace::Physical;

    fn assert_deg(rad: f64, deg: f64, tol: f64) {
        assert!((rad.to_degrees() - deg).abs() < tol, "{} vs {deg}", rad.to_degrees());
    }

    #[test]
    fn roll_takes_smaller_side() {
        // left: atan(20/60) = 18.435°, right: atan(18/60) = 16.699°.
        let l = set([
            [200.0, 120.0, 80.0],
            [300.0, 120.0, 78.0],
            [200.0, 60.0, 60.0],
            [300.0, 60.0, 60.0],
        ]);
        assert_deg(compute_roll(&l, P).unwrap(), 16.699, 1e-3);
    }

    #[test]
    fn flat_landmarks_have_zero_angles() {
        let l = set([
            [200.0, 250.0, 40.0],
            [312.0, 250.0, 40.0],
            [190.0, 330.0, 40.0],
            [322.0, 330.0, 40.0],
        ]);
        let a = compute_angles(&l, P).unwrap();
        assert!(a.roll.abs() < 1e-12 && a.pitch.abs() < 1e-12 && a.yaw.abs() < 1e-12);
    }

    #[test]
    fn pitch_takes_smaller_pair() {
        // eyes level in z, canals rise 5 over 100: atan(0.05) = 2.862°.
        let l = set([
            [200.0, 250.0, 40.0],
            [300.0, 250.0, 40.0],
            [200.0, 330.0, 45.0],
            [300.0, 330.0, 40.0],
        ]);
        assert_eq!(compute_pitch(&l, P).unwrap(), 0.0);
        let canals_only = set([
            [200.0, 250.0, 40.0],
            [300.0, 250.0, 47.0],
            [200.0, 330.0, 45.0],
            [300.0, 330.0, 40.0],
        ]);
        assert_deg(compute_pitch(&canals_only, P).unwrap(), -2.862, 1e-3);
    }

    #[test]
    fn yaw_examples() {
        let level = set([
            [200.0, 250.0, 40.0],
            [312.0, 250.0, 40.0],
            [190.0, 330.0, 40.0],
            [322.0, 330.0, 40.0],
        ]);
        assert_eq!(compute_yaw(&level, P).unwrap(), 0.0);
        // atan(20 / -112) folded onto the undirected axis: -10.125°.
        let turned = set([
            [200.0, 260.0, 40.0],
            [312.0, 240.0, 40.0],
            [190.0, 330.0, 40.0],
            [322.0, 330.0, 40.0],
        ]);
        let yaw = compute_yaw(&turned, P).unwrap();
        assert_deg(yaw, -10.125, 1e-3);
        let swapped = set([
            [312.0, 240.0, 40.0],
            [200.0, 260.0, 40.0],
            [190.0, 330.0, 40.0],
            [322.0, 330.0, 40.0],
        ]);
        assert!((compute_yaw(&swapped, P).unwrap() - yaw).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        let p = [100.0, 100.0, 10.0];
        let l = set([p, p, p, p]);
        assert!(compute_roll(&l, P).is_err());
        assert!(compute_pitch(&l, P).is_err());
        assert!(compute_yaw(&l, P).is_err());
    }

    #[test]
    fn roll_survives_one_degenerate_side() {
        let l = set([
            [200.0, 120.0, 80.0],
            [300.0, 120.0, 78.0],
            [200.0, 120.0, 80.0],
            [300.0, 60.0, 60.0],
        ]);
        assert_deg(compute_roll(&l, P).unwrap(), 16.699, 1e-3);
    }

    #[test]
    fn matrix_examples() {
        let id = euler_to_matrix(&EulerAngles::default());
        assert_eq!(*id.matrix(), Matrix3::identity());
        let quarter = euler_to_matrix(&EulerAngles::from_degrees(0.0, 0.0, 90.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((quarter.matrix() - expected).abs().max() < 1e-12);
    }

    #[test]
    fn single_axis_matrices_are_elementary() {
        for deg in [-30.0f64, -7.5, 3.0, 25.0] {
            let t = deg.to_radians();
            let r = euler_to_matrix(&EulerAngles::new(t, 0.0, 0.0));
            assert!((r.matrix() - RotationMatrix::about_axis(0, t).matrix()).abs().max() < 1e-12);
            let y = euler_to_matrix(&EulerAngles::new(0.0, 0.0, t));
            assert!((y.matrix() - RotationMatrix::about_axis(2, t).matrix()).abs().max() < 1e-12);
            let p = euler_to_matrix(&EulerAngles::new(0.0, t, 0.0));
            assert!((p.matrix() - RotationMatrix::about_axis(1, -t).matrix()).abs().max() < 1e-12);
            // Negated single-axis angle gives the transpose.
            for (axis_angles, neg) in [
                (EulerAngles::new(t, 0.0, 0.0), EulerAngles::new(-t, 0.0, 0.0)),
                (EulerAngles::new(0.0, t, 0.0), EulerAngles::new(0.0, -t, 0.0)),
                (EulerAngles::new(0.0, 0.0, t), EulerAngles::new(0.0, 0.0, -t)),
            ] {
                let a = euler_to_matrix(&axis_angles);
                let b = euler_to_matrix(&neg);
                assert!((a.transpose().matrix() - b.matrix()).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn plausibility() {
        assert!(plausibility_check(&EulerAngles::from_degrees(5.0, 3.0, -8.0), 45.0).is_ok());
        assert!(!plausibility_check(&EulerAngles::from_degrees(60.0, 0.0, 0.0), 45.0).is_ok());
        assert!(plausibility_check(&EulerAngles::from_degrees(44.9, 0.0, 0.0), 45.0).is_ok());
        let w = plausibility_check(&EulerAngles::from_degrees(0.0, -50.0, 70.0), 45.0);
        assert_eq!(w.messages().len(), 2);
    }

    #[test]
    fn fold_range() {
        assert_eq!(fold_undirected(FRAC_PI_2), FRAC_PI_2);
        assert!((fold_undirected(-FRAC_PI_2) - FRAC_PI_2).abs() < 1e-15);
        assert!((fold_undirected(PI - 0.1) + 0.1).abs() < 1e-15);
        assert!((fold_undirected(-PI + 0.1) - 0.1).abs() < 1e-15);
    }

    fn upright() -> [[f64; 3]; 4] {
        [
            [-36.0, -40.0, 0.0],
            [36.0, -40.0, 0.0],
            [-36.0, 38.0, 0.0],
            [36.0, 38.0, 0.0],
        ]
    }

    proptest! {
        #[test]
        fn orthonormal_with_unit_determinant(r in -1.5f64..1.5, p in -1.5f64..1.5, y in -1.5f64..1.5) {
            let m = euler_to_matrix(&EulerAngles::new(r, p, y));
            prop_assert!(m.orthonormality_error() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn pose_round_trips_through_measurement(r in -0.6f64..0.6, p in -0.6f64..0.6, y in -0.6f64..0.6) {
            let a = EulerAngles::new(r, p, y);
            let m = euler_to_matrix(&a);
            let l = set(upright().map(|q| m.apply(q)));
            let back = compute_angles(&l, P).unwrap();
            prop_assert!((back.roll - r).abs() < 1e-12);
            prop_assert!((back.pitch - p).abs() < 1e-12);
            prop_assert!((back.yaw - y).abs() < 1e-12);
        }

        #[test]
        fn translation_and_scale_invariant(
            pts in prop::array::uniform4(prop::array::uniform3(-200.0f64..200.0)),
            shift in prop::array::uniform3(-100.0f64..100.0),
            scale in 0.1f64..10.0,
        ) {
            let l = set(pts);
            let Ok(a) = compute_angles(&l, P) else { return Ok(()); };
            let moved = l.map_coords(|q| [q[0] + shift[0], q[1] + shift[1], q[2] + shift[2]]);
            let scaled = l.map_coords(|q| q.map(|c| c * scale));
            for other in [moved, scaled] {
                let b = compute_angles(&other, P).unwrap();
                prop_assert!((a.roll - b.roll).abs() < 1e-9);
                prop_assert!((a.pitch - b.pitch).abs() < 1e-9);
                prop_assert!((a.yaw - b.yaw).abs() < 1e-9);
            }
        }
    }
}
