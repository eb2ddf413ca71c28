//! Landmark identification: per class, the single most confident detection
//! across the whole series, with its slice index as the z coordinate.

use std::cmp::Ordering;
use std::io::{self, Write};

use thiserror::Error;

use crate::detections::{DetectionRecord, DetectionSet, LandmarkClass};
use crate::orientation::EulerAngles;
use crate::volume::VolumeGeometry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandmarkError {
    #[error("detection set is empty")]
    NoDetections,
    #[error("no qualifying detection for landmark {0}")]
    LandmarkMissing(LandmarkClass),
    #[error("implausible geometry: {left} and {right} are {distance:.3} voxels apart")]
    ImplausibleGeometry {
        left: LandmarkClass,
        right: LandmarkClass,
        distance: f64,
    },
}

/// Which coordinates angle computations read from a [`LandmarkSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSpace {
    /// Millimetres via the volume geometry.
    #[default]
    Physical,
    /// Raw `(cx, cy, slice_index)` values, ignoring spacing.
    Index,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LandmarkPoint {
    pub class: LandmarkClass,
    /// `(cx, cy, slice_index)` of the selected detection.
    pub voxel: [f64; 3],
    pub physical: [f64; 3],
    pub confidence: f64,
}

impl LandmarkPoint {
    pub fn coords(&self, space: CoordinateSpace) -> [f64; 3] {
        match space {
            CoordinateSpace::Physical => self.physical,
            CoordinateSpace::Index => self.voxel,
        }
    }
}

/// The four selected landmarks of one case, indexed by [`LandmarkClass`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LandmarkSet {
    pub case_id: String,
    points: [LandmarkPoint; 4],
}

impl LandmarkSet {
    /// Builds a set from points given in [`LandmarkClass::ALL`] order.
    pub fn new(case_id: impl Into<String>, points: [LandmarkPoint; 4]) -> Result<Self, String> {
        for (point, class) in points.iter().zip(LandmarkClass::ALL) {
            if point.class != class {
                return Err(format!("expected {class} at slot {}, got {}", class.index(), point.class));
            }
        }
        Ok(Self {
            case_id: case_id.into(),
            points,
        })
    }

    /// Landmarks at known physical positions, with voxel coordinates derived
    /// from `geometry` and confidence 1.
    pub fn from_physical(
        case_id: impl Into<String>,
        geometry: &VolumeGeometry,
        positions: [[f64; 3]; 4],
    ) -> Self {
        let points = std::array::from_fn(|i| LandmarkPoint {
            class: LandmarkClass::ALL[i],
            voxel: geometry.physical_to_voxel(positions[i]),
            physical: positions[i],
            confidence: 1.0,
        });
        Self {
            case_id: case_id.into(),
            points,
        }
    }

    pub fn get(&self, class: LandmarkClass) -> &LandmarkPoint {
        &self.points[class.index()]
    }

    pub fn points(&self) -> &[LandmarkPoint; 4] {
        &self.points
    }

    pub fn coords(&self, class: LandmarkClass, space: CoordinateSpace) -> [f64; 3] {
        self.get(class).coords(space)
    }

    /// Applies `f` to every coordinate triple (both spaces).
    pub fn map_coords(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.physical = f(p.physical);
            p.voxel = f(p.voxel);
        }
        out
    }
}

/// Orders `a` before `b` when it is the better landmark candidate: higher
/// confidence, then lower slice index, then lower cx, then lower cy.
fn better(a: &DetectionRecord, b: &DetectionRecord) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.slice_index.cmp(&b.slice_index))
        .then(a.cx.total_cmp(&b.cx))
        .then(a.cy.total_cmp(&b.cy))
}

/// Selects one landmark per class by global confidence argmax.
///
/// Records below `min_confidence` are ignored. Ties on confidence go to the
/// lowest slice index, then the lowest `cx`, then the lowest `cy`, so the
/// result does not depend on record order.
pub fn identify_landmarks(
    detections: &DetectionSet,
    geometry: &VolumeGeometry,
    min_confidence: f64,
) -> Result<LandmarkSet, LandmarkError> {
    if detections.is_empty() {
        return Err(LandmarkError::NoDetections);
    }
    let mut best: [Option<&DetectionRecord>; 4] = [None; 4];
    for rec in detections.records.iter().filter(|r| r.confidence >= min_confidence) {
        let slot = &mut best[rec.class.index()];
        match slot {
            Some(cur) if better(rec, cur) != Ordering::Less => {}
            _ => *slot = Some(rec),
        }
    }
    let mut points = Vec::with_capacity(4);
    for class in LandmarkClass::ALL {
        let rec = best[class.index()].ok_or(LandmarkError::LandmarkMissing(class))?;
        let voxel = [rec.cx, rec.cy, rec.slice_index as f64];
        points.push(LandmarkPoint {
            class,
            voxel,
            physical: geometry.voxel_to_physical(voxel),
            confidence: rec.confidence,
        });
    }
    let points: [LandmarkPoint; 4] = points.try_into().expect("four classes");

    for (left, right) in [
        (LandmarkClass::LeftEye, LandmarkClass::RightEye),
        (LandmarkClass::LeftEac, LandmarkClass::RightEac),
    ] {
        let a = points[left.index()].voxel;
        let b = points[right.index()].voxel;
        let distance = (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
        if distance < 1.0 {
            return Err(LandmarkError::ImplausibleGeometry {
                left,
                right,
                distance,
            });
        }
    }
    Ok(LandmarkSet {
        case_id: detections.case_id.clone(),
        points,
    })
}

pub const LANDMARK_REPORT_HEADER: &str =
    "case_id,class,voxel_x,voxel_y,voxel_z,x_mm,y_mm,z_mm,confidence";

/// Writes the landmark report: one record per class, then the angles (in
/// degrees) as a trailing comment line.
pub fn write_landmark_report<W: Write + ?Sized>(
    w: &mut W,
    set: &LandmarkSet,
    angles: Option<&EulerAngles>,
) -> io::Result<()> {
    writeln!(w, "{LANDMARK_REPORT_HEADER}")?;
    for p in set.points() {
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            set.case_id,
            p.class,
            p.voxel[0],
            p.voxel[1],
            p.voxel[2],
            p.physical[0],
            p.physical[1],
            p.physical[2],
            p.confidence
        )?;
    }
    if let Some(a) = angles {
        let [r, p, y] = a.to_degrees();
        writeln!(w, "# angles_deg roll={r:.2} pitch={p:.2} yaw={y:.2}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(class: LandmarkClass, slice: usize, cx: f64, cy: f64, conf: f64) -> DetectionRecord {
        DetectionRecord {
            case_id: "c".into(),
            slice_index: slice,
            class,
            cx,
            cy,
            box_size: 10.0,
            confidence: conf,
        }
    }

    fn complete(mut extra: Vec<DetectionRecord>) -> DetectionSet {
        extra.extend([
            rec(LandmarkClass::RightEye, 20, 300.0, 200.0, 0.8),
            rec(LandmarkClass::LeftEac, 20, 150.0, 300.0, 0.8),
            rec(LandmarkClass::RightEac, 20, 350.0, 300.0, 0.8),
        ]);
        DetectionSet::new("c", extra).unwrap()
    }

    fn geom() -> VolumeGeometry {
        VolumeGeometry::isotropic([512, 512, 139], 1.0).unwrap()
    }

    #[test]
    fn picks_most_confident_slice() {
        let set = complete(vec![
            rec(LandmarkClass::LeftEye, 10, 200.0, 200.0, 0.3),
            rec(LandmarkClass::LeftEye, 11, 201.0, 200.0, 0.9),
            rec(LandmarkClass::LeftEye, 12, 202.0, 200.0, 0.7),
        ]);
        let l = identify_landmarks(&set, &geom(), 0.0).unwrap();
        assert_eq!(l.get(LandmarkClass::LeftEye).voxel, [201.0, 200.0, 11.0]);
    }

    #[test]
    fn missing_class() {
        let set = DetectionSet::new(
            "c",
            vec![
                rec(LandmarkClass::LeftEye, 1, 200.0, 200.0, 0.9),
                rec(LandmarkClass::RightEye, 1, 300.0, 200.0, 0.9),
                rec(LandmarkClass::LeftEac, 1, 150.0, 300.0, 0.9),
            ],
        )
        .unwrap();
        assert_eq!(
            identify_landmarks(&set, &geom(), 0.0),
            Err(LandmarkError::LandmarkMissing(LandmarkClass::RightEac))
        );
    }

    #[test]
    fn tie_goes_to_lower_slice() {
        // Constructed tie: identical confidence on slices 14 and 11.
        let set = complete(vec![
            rec(LandmarkClass::LeftEye, 14, 200.0, 200.0, 0.9),
            rec(LandmarkClass::LeftEye, 11, 205.0, 200.0, 0.9),
        ]);
        let l = identify_landmarks(&set, &geom(), 0.0).unwrap();
        assert_eq!(l.get(LandmarkClass::LeftEye).voxel[2], 11.0);
    }

    #[test]
    fn tie_on_slice_goes_to_lower_cx_then_cy() {
        let set = complete(vec![
            rec(LandmarkClass::LeftEye, 11, 210.0, 150.0, 0.9),
            rec(LandmarkClass::LeftEye, 11, 205.0, 190.0, 0.9),
            rec(LandmarkClass::LeftEye, 11, 205.0, 180.0, 0.9),
        ]);
        let l = identify_landmarks(&set, &geom(), 0.0).unwrap();
        assert_eq!(l.get(LandmarkClass::LeftEye).voxel, [205.0, 180.0, 11.0]);
    }

    #[test]
    fn min_confidence_filters() {
        let set = complete(vec![rec(LandmarkClass::LeftEye, 11, 200.0, 200.0, 0.2)]);
        assert_eq!(
            identify_landmarks(&set, &geom(), 0.5),
            Err(LandmarkError::LandmarkMissing(LandmarkClass::LeftEye))
        );
    }

    #[test]
    fn coincident_pair_is_implausible() {
        let set = complete(vec![rec(LandmarkClass::LeftEye, 20, 300.2, 200.0, 0.9)]);
        assert!(matches!(
            identify_landmarks(&set, &geom(), 0.0),
            Err(LandmarkError::ImplausibleGeometry { .. })
        ));
    }

    #[test]
    fn empty_set() {
        assert_eq!(
            identify_landmarks(&DetectionSet::default(), &geom(), 0.0),
            Err(LandmarkError::NoDetections)
        );
    }

    #[test]
    fn physical_uses_geometry() {
        let g = VolumeGeometry::new([512, 512, 139], [0.5, 0.5, 2.0], [-10.0, 0.0, 5.0]).unwrap();
        let set = complete(vec![rec(LandmarkClass::LeftEye, 11, 200.0, 100.0, 0.9)]);
        let l = identify_landmarks(&set, &g, 0.0).unwrap();
        assert_eq!(l.get(LandmarkClass::LeftEye).physical, [90.0, 50.0, 27.0]);
    }

    fn arb_record() -> impl Strategy<Value = DetectionRecord> {
        (0usize..4, 0usize..30, 0u32..20, 0u32..20, 0u32..=10).prop_map(|(c, s, x, y, conf)| {
            rec(
                LandmarkClass::ALL[c],
                s,
                100.0 + 50.0 * c as f64 + x as f64,
                100.0 + y as f64,
                conf as f64 / 10.0,
            )
        })
    }

    proptest! {
        #[test]
        fn selection_is_maximal_and_order_free(
            mut records in prop::collection::vec(arb_record(), 4..40),
            shuffle_seed in any::<u64>(),
        ) {
            for class in LandmarkClass::ALL {
                records.push(rec(class, 0, 100.0 + 50.0 * class.index() as f64, 100.0, 0.0));
            }
            let set = DetectionSet::new("c", records.clone()).unwrap();
            let Ok(l) = identify_landmarks(&set, &geom(), 0.0) else {
                return Ok(());
            };
            for r in &records {
                prop_assert!(l.get(r.class).confidence >= r.confidence);
            }
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed);
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rng);
            let l2 = identify_landmarks(&DetectionSet::new("c", shuffled).unwrap(), &geom(), 0.0).unwrap();
            prop_assert_eq!(&l, &l2);

            // A strictly weaker record never changes the outcome.
            let top = l.get(LandmarkClass::LeftEye).confidence;
            if top > 0.0 {
                let mut more = records.clone();
                more.push(rec(LandmarkClass::LeftEye, 3, 101.0, 101.0, top / 2.0));
                let l3 = identify_landmarks(&DetectionSet::new("c", more).unwrap(), &geom(), 0.0).unwrap();
                prop_assert_eq!(&l, &l3);
            }
        }
    }
}
