//! A synthetic head CT with known landmarks, and a threshold-based detector
//! for it.
//!
//! The head is a soft-tissue ellipsoid in air. Each eye is a bright sphere;
//! each ear canal is an air sphere inside a bone capsule. The four markers
//! lie in one axial plane (the orbitomeatal plane) and mirror each other
//! across the sagittal plane, with eyes and canals at the same lateral offset.
//! The upright head is rendered voxel by voxel (a voxel takes the value of
//! the region containing its center), then turned by the requested head pose
//! with the same resampler used for standardization.

mod detect;

pub use detect::{classical_detect, DetectorConfig};

use std::io::{self, Write};

use thiserror::Error;

use crate::detections::{GroundTruthBox, LandmarkClass};
use crate::landmarks::LandmarkSet;
use crate::orientation::{euler_to_matrix, EulerAngles};
use crate::reformat::{resample_rotated, DEFAULT_FILL_HU};
use crate::volume::{Volume, VolumeError, VolumeGeometry};

/// Largest tilt component accepted by [`generate_phantom`], in degrees.
pub const MAX_TILT_DEG: f64 = 20.0;

pub const AIR_HU: i16 = -1000;
pub const SOFT_TISSUE_HU: i16 = 40;
pub const EYE_HU: i16 = 300;
pub const BONE_HU: i16 = 700;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("tilt component {0:.3}° exceeds ±{MAX_TILT_DEG}°")]
    TiltOutOfRange(f64),
    #[error("{0} marker leaves the volume after tilting")]
    MarkerOutOfFrame(LandmarkClass),
    #[error("invalid phantom: {0}")]
    Invalid(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    fn contains(&self, p: [f64; 3]) -> bool {
        dist2(p, self.center) <= self.radius * self.radius
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Phantom layout. All positions are physical millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub case_id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub tilt: EulerAngles,
    pub head_center: [f64; 3],
    pub head_semi_axes: [f64; 3],
    /// Left, then right.
    pub eyes: [Sphere; 2],
    /// Air pockets, left then right.
    pub eacs: [Sphere; 2],
    /// Bone around each ear canal.
    pub capsule_thickness: f64,
}

impl PhantomSpec {
    /// A phantom on an `n³` grid of 1 mm voxels; the default is 128.
    ///
    /// Layout scales with `n`. Marker centers sit on voxel centers in the
    /// upright pose.
    pub fn with_size(n: usize) -> Self {
        let s = n as f64 / 128.0;
        let at = |x: f64| (x * s).round();
        let c = [at(64.0), at(64.0), at(64.0)];
        // Offsets round toward the center so scaled markers stay inside.
        let off = |dx: f64, dy: f64| [c[0] + (dx * s).trunc(), c[1] + (dy * s).trunc(), c[2]];
        Self {
            case_id: "phantom".into(),
            dims: [n; 3],
            spacing: [1.0; 3],
            tilt: EulerAngles::default(),
            head_center: c,
            head_semi_axes: [62.0 * s, 63.0 * s, 52.0 * s],
            eyes: [
                Sphere {
                    center: off(-39.0, -40.0),
                    radius: 4.0 * s,
                },
                Sphere {
                    center: off(39.0, -40.0),
                    radius: 4.0 * s,
                },
            ],
            eacs: [
                Sphere {
                    center: off(-39.0, 37.0),
                    radius: 4.0 * s,
                },
                Sphere {
                    center: off(39.0, 37.0),
                    radius: 4.0 * s,
                },
            ],
            capsule_thickness: 3.0 * s,
        }
    }

    pub fn with_tilt(mut self, tilt: EulerAngles) -> Self {
        self.tilt = tilt;
        self
    }

    pub fn geometry(&self) -> Result<VolumeGeometry, VolumeError> {
        VolumeGeometry::new(self.dims, self.spacing, [0.0; 3])
    }

    /// Upright marker centers, in [`LandmarkClass::ALL`] order.
    pub fn marker_centers(&self) -> [[f64; 3]; 4] {
        [
            self.eyes[0].center,
            self.eyes[1].center,
            self.eacs[0].center,
            self.eacs[1].center,
        ]
    }

    /// Outer radius of each marker (the bone capsule for the canals).
    pub fn marker_radii(&self) -> [f64; 4] {
        let t = self.capsule_thickness;
        [self.eyes[0].radius, self.eyes[1].radius, self.eacs[0].radius + t, self.eacs[1].radius + t]
    }

    fn inside_head(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|i| ((p[i] - self.head_center[i]) / self.head_semi_axes[i]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    /// Checks that every marker lies strictly inside the head and that the
    /// layout is mirror-symmetric about the sagittal plane through the head
    /// center.
    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::Invalid(m));
        if self.head_semi_axes.iter().any(|&a| !(a > 0.0)) {
            return bad("head semi-axes must be positive".into());
        }
        for (k, (c, r)) in self.marker_centers().iter().zip(self.marker_radii()).enumerate() {
            // Sample the marker's bounding sphere densely enough for a
            // strict-containment check.
            for a in 0..24 {
                for b in 0..=12 {
                    let (th, ph) = (a as f64 * std::f64::consts::PI / 12.0, b as f64 * std::f64::consts::PI / 12.0);
                    let d = [ph.sin() * th.cos(), ph.sin() * th.sin(), ph.cos()];
                    let p = [c[0] + r * d[0], c[1] + r * d[1], c[2] + r * d[2]];
                    let q: f64 = (0..3)
                        .map(|i| ((p[i] - self.head_center[i]) / self.head_semi_axes[i]).powi(2))
                        .sum();
                    if q >= 0.98 {
                        return bad(format!("{} marker reaches the head surface", LandmarkClass::ALL[k]));
                    }
                }
            }
        }
        for (l, r) in [(self.eyes[0], self.eyes[1]), (self.eacs[0], self.eacs[1])] {
            let mirrored = 2.0 * self.head_center[0] - l.center[0];
            if (mirrored - r.center[0]).abs() > 1e-9
                || l.center[1] != r.center[1]
                || l.center[2] != r.center[2]
                || l.radius != r.radius
                || l.center[0] >= r.center[0]
            {
                return bad("left and right markers must mirror each other, left at smaller x".into());
            }
        }
        Ok(())
    }
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::with_size(128)
    }
}

/// Where the landmarks ended up after tilting.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub tilt: EulerAngles,
    /// Physical marker centers in [`LandmarkClass::ALL`] order.
    pub physical: [[f64; 3]; 4],
    pub voxel: [[f64; 3]; 4],
}

impl PhantomTruth {
    pub fn landmarks(&self, case_id: &str, geometry: &VolumeGeometry) -> LandmarkSet {
        LandmarkSet::from_physical(case_id, geometry, self.physical)
    }
}

/// Analytic landmark positions for `spec`: marker centers turned by the
/// tilt about the grid center.
pub fn phantom_truth(spec: &PhantomSpec) -> Result<PhantomTruth, PhantomError> {
    let g = spec.geometry()?;
    let r = euler_to_matrix(&spec.tilt);
    let c = g.center();
    let physical = spec.marker_centers().map(|m| r.apply_about(c, m));
    let voxel = physical.map(|p| g.physical_to_voxel(p));
    for (k, (v, rad)) in voxel.iter().zip(spec.marker_radii()).enumerate() {
        let out = (0..3).any(|a| {
            let ri = rad / spec.spacing[a];
            v[a] - ri < 0.0 || v[a] + ri > (g.dims()[a] - 1) as f64
        });
        if out {
            return Err(PhantomError::MarkerOutOfFrame(LandmarkClass::ALL[k]));
        }
    }
    Ok(PhantomTruth {
        tilt: spec.tilt,
        physical,
        voxel,
    })
}

/// Renders the upright phantom.
pub fn render_upright(spec: &PhantomSpec) -> Result<Volume, PhantomError> {
    spec.validate()?;
    let g = spec.geometry()?;
    let t = spec.capsule_thickness;
    let capsules = spec.eacs.map(|s| Sphere {
        center: s.center,
        radius: s.radius + t,
    });
    Ok(Volume::from_fn(g, |i, j, k| {
        let p = g.voxel_to_physical([i as f64, j as f64, k as f64]);
        if spec.eyes.iter().any(|s| s.contains(p)) {
            EYE_HU
        } else if spec.eacs.iter().any(|s| s.contains(p)) {
            AIR_HU
        } else if capsules.iter().any(|s| s.contains(p)) {
            BONE_HU
        } else if spec.inside_head(p) {
            SOFT_TISSUE_HU
        } else {
            AIR_HU
        }
    }))
}

/// Renders the phantom in its tilted pose.
///
/// Returns the volume, the analytic landmark positions and one ground-truth
/// box per marker: the marker's bounding square on the slice nearest its
/// center.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, PhantomTruth, Vec<GroundTruthBox>), PhantomError> {
    for a in spec.tilt.to_degrees() {
        if !(a.abs() <= MAX_TILT_DEG) {
            return Err(PhantomError::TiltOutOfRange(a));
        }
    }
    let truth = phantom_truth(spec)?;
    let upright = render_upright(spec)?;
    let volume = if spec.tilt == EulerAngles::default() {
        upright
    } else {
        resample_rotated(&upright, &euler_to_matrix(&spec.tilt), DEFAULT_FILL_HU)
    };
    let radii = [spec.eyes[0].radius, spec.eyes[1].radius, spec.eacs[0].radius, spec.eacs[1].radius];
    let boxes = LandmarkClass::ALL
        .iter()
        .zip(truth.voxel.iter().zip(radii))
        .map(|(&class, (v, r))| {
            let (rx, ry) = (r / spec.spacing[0], r / spec.spacing[1]);
            GroundTruthBox {
                case_id: spec.case_id.clone(),
                slice_index: v[2].round() as usize,
                class,
                x_min: v[0] - rx,
                y_min: v[1] - ry,
                x_max: v[0] + rx,
                y_max: v[1] + ry,
            }
        })
        .collect();
    Ok((volume, truth, boxes))
}

pub const TRUTH_HEADER: &str = "case_id,class,voxel_x,voxel_y,voxel_z,x_mm,y_mm,z_mm";

/// Writes the tilt and the four truth landmarks as text.
pub fn write_truth_manifest<W: Write + ?Sized>(w: &mut W, spec: &PhantomSpec, truth: &PhantomTruth) -> io::Result<()> {
    let [r, p, y] = truth.tilt.to_degrees();
    writeln!(w, "# phantom truth")?;
    writeln!(w, "# dims={}x{}x{} spacing_mm={:?}", spec.dims[0], spec.dims[1], spec.dims[2], spec.spacing)?;
    writeln!(w, "# tilt_deg roll={r:.6} pitch={p:.6} yaw={y:.6}")?;
    writeln!(w, "{TRUTH_HEADER}")?;
    for (k, class) in LandmarkClass::ALL.iter().enumerate() {
        let (v, m) = (truth.voxel[k], truth.physical[k]);
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            spec.case_id, class, v[0], v[1], v[2], m[0], m[1], m[2]
        )?;
    }
    Ok(())
}
