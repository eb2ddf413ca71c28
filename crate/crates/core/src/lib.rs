//! Orbitomeatal-line standardization of head CT volumes.
//!
//! Landmark detections on axial slices (eyes and external auditory canals)
//! give roll, pitch and yaw of the head; [`reformat::standardize`] resamples
//! the volume with the inverse rotation. [`phantom`] renders synthetic heads
//! with known landmarks, and [`metrics`] holds the detection, efficiency,
//! similarity and observer-score evaluations.
//!
//! ```
//! use omline::landmarks::{identify_landmarks, CoordinateSpace};
//! use omline::orientation::compute_angles;
//! use omline::phantom::{classical_detect, generate_phantom, DetectorConfig, PhantomSpec};
//! use omline::reformat::standardize;
//!
//! let spec = PhantomSpec::with_size(64);
//! let (volume, _, _) = generate_phantom(&spec).unwrap();
//! let found = classical_detect(&volume, &DetectorConfig::for_phantom(&spec));
//! let landmarks = identify_landmarks(&found, volume.geometry(), 0.0).unwrap();
//! let angles = compute_angles(&landmarks, CoordinateSpace::Physical).unwrap();
//! let level = standardize(&volume, &angles);
//! assert_eq!(level.dims(), volume.dims());
//! ```

pub mod detections;
pub mod dicom;
#[cfg(any(test, feature = "fixtures"))]
pub mod fixtures;
pub mod io;
pub mod landmarks;
pub mod metrics;
pub mod orientation;
pub mod phantom;
pub mod reformat;
pub mod volume;

pub use detections::{DetectionRecord, DetectionSet, LandmarkClass};
pub use landmarks::{CoordinateSpace, LandmarkSet};
pub use orientation::{EulerAngles, RotationMatrix};
pub use volume::{Volume, VolumeGeometry};

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/volumes.md")]
    mod volumes {}
    #[doc = include_str!("../../../book/src/landmarks.md")]
    mod landmarks {}
    #[doc = include_str!("../../../book/src/resampling.md")]
    mod resampling {}
    #[doc = include_str!("../../../book/src/phantom.md")]
    mod phantom {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
