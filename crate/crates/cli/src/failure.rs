use std::fmt;
use std::io;

use omline::dicom::DicomError;
use omline::detections::RecordError;
use omline::landmarks::LandmarkError;
use omline::metrics::{TableError, WilcoxonError};
use omline::orientation::OrientationError;
use omline::phantom::PhantomError;
use omline::reformat::{MeshError, ReformatError};
use omline::volume::VolumeError;

pub const EXIT_LANDMARK_MISSING: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_GEOMETRY: u8 = 4;
pub const EXIT_USAGE: u8 = 64;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// A landmark class has no qualifying detection.
    LandmarkMissing(String),
    /// Unreadable, unwritable or malformed input.
    Input(String),
    /// Inputs parse but describe degenerate or implausible geometry.
    Geometry(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::LandmarkMissing(_) => EXIT_LANDMARK_MISSING,
            Failure::Input(_) => EXIT_INPUT,
            Failure::Geometry(_) => EXIT_GEOMETRY,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::LandmarkMissing(m) | Failure::Input(m) | Failure::Geometry(m) => f.write_str(m),
        }
    }
}

macro_rules! input_failure {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Input(e.to_string())
            }
        })*
    };
}

input_failure!(
    VolumeError,
    RecordError,
    DicomError,
    TableError,
    MeshError,
    WilcoxonError,
    io::Error,
    serde_json::Error
);

impl From<LandmarkError> for Failure {
    fn from(e: LandmarkError) -> Self {
        match e {
            LandmarkError::NoDetections | LandmarkError::LandmarkMissing(_) => Failure::LandmarkMissing(e.to_string()),
            LandmarkError::ImplausibleGeometry { .. } => Failure::Geometry(e.to_string()),
        }
    }
}

impl From<OrientationError> for Failure {
    fn from(e: OrientationError) -> Self {
        Failure::Geometry(e.to_string())
    }
}

impl From<ReformatError> for Failure {
    fn from(e: ReformatError) -> Self {
        match e {
            ReformatError::EmptySurface(_) => Failure::Geometry(e.to_string()),
            ReformatError::ThreadPool(_) => Failure::Input(e.to_string()),
        }
    }
}

impl From<PhantomError> for Failure {
    fn from(e: PhantomError) -> Self {
        match e {
            PhantomError::MarkerOutOfFrame(_) => Failure::Geometry(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}
