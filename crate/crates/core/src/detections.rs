//! Landmark detections and ground-truth annotations, plus their
//! line-delimited text formats.
//!
//! Both formats are UTF-8, comma separated, with a mandatory header line.
//! Lines starting with `#` and blank lines are ignored; every other line is
//! either a record or a line-numbered error.
//!
//! ```text
//! case_id,slice_index,class,cx,cy,box_size,confidence
//! case01,41,left_eye,212.5,180.25,24,0.97
//! ```

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::io::write_atomic;

pub const DETECTION_HEADER: &str = "case_id,slice_index,class,cx,cy,box_size,confidence";
pub const GROUND_TRUTH_HEADER: &str = "case_id,slice_index,class,x_min,y_min,x_max,y_max";

/// The four orbitomeatal landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkClass {
    LeftEye,
    RightEye,
    LeftEac,
    RightEac,
}

impl LandmarkClass {
    pub const ALL: [LandmarkClass; 4] = [
        LandmarkClass::LeftEye,
        LandmarkClass::RightEye,
        LandmarkClass::LeftEac,
        LandmarkClass::RightEac,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkClass::LeftEye => "left_eye",
            LandmarkClass::RightEye => "right_eye",
            LandmarkClass::LeftEac => "left_eac",
            LandmarkClass::RightEac => "right_eac",
        }
    }

    /// Position in [`LandmarkClass::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LandmarkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LandmarkClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown class label `{s}`"))
    }
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }
}

/// One predicted landmark: a square box on one axial slice.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub case_id: String,
    pub slice_index: usize,
    pub class: LandmarkClass,
    pub cx: f64,
    pub cy: f64,
    pub box_size: f64,
    pub confidence: f64,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if !(self.box_size > 0.0 && self.box_size.is_finite()) {
            return Err(format!("box_size {} must be > 0", self.box_size));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err("non-finite box center".into());
        }
        if self.case_id.is_empty() || self.case_id.contains(',') {
            return Err(format!("invalid case_id `{}`", self.case_id));
        }
        Ok(())
    }

    /// The square as a corner rectangle.
    pub fn rect(&self) -> Rect {
        let h = self.box_size / 2.0;
        Rect {
            x_min: self.cx - h,
            y_min: self.cy - h,
            x_max: self.cx + h,
            y_max: self.cy + h,
        }
    }
}

/// All detections of one case.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub case_id: String,
    pub records: Vec<DetectionRecord>,
}

impl DetectionSet {
    pub fn new(case_id: impl Into<String>, records: Vec<DetectionRecord>) -> Result<Self, String> {
        let case_id = case_id.into();
        if let Some(r) = records.iter().find(|r| r.case_id != case_id) {
            return Err(format!(
                "record for case `{}` in set for case `{case_id}`",
                r.case_id
            ));
        }
        Ok(Self { case_id, records })
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

/// One annotated landmark rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub case_id: String,
    pub slice_index: usize,
    pub class: LandmarkClass,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl GroundTruthBox {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err("non-finite coordinate".into());
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(format!(
                "degenerate rectangle [{}, {}, {}, {}]",
                self.x_min, self.y_min, self.x_max, self.y_max
            ));
        }
        if self.case_id.is_empty() || self.case_id.contains(',') {
            return Err(format!("invalid case_id `{}`", self.case_id));
        }
        Ok(())
    }

    pub fn rect(&self) -> Rect {
        Rect {
            x_min: self.x_min,
            y_min: self.y_min,
            x_max: self.x_max,
            y_max: self.y_max,
        }
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: missing header line `{expected}`")]
    MissingHeader { path: PathBuf, expected: &'static str },
    #[error("{path}: {message}")]
    Set { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn parse_field<T: FromStr>(fields: &[&str], idx: usize, name: &str) -> Result<T, String> {
    fields[idx]
        .parse()
        .map_err(|_| format!("field `{name}`: cannot parse `{}`", fields[idx]))
}

fn parse_detection_line(line: &str) -> Result<DetectionRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(format!("expected 7 fields, found {}", fields.len()));
    }
    let rec = DetectionRecord {
        case_id: fields[0].to_string(),
        slice_index: parse_field(&fields, 1, "slice_index")?,
        class: fields[2].parse()?,
        cx: parse_field(&fields, 3, "cx")?,
        cy: parse_field(&fields, 4, "cy")?,
        box_size: parse_field(&fields, 5, "box_size")?,
        confidence: parse_field(&fields, 6, "confidence")?,
    };
    rec.validate()?;
    Ok(rec)
}

fn parse_ground_truth_line(line: &str) -> Result<GroundTruthBox, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(format!("expected 7 fields, found {}", fields.len()));
    }
    let gt = GroundTruthBox {
        case_id: fields[0].to_string(),
        slice_index: parse_field(&fields, 1, "slice_index")?,
        class: fields[2].parse()?,
        x_min: parse_field(&fields, 3, "x_min")?,
        y_min: parse_field(&fields, 4, "y_min")?,
        x_max: parse_field(&fields, 5, "x_max")?,
        y_max: parse_field(&fields, 6, "y_max")?,
    };
    gt.validate()?;
    Ok(gt)
}

/// Streams the records of a line-delimited file through `parse`.
fn read_records<T>(
    path: &Path,
    header: &'static str,
    parse: fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, RecordError> {
    let file = File::open(path).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut seen_header = false;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RecordError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let line_err = |message: String| RecordError::Line {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        if !seen_header {
            let normalized: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if normalized.join(",") != header {
                return Err(line_err(format!("expected header `{header}`, found `{trimmed}`")));
            }
            seen_header = true;
            continue;
        }
        out.push(parse(trimmed).map_err(line_err)?);
    }
    if !seen_header {
        return Err(RecordError::MissingHeader {
            path: path.to_path_buf(),
            expected: header,
        });
    }
    Ok(out)
}

/// Reads detection records for any number of cases.
pub fn read_detection_records(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>, RecordError> {
    read_records(path.as_ref(), DETECTION_HEADER, parse_detection_line)
}

/// Reads a single-case detection file.
pub fn read_detections(path: impl AsRef<Path>) -> Result<DetectionSet, RecordError> {
    let path = path.as_ref();
    let records = read_detection_records(path)?;
    let case_id = records.first().map(|r| r.case_id.clone()).unwrap_or_default();
    DetectionSet::new(case_id, records).map_err(|message| RecordError::Set {
        path: path.to_path_buf(),
        message,
    })
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthBox>, RecordError> {
    read_records(path.as_ref(), GROUND_TRUTH_HEADER, parse_ground_truth_line)
}

pub fn write_detection_lines<W: Write + ?Sized>(
    w: &mut W,
    records: &[DetectionRecord],
) -> io::Result<()> {
    writeln!(w, "{DETECTION_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.case_id, r.slice_index, r.class, r.cx, r.cy, r.box_size, r.confidence
        )?;
    }
    Ok(())
}

pub fn write_detections(set: &DetectionSet, path: impl AsRef<Path>) -> Result<(), RecordError> {
    let path = path.as_ref();
    write_atomic(path, |w| write_detection_lines(w, &set.records)).map_err(|source| {
        RecordError::Io {
            path: path.to_path_buf(),
            source,
        }
    })
}

pub fn write_ground_truth(boxes: &[GroundTruthBox], path: impl AsRef<Path>) -> Result<(), RecordError> {
    let path = path.as_ref();
    write_atomic(path, |w| {
        writeln!(w, "{GROUND_TRUTH_HEADER}")?;
        for b in boxes {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                b.case_id, b.slice_index, b.class, b.x_min, b.y_min, b.x_max, b.y_max
            )?;
        }
        Ok(())
    })
    .map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })
}
