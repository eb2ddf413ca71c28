//! Minimal reader for uncompressed CT DICOM series.
//!
//! Only the Explicit VR Little Endian and Implicit VR Little Endian transfer
//! syntaxes are understood, and only the handful of tags needed to build a
//! [`Volume`] are decoded. Everything else, including sequences and overlay
//! planes, is skipped by length.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::volume::{Volume, VolumeError, VolumeGeometry};

pub const EXPLICIT_VR_LE: &str = "1.2.840.10008.1.2.1";
pub const IMPLICIT_VR_LE: &str = "1.2.840.10008.1.2";

#[derive(Debug, Error)]
pub enum DicomError {
    #[error("missing DICM magic after the 128-byte preamble")]
    MissingMagic,
    #[error("unsupported transfer syntax {0}")]
    UnsupportedTransferSyntax(String),
    #[error("missing tag {0}")]
    MissingTag(&'static str),
    #[error("pixel data is {actual} bytes, expected {expected}")]
    PixelLengthMismatch { expected: usize, actual: usize },
    #[error("file truncated at byte {0}")]
    Truncated(usize),
    #[error("malformed element {tag}: {message}")]
    Malformed { tag: String, message: String },
    #[error("image orientation {0:?} is not axial")]
    NonAxialOrientation([f64; 6]),
    #[error("unsupported bits allocated: {0}")]
    UnsupportedBits(u16),
    #[error("need at least 2 slices, got {0}")]
    TooFewSlices(usize),
    #[error("inconsistent slices: {0}")]
    InconsistentSlices(String),
    #[error("non-uniform slice spacing: gap {gap} mm vs median {median} mm")]
    NonUniformSpacing { gap: f64, median: f64 },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<DicomError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The decoded content of one slice file.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row spacing, then column spacing (mm).
    pub pixel_spacing: [f64; 2],
    pub image_position: [f64; 3],
    pub instance_number: i64,
    pub slice_thickness: Option<f64>,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    /// Stored values in row-major order.
    pub pixels: Vec<i32>,
}

type Tag = (u16, u16);

const ROWS: Tag = (0x0028, 0x0010);
const COLUMNS: Tag = (0x0028, 0x0011);
const PIXEL_SPACING: Tag = (0x0028, 0x0030);
const BITS_ALLOCATED: Tag = (0x0028, 0x0100);
const PIXEL_REPRESENTATION: Tag = (0x0028, 0x0103);
const RESCALE_INTERCEPT: Tag = (0x0028, 0x1052);
const RESCALE_SLOPE: Tag = (0x0028, 0x1053);
const IMAGE_POSITION: Tag = (0x0020, 0x0032);
const IMAGE_ORIENTATION: Tag = (0x0020, 0x0037);
const INSTANCE_NUMBER: Tag = (0x0020, 0x0013);
const SLICE_THICKNESS: Tag = (0x0018, 0x0050);
const PIXEL_DATA: Tag = (0x7FE0, 0x0010);
const TRANSFER_SYNTAX: Tag = (0x0002, 0x0010);

const ITEM: Tag = (0xFFFE, 0xE000);
const ITEM_END: Tag = (0xFFFE, 0xE00D);
const SEQUENCE_END: Tag = (0xFFFE, 0xE0DD);
const UNDEFINED: u32 = 0xFFFF_FFFF;

fn tag_name(t: Tag) -> String {
    format!("({:04X},{:04X})", t.0, t.1)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    explicit: bool,
}

struct Element<'a> {
    tag: Tag,
    vr: Option<[u8; 2]>,
    value: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DicomError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DicomError::Truncated(self.buf.len())),
        }
    }

    fn u16(&mut self) -> Result<u16, DicomError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DicomError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn peek_group(&self) -> Option<u16> {
        self.buf
            .get(self.pos..self.pos + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn tag(&mut self) -> Result<Tag, DicomError> {
        Ok((self.u16()?, self.u16()?))
    }

    /// Reads one element header, returning (tag, vr, declared length).
    fn header(&mut self) -> Result<(Tag, Option<[u8; 2]>, u32), DicomError> {
        let tag = self.tag()?;
        if tag.0 == 0xFFFE {
            return Ok((tag, None, self.u32()?));
        }
        if !self.explicit {
            return Ok((tag, None, self.u32()?));
        }
        let vr = self.take(2)?;
        let vr = [vr[0], vr[1]];
        let long = matches!(
            &vr,
            b"OB" | b"OD" | b"OF" | b"OL" | b"OV" | b"OW" | b"SQ" | b"SV" | b"UC" | b"UN" | b"UR" | b"UT" | b"UV"
        );
        let len = if long {
            self.take(2)?;
            self.u32()?
        } else {
            self.u16()? as u32
        };
        Ok((tag, Some(vr), len))
    }

    fn element(&mut self) -> Result<Element<'a>, DicomError> {
        let (tag, vr, len) = self.header()?;
        if len == UNDEFINED {
            if tag == PIXEL_DATA {
                return Err(DicomError::Malformed {
                    tag: tag_name(tag),
                    message: "encapsulated pixel data".into(),
                });
            }
            self.skip_sequence()?;
            return Ok(Element { tag, vr, value: &[] });
        }
        let value = self.take(len as usize)?;
        Ok(Element { tag, vr, value })
    }

    /// Skips an undefined-length sequence up to and including its delimiter.
    fn skip_sequence(&mut self) -> Result<(), DicomError> {
        loop {
            let tag = self.tag()?;
            let len = self.u32()?;
            match tag {
                SEQUENCE_END => return Ok(()),
                ITEM if len == UNDEFINED => self.skip_item()?,
                ITEM => {
                    self.take(len as usize)?;
                }
                _ => {
                    return Err(DicomError::Malformed {
                        tag: tag_name(tag),
                        message: "expected a sequence item".into(),
                    })
                }
            }
        }
    }

    fn skip_item(&mut self) -> Result<(), DicomError> {
        loop {
            let mark = self.pos;
            let tag = self.tag()?;
            if tag == ITEM_END {
                self.u32()?;
                return Ok(());
            }
            self.pos = mark;
            self.element()?;
        }
    }
}

fn text(e: &Element) -> Result<String, DicomError> {
    std::str::from_utf8(e.value)
        .map(|s| s.trim_matches(|c: char| c == '\0' || c.is_whitespace()).to_string())
        .map_err(|_| DicomError::Malformed {
            tag: tag_name(e.tag),
            message: "value is not text".into(),
        })
}

fn decimals(e: &Element) -> Result<Vec<f64>, DicomError> {
    let s = text(e)?;
    s.split('\\')
        .map(|p| {
            p.trim().parse::<f64>().map_err(|_| DicomError::Malformed {
                tag: tag_name(e.tag),
                message: format!("bad decimal `{p}`"),
            })
        })
        .collect()
}

fn decimal_n<const N: usize>(e: &Element) -> Result<[f64; N], DicomError> {
    let v = decimals(e)?;
    v.as_slice().try_into().map_err(|_| DicomError::Malformed {
        tag: tag_name(e.tag),
        message: format!("expected {N} values, got {}", v.len()),
    })
}

fn unsigned_short(e: &Element) -> Result<u16, DicomError> {
    match e.value {
        [a, b] => Ok(u16::from_le_bytes([*a, *b])),
        _ => Err(DicomError::Malformed {
            tag: tag_name(e.tag),
            message: format!("expected 2 bytes, got {}", e.value.len()),
        }),
    }
}

fn transfer_syntax(r: &mut Reader) -> Result<String, DicomError> {
    let mut ts = None;
    while r.peek_group() == Some(0x0002) {
        let e = r.element()?;
        if e.tag == TRANSFER_SYNTAX {
            ts = Some(text(&e)?);
        }
    }
    ts.ok_or(DicomError::MissingTag("TransferSyntaxUID"))
}

/// Parses one Part-10 file.
pub fn parse_dicom_file(bytes: &[u8]) -> Result<SliceRecord, DicomError> {
    if bytes.len() < 132 || &bytes[128..132] != b"DICM" {
        return Err(DicomError::MissingMagic);
    }
    let mut r = Reader {
        buf: bytes,
        pos: 132,
        explicit: true,
    };
    let ts = transfer_syntax(&mut r)?;
    r.explicit = match ts.as_str() {
        EXPLICIT_VR_LE => true,
        IMPLICIT_VR_LE => false,
        _ => return Err(DicomError::UnsupportedTransferSyntax(ts)),
    };

    let mut rows = None;
    let mut cols = None;
    let mut spacing = None;
    let mut position = None;
    let mut instance = None;
    let mut thickness = None;
    let mut slope = None;
    let mut intercept = None;
    let mut signed = false;
    let mut pixel_data: Option<&[u8]> = None;
    while !r.at_end() {
        let e = r.element()?;
        match e.tag {
            ROWS => rows = Some(unsigned_short(&e)? as usize),
            COLUMNS => cols = Some(unsigned_short(&e)? as usize),
            PIXEL_SPACING => spacing = Some(decimal_n::<2>(&e)?),
            IMAGE_POSITION => position = Some(decimal_n::<3>(&e)?),
            INSTANCE_NUMBER => {
                let s = text(&e)?;
                instance = Some(s.parse::<i64>().map_err(|_| DicomError::Malformed {
                    tag: tag_name(e.tag),
                    message: format!("bad integer `{s}`"),
                })?);
            }
            SLICE_THICKNESS => thickness = decimal_n::<1>(&e).ok().map(|[t]| t),
            RESCALE_SLOPE => slope = Some(decimal_n::<1>(&e)?[0]),
            RESCALE_INTERCEPT => intercept = Some(decimal_n::<1>(&e)?[0]),
            BITS_ALLOCATED => {
                let bits = unsigned_short(&e)?;
                if bits != 16 {
                    return Err(DicomError::UnsupportedBits(bits));
                }
            }
            PIXEL_REPRESENTATION => signed = unsigned_short(&e)? == 1,
            IMAGE_ORIENTATION => {
                let o = decimal_n::<6>(&e)?;
                let axial = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
                if o.iter().zip(axial).any(|(a, b)| (a - b).abs() > 1e-4) {
                    return Err(DicomError::NonAxialOrientation(o));
                }
            }
            PIXEL_DATA => {
                if matches!(e.vr, Some(vr) if &vr != b"OW" && &vr != b"OB") {
                    return Err(DicomError::Malformed {
                        tag: tag_name(e.tag),
                        message: "pixel data must be OW or OB".into(),
                    });
                }
                pixel_data = Some(e.value);
            }
            _ => {}
        }
    }

    let rows = rows.ok_or(DicomError::MissingTag("Rows"))?;
    let cols = cols.ok_or(DicomError::MissingTag("Columns"))?;
    let pixel_spacing = spacing.ok_or(DicomError::MissingTag("PixelSpacing"))?;
    let image_position = position.ok_or(DicomError::MissingTag("ImagePositionPatient"))?;
    let instance_number = instance.ok_or(DicomError::MissingTag("InstanceNumber"))?;
    let data = pixel_data.ok_or(DicomError::MissingTag("PixelData"))?;
    if rows == 0 || cols == 0 {
        return Err(DicomError::Malformed {
            tag: tag_name(ROWS),
            message: "image has no pixels".into(),
        });
    }
    if pixel_spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(DicomError::Malformed {
            tag: tag_name(PIXEL_SPACING),
            message: format!("spacing must be positive, got {pixel_spacing:?}"),
        });
    }
    let expected = 2 * rows * cols;
    if data.len() != expected {
        return Err(DicomError::PixelLengthMismatch {
            expected,
            actual: data.len(),
        });
    }
    let pixels = data
        .chunks_exact(2)
        .map(|b| {
            let raw = [b[0], b[1]];
            if signed {
                i16::from_le_bytes(raw) as i32
            } else {
                u16::from_le_bytes(raw) as i32
            }
        })
        .collect();
    Ok(SliceRecord {
        rows,
        cols,
        pixel_spacing,
        image_position,
        instance_number,
        slice_thickness: thickness,
        rescale_slope: slope.unwrap_or(1.0),
        rescale_intercept: intercept.unwrap_or(0.0),
        pixels,
    })
}

/// Stacks slices into a volume, ordered by their z position.
///
/// Returns the volume and the number of voxels clamped into the HU range.
pub fn assemble_series(mut slices: Vec<SliceRecord>) -> Result<(Volume, usize), DicomError> {
    if slices.len() < 2 {
        return Err(DicomError::TooFewSlices(slices.len()));
    }
    let first = &slices[0];
    let (rows, cols, ps) = (first.rows, first.cols, first.pixel_spacing);
    for s in &slices {
        if s.rows != rows || s.cols != cols {
            return Err(DicomError::InconsistentSlices(format!(
                "instance {} is {}x{}, expected {rows}x{cols}",
                s.instance_number, s.rows, s.cols
            )));
        }
        if s.pixel_spacing != ps {
            return Err(DicomError::InconsistentSlices(format!(
                "instance {} has pixel spacing {:?}, expected {ps:?}",
                s.instance_number, s.pixel_spacing
            )));
        }
    }
    slices.sort_by(|a, b| {
        a.image_position[2]
            .total_cmp(&b.image_position[2])
            .then(a.instance_number.cmp(&b.instance_number))
    });
    let gaps: Vec<f64> = slices
        .windows(2)
        .map(|w| w[1].image_position[2] - w[0].image_position[2])
        .collect();
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
    };
    if let Some(&gap) = gaps.iter().find(|&&g| (g - median).abs() > 0.1 * median) {
        return Err(DicomError::NonUniformSpacing { gap, median });
    }
    let geometry = VolumeGeometry::new(
        [cols, rows, slices.len()],
        [ps[1], ps[0], median],
        slices[0].image_position,
    )?;
    let values = slices.iter().flat_map(|s| {
        let (m, b) = (s.rescale_slope, s.rescale_intercept);
        s.pixels.iter().map(move |&raw| {
            let hu = (m * raw as f64 + b).round();
            hu.clamp(i32::MIN as f64, i32::MAX as f64) as i32
        })
    });
    Ok(Volume::from_clamped(geometry, values)?)
}

/// Parses every regular file in `dir` and assembles them.
pub fn read_series_dir(dir: impl AsRef<Path>) -> Result<(Volume, usize), DicomError> {
    let dir = dir.as_ref();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DicomError::Io { path, source }
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_type().map_err(io_err(&entry.path()))?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort();
    let slices = paths
        .par_iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(io_err(p))?;
            parse_dicom_file(&bytes).map_err(|e| DicomError::File {
                path: p.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    log::info!("read {} slices from {}", slices.len(), dir.display());
    assemble_series(slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{DicomFixture, Syntax};
    use proptest::prelude::*;

    fn fixture(z: f64, instance: i64) -> DicomFixture {
        let mut f = DicomFixture::new(3, 4);
        f.image_position = [-10.0, 20.0, z];
        f.instance_number = instance;
        f.pixels = (0..12).map(|i| 1000 + i * 10 + instance as i32).collect();
        f
    }

    #[test]
    fn reads_512_square_fixture() {
        let f = DicomFixture::new(512, 512);
        let s = parse_dicom_file(&f.to_bytes()).unwrap();
        assert_eq!(s.rows, 512);
        assert_eq!(s.cols, 512);
        assert_eq!(s.pixels.len(), 512 * 512);
    }

    #[test]
    fn both_syntaxes_agree() {
        let mut f = fixture(3.5, 7);
        f.rescale_slope = Some(2.0);
        f.rescale_intercept = Some(-1024.0);
        f.slice_thickness = Some(1.0);
        let explicit = parse_dicom_file(&f.to_bytes()).unwrap();
        f.syntax = Syntax::Implicit;
        let implicit = parse_dicom_file(&f.to_bytes()).unwrap();
        assert_eq!(explicit, implicit);
        assert_eq!(explicit.rescale_slope, 2.0);
        assert_eq!(explicit.rescale_intercept, -1024.0);
        assert_eq!(explicit.slice_thickness, Some(1.0));
        assert_eq!(explicit.instance_number, 7);
        assert_eq!(explicit.image_position, [-10.0, 20.0, 3.5]);
        assert_eq!(explicit.pixels, f.pixels);
    }

    #[test]
    fn missing_rows() {
        let mut f = fixture(0.0, 1);
        f.omit.push((0x0028, 0x0010));
        let e = parse_dicom_file(&f.to_bytes()).unwrap_err();
        assert_eq!(e.to_string(), "missing tag Rows");
    }

    #[test]
    fn rescale_defaults() {
        let f = fixture(0.0, 1);
        assert!(f.rescale_slope.is_none());
        let s = parse_dicom_file(&f.to_bytes()).unwrap();
        assert_eq!(s.rescale_slope, 1.0);
        assert_eq!(s.rescale_intercept, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut bytes = fixture(0.0, 1).to_bytes();
        bytes[129] = b'X';
        assert!(matches!(parse_dicom_file(&bytes), Err(DicomError::MissingMagic)));
        assert!(matches!(parse_dicom_file(b"DICM"), Err(DicomError::MissingMagic)));

        let mut f = fixture(0.0, 1);
        f.transfer_syntax_override = Some("1.2.840.10008.1.2.4.50".into());
        assert!(matches!(
            parse_dicom_file(&f.to_bytes()),
            Err(DicomError::UnsupportedTransferSyntax(uid)) if uid == "1.2.840.10008.1.2.4.50"
        ));

        let mut f = fixture(0.0, 1);
        f.pixels.pop();
        assert!(matches!(
            parse_dicom_file(&f.to_bytes()),
            Err(DicomError::PixelLengthMismatch { expected: 24, actual: 22 })
        ));

        let mut f = fixture(0.0, 1);
        f.orientation = Some([1.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        assert!(matches!(parse_dicom_file(&f.to_bytes()), Err(DicomError::NonAxialOrientation(_))));

        let mut f = fixture(0.0, 1);
        f.bits_allocated = 8;
        assert!(matches!(parse_dicom_file(&f.to_bytes()), Err(DicomError::UnsupportedBits(8))));
    }

    #[test]
    fn skips_sequences_of_both_length_kinds() {
        for syntax in [Syntax::Explicit, Syntax::Implicit] {
            let mut f = fixture(1.0, 2);
            f.syntax = syntax;
            f.with_sequence = true;
            let s = parse_dicom_file(&f.to_bytes()).unwrap();
            assert_eq!(s.rows, 3);
        }
    }

    #[test]
    fn truncation_never_yields_a_record() {
        let mut f = fixture(1.0, 2);
        f.with_sequence = true;
        let bytes = f.to_bytes();
        for cut in 132..bytes.len() {
            assert!(parse_dicom_file(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn signed_pixels() {
        let mut f = fixture(0.0, 1);
        f.signed = true;
        f.pixels = vec![-2000, -1, 0, 5, 7, 9, 11, 13, 15, 17, 19, 21];
        let s = parse_dicom_file(&f.to_bytes()).unwrap();
        assert_eq!(s.pixels, f.pixels);
    }

    fn parsed(z: f64, i: i64) -> SliceRecord {
        parse_dicom_file(&fixture(z, i).to_bytes()).unwrap()
    }

    #[test]
    fn uniform_series() {
        let slices: Vec<_> = (0..3).map(|k| parsed(k as f64, k + 1)).collect();
        let (v, clamped) = assemble_series(slices.clone()).unwrap();
        assert_eq!(clamped, 0);
        assert_eq!(v.dims(), [4, 3, 3]);
        assert_eq!(v.geometry().spacing()[2], 1.0);
        assert_eq!(v.geometry().origin(), [-10.0, 20.0, 0.0]);
        let mut shuffled = slices.clone();
        shuffled.swap(0, 2);
        assert_eq!(assemble_series(shuffled).unwrap().0, v);
    }

    #[test]
    fn non_uniform_gap() {
        let slices = vec![parsed(0.0, 1), parsed(1.0, 2), parsed(5.0, 3)];
        let e = assemble_series(slices).unwrap_err();
        assert!(e.to_string().starts_with("non-uniform slice spacing"), "{e}");
    }

    #[test]
    fn assembly_errors() {
        assert!(matches!(assemble_series(vec![parsed(0.0, 1)]), Err(DicomError::TooFewSlices(1))));
        let mut other = fixture(1.0, 2);
        other.rows = 4;
        other.pixels = vec![0; 16];
        let odd = parse_dicom_file(&other.to_bytes()).unwrap();
        assert!(matches!(
            assemble_series(vec![parsed(0.0, 1), odd]),
            Err(DicomError::InconsistentSlices(_))
        ));
    }

    #[test]
    fn pixel_spacing_order() {
        let mut a = fixture(0.0, 1);
        a.pixel_spacing = [0.5, 0.75];
        let mut b = a.clone();
        b.image_position[2] = 2.0;
        let slices = [a, b].map(|f| parse_dicom_file(&f.to_bytes()).unwrap()).to_vec();
        let (v, _) = assemble_series(slices).unwrap();
        // Row spacing is the y step; column spacing is the x step.
        assert_eq!(v.geometry().spacing(), [0.75, 0.5, 2.0]);
    }

    #[test]
    fn reads_directory() {
        let dir = tempfile::tempdir().unwrap();
        for k in 0..4 {
            let f = fixture(k as f64 * 1.25, 4 - k);
            fs::write(dir.path().join(format!("s{k}.dcm")), f.to_bytes()).unwrap();
        }
        let (v, _) = read_series_dir(dir.path()).unwrap();
        assert_eq!(v.dims(), [4, 3, 4]);
        assert_eq!(v.geometry().spacing()[2], 1.25);
        fs::write(dir.path().join("junk.txt"), b"not dicom").unwrap();
        assert!(matches!(read_series_dir(dir.path()), Err(DicomError::File { .. })));
    }

    proptest! {
        #[test]
        fn hu_mapping_exact(
            slope in prop::sample::select(vec![1.0, 2.0, 0.5, 0.25]),
            intercept in -2048i32..=1024,
            raws in prop::collection::vec(0i32..4096, 12),
        ) {
            let mut slices = Vec::new();
            for k in 0..2 {
                let mut f = fixture(k as f64, k + 1);
                f.rescale_slope = Some(slope);
                f.rescale_intercept = Some(intercept as f64);
                f.pixels = raws.clone();
                slices.push(parse_dicom_file(&f.to_bytes()).unwrap());
            }
            let (v, _) = assemble_series(slices).unwrap();
            for (n, &raw) in raws.iter().enumerate() {
                let hu = slope * raw as f64 + intercept as f64;
                let expect = hu.round().clamp(crate::volume::HU_MIN as f64, crate::volume::HU_MAX as f64);
                prop_assert_eq!(v.voxels()[n] as f64, expect);
            }
        }

        #[test]
        fn assembly_is_permutation_invariant(seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let slices: Vec<_> = (0..6).map(|k| parsed(k as f64 * 0.8 + 3.0, k)).collect();
            let v = assemble_series(slices.clone()).unwrap().0;
            let mut shuffled = slices;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(assemble_series(shuffled).unwrap().0, v);
        }
    }
}
