//! Synthetic inputs for tests: a DICOM slice writer.

use crate::dicom::{EXPLICIT_VR_LE, IMPLICIT_VR_LE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Syntax {
    Explicit,
    Implicit,
}

/// A single-slice Part-10 file to be serialized with [`DicomFixture::to_bytes`].
#[derive(Debug, Clone)]
pub struct DicomFixture {
    pub rows: usize,
    pub cols: usize,
    pub pixel_spacing: [f64; 2],
    pub image_position: [f64; 3],
    pub instance_number: i64,
    pub slice_thickness: Option<f64>,
    pub rescale_slope: Option<f64>,
    pub rescale_intercept: Option<f64>,
    pub orientation: Option<[f64; 6]>,
    pub bits_allocated: u16,
    pub signed: bool,
    pub syntax: Syntax,
    pub transfer_syntax_override: Option<String>,
    /// Tags left out of the data set.
    pub omit: Vec<(u16, u16)>,
    /// Adds nested sequences (undefined and defined lengths) and an overlay.
    pub with_sequence: bool,
    /// Stored values, row-major; written as 16-bit words.
    pub pixels: Vec<i32>,
}

impl DicomFixture {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            pixel_spacing: [1.0, 1.0],
            image_position: [0.0, 0.0, 0.0],
            instance_number: 1,
            slice_thickness: None,
            rescale_slope: None,
            rescale_intercept: None,
            orientation: Some([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            bits_allocated: 16,
            signed: false,
            syntax: Syntax::Explicit,
            transfer_syntax_override: None,
            omit: Vec::new(),
            with_sequence: false,
            pixels: vec![0; rows * cols],
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let ts = self.transfer_syntax_override.clone().unwrap_or_else(|| {
            match self.syntax {
                Syntax::Explicit => EXPLICIT_VR_LE,
                Syntax::Implicit => IMPLICIT_VR_LE,
            }
            .to_string()
        });
        let mut out = vec![0u8; 128];
        out.extend_from_slice(b"DICM");
        let mut meta = Vec::new();
        put(&mut meta, true, (0x0002, 0x0001), b"OB", &[0, 1]);
        put(&mut meta, true, (0x0002, 0x0010), b"UI", &ui(&ts));
        put(&mut out, true, (0x0002, 0x0000), b"UL", &(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);

        let explicit = self.syntax == Syntax::Explicit;
        let mut elems: Vec<((u16, u16), &[u8; 2], Vec<u8>)> = vec![
            ((0x0008, 0x0060), b"CS", text("CT")),
            ((0x0020, 0x0013), b"IS", text(&self.instance_number.to_string())),
            ((0x0020, 0x0032), b"DS", decimals(&self.image_position)),
            ((0x0028, 0x0010), b"US", (self.rows as u16).to_le_bytes().to_vec()),
            ((0x0028, 0x0011), b"US", (self.cols as u16).to_le_bytes().to_vec()),
            ((0x0028, 0x0030), b"DS", decimals(&self.pixel_spacing)),
            ((0x0028, 0x0100), b"US", self.bits_allocated.to_le_bytes().to_vec()),
            ((0x0028, 0x0103), b"US", (self.signed as u16).to_le_bytes().to_vec()),
        ];
        if let Some(t) = self.slice_thickness {
            elems.push(((0x0018, 0x0050), b"DS", decimals(&[t])));
        }
        if let Some(o) = self.orientation {
            elems.push(((0x0020, 0x0037), b"DS", decimals(&o)));
        }
        if let Some(b) = self.rescale_intercept {
            elems.push(((0x0028, 0x1052), b"DS", decimals(&[b])));
        }
        if let Some(m) = self.rescale_slope {
            elems.push(((0x0028, 0x1053), b"DS", decimals(&[m])));
        }
        if self.with_sequence {
            // Overlay plane data, ignored by the reader.
            elems.push(((0x6000, 0x3000), b"OW", vec![0xAA; 8]));
        }
        let pixels: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|&p| {
                if self.signed {
                    (p as i16).to_le_bytes()
                } else {
                    (p as u16).to_le_bytes()
                }
            })
            .collect();
        elems.push(((0x7FE0, 0x0010), b"OW", pixels));
        elems.retain(|(tag, _, _)| !self.omit.contains(tag));
        elems.sort_by_key(|(tag, _, _)| *tag);

        for (tag, vr, value) in &elems {
            if self.with_sequence && *tag == (0x0020, 0x0013) {
                self.sequences(&mut out, explicit);
            }
            put(&mut out, explicit, *tag, vr, value);
        }
        out
    }

    fn sequences(&self, out: &mut Vec<u8>, explicit: bool) {
        // Undefined-length sequence holding an undefined-length item that
        // itself nests a defined-length item.
        let mut inner = Vec::new();
        put(&mut inner, explicit, (0x0008, 0x1155), b"UI", &ui("1.2.3.4"));
        let mut item = Vec::new();
        put(&mut item, explicit, (0x0008, 0x1150), b"UI", &ui("1.2.840.10008.5.1.4.1.1.2"));
        header(&mut item, explicit, (0x0008, 0x1115), b"SQ", u32::MAX);
        tag(&mut item, (0xFFFE, 0xE000));
        item.extend_from_slice(&(inner.len() as u32).to_le_bytes());
        item.extend_from_slice(&inner);
        tag(&mut item, (0xFFFE, 0xE0DD));
        item.extend_from_slice(&0u32.to_le_bytes());

        header(out, explicit, (0x0008, 0x1140), b"SQ", u32::MAX);
        tag(out, (0xFFFE, 0xE000));
        out.extend_from_slice(&u32::MAX.to_le_bytes());
        out.extend_from_slice(&item);
        tag(out, (0xFFFE, 0xE00D));
        out.extend_from_slice(&0u32.to_le_bytes());
        tag(out, (0xFFFE, 0xE0DD));
        out.extend_from_slice(&0u32.to_le_bytes());
    }
}

fn pad(mut v: Vec<u8>, with: u8) -> Vec<u8> {
    if v.len() % 2 == 1 {
        v.push(with);
    }
    v
}

fn text(s: &str) -> Vec<u8> {
    pad(s.as_bytes().to_vec(), b' ')
}

fn ui(s: &str) -> Vec<u8> {
    pad(s.as_bytes().to_vec(), 0)
}

fn decimals(v: &[f64]) -> Vec<u8> {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    text(&parts.join("\\"))
}

fn tag(out: &mut Vec<u8>, t: (u16, u16)) {
    out.extend_from_slice(&t.0.to_le_bytes());
    out.extend_from_slice(&t.1.to_le_bytes());
}

fn header(out: &mut Vec<u8>, explicit: bool, t: (u16, u16), vr: &[u8; 2], len: u32) {
    tag(out, t);
    if !explicit {
        out.extend_from_slice(&len.to_le_bytes());
        return;
    }
    out.extend_from_slice(vr);
    if matches!(vr, b"OB" | b"OW" | b"SQ" | b"UN" | b"UT") {
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&len.to_le_bytes());
    } else {
        out.extend_from_slice(&(len as u16).to_le_bytes());
    }
}

fn put(out: &mut Vec<u8>, explicit: bool, t: (u16, u16), vr: &[u8; 2], value: &[u8]) {
    header(out, explicit, t, vr, value.len() as u32);
    out.extend_from_slice(value);
}
