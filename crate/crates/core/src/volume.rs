//! Voxel volumes, their physical geometry, and the header + raw interchange
//! format.
//!
//! A volume is a dense grid of signed 16-bit Hounsfield values stored
//! x-fastest, then y, then z (each z plane is one axial slice). Geometry is
//! axis-aligned: voxel `(i, j, k)` has its center at
//! `origin + (i, j, k) * spacing` millimetres.
//!
//! On disk a volume is a small text header plus a raw little-endian `i16`
//! file:
//!
//! ```text
//! dims = 512 512 139
//! spacing_mm = 0.43 0.43 1.0
//! origin_mm = 0 0 0
//! data = case01.raw
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::StagedFile;

/// Lowest representable HU value (air floor of 12-bit CT).
pub const HU_MIN: i16 = -1024;
/// Highest representable HU value.
pub const HU_MAX: i16 = 3071;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("voxel count {actual} does not match dims {dims:?} ({expected} voxels)")]
    VoxelCount {
        dims: [usize; 3],
        expected: usize,
        actual: usize,
    },
    #[error("voxel value {value} at index {index} outside [{HU_MIN}, {HU_MAX}]")]
    OutOfRange { index: usize, value: i32 },
    #[error("malformed header {path}: line {line}: {message}")]
    Header {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("malformed header {path}: missing key `{key}`")]
    MissingKey { path: PathBuf, key: &'static str },
    #[error("size mismatch: {path} holds {actual} bytes, dims require {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl VolumeError {
    fn io(path: &Path, source: io::Error) -> Self {
        VolumeError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Grid size and voxel-to-millimetre mapping of a volume.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct VolumeGeometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl VolumeGeometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self, VolumeError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::Geometry(format!("dims must be >= 1, got {dims:?}")));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(VolumeError::Geometry(format!("dims {dims:?} overflow")));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VolumeError::Geometry(format!(
                "spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(VolumeError::Geometry(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit-spacing geometry with the origin at zero.
    pub fn isotropic(dims: [usize; 3], spacing: f64) -> Result<Self, VolumeError> {
        Self::new(dims, [spacing; 3], [0.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index of voxel `(i, j, k)` in x-fastest order.
    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn voxel_to_physical(&self, idx: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + idx[a] * self.spacing[a])
    }

    pub fn physical_to_voxel(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (p[a] - self.origin[a]) / self.spacing[a])
    }

    /// Physical position of the grid center (midpoint of the first and last
    /// voxel centers along each axis).
    pub fn center(&self) -> [f64; 3] {
        self.voxel_to_physical(std::array::from_fn(|a| (self.dims[a] - 1) as f64 / 2.0))
    }

    /// Whether a fractional voxel index lies inside the sampled grid.
    pub fn contains_index(&self, idx: [f64; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0.0 && idx[a] <= (self.dims[a] - 1) as f64)
    }
}

/// A CT volume: geometry plus HU voxels in x-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: VolumeGeometry,
    voxels: Vec<i16>,
}

impl Volume {
    /// Builds a volume, rejecting wrong voxel counts and out-of-range values.
    pub fn new(geometry: VolumeGeometry, voxels: Vec<i16>) -> Result<Self, VolumeError> {
        check_count(&geometry, voxels.len())?;
        if let Some((index, &value)) = voxels
            .iter()
            .enumerate()
            .find(|(_, v)| !(HU_MIN..=HU_MAX).contains(*v))
        {
            return Err(VolumeError::OutOfRange {
                index,
                value: value as i32,
            });
        }
        Ok(Self { geometry, voxels })
    }

    /// Builds a volume from arbitrary integer values, clamping into the HU
    /// range. Returns the volume and the number of clamped voxels.
    pub fn from_clamped<I>(geometry: VolumeGeometry, values: I) -> Result<(Self, usize), VolumeError>
    where
        I: IntoIterator<Item = i32>,
    {
        let mut clamped = 0usize;
        let voxels: Vec<i16> = values
            .into_iter()
            .map(|v| {
                let c = v.clamp(HU_MIN as i32, HU_MAX as i32);
                if c != v {
                    clamped += 1;
                }
                c as i16
            })
            .collect();
        check_count(&geometry, voxels.len())?;
        Ok((Self { geometry, voxels }, clamped))
    }

    /// A volume with every voxel set to `value` (clamped into range).
    pub fn filled(geometry: VolumeGeometry, value: i16) -> Self {
        let value = value.clamp(HU_MIN, HU_MAX);
        Self {
            voxels: vec![value; geometry.voxel_count()],
            geometry,
        }
    }

    /// Builds a volume by evaluating `f(i, j, k)` at every voxel.
    pub fn from_fn<F>(geometry: VolumeGeometry, mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize) -> i16,
    {
        let [nx, ny, nz] = geometry.dims;
        let mut voxels = Vec::with_capacity(geometry.voxel_count());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    voxels.push(f(i, j, k).clamp(HU_MIN, HU_MAX));
                }
            }
        }
        Self { geometry, voxels }
    }

    pub(crate) fn from_raw_parts_unchecked(geometry: VolumeGeometry, voxels: Vec<i16>) -> Self {
        debug_assert_eq!(geometry.voxel_count(), voxels.len());
        Self { geometry, voxels }
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<i16> {
        self.voxels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> i16 {
        self.voxels[self.geometry.linear_index(i, j, k)]
    }

    /// The axial slice `k` as a row-major `ny x nx` plane.
    pub fn slice(&self, k: usize) -> &[i16] {
        let plane = self.geometry.dims[0] * self.geometry.dims[1];
        &self.voxels[k * plane..(k + 1) * plane]
    }

    /// Smallest and largest voxel values.
    pub fn value_range(&self) -> (i16, i16) {
        self.voxels
            .iter()
            .fold((i16::MAX, i16::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

fn check_count(geometry: &VolumeGeometry, actual: usize) -> Result<(), VolumeError> {
    let expected = geometry.voxel_count();
    if expected != actual {
        return Err(VolumeError::VoxelCount {
            dims: geometry.dims,
            expected,
            actual,
        });
    }
    Ok(())
}

struct Header {
    geometry: VolumeGeometry,
    data: PathBuf,
}

fn parse_triple<T: std::str::FromStr>(value: &str) -> Option<[T; 3]> {
    let parts: Vec<T> = value
        .split_whitespace()
        .map(|s| s.parse().ok())
        .collect::<Option<_>>()?;
    parts.try_into().ok()
}

fn parse_header(path: &Path, text: &str) -> Result<Header, VolumeError> {
    let bad = |line: usize, message: String| VolumeError::Header {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut dims = None;
    let mut spacing = None;
    let mut origin = None;
    let mut data = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(line_no, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let slot_taken = |set: bool| {
            if set {
                Err(bad(line_no, format!("duplicate key `{key}`")))
            } else {
                Ok(())
            }
        };
        match key {
            "dims" => {
                slot_taken(dims.is_some())?;
                dims = Some(
                    parse_triple::<usize>(value)
                        .ok_or_else(|| bad(line_no, format!("dims needs 3 integers, got `{value}`")))?,
                );
            }
            "spacing_mm" => {
                slot_taken(spacing.is_some())?;
                spacing = Some(parse_triple::<f64>(value).ok_or_else(|| {
                    bad(line_no, format!("spacing_mm needs 3 numbers, got `{value}`"))
                })?);
            }
            "origin_mm" => {
                slot_taken(origin.is_some())?;
                origin = Some(parse_triple::<f64>(value).ok_or_else(|| {
                    bad(line_no, format!("origin_mm needs 3 numbers, got `{value}`"))
                })?);
            }
            "data" => {
                slot_taken(data.is_some())?;
                if value.is_empty() {
                    return Err(bad(line_no, "empty data filename".into()));
                }
                data = Some(PathBuf::from(value));
            }
            other => return Err(bad(line_no, format!("unknown key `{other}`"))),
        }
    }
    let missing = |key| VolumeError::MissingKey {
        path: path.to_path_buf(),
        key,
    };
    let geometry = VolumeGeometry::new(
        dims.ok_or_else(|| missing("dims"))?,
        spacing.ok_or_else(|| missing("spacing_mm"))?,
        origin.ok_or_else(|| missing("origin_mm"))?,
    )?;
    Ok(Header {
        geometry,
        data: data.ok_or_else(|| missing("data"))?,
    })
}

/// Loads a volume and reports how many voxels were clamped into the HU range.
pub fn read_volume(path: impl AsRef<Path>) -> Result<(Volume, usize), VolumeError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| VolumeError::io(path, e))?;
    let header = parse_header(path, &text)?;
    let raw_path = match path.parent() {
        Some(dir) => dir.join(&header.data),
        None => header.data.clone(),
    };
    let bytes = fs::read(&raw_path).map_err(|e| VolumeError::io(&raw_path, e))?;
    let expected = header.geometry.voxel_count() as u64 * 2;
    if bytes.len() as u64 != expected {
        return Err(VolumeError::SizeMismatch {
            path: raw_path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let values = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as i32);
    Volume::from_clamped(header.geometry, values)
}

/// Loads a volume from a header file and its adjacent raw file.
///
/// Values outside the HU range are clamped; the count is logged as a warning.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume, VolumeError> {
    let path = path.as_ref();
    let (volume, clamped) = read_volume(path)?;
    if clamped > 0 {
        log::warn!(
            "{}: clamped {clamped} voxels into [{HU_MIN}, {HU_MAX}] HU",
            path.display()
        );
    }
    Ok(volume)
}

/// Path of the raw file that [`save_volume`] pairs with a header path.
pub fn raw_path_for(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

fn format_f64(v: f64) -> String {
    // Shortest representation that round-trips exactly.
    format!("{v:?}")
}

/// Writes `path` (header) and a sibling `.raw` file.
///
/// Both files are staged and renamed into place only after everything has
/// been written.
pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let path = path.as_ref();
    let raw = raw_path_for(path);
    if raw == path {
        return Err(VolumeError::Header {
            path: path.to_path_buf(),
            line: 0,
            message: "header path must not end in .raw".into(),
        });
    }
    let raw_name = raw
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| VolumeError::Header {
            path: path.to_path_buf(),
            line: 0,
            message: "header path has no file name".into(),
        })?;
    let g = v.geometry();
    let [nx, ny, nz] = g.dims;
    let fmt3 = |a: [f64; 3]| {
        a.iter()
            .map(|&x| format_f64(x))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let header = format!(
        "dims = {nx} {ny} {nz}\nspacing_mm = {}\norigin_mm = {}\ndata = {raw_name}\n",
        fmt3(g.spacing),
        fmt3(g.origin)
    );

    let stage = |dest: &Path, bytes: &[u8]| -> Result<StagedFile, VolumeError> {
        let mut f = StagedFile::new(dest).map_err(|e| VolumeError::io(dest, e))?;
        f.write_all(bytes).map_err(|e| VolumeError::io(dest, e))?;
        Ok(f)
    };
    let mut raw_bytes = Vec::with_capacity(v.voxels.len() * 2);
    for &x in &v.voxels {
        raw_bytes.extend_from_slice(&x.to_le_bytes());
    }
    let raw_file = stage(&raw, &raw_bytes)?;
    let header_file = stage(path, header.as_bytes())?;
    raw_file.commit().map_err(|e| VolumeError::io(&raw, e))?;
    header_file.commit().map_err(|e| VolumeError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_pair(dir: &Path, header: &str, raw: &[u8]) -> PathBuf {
        let h = dir.join("v.hdr");
        fs::write(&h, header).unwrap();
        fs::write(dir.join("v.raw"), raw).unwrap();
        h
    }

    #[test]
    fn loads_4x4x2() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_pair(
            dir.path(),
            "dims = 4 4 2\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\ndata = v.raw\n",
            &[0u8; 64],
        );
        let v = load_volume(&h).unwrap();
        assert_eq!(v.voxels().len(), 32);
    }

    #[test]
    fn rejects_short_raw() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_pair(
            dir.path(),
            "dims = 4 4 2\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\ndata = v.raw\n",
            &[0u8; 60],
        );
        let err = load_volume(&h).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn rejects_bad_headers() {
        let dir = tempfile::tempdir().unwrap();
        for header in [
            "dims = 4 4\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\ndata = v.raw\n",
            "dims = 4 4 2\nspacing_mm = 1 0 1\norigin_mm = 0 0 0\ndata = v.raw\n",
            "dims = 4 4 2\nspacing_mm = 1 -1 1\norigin_mm = 0 0 0\ndata = v.raw\n",
            "dims = 4 4 2\nspacing_mm = 1 1 1\ndata = v.raw\n",
            "dims = 4 4 2\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\ndata = v.raw\ncolor = red\n",
            "dims 4 4 2\n",
            "dims = 0 4 2\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\ndata = v.raw\n",
        ] {
            let h = write_pair(dir.path(), header, &[0u8; 64]);
            assert!(load_volume(&h).is_err(), "accepted: {header}");
        }
    }

    #[test]
    fn zero_volume_raw_is_16_zero_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let g = VolumeGeometry::isotropic([2, 2, 2], 1.0).unwrap();
        let h = dir.path().join("z.hdr");
        save_volume(&Volume::filled(g, 0), &h).unwrap();
        assert_eq!(fs::read(dir.path().join("z.raw")).unwrap(), vec![0u8; 16]);
    }

    #[test]
    fn full_size_raw_length() {
        let dir = tempfile::tempdir().unwrap();
        let g = VolumeGeometry::new([512, 512, 139], [0.43, 0.43, 1.0], [0.0; 3]).unwrap();
        let h = dir.path().join("big.hdr");
        save_volume(&Volume::filled(g, -1000), &h).unwrap();
        let len = fs::metadata(dir.path().join("big.raw")).unwrap().len();
        assert_eq!(len, 512 * 512 * 139 * 2);
    }

    #[test]
    fn clamps_out_of_range_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut raw = Vec::new();
        for v in [-2000i16, 0, 4000, 100] {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        let h = write_pair(
            dir.path(),
            "# comment\ndims = 2 2 1\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\ndata = v.raw\n",
            &raw,
        );
        let (v, clamped) = read_volume(&h).unwrap();
        assert_eq!(clamped, 2);
        assert_eq!(v.voxels(), &[HU_MIN, 0, HU_MAX, 100]);
    }

    #[test]
    fn new_rejects_out_of_range() {
        let g = VolumeGeometry::isotropic([2, 1, 1], 1.0).unwrap();
        assert!(Volume::new(g, vec![0, 5000]).is_err());
        assert!(Volume::new(g, vec![0]).is_err());
    }

    #[test]
    fn mapping_examples() {
        let unit = VolumeGeometry::isotropic([8, 8, 8], 1.0).unwrap();
        assert_eq!(unit.voxel_to_physical([7.0, 3.0, 2.0]), [7.0, 3.0, 2.0]);
        let ct = VolumeGeometry::new([200, 200, 100], [0.43, 0.43, 1.0], [0.0; 3]).unwrap();
        let p = ct.voxel_to_physical([100.0, 100.0, 50.0]);
        for (a, b) in p.iter().zip([43.0, 43.0, 50.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let shifted = VolumeGeometry::new([8, 8, 8], [1.0; 3], [-5.0, 0.0, 0.0]).unwrap();
        assert_eq!(shifted.voxel_to_physical([0.0; 3]), [-5.0, 0.0, 0.0]);
        assert_eq!(shifted.physical_to_voxel([-5.0, 0.0, 0.0]), [0.0; 3]);
        let two = VolumeGeometry::isotropic([8, 8, 8], 2.0).unwrap();
        assert_eq!(two.physical_to_voxel([1.0, 1.0, 1.0]), [0.5, 0.5, 0.5]);
        assert_eq!(ct.physical_to_voxel(ct.origin()), [0.0; 3]);
    }

    #[test]
    fn mapping_round_trip_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let spacing = [rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)];
            let origin = [rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0)];
            let g = VolumeGeometry::new([64, 64, 64], spacing, origin).unwrap();
            let p = [rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)];
            let back = g.voxel_to_physical(g.physical_to_voxel(p));
            for a in 0..3 {
                assert!((back[a] - p[a]).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn save_load_round_trip(
            dims in (1usize..6, 1usize..6, 1usize..6),
            spacing in (0.01f64..5.0, 0.01f64..5.0, 0.01f64..5.0),
            origin in (-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let g = VolumeGeometry::new(
                [dims.0, dims.1, dims.2],
                [spacing.0, spacing.1, spacing.2],
                [origin.0, origin.1, origin.2],
            ).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v = Volume::from_fn(g, |_, _, _| rng.gen_range(HU_MIN..=HU_MAX));
            let dir = tempfile::tempdir().unwrap();
            let h = dir.path().join("rt.hdr");
            save_volume(&v, &h).unwrap();
            let back = load_volume(&h).unwrap();
            prop_assert_eq!(back, v);
        }

        #[test]
        fn count_mismatch_always_rejected(n in 1usize..40, extra in 1usize..6, shorter in any::<bool>()) {
            let dir = tempfile::tempdir().unwrap();
            let bytes = if shorter { n * 2 - 1 } else { n * 2 + extra };
            let h = write_pair(
                dir.path(),
                &format!("dims = {n} 1 1\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\ndata = v.raw\n"),
                &vec![0u8; bytes],
            );
            let rejected = matches!(load_volume(&h), Err(VolumeError::SizeMismatch { .. }));
            prop_assert!(rejected);
        }
    }
}
