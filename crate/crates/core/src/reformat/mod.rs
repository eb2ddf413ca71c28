//! Rigid reformatting of a volume about its center, and isosurface export.
//!
//! Resampling pulls: every output voxel center `p` reads the input at
//! `c + Rᵀ(p − c)` with trilinear interpolation, where `c` is the physical
//! grid center. The output keeps the input geometry; samples that land
//! outside the input grid take a fill value. Applying `R` this way turns
//! the content forward by `R`, so undoing a head pose `R` means resampling
//! with `Rᵀ`.

mod marching;
mod mesh;

pub use marching::extract_isosurface;
pub use mesh::{read_mesh_obj, write_mesh_obj, MeshError, TriangleMesh};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::orientation::{
    euler_to_matrix, plausibility_check, EulerAngles, Plausibility, RotationMatrix, DEFAULT_MAX_ANGLE_DEG,
};
use crate::volume::{Volume, HU_MAX, HU_MIN};

/// Background value for samples rotated in from outside the grid (air).
pub const DEFAULT_FILL_HU: i16 = -1000;

/// Sample positions this close to the grid boundary (in voxels) snap onto it.
const EDGE_SNAP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ReformatError {
    #[error("no cell straddles the threshold {0} HU")]
    EmptySurface(f64),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Maps output voxel indices to input voxel indices: `h + M (o − h)`.
struct IndexMap {
    m: Matrix3<f64>,
    half: Vector3<f64>,
}

impl IndexMap {
    fn new(v: &Volume, r: &RotationMatrix) -> Self {
        let g = v.geometry();
        let s = Matrix3::from_diagonal(&Vector3::from(g.spacing()));
        let s_inv = Matrix3::from_diagonal(&Vector3::from(g.spacing().map(|x| 1.0 / x)));
        let dims = g.dims();
        Self {
            m: s_inv * r.matrix().transpose() * s,
            half: Vector3::from(dims.map(|n| (n - 1) as f64 / 2.0)),
        }
    }

    #[inline]
    fn source(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let o = Vector3::new(i as f64, j as f64, k as f64) - self.half;
        let q = self.half + self.m * o;
        [q.x, q.y, q.z]
    }
}

/// Snaps `x` into `[0, n-1]` when within [`EDGE_SNAP`], else `None`.
#[inline]
fn snap(x: f64, n: usize) -> Option<f64> {
    let hi = (n - 1) as f64;
    if x >= -EDGE_SNAP && x <= hi + EDGE_SNAP {
        Some(x.clamp(0.0, hi))
    } else {
        None
    }
}

#[inline]
fn cell(x: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let i0 = (x.floor() as usize).min(n - 2);
    (i0, i0 + 1, x - i0 as f64)
}

/// Trilinear sample at a fractional index, or `None` outside the grid.
pub fn sample_trilinear(v: &Volume, idx: [f64; 3]) -> Option<f64> {
    let [nx, ny, nz] = v.dims();
    let x = snap(idx[0], nx)?;
    let y = snap(idx[1], ny)?;
    let z = snap(idx[2], nz)?;
    let (x0, x1, fx) = cell(x, nx);
    let (y0, y1, fy) = cell(y, ny);
    let (z0, z1, fz) = cell(z, nz);
    let g = |i, j, k| v.get(i, j, k) as f64;
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let c00 = lerp(g(x0, y0, z0), g(x1, y0, z0), fx);
    let c10 = lerp(g(x0, y1, z0), g(x1, y1, z0), fx);
    let c01 = lerp(g(x0, y0, z1), g(x1, y0, z1), fx);
    let c11 = lerp(g(x0, y1, z1), g(x1, y1, z1), fx);
    Some(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz))
}

fn resample_into(v: &Volume, map: &IndexMap, fill: i16, k: usize, out: &mut [i16]) {
    let [nx, ny, _] = v.dims();
    let (lo, hi) = (i16::MIN as f64, i16::MAX as f64);
    for j in 0..ny {
        for i in 0..nx {
            out[j * nx + i] = match sample_trilinear(v, map.source(i, j, k)) {
                Some(val) => val.round().clamp(lo, hi) as i16,
                None => fill,
            };
        }
    }
}

/// Resamples `v` turned by `r` about its center, on `threads` workers.
///
/// Work is split by output slice; every voxel is computed independently, so
/// the result is identical for any worker count.
pub fn resample_rotated_with_threads(
    v: &Volume,
    r: &RotationMatrix,
    fill: i16,
    threads: usize,
) -> Result<Volume, ReformatError> {
    let fill = fill.clamp(HU_MIN, HU_MAX);
    let map = IndexMap::new(v, r);
    let [nx, ny, _] = v.dims();
    let plane = nx * ny;
    let mut out = vec![0i16; v.voxels().len()];
    if threads <= 1 {
        for (k, chunk) in out.chunks_mut(plane).enumerate() {
            resample_into(v, &map, fill, k, chunk);
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| ReformatError::ThreadPool(e.to_string()))?;
        pool.install(|| {
            out.par_chunks_mut(plane)
                .enumerate()
                .for_each(|(k, chunk)| resample_into(v, &map, fill, k, chunk));
        });
    }
    Ok(Volume::from_raw_parts_unchecked(*v.geometry(), out))
}

/// Resamples `v` turned by `r` about its physical center, single-threaded.
pub fn resample_rotated(v: &Volume, r: &RotationMatrix, fill: i16) -> Volume {
    resample_rotated_with_threads(v, r, fill, 1).expect("single-threaded resampling cannot fail")
}

#[derive(Debug, Clone)]
pub struct StandardizeOptions {
    pub fill: i16,
    pub threads: usize,
    pub max_angle_deg: f64,
}

impl Default for StandardizeOptions {
    fn default() -> Self {
        Self {
            fill: DEFAULT_FILL_HU,
            threads: 1,
            max_angle_deg: DEFAULT_MAX_ANGLE_DEG,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub volume: Volume,
    pub plausibility: Plausibility,
}

/// Undoes the head pose `a`: resamples with the transpose of its rotation.
pub fn standardize_with(
    v: &Volume,
    a: &EulerAngles,
    opts: &StandardizeOptions,
) -> Result<Standardized, ReformatError> {
    let plausibility = plausibility_check(a, opts.max_angle_deg);
    for w in plausibility.messages() {
        log::warn!("implausible head pose: {w}");
    }
    let correction = euler_to_matrix(a).transpose();
    let volume = resample_rotated_with_threads(v, &correction, opts.fill, opts.threads)?;
    Ok(Standardized { volume, plausibility })
}

/// [`standardize_with`] using default options.
pub fn standardize(v: &Volume, a: &EulerAngles) -> Volume {
    standardize_with(v, a, &StandardizeOptions::default())
        .expect("single-threaded resampling cannot fail")
        .volume
}
