use serde::Serialize;
use thiserror::Error;

use crate::volume::Volume;

/// Dynamic range used for PSNR and SSIM: the 12-bit HU span.
pub const PEAK: f64 = 4095.0;
pub const SSIM_WINDOW: usize = 8;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch([usize; 3], [usize; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeSimilarity {
    pub mse: f64,
    /// Decibels; infinite for identical volumes.
    pub psnr: f64,
    pub mean_ssim: f64,
}

/// Summed-area tables of `a`, `a²`, `b`, `b²` and `ab` over one slice.
struct Integrals {
    w: usize,
    tables: [Vec<i64>; 5],
}

impl Integrals {
    fn new(a: &[i16], b: &[i16], nx: usize, ny: usize) -> Self {
        let w = nx + 1;
        let mut tables: [Vec<i64>; 5] = std::array::from_fn(|_| vec![0i64; w * (ny + 1)]);
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = (a[j * nx + i] as i64, b[j * nx + i] as i64);
                let vals = [x, x * x, y, y * y, x * y];
                let at = (j + 1) * w + i + 1;
                for (t, v) in tables.iter_mut().zip(vals) {
                    t[at] = v + t[at - 1] + t[at - w] - t[at - w - 1];
                }
            }
        }
        Self { w, tables }
    }

    fn window(&self, i0: usize, j0: usize, wx: usize, wy: usize) -> [f64; 5] {
        let w = self.w;
        let (i1, j1) = (i0 + wx, j0 + wy);
        self.tables.each_ref().map(|t| (t[j1 * w + i1] - t[j0 * w + i1] - t[j1 * w + i0] + t[j0 * w + i0]) as f64)
    }
}

/// Mean SSIM over all `8×8` windows of one slice (one window when the
/// slice is smaller than that).
pub fn slice_ssim(a: &[i16], b: &[i16], nx: usize, ny: usize) -> f64 {
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let ig = Integrals::new(a, b, nx, ny);
    let (wx, wy) = (SSIM_WINDOW.min(nx), SSIM_WINDOW.min(ny));
    let n = (wx * wy) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..=ny - wy {
        for i in 0..=nx - wx {
            let [sa, saa, sb, sbb, sab] = ig.window(i, j, wx, wy);
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// MSE and PSNR over all voxels, and SSIM averaged over axial slices.
pub fn volume_similarity(a: &Volume, b: &Volume) -> Result<VolumeSimilarity, SimilarityError> {
    if a.dims() != b.dims() {
        return Err(SimilarityError::DimensionMismatch(a.dims(), b.dims()));
    }
    let [nx, ny, nz] = a.dims();
    let sq: f64 = a
        .voxels()
        .iter()
        .zip(b.voxels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sq / a.voxels().len() as f64;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    };
    let mean_ssim = (0..nz).map(|k| slice_ssim(a.slice(k), b.slice(k), nx, ny)).sum::<f64>() / nz as f64;
    Ok(VolumeSimilarity { mse, psnr, mean_ssim })
}
