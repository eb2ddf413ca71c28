use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::{PhantomSpec, AIR_HU, BONE_HU, EYE_HU, SOFT_TISSUE_HU};
use crate::detections::{DetectionRecord, DetectionSet, LandmarkClass};
use crate::volume::Volume;

/// Thresholds and expected sizes for [`classical_detect`].
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub case_id: String,
    /// Voxels above this belong to the head.
    pub head_min_hu: i16,
    /// Eye candidates: `lo <= v < hi`. A blob whose ring reaches `hi` borders
    /// bone and is not an eye.
    pub eye_band: (i16, i16),
    /// Ear-canal candidates: `v <= air_max_hu`.
    pub air_max_hu: i16,
    /// Ring voxels at or above this count as bone.
    pub bone_min_hu: i16,
    pub eye_radius_px: f64,
    pub eac_radius_px: f64,
    /// Width of the ring around a blob that is inspected and measured.
    pub ring_px: usize,
    /// Fraction of ring voxels that must be bone around an ear canal.
    pub ring_bone_fraction: f64,
    /// Blobs whose area is outside `[lo, hi]` times the expected area are dropped.
    pub size_ratio: (f64, f64),
    /// Power applied to the area ratio; high values let cross-section area,
    /// rather than shape noise, decide which slice scores best.
    pub size_exponent: i32,
    /// Detections scoring below this are not reported.
    pub min_confidence: f64,
    /// Values used to weight partial-volume voxels when measuring blobs.
    pub tissue_hu: i16,
    pub eye_hu: i16,
    pub air_hu: i16,
    pub bone_hu: i16,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::for_phantom(&PhantomSpec::default())
    }
}

impl DetectorConfig {
    pub fn for_phantom(spec: &PhantomSpec) -> Self {
        let px = (spec.spacing[0] * spec.spacing[1]).sqrt();
        Self {
            case_id: spec.case_id.clone(),
            head_min_hu: -500,
            eye_band: (250, 350),
            air_max_hu: -500,
            bone_min_hu: 500,
            eye_radius_px: spec.eyes[0].radius / px,
            eac_radius_px: spec.eacs[0].radius / px,
            ring_px: 2,
            ring_bone_fraction: 0.5,
            size_ratio: (0.2, 2.5),
            size_exponent: 4,
            min_confidence: 0.1,
            tissue_hu: SOFT_TISSUE_HU,
            eye_hu: EYE_HU,
            air_hu: AIR_HU,
            bone_hu: BONE_HU,
        }
    }
}

/// 8-connected components of `mask`; returns per-pixel labels (0 = none)
/// and the pixel lists of each component.
fn components(mask: &[bool], nx: usize, ny: usize) -> (Vec<u32>, Vec<Vec<usize>>) {
    let mut label = vec![0u32; mask.len()];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        let id = comps.len() as u32 + 1;
        let mut pixels = Vec::new();
        label[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            let (x, y) = ((p % nx) as isize, (p / nx) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (qx, qy) = (x + dx, y + dy);
                    if qx < 0 || qy < 0 || qx >= nx as isize || qy >= ny as isize {
                        continue;
                    }
                    let q = qy as usize * nx + qx as usize;
                    if mask[q] && label[q] == 0 {
                        label[q] = id;
                        queue.push_back(q);
                    }
                }
            }
        }
        comps.push(pixels);
    }
    (label, comps)
}

/// Pixels within Chebyshev distance `pad` of the component (excluding it).
fn ring(label: &[u32], id: u32, pixels: &[usize], nx: usize, ny: usize, pad: usize) -> Vec<usize> {
    let pad = pad as isize;
    let (mut x0, mut y0, mut x1, mut y1) = (isize::MAX, isize::MAX, isize::MIN, isize::MIN);
    for &p in pixels {
        let (x, y) = ((p % nx) as isize, (p / nx) as isize);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let mut out = Vec::new();
    for y in (y0 - pad).max(0)..=(y1 + pad).min(ny as isize - 1) {
        for x in (x0 - pad).max(0)..=(x1 + pad).min(nx as isize - 1) {
            let p = y as usize * nx + x as usize;
            if label[p] == id {
                continue;
            }
            let near = (-pad..=pad).any(|dy| {
                (-pad..=pad).any(|dx| {
                    let (qx, qy) = (x + dx, y + dy);
                    qx >= 0 && qy >= 0 && qx < nx as isize && qy < ny as isize && label[qy as usize * nx + qx as usize] == id
                })
            });
            if near {
                out.push(p);
            }
        }
    }
    out
}

/// Partial-volume weighted area, centroid and shape of a blob.
struct Blob {
    area: f64,
    cx: f64,
    cy: f64,
    circularity: f64,
}

fn measure(weighted: &[(usize, f64)], nx: usize) -> Option<Blob> {
    let area: f64 = weighted.iter().map(|w| w.1).sum();
    if area <= 0.0 {
        return None;
    }
    let xy = |p: usize| ((p % nx) as f64, (p / nx) as f64);
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(p, w) in weighted {
        let (x, y) = xy(p);
        sx += w * x;
        sy += w * y;
    }
    let (cx, cy) = (sx / area, sy / area);
    let (mut xx, mut yy, mut xy_) = (0.0, 0.0, 0.0);
    for &(p, w) in weighted {
        let (x, y) = xy(p);
        xx += w * (x - cx) * (x - cx);
        yy += w * (y - cy) * (y - cy);
        xy_ += w * (x - cx) * (y - cy);
    }
    // Each pixel is a unit square, which carries variance 1/12 per axis.
    let (xx, yy, xy_) = (xx / area + 1.0 / 12.0, yy / area + 1.0 / 12.0, xy_ / area);
    let mid = (xx + yy) / 2.0;
    let half = (((xx - yy) / 2.0).powi(2) + xy_ * xy_).sqrt();
    let (l1, l2) = (mid + half, (mid - half).max(0.0));
    let isotropy = l2 / l1;
    let compact = area / (4.0 * PI * (l1 * l2).sqrt());
    let circularity = if compact.is_finite() && compact > 0.0 {
        isotropy * compact.min(1.0 / compact)
    } else {
        0.0
    };
    Some(Blob {
        area,
        cx,
        cy,
        circularity,
    })
}

fn detect_slice(v: &Volume, k: usize, cfg: &DetectorConfig) -> Vec<DetectionRecord> {
    let [nx, ny, _] = v.dims();
    let s = v.slice(k);
    let mut out = Vec::new();

    let (mut hx, mut hn) = (0.0, 0usize);
    for (p, &val) in s.iter().enumerate() {
        if val > cfg.head_min_hu {
            hx += (p % nx) as f64;
            hn += 1;
        }
    }
    if hn == 0 {
        return out;
    }
    let midline = hx / hn as f64;

    let mut emit = |class_pair: (LandmarkClass, LandmarkClass), blob: Blob, expected: f64| {
        let size_match = (blob.area / expected).min(expected / blob.area).powi(cfg.size_exponent);
        let confidence = (blob.circularity * size_match).clamp(0.0, 1.0);
        if confidence < cfg.min_confidence {
            return;
        }
        let class = if blob.cx < midline { class_pair.0 } else { class_pair.1 };
        out.push(DetectionRecord {
            case_id: cfg.case_id.clone(),
            slice_index: k,
            class,
            cx: blob.cx,
            cy: blob.cy,
            box_size: 2.0 * (blob.area / PI).sqrt(),
            confidence,
        });
    };
    let in_size = |area: f64, expected: f64| area >= cfg.size_ratio.0 * expected && area <= cfg.size_ratio.1 * expected;

    // Eyes: bright blobs, measured against the surrounding soft tissue.
    let eye_expected = PI * cfg.eye_radius_px * cfg.eye_radius_px;
    let (lo, hi) = cfg.eye_band;
    let mask: Vec<bool> = s.iter().map(|&x| x >= lo && x < hi).collect();
    let (label, comps) = components(&mask, nx, ny);
    // Weights stay linear in the voxel value above soft tissue so the summed
    // area tracks the interpolated cross-section smoothly from slice to slice;
    // air near the skin is floored at zero.
    let (t, e) = (cfg.tissue_hu as f64, cfg.eye_hu as f64);
    let eye_weight = |x: i16| ((x as f64 - t) / (e - t)).max(0.0);
    for (n, pixels) in comps.iter().enumerate() {
        let mut weighted: Vec<(usize, f64)> = pixels.iter().map(|&p| (p, eye_weight(s[p]))).collect();
        let around = ring(&label, n as u32 + 1, pixels, nx, ny, cfg.ring_px);
        if around.iter().any(|&p| s[p] >= hi) {
            continue;
        }
        for p in around {
            if label[p] == 0 {
                weighted.push((p, eye_weight(s[p])));
            }
        }
        if let Some(blob) = measure(&weighted, nx) {
            if in_size(blob.area, eye_expected) {
                emit((LandmarkClass::LeftEye, LandmarkClass::RightEye), blob, eye_expected);
            }
        }
    }

    // Ear canals: enclosed air pockets ringed by bone.
    let eac_expected = PI * cfg.eac_radius_px * cfg.eac_radius_px;
    let mask: Vec<bool> = s.iter().map(|&x| x <= cfg.air_max_hu).collect();
    let (label, comps) = components(&mask, nx, ny);
    let (a, b) = (cfg.air_hu as f64, cfg.bone_hu as f64);
    for (n, pixels) in comps.iter().enumerate() {
        let touches_border = pixels.iter().any(|&p| {
            let (x, y) = (p % nx, p / nx);
            x == 0 || y == 0 || x == nx - 1 || y == ny - 1
        });
        if touches_border || pixels.len() as f64 > cfg.size_ratio.1 * eac_expected {
            continue;
        }
        let around = ring(&label, n as u32 + 1, pixels, nx, ny, cfg.ring_px);
        let bone = around.iter().filter(|&&p| s[p] >= cfg.bone_min_hu).count();
        if around.is_empty() || (bone as f64) < cfg.ring_bone_fraction * around.len() as f64 {
            continue;
        }
        let air_weight = |x: i16| (b - x as f64) / (b - a);
        let mut weighted: Vec<(usize, f64)> = pixels.iter().map(|&p| (p, air_weight(s[p]))).collect();
        weighted.extend(around.into_iter().map(|p| (p, air_weight(s[p]))));
        if let Some(blob) = measure(&weighted, nx) {
            if in_size(blob.area, eac_expected) {
                emit((LandmarkClass::LeftEac, LandmarkClass::RightEac), blob, eac_expected);
            }
        }
    }
    out
}

/// Finds eye and ear-canal candidates slice by slice.
///
/// Confidence is the blob's circularity times how closely its
/// partial-volume area matches the expected marker cross-section, so the
/// slice through a marker's center scores highest. Left and right are
/// assigned by which side of the head's centroid the blob falls on.
/// Records come out sorted by slice, class, then position.
pub fn classical_detect(v: &Volume, cfg: &DetectorConfig) -> DetectionSet {
    let nz = v.dims()[2];
    let mut records: Vec<DetectionRecord> = (0..nz)
        .into_par_iter()
        .flat_map_iter(|k| detect_slice(v, k, cfg))
        .collect();
    records.sort_by(|a, b| {
        a.slice_index
            .cmp(&b.slice_index)
            .then(a.class.cmp(&b.class))
            .then(a.cx.total_cmp(&b.cx))
            .then(a.cy.total_cmp(&b.cy))
    });
    DetectionSet {
        case_id: cfg.case_id.clone(),
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::generate_phantom;
    use crate::volume::VolumeGeometry;

    fn best(set: &DetectionSet, class: LandmarkClass) -> &DetectionRecord {
        set.records
            .iter()
            .filter(|r| r.class == class)
            .max_by(|a, b| a.confidence.total_cmp(&b.confidence).then(b.slice_index.cmp(&a.slice_index)))
            .expect("class detected")
    }

    #[test]
    fn finds_untilted_markers_on_their_slices() {
        let spec = PhantomSpec::default();
        let (v, truth, _) = generate_phantom(&spec).unwrap();
        let set = classical_detect(&v, &DetectorConfig::for_phantom(&spec));
        for (k, class) in LandmarkClass::ALL.iter().enumerate() {
            let r = best(&set, *class);
            let t = truth.voxel[k];
            assert!((r.slice_index as f64 - t[2]).abs() <= 1.0, "{class}: slice {}", r.slice_index);
            assert!((r.cx - t[0]).abs() < 0.5 && (r.cy - t[1]).abs() < 0.5, "{class}: {r:?}");
        }
        assert!(set.records.iter().all(|r| (0.0..=1.0).contains(&r.confidence)));
    }

    #[test]
    fn uniform_air_has_no_detections() {
        let g = VolumeGeometry::isotropic([32, 32, 8], 1.0).unwrap();
        let v = Volume::filled(g, -1000);
        assert!(classical_detect(&v, &DetectorConfig::default()).is_empty());
    }

    #[test]
    fn output_is_sorted_and_deterministic() {
        let spec = PhantomSpec::with_size(64);
        let (v, _, _) = generate_phantom(&spec).unwrap();
        let cfg = DetectorConfig::for_phantom(&spec);
        let a = classical_detect(&v, &cfg);
        assert_eq!(a, classical_detect(&v, &cfg));
        assert!(a.records.windows(2).all(|w| w[0].slice_index <= w[1].slice_index));
    }

    #[test]
    fn disc_measures_round() {
        let (nx, ny) = (40, 40);
        let mut pix = Vec::new();
        for y in 0..ny {
            for x in 0..nx {
                let d2 = (x as f64 - 20.0).powi(2) + (y as f64 - 18.0).powi(2);
                if d2 <= 64.0 {
                    pix.push((y * nx + x, 1.0));
                }
            }
        }
        let b = measure(&pix, nx).unwrap();
        assert!((b.cx - 20.0).abs() < 1e-9 && (b.cy - 18.0).abs() < 1e-9);
        assert!(b.circularity > 0.95, "{}", b.circularity);
    }
}
