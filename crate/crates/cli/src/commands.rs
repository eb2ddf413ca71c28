use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use omline::detections::{read_detection_records, read_detections, read_ground_truth, write_detections, write_ground_truth};
use omline::dicom::read_series_dir;
use omline::io::write_atomic;
use omline::landmarks::{identify_landmarks, write_landmark_report, CoordinateSpace, LandmarkSet};
use omline::metrics::{
    efficiency_rows, format_efficiency_table, format_eval_report, format_score_report, mean_average_precision,
    read_models, read_paired_scores, read_score_tables, score_report, wilcoxon_signed_rank_with, write_curve_csv,
};
use omline::orientation::{compute_angles, plausibility_check, EulerAngles};
use omline::phantom::{classical_detect, generate_phantom, write_truth_manifest, DetectorConfig, PhantomSpec};
use omline::reformat::{extract_isosurface, standardize_with, write_mesh_obj, StandardizeOptions};
use omline::volume::{load_volume, raw_path_for, save_volume, Volume};

use crate::failure::Failure;
use crate::manifest::{Angles, RunManifest, Stopwatch};
use crate::{DetectArgs, IdentifyArgs, PhantomArgs, ReconstructArgs, ScoresArgs, SelectionArgs, StandardizeArgs};

type Outcome = Result<(), Failure>;

fn space(sel: &SelectionArgs) -> CoordinateSpace {
    if sel.index_space {
        CoordinateSpace::Index
    } else {
        CoordinateSpace::Physical
    }
}

fn write_text(path: &Path, text: &str) -> Outcome {
    write_atomic(path, |w| w.write_all(text.as_bytes()))?;
    Ok(())
}

fn print_angles(a: &EulerAngles) {
    let [r, p, y] = a.to_degrees();
    println!("roll {r:.2} pitch {p:.2} yaw {y:.2}");
}

pub fn dicom_import(dir: &Path, out: &Path) -> Outcome {
    let (v, clamped) = read_series_dir(dir)?;
    if clamped > 0 {
        log::warn!("clamped {clamped} voxels into the HU range");
    }
    save_volume(&v, out)?;
    let [nx, ny, nz] = v.dims();
    println!("{} x {} x {} voxels -> {}", nx, ny, nz, out.display());
    Ok(())
}

pub fn phantom_gen(a: &PhantomArgs) -> Outcome {
    let mut spec = PhantomSpec::with_size(a.size).with_tilt(EulerAngles::from_degrees(a.roll, a.pitch, a.yaw));
    spec.case_id = a.case_id.clone();
    let (v, truth, boxes) = generate_phantom(&spec)?;
    fs::create_dir_all(&a.out)?;
    save_volume(&v, a.out.join("phantom.hdr"))?;
    write_atomic(a.out.join("truth.txt"), |w| write_truth_manifest(w, &spec, &truth))?;
    write_ground_truth(&boxes, a.out.join("ground_truth.csv"))?;
    println!("wrote phantom.hdr, truth.txt and ground_truth.csv to {}", a.out.display());
    Ok(())
}

pub fn detect_classic(a: &DetectArgs) -> Outcome {
    let v = load_volume(&a.classic)?;
    let [sx, sy, _] = v.geometry().spacing();
    let px = (sx * sy).sqrt();
    let mut cfg = DetectorConfig::default();
    cfg.case_id = match &a.case_id {
        Some(id) => id.clone(),
        None => a
            .classic
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "case".into()),
    };
    cfg.eye_radius_px = a.eye_radius_mm / px;
    cfg.eac_radius_px = a.eac_radius_mm / px;
    let set = classical_detect(&v, &cfg);
    write_detections(&set, &a.out)?;
    println!("{} detections -> {}", set.len(), a.out.display());
    Ok(())
}

fn select(volume: &Volume, detections: &Path, sel: &SelectionArgs) -> Result<(LandmarkSet, EulerAngles), Failure> {
    let set = read_detections(detections)?;
    let landmarks = identify_landmarks(&set, volume.geometry(), sel.min_confidence)?;
    let angles = compute_angles(&landmarks, space(sel))?;
    Ok((landmarks, angles))
}

pub fn identify(a: &IdentifyArgs) -> Outcome {
    let v = load_volume(&a.volume)?;
    let (landmarks, angles) = select(&v, &a.detections, &a.selection)?;
    for w in plausibility_check(&angles, a.selection.max_angle_deg).messages() {
        log::warn!("implausible head pose: {w}");
    }
    let mut report = Vec::new();
    write_landmark_report(&mut report, &landmarks, Some(&angles))?;
    if let Some(out) = &a.out {
        write_atomic(out, |w| w.write_all(&report))?;
    }
    std::io::stdout().write_all(&report)?;
    print_angles(&angles);
    Ok(())
}

pub fn standardize(a: &StandardizeArgs) -> Outcome {
    let mut clock = Stopwatch::start();
    let v = load_volume(&a.volume)?;
    clock.lap("load");
    let (landmarks, angles) = select(&v, &a.detections, &a.selection)?;
    clock.lap("identify");
    let threads = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let opts = StandardizeOptions {
        threads,
        max_angle_deg: a.selection.max_angle_deg,
        ..StandardizeOptions::default()
    };
    let out = standardize_with(&v, &angles, &opts)?;
    clock.lap("resample");

    fs::create_dir_all(&a.out_dir)?;
    let volume_path = a.out_dir.join("standardized.hdr");
    let report_path = a.out_dir.join("landmarks.csv");
    save_volume(&out.volume, &volume_path)?;
    write_atomic(&report_path, |w| write_landmark_report(w, &landmarks, Some(&angles)))?;
    clock.lap("write");

    let [roll, pitch, yaw] = angles.to_degrees();
    let manifest = RunManifest {
        tool: "omline",
        version: env!("CARGO_PKG_VERSION"),
        case_id: landmarks.case_id.clone(),
        volume: a.volume.clone(),
        detections: a.detections.clone(),
        min_confidence: a.selection.min_confidence,
        coordinate_space: space(&a.selection),
        max_angle_deg: a.selection.max_angle_deg,
        threads,
        angles_deg: Angles { roll, pitch, yaw },
        landmarks,
        warnings: out.plausibility.messages().to_vec(),
        outputs: vec![volume_path.clone(), raw_path_for(&volume_path), report_path],
        stages: clock.stages,
    };
    manifest.write(&a.out_dir.join("manifest.json"))?;
    print_angles(&angles);
    println!("standardized volume -> {}", volume_path.display());
    Ok(())
}

pub fn reconstruct(a: &ReconstructArgs) -> Outcome {
    let v = load_volume(&a.volume)?;
    let mesh = extract_isosurface(&v, a.iso)?;
    write_mesh_obj(&mesh, &a.out)?;
    println!(
        "{} vertices, {} triangles -> {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        a.out.display()
    );
    Ok(())
}

pub fn eval_det(pred: &Path, gt: &Path, out_dir: &Path, iou: f64) -> Outcome {
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(Failure::Input(format!("IoU threshold {iou} outside (0, 1]")));
    }
    let preds = read_detection_records(pred)?;
    let gts = read_ground_truth(gt)?;
    let report = mean_average_precision(&preds, &gts, iou);
    let text = format_eval_report(&report);
    fs::create_dir_all(out_dir)?;
    for c in &report.per_class {
        let path: PathBuf = out_dir.join(format!("curve_{}.csv", c.class));
        write_atomic(&path, |w| write_curve_csv(w, &c.curve))?;
    }
    let json = serde_json::to_string_pretty(&report)?;
    write_text(&out_dir.join("report.json"), &format!("{json}\n"))?;
    write_text(&out_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn eval_efficiency(models: &Path) -> Outcome {
    let rows = efficiency_rows(&read_models(models)?);
    print!("{}", format_efficiency_table(&rows));
    Ok(())
}

pub fn eval_scores(a: &ScoresArgs) -> Outcome {
    if let Some(path) = &a.tables {
        let rows = score_report(&read_score_tables(path)?);
        print!("{}", format_score_report(&rows));
    }
    if let Some(path) = &a.paired {
        let p = read_paired_scores(path)?;
        let r = wilcoxon_signed_rank_with(&p.x, &p.y, a.method.into())?;
        println!(
            "wilcoxon {} vs {}: n={} W+={:.1} W-={:.1} W={:.1} p={:.4} ({:?})",
            p.x_label, p.y_label, r.n, r.w_plus, r.w_minus, r.statistic, r.p_value, r.method
        );
    }
    Ok(())
}
