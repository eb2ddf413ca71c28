use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;

use crate::detections::{DetectionRecord, GroundTruthBox, LandmarkClass, Rect};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Intersection over union; 0 for disjoint or zero-area boxes.
pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Predictions of `class` in ranking order: descending confidence, ties
/// broken by case, slice, then box center.
fn ranked<'a>(preds: &'a [DetectionRecord], class: LandmarkClass) -> Vec<&'a DetectionRecord> {
    let mut v: Vec<_> = preds.iter().filter(|p| p.class == class).collect();
    v.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.case_id.cmp(&b.case_id))
            .then(a.slice_index.cmp(&b.slice_index))
            .then(a.cx.total_cmp(&b.cx))
            .then(a.cy.total_cmp(&b.cy))
    });
    v
}

/// Greedy matching in ranking order. Returns `(confidence, is_tp)` per
/// ranked prediction and the ground-truth count for the class.
fn match_ranked(
    preds: &[DetectionRecord],
    gts: &[GroundTruthBox],
    class: LandmarkClass,
    iou_threshold: f64,
) -> (Vec<(f64, bool)>, usize) {
    let mut pool: HashMap<(&str, usize), Vec<(Rect, bool)>> = HashMap::new();
    let mut total = 0;
    for g in gts.iter().filter(|g| g.class == class) {
        pool.entry((g.case_id.as_str(), g.slice_index))
            .or_default()
            .push((g.rect(), false));
        total += 1;
    }
    let outcomes = ranked(preds, class)
        .into_iter()
        .map(|p| {
            let r = p.rect();
            let mut best: Option<(usize, f64)> = None;
            if let Some(cands) = pool.get_mut(&(p.case_id.as_str(), p.slice_index)) {
                for (n, (g, used)) in cands.iter().enumerate() {
                    if *used {
                        continue;
                    }
                    let o = iou(&r, g);
                    if o >= iou_threshold && best.map_or(true, |(_, b)| o > b) {
                        best = Some((n, o));
                    }
                }
                if let Some((n, _)) = best {
                    cands[n].1 = true;
                }
            }
            (p.confidence, best.is_some())
        })
        .collect();
    (outcomes, total)
}

fn ap_from_matches(outcomes: &[(f64, bool)], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let precision: Vec<f64> = outcomes
        .iter()
        .enumerate()
        .map(|(k, &(_, hit))| {
            tp += hit as usize;
            tp as f64 / (k + 1) as f64
        })
        .collect();
    let mut envelope = precision;
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    // Each true positive raises recall by 1/total.
    let sum: f64 = outcomes
        .iter()
        .zip(&envelope)
        .filter(|((_, hit), _)| *hit)
        .map(|(_, &p)| p)
        .sum();
    sum / total as f64
}

/// All-points interpolated average precision for one class.
pub fn average_precision(
    preds: &[DetectionRecord],
    gts: &[GroundTruthBox],
    class: LandmarkClass,
    iou_threshold: f64,
) -> f64 {
    let (outcomes, total) = match_ranked(preds, gts, class, iou_threshold);
    ap_from_matches(&outcomes, total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_count: usize,
}

/// Thresholds 0.01, 0.02, ..., 0.99.
pub fn curve_thresholds() -> impl Iterator<Item = f64> {
    (1..=99).map(|k| k as f64 / 100.0)
}

fn curve_from_matches(outcomes: &[(f64, bool)], total: usize) -> Vec<CurvePoint> {
    curve_thresholds()
        .map(|t| {
            // Ranking is by confidence, so the kept set is a prefix and its
            // greedy matches are the prefix of the full matching.
            let kept = outcomes.iter().take_while(|(c, _)| *c >= t);
            let (n, tp) = kept.fold((0, 0), |(n, tp), (_, hit)| (n + 1, tp + *hit as usize));
            let precision = if n == 0 { 1.0 } else { tp as f64 / n as f64 };
            let recall = if total == 0 { 0.0 } else { tp as f64 / total as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            CurvePoint {
                threshold: t,
                precision,
                recall,
                f1,
                tp,
                fp: n - tp,
                fn_count: total - tp,
            }
        })
        .collect()
}

/// Precision, recall and F1 at each of [`curve_thresholds`].
pub fn pr_f1_curves(
    preds: &[DetectionRecord],
    gts: &[GroundTruthBox],
    class: LandmarkClass,
    iou_threshold: f64,
) -> Vec<CurvePoint> {
    let (outcomes, total) = match_ranked(preds, gts, class, iou_threshold);
    curve_from_matches(&outcomes, total)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: LandmarkClass,
    pub ap: f64,
    pub ground_truths: usize,
    pub predictions: usize,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    /// One entry per class, in [`LandmarkClass::ALL`] order.
    pub per_class: Vec<ClassReport>,
    pub map: f64,
}

impl EvalReport {
    pub fn class(&self, class: LandmarkClass) -> &ClassReport {
        &self.per_class[class.index()]
    }

    pub fn per_class_ap(&self) -> [f64; 4] {
        LandmarkClass::ALL.map(|c| self.class(c).ap)
    }

    /// The curve point at `threshold` (to the nearest hundredth).
    pub fn at_threshold(&self, class: LandmarkClass, threshold: f64) -> Option<&CurvePoint> {
        self.class(class)
            .curve
            .iter()
            .find(|p| (p.threshold - threshold).abs() < 5e-3)
    }
}

/// Per-class AP and curves, and their unweighted mean.
pub fn mean_average_precision(preds: &[DetectionRecord], gts: &[GroundTruthBox], iou_threshold: f64) -> EvalReport {
    let per_class: Vec<ClassReport> = LandmarkClass::ALL
        .iter()
        .map(|&class| {
            let (outcomes, total) = match_ranked(preds, gts, class, iou_threshold);
            ClassReport {
                class,
                ap: ap_from_matches(&outcomes, total),
                ground_truths: total,
                predictions: outcomes.len(),
                curve: curve_from_matches(&outcomes, total),
            }
        })
        .collect();
    let map = per_class.iter().map(|c| c.ap).sum::<f64>() / 4.0;
    EvalReport {
        iou_threshold,
        per_class,
        map,
    }
}

/// Human-readable summary: AP per class, mAP, and the 0.5 working point.
pub fn format_eval_report(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "IoU threshold {:.2}", r.iou_threshold);
    let _ = writeln!(s, "{:<10} {:>6} {:>6} {:>8} {:>9} {:>8} {:>8}", "class", "gt", "pred", "AP", "P@0.5", "R@0.5", "F1@0.5");
    for c in &r.per_class {
        let p = r.at_threshold(c.class, 0.5).expect("0.5 is on the threshold grid");
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>6} {:>8.4} {:>9.4} {:>8.4} {:>8.4}",
            c.class.as_str(),
            c.ground_truths,
            c.predictions,
            c.ap,
            p.precision,
            p.recall,
            p.f1
        );
    }
    let _ = writeln!(s, "mAP {:.4}", r.map);
    s
}

pub fn write_curve_csv<W: Write + ?Sized>(w: &mut W, curve: &[CurvePoint]) -> io::Result<()> {
    writeln!(w, "threshold,precision,recall,f1")?;
    for p in curve {
        writeln!(w, "{:.2},{:.6},{:.6},{:.6}", p.threshold, p.precision, p.recall, p.f1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
        }
    }

    fn pred(class: LandmarkClass, cx: f64, cy: f64, conf: f64) -> DetectionRecord {
        DetectionRecord {
            case_id: "c".into(),
            slice_index: 3,
            class,
            cx,
            cy,
            box_size: 10.0,
            confidence: conf,
        }
    }

    fn gt(class: LandmarkClass, cx: f64, cy: f64) -> GroundTruthBox {
        GroundTruthBox {
            case_id: "c".into(),
            slice_index: 3,
            class,
            x_min: cx - 5.0,
            y_min: cy - 5.0,
            x_max: cx + 5.0,
            y_max: cy + 5.0,
        }
    }

    const EYE: LandmarkClass = LandmarkClass::LeftEye;

    #[test]
    fn iou_examples() {
        let a = rect(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &rect(5.0, 0.0, 15.0, 10.0)), 50.0 / 150.0);
        assert_eq!(iou(&a, &rect(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(iou(&a, &rect(10.0, 0.0, 20.0, 10.0)), 0.0);
    }

    #[test]
    fn ap_examples() {
        let gts = [gt(EYE, 50.0, 50.0)];
        let preds = [pred(EYE, 50.0, 50.0, 0.9), pred(EYE, 200.0, 50.0, 0.8)];
        assert_eq!(average_precision(&preds, &gts, EYE, 0.5), 1.0);

        assert_eq!(average_precision(&preds[1..], &gts, EYE, 0.5), 0.0);

        let gts = [gt(EYE, 50.0, 50.0), gt(EYE, 100.0, 50.0)];
        let preds = [
            pred(EYE, 50.0, 50.0, 0.9),
            pred(EYE, 200.0, 50.0, 0.8),
            pred(EYE, 100.0, 50.0, 0.7),
        ];
        let ap = average_precision(&preds, &gts, EYE, 0.5);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15, "{ap}");
    }

    #[test]
    fn ap_without_ground_truth_is_zero() {
        assert_eq!(average_precision(&[pred(EYE, 1.0, 1.0, 0.5)], &[], EYE, 0.5), 0.0);
        assert_eq!(average_precision(&[], &[], EYE, 0.5), 0.0);
    }

    #[test]
    fn matching_respects_slice_and_class() {
        let gts = [gt(EYE, 50.0, 50.0)];
        let mut p = pred(EYE, 50.0, 50.0, 0.9);
        p.slice_index = 4;
        assert_eq!(average_precision(&[p], &gts, EYE, 0.5), 0.0);
        let p = pred(LandmarkClass::RightEye, 50.0, 50.0, 0.9);
        assert_eq!(average_precision(&[p], &gts, EYE, 0.5), 0.0);
    }

    #[test]
    fn duplicate_prediction_is_false_positive() {
        let gts = [gt(EYE, 50.0, 50.0)];
        let preds = [pred(EYE, 50.0, 50.0, 0.9), pred(EYE, 51.0, 50.0, 0.95)];
        let curve = pr_f1_curves(&preds, &gts, EYE, 0.5);
        let p = &curve[49];
        assert_eq!((p.tp, p.fp, p.fn_count), (1, 1, 0));
        assert_eq!(average_precision(&preds, &gts, EYE, 0.5), 1.0);
    }

    #[test]
    fn curve_examples() {
        let gts = [gt(EYE, 50.0, 50.0)];
        let preds = [pred(EYE, 50.0, 50.0, 0.9), pred(EYE, 200.0, 50.0, 0.8)];
        let curve = pr_f1_curves(&preds, &gts, EYE, 0.5);
        assert_eq!(curve.len(), 99);
        let p = &curve[49];
        assert_eq!(p.threshold, 0.5);
        assert_eq!((p.precision, p.recall), (0.5, 1.0));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);

        let last = curve.last().unwrap();
        assert_eq!((last.precision, last.recall, last.f1), (1.0, 0.0, 0.0));
        assert!(curve.windows(2).all(|w| w[1].recall <= w[0].recall));
    }

    #[test]
    fn report_mean() {
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for c in LandmarkClass::ALL {
            preds.push(pred(c, 50.0, 50.0, 0.9));
            gts.push(gt(c, 50.0, 50.0));
        }
        let r = mean_average_precision(&preds, &gts, 0.5);
        assert_eq!(r.map, 1.0);
        let r = mean_average_precision(&preds[..1], &gts, 0.5);
        assert_eq!(r.per_class_ap(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.map, 0.25);
        let text = format_eval_report(&r);
        assert!(text.contains("mAP 0.2500"));
    }
}
