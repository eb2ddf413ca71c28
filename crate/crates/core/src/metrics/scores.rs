use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use super::table::{Table, TableError};

/// Largest sample size (after dropping zero differences) for which the
/// automatic method enumerates the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

/// Reported means more than this far from the count-derived mean are flagged.
pub const MEAN_DIVERGENCE: f64 = 0.05;

/// Tally of one observer's 1–5 scores for one reconstruction condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    pub observer: String,
    pub condition: String,
    /// `counts[s - 1]` cases received score `s`.
    pub counts: [u32; 5],
}

impl ScoreTable {
    pub fn new(observer: impl Into<String>, condition: impl Into<String>, counts: [u32; 5]) -> Result<Self, String> {
        let t = Self {
            observer: observer.into(),
            condition: condition.into(),
            counts,
        };
        if t.total() == 0 {
            return Err(format!("{} / {}: no scores", t.observer, t.condition));
        }
        Ok(t)
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub n: u32,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    /// Cases scored 3 or higher.
    pub viable: u32,
    pub viable_fraction: f64,
}

pub fn score_summary(t: &ScoreTable) -> ScoreSummary {
    let n = t.total();
    let nf = n as f64;
    let weighted = |f: &dyn Fn(f64) -> f64| {
        t.counts
            .iter()
            .enumerate()
            .map(|(s, &c)| c as f64 * f((s + 1) as f64))
            .sum::<f64>()
    };
    let mean = weighted(&|s| s) / nf;
    let var = weighted(&|s| (s - mean) * (s - mean)) / nf;
    let viable = t.counts[2..].iter().sum();
    ScoreSummary {
        n,
        mean,
        sd: var.sqrt(),
        viable,
        viable_fraction: viable as f64 / nf,
    }
}

/// One row of a score file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub table: ScoreTable,
    /// Mean stated alongside the tally by its source, if any.
    pub reported_mean: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreReportRow {
    #[serde(flatten)]
    pub table: ScoreTable,
    #[serde(flatten)]
    pub summary: ScoreSummary,
    pub reported_mean: Option<f64>,
    /// `|reported_mean − mean| > MEAN_DIVERGENCE`.
    pub mean_diverges: bool,
}

pub fn score_report(records: &[ScoreRecord]) -> Vec<ScoreReportRow> {
    records
        .iter()
        .map(|r| {
            let summary = score_summary(&r.table);
            ScoreReportRow {
                table: r.table.clone(),
                summary,
                reported_mean: r.reported_mean,
                mean_diverges: r
                    .reported_mean
                    .is_some_and(|m| (m - summary.mean).abs() > MEAN_DIVERGENCE),
            }
        })
        .collect()
}

pub fn format_score_report(rows: &[ScoreReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:<18} {:>4} {:>6} {:>6} {:>14} {:>9}",
        "observer", "condition", "n", "mean", "sd", "viable (>=3)", "reported"
    );
    for r in rows {
        let viable = format!("{}/{} {:.1}%", r.summary.viable, r.summary.n, 100.0 * r.summary.viable_fraction);
        let reported = r.reported_mean.map_or("-".to_string(), |m| format!("{m:.2}"));
        let _ = write!(
            s,
            "{:<10} {:<18} {:>4} {:>6.3} {:>6.3} {:>14} {:>9}",
            r.table.observer, r.table.condition, r.summary.n, r.summary.mean, r.summary.sd, viable, reported
        );
        if r.mean_diverges {
            let _ = write!(s, "  DIVERGES from count-derived mean");
        }
        s.push('\n');
    }
    s
}

const SCORE_HEADER: [&str; 7] = ["observer", "condition", "n1", "n2", "n3", "n4", "n5"];

/// Reads `observer,condition,n1,..,n5[,reported_mean]` records.
pub fn read_score_tables(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>, TableError> {
    let t = Table::read(path.as_ref())?;
    let with_reported = t.header.len() == 8 && t.header[7] == "reported_mean";
    if with_reported {
        t.expect_header(&[&SCORE_HEADER[..], &["reported_mean"]].concat())?;
    } else {
        t.expect_header(&SCORE_HEADER)?;
    }
    let mut out = Vec::new();
    for (line, f) in &t.rows {
        t.expect_width(*line, f)?;
        let mut counts = [0u32; 5];
        for (s, c) in counts.iter_mut().enumerate() {
            *c = t.parse(*line, f, s + 2)?;
        }
        let table = ScoreTable::new(f[0].clone(), f[1].clone(), counts).map_err(|e| t.line_error(*line, e))?;
        let reported_mean = match f.get(7).map(String::as_str) {
            None | Some("") | Some("-") => None,
            Some(_) => Some(t.parse(*line, f, 7)?),
        };
        out.push(ScoreRecord { table, reported_mean });
    }
    if out.is_empty() {
        return Err(TableError::Empty { path: t.path });
    }
    Ok(out)
}

/// Per-case paired scores under two conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    pub x_label: String,
    pub y_label: String,
    pub case_ids: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Reads `case_id,<x>,<y>` records; the header names the two conditions.
pub fn read_paired_scores(path: impl AsRef<Path>) -> Result<PairedScores, TableError> {
    let t = Table::read(path.as_ref())?;
    if t.header.len() != 3 || t.header[0] != "case_id" {
        return Err(TableError::Header {
            path: t.path.clone(),
            message: format!("expected `case_id,<x>,<y>`, found `{}`", t.header.join(",")),
        });
    }
    let mut p = PairedScores {
        x_label: t.header[1].clone(),
        y_label: t.header[2].clone(),
        case_ids: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
    };
    for (line, f) in &t.rows {
        t.expect_width(*line, f)?;
        p.case_ids.push(f[0].clone());
        p.x.push(t.parse(*line, f, 1)?);
        p.y.push(t.parse(*line, f, 2)?);
    }
    if p.x.is_empty() {
        return Err(TableError::Empty { path: t.path });
    }
    Ok(p)
}

#[derive(Debug, Error, PartialEq)]
pub enum WilcoxonError {
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no pairs")]
    Empty,
    #[error("non-finite value at pair {0}")]
    NonFinite(usize),
    #[error("every pair is equal; the test is undefined")]
    AllZeroDifferences,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    /// Exact for small samples, normal approximation otherwise.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Pairs with a non-zero difference.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(w_plus, w_minus)`.
    pub statistic: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Ranks of `|d|` with ties sharing their average rank, doubled so they stay
/// integral.
fn doubled_ranks(abs: &[f64]) -> (Vec<u64>, f64) {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && abs[order[end]] == abs[order[start]] {
            end += 1;
        }
        // Average of ranks start+1..=end, doubled.
        let r2 = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = r2;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    (ranks, tie_term)
}

/// `P(W⁺ ≤ w)` under the null, by counting sign assignments.
fn exact_cdf(ranks2: &[u64], w2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut dist = vec![0.0f64; total as usize + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let p = dist[s];
            if p != 0.0 {
                dist[s + r] += p;
            }
        }
        reach += r;
    }
    let scale = 0.5f64.powi(ranks2.len() as i32);
    dist[..=(w2.min(total) as usize)].iter().sum::<f64>() * scale
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, WilcoxonError> {
    wilcoxon_signed_rank_with(x, y, WilcoxonMethod::Auto)
}

/// Two-sided Wilcoxon signed-rank test on `x − y`.
///
/// Zero differences are dropped. The normal approximation uses the
/// tie-corrected variance and a continuity correction of 0.5.
pub fn wilcoxon_signed_rank_with(
    x: &[f64],
    y: &[f64],
    method: WilcoxonMethod,
) -> Result<WilcoxonResult, WilcoxonError> {
    if x.len() != y.len() {
        return Err(WilcoxonError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(WilcoxonError::Empty);
    }
    let mut d = Vec::with_capacity(x.len());
    for (i, (a, b)) in x.iter().zip(y).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(WilcoxonError::NonFinite(i));
        }
        if a != b {
            d.push(a - b);
        }
    }
    if d.is_empty() {
        return Err(WilcoxonError::AllZeroDifferences);
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks2, tie_term) = doubled_ranks(&abs);
    let plus2: u64 = d.iter().zip(&ranks2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = ranks2.iter().sum();
    let minus2 = total2 - plus2;
    let w2 = plus2.min(minus2);
    let method = match method {
        WilcoxonMethod::Auto if n <= EXACT_MAX_N => WilcoxonMethod::Exact,
        WilcoxonMethod::Auto => WilcoxonMethod::Normal,
        m => m,
    };
    let p = match method {
        WilcoxonMethod::Exact => 2.0 * exact_cdf(&ranks2, w2),
        _ => {
            let nf = n as f64;
            let mean = nf * (nf + 1.0) / 4.0;
            let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
            let w = w2 as f64 / 2.0;
            let z = ((w - mean + 0.5) / var.sqrt()).min(0.0);
            2.0 * Normal::standard().cdf(z)
        }
    };
    Ok(WilcoxonResult {
        n,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        statistic: w2 as f64 / 2.0,
        p_value: p.min(1.0),
        method,
    })
}
