use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::table::{Table, TableError};

pub const MODEL_HEADER: [&str; 4] = ["name", "map", "gflops", "params_millions"];

/// Accuracy and cost of one detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub map: f64,
    /// Billions of floating-point operations per inference.
    pub gflops: f64,
    pub params_millions: f64,
}

impl ModelInfo {
    pub fn new(name: impl Into<String>, map: f64, gflops: f64, params_millions: f64) -> Result<Self, String> {
        let m = Self {
            name: name.into(),
            map,
            gflops,
            params_millions,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.map) {
            return Err(format!("{}: mAP {} outside [0, 1]", self.name, self.map));
        }
        if !(self.gflops > 0.0 && self.gflops.is_finite()) {
            return Err(format!("{}: GFLOPS must be positive, got {}", self.name, self.gflops));
        }
        if !(self.params_millions > 0.0 && self.params_millions.is_finite()) {
            return Err(format!(
                "{}: parameter count must be positive, got {}",
                self.name, self.params_millions
            ));
        }
        Ok(())
    }
}

/// mAP per million parameters.
pub fn pei(m: &ModelInfo) -> f64 {
    m.map / m.params_millions
}

/// mAP per GFLOP.
pub fn cpei(m: &ModelInfo) -> f64 {
    m.map / m.gflops
}

/// Reads `name,map,gflops,params_millions` records.
pub fn read_models(path: impl AsRef<Path>) -> Result<Vec<ModelInfo>, TableError> {
    let t = Table::read(path.as_ref())?;
    t.expect_header(&MODEL_HEADER)?;
    let mut out = Vec::new();
    for (line, f) in &t.rows {
        t.expect_width(*line, f)?;
        let m = ModelInfo {
            name: f[0].clone(),
            map: t.parse(*line, f, 1)?,
            gflops: t.parse(*line, f, 2)?,
            params_millions: t.parse(*line, f, 3)?,
        };
        m.validate().map_err(|e| t.line_error(*line, e))?;
        out.push(m);
    }
    if out.is_empty() {
        return Err(TableError::Empty { path: t.path });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyRow {
    #[serde(flatten)]
    pub model: ModelInfo,
    pub pei: f64,
    pub cpei: f64,
}

pub fn efficiency_rows(models: &[ModelInfo]) -> Vec<EfficiencyRow> {
    models
        .iter()
        .map(|m| EfficiencyRow {
            model: m.clone(),
            pei: pei(m),
            cpei: cpei(m),
        })
        .collect()
}

/// Note printed under the efficiency table.
///
/// The published efficiency table prints these quotients under each
/// other's headings; this table labels them by definition.
pub const COLUMN_NOTE: &str = "note: PEI = mAP / params (M), CPEI = mAP / GFLOPS. \
The published table has these two columns swapped \
(its PEI column holds mAP / GFLOPS and its CPEI column holds mAP / params).";

pub fn format_efficiency_table(rows: &[EfficiencyRow]) -> String {
    let width = rows.iter().map(|r| r.model.name.len()).max().unwrap_or(0).max(5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$} {:>7} {:>10} {:>11} {:>7} {:>7}",
        "model", "mAP", "GFLOPS", "params (M)", "PEI", "CPEI"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$} {:>7.4} {:>10.4} {:>11.4} {:>7.4} {:>7.4}",
            r.model.name, r.model.map, r.model.gflops, r.model.params_millions, r.pei, r.cpei
        );
    }
    let _ = writeln!(s, "{COLUMN_NOTE}");
    s
}
