use std::path::{Path, PathBuf};
use std::time::Instant;

use omline::landmarks::{CoordinateSpace, LandmarkSet};
use serde::Serialize;

use crate::failure::Failure;

#[derive(Debug, Serialize)]
pub struct Angles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

#[derive(Debug, Serialize)]
pub struct StageTime {
    pub stage: &'static str,
    pub seconds: f64,
}

/// Audit record of one `standardize` run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub case_id: String,
    pub volume: PathBuf,
    pub detections: PathBuf,
    pub min_confidence: f64,
    pub coordinate_space: CoordinateSpace,
    pub max_angle_deg: f64,
    pub threads: usize,
    pub angles_deg: Angles,
    pub landmarks: LandmarkSet,
    pub warnings: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub stages: Vec<StageTime>,
}

impl RunManifest {
    /// Fails if a referenced path is missing.
    pub fn check_paths(&self) -> Result<(), Failure> {
        let all = [&self.volume, &self.detections].into_iter().chain(&self.outputs);
        for p in all {
            if !p.exists() {
                return Err(Failure::Input(format!("manifest refers to missing file {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        self.check_paths()?;
        let json = serde_json::to_string_pretty(self)?;
        omline::io::write_atomic(path, |w| writeln!(w, "{json}"))?;
        Ok(())
    }
}

/// Wall-clock stage timer.
pub struct Stopwatch {
    last: Instant,
    pub stages: Vec<StageTime>,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            last: Instant::now(),
            stages: Vec::new(),
        }
    }

    pub fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.stages.push(StageTime {
            stage,
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}
