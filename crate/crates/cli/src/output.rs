//! Artifact files. Floats are written in shortest round-trip form, so
//! identical runs give identical bytes and every value reads back exactly.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use aoi_core::controlled::Sweep;
use aoi_core::AgeTrajectory;
use serde::Serialize;

pub const INSTANCE_FILE: &str = "instance.json";
pub const SOLUTION_FILE: &str = "solution.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const VALIDATE_FILE: &str = "validate.json";

pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn trajectory(&mut self, trajectory: &AgeTrajectory) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "age"])?;
        for &(t, age) in &trajectory.breakpoints {
            w.write_record([t.to_string(), age.to_string()])?;
        }
        let bytes = w.into_inner()?;
        self.write(TRAJECTORY_FILE, &bytes)
    }

    pub fn sweep(&mut self, sweep: &Sweep) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["N", "feasible", "d", "age"])?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &sweep.rows {
            w.write_record([row.n.to_string(), row.feasible().to_string(), cell(row.delay), cell(row.age)])?;
        }
        let bytes = w.into_inner()?;
        self.write(SWEEP_FILE, &bytes)
    }
}
