//! The run manifest: what a command ran with, what it read, and what it
//! wrote, each with a checksum. Two runs of the same command agree on every
//! line except `wall_ms`, so idempotence is a one-line diff away.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use signseg::tensor::file_sha256;
use signseg::Result;

pub struct RunLog {
    command: String,
    seed: u64,
    threads: usize,
    config: String,
    started: Instant,
    /// (role, sha256, path) in registration order.
    files: Vec<(&'static str, String, String)>,
}

impl RunLog {
    pub fn new(command: &str, seed: u64, threads: usize, config_text: &str) -> Self {
        RunLog {
            command: command.to_string(),
            seed,
            threads,
            config: config_text.to_string(),
            started: Instant::now(),
            files: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha = file_sha256(path)?;
        self.files.push(("input", sha, path.display().to_string()));
        Ok(())
    }

    /// Register a finished artifact. Call after the file is fully written.
    pub fn output(&mut self, path: &Path) -> Result<()> {
        let sha = file_sha256(path)?;
        self.files.push(("output", sha, path.display().to_string()));
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format: 1");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "threads = {}", self.threads);
        for (role, sha, path) in &self.files {
            let _ = writeln!(out, "{} {} {}", role, sha, path);
        }
        let _ = writeln!(out, "config:");
        for line in self.config.lines() {
            let _ = writeln!(out, "  {}", line);
        }
        let _ = writeln!(out, "wall_ms = {}", self.started.elapsed().as_millis());
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("run.txt"), self.to_text())?;
        Ok(())
    }
}
