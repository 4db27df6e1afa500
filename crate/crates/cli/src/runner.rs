use std::fs;
use std::path::PathBuf;
use std::process::Command;

use deeprec::experiments::{GridRunner, RunJob, RunOutcome};
use deeprec::train::parse_metrics_csv;
use deeprec::{Error, Result};

use crate::EXIT_DIVERGED;

/// Runs each grid point as a `train` child process of the given executable.
pub struct ProcessRunner {
    exe: PathBuf,
}

impl ProcessRunner {
    pub fn current_exe() -> Result<Self> {
        Ok(ProcessRunner {
            exe: std::env::current_exe()?,
        })
    }
}

impl GridRunner for ProcessRunner {
    fn run(&self, job: &RunJob) -> Result<RunOutcome> {
        fs::create_dir_all(&job.run_dir)?;
        let output = Command::new(&self.exe).args(job.cli_args()).output()?;
        fs::write(job.run_dir.join("stderr.log"), &output.stderr)?;
        let history = match fs::read_to_string(job.metrics_path()) {
            Ok(text) => parse_metrics_csv(&text)?,
            Err(_) => Vec::new(),
        };
        let stderr = String::from_utf8_lossy(&output.stderr);
        let last_line = stderr
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("")
            .to_string();
        if output.status.code() == Some(EXIT_DIVERGED as i32) {
            return Err(Error::Diverged {
                epoch: history.last().map_or(0, |m| m.epoch),
                step: 0,
                reason: last_line,
                history,
            });
        }
        if !output.status.success() {
            return Err(Error::InvalidArgument(format!(
                "child run failed ({}): {last_line}",
                output.status
            )));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let parameters = stdout
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("parameters="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::InvalidArgument("child run did not report a parameter count".into()))?;
        Ok(RunOutcome { history, parameters })
    }
}
