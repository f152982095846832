//! Run-directory plumbing: versioned trace CSVs, atomic writes, checkpoint
//! state, and the ownership lock.

use anyhow::{bail, Context, Result};
use std::fs;
use std::path::{Path, PathBuf};

pub const TRACE_VERSION: &str = "# qmask-trace v1";
pub const ANALYSIS_VERSION: &str = "# qmask-analysis v1";

pub const METRICS: &str = "metrics.csv";
pub const ENTROPY: &str = "entropy.csv";
pub const MAGNETIZATION: &str = "magnetization.csv";
pub const RHO: &str = "rho.csv";
pub const SCORES: &str = "scores.csv";
pub const SCORE_SAMPLES: &str = "scores_samples.csv";
pub const STATE: &str = "state.txt";
pub const SNAPSHOT: &str = "config.snapshot";
pub const LOCK: &str = "lock";
pub const TE_TABLE: &str = "te.csv";
pub const OINFO: &str = "oinfo.csv";
pub const SUMMARY: &str = "summary.txt";

/// Write via a temporary sibling and rename, so a crash never leaves a
/// half-written artifact in place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// One in-memory trace CSV: version line, header, data rows.
#[derive(Debug, Clone)]
pub struct Trace {
    pub header: String,
    pub rows: Vec<String>,
}

impl Trace {
    pub fn new(header: &str) -> Self {
        Self {
            header: header.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(32 * (self.rows.len() + 2));
        s.push_str(TRACE_VERSION);
        s.push('\n');
        s.push_str(&self.header);
        s.push('\n');
        for row in &self.rows {
            s.push_str(row);
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        write_atomic(&dir.join(name), &self.render())
    }

    /// Read back a trace, enforcing the version line and expected header.
    pub fn read(dir: &Path, name: &str, header: &str) -> Result<Self> {
        let path = dir.join(name);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        match lines.next() {
            Some(v) if v == TRACE_VERSION => {}
            Some(v) => bail!("{}: trace version `{v}`, expected `{TRACE_VERSION}`", name),
            None => bail!("{name}: empty trace file"),
        }
        match lines.next() {
            Some(h) if h == header => {}
            Some(h) => bail!("{name}: header `{h}`, expected `{header}`"),
            None => bail!("{name}: missing header"),
        }
        Ok(Self {
            header: header.to_string(),
            rows: lines.map(str::to_string).collect(),
        })
    }
}

/// Parse one CSV row into f64 fields.
pub fn fields(row: &str) -> Result<Vec<f64>> {
    row.split(',')
        .map(|f| f.trim().parse::<f64>().with_context(|| format!("bad field `{f}`")))
        .collect()
}

/// Training progress marker plus the model checkpoint.
pub struct RunState {
    pub completed_sweeps: usize,
    pub checkpoint: String,
}

impl RunState {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let body = format!("completed_sweeps = {}\n{}", self.completed_sweeps, self.checkpoint);
        write_atomic(&dir.join(STATE), &body)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(STATE);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let (first, rest) = text
            .split_once('\n')
            .context("state file missing checkpoint body")?;
        let completed = first
            .strip_prefix("completed_sweeps = ")
            .context("state file missing sweep marker")?
            .parse()?;
        Ok(Self {
            completed_sweeps: completed,
            checkpoint: rest.to_string(),
        })
    }
}

/// Exclusive ownership of a run directory for the lifetime of the guard.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path, take_over: bool) -> Result<Self> {
        let path = dir.join(LOCK);
        let fresh = fs::OpenOptions::new().write(true).create_new(true).open(&path);
        match fresh {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                if !take_over {
                    bail!(
                        "run directory {} is locked (stale lock from a crashed run? \
                         pass --resume to take over)",
                        dir.display()
                    );
                }
            }
            Err(e) => return Err(e).context("creating lock file"),
        }
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
