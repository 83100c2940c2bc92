//! Report files: check tables, the criterion summary and the run manifest.
//! Every file is written to a temporary name and renamed into place.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::RunError;

/// Seventeen significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skip => "skip",
        }
    }
}

/// One row of a `check,name,value,bound,pass` table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub check: String,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub status: Status,
}

impl Check {
    /// `value ≤ bound`.
    pub fn at_most(check: &str, name: &str, value: f64, bound: f64) -> Self {
        Self::new(check, name, value, bound, value <= bound)
    }

    /// `value ≥ bound`.
    pub fn at_least(check: &str, name: &str, value: f64, bound: f64) -> Self {
        Self::new(check, name, value, bound, value >= bound)
    }

    pub fn new(check: &str, name: &str, value: f64, bound: f64, ok: bool) -> Self {
        Self { check: check.into(), name: name.into(), value, bound, status: Status::from_bool(ok) }
    }

    pub fn skipped(check: &str, name: &str) -> Self {
        Self { check: check.into(), name: name.into(), value: f64::NAN, bound: f64::NAN, status: Status::Skip }
    }
}

pub fn checks_csv(rows: &[Check]) -> String {
    let mut s = String::from("check,name,value,bound,pass\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.check,
            r.name,
            fmt_f64(r.value),
            fmt_f64(r.bound),
            r.status.as_str()
        ));
    }
    s
}

/// A summary line `criterion_id status value bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: String,
    pub status: Status,
    pub value: f64,
    pub bound: f64,
}

impl Criterion {
    pub fn new(id: &str, ok: bool, value: f64, bound: f64) -> Self {
        Self { id: id.into(), status: Status::from_bool(ok), value, bound }
    }

    /// Fold the listed check rows: fails if any row fails, and reports the
    /// first failing row (or the first row when all pass).
    pub fn from_checks(id: &str, rows: &[&Check]) -> Self {
        let failing = rows.iter().find(|r| r.status == Status::Fail);
        let shown = failing.or_else(|| rows.iter().find(|r| r.status == Status::Pass)).or(rows.first());
        match shown {
            Some(r) => Self {
                id: id.into(),
                status: if failing.is_some() {
                    Status::Fail
                } else if rows.iter().all(|r| r.status == Status::Skip) {
                    Status::Skip
                } else {
                    Status::Pass
                },
                value: r.value,
                bound: r.bound,
            },
            None => Self { id: id.into(), status: Status::Skip, value: f64::NAN, bound: f64::NAN },
        }
    }
}

pub fn summary_text(criteria: &[Criterion]) -> String {
    if criteria.is_empty() {
        return "no checks run\n".into();
    }
    criteria
        .iter()
        .map(|c| format!("{} {} {} {}\n", c.id, c.status.as_str(), fmt_f64(c.value), fmt_f64(c.bound)))
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory that remembers what it wrote, so a failed run can
/// remove its partial results.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// `(file name, sha256)` of everything written so far, in write order.
    pub fn inventory(&self) -> &[(String, String)] {
        &self.written
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", target.display()));
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            f.write_all(contents.as_bytes()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, &target).map_err(io)?;
        self.written.retain(|(n, _)| n != name);
        self.written.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(())
    }

    /// Delete every file this run wrote.
    pub fn discard(&mut self) {
        for (name, _) in self.written.drain(..) {
            let _ = fs::remove_file(self.dir.join(&name));
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
