//! Report assembly and all-or-nothing file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use tempfile::NamedTempFile;

use caplab_core::report::{ExperimentReport, Status};

/// A CSV table kept as strings so formatting is fixed at assembly time.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// One row per check record.
    pub fn from_checks(report: &ExperimentReport) -> Self {
        let mut t = Table::new(["name", "lhs", "rhs", "margin", "tolerance", "status"]);
        for c in &report.checks {
            t.push(vec![
                c.name.clone(),
                num(c.lhs),
                num(c.rhs),
                num(c.margin),
                num(c.tolerance),
                status_str(c.status).into(),
            ]);
        }
        t
    }

    pub fn to_bytes(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
    }
}

/// Round-trip exact, fixed formatting.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn status_str(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::HypothesisNotMet => "hypothesis-not-met",
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshStats {
    pub label: String,
    pub dim: usize,
    pub h: f64,
    pub shape: Vec<usize>,
    pub active_cells: usize,
    pub volume: f64,
}

impl MeshStats {
    pub fn of(label: impl Into<String>, d: &caplab_core::domain::GridDomain) -> Self {
        MeshStats {
            label: label.into(),
            dim: d.dim(),
            h: d.spacing(),
            shape: d.shape().to_vec(),
            active_cells: d.active_count(),
            volume: d.volume(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub hypothesis_not_met: usize,
}

impl Summary {
    pub fn of(r: &ExperimentReport) -> Self {
        Summary {
            pass: r.count(Status::Pass),
            fail: r.count(Status::Fail),
            hypothesis_not_met: r.count(Status::HypothesisNotMet),
        }
    }
}

/// Files of one run, written together.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file to a temporary sibling first and renames only once
    /// all of them are on disk.
    pub fn commit(self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let mut tmp = NamedTempFile::new_in(dir)
                .with_context(|| format!("cannot stage {name} in {}", dir.display()))?;
            tmp.write_all(&bytes)?;
            tmp.as_file().sync_all()?;
            staged.push((tmp, dir.join(name)));
        }
        let mut done = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            tmp.persist(&path)
                .with_context(|| format!("cannot write {}", path.display()))?;
            done.push(path);
        }
        Ok(done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use caplab_core::report::CheckRecord;

    #[test]
    fn csv_and_commit() {
        let mut r = ExperimentReport::new("t");
        r.push(CheckRecord::le("a,b", 1.0, 2.0, 0.0));
        let bytes = Table::from_checks(&r).to_bytes().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "\"a,b\",1e0,2e0,1e0,0e0,pass");
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outputs::default();
        o.add("x.csv", bytes.clone());
        let paths = o.commit(&dir.path().join("sub")).unwrap();
        assert_eq!(std::fs::read(&paths[0]).unwrap(), bytes);
        // Only the committed file remains.
        assert_eq!(std::fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }
}
