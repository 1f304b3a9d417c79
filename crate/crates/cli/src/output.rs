//! CSV emission with configured numeric precision.
//!
//! Schemas are fixed: `sweep.csv (a,b,lambda)`,
//! `hjb_grid.csv (x,u,u1,u2,residual)`,
//! `sim.csv (replication,mean,se,rate_la,rate_lb)`,
//! `abelian.csv (r,a_r,b_r,rv,dev_lambda,dev_a,dev_b)`,
//! `check.csv (check,value,witness_x,detail)`,
//! `path.csv (t,x,la,lb)`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Formats numbers to a fixed significant-digit count (scientific), so the
/// same run always produces byte-identical files.
#[derive(Debug, Clone, Copy)]
pub struct Precision(pub usize);

impl Precision {
    pub fn fmt(&self, v: f64) -> String {
        if v.is_nan() {
            return "nan".to_string();
        }
        format!("{:.*e}", self.0.saturating_sub(1), v)
    }
}

/// A CSV file under construction.
pub struct Csv {
    path: PathBuf,
    buf: String,
    precision: Precision,
    columns: usize,
}

impl Csv {
    pub fn create(dir: &Path, name: &str, header: &[&str], precision: Precision) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "{}", header.join(","));
        Self {
            path: dir.join(name),
            buf,
            precision,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.columns, "csv row width mismatch");
        let cells: Vec<String> = values.iter().map(|&v| self.precision.fmt(v)).collect();
        let _ = writeln!(self.buf, "{}", cells.join(","));
    }

    /// Row with a leading string cell (e.g. a replication label).
    pub fn labeled_row(&mut self, label: &str, values: &[f64]) {
        assert_eq!(values.len() + 1, self.columns, "csv row width mismatch");
        let mut cells = vec![label.to_string()];
        cells.extend(values.iter().map(|&v| self.precision.fmt(v)));
        let _ = writeln!(self.buf, "{}", cells.join(","));
    }

    pub fn write(self) -> std::io::Result<PathBuf> {
        let mut f = std::fs::File::create(&self.path)?;
        f.write_all(self.buf.as_bytes())?;
        Ok(self.path)
    }
}
