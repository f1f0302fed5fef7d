//! Plain-text tables and long-format CSV for the evaluation commands.

use std::fmt::Write as _;
use std::path::Path;

use mpc_warmstart::planner::{ClosedLoopRow, OpenLoopRow};
use mpc_warmstart::Result;
use sha2::{Digest, Sha256};

/// Digest of the settings that determine a report. Inputs are hashed by
/// content, so the same data under another path gives the same hash.
pub struct ConfigHash(Sha256);

impl ConfigHash {
    pub fn new() -> Self {
        ConfigHash(Sha256::new())
    }

    pub fn field(mut self, key: &str, value: &str) -> Self {
        self.0.update(format!("{key}={value}\n").as_bytes());
        self
    }

    pub fn file(self, key: &str, path: &Path) -> Result<Self> {
        let digest = hex::encode(Sha256::digest(std::fs::read(path)?));
        Ok(self.field(key, &digest))
    }

    pub fn optional_file(self, key: &str, path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => self.file(key, p),
            None => Ok(self.field(key, "none")),
        }
    }

    /// First 16 hex digits.
    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())[..16].to_string()
    }
}

pub fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.9e}")).collect::<Vec<_>>().join(",")
}

fn pct(v: f64) -> String {
    if v.is_finite() {
        format!("{:.3}", 100.0 * v)
    } else {
        "n/a".to_string()
    }
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    line(&mut out, &widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in rows {
        line(&mut out, row);
    }
    out
}

/// Long-format CSV: one `config_hash,method,metric,value` row per number.
struct Csv {
    writer: csv::Writer<Vec<u8>>,
    hash: String,
}

impl Csv {
    fn new(hash: &str) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["config_hash", "method", "metric", "value"]).expect("in-memory write");
        Csv { writer, hash: hash.to_string() }
    }

    fn row(&mut self, method: &str, metric: &str, value: impl std::fmt::Display) {
        let value = value.to_string();
        self.writer.write_record([self.hash.as_str(), method, metric, value.as_str()]).expect("in-memory write");
    }

    fn finish(self) -> String {
        String::from_utf8(self.writer.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Returns the aligned table and the CSV.
pub fn open_loop(rows: &[OpenLoopRow], hash: &str) -> (String, String) {
    let mut cells = Vec::new();
    let mut csv = Csv::new(hash);
    for r in rows {
        let method = format!("{}/{}", r.init, r.criterion);
        cells.push(vec![
            r.init.to_string(),
            r.criterion.to_string(),
            r.records.to_string(),
            format!("{:.2} ({})", r.mean_iters, r.worst_iters),
            format!("{} ({})", pct(r.mean_sigma), pct(r.worst_sigma)),
            r.failures.to_string(),
        ]);
        csv.row(&method, "records", r.records);
        csv.row(&method, "mean_iters", format!("{:.6}", r.mean_iters));
        csv.row(&method, "worst_iters", r.worst_iters);
        csv.row(&method, "mean_sigma", format!("{:.9e}", r.mean_sigma));
        csv.row(&method, "worst_sigma", format!("{:.9e}", r.worst_sigma));
        csv.row(&method, "excluded", r.excluded);
        csv.row(&method, "failures", r.failures);
    }
    let mut table = format!("config {hash}\n");
    table += &render(&["init", "criterion", "records", "iterations mean (worst)", "sigma % mean (worst)", "failures"], &cells);
    (table, csv.finish())
}

pub fn closed_loop(rows: &[ClosedLoopRow], hash: &str) -> (String, String) {
    let mut cells = Vec::new();
    let mut csv = Csv::new(hash);
    for r in rows {
        let method = format!("{}/{}", r.init, r.criterion);
        cells.push(vec![
            r.init.to_string(),
            r.criterion.to_string(),
            r.trajectories.to_string(),
            format!("{:.2} ({})", r.mean_iters_first, r.worst_iters_first),
            format!("{:.2} ({})", r.mean_iters_rest, r.worst_iters_rest),
            format!("{} ({})", pct(r.mean_sigma), pct(r.worst_sigma)),
            r.reached_xf.to_string(),
            r.failures.to_string(),
        ]);
        csv.row(&method, "trajectories", r.trajectories);
        csv.row(&method, "mean_iters_first", format!("{:.6}", r.mean_iters_first));
        csv.row(&method, "worst_iters_first", r.worst_iters_first);
        csv.row(&method, "mean_iters_rest", format!("{:.6}", r.mean_iters_rest));
        csv.row(&method, "worst_iters_rest", r.worst_iters_rest);
        csv.row(&method, "mean_sigma", format!("{:.9e}", r.mean_sigma));
        csv.row(&method, "worst_sigma", format!("{:.9e}", r.worst_sigma));
        csv.row(&method, "reached_xf", r.reached_xf);
        csv.row(&method, "failures", r.failures);
        csv.row(&method, "max_violation", format!("{:.3e}", r.max_violation));
    }
    let mut table = format!("config {hash}\n");
    table += &render(
        &["init", "criterion", "runs", "iters t=0 mean (worst)", "iters t>0 mean (worst)", "sigma % mean (worst)", "reached Xf", "failures"],
        &cells,
    );
    (table, csv.finish())
}
