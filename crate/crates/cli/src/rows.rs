//! Long-format result rows, the results file and its manifest.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wbt_core::convergence::Curve;
use wbt_core::stats::{mean_se, median, MeanSe};

use crate::error::{CliError, CliResult};

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// One statistic of one experiment. Monte Carlo rows carry their standard
/// error; exact rows carry `se = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub n: Option<u64>,
    pub j: Option<usize>,
    pub rep: Option<usize>,
    pub statistic: String,
    pub value: f64,
    pub se: f64,
    pub note: String,
}

impl ResultRow {
    fn sort_key(&self) -> (&str, &str, Option<u64>, Option<usize>, Option<usize>) {
        (&self.experiment, &self.statistic, self.n, self.j, self.rep)
    }
}

/// Note values used across experiments.
pub const EXACT: &str = "exact";
pub const MC: &str = "mc";

/// Collects the rows of one experiment.
#[derive(Debug)]
pub struct RowSink {
    id: String,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct At {
    pub n: Option<u64>,
    pub j: Option<usize>,
    pub rep: Option<usize>,
}

impl At {
    pub fn n(n: u64) -> Self {
        Self { n: Some(n), ..Self::default() }
    }

    pub fn j(j: usize) -> Self {
        Self { j: Some(j), ..Self::default() }
    }

    pub fn nj(n: u64, j: usize) -> Self {
        Self { n: Some(n), j: Some(j), rep: None }
    }
}

/// Normal-theory factor relating the SE of a median to that of a mean.
const MEDIAN_SE_FACTOR: f64 = 1.253_314_137_315_500_3;

impl RowSink {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_owned(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, at: At, statistic: &str, value: f64, se: f64, note: &str) {
        self.rows.push(ResultRow {
            experiment: self.id.clone(),
            n: at.n,
            j: at.j,
            rep: at.rep,
            statistic: statistic.to_owned(),
            value,
            se,
            note: note.to_owned(),
        });
    }

    pub fn exact(&mut self, at: At, statistic: &str, value: f64) {
        self.push(at, statistic, value, 0.0, EXACT);
    }

    pub fn flag(&mut self, at: At, statistic: &str, value: bool) {
        self.exact(at, statistic, if value { 1.0 } else { 0.0 });
    }

    pub fn mean(&mut self, at: At, statistic: &str, m: MeanSe, note: &str) {
        self.push(at, statistic, m.mean, m.se, note);
    }

    /// Per-replication values (se = their standard deviation) followed by
    /// `_mean` and `_median` aggregates.
    pub fn replications(&mut self, at: At, statistic: &str, values: &[f64]) {
        let m = mean_se(values);
        let sd = m.se * (values.len() as f64).sqrt();
        for (r, &v) in values.iter().enumerate() {
            self.push(At { rep: Some(r), ..at }, statistic, v, sd, MC);
        }
        self.push(at, &format!("{statistic}_mean"), m.mean, m.se, MC);
        self.push(at, &format!("{statistic}_median"), median(values), MEDIAN_SE_FACTOR * m.se, MC);
    }

    /// Every grid point of a curve, its same-law baseline and the trend
    /// verdict.
    pub fn curve(&mut self, statistic: &str, curve: &Curve) -> CliResult<()> {
        self.points(statistic, curve);
        if !curve.baseline.is_empty() {
            self.replications(At::default(), &format!("{statistic}_baseline"), &curve.baseline);
        }
        let t = curve.trend()?;
        self.flag(At::default(), &format!("{statistic}_trend_pass"), t.passed());
        Ok(())
    }

    /// Grid points only, without baseline or verdict.
    pub fn points(&mut self, statistic: &str, curve: &Curve) {
        for p in &curve.points {
            self.replications(At::nj(p.n, p.level), statistic, &p.reps);
        }
    }

    /// Medians strictly decreasing along the grid.
    pub fn strictly_decreasing(&mut self, statistic: &str, curve: &Curve) {
        let med: Vec<f64> = curve.points.iter().map(|p| p.median()).collect();
        let ok = med.windows(2).all(|w| w[1] < w[0]);
        self.flag(At::default(), &format!("{statistic}_strictly_decreasing"), ok);
    }
}

/// Serializes rows as CSV with a header line. Fails on non-finite values.
pub fn to_csv(rows: &[ResultRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        if !r.value.is_finite() || !r.se.is_finite() {
            return Err(CliError::Results(format!(
                "{} {} (n {:?}, j {:?}, rep {:?}) is not finite: {} +- {}",
                r.experiment, r.statistic, r.n, r.j, r.rep, r.value, r.se
            )));
        }
        w.serialize(r).map_err(|e| CliError::Results(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Results(e.to_string()))
}

pub fn read_csv(path: &Path) -> CliResult<Vec<ResultRow>> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_csv(&bytes)
}

pub fn parse_csv(bytes: &[u8]) -> CliResult<Vec<ResultRow>> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Results(format!("row {}: {e}", i + 1))))
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the rows in canonical order, independent of the order they were
/// written in.
pub fn canonical_hash(rows: &[ResultRow]) -> CliResult<String> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let owned: Vec<ResultRow> = sorted.into_iter().cloned().collect();
    Ok(sha256_hex(&to_csv(&owned)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub experiments: Vec<String>,
    pub rows: usize,
    pub results_sha256: String,
}

/// Writes `results.csv` and `manifest.toml` into `dir`.
pub fn write_outputs(dir: &Path, rows: &[ResultRow], manifest_base: Manifest) -> CliResult<Manifest> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = to_csv(rows)?;
    let manifest = Manifest {
        rows: rows.len(),
        results_sha256: canonical_hash(rows)?,
        ..manifest_base
    };
    let results = dir.join(RESULTS_FILE);
    std::fs::File::create(&results)
        .and_then(|mut f| f.write_all(&csv))
        .map_err(io(&results))?;
    let text = toml::to_string(&manifest).map_err(|e| CliError::Results(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}
