//! Human-readable aggregation of a results file plus x/y series for
//! plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::rows::{canonical_hash, ResultRow};

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub text: String,
    /// Series files written (empty when no output directory was given).
    pub series: Vec<PathBuf>,
    pub rows_sha256: Option<String>,
}

/// Series are aggregate rows (no `rep`) indexed by n or j.
fn series_key(r: &ResultRow) -> Option<f64> {
    if r.rep.is_some() {
        return None;
    }
    r.n.map(|n| n as f64).or(r.j.map(|j| j as f64))
}

type Groups<'a> = BTreeMap<&'a str, BTreeMap<&'a str, Vec<&'a ResultRow>>>;

pub fn summarize(rows: &[ResultRow], out: Option<&Path>) -> CliResult<Summary> {
    if rows.is_empty() {
        return Ok(Summary {
            text: "no rows\n".into(),
            series: Vec::new(),
            rows_sha256: None,
        });
    }
    let mut groups: Groups<'_> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.experiment).or_default().entry(&r.statistic).or_default().push(r);
    }
    let mut text = String::new();
    let mut series = Vec::new();
    for (exp, stats) in &groups {
        let _ = writeln!(text, "== {exp}");
        if let Some(pass) = stats.get("pass") {
            pass_matrix(&mut text, stats, pass);
        }
        for (stat, rs) in stats {
            if stat.ends_with("_median") {
                median_curve(&mut text, stats, stat, rs);
            }
        }
        for (stat, rs) in stats {
            let by_level: Vec<&&ResultRow> = rs.iter().filter(|r| r.n.is_none() && r.rep.is_none() && r.j.is_some()).collect();
            if by_level.len() > 1 && !stats.contains_key("pass") {
                let _ = writeln!(text, "  {stat} by j:");
                for r in by_level {
                    let _ = writeln!(text, "    j = {:>4}: {}{}", r.j.unwrap_or(0), r.value, se_suffix(r));
                }
            }
        }
        for (stat, rs) in stats {
            if rs.len() == 1 && rs[0].n.is_none() && rs[0].rep.is_none() {
                let r = rs[0];
                let j = r.j.map(|j| format!(" (j = {j})")).unwrap_or_default();
                let _ = writeln!(text, "  {stat}{j} = {}{}", r.value, se_suffix(r));
            }
        }
        if let Some(dir) = out {
            for (stat, rs) in stats {
                let mut pts: Vec<(f64, &ResultRow)> = rs.iter().filter_map(|r| series_key(r).map(|x| (x, *r))).collect();
                if pts.len() < 2 {
                    continue;
                }
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                series.push(write_series(dir, exp, stat, &pts)?);
            }
        }
    }
    let hash = canonical_hash(rows)?;
    let _ = writeln!(text, "rows: {}  sha256 (canonical order): {hash}", rows.len());
    Ok(Summary {
        text,
        series,
        rows_sha256: Some(hash),
    })
}

fn se_suffix(r: &ResultRow) -> String {
    if r.se > 0.0 {
        format!(" +- {}", r.se)
    } else {
        String::new()
    }
}

fn by_j<'a>(stats: &BTreeMap<&str, Vec<&'a ResultRow>>, stat: &str) -> BTreeMap<Option<usize>, &'a ResultRow> {
    stats
        .get(stat)
        .map(|rs| rs.iter().map(|r| (r.j, *r)).collect())
        .unwrap_or_default()
}

fn pass_matrix(text: &mut String, stats: &BTreeMap<&str, Vec<&ResultRow>>, pass: &[&ResultRow]) {
    let gap = by_j(stats, "gap");
    let stmt = by_j(stats, "bound_statement");
    let proof = by_j(stats, "bound_proof");
    let passed = pass.iter().filter(|r| r.value == 1.0).count();
    let _ = writeln!(text, "  certification: {passed}/{} levels pass", pass.len());
    let _ = writeln!(text, "  {:>4}  {:>14}  {:>14}  {:>14}  result", "j", "gap", "bound_stmt", "bound_proof");
    let mut rows: Vec<&&ResultRow> = pass.iter().collect();
    rows.sort_by_key(|r| r.j);
    for r in rows {
        let v = |m: &BTreeMap<Option<usize>, &ResultRow>| m.get(&r.j).map_or(f64::NAN, |x| x.value);
        let _ = writeln!(
            text,
            "  {:>4}  {:>14.6e}  {:>14.6e}  {:>14.6e}  {}",
            r.j.map_or("-".into(), |j| j.to_string()),
            v(&gap),
            v(&stmt),
            v(&proof),
            if r.value == 1.0 { "pass" } else { "FAIL" }
        );
    }
}

fn median_curve(text: &mut String, stats: &BTreeMap<&str, Vec<&ResultRow>>, stat: &str, rs: &[&ResultRow]) {
    if stat.ends_with("_baseline_median") || rs.iter().all(|r| r.n.is_none()) {
        return;
    }
    let base = stat.trim_end_matches("_median");
    let baseline = stats.get(format!("{base}_baseline_median").as_str()).and_then(|b| b.first());
    let _ = writeln!(text, "  {stat} by n:");
    let mut sorted: Vec<&&ResultRow> = rs.iter().collect();
    sorted.sort_by_key(|r| r.n);
    for r in sorted {
        let level = r.j.map(|j| format!(" (level {j})")).unwrap_or_default();
        let _ = writeln!(text, "    n = {:>10}{level}: {:.6e}", r.n.unwrap_or(0), r.value);
    }
    if let Some(b) = baseline {
        let _ = writeln!(text, "    baseline: {:.6e}", b.value);
    }
    if let Some(t) = stats.get(format!("{base}_trend_pass").as_str()).and_then(|t| t.first()) {
        let _ = writeln!(text, "    trend: {}", if t.value == 1.0 { "pass" } else { "FAIL" });
    }
}

fn write_series(dir: &Path, exp: &str, stat: &str, pts: &[(f64, &ResultRow)]) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let path = dir.join(format!("{exp}__{stat}.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Results(e.to_string()))?;
    let res: csv::Result<()> = (|| {
        w.write_record(["x", "y", "se"])?;
        for (x, r) in pts {
            w.write_record([x.to_string(), r.value.to_string(), r.se.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| CliError::Results(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rows::{At, RowSink};

    #[test]
    fn empty_results_say_so() {
        assert_eq!(summarize(&[], None).unwrap().text, "no rows\n");
    }

    #[test]
    fn certification_matrix_counts_passes() {
        let mut s = RowSink::new("cert");
        for j in 1..=3 {
            s.push(At::j(j), "gap", 0.1, 0.0, "exact");
            s.exact(At::j(j), "bound_statement", 0.2);
            s.exact(At::j(j), "bound_proof", 0.2);
            s.flag(At::j(j), "pass", j != 2);
        }
        let text = summarize(&s.rows, None).unwrap().text;
        assert!(text.contains("2/3 levels pass"), "{text}");
        assert!(text.contains("FAIL"));
    }

    #[test]
    fn curves_get_series_and_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = RowSink::new("conv");
        s.replications(At::nj(10, 1), "d1", &[0.4, 0.5]);
        s.replications(At::nj(100, 1), "d1", &[0.1, 0.2]);
        s.replications(At::default(), "d1_baseline", &[0.05, 0.07]);
        let sum = summarize(&s.rows, Some(dir.path())).unwrap();
        assert!(sum.text.contains("baseline: 6.000000e-2"), "{}", sum.text);
        let median = dir.path().join("conv__d1_median.csv");
        assert!(sum.series.contains(&median));
        let body = std::fs::read_to_string(median).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "x,y,se");
        assert!(lines[1].starts_with("10,0.45,") && lines[2].starts_with("100,0.15"));
    }
}
