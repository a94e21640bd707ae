//! CSV/JSON emission and CSV reading for `rate`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::experiment::ExperimentSummary;
use crate::HarnessError;

pub const SUMMARY_HEADER: &str = "k,mean_delta,q_delta,hp_envelope,expected_bound";

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.16e}"),
        None => "nan".into(),
    }
}

/// Summary curve with 17 significant digits; missing values are `nan`.
pub fn write_summary_csv<W: Write>(summary: &ExperimentSummary, out: &mut W) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for c in &summary.curve {
        writeln!(
            out,
            "{},{},{},{},{}",
            c.k,
            cell(Some(c.mean_delta)),
            cell(c.q_delta),
            cell(c.hp_envelope),
            cell(c.expected_bound)
        )?;
    }
    Ok(())
}

pub fn summary_csv(summary: &ExperimentSummary) -> String {
    let mut buf = Vec::new();
    write_summary_csv(summary, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn summary_json(summary: &ExperimentSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary is serializable");
    s.push('\n');
    s
}

/// Creates the directory `path` lives in.
pub fn create_parent(path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Writes the configured CSV and JSON files.
pub fn emit(summary: &ExperimentSummary, csv: Option<&Path>, json: Option<&Path>) -> Result<(), HarnessError> {
    if let Some(p) = csv {
        write_file(p, summary_csv(summary).as_bytes())?;
    }
    if let Some(p) = json {
        write_file(p, summary_json(summary).as_bytes())?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    write_file(path, text.as_bytes())
}

/// `(k, value)` pairs of `column` from a CSV with a `k` column; rows whose
/// value is `nan` are skipped.
pub fn read_curve(text: &str, column: &str) -> Result<(Vec<usize>, Vec<f64>), HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| HarnessError::Csv(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Csv(format!("no column \"{name}\" in header {:?}", headers.iter().collect::<Vec<_>>())))
    };
    let (ki, vi) = (find("k")?, find(column)?);
    let mut ks = Vec::new();
    let mut vs = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Csv(e.to_string()))?;
        let bad = |what: &str| HarnessError::Csv(format!("row {}: bad {what}", line + 2));
        let k: usize = rec.get(ki).ok_or_else(|| bad("k"))?.parse().map_err(|_| bad("k"))?;
        let v: f64 = rec.get(vi).ok_or_else(|| bad(column))?.parse().map_err(|_| bad(column))?;
        if v.is_nan() {
            continue;
        }
        ks.push(k);
        vs.push(v);
    }
    Ok((ks, vs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::experiment::run_experiment;

    fn small() -> ExperimentSummary {
        let cfg = ExperimentConfig::from_toml(
            "horizon = 60\ntrials = 20\nseed = 1\n[problem]\nkind = \"quadratic\"\ncurvatures = [1.0, 2.0]\nchain_states = 3\noffset_scale = 0.5\n[schedule]\nk0 = 10\n",
        )
        .unwrap();
        run_experiment(&cfg, 1).unwrap()
    }

    #[test]
    fn empty_summary_is_header_only() {
        let mut s = small();
        s.curve.clear();
        assert_eq!(summary_csv(&s), format!("{SUMMARY_HEADER}\n"));
    }

    #[test]
    fn csv_format_and_reread() {
        let s = small();
        let text = summary_csv(&s);
        let row = text.lines().nth(2).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0], "1");
        // d.ddddddddddddddddde±x: 17 significant digits.
        let mantissa = fields[1].split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").trim_start_matches('-').len(), 17);
        let (ks, vs) = read_curve(&text, "mean_delta").unwrap();
        assert_eq!(ks, s.curve.iter().map(|c| c.k).collect::<Vec<_>>());
        for (v, c) in vs.iter().zip(&s.curve) {
            assert_eq!(*v, c.mean_delta);
        }
        assert!(read_curve(&text, "missing").is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = small();
        let back: ExperimentSummary = serde_json::from_str(&summary_json(&s)).unwrap();
        assert_eq!(back, s);
    }
}
