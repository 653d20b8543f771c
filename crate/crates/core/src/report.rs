//! Experiment report assembly: per-sector accuracy grids, shortlist gender
//! proportions, anonymization statistics and learning curves, emitted as
//! byte-deterministic CSV/JSON files under a fixed directory layout.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::anonymizer::AnonymizationStats;
use crate::corpus::Group;
use crate::exec::fnv1a64;
use crate::fairness::ShortlistReport;
use crate::scorer::LearningCurve;
use crate::{Error, Result};

/// One cell of the occupancy grid: anonymization configuration x entity set
/// x sector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct OccupancyKey {
    pub anonymizer: String,
    pub entity: String,
    pub sector: Group,
}

impl OccupancyKey {
    pub fn new(anonymizer: &str, entity: &str, sector: Group) -> Self {
        OccupancyKey {
            anonymizer: anonymizer.to_string(),
            entity: entity.to_string(),
            sector,
        }
    }
}

impl fmt::Display for OccupancyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.anonymizer, self.entity, self.sector.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ShortlistKey {
    pub anonymizer: String,
    pub entity: String,
}

impl ShortlistKey {
    pub fn new(anonymizer: &str, entity: &str) -> Self {
        ShortlistKey {
            anonymizer: anonymizer.to_string(),
            entity: entity.to_string(),
        }
    }
}

/// Round to four decimal places; accuracies are stored pre-rounded so the
/// emitted CSV reproduces the in-memory grid exactly on re-parse.
pub fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

/// Hex fingerprint of a canonical config serialization.
pub fn config_fingerprint(canonical: &[u8]) -> String {
    format!("{:016x}", fnv1a64(canonical))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub run_id: String,
    pub fingerprint: String,
    /// Rendered into the `transformer` column of the occupancy grid.
    pub embedder_name: String,
    pub occupancy: BTreeMap<OccupancyKey, f64>,
    pub shortlists: BTreeMap<ShortlistKey, ShortlistReport>,
    pub anonymization: BTreeMap<String, AnonymizationStats>,
    pub curves: BTreeMap<String, LearningCurve>,
}

impl ExperimentReport {
    pub fn new(run_id: &str, fingerprint: &str, embedder_name: &str) -> Self {
        ExperimentReport {
            run_id: run_id.to_string(),
            fingerprint: fingerprint.to_string(),
            embedder_name: embedder_name.to_string(),
            ..ExperimentReport::default()
        }
    }

    pub fn set_accuracy(&mut self, key: OccupancyKey, value: f64) {
        self.occupancy.insert(key, round4(value));
    }

    fn missing_cells(&self, expected: &[OccupancyKey]) -> Vec<String> {
        expected
            .iter()
            .filter(|k| !self.occupancy.contains_key(k))
            .map(|k| k.to_string())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    run_id: &'a str,
    fingerprint: &'a str,
    embedder: &'a str,
    files: Vec<String>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Emit the report files under `out_dir`: `occupancy.csv`, `shortlist.csv`
/// and `curves/*.csv` for CSV; `anonymization.json` and `manifest.json` for
/// JSON. Fails with the list of missing grid cells when `expected` is not
/// fully covered. Identical reports produce identical bytes.
pub fn emit_report(
    report: &ExperimentReport,
    expected: &[OccupancyKey],
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    let missing = report.missing_cells(expected);
    if !missing.is_empty() {
        return Err(Error::IncompleteResults { missing });
    }
    if expected.is_empty() && report.occupancy.is_empty() {
        return Err(Error::IncompleteResults {
            missing: vec!["<no grid cells requested or computed>".to_string()],
        });
    }

    let mut written = Vec::new();
    let mut emit = |path: PathBuf, contents: String| -> Result<()> {
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };

    if formats.contains(&ReportFormat::Csv) {
        let mut occupancy = String::from("transformer,anonymizer,entity,sector,accuracy\n");
        for (key, accuracy) in &report.occupancy {
            occupancy.push_str(&format!(
                "{},{},{},{},{:.4}\n",
                report.embedder_name,
                key.anonymizer,
                key.entity,
                key.sector.label(),
                accuracy
            ));
        }
        emit(out_dir.join("occupancy.csv"), occupancy)?;

        let mut shortlist = String::from("anonymizer,entity,male_pct,female_pct\n");
        for (key, summary) in &report.shortlists {
            shortlist.push_str(&format!(
                "{},{},{:.2},{:.2}\n",
                key.anonymizer,
                key.entity,
                100.0 * summary.male_fraction,
                100.0 * summary.female_fraction
            ));
        }
        emit(out_dir.join("shortlist.csv"), shortlist)?;

        for (label, curve) in &report.curves {
            emit(
                out_dir.join("curves").join(format!("{label}.csv")),
                curve.to_csv_string(),
            )?;
        }
    }

    if formats.contains(&ReportFormat::Json) {
        let stats = serde_json::to_string_pretty(&report.anonymization).map_err(|e| {
            Error::Format {
                path: out_dir.join("anonymization.json"),
                msg: e.to_string(),
            }
        })?;
        emit(out_dir.join("anonymization.json"), stats + "\n")?;

        for (key, summary) in &report.shortlists {
            let path = out_dir.join(format!("shortlist_{}_{}.json", key.anonymizer, key.entity));
            let json = serde_json::to_string_pretty(summary).map_err(|e| Error::Format {
                path: path.clone(),
                msg: e.to_string(),
            })?;
            emit(path, json + "\n")?;
        }
    }

    drop(emit);

    // Manifest last: it lists everything written before it.
    let mut files: Vec<String> = written
        .iter()
        .map(|p| {
            p.strip_prefix(out_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    files.sort();
    let manifest = Manifest {
        run_id: &report.run_id,
        fingerprint: &report.fingerprint,
        embedder: &report.embedder_name,
        files,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format {
        path: out_dir.join("manifest.json"),
        msg: e.to_string(),
    })?;
    let manifest_path = out_dir.join("manifest.json");
    write_file(&manifest_path, &(manifest_json + "\n"))?;
    written.push(manifest_path);

    Ok(written)
}

/// Parse an emitted occupancy CSV back into a grid.
pub fn parse_occupancy_csv(path: &Path) -> Result<(String, BTreeMap<OccupancyKey, f64>)> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == "transformer,anonymizer,entity,sector,accuracy" => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "unexpected occupancy CSV header".into(),
            })
        }
    }
    let mut embedder = String::new();
    let mut grid = BTreeMap::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        if parts.len() != 5 {
            return Err(err(format!("expected 5 columns, got {}", parts.len())));
        }
        embedder = parts[0].to_string();
        let sector = match parts[3] {
            "O1" => Group::O1,
            "O2" => Group::O2,
            "O3" => Group::O3,
            "O4" => Group::O4,
            other => return Err(err(format!("unknown sector '{other}'"))),
        };
        let accuracy: f64 = parts[4]
            .parse()
            .map_err(|e| err(format!("bad accuracy: {e}")))?;
        grid.insert(OccupancyKey::new(parts[1], parts[2], sector), accuracy);
    }
    Ok((embedder, grid))
}
