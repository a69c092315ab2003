//! CSV and JSON record files with an embedded run manifest.
//!
//! CSV files start with `# ` comment lines: a marker line followed by the
//! manifest as one line of JSON. JSON files are
//! `{"manifest": {...}, "records": [...]}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OsmosisError, Result};
use crate::harness::{ExperimentConfig, ExperimentRecord, SuiteKind};

pub const MANIFEST_MARKER: &str = "# osmosis-sim run manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}`; expected csv or json")),
        }
    }
}

/// Self-description of an output file: enough to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config_path: Option<String>,
    pub suite: SuiteKind,
    pub seed: u64,
    pub out: Option<String>,
    pub format: Format,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig, config_path: Option<String>, out: Option<String>, format: Format) -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_path,
            suite: config.suite.kind,
            seed: config.workload.seed,
            out,
            format,
            config,
        }
    }
}

#[derive(Serialize)]
struct JsonOutputRef<'a> {
    manifest: &'a RunManifest,
    records: &'a [ExperimentRecord],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonOutput {
    manifest: RunManifest,
    records: Vec<ExperimentRecord>,
}

fn malformed(e: impl fmt::Display) -> OsmosisError {
    OsmosisError::Malformed(e.to_string())
}

pub fn write_csv(manifest: &RunManifest, records: &[ExperimentRecord]) -> Result<String> {
    let json = serde_json::to_string(manifest).map_err(malformed)?;
    let mut out = format!("{MANIFEST_MARKER}\n# {json}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(malformed)?;
    }
    if records.is_empty() {
        w.write_record(crate::harness::CSV_HEADERS).map_err(malformed)?;
    }
    let body = w.into_inner().map_err(malformed)?;
    out.push_str(&String::from_utf8(body).map_err(malformed)?);
    Ok(out)
}

pub fn write_json(manifest: &RunManifest, records: &[ExperimentRecord]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&JsonOutputRef { manifest, records }).map_err(malformed)?;
    s.push('\n');
    Ok(s)
}

pub fn render(manifest: &RunManifest, records: &[ExperimentRecord]) -> Result<String> {
    match manifest.format {
        Format::Csv => write_csv(manifest, records),
        Format::Json => write_json(manifest, records),
    }
}

fn is_json(text: &str) -> bool {
    text.trim_start().starts_with('{')
}

/// Pulls the manifest out of a CSV or JSON output file.
pub fn extract_manifest(text: &str) -> Result<RunManifest> {
    if is_json(text) {
        let parsed: JsonOutput = serde_json::from_str(text).map_err(malformed)?;
        return Ok(parsed.manifest);
    }
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(MANIFEST_MARKER) {
        return Err(malformed("missing manifest marker line"));
    }
    let body: String = lines
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim())
        .collect::<Vec<_>>()
        .join("");
    if body.is_empty() {
        return Err(malformed("empty manifest"));
    }
    serde_json::from_str(&body).map_err(malformed)
}

/// Records from a CSV or JSON output file.
pub fn read_records(text: &str) -> Result<Vec<ExperimentRecord>> {
    if is_json(text) {
        let parsed: JsonOutput = serde_json::from_str(text).map_err(malformed)?;
        return Ok(parsed.records);
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = r.headers().map_err(malformed)?.clone();
    if headers.iter().ne(crate::harness::CSV_HEADERS) {
        return Err(malformed(format!("unexpected header row: {:?}", headers)));
    }
    r.deserialize().map(|rec| rec.map_err(malformed)).collect()
}

/// The file with the `wallclock_us` column zeroed, for reproducibility checks.
pub fn mask_wallclock(text: &str) -> Result<String> {
    let manifest = extract_manifest(text)?;
    let mut records = read_records(text)?;
    for r in &mut records {
        r.wallclock_us = 0;
    }
    render(&RunManifest { format: if is_json(text) { Format::Json } else { Format::Csv }, ..manifest }, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(format: Format) -> RunManifest {
        let mut cfg = ExperimentConfig::new(SuiteKind::Distribution);
        cfg.workload.seed = 42;
        RunManifest::new(cfg, None, Some("out.csv".into()), format)
    }

    fn record(run_id: u32) -> ExperimentRecord {
        ExperimentRecord {
            run_id,
            seed: 42,
            epsilon_initial: 100.0,
            epsilon_final: 200.0,
            total_services: 30,
            osmotic_count: 10,
            public_count: 20,
            unhandled_count: 0,
            track: 31,
            epsilon_adjustments: 1,
            p_osmotic: 1.0 / 3.0,
            wallclock_us: 77,
            error: None,
        }
    }

    #[test]
    fn csv_header_row() {
        let text = write_csv(&manifest(Format::Csv), &[record(0)]).unwrap();
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(
            header,
            "run_id,seed,epsilon_initial,epsilon_final,total_services,osmotic_count,public_count,unhandled_count,track,epsilon_adjustments,p_osmotic,wallclock_us"
        );
    }

    #[test]
    fn empty_csv_still_has_header() {
        let text = write_csv(&manifest(Format::Csv), &[]).unwrap();
        assert!(text.lines().any(|l| l.starts_with("run_id,")));
        assert!(read_records(&text).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let m = manifest(Format::Csv);
        let recs = vec![record(0), record(1)];
        let text = write_csv(&m, &recs).unwrap();
        assert_eq!(extract_manifest(&text).unwrap(), m);
        assert_eq!(read_records(&text).unwrap(), recs);
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let m = manifest(Format::Json);
        let recs = vec![record(3)];
        let text = write_json(&m, &recs).unwrap();
        assert_eq!(extract_manifest(&text).unwrap(), m);
        assert_eq!(read_records(&text).unwrap(), recs);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<_> = v["records"][0].as_object().unwrap().keys().cloned().collect();
        let mut expected: Vec<_> = crate::harness::CSV_HEADERS.iter().map(|s| s.to_string()).collect();
        expected.sort();
        let mut got = keys;
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn mask_zeroes_wallclock_only() {
        let text = write_csv(&manifest(Format::Csv), &[record(0)]).unwrap();
        let masked = mask_wallclock(&text).unwrap();
        let recs = read_records(&masked).unwrap();
        assert_eq!(recs[0].wallclock_us, 0);
        assert_eq!(recs[0].track, 31);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(extract_manifest("run_id\n1\n").is_err());
        assert!(extract_manifest("# osmosis-sim run manifest\n# {not json\n").is_err());
        assert!(read_records("a,b\n1,2\n").is_err());
    }
}
