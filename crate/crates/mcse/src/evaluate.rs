//! Per-utterance metrics and DOA-binned aggregation.

use std::fmt::Write as _;
use std::path::Path;

use mcse_core::metrics::{segmental_snr, si_sdr};
use mcse_core::scene::DoaBin;
use mcse_core::signal::Waveform;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreContext, Error, Result};
use crate::manifest::{Manifest, ManifestEntry};
use crate::{json, wav};

/// Version of the report layout (JSON fields and CSV columns).
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEG_FRAME_MS: f64 = 20.0;

pub const RECORD_COLUMNS: [&str; 11] = [
    "schema_version",
    "id",
    "doa_bin",
    "doa_difference_deg",
    "t60",
    "snr_in_db",
    "si_sdr_db",
    "seg_snr_db",
    "pesq",
    "estoi",
    "dnsmos",
];
pub const SUMMARY_COLUMNS: [&str; 5] = ["schema_version", "group", "count", "mean_si_sdr_db", "mean_seg_snr_db"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub doa_bin: Option<DoaBin>,
    pub doa_difference_deg: Option<f64>,
    pub t60: Option<f64>,
    pub snr_in_db: f64,
    pub si_sdr_db: f64,
    pub seg_snr_db: f64,
    /// Reserved for externally computed scores; never filled here.
    pub pesq: Option<f64>,
    pub estoi: Option<f64>,
    pub dnsmos: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub count: usize,
    pub mean_si_sdr_db: Option<f64>,
    pub mean_seg_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub doa_bin: DoaBin,
    #[serde(flatten)]
    pub summary: GroupSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Name of the evaluated system (e.g. an output directory or `noisy`).
    pub system: String,
    pub seg_snr_frame_ms: f64,
    /// Sorted by utterance id.
    pub records: Vec<UtteranceRecord>,
    /// Always all four bins, in ascending angle order.
    pub per_bin: Vec<BinSummary>,
    pub global: GroupSummary,
}

fn summarize<'a>(records: impl Iterator<Item = &'a UtteranceRecord>) -> GroupSummary {
    let (mut n, mut sdr, mut seg) = (0usize, 0.0, 0.0);
    for r in records {
        n += 1;
        sdr += r.si_sdr_db;
        seg += r.seg_snr_db;
    }
    let mean = |s: f64| (n > 0).then(|| s / n as f64);
    GroupSummary { count: n, mean_si_sdr_db: mean(sdr), mean_seg_snr_db: mean(seg) }
}

impl EvalReport {
    /// Aggregate records; the result does not depend on their input order.
    pub fn from_records(system: impl Into<String>, seg_snr_frame_ms: f64, mut records: Vec<UtteranceRecord>) -> Self {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let per_bin = DoaBin::ALL
            .into_iter()
            .map(|bin| BinSummary { doa_bin: bin, summary: summarize(records.iter().filter(|r| r.doa_bin == Some(bin))) })
            .collect();
        let global = summarize(records.iter());
        EvalReport { schema_version: REPORT_SCHEMA_VERSION, system: system.into(), seg_snr_frame_ms, records, per_bin, global }
    }

    pub fn records_csv(&self) -> String {
        let mut out = RECORD_COLUMNS.join(",");
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.schema_version,
                r.id,
                r.doa_bin.map(DoaBin::label).unwrap_or(""),
                opt(r.doa_difference_deg),
                opt(r.t60),
                r.snr_in_db,
                r.si_sdr_db,
                r.seg_snr_db,
                opt(r.pesq),
                opt(r.estoi),
                opt(r.dnsmos)
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = SUMMARY_COLUMNS.join(",");
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let rows = self.per_bin.iter().map(|b| (b.doa_bin.label(), &b.summary)).chain([("all", &self.global)]);
        for (group, s) in rows {
            let _ = writeln!(
                out,
                "{},{group},{},{},{}",
                self.schema_version,
                s.count,
                opt(s.mean_si_sdr_db),
                opt(s.mean_seg_snr_db)
            );
        }
        out
    }

    /// Write `report.json`, `report.csv` and `report_summary.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        json::write(&dir.join("report.json"), self)?;
        for (name, text) in [("report.csv", self.records_csv()), ("report_summary.csv", self.summary_csv())] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Score one estimate against the entry's anechoic target.
pub fn score(entry: &ManifestEntry, est: &Waveform, target: &Waveform, seg_frame_ms: f64) -> Result<UtteranceRecord> {
    if est.sample_rate_hz != target.sample_rate_hz {
        return Err(Error::usage(format!(
            "{}: output is {} Hz but the target is {} Hz",
            entry.id, est.sample_rate_hz, target.sample_rate_hz
        )));
    }
    let geometry = entry.meta.geometry.as_ref();
    Ok(UtteranceRecord {
        id: entry.id.clone(),
        doa_bin: entry.doa_bin,
        doa_difference_deg: geometry.map(|g| g.doa_difference_deg),
        t60: geometry.map(|g| g.t60),
        snr_in_db: entry.meta.snr_db,
        si_sdr_db: si_sdr(est, target).context(|| format!("{}: si_sdr", entry.id))?,
        seg_snr_db: segmental_snr(est, target, seg_frame_ms).context(|| format!("{}: seg_snr", entry.id))?,
        pesq: None,
        estoi: None,
        dnsmos: None,
    })
}

/// Where the estimate for each utterance comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateSource<'a> {
    /// `<dir>/<id>.wav`, mono, one per manifest entry.
    Directory(&'a Path),
    /// Reference channel of the mixture (the unprocessed baseline).
    Noisy,
}

pub fn output_path(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("{id}.wav"))
}

/// Compute metrics for every manifest entry. Missing outputs are reported
/// together, by utterance id.
pub fn evaluate_manifest(manifest: &Manifest, source: EstimateSource<'_>, seg_frame_ms: f64) -> Result<EvalReport> {
    if !(seg_frame_ms > 0.0) {
        return Err(Error::usage(format!("seg_frame_ms must be positive, got {seg_frame_ms}")));
    }
    let system = match &source {
        EstimateSource::Directory(dir) => dir.display().to_string(),
        EstimateSource::Noisy => "noisy".to_string(),
    };
    if let EstimateSource::Directory(dir) = &source {
        let mut missing: Vec<String> =
            manifest.entries.iter().filter(|e| !output_path(dir, &e.id).is_file()).map(|e| e.id.clone()).collect();
        if !missing.is_empty() {
            missing.sort();
            return Err(Error::MissingOutputs(missing));
        }
    }
    let records = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let target =
                wav::read_mono(&manifest.resolve(&entry.files.anechoic_target), Some(entry.sample_rate_hz))?;
            let est = match &source {
                EstimateSource::Directory(dir) => wav::read_mono(&output_path(dir, &entry.id), None)?,
                EstimateSource::Noisy => {
                    wav::read_wav(&manifest.resolve(&entry.files.mixture))?.reference().clone()
                }
            };
            score(entry, &est, &target, seg_frame_ms)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_records(system, seg_frame_ms, records))
}
