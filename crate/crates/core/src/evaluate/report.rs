//! Per-clip metrics over a synthesized dataset.

use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pesq::PesqAdapter;
use super::sisnr::sisnr;
use super::stoi::stoi;
use crate::error::{Error, Result};
use crate::jsonl::{write_json, write_jsonl};
use crate::mixer::{DatasetEntry, DatasetManifest};
use crate::wav;

pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const METRICS_CSV: &str = "metrics.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub pesq: Option<f64>,
    pub stoi: f64,
    pub estoi: f64,
    pub sisnr_db: f64,
}

impl MetricSet {
    pub fn compute(
        estimate: &[f64],
        reference: &[f64],
        sample_rate: u32,
        pesq: Option<&PesqAdapter>,
    ) -> Result<Self> {
        Ok(MetricSet {
            pesq: pesq
                .map(|p| p.score(reference, estimate, sample_rate))
                .transpose()?,
            stoi: stoi(estimate, reference, sample_rate, false)?,
            estoi: stoi(estimate, reference, sample_rate, true)?,
            sisnr_db: sisnr(estimate, reference)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub clip_id: String,
    pub noisy: MetricSet,
    pub enhanced: MetricSet,
}

/// Arithmetic means over the evaluated clips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub count: usize,
    /// Only present when every clip has a PESQ score.
    pub pesq: Option<f64>,
    pub stoi: f64,
    pub estoi: f64,
    pub sisnr_db: f64,
}

impl AggregateRow {
    pub fn mean_of<'a>(sets: impl Iterator<Item = &'a MetricSet>) -> Option<Self> {
        let sets: Vec<&MetricSet> = sets.collect();
        if sets.is_empty() {
            return None;
        }
        let n = sets.len() as f64;
        let mean = |f: &dyn Fn(&MetricSet) -> f64| sets.iter().map(|s| f(s)).sum::<f64>() / n;
        let pesq = sets
            .iter()
            .map(|s| s.pesq)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / n);
        Some(AggregateRow {
            count: sets.len(),
            pesq,
            stoi: mean(&|s| s.stoi),
            estoi: mean(&|s| s.estoi),
            sisnr_db: mean(&|s| s.sisnr_db),
        })
    }

    fn minus(&self, other: &AggregateRow) -> AggregateRow {
        AggregateRow {
            count: self.count,
            pesq: self.pesq.zip(other.pesq).map(|(a, b)| a - b),
            stoi: self.stoi - other.stoi,
            estoi: self.estoi - other.estoi,
            sisnr_db: self.sisnr_db - other.sisnr_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ClipMetrics>,
    /// `clip_id:path` for every clip whose enhanced or reference file is absent.
    pub missing: Vec<String>,
    pub noisy: Option<AggregateRow>,
    pub enhanced: Option<AggregateRow>,
    /// `enhanced - noisy`.
    pub improvement: Option<AggregateRow>,
}

impl MetricsReport {
    pub fn from_rows(rows: Vec<ClipMetrics>, missing: Vec<String>) -> Self {
        let noisy = AggregateRow::mean_of(rows.iter().map(|r| &r.noisy));
        let enhanced = AggregateRow::mean_of(rows.iter().map(|r| &r.enhanced));
        let improvement = enhanced.zip(noisy).map(|(e, n)| e.minus(&n));
        MetricsReport {
            rows,
            missing,
            noisy,
            enhanced,
            improvement,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub pesq: Option<PesqAdapter>,
}

pub fn enhanced_path(enhanced_dir: &Path, clip_id: &str) -> PathBuf {
    enhanced_dir.join(format!("{clip_id}.wav"))
}

/// Metrics of one manifest entry: the reference channel of the mixture and
/// the enhanced signal, both scored against the clean reference.
pub fn evaluate_entry(
    manifest: &DatasetManifest,
    entry: &DatasetEntry,
    enhanced: &[f64],
    config: &EvalConfig,
) -> Result<ClipMetrics> {
    let reference = manifest.load_reference(entry)?;
    let mixture = manifest.load_mixture(entry)?;
    let noisy = mixture.channel(entry.ref_channel)?;
    if enhanced.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{}: enhanced has {} samples, reference {}",
            entry.id,
            enhanced.len(),
            reference.len()
        )));
    }
    let fs = entry.sample_rate;
    Ok(ClipMetrics {
        clip_id: entry.id.clone(),
        noisy: MetricSet::compute(noisy, &reference, fs, config.pesq.as_ref())?,
        enhanced: MetricSet::compute(enhanced, &reference, fs, config.pesq.as_ref())?,
    })
}

/// Scores every clip that has an enhanced file at `enhanced_dir/<id>.wav`.
/// Clips with missing files are listed and left out of the aggregates.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    enhanced_dir: &Path,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    enum Outcome {
        Row(ClipMetrics),
        Missing(String),
    }
    let outcomes: Vec<Outcome> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let enh = enhanced_path(enhanced_dir, &entry.id);
            for p in [
                &enh,
                &manifest.reference_path(entry),
                &manifest.mixture_path(entry),
            ] {
                if !p.exists() {
                    return Ok(Outcome::Missing(format!("{}:{}", entry.id, p.display())));
                }
            }
            let y = wav::read_wav(&enh)?.into_mono(&enh)?;
            Ok(Outcome::Row(evaluate_entry(manifest, entry, &y, config)?))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Row(r) => rows.push(r),
            Outcome::Missing(m) => missing.push(m),
        }
    }
    Ok(MetricsReport::from_rows(rows, missing))
}

/// Writes the per-clip JSON Lines file, the summary and optionally a CSV.
pub fn write_report(
    report: &MetricsReport,
    out_dir: &Path,
    with_csv: bool,
    provenance: Option<&serde_json::Value>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::storage(out_dir, e))?;
    write_jsonl(&out_dir.join(METRICS_JSONL), &report.rows)?;
    let summary = serde_json::json!({
        "noisy": report.noisy,
        "enhanced": report.enhanced,
        "improvement": report.improvement,
        "missing": report.missing,
        "config": provenance,
    });
    write_json(&out_dir.join(SUMMARY_JSON), &summary)?;
    if with_csv {
        let path = out_dir.join(METRICS_CSV);
        let file = File::create(&path).map_err(|e| Error::storage(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let io = |e: csv::Error| Error::parse(&path, e);
        w.write_record([
            "clip_id",
            "noisy_pesq",
            "noisy_stoi",
            "noisy_estoi",
            "noisy_sisnr_db",
            "enhanced_pesq",
            "enhanced_stoi",
            "enhanced_estoi",
            "enhanced_sisnr_db",
        ])
        .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &report.rows {
            w.write_record([
                r.clip_id.clone(),
                opt(r.noisy.pesq),
                r.noisy.stoi.to_string(),
                r.noisy.estoi.to_string(),
                r.noisy.sisnr_db.to_string(),
                opt(r.enhanced.pesq),
                r.enhanced.stoi.to_string(),
                r.enhanced.estoi.to_string(),
                r.enhanced.sisnr_db.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::storage(&path, e))?;
    }
    Ok(())
}
