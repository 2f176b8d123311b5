//! Aggregation of absolute-category ratings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub clip_id: String,
    pub rater_id: String,
    pub mos: u8,
    pub smos: u8,
    pub nmos: u8,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mos", self.mos), ("smos", self.smos), ("nmos", self.nmos)] {
            if !(1..=5).contains(&v) {
                return Err(Error::Validation(format!(
                    "rating by {} for {}: {name} = {v} is outside 1..=5",
                    self.rater_id, self.clip_id
                )));
            }
        }
        Ok(())
    }
}

/// Reads `clip_id,rater_id,mos,smos,nmos` rows.
pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    #[derive(Deserialize)]
    struct Row {
        clip_id: String,
        rater_id: String,
        mos: f64,
        smos: f64,
        nmos: f64,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut out = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, e))?;
        let score = |name: &str, v: f64| -> Result<u8> {
            if v.fract() != 0.0 || !(1.0..=5.0).contains(&v) {
                return Err(Error::Validation(format!(
                    "row {} (clip {}, rater {}): {name} = {v} is not an integer in 1..=5",
                    line + 2,
                    row.clip_id,
                    row.rater_id
                )));
            }
            Ok(v as u8)
        };
        out.push(RatingRecord {
            mos: score("mos", row.mos)?,
            smos: score("smos", row.smos)?,
            nmos: score("nmos", row.nmos)?,
            clip_id: row.clip_id,
            rater_id: row.rater_id,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mos: f64,
    pub smos: f64,
    pub nmos: f64,
}

/// Mean scores per clip, keyed by clip id.
pub fn per_clip_scores(ratings: &[RatingRecord]) -> Result<BTreeMap<String, Scores>> {
    let mut sums: BTreeMap<String, ([u64; 3], u64)> = BTreeMap::new();
    for r in ratings {
        r.validate()?;
        let e = sums.entry(r.clip_id.clone()).or_default();
        e.0[0] += r.mos as u64;
        e.0[1] += r.smos as u64;
        e.0[2] += r.nmos as u64;
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(id, (s, n))| {
            let n = n as f64;
            (
                id,
                Scores {
                    mos: s[0] as f64 / n,
                    smos: s[1] as f64 / n,
                    nmos: s[2] as f64 / n,
                },
            )
        })
        .collect())
}

fn corpus_mean(table: &BTreeMap<String, Scores>) -> Scores {
    let n = table.len() as f64;
    let mut s = Scores {
        mos: 0.0,
        smos: 0.0,
        nmos: 0.0,
    };
    for v in table.values() {
        s.mos += v.mos;
        s.smos += v.smos;
        s.nmos += v.nmos;
    }
    Scores {
        mos: s.mos / n,
        smos: s.smos / n,
        nmos: s.nmos / n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosSummary {
    pub num_clips: usize,
    pub num_ratings: usize,
    pub mos: f64,
    pub smos: f64,
    pub nmos: f64,
    pub dmos: Option<f64>,
    pub dsmos: Option<f64>,
    pub dnmos: Option<f64>,
    /// Half-width of the 95% t-interval on MOS over all individual ratings.
    pub ci95: Option<f64>,
}

/// Half-width of the two-sided 95% t-interval for the mean of `values`.
pub fn t_interval_half_width(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0).ok()?.inverse_cdf(0.975);
    Some(t * var.sqrt() / nf.sqrt())
}

/// Per-clip means, then the mean over clips. `baseline` holds per-clip
/// scores of the unprocessed condition; its corpus mean over the rated clips
/// gives the deltas.
pub fn aggregate_mos(
    ratings: &[RatingRecord],
    baseline: Option<&BTreeMap<String, Scores>>,
) -> Result<MosSummary> {
    if ratings.is_empty() {
        return Err(Error::Input("no ratings".into()));
    }
    let table = per_clip_scores(ratings)?;
    let corpus = corpus_mean(&table);
    let deltas = match baseline {
        Some(base) => {
            let missing: Vec<&String> = table.keys().filter(|k| !base.contains_key(*k)).collect();
            if !missing.is_empty() {
                return Err(Error::Validation(format!(
                    "baseline lacks clips {missing:?}"
                )));
            }
            let rated: BTreeMap<String, Scores> =
                table.keys().map(|k| (k.clone(), base[k])).collect();
            let b = corpus_mean(&rated);
            Some((
                corpus.mos - b.mos,
                corpus.smos - b.smos,
                corpus.nmos - b.nmos,
            ))
        }
        None => None,
    };
    // sorted so the interval does not depend on input order
    let mut all: Vec<f64> = ratings.iter().map(|r| r.mos as f64).collect();
    all.sort_by(f64::total_cmp);
    Ok(MosSummary {
        num_clips: table.len(),
        num_ratings: ratings.len(),
        mos: corpus.mos,
        smos: corpus.smos,
        nmos: corpus.nmos,
        dmos: deltas.map(|d| d.0),
        dsmos: deltas.map(|d| d.1),
        dnmos: deltas.map(|d| d.2),
        ci95: t_interval_half_width(&all),
    })
}
