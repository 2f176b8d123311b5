use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{simulate_rir, Rir, RirConfig};
use super::sampler::{sample_scenario, RoomScenario, SamplerBounds};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Topology};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::seed::derive_seed;
use crate::wav;

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const GEOMETRY_NAME: &str = "geometry.json";

/// One row of the RIR manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirEntry {
    pub id: String,
    /// WAV file, relative to the manifest's directory.
    pub file: String,
    pub scenario_id: usize,
    pub source_index: usize,
    pub scenario: RoomScenario,
    /// Absorption coefficients actually used, `[x0, x1, y0, y1, z0, z1]`.
    pub absorption_coefficients: [f64; 6],
    pub geometry: String,
    pub topology: Topology,
    pub num_mics: usize,
    pub sample_rate: u32,
    pub length: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub bounds: SamplerBounds,
    pub rir: RirConfig,
}

/// Generates `num_rirs` impulse-response files into `out_dir`.
///
/// Consecutive files share a room: item `i` belongs to scenario
/// `i / num_sources` and renders source `i % num_sources`, so a speech RIR and
/// a noise RIR from the same room sit next to each other. Every scenario is
/// seeded from `(seed, scenario index)`, which makes the output independent
/// of how the work is scheduled.
pub fn batch_generate(
    num_rirs: usize,
    geometry: &ArrayGeometry,
    seed: u64,
    out_dir: &Path,
    config: &BatchConfig,
) -> Result<Vec<RirEntry>> {
    if num_rirs == 0 {
        return Err(Error::Parameter("num_rirs must be at least 1".into()));
    }
    config.bounds.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::storage(out_dir, e))?;
    let geometry_path = out_dir.join(GEOMETRY_NAME);
    fs::write(&geometry_path, geometry.to_json()).map_err(|e| Error::storage(&geometry_path, e))?;

    let per_room = config.bounds.num_sources;
    let num_scenarios = num_rirs.div_ceil(per_room);
    let scenarios: Vec<RoomScenario> = (0..num_scenarios)
        .into_par_iter()
        .map(|k| sample_scenario(derive_seed(seed, k as u64), &config.bounds, geometry))
        .collect::<Result<_>>()?;

    let entries: Vec<RirEntry> = (0..num_rirs)
        .into_par_iter()
        .map(|i| {
            let scenario_id = i / per_room;
            let source_index = i % per_room;
            let scenario = &scenarios[scenario_id];
            let rir = simulate_rir(scenario, geometry, source_index, &config.rir)?;
            let id = format!("rir_{i:05}");
            let file = format!("{id}.wav");
            write_rir(&out_dir.join(&file), &rir)?;
            Ok(RirEntry {
                id,
                file,
                scenario_id,
                source_index,
                scenario: scenario.clone(),
                absorption_coefficients: scenario
                    .absorption
                    .coefficients(&scenario.room_dims, config.rir.speed_of_sound)?,
                geometry: GEOMETRY_NAME.to_string(),
                topology: geometry.topology,
                num_mics: rir.num_mics(),
                sample_rate: rir.sample_rate,
                length: rir.len(),
            })
        })
        .collect::<Result<_>>()?;

    write_jsonl(&out_dir.join(MANIFEST_NAME), &entries)?;
    Ok(entries)
}

pub fn write_rir(path: &Path, rir: &Rir) -> Result<()> {
    wav::write_wav(path, &rir.samples_per_mic, rir.sample_rate)
}

pub fn read_rir(path: &Path) -> Result<Rir> {
    let audio = wav::read_wav(path)?;
    Ok(Rir {
        samples_per_mic: audio.channels,
        sample_rate: audio.sample_rate,
    })
}

/// A loaded RIR manifest with paths resolved against its directory.
#[derive(Debug, Clone)]
pub struct RirManifest {
    pub dir: PathBuf,
    pub entries: Vec<RirEntry>,
}

impl RirManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let entries = read_jsonl(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(RirManifest { dir, entries })
    }

    pub fn get(&self, id: &str) -> Option<&RirEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn path_of(&self, entry: &RirEntry) -> PathBuf {
        self.dir.join(&entry.file)
    }

    pub fn load_rir(&self, id: &str) -> Result<Rir> {
        let entry = self.get(id).ok_or_else(|| Error::Manifest {
            missing: vec![id.to_string()],
        })?;
        read_rir(&self.path_of(entry))
    }
}
