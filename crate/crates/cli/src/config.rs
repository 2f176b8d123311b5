//! Declarative pipeline configuration.
//!
//! A TOML document with one table per stage. Every key is optional and falls
//! back to the library default; unknown keys are rejected so a typo never
//! silently turns into a default.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use farfield::enhance::{FrontEnd, ModelConfig, TrainConfig};
use farfield::evaluate::PesqAdapter;
use farfield::features::{default_pairs, FeatureConfig, PairSelection};
use farfield::geometry::{build_array, ArrayGeometry, ArrayParams, Topology};
use farfield::mixer::MixerConfig;
use farfield::roomsim::BatchConfig;
use farfield::spectral::StftConfig;
use serde::{Deserialize, Serialize};

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "FARFIELD_CONFIG";

/// Echo of the resolved configuration written next to every output manifest.
pub const ECHO_NAME: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub topology: Topology,
    /// Shape parameters; the topology's defaults when absent.
    pub params: Option<ArrayParams>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            topology: Topology::LinearUniform8,
            params: None,
        }
    }
}

impl GeometrySection {
    pub fn build(&self) -> farfield::Result<ArrayGeometry> {
        let params = match &self.params {
            Some(p) if p.topology() == self.topology => p.clone(),
            Some(p) => {
                return Err(farfield::Error::Configuration(format!(
                    "geometry params describe {} but topology is {}",
                    p.topology(),
                    self.topology
                )))
            }
            None => ArrayParams::default_for(self.topology),
        };
        build_array(self.topology, &params)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub normalize: bool,
    /// Channel subset and pairs (0-based); the topology default when absent.
    pub selection: Option<PairSelection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub pesq: Option<PesqAdapter>,
    pub csv: bool,
    pub rtf_repetitions: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            pesq: None,
            csv: true,
            rtf_repetitions: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub geometry: GeometrySection,
    pub roomsim: BatchConfig,
    pub mixer: MixerConfig,
    pub stft: StftConfig,
    pub features: FeaturesSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            geometry: GeometrySection::default(),
            roomsim: BatchConfig::default(),
            mixer: MixerConfig::default(),
            // causal framing keeps offline and streaming enhancement identical
            stft: StftConfig::default().causal(),
            features: FeaturesSection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `explicit`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let from_env = std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(from_env) {
            Some(path) => Self::load(&path),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn front_end(&self) -> farfield::Result<FrontEnd> {
        let front = FrontEnd {
            stft: self.stft,
            selection: self
                .features
                .selection
                .clone()
                .unwrap_or_else(|| default_pairs(self.geometry.topology)),
            features: FeatureConfig {
                normalize: self.features.normalize,
            },
        };
        front.validate()?;
        Ok(front)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(
            PipelineConfig::parse("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = PipelineConfig::default();
        c.geometry.topology = Topology::Circular16;
        c.train.epochs = 3;
        c.roomsim.rir.max_order = Some(4);
        c.mixer.speech_gate_db = Some(15.0);
        let back = PipelineConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_sections_override_only_their_keys() {
        let c = PipelineConfig::parse(
            "[geometry]\ntopology = \"circular16\"\n[train]\nlr = 0.01\n[model]\nhidden = 64\n",
        )
        .unwrap();
        assert_eq!(c.geometry.topology, Topology::Circular16);
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.train.epochs, TrainConfig::default().epochs);
        assert_eq!(c.model.hidden, 64);
        assert_eq!(c.model.layers, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::parse("[train]\nlearning_rate = 0.1\n").is_err());
        assert!(PipelineConfig::parse("[bogus]\nx = 1\n").is_err());
        assert!(PipelineConfig::parse("top = 1\n").is_err());
    }

    #[test]
    fn mismatched_params_fail_to_build() {
        let g = GeometrySection {
            topology: Topology::Circular16,
            params: Some(ArrayParams::default_for(Topology::LinearUniform8)),
        };
        assert!(g.build().is_err());
        assert_eq!(GeometrySection::default().build().unwrap().num_mics(), 8);
    }

    #[test]
    fn front_end_follows_topology() {
        let mut c = PipelineConfig::default();
        c.geometry.topology = Topology::Circular16;
        let f = c.front_end().unwrap();
        assert_eq!(f.selection, default_pairs(Topology::Circular16));
        assert!(f.check_streaming().is_ok());
    }
}
