//! Experiment configuration, presets, and content hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::SimConfig;
use crate::dataset::CollectConfig;
use crate::engine::CostConfig;
use crate::plant::SlopePreset;
use crate::rnn::{DeltaThresholds, NetArch, TrainSchedule};
use crate::{Error, Result};

/// Short SHA-256 of the TOML serialization of `value`.
pub fn hash_serialized<T: Serialize>(value: &T) -> String {
    let text = toml::to_string(value).unwrap_or_default();
    hash_bytes(text.as_bytes())
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 32 hidden units, training windows every 10 ticks.
    Desk,
    /// 128 hidden units, a window at every tick.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub theta_x_raw: i16,
    pub theta_h_raw: i16,
    pub cost: CostConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            theta_x_raw: 4,
            theta_h_raw: 128,
            cost: CostConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn thresholds(&self) -> DeltaThresholds {
        DeltaThresholds {
            theta_x: self.theta_x_raw as f64 / 256.0,
            theta_h: self.theta_h_raw as f64 / 256.0,
        }
    }
}

/// Artifact locations. Relative paths resolve against `workdir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub workdir: PathBuf,
    pub dataset: PathBuf,
    pub pretrained: PathBuf,
    pub model: PathBuf,
    pub quant_model: PathBuf,
    pub loss_curve: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("work"),
            dataset: PathBuf::from("data/manifest.toml"),
            pretrained: PathBuf::from("gru.dgru"),
            model: PathBuf::from("deltagru.dgru"),
            quant_model: PathBuf::from("deltagru.edrn"),
            loss_curve: PathBuf::from("loss_curve.csv"),
        }
    }
}

impl Paths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub slope: SlopePreset,
    pub hidden: usize,
    pub paths: Paths,
    pub sim: SimConfig,
    pub collect: CollectConfig,
    pub schedule: TrainSchedule,
    pub engine: EngineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let (hidden, stride) = match preset {
            Preset::Desk => (32, 10),
            Preset::Paper => (128, 1),
        };
        Self {
            seed: 1,
            slope: SlopePreset::Flat,
            hidden,
            paths: Paths::default(),
            sim: SimConfig::default(),
            collect: CollectConfig {
                stride,
                ..CollectConfig::default()
            },
            schedule: TrainSchedule::default(),
            engine: EngineConfig::default(),
        }
    }

    /// Parses TOML; missing keys take the preset's values.
    pub fn from_toml(text: &str, preset: Preset) -> Result<Self> {
        let base = toml::Value::try_from(Self::preset(preset))?;
        let over: toml::Value = toml::from_str(text)?;
        let merged = merge(base, over);
        let cfg: Self = merged.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, preset)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.arch().validate()?;
        let mut s = self.schedule;
        s.seed = self.seed;
        s.validate()?;
        if self.engine.theta_x_raw < 0 || self.engine.theta_h_raw < 0 {
            return Err(Error::Config("raw thresholds must be >= 0".into()));
        }
        if !(self.engine.cost.clock_hz > 0.0) {
            return Err(Error::Config("clock_hz must be positive".into()));
        }
        Ok(())
    }

    pub fn arch(&self) -> NetArch {
        NetArch::controller(self.hidden)
    }

    /// The training schedule seeded from the experiment seed.
    pub fn train_schedule(&self) -> TrainSchedule {
        TrainSchedule {
            seed: self.seed,
            ..self.schedule
        }
    }

    /// Content hash; the artifact directory does not contribute.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.workdir = PathBuf::new();
        hash_serialized(&c)
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.paths.resolve(p)
    }
}

/// Recursively overlays `over` onto `base`; tables merge, values replace.
fn merge(base: toml::Value, over: toml::Value) -> toml::Value {
    match (base, over) {
        (toml::Value::Table(mut b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(bv) => merge(bv, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, o) => o,
    }
}
