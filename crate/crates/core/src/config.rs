//! `limits.toml` loading: per-joint ranges, retargeting gains and glove
//! calibration. Every key is optional and falls back to the built-in
//! Pepper-style defaults, so an empty file is a valid config.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::retarget::{Channel, JointLimits, CHANNELS};

/// Everything the toolchain reads from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub limits: JointLimits,
    /// Side length in pixels of the glove crop window.
    pub glove_window: usize,
    /// Default rng seed for subcommands that take none.
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            limits: JointLimits::default(),
            glove_window: 30,
            seed: 42,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMinMax {
    min: f64,
    max: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    k1: Option<f64>,
    k2: Option<f64>,
    max_wrist_yaw: Option<f64>,
    glove_n: Option<f64>,
    glove_window: Option<usize>,
    palm_up_elbow_yaw: Option<f64>,
    seed: Option<u64>,
    joints: Option<BTreeMap<String, RawMinMax>>,
}

fn channel_by_name(name: &str) -> Result<Channel> {
    Channel::ALL
        .iter()
        .copied()
        .find(|c| c.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = Channel::ALL.iter().map(|c| c.name()).collect();
            Error::Config(format!(
                "unknown joint {name:?}; expected one of {}",
                known.join(", ")
            ))
        })
}

fn build(raw: RawConfig, origin: &str) -> Result<Config> {
    let defaults = Config::default();
    let base = defaults.limits;
    let mut bounds = [(0.0, 0.0); CHANNELS];
    for ch in Channel::ALL {
        bounds[ch as usize] = base.bound(ch);
    }
    if let Some(joints) = raw.joints {
        for (name, mm) in joints {
            let ch = channel_by_name(&name).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{origin}: {msg}")),
                other => other,
            })?;
            bounds[ch as usize] = (mm.min, mm.max);
        }
    }
    let limits = JointLimits::new(
        raw.k1.unwrap_or(base.k1),
        raw.k2.unwrap_or(base.k2),
        raw.max_wrist_yaw.unwrap_or(base.max_wrist_yaw),
        raw.glove_n.unwrap_or(base.glove_n),
        raw.palm_up_elbow_yaw.unwrap_or(base.palm_up_elbow_yaw),
        bounds,
    )
    .map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{origin}: {msg}")),
        other => other,
    })?;
    Ok(Config {
        limits,
        glove_window: raw.glove_window.unwrap_or(defaults.glove_window),
        seed: raw.seed.unwrap_or(defaults.seed),
    })
}

/// Parses a config from TOML text.
pub fn parse_config(text: &str, origin: &str) -> Result<Config> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    build(raw, origin)
}

/// Loads a `limits.toml` file.
pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}
