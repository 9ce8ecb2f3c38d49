//! Scenario files (TOML), presets and scenario hashing.
//!
//! A scenario file is the TOML rendering of [`Scenario`]; unknown keys are
//! rejected and `schema_version` must match the version this build
//! understands. Amplifier coefficient files named in `[pa.model]` are
//! resolved relative to the directory of the scenario file.

use std::path::{Path, PathBuf};

use palink_core::{
    pa_model::PaModel,
    scenario::{PaSource, Scenario},
};
use sha2::{Digest, Sha256};

use crate::{coeffs, Error, Result};

/// A scenario together with the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
}

impl LoadedScenario {
    /// The amplifier model the scenario asks for.
    pub fn pa_model(&self) -> Result<PaModel> {
        resolve_pa(&self.scenario.pa.model, &self.base_dir)
    }
}

pub fn preset(name: &str) -> Result<Scenario> {
    match name {
        "desk" => Ok(Scenario::desk()),
        "full" => Ok(Scenario::full()),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

pub fn load(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scenario = parse(&text).map_err(|m| Error::parse(path, m))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedScenario { scenario, base_dir })
}

/// Parses and validates scenario TOML.
pub fn parse(text: &str) -> std::result::Result<Scenario, String> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| e.to_string())?;
    scenario.validate().map_err(|e| e.to_string())?;
    Ok(scenario)
}

pub fn to_toml(scenario: &Scenario) -> String {
    toml::to_string_pretty(scenario).expect("scenario serializes to TOML")
}

pub fn save(scenario: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, to_toml(scenario)).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of the scenario's canonical JSON form.
pub fn hash(scenario: &Scenario) -> String {
    let json = serde_json::to_vec(scenario).expect("scenario serializes to JSON");
    hex::encode(Sha256::digest(&json))
}

pub fn resolve_pa(source: &PaSource, base_dir: &Path) -> Result<PaModel> {
    match source {
        PaSource::Reference => Ok(PaModel::reference()),
        PaSource::File { path } => coeffs::read_pa(&base_dir.join(path)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in ["desk", "full"] {
            let s = preset(name).unwrap();
            let back = parse(&to_toml(&s)).unwrap();
            assert_eq!(back, s);
            assert_eq!(hash(&back), hash(&s));
        }
    }

    #[test]
    fn unknown_keys_and_wrong_schema_are_rejected() {
        let text = to_toml(&Scenario::desk());
        assert!(parse(&format!("bogus = 1\n{text}")).is_err());
        let wrong = text.replace("schema_version = 1", "schema_version = 99");
        assert!(parse(&wrong).unwrap_err().contains("schema_version"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Scenario::desk();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(hash(&a), hash(&b));
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(preset("huge"), Err(Error::UnknownPreset(_))));
    }
}
