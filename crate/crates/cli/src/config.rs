use std::path::{Path, PathBuf};

use mdi_core::predict::{MemoryParams, ModeCombine};
use mdi_core::tomography::BasisLeak;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Run configuration. Values come from defaults, then the config file, then
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub memory: MemoryParams,
    /// Fixed BSM confusion probability; replaces the visibility-derived value.
    pub lambda_override: Option<f64>,
    /// Apply visibility-derived BSM noise.
    pub include_bsm_noise: bool,
    pub mode_combine: ModeCombine,
    pub times_us: Vec<f64>,
    pub rounds: u64,
    pub shots: u64,
    pub seed: u64,
    pub workers: usize,
    pub leak: BasisLeak,
    pub detection_efficiency: Option<f64>,
    pub output: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            memory: MemoryParams::reference(),
            lambda_override: None,
            include_bsm_noise: false,
            mode_combine: ModeCombine::Mean,
            times_us: (0..=12).map(|k| 5.0 * f64::from(k)).collect(),
            rounds: 100_000,
            shots: 20_000,
            seed: 1,
            workers: 1,
            leak: BasisLeak::After,
            detection_efficiency: None,
            output: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.memory.validate().map_err(|e| CliError::Usage(format!("memory: {e}")))?;
        if let Some(l) = self.lambda_override {
            if !(0.0..=0.5).contains(&l) {
                return Err(CliError::Usage(format!("lambda_override: {l} outside [0, 0.5]")));
            }
        }
        if let Some(eta) = self.detection_efficiency {
            if !(0.0..=1.0).contains(&eta) {
                return Err(CliError::Usage(format!("detection_efficiency: {eta} outside [0, 1]")));
            }
        }
        if self.rounds == 0 {
            return Err(CliError::Usage("rounds: must be at least 1".into()));
        }
        if self.shots == 0 {
            return Err(CliError::Usage("shots: must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Usage("workers: must be at least 1".into()));
        }
        Ok(())
    }

    /// BSM confusion probability for game-based commands.
    pub fn lambda(&self) -> Result<f64, CliError> {
        if let Some(l) = self.lambda_override {
            return Ok(l);
        }
        if self.include_bsm_noise {
            return mdi_core::bsm::lambda_from_visibility(self.memory.visibility)
                .map_err(|e| CliError::Usage(format!("memory.visibility: {e}")));
        }
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
        assert_eq!(Config::default().times_us.len(), 13);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Config::parse("seed = 3\nbogus = 1\n"), Err(CliError::Usage(_))));
        assert!(Config::parse("[memory]\np_ph = 0.1\n").is_err());
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c = Config::parse("seed = 9\nleak = \"before\"\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.leak, BasisLeak::Before);
        assert_eq!(c.memory, MemoryParams::reference());
    }

    #[test]
    fn lambda_resolution() {
        let mut c = Config::default();
        assert_eq!(c.lambda().unwrap(), 0.0);
        c.include_bsm_noise = true;
        assert!((c.lambda().unwrap() - 0.1171875).abs() < 1e-15);
        c.lambda_override = Some(0.2);
        assert_eq!(c.lambda().unwrap(), 0.2);
    }

    #[test]
    fn field_level_messages() {
        let mut c = Config::default();
        c.memory.eta_opt = 2.0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("eta_opt"), "{msg}");
    }

    #[test]
    fn reference_fixture_parses() {
        let text = include_str!("../fixtures/reference.toml");
        let c = Config::parse(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.memory, MemoryParams::reference());
    }
}
