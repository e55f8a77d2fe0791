use serde::{Deserialize, Serialize};

use super::{
    AnyEnv, CleanUpConfig, CleanUpMini, EnvError, HarvestConfig, HarvestMini, IteratedMatrixGame,
    KitchenConfig, KitchenMini, MatrixConfig,
};

/// Environment section of a run config.
///
/// ```toml
/// [env]
/// name = "cleanup"
///
/// [env.cleanup]
/// accretion = 0.5
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// One of `matrix`, `harvest`, `cleanup`, `kitchen`.
    pub name: String,
    pub matrix: MatrixConfig,
    pub harvest: HarvestConfig,
    pub cleanup: CleanUpConfig,
    pub kitchen: KitchenConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: "matrix".into(),
            matrix: MatrixConfig::default(),
            harvest: HarvestConfig::default(),
            cleanup: CleanUpConfig::default(),
            kitchen: KitchenConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<AnyEnv, EnvError> {
        Ok(match self.name.as_str() {
            "matrix" => AnyEnv::Matrix(IteratedMatrixGame::from_config(&self.matrix)?),
            "harvest" => AnyEnv::Harvest(HarvestMini::new(self.harvest.clone())?),
            "cleanup" => AnyEnv::CleanUp(CleanUpMini::new(self.cleanup.clone())?),
            "kitchen" => AnyEnv::Kitchen(KitchenMini::new(self.kitchen.clone())?),
            other => return Err(EnvError::Config(format!("unknown environment {other:?}"))),
        })
    }

    /// Horizon of the selected environment.
    pub fn horizon(&self) -> usize {
        match self.name.as_str() {
            "matrix" => self.matrix.horizon,
            "harvest" => self.harvest.horizon,
            "cleanup" => self.cleanup.horizon,
            _ => self.kitchen.horizon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Environment;

    #[test]
    fn parses_sections_and_builds() {
        let cfg: EnvConfig = toml::from_str(
            r#"
            name = "cleanup"
            [cleanup]
            accretion = 1.0
            horizon = 50
            "#,
        )
        .unwrap();
        let env = cfg.build().unwrap();
        assert_eq!(env.spec().horizon, 50);
        assert_eq!(cfg.cleanup.accretion, 1.0);
    }

    #[test]
    fn unknown_env_is_an_error() {
        assert!(EnvConfig::named("pong").build().is_err());
    }

    #[test]
    fn unknown_field_is_an_error() {
        assert!(toml::from_str::<EnvConfig>("name = \"matrix\"\nbogus = 1").is_err());
    }
}
