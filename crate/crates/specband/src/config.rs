//! Run configuration: radiometric parameters and the severity table,
//! loadable from TOML or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corrupt::SeverityTable;
use crate::error::{Error, Result};
use crate::radiometric::RadiometricConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub radiometric: RadiometricConfig,
    pub severity: SeverityTable,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.radiometric.validate()?;
        self.severity.validate()
    }

    /// Load from a `.toml` or `.json` file by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let config: Config = match ext {
            "toml" => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            "json" => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            other => {
                return Err(Error::Config(format!(
                    "unsupported config extension {other:?} (use .toml or .json)"
                )))
            }
        };
        config.validate()?;
        Ok(config)
    }
}
