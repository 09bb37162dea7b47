use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use windline_core::binary::OrbitalSolution;
use windline_core::spectra::ObservedSpectrum;
use windline_core::{Result, WindLawParams};

/// Analyst state that survives across requests and can be saved to disk.
/// Computed profiles are cached separately and never persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub spectra: BTreeMap<String, ObservedSpectrum>,
    /// Parameters of the most recent composite request.
    #[serde(default)]
    pub params: Option<(WindLawParams, WindLawParams)>,
    #[serde(default)]
    pub orbit: Option<OrbitalSolution>,
}

impl Default for Session {
    fn default() -> Self {
        Session { id: "default".into(), spectra: BTreeMap::new(), params: None, orbit: None }
    }
}

impl Session {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes atomically via a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}
