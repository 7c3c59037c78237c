//! Versioned persistence for the trained aligner, feature impressions, and
//! calibration pools.
//!
//! The on-disk format is a JSON document whose numeric fields are written as
//! full-precision decimal text (shortest round-trip representation), so
//! `load(save(a)) == a` holds exactly. The format version is checked before
//! anything else is parsed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::FeatureImpressionSet;
use crate::conformal::NcPool;
use crate::numerics::Mlp;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("unsupported artifact format version {found}, this build reads version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("artifact parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("artifact io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact is not calibrated: no nonconformity pools")]
    NotCalibrated,
    #[error("artifact is inconsistent: {reason}")]
    Inconsistent { reason: String },
}

/// The persisted bundle produced by offline preparation: aligned-space
/// surrogates, the aligner that produces them, per-layer calibration pools,
/// and enough metadata to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub format_version: u32,
    pub aligner: Mlp,
    pub fis: FeatureImpressionSet,
    /// One pool per decoder layer; empty until calibration has run.
    pub nc_pools: Vec<NcPool>,
    /// Flat key-value snapshot of the configuration that produced this
    /// artifact (sorted for deterministic output).
    pub config: BTreeMap<String, String>,
    pub creation_seed: u64,
}

impl CalibrationArtifact {
    pub fn new(
        aligner: Mlp,
        fis: FeatureImpressionSet,
        nc_pools: Vec<NcPool>,
        config: BTreeMap<String, String>,
        creation_seed: u64,
    ) -> Self {
        Self {
            format_version: ARTIFACT_FORMAT_VERSION,
            aligner,
            fis,
            nc_pools,
            config,
            creation_seed,
        }
    }

    /// Structural consistency: aligner output feeds the impression space.
    pub fn validate(&self) -> Result<(), ArtifactError> {
        self.aligner
            .validate()
            .map_err(|e| ArtifactError::Inconsistent {
                reason: e.to_string(),
            })?;
        self.fis
            .validate()
            .map_err(|e| ArtifactError::Inconsistent {
                reason: e.to_string(),
            })?;
        if self.aligner.output_dim() != self.fis.dim() {
            return Err(ArtifactError::Inconsistent {
                reason: format!(
                    "aligner output dimension {} does not match impression dimension {}",
                    self.aligner.output_dim(),
                    self.fis.dim()
                ),
            });
        }
        Ok(())
    }

    /// Validation for inference use: additionally requires non-empty pools.
    pub fn validate_for_inference(&self) -> Result<(), ArtifactError> {
        self.validate()?;
        if self.nc_pools.is_empty() || self.nc_pools.iter().any(NcPool::is_empty) {
            return Err(ArtifactError::NotCalibrated);
        }
        Ok(())
    }

    pub fn is_calibrated(&self) -> bool {
        !self.nc_pools.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    /// Parses and validates a JSON document, checking the format version
    /// before the payload.
    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(ArtifactError::VersionMismatch {
                found: probe.format_version,
                supported: ARTIFACT_FORMAT_VERSION,
            });
        }
        let artifact: CalibrationArtifact = serde_json::from_str(text)?;
        artifact.validate()?;
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
