//! Flat key-value run configuration.
//!
//! The file format is one `key = value` pair per line, `#` comments, blank
//! lines ignored. Every key has a default, so an empty or absent file is a
//! valid configuration; unknown keys are rejected to catch typos.

use std::collections::BTreeMap;
use std::path::Path;

use cocoon_core::baselines::SurrogateSearch;
use cocoon_core::conformal::ClipPolicy;
use cocoon_core::coverage::{SyntheticDataset, TrialConfig};
use cocoon_core::sim::{SceneSpec, SimTrainConfig};

/// `(key, default, description)` for every recognized key.
pub const CONFIG_SCHEMA: &[(&str, &str, &str)] = &[
    ("coverage.dataset", "sinusoidal_heteroscedastic", "linear_gaussian | sinusoidal_heteroscedastic | heavy_tailed | csv"),
    ("coverage.csv_path", "", "input CSV when coverage.dataset = csv (COCOON_DATA_DIR is the fallback root)"),
    ("coverage.n", "3500", "rows generated for synthetic datasets"),
    ("coverage.dim", "8", "feature dimension of synthetic datasets"),
    ("coverage.alpha", "0.1", "significance level"),
    ("coverage.seeds", "5", "number of independent trials"),
    ("coverage.n_test", "500", "held-out test rows per trial"),
    ("coverage.model_hidden", "64", "regression encoder hidden width"),
    ("coverage.feature_dim", "16", "encoder output width (the f/g split)"),
    ("coverage.head_hidden", "16", "regression head hidden width"),
    ("coverage.model_epochs", "50", "regression training epochs"),
    ("coverage.batch_size", "64", "regression minibatch size"),
    ("coverage.model_learning_rate", "0.001", "regression Adam rate"),
    ("coverage.surrogate_steps", "50", "feature-space surrogate descent steps"),
    ("coverage.surrogate_learning_rate", "0.05", "surrogate descent rate"),
    ("coverage.band_samples", "256", "sphere directions for the feature-space band"),
    ("coverage.y_grid_points", "1000", "candidate-target grid resolution"),
    ("coverage.aligner_hidden", "32", "harness aligner hidden width"),
    ("coverage.aligned_dim", "16", "harness aligned-space dimension"),
    ("coverage.aligner_epochs", "30", "harness aligner training epochs"),
    ("coverage.aligner_learning_rate", "0.001", "harness aligner Adam rate"),
    ("sim.num_queries", "60", "queries per training/calibration scene"),
    ("sim.num_classes", "10", "number of classes / feature impressions"),
    ("sim.num_layers", "6", "pseudo-decoder layers"),
    ("sim.matched_fraction", "0.75", "fraction of queries matched to objects"),
    ("sim.feature_dim", "16", "raw feature dimension per modality"),
    ("sim.class_mean_scale", "0.65", "scale of class-mean placement"),
    ("sim.mean_offset", "1.5", "constant mean offset placing the feature shell away from the origin"),
    ("sim.shared_mean_fraction", "0.85", "class-mean variance shared between modalities"),
    ("sim.cov_scale", "0.42", "base per-layer noise scale"),
    ("sim.informativeness_contrast", "0.2", "per-class modality noise contrast"),
    ("sim.common_noise_fraction", "0.5", "per-layer noise variance common to both modalities"),
    ("sim.background_scale", "1.5", "background-query noise scale"),
    ("sim.family_seed", "0", "seed pinning the class means of the scene family"),
    ("sim.eval_queries", "600", "queries in evaluation and sweep scenes"),
    ("sim.noise_sigma", "1.4", "severity of noise_a / noise_b corruption"),
    ("sim.dropout_rate", "0.45", "severity of dropout_b corruption"),
    ("sim.misalign_sigma", "1.5", "severity of misalign corruption"),
    ("aligner.train_scenes", "12", "scenes for joint aligner/impression training"),
    ("aligner.calib_scenes", "24", "scenes for calibration pools"),
    ("aligner.hidden", "128", "aligner hidden width"),
    ("aligner.dim", "128", "aligned-space dimension"),
    ("aligner.epochs", "500", "joint training epochs"),
    ("aligner.learning_rate", "0.001", "joint training Adam rate"),
    ("aligner.fi_init_radius", "1.0", "impression init sphere radius"),
    ("head.train_scenes", "8", "scenes for the frozen linear head"),
    ("head.epochs", "200", "head training epochs"),
    ("head.learning_rate", "0.05", "head Adam rate"),
    ("clip.threshold", "0.7", "fusion-weight clip threshold"),
    ("clip.policy", "modality_a", "modality_a | max"),
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parsed configuration: defaults overlaid with file entries.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: CONFIG_SCHEMA
                .iter()
                .map(|(k, d, _)| (k.to_string(), d.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "malformed config line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !config.values.contains_key(key) {
                return Err(ConfigError(format!(
                    "unknown config key `{key}` on line {}",
                    lineno + 1
                )));
            }
            config.values.insert(key.to_string(), value.to_string());
        }
        Ok(config)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("unknown config key {key}"))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|_| ConfigError(format!("config key `{key}`: `{}` is not a number", self.get(key))))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|_| ConfigError(format!("config key `{key}`: `{}` is not an integer", self.get(key))))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|_| ConfigError(format!("config key `{key}`: `{}` is not an integer", self.get(key))))
    }

    /// Full snapshot for artifact embedding and reproducibility.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    pub fn dataset(&self) -> Result<Option<SyntheticDataset>, ConfigError> {
        let name = self.get("coverage.dataset");
        if name == "csv" {
            return Ok(None);
        }
        SyntheticDataset::parse(name)
            .map(Some)
            .ok_or_else(|| ConfigError(format!("unknown coverage.dataset `{name}`")))
    }

    pub fn scene_spec(&self) -> Result<SceneSpec, ConfigError> {
        Ok(SceneSpec {
            num_queries: self.get_usize("sim.num_queries")?,
            num_classes: self.get_usize("sim.num_classes")?,
            num_layers: self.get_usize("sim.num_layers")?,
            matched_fraction: self.get_f64("sim.matched_fraction")?,
            feature_dim: self.get_usize("sim.feature_dim")?,
            class_mean_scale: self.get_f64("sim.class_mean_scale")?,
            mean_offset: self.get_f64("sim.mean_offset")?,
            shared_mean_fraction: self.get_f64("sim.shared_mean_fraction")?,
            cov_scale: self.get_f64("sim.cov_scale")?,
            informativeness_contrast: self.get_f64("sim.informativeness_contrast")?,
            common_noise_fraction: self.get_f64("sim.common_noise_fraction")?,
            background_scale: self.get_f64("sim.background_scale")?,
            family_seed: self.get_u64("sim.family_seed")?,
        })
    }

    pub fn sim_train_config(&self) -> Result<SimTrainConfig, ConfigError> {
        Ok(SimTrainConfig {
            train_scenes: self.get_usize("aligner.train_scenes")?,
            calib_scenes: self.get_usize("aligner.calib_scenes")?,
            aligner_hidden: self.get_usize("aligner.hidden")?,
            aligned_dim: self.get_usize("aligner.dim")?,
            epochs: self.get_usize("aligner.epochs")?,
            learning_rate: self.get_f64("aligner.learning_rate")?,
            fi_init_radius: self.get_f64("aligner.fi_init_radius")?,
        })
    }

    pub fn trial_config(&self) -> Result<TrialConfig, ConfigError> {
        Ok(TrialConfig {
            model_hidden: self.get_usize("coverage.model_hidden")?,
            feature_dim: self.get_usize("coverage.feature_dim")?,
            head_hidden: self.get_usize("coverage.head_hidden")?,
            model_epochs: self.get_usize("coverage.model_epochs")?,
            batch_size: self.get_usize("coverage.batch_size")?,
            model_learning_rate: self.get_f64("coverage.model_learning_rate")?,
            surrogate: SurrogateSearch {
                steps: self.get_usize("coverage.surrogate_steps")?,
                learning_rate: self.get_f64("coverage.surrogate_learning_rate")?,
            },
            band_samples: self.get_usize("coverage.band_samples")?,
            y_grid_points: self.get_usize("coverage.y_grid_points")?,
            aligner_hidden: self.get_usize("coverage.aligner_hidden")?,
            aligned_dim: self.get_usize("coverage.aligned_dim")?,
            aligner_epochs: self.get_usize("coverage.aligner_epochs")?,
            aligner_learning_rate: self.get_f64("coverage.aligner_learning_rate")?,
            n_test: self.get_usize("coverage.n_test")?,
        })
    }

    pub fn clip_policy(&self) -> Result<ClipPolicy, ConfigError> {
        match self.get("clip.policy") {
            "modality_a" => Ok(ClipPolicy::ModalityA),
            "max" => Ok(ClipPolicy::MaxWeight),
            other => Err(ConfigError(format!("unknown clip.policy `{other}`"))),
        }
    }

    /// Severity for a corruption kind name, from the matching config key.
    pub fn corruption_severity(&self, kind: &str) -> Result<f64, ConfigError> {
        match kind.to_ascii_lowercase().as_str() {
            "noise_a" | "noise_b" => self.get_f64("sim.noise_sigma"),
            "dropout_b" => self.get_f64("sim.dropout_rate"),
            "misalign" => self.get_f64("sim.misalign_sigma"),
            _ => Ok(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.get("coverage.alpha"), "0.1");
        assert_eq!(cfg.get_usize("sim.num_layers").unwrap(), 6);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = RunConfig::parse("# comment\ncoverage.alpha = 0.2\n\nsim.num_classes=4\n").unwrap();
        assert_eq!(cfg.get_f64("coverage.alpha").unwrap(), 0.2);
        assert_eq!(cfg.get_usize("sim.num_classes").unwrap(), 4);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse("coverage.alhpa = 0.2\n").unwrap_err();
        assert!(err.0.contains("coverage.alhpa"));
    }

    #[test]
    fn malformed_line_is_rejected() {
        let err = RunConfig::parse("coverage.alpha 0.2\n").unwrap_err();
        assert!(err.0.contains("line 1"));
    }

    #[test]
    fn bad_number_is_reported_with_key() {
        let cfg = RunConfig::parse("coverage.alpha = zero\n").unwrap();
        let err = cfg.get_f64("coverage.alpha").unwrap_err();
        assert!(err.0.contains("coverage.alpha"));
    }

    #[test]
    fn schema_defaults_parse_into_typed_configs() {
        let cfg = RunConfig::default();
        cfg.scene_spec().unwrap();
        cfg.sim_train_config().unwrap();
        cfg.trial_config().unwrap();
        cfg.clip_policy().unwrap();
        assert!(cfg.dataset().unwrap().is_some());
    }
}
