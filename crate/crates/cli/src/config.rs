use std::fs;
use std::path::{Path, PathBuf};

use advar::eval::BaselineMode;
use advar::model::{build_model, TrainOptions};
use advar::vae::{AttackConfig, DistanceMode, Interpolation, VaeConfig};
use advar::Shape;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainOptions::default();
        Self { epochs: d.epochs, batch_size: d.batch_size, learning_rate: d.learning_rate }
    }
}

/// VAE settings; the input shape comes from the cut and the seed from the
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeSection {
    pub hidden_size: usize,
    pub depth: usize,
    pub latent_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub batch_size: usize,
}

impl Default for VaeSection {
    fn default() -> Self {
        let d = VaeConfig::new(Shape::flat(1));
        Self {
            hidden_size: d.hidden_size,
            depth: d.depth,
            latent_dim: d.latent_dim,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            kl_weight: d.kl_weight,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub interpolation: Interpolation,
    pub target_pool_size: usize,
    pub distance: DistanceMode,
    pub noise_stddev: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        let d = AttackConfig::default();
        Self {
            interpolation: d.interpolation,
            target_pool_size: d.target_pool_size,
            distance: d.distance,
            noise_stddev: d.noise_stddev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FeasibilitySection {
    /// Capture files to compare; overridden by `--captures`.
    pub captures: Vec<PathBuf>,
    /// Largest k scanned for the elbow curve.
    pub k_max: Option<usize>,
}

fn default_capture_count() -> usize {
    2000
}

fn default_alphas() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_contact() -> Vec<usize> {
    (0..8).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    /// Traffic streamed through the tap; defaults to `train_data`.
    #[serde(default)]
    pub capture_data: Option<PathBuf>,
    pub cut_index: usize,
    #[serde(default = "default_capture_count")]
    pub capture_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub baseline_mode: BaselineMode,
    /// Test-set indices shown on the contact sheet.
    #[serde(default = "default_contact")]
    pub contact_samples: Vec<usize>,
    /// Parent of the run directory; not part of the config hash.
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub vae: VaeSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub feasibility: FeasibilitySection,
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads the TOML file, applies flag overrides and resolves relative
    /// paths against the file's directory.
    pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::new("config", format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.train_data = anchor(base, &config.train_data);
        config.test_data = anchor(base, &config.test_data);
        config.capture_data = config.capture_data.as_deref().map(|p| anchor(base, p));
        config.feasibility.captures = config.feasibility.captures.iter().map(|p| anchor(base, p)).collect();
        config.out_dir = match out {
            Some(o) => o.to_path_buf(),
            None => anchor(base, &config.out_dir),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let model = build_model::<f32>(&self.model, self.seed)?;
        if !model.spec().legal_cuts().contains(&self.cut_index) {
            return Err(CliError::new(
                "config",
                format!("cut_index {} is not a legal cut of {} ({:?})", self.cut_index, self.model, model.spec().legal_cuts()),
            ));
        }
        for p in [Some(&self.train_data), Some(&self.test_data), self.capture_data.as_ref()].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::new("config", format!("dataset path {} does not exist", p.display())));
            }
        }
        if let Some(p) = self.feasibility.captures.iter().find(|p| !p.exists()) {
            return Err(CliError::new("config", format!("capture file {} does not exist", p.display())));
        }
        if self.alphas.is_empty()
            || self.alphas.iter().any(|a| !(0.0..=1.0).contains(a))
            || self.alphas.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(CliError::new("config", format!("alphas {:?} must be ascending values in [0, 1]", self.alphas)));
        }
        self.attack_config(0.0).validate()?;
        self.vae_config(Shape::flat(self.vae.hidden_size.max(1))).validate()?;
        Ok(())
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: self.seed,
        }
    }

    pub fn vae_config(&self, input_shape: Shape) -> VaeConfig {
        let v = &self.vae;
        VaeConfig {
            hidden_size: v.hidden_size,
            depth: v.depth,
            latent_dim: v.latent_dim,
            epochs: v.epochs,
            learning_rate: v.learning_rate,
            kl_weight: v.kl_weight,
            batch_size: v.batch_size,
            seed: self.seed,
            ..VaeConfig::new(input_shape)
        }
    }

    pub fn attack_config(&self, alpha: f64) -> AttackConfig {
        AttackConfig {
            alpha,
            interpolation: self.attack.interpolation,
            target_pool_size: self.attack.target_pool_size,
            distance: self.attack.distance,
            seed: self.seed,
            noise_stddev: self.attack.noise_stddev,
        }
    }

    pub fn capture_source(&self) -> &Path {
        self.capture_data.as_deref().unwrap_or(&self.train_data)
    }

    /// Canonical JSON of everything except the output location.
    fn canonical(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out_dir");
        }
        v.to_string()
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("{}-cut{}-{}", self.model, self.cut_index, &self.hash()[..12]))
    }

    /// Creates the run directory on first use and records the resolved
    /// config in it; later stages check that the record still matches.
    pub fn open_run(&self) -> CliResult<PathBuf> {
        let dir = self.run_dir();
        fs::create_dir_all(&dir)?;
        let record = dir.join("config.json");
        let text = serde_json::to_string_pretty(self).expect("config serializes") + "\n";
        if record.exists() {
            let existing: ExperimentConfig = serde_json::from_slice(&fs::read(&record)?)?;
            if existing.canonical() != self.canonical() {
                return Err(CliError::new("config", format!("{} belongs to a different config", dir.display())));
            }
        } else {
            fs::write(&record, text)?;
        }
        Ok(dir)
    }
}
