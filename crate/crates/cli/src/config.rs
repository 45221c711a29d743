//! Run configuration: a TOML file, overridden by command-line flags.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use carewatch_core::detector::Hyperparams;
use carewatch_core::domain::{Catalog, TimeSpan, Timestamp};
use carewatch_core::evaluate::{default_events_per_day, ExperimentSettings, KnnSettings};
use carewatch_core::inject::{AnomalyConfig, AnomalyKind};
use carewatch_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// 2023-11-14T00:00:00Z; synthetic data starts here unless configured.
pub const DEFAULT_START_MS: Timestamp = 1_699_920_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatientSource {
    Synthetic {
        patient_id: String,
        seed: u64,
    },
    /// A readings CSV; the patient id defaults to the file stem.
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        patient_id: Option<String>,
    },
}

impl PatientSource {
    pub fn patient_id(&self) -> String {
        match self {
            PatientSource::Synthetic { patient_id, .. } => patient_id.clone(),
            PatientSource::File { path, patient_id } => patient_id.clone().unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            }),
        }
    }
}

/// `p01 .. pNN` with seeds `1 .. n`.
pub fn synthetic_cohort(n: usize) -> Vec<PatientSource> {
    (1..=n)
        .map(|i| PatientSource::Synthetic {
            patient_id: format!("p{i:02}"),
            seed: i as u64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Length of each synthetic patient's record.
    pub duration: TimeSpan,
    pub start_ms: Timestamp,
    pub sample_interval: TimeSpan,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            duration: TimeSpan::hours(96),
            start_ms: DEFAULT_START_MS,
            sample_interval: TimeSpan::seconds(60),
        }
    }
}

/// Injection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalySection {
    pub kind: AnomalyKind,
    /// Events per 24 h of validation window (experiments) or events per
    /// device series (`inject`). Defaults depend on `kind`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Fixed seed for `inject`. Experiments always derive one per repetition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub on_off_burst_len: usize,
    pub on_off_interval_ms: i64,
    pub variance_sigma_factor: f64,
    pub variance_samples: usize,
    pub spike_magnitude_factor: f64,
}

impl Default for AnomalySection {
    fn default() -> Self {
        let d = AnomalyConfig::default();
        Self {
            kind: d.kind,
            count: None,
            seed: None,
            on_off_burst_len: d.on_off_burst_len,
            on_off_interval_ms: d.on_off_interval_ms,
            variance_sigma_factor: d.variance_sigma_factor,
            variance_samples: d.variance_samples,
            spike_magnitude_factor: d.spike_magnitude_factor,
        }
    }
}

impl AnomalySection {
    pub fn to_config(&self, seed: u64) -> AnomalyConfig {
        AnomalyConfig {
            kind: self.kind,
            count: self
                .count
                .unwrap_or_else(|| default_events_per_day(self.kind)),
            seed,
            on_off_burst_len: self.on_off_burst_len,
            on_off_interval_ms: self.on_off_interval_ms,
            variance_sigma_factor: self.variance_sigma_factor,
            variance_samples: self.variance_samples,
            spike_magnitude_factor: self.spike_magnitude_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsSection {
    pub train: Vec<TimeSpan>,
    pub val: Vec<TimeSpan>,
}

impl Default for WindowsSection {
    fn default() -> Self {
        Self {
            train: TimeSpan::standard_windows().to_vec(),
            val: TimeSpan::standard_windows().to_vec(),
        }
    }
}

/// Model hyperparameters. Training seeds are derived per repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_units: usize,
    pub alpha: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let h = Hyperparams::default();
        Self {
            learning_rate: h.learning_rate,
            batch_size: h.batch_size,
            epochs: h.epochs,
            hidden_units: h.hidden_units,
            alpha: h.alpha,
        }
    }
}

impl TrainingSection {
    pub fn to_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            hidden_units: self.hidden_units,
            alpha: self.alpha,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnSection {
    pub enabled: bool,
    pub k: usize,
    pub quantile: f64,
}

impl Default for KnnSection {
    fn default() -> Self {
        let d = KnnSettings::default();
        Self {
            enabled: true,
            k: d.k,
            quantile: d.quantile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub base_seed: u64,
    pub n_reps: usize,
    /// Worker threads; 0 uses all available cores.
    pub jobs: usize,
    pub output_dir: PathBuf,
    /// Target devices. Empty selects the default device for the anomaly kind.
    pub devices: Vec<String>,
    /// Device catalog CSV; the built-in catalog when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    pub patients: Vec<PatientSource>,
    pub synth: SynthSection,
    pub anomaly: AnomalySection,
    pub windows: WindowsSection,
    pub training: TrainingSection,
    pub knn: KnnSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base_seed: 0,
            n_reps: 30,
            jobs: 0,
            output_dir: PathBuf::from("runs"),
            devices: Vec::new(),
            catalog: None,
            patients: synthetic_cohort(5),
            synth: SynthSection::default(),
            anomaly: AnomalySection::default(),
            windows: WindowsSection::default(),
            training: TrainingSection::default(),
            knn: KnnSection::default(),
        }
    }
}

/// Device used when none is configured.
pub fn default_device(kind: AnomalyKind) -> &'static str {
    match kind {
        AnomalyKind::OnOff => "kitchen",
        AnomalyKind::Variance | AnomalyKind::Spike => "temperature",
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| CliError::config("<file>", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CliError::config(
                if field == "." { "<root>".into() } else { field },
                e.into_inner().to_string(),
            )
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes to JSON");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Devices for the configured anomaly kind.
    pub fn target_devices(&self) -> Vec<String> {
        if self.devices.is_empty() {
            vec![default_device(self.anomaly.kind).to_string()]
        } else {
            self.devices.clone()
        }
    }

    /// First configured device that `kind` can target, else its default.
    pub fn device_for(&self, kind: AnomalyKind, catalog: &Catalog) -> String {
        self.devices
            .iter()
            .find(|d| catalog.get(d).is_some_and(|s| kind.accepts(s.value_format)))
            .cloned()
            .unwrap_or_else(|| default_device(kind).to_string())
    }

    pub fn settings(&self, device_id: &str) -> ExperimentSettings {
        ExperimentSettings {
            device_id: device_id.to_string(),
            anomaly: self.anomaly.to_config(0),
            hyperparams: self.training.to_hyperparams(),
            n_reps: self.n_reps,
            base_seed: self.base_seed,
            knn: self.knn.enabled.then_some(KnnSettings {
                k: self.knn.k,
                quantile: self.knn.quantile,
            }),
        }
    }

    /// Checks everything that does not need the data itself.
    /// With `check_kind`, every target device must suit the anomaly kind.
    pub fn validate(&self, catalog: &Catalog, check_kind: bool) -> CliResult<()> {
        if self.n_reps == 0 {
            return Err(CliError::config("n_reps", "must be at least 1"));
        }
        if self.patients.is_empty() {
            return Err(CliError::config(
                "patients",
                "at least one patient is required",
            ));
        }
        let mut seen = HashSet::new();
        for p in &self.patients {
            let id = p.patient_id();
            if id.is_empty() {
                return Err(CliError::config("patients", "empty patient id"));
            }
            if !seen.insert(id.clone()) {
                return Err(CliError::config(
                    "patients",
                    format!("duplicate patient id `{id}`"),
                ));
            }
        }
        if self.synth.duration.as_ms() <= 0 {
            return Err(CliError::config("synth.duration", "must be positive"));
        }
        if self.synth.sample_interval.as_ms() <= 0 {
            return Err(CliError::config(
                "synth.sample_interval",
                "must be positive",
            ));
        }
        if self.windows.train.is_empty() {
            return Err(CliError::config("windows.train", "need at least one span"));
        }
        if self.windows.val.is_empty() {
            return Err(CliError::config("windows.val", "need at least one span"));
        }
        self.anomaly
            .to_config(0)
            .validate()
            .map_err(|e| scoped("anomaly", e))?;
        self.training
            .to_hyperparams()
            .validate()
            .map_err(|e| scoped("training", e))?;
        if self.knn.k == 0 {
            return Err(CliError::config("knn.k", "must be positive"));
        }
        if !(self.knn.quantile > 0.0 && self.knn.quantile < 1.0) {
            return Err(CliError::config("knn.quantile", "must lie in (0, 1)"));
        }
        for d in &self.devices {
            let Some(spec) = catalog.get(d) else {
                return Err(CliError::config(
                    "devices",
                    format!("unknown or excluded device `{d}`"),
                ));
            };
            if check_kind && !self.anomaly.kind.accepts(spec.value_format) {
                return Err(CliError::config(
                    "devices",
                    format!(
                        "{} anomalies cannot target {:?} device `{d}`",
                        self.anomaly.kind, spec.value_format
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn scoped(section: &str, e: CoreError) -> CliError {
    match e {
        CoreError::InvalidParameter { name, reason } => {
            CliError::config(format!("{section}.{name}"), reason)
        }
        other => CliError::Core(other),
    }
}
