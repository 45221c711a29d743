//! Repetition harness.
//!
//! One repetition draws a window origin, trains on the clean training window
//! that starts there, injects anomalies into the validation window that
//! follows it, and scores the detector's flags against the injected ground
//! truth. A supervised pair counts as positive exactly when its *target*
//! reading was injected.
//!
//! `AnomalyConfig::count` is read as a density: events per 24 h of
//! validation window. A window of length `v` receives `count * v / 24h`
//! events, the fractional part resolved by a seeded coin flip, so short
//! windows are not flooded with anomalies.
//!
//! All randomness derives from `base_seed` and the repetition index, so
//! repetitions are independent of each other and of worker scheduling.

pub mod metrics;
pub mod report;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{self, knn, Hyperparams};
use crate::domain::{PatientDataset, TimeSpan, Timestamp, MS_PER_DAY};
use crate::error::{Error, Result};
use crate::inject::{self, AnomalyConfig, AnomalyKind, LabeledDataset};
use crate::pipeline::{self, Normalizer, SupervisedBatch, WindowSpec};
use crate::rng;

pub use metrics::{accuracy, ConfusionCounts, Quartiles};

/// Attempts at drawing an origin whose windows hold enough readings.
pub const MAX_ORIGIN_DRAWS: usize = 1000;
/// Readings a window must hold to yield at least one supervised pair.
pub const MIN_WINDOW_READINGS: usize = 3;

/// Mean training time on a Raspberry Pi 4 reported for the reference
/// deployment, in seconds. Context for `bench` output only.
pub const RPI4_REFERENCE_TRAIN_SECONDS: [(AnomalyKind, f64); 3] = [
    (AnomalyKind::OnOff, 26.0),
    (AnomalyKind::Variance, 11.0),
    (AnomalyKind::Spike, 0.88),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnSettings {
    pub k: usize,
    pub quantile: f64,
}

impl Default for KnnSettings {
    fn default() -> Self {
        Self {
            k: knn::DEFAULT_K,
            quantile: knn::DEFAULT_QUANTILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub device_id: String,
    pub anomaly: AnomalyConfig,
    pub hyperparams: Hyperparams,
    pub n_reps: usize,
    pub base_seed: u64,
    /// Also score the kNN baseline on every repetition.
    pub knn: Option<KnnSettings>,
}

/// Default anomaly density in events per 24 h of validation window.
///
/// An On-Off event injects a whole burst, so it gets a lower density; both
/// defaults leave anomalous readings at roughly a seventh of a validation day.
pub fn default_events_per_day(kind: AnomalyKind) -> usize {
    match kind {
        AnomalyKind::OnOff => 1,
        AnomalyKind::Variance | AnomalyKind::Spike => 10,
    }
}

impl ExperimentSettings {
    pub fn new(device_id: impl Into<String>, kind: AnomalyKind) -> Self {
        Self {
            device_id: device_id.into(),
            anomaly: AnomalyConfig {
                count: default_events_per_day(kind),
                ..AnomalyConfig::new(kind)
            },
            hyperparams: Hyperparams::default(),
            n_reps: 30,
            base_seed: 0,
            knn: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::param("n_reps", "must be at least 1"));
        }
        self.anomaly.validate()?;
        self.hyperparams.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub rep: usize,
    pub seed: u64,
    pub origin: Timestamp,
    /// Anomaly events injected into the validation window.
    pub events: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub mean_train_loss: f64,
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn: Option<BaselineScore>,
    /// Wall-clock measurements; kept out of serialized reports so that
    /// reports are reproducible byte for byte.
    #[serde(skip)]
    pub train_wall_time_s: f64,
    #[serde(skip)]
    pub detect_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub anomaly_kind: AnomalyKind,
    pub device_id: String,
    pub patient_train: String,
    pub patient_val: String,
    pub train_span: TimeSpan,
    pub val_span: TimeSpan,
    pub base_seed: u64,
    pub alpha: f64,
    pub repetitions: Vec<RepetitionRecord>,
    pub mean_accuracy: f64,
    pub accuracy_quartiles: Quartiles,
    /// Mean over the repetitions that scored the baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn_mean_accuracy: Option<f64>,
}

impl ExperimentReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.repetitions.iter().map(|r| r.accuracy).collect()
    }

    pub fn train_times(&self) -> Vec<f64> {
        self.repetitions
            .iter()
            .map(|r| r.train_wall_time_s)
            .collect()
    }
}

/// Runs `f` on a pool of `jobs` workers (`0` = available parallelism).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

pub fn repetition_seed(base_seed: u64, rep: usize) -> u64 {
    rng::derive_seed("repetition", &[base_seed.into(), (rep as u64).into()])
}

/// Events to inject into a validation window of length `val_span`.
pub fn events_for_window<R: Rng + ?Sized>(
    count_per_day: usize,
    val_span: TimeSpan,
    rng: &mut R,
) -> usize {
    let expected = count_per_day as f64 * val_span.as_ms() as f64 / MS_PER_DAY as f64;
    let whole = expected.floor();
    let extra = rng.random_bool((expected - whole).clamp(0.0, 1.0));
    whole as usize + usize::from(extra)
}

fn count_in(ds: &PatientDataset, start: Timestamp, end: Timestamp) -> usize {
    let rs = ds.readings();
    rs.partition_point(|r| r.timestamp < end) - rs.partition_point(|r| r.timestamp < start)
}

/// Draws a window origin for which every training source has enough readings
/// in the training window and `val` has enough in the validation window.
/// All datasets must already be restricted to the target device.
fn draw_origin<R: Rng + ?Sized>(
    rng: &mut R,
    train: &[&PatientDataset],
    val: &PatientDataset,
    train_span: TimeSpan,
    val_span: TimeSpan,
) -> Result<WindowSpec> {
    let total = train_span.as_ms() + val_span.as_ms();
    let mut lo = Timestamp::MIN;
    let mut hi = Timestamp::MAX;
    for ds in train.iter().copied().chain(std::iter::once(val)) {
        let (Some(first), Some(last)) = (ds.readings().first(), ds.readings().last()) else {
            return Err(Error::InsufficientSpan {
                available_ms: 0,
                required_ms: total,
            });
        };
        lo = lo.max(first.timestamp);
        hi = hi.min(last.timestamp + 1);
    }
    if hi - lo < total {
        return Err(Error::InsufficientSpan {
            available_ms: (hi - lo).max(0),
            required_ms: total,
        });
    }
    for _ in 0..MAX_ORIGIN_DRAWS {
        let origin = rng.random_range(lo..=hi - total);
        let w = WindowSpec::new(train_span, val_span, origin)?;
        let train_ok = train
            .iter()
            .all(|ds| count_in(ds, w.origin, w.val_start()) >= MIN_WINDOW_READINGS);
        if train_ok && count_in(val, w.val_start(), w.end()) >= MIN_WINDOW_READINGS {
            return Ok(w);
        }
    }
    Err(Error::NoValidOrigin {
        attempts: MAX_ORIGIN_DRAWS,
    })
}

/// Training batch from the clean training windows of every source, scaled by
/// a normalizer fitted on all of them together.
fn training_batch(
    sources: &[&PatientDataset],
    device_id: &str,
    w: &WindowSpec,
) -> Result<(SupervisedBatch, Normalizer)> {
    let mut per_source = Vec::with_capacity(sources.len());
    for ds in sources {
        let clean = LabeledDataset::clean(ds.between(w.origin, w.val_start()));
        let rows = pipeline::slice_window(&clean, device_id, w.origin, w.train_span)?;
        per_source.push(pipeline::featurize(&rows));
    }
    let all: Vec<_> = per_source.iter().flatten().copied().collect();
    let normalizer = pipeline::fit_normalizer(&all)?;
    let batches = per_source
        .iter()
        .map(|rows| pipeline::make_supervised(&normalizer.apply(rows)))
        .collect::<Result<Vec<_>>>()?;
    Ok((pipeline::concat_patients(&batches)?, normalizer))
}

fn validation_batch(
    val: &PatientDataset,
    settings: &ExperimentSettings,
    w: &WindowSpec,
    seed: u64,
    normalizer: &Normalizer,
) -> Result<(SupervisedBatch, usize)> {
    let window = val.between(w.val_start(), w.end());
    let mut count_rng = rng::stream("event-count", &[seed.into()]);
    let events = events_for_window(settings.anomaly.count, w.val_span, &mut count_rng);
    let labeled = if events == 0 {
        LabeledDataset::clean(window)
    } else {
        let cfg = AnomalyConfig {
            count: events,
            seed,
            ..settings.anomaly.clone()
        };
        inject::inject(&window, &settings.device_id, &cfg)?
    };
    let rows = pipeline::slice_window(&labeled, &settings.device_id, w.val_start(), w.val_span)?;
    let batch = pipeline::make_supervised(&normalizer.apply(&pipeline::featurize(&rows)))?;
    Ok((batch, events))
}

fn run_repetition(
    train: &[&PatientDataset],
    val: &PatientDataset,
    settings: &ExperimentSettings,
    train_span: TimeSpan,
    val_span: TimeSpan,
    rep: usize,
) -> Result<RepetitionRecord> {
    let seed = repetition_seed(settings.base_seed, rep);
    let mut origin_rng = rng::stream("origin", &[seed.into()]);
    let w = draw_origin(&mut origin_rng, train, val, train_span, val_span)?;

    let (train_batch, normalizer) = training_batch(train, &settings.device_id, &w)?;
    let (val_batch, events) = validation_batch(val, settings, &w, seed, &normalizer)?;

    let hp = Hyperparams {
        seed: rng::derive_seed("train", &[seed.into()]),
        ..settings.hyperparams.clone()
    };
    let model = detector::train(&train_batch, normalizer, &hp)?;
    let started = Instant::now();
    let threshold = detector::threshold(&model, hp.alpha);
    let flags = detector::detect(&model, threshold, &val_batch);
    let detect_wall_time_s = started.elapsed().as_secs_f64();

    let counts = ConfusionCounts::tally(&flags, &val_batch.labels);
    // The baseline needs at least k training points; tiny windows skip it.
    let knn = match settings.knn {
        Some(k) if train_batch.len() >= k.k => {
            let flags = knn::knn_detect(&train_batch, &val_batch, k.k, k.quantile)?;
            let counts = ConfusionCounts::tally(&flags, &val_batch.labels);
            Some(BaselineScore {
                counts,
                accuracy: accuracy(&counts)?,
            })
        }
        _ => None,
    };

    Ok(RepetitionRecord {
        rep,
        seed,
        origin: w.origin,
        events,
        n_train: train_batch.len(),
        n_val: val_batch.len(),
        mean_train_loss: model.mean_last_epoch_loss,
        threshold,
        accuracy: accuracy(&counts)?,
        counts,
        knn,
        train_wall_time_s: model.train_wall_time_s,
        detect_wall_time_s,
    })
}

fn summarize(
    settings: &ExperimentSettings,
    patient_train: String,
    patient_val: String,
    train_span: TimeSpan,
    val_span: TimeSpan,
    repetitions: Vec<RepetitionRecord>,
) -> ExperimentReport {
    let accs: Vec<f64> = repetitions.iter().map(|r| r.accuracy).collect();
    let knn_accs: Vec<f64> = repetitions
        .iter()
        .filter_map(|r| r.knn.map(|k| k.accuracy))
        .collect();
    ExperimentReport {
        anomaly_kind: settings.anomaly.kind,
        device_id: settings.device_id.clone(),
        patient_train,
        patient_val,
        train_span,
        val_span,
        base_seed: settings.base_seed,
        alpha: settings.hyperparams.alpha,
        mean_accuracy: metrics::mean(&accs),
        accuracy_quartiles: Quartiles::of(&accs).expect("n_reps >= 1"),
        knn_mean_accuracy: (!knn_accs.is_empty()).then(|| metrics::mean(&knn_accs)),
        repetitions,
    }
}

/// Core engine: train on the union of `train`, validate on `val`.
fn run_cell(
    train: &[&PatientDataset],
    val: &PatientDataset,
    patient_train: String,
    settings: &ExperimentSettings,
    train_span: TimeSpan,
    val_span: TimeSpan,
) -> Result<ExperimentReport> {
    settings.validate()?;
    let device = settings.device_id.as_str();
    let spec = val
        .catalog()
        .get(device)
        .ok_or_else(|| Error::DeviceNotFound(device.to_string()))?;
    if !settings.anomaly.kind.accepts(spec.value_format) {
        return Err(Error::IncompatibleKind {
            kind: settings.anomaly.kind.to_string(),
            format: spec.value_format,
        });
    }
    let train_only: Vec<PatientDataset> = train.iter().map(|d| d.restrict_to(device)).collect();
    let train_refs: Vec<&PatientDataset> = train_only.iter().collect();
    let val_only = val.restrict_to(device);

    let reps = (0..settings.n_reps)
        .into_par_iter()
        .map(|rep| run_repetition(&train_refs, &val_only, settings, train_span, val_span, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(
        settings,
        patient_train,
        val.patient_id.clone(),
        train_span,
        val_span,
        reps,
    ))
}

/// `n_reps` inject-train-detect-score cycles on one patient.
pub fn run_repetitions(
    dataset: &PatientDataset,
    settings: &ExperimentSettings,
    train_span: TimeSpan,
    val_span: TimeSpan,
) -> Result<ExperimentReport> {
    run_cell(
        &[dataset],
        dataset,
        dataset.patient_id.clone(),
        settings,
        train_span,
        val_span,
    )
}

/// One report per (patient, train span, val span), patients outermost.
pub fn window_sweep(
    patients: &[PatientDataset],
    settings: &ExperimentSettings,
    train_spans: &[TimeSpan],
    val_spans: &[TimeSpan],
) -> Result<Vec<ExperimentReport>> {
    let cells: Vec<(&PatientDataset, TimeSpan, TimeSpan)> = patients
        .iter()
        .flat_map(|p| {
            train_spans
                .iter()
                .flat_map(move |&t| val_spans.iter().map(move |&v| (p, t, v)))
        })
        .collect();
    cells
        .into_par_iter()
        .map(|(p, t, v)| run_repetitions(p, settings, t, v))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPatientMatrix {
    pub patient_ids: Vec<String>,
    /// `mean_accuracy[i][j]`: trained on patient `i`, validated on patient `j`.
    pub mean_accuracy: Vec<Vec<f64>>,
    pub reports: Vec<ExperimentReport>,
}

impl CrossPatientMatrix {
    pub fn diagonal_mean(&self) -> f64 {
        let n = self.patient_ids.len();
        metrics::mean(&(0..n).map(|i| self.mean_accuracy[i][i]).collect::<Vec<_>>())
    }

    /// `NaN` for a 1x1 matrix.
    pub fn off_diagonal_mean(&self) -> f64 {
        let n = self.patient_ids.len();
        let off: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.mean_accuracy[i][j])
            .collect();
        metrics::mean(&off)
    }
}

/// Trains on each patient and validates on every patient. The validating
/// patient's data passes through the training patient's normalizer.
pub fn cross_patient_matrix(
    patients: &[PatientDataset],
    settings: &ExperimentSettings,
    train_span: TimeSpan,
    val_span: TimeSpan,
) -> Result<CrossPatientMatrix> {
    if patients.is_empty() {
        return Err(Error::param("patients", "need at least one patient"));
    }
    let n = patients.len();
    let reports = (0..n * n)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / n, c % n);
            run_cell(
                &[&patients[i]],
                &patients[j],
                patients[i].patient_id.clone(),
                settings,
                train_span,
                val_span,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_accuracy = reports
        .chunks(n)
        .map(|row| row.iter().map(|r| r.mean_accuracy).collect())
        .collect();
    Ok(CrossPatientMatrix {
        patient_ids: patients.iter().map(|p| p.patient_id.clone()).collect(),
        mean_accuracy,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllTrainComparison {
    pub held_out: String,
    /// Trained on every patient's training window.
    pub all_train: ExperimentReport,
    /// Trained on the held-out patient only.
    pub self_train: ExperimentReport,
}

/// Label used as `patient_train` for models trained on every patient.
pub const ALL_PATIENTS: &str = "all";

pub fn all_train_one_val(
    patients: &[PatientDataset],
    held_out: usize,
    settings: &ExperimentSettings,
    train_span: TimeSpan,
    val_span: TimeSpan,
) -> Result<AllTrainComparison> {
    if patients.len() < 2 {
        return Err(Error::param("patients", "need at least two patients"));
    }
    let target = patients
        .get(held_out)
        .ok_or_else(|| Error::param("held_out", format!("index {held_out} out of range")))?;
    let everyone: Vec<&PatientDataset> = patients.iter().collect();
    let all_train = run_cell(
        &everyone,
        target,
        ALL_PATIENTS.into(),
        settings,
        train_span,
        val_span,
    )?;
    let self_train = run_repetitions(target, settings, train_span, val_span)?;
    Ok(AllTrainComparison {
        held_out: target.patient_id.clone(),
        all_train,
        self_train,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub anomaly_kind: AnomalyKind,
    pub device_id: String,
    pub train_span: TimeSpan,
    pub samples_s: Vec<f64>,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub mean_train_pairs: f64,
    /// Raspberry Pi 4 figure for the same anomaly kind, for comparison.
    pub reference_rpi4_s: f64,
}

/// Training wall time per repetition, measured one repetition at a time.
pub fn bench_training(
    dataset: &PatientDataset,
    settings: &ExperimentSettings,
    train_span: TimeSpan,
    val_span: TimeSpan,
) -> Result<TimingSummary> {
    let report = with_jobs(1, || {
        run_repetitions(dataset, settings, train_span, val_span)
    })?;
    let samples = report.train_times();
    let pairs: Vec<f64> = report
        .repetitions
        .iter()
        .map(|r| r.n_train as f64)
        .collect();
    Ok(TimingSummary {
        anomaly_kind: settings.anomaly.kind,
        device_id: settings.device_id.clone(),
        train_span,
        mean_s: metrics::mean(&samples),
        min_s: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max_s: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        samples_s: samples,
        mean_train_pairs: metrics::mean(&pairs),
        reference_rpi4_s: RPI4_REFERENCE_TRAIN_SECONDS
            .iter()
            .find(|(k, _)| *k == settings.anomaly.kind)
            .map_or(f64::NAN, |(_, s)| *s),
    })
}
