//! Anomaly injection.
//!
//! An injection draws `count` anchor timestamps uniformly inside the target
//! device's observed range, builds one anomalous event per anchor, merges the
//! events into the original frame and re-sorts by time. Every reading carries
//! a ground-truth flag: `false` for original readings, `true` for injected ones.
//! Injected readings sort after originals that share their timestamp.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{PatientDataset, Reading, Timestamp, ValueFormat};
use crate::error::{Error, Result};
use crate::rng;

/// Floor applied to a zero local standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Number of original readings around an anchor used for local statistics.
pub const LOCAL_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    OnOff,
    Variance,
    Spike,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [
        AnomalyKind::OnOff,
        AnomalyKind::Variance,
        AnomalyKind::Spike,
    ];

    pub fn accepts(self, format: ValueFormat) -> bool {
        match self {
            AnomalyKind::OnOff => format == ValueFormat::Binary,
            AnomalyKind::Variance | AnomalyKind::Spike => format != ValueFormat::Binary,
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyKind::OnOff => "on-off",
            AnomalyKind::Variance => "variance",
            AnomalyKind::Spike => "spike",
        })
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "on-off" | "onoff" => Ok(AnomalyKind::OnOff),
            "variance" => Ok(AnomalyKind::Variance),
            "spike" => Ok(AnomalyKind::Spike),
            _ => Err(Error::param("kind", format!("unknown anomaly kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyConfig {
    pub kind: AnomalyKind,
    /// Number of anomaly events.
    pub count: usize,
    pub seed: u64,
    pub on_off_burst_len: usize,
    pub on_off_interval_ms: i64,
    pub variance_sigma_factor: f64,
    pub variance_samples: usize,
    pub spike_magnitude_factor: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            kind: AnomalyKind::Spike,
            count: 10,
            seed: 0,
            on_off_burst_len: 40,
            on_off_interval_ms: 500,
            variance_sigma_factor: 6.0,
            variance_samples: 20,
            spike_magnitude_factor: 8.0,
        }
    }
}

impl AnomalyConfig {
    pub fn new(kind: AnomalyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::param("count", "must be positive"));
        }
        if self.on_off_burst_len == 0 {
            return Err(Error::param("on_off_burst_len", "must be positive"));
        }
        if self.on_off_interval_ms <= 0 {
            return Err(Error::param("on_off_interval_ms", "must be positive"));
        }
        if !(self.variance_sigma_factor > 1.0) {
            return Err(Error::param("variance_sigma_factor", "must exceed 1"));
        }
        if self.variance_samples == 0 {
            return Err(Error::param("variance_samples", "must be positive"));
        }
        if !(self.spike_magnitude_factor > 1.0) {
            return Err(Error::param("spike_magnitude_factor", "must exceed 1"));
        }
        Ok(())
    }

    /// Injected readings produced per event.
    pub fn readings_per_event(&self) -> usize {
        match self.kind {
            AnomalyKind::OnOff => self.on_off_burst_len,
            AnomalyKind::Variance => self.variance_samples,
            AnomalyKind::Spike => 1,
        }
    }
}

/// A dataset plus per-reading ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub dataset: PatientDataset,
    pub labels: Vec<bool>,
    pub injected_count: usize,
}

impl LabeledDataset {
    /// Wraps an untouched dataset: every reading is normal.
    pub fn clean(dataset: PatientDataset) -> Self {
        let labels = vec![false; dataset.readings().len()];
        Self {
            dataset,
            labels,
            injected_count: 0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Reading, bool)> {
        self.dataset
            .readings()
            .iter()
            .zip(self.labels.iter().copied())
    }

    /// Writes `timestamp_ms,device_id,value,is_anomaly`.
    pub fn write_labels_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["timestamp_ms", "device_id", "value", "is_anomaly"])?;
        for (r, label) in self.iter() {
            out.write_record([
                r.timestamp.to_string(),
                r.device_id.clone(),
                r.value.to_string(),
                label.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<labels>", e))?;
        Ok(())
    }
}

/// `burst_len` readings alternating 1, 0, 1, ... every `on_off_interval_ms`.
pub fn make_on_off_event(
    device_id: &str,
    anchor: Timestamp,
    config: &AnomalyConfig,
) -> Vec<Reading> {
    (0..config.on_off_burst_len)
        .map(|i| {
            let value = if i % 2 == 0 { 1.0 } else { 0.0 };
            Reading::new(
                anchor + i as i64 * config.on_off_interval_ms,
                device_id,
                value,
            )
        })
        .collect()
}

/// Standard deviation of the Gaussian used by a variance event.
pub fn variance_event_sigma(local_sigma: f64, config: &AnomalyConfig) -> f64 {
    config.variance_sigma_factor * local_sigma.max(SIGMA_FLOOR)
}

/// `variance_samples` Gaussian draws centred on `local_mean`, `spacing_ms` apart.
pub fn make_variance_event<R: Rng + ?Sized>(
    rng: &mut R,
    device_id: &str,
    anchor: Timestamp,
    local_mean: f64,
    local_sigma: f64,
    spacing_ms: i64,
    config: &AnomalyConfig,
) -> Vec<Reading> {
    let dist =
        Normal::new(local_mean, variance_event_sigma(local_sigma, config)).expect("finite sigma");
    (0..config.variance_samples)
        .map(|i| Reading::new(anchor + i as i64 * spacing_ms, device_id, dist.sample(rng)))
        .collect()
}

/// A single outlier at `underlying_level * spike_magnitude_factor`; the
/// neighbouring original readings form the return to the underlying level.
pub fn make_spike_event(
    device_id: &str,
    anchor: Timestamp,
    underlying_level: f64,
    config: &AnomalyConfig,
) -> Vec<Reading> {
    vec![Reading::new(
        anchor,
        device_id,
        underlying_level * config.spike_magnitude_factor,
    )]
}

/// Mean and population standard deviation of the `LOCAL_WINDOW` readings
/// closest in time to `anchor`. `series` must be sorted by timestamp.
pub fn local_stats(series: &[&Reading], anchor: Timestamp) -> (f64, f64) {
    let n = series.len().min(LOCAL_WINDOW);
    // two-pointer expansion from the insertion point
    let mut right = series.partition_point(|r| r.timestamp < anchor);
    let mut left = right;
    while right - left < n {
        let take_left = match (left.checked_sub(1), right < series.len()) {
            (Some(l), true) => anchor - series[l].timestamp <= series[right].timestamp - anchor,
            (Some(_), false) => true,
            (None, _) => false,
        };
        if take_left {
            left -= 1;
        } else {
            right += 1;
        }
    }
    let window = &series[left..right];
    let mean = window.iter().map(|r| r.value).sum::<f64>() / n as f64;
    let var = window.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

fn median_gap(series: &[&Reading]) -> i64 {
    let mut gaps: Vec<i64> = series
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .collect();
    gaps.sort_unstable();
    gaps[gaps.len() / 2].max(1)
}

fn conform(value: f64, format: ValueFormat) -> f64 {
    match format {
        ValueFormat::Integer => value.round(),
        _ => value,
    }
}

/// Injects `config.count` anomaly events into `device_id`'s series.
///
/// Events are placed so that every injected timestamp stays inside the
/// device's `[earliest, latest]` range. Variance events longer than that
/// range are compressed by shrinking their sample spacing.
pub fn inject(
    dataset: &PatientDataset,
    device_id: &str,
    config: &AnomalyConfig,
) -> Result<LabeledDataset> {
    config.validate()?;
    let spec = dataset
        .catalog()
        .get(device_id)
        .ok_or_else(|| Error::DeviceNotFound(device_id.to_string()))?;
    if !config.kind.accepts(spec.value_format) {
        return Err(Error::IncompatibleKind {
            kind: config.kind.to_string(),
            format: spec.value_format,
        });
    }
    let series: Vec<&Reading> = dataset.device_readings(device_id).collect();
    if series.is_empty() {
        return Err(Error::DeviceNotFound(device_id.to_string()));
    }
    if series.len() < 2 {
        return Err(Error::InsufficientData {
            device_id: device_id.to_string(),
            found: series.len(),
            needed: 2,
        });
    }
    let earliest = series[0].timestamp;
    let latest = series[series.len() - 1].timestamp;
    let range = latest - earliest;

    let n = config.readings_per_event() as i64;
    let spacing = match config.kind {
        AnomalyKind::OnOff => config.on_off_interval_ms,
        AnomalyKind::Variance => {
            let gap = median_gap(&series);
            if n > 1 {
                gap.min(range / (n - 1))
            } else {
                gap
            }
        }
        AnomalyKind::Spike => 0,
    };
    let extent = (n - 1) * spacing;
    if extent > range {
        return Err(Error::InsufficientSpan {
            available_ms: range,
            required_ms: extent,
        });
    }

    let mut injected = Vec::with_capacity(config.count * config.readings_per_event());
    for event in 0..config.count {
        let mut r = rng::stream(
            "inject",
            &[config.seed.into(), device_id.into(), (event as u64).into()],
        );
        let anchor = r.random_range(earliest..=latest - extent);
        let readings = match config.kind {
            AnomalyKind::OnOff => make_on_off_event(device_id, anchor, config),
            AnomalyKind::Variance => {
                let (mean, sigma) = local_stats(&series, anchor);
                make_variance_event(&mut r, device_id, anchor, mean, sigma, spacing, config)
            }
            AnomalyKind::Spike => {
                let (level, _) = local_stats(&series, anchor);
                make_spike_event(device_id, anchor, level, config)
            }
        };
        injected.extend(readings.into_iter().map(|mut r| {
            r.value = conform(r.value, spec.value_format);
            r
        }));
    }

    let injected_count = injected.len();
    let mut merged: Vec<(Reading, bool)> = dataset
        .readings()
        .iter()
        .cloned()
        .map(|r| (r, false))
        .chain(injected.into_iter().map(|r| (r, true)))
        .collect();
    merged.sort_by_key(|(r, _)| r.timestamp);
    let (readings, labels): (Vec<_>, Vec<_>) = merged.into_iter().unzip();

    Ok(LabeledDataset {
        dataset: PatientDataset::from_sorted(
            dataset.patient_id.clone(),
            readings,
            dataset.catalog().clone(),
        ),
        labels,
        injected_count,
    })
}
