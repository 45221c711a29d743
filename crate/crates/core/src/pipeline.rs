//! Per-device preprocessing: window slicing, the time-gap feature,
//! scaling and one-step-ahead supervised pairs.

use serde::{Deserialize, Serialize};

use crate::domain::{Reading, TimeSpan, Timestamp, MS_PER_HOUR};
use crate::error::{Error, Result};
use crate::inject::LabeledDataset;

/// Train window `[origin, origin + train_span)` followed directly by the
/// validation window of length `val_span`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub train_span: TimeSpan,
    pub val_span: TimeSpan,
    pub origin: Timestamp,
}

impl WindowSpec {
    pub fn new(train_span: TimeSpan, val_span: TimeSpan, origin: Timestamp) -> Result<Self> {
        if train_span.as_ms() <= 0 || val_span.as_ms() <= 0 {
            return Err(Error::param("span", "window spans must be positive"));
        }
        Ok(Self {
            train_span,
            val_span,
            origin,
        })
    }

    pub fn val_start(&self) -> Timestamp {
        self.origin + self.train_span.as_ms()
    }

    pub fn end(&self) -> Timestamp {
        self.val_start() + self.val_span.as_ms()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub value: f64,
    /// Hours since the previous reading of the same device.
    pub delta_t: f64,
    pub label: bool,
}

/// Inputs `(value, delta_t)`, next-value targets and target labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupervisedBatch {
    pub inputs: Vec<[f64; 2]>,
    pub targets: Vec<f64>,
    pub labels: Vec<bool>,
}

impl SupervisedBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Readings of `device_id` with `start <= timestamp < start + span`.
pub fn slice_window(
    labeled: &LabeledDataset,
    device_id: &str,
    start: Timestamp,
    span: TimeSpan,
) -> Result<Vec<(Reading, bool)>> {
    if span.as_ms() <= 0 {
        return Err(Error::param("span", "must be positive"));
    }
    let end = start + span.as_ms();
    let readings = labeled.dataset.readings();
    let lo = readings.partition_point(|r| r.timestamp < start);
    let hi = readings.partition_point(|r| r.timestamp < end);
    let rows: Vec<(Reading, bool)> = readings[lo..hi]
        .iter()
        .zip(&labeled.labels[lo..hi])
        .filter(|(r, _)| r.device_id == device_id)
        .map(|(r, &l)| (r.clone(), l))
        .collect();
    if rows.len() < 2 {
        return Err(Error::EmptyWindow {
            start,
            span_ms: span.as_ms(),
        });
    }
    Ok(rows)
}

/// Appends the gap to the previous reading and drops the first row.
pub fn featurize(rows: &[(Reading, bool)]) -> Vec<FeatureRow> {
    rows.windows(2)
        .map(|w| FeatureRow {
            value: w[1].0.value,
            delta_t: (w[1].0.timestamp - w[0].0.timestamp) as f64 / MS_PER_HOUR as f64,
            label: w[1].1,
        })
        .collect()
}

/// Train-window scaling constants. The value channel is min-max scaled, the
/// gap channel divided by its maximum; a constant channel maps to 0.5.
/// Validation data is scaled with the same constants and is not clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub value_min: f64,
    pub value_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Normalizer {
    pub fn value_is_degenerate(&self) -> bool {
        self.value_min == self.value_max
    }

    pub fn delta_is_degenerate(&self) -> bool {
        self.delta_min == self.delta_max
    }

    pub fn scale_value(&self, v: f64) -> f64 {
        if self.value_is_degenerate() {
            0.5
        } else {
            (v - self.value_min) / (self.value_max - self.value_min)
        }
    }

    /// Inverse of [`Normalizer::scale_value`]; a degenerate channel maps back
    /// to its single training value.
    pub fn unscale_value(&self, s: f64) -> f64 {
        if self.value_is_degenerate() {
            self.value_min
        } else {
            s * (self.value_max - self.value_min) + self.value_min
        }
    }

    pub fn scale_delta(&self, d: f64) -> f64 {
        if self.delta_is_degenerate() {
            0.5
        } else {
            d / self.delta_max
        }
    }

    pub fn apply(&self, rows: &[FeatureRow]) -> Vec<FeatureRow> {
        rows.iter()
            .map(|r| FeatureRow {
                value: self.scale_value(r.value),
                delta_t: self.scale_delta(r.delta_t),
                label: r.label,
            })
            .collect()
    }
}

pub fn fit_normalizer(train_rows: &[FeatureRow]) -> Result<Normalizer> {
    if train_rows.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut n = Normalizer {
        value_min: f64::INFINITY,
        value_max: f64::NEG_INFINITY,
        delta_min: f64::INFINITY,
        delta_max: f64::NEG_INFINITY,
    };
    for r in train_rows {
        n.value_min = n.value_min.min(r.value);
        n.value_max = n.value_max.max(r.value);
        n.delta_min = n.delta_min.min(r.delta_t);
        n.delta_max = n.delta_max.max(r.delta_t);
    }
    Ok(n)
}

pub fn apply_normalizer(n: &Normalizer, rows: &[FeatureRow]) -> Vec<FeatureRow> {
    n.apply(rows)
}

/// Pairs each row with the value of the row after it.
pub fn make_supervised(rows: &[FeatureRow]) -> Result<SupervisedBatch> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData {
            device_id: String::new(),
            found: rows.len(),
            needed: 2,
        });
    }
    let mut batch = SupervisedBatch {
        inputs: Vec::with_capacity(rows.len() - 1),
        targets: Vec::with_capacity(rows.len() - 1),
        labels: Vec::with_capacity(rows.len() - 1),
    };
    for w in rows.windows(2) {
        batch.inputs.push([w[0].value, w[0].delta_t]);
        batch.targets.push(w[1].value);
        batch.labels.push(w[1].label);
    }
    Ok(batch)
}

pub fn concat_patients(batches: &[SupervisedBatch]) -> Result<SupervisedBatch> {
    if batches.is_empty() {
        return Err(Error::param("batches", "need at least one batch"));
    }
    let mut out = SupervisedBatch::default();
    for b in batches {
        out.inputs.extend_from_slice(&b.inputs);
        out.targets.extend_from_slice(&b.targets);
        out.labels.extend_from_slice(&b.labels);
    }
    Ok(out)
}
