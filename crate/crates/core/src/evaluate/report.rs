//! Report serialization: JSON documents, a flat per-repetition CSV, a
//! box-plot summary CSV and a separate timing CSV.
//!
//! Only the timing CSV carries wall-clock figures; everything else is a pure
//! function of inputs and seeds.

use std::io::Write;

use serde::Serialize;

use super::{metrics::Quartiles, ExperimentReport};
use crate::error::Result;

pub const FLAT_HEADER: [&str; 12] = [
    "train_span",
    "val_span",
    "patient_train",
    "patient_val",
    "kind",
    "device",
    "rep",
    "accuracy",
    "tp",
    "tn",
    "fp",
    "fn",
];

pub fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
        .map_err(|e| crate::Error::io("<report>", e))
}

/// One row per repetition across all reports.
pub fn write_flat_csv<W: Write>(reports: &[ExperimentReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FLAT_HEADER)?;
    for r in reports {
        for rep in &r.repetitions {
            out.write_record([
                r.train_span.to_string(),
                r.val_span.to_string(),
                r.patient_train.clone(),
                r.patient_val.clone(),
                r.anomaly_kind.to_string(),
                r.device_id.clone(),
                rep.rep.to_string(),
                rep.accuracy.to_string(),
                rep.counts.tp.to_string(),
                rep.counts.tn.to_string(),
                rep.counts.fp.to_string(),
                rep.counts.fn_.to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| crate::Error::io("<report>", e))
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    train_span: String,
    val_span: String,
    patient_train: &'a str,
    patient_val: &'a str,
    kind: String,
    device: &'a str,
    n_reps: usize,
    mean_accuracy: f64,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    knn_mean_accuracy: Option<f64>,
}

/// One row per report with the accuracy five-number summary.
pub fn write_summary_csv<W: Write>(reports: &[ExperimentReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        let Quartiles {
            min,
            q1,
            median,
            q3,
            max,
        } = r.accuracy_quartiles;
        out.serialize(SummaryRow {
            train_span: r.train_span.to_string(),
            val_span: r.val_span.to_string(),
            patient_train: &r.patient_train,
            patient_val: &r.patient_val,
            kind: r.anomaly_kind.to_string(),
            device: &r.device_id,
            n_reps: r.repetitions.len(),
            mean_accuracy: r.mean_accuracy,
            min,
            q1,
            median,
            q3,
            max,
            knn_mean_accuracy: r.knn_mean_accuracy,
        })?;
    }
    out.flush().map_err(|e| crate::Error::io("<report>", e))
}

/// Per-repetition wall-clock timings. Not reproducible across runs.
pub fn write_timings_csv<W: Write>(reports: &[ExperimentReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "train_span",
        "val_span",
        "patient_train",
        "patient_val",
        "kind",
        "device",
        "rep",
        "n_train",
        "train_time_s",
        "detect_time_s",
    ])?;
    for r in reports {
        for rep in &r.repetitions {
            out.write_record([
                r.train_span.to_string(),
                r.val_span.to_string(),
                r.patient_train.clone(),
                r.patient_val.clone(),
                r.anomaly_kind.to_string(),
                r.device_id.clone(),
                rep.rep.to_string(),
                rep.n_train.to_string(),
                rep.train_wall_time_s.to_string(),
                rep.detect_wall_time_s.to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| crate::Error::io("<report>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeSpan;
    use crate::evaluate::{ConfusionCounts, RepetitionRecord};
    use crate::inject::AnomalyKind;

    fn report() -> ExperimentReport {
        let rep = |i: usize, acc: f64| RepetitionRecord {
            rep: i,
            seed: 7,
            origin: 0,
            events: 1,
            n_train: 10,
            n_val: 4,
            mean_train_loss: 0.1,
            threshold: 1.0,
            counts: ConfusionCounts {
                tp: 1,
                tn: 2,
                fp: 1,
                fn_: 0,
            },
            accuracy: acc,
            knn: None,
            train_wall_time_s: 0.5,
            detect_wall_time_s: 0.01,
        };
        ExperimentReport {
            anomaly_kind: AnomalyKind::Spike,
            device_id: "temperature".into(),
            patient_train: "a".into(),
            patient_val: "a".into(),
            train_span: TimeSpan::hours(24),
            val_span: TimeSpan::minutes(15),
            base_seed: 0,
            alpha: 10.0,
            repetitions: vec![rep(0, 0.75), rep(1, 0.75)],
            mean_accuracy: 0.75,
            accuracy_quartiles: Quartiles::of(&[0.75, 0.75]).unwrap(),
            knn_mean_accuracy: None,
        }
    }

    #[test]
    fn flat_csv_rows() {
        let mut buf = Vec::new();
        write_flat_csv(&[report()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], FLAT_HEADER.join(","));
        assert_eq!(lines[1], "24h,15min,a,a,spike,temperature,0,0.75,1,2,1,0");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn json_omits_timings() {
        let mut buf = Vec::new();
        write_json(&report(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains("wall_time"));
        let back: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.repetitions[1].counts, report().repetitions[1].counts);
    }

    #[test]
    fn summary_and_timings() {
        let mut buf = Vec::new();
        write_summary_csv(&[report()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("train_span,val_span,patient_train"));
        assert!(text.lines().nth(1).unwrap().contains(",2,0.75,"));
        let mut buf = Vec::new();
        write_timings_csv(&[report()], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains(",0.5,0.01"));
    }
}
