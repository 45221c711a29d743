//! Subcommand implementations.

use std::path::{Path, PathBuf};

use carewatch_core::domain::{
    default_catalog, filter_eligible_devices, read_readings_csv, validate_dataset, Catalog,
    PatientDataset, TimeSpan, EXCLUDED_DEVICES,
};
use carewatch_core::evaluate::{self, report, ExperimentReport, TimingSummary};
use carewatch_core::inject::{self, AnomalyKind};
use carewatch_core::rng::derive_seed;
use carewatch_core::synth::{self, PatientProfile, SynthOptions};
use serde::{Deserialize, Serialize};

use crate::config::{PatientSource, RunConfig};
use crate::error::{CliError, CliResult};
use crate::rundir::{slug, InputDigest, RunDir};

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub command: String,
    pub reports: Vec<ExperimentReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrices: Vec<DeviceMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub all_train: Vec<AllTrainRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceMatrix {
    pub device_id: String,
    pub anomaly_kind: AnomalyKind,
    pub train_span: TimeSpan,
    pub val_span: TimeSpan,
    pub patient_ids: Vec<String>,
    /// Rows are training patients, columns validation patients.
    pub mean_accuracy: Vec<Vec<f64>>,
    pub diagonal_mean: f64,
    pub off_diagonal_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllTrainRow {
    pub device_id: String,
    pub held_out: String,
    pub self_train_accuracy: f64,
    pub all_train_accuracy: f64,
}

/// Loaded inputs plus the digests of every file they came from.
pub struct Inputs {
    pub catalog: Catalog,
    pub patients: Vec<PatientDataset>,
    pub profiles: Vec<PatientProfile>,
    pub digests: Vec<InputDigest>,
}

fn read_file(path: &Path, digests: &mut Vec<InputDigest>) -> CliResult<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    digests.push(InputDigest::of_bytes(path, &bytes));
    Ok(bytes)
}

/// Eligible catalog from the configured file or the built-in table.
pub fn load_catalog(cfg: &RunConfig, digests: &mut Vec<InputDigest>) -> CliResult<Catalog> {
    let full = match &cfg.catalog {
        Some(path) => Catalog::read_csv(read_file(path, digests)?.as_slice())?,
        None => default_catalog(),
    };
    Ok(filter_eligible_devices(&full))
}

pub fn load_inputs(cfg: &RunConfig, check_kind: bool) -> CliResult<Inputs> {
    let mut digests = Vec::new();
    let catalog = load_catalog(cfg, &mut digests)?;
    cfg.validate(&catalog, check_kind)?;
    let duration = cfg.synth.duration;
    let opts = SynthOptions {
        sample_interval: cfg.synth.sample_interval,
    };
    let mut patients = Vec::new();
    let mut profiles = Vec::new();
    for source in &cfg.patients {
        match source {
            PatientSource::Synthetic { patient_id, seed } => {
                let profile = synth::generate_profile(patient_id, *seed);
                patients.push(synth::generate_dataset_with(
                    &profile,
                    &catalog,
                    cfg.synth.start_ms,
                    duration,
                    &opts,
                )?);
                profiles.push(profile);
            }
            PatientSource::File { path, .. } => {
                let bytes = read_file(path, &mut digests)?;
                let mut readings = read_readings_csv(bytes.as_slice())?;
                readings.retain(|r| !EXCLUDED_DEVICES.contains(&r.device_id.as_str()));
                patients.push(validate_dataset(source.patient_id(), readings, &catalog)?);
            }
        }
    }
    Ok(Inputs {
        catalog,
        patients,
        profiles,
        digests,
    })
}

fn first_window(cfg: &RunConfig) -> (TimeSpan, TimeSpan) {
    (cfg.windows.train[0], cfg.windows.val[0])
}

fn write_json<T: Serialize>(dir: &mut RunDir, name: &str, value: &T) -> CliResult<()> {
    dir.write(name, |b| Ok(report::write_json(value, b)?))?;
    Ok(())
}

/// `report.json`, the flat and summary CSVs and, when timings were measured,
/// `timings.csv`.
fn write_bundle(dir: &mut RunDir, bundle: &ReportBundle, with_timings: bool) -> CliResult<()> {
    write_json(dir, "report.json", bundle)?;
    dir.write("report.csv", |b| {
        Ok(report::write_flat_csv(&bundle.reports, b)?)
    })?;
    dir.write("summary.csv", |b| {
        Ok(report::write_summary_csv(&bundle.reports, b)?)
    })?;
    if with_timings {
        dir.write("timings.csv", |b| {
            Ok(report::write_timings_csv(&bundle.reports, b)?)
        })?;
    }
    Ok(())
}

pub fn describe(r: &ExperimentReport) -> String {
    let knn = r
        .knn_mean_accuracy
        .map(|k| format!(" knn={k:.4}"))
        .unwrap_or_default();
    format!(
        "{} {:<20} train={}/{} val={}/{} reps={} accuracy={:.4}{knn}",
        r.anomaly_kind,
        r.device_id,
        r.patient_train,
        r.train_span,
        r.patient_val,
        r.val_span,
        r.repetitions.len(),
        r.mean_accuracy,
    )
}

fn print_reports(reports: &[ExperimentReport]) {
    for r in reports {
        println!("{}", describe(r));
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> CliResult<PathBuf> {
    let inputs = load_inputs(cfg, false)?;
    let mut dir = RunDir::create(cfg, "synth")?;
    for (source, ds) in cfg.patients.iter().zip(&inputs.patients) {
        if matches!(source, PatientSource::File { .. }) {
            continue;
        }
        dir.write(&format!("{}.csv", slug(&ds.patient_id)), |b| {
            Ok(ds.write_csv(b)?)
        })?;
        println!("{}: {} readings", ds.patient_id, ds.readings().len());
    }
    dir.write("profiles.csv", |b| {
        Ok(synth::write_profiles_csv(&inputs.profiles, b)?)
    })?;
    dir.write("catalog.csv", |b| Ok(inputs.catalog.write_csv(b)?))?;
    dir.finish(cfg, &inputs.digests)
}

pub fn cmd_inject(cfg: &RunConfig) -> CliResult<PathBuf> {
    let inputs = load_inputs(cfg, true)?;
    let devices = cfg.target_devices();
    let mut rows = Vec::new();
    for (pi, ds) in inputs.patients.iter().enumerate() {
        for device in &devices {
            let seed = cfg.anomaly.seed.unwrap_or_else(|| {
                derive_seed(
                    "cli-inject",
                    &[
                        cfg.base_seed.into(),
                        (pi as u64).into(),
                        device.as_str().into(),
                    ],
                )
            });
            let labeled = inject::inject(ds, device, &cfg.anomaly.to_config(seed))?;
            rows.push((ds.patient_id.clone(), device.clone(), seed, labeled));
        }
    }
    let mut dir = RunDir::create(cfg, "inject")?;
    let mut summary = String::from("patient,device,kind,seed,injected_readings\n");
    for (patient, device, seed, labeled) in &rows {
        let stem = format!("{}.{}", slug(patient), slug(device));
        dir.write(&format!("{stem}.readings.csv"), |b| {
            Ok(labeled.dataset.write_csv(b)?)
        })?;
        dir.write(&format!("{stem}.labels.csv"), |b| {
            Ok(labeled.write_labels_csv(b)?)
        })?;
        summary.push_str(&format!(
            "{},{},{},{seed},{}\n",
            csv_field(patient),
            csv_field(device),
            cfg.anomaly.kind,
            labeled.injected_count
        ));
        println!(
            "{patient} {device}: {} injected readings",
            labeled.injected_count
        );
    }
    dir.write("injections.csv", |b| {
        b.extend_from_slice(summary.as_bytes());
        Ok(())
    })?;
    dir.finish(cfg, &inputs.digests)
}

pub fn cmd_run(cfg: &RunConfig) -> CliResult<PathBuf> {
    let inputs = load_inputs(cfg, true)?;
    let (train, val) = first_window(cfg);
    let mut reports = Vec::new();
    for device in cfg.target_devices() {
        let settings = cfg.settings(&device);
        for ds in &inputs.patients {
            reports.push(evaluate::run_repetitions(ds, &settings, train, val)?);
        }
    }
    print_reports(&reports);
    let mut dir = RunDir::create(cfg, "run")?;
    let bundle = ReportBundle {
        command: "run".into(),
        reports,
        matrices: Vec::new(),
        all_train: Vec::new(),
    };
    write_bundle(&mut dir, &bundle, true)?;
    dir.finish(cfg, &inputs.digests)
}

pub fn cmd_sweep(cfg: &RunConfig) -> CliResult<PathBuf> {
    let inputs = load_inputs(cfg, true)?;
    let mut reports = Vec::new();
    for device in cfg.target_devices() {
        let settings = cfg.settings(&device);
        reports.extend(evaluate::window_sweep(
            &inputs.patients,
            &settings,
            &cfg.windows.train,
            &cfg.windows.val,
        )?);
    }
    print_reports(&reports);
    let mut dir = RunDir::create(cfg, "sweep")?;
    let bundle = ReportBundle {
        command: "sweep".into(),
        reports,
        matrices: Vec::new(),
        all_train: Vec::new(),
    };
    write_bundle(&mut dir, &bundle, true)?;
    dir.finish(cfg, &inputs.digests)
}

pub fn cmd_crossval(cfg: &RunConfig) -> CliResult<PathBuf> {
    let inputs = load_inputs(cfg, true)?;
    if inputs.patients.len() < 2 {
        return Err(CliError::config(
            "patients",
            "crossval needs at least two patients",
        ));
    }
    let (train, val) = first_window(cfg);
    let mut bundle = ReportBundle {
        command: "crossval".into(),
        reports: Vec::new(),
        matrices: Vec::new(),
        all_train: Vec::new(),
    };
    for device in cfg.target_devices() {
        let settings = cfg.settings(&device);
        let m = evaluate::cross_patient_matrix(&inputs.patients, &settings, train, val)?;
        println!(
            "{} {device}: diagonal={:.4} off-diagonal={:.4}",
            cfg.anomaly.kind,
            m.diagonal_mean(),
            m.off_diagonal_mean()
        );
        bundle.matrices.push(DeviceMatrix {
            device_id: device.clone(),
            anomaly_kind: cfg.anomaly.kind,
            train_span: train,
            val_span: val,
            patient_ids: m.patient_ids.clone(),
            mean_accuracy: m.mean_accuracy.clone(),
            diagonal_mean: m.diagonal_mean(),
            off_diagonal_mean: m.off_diagonal_mean(),
        });
        bundle.reports.extend(m.reports);
        for held_out in 0..inputs.patients.len() {
            let c = evaluate::all_train_one_val(&inputs.patients, held_out, &settings, train, val)?;
            println!(
                "{} {device} held out {}: self={:.4} all={:.4}",
                cfg.anomaly.kind, c.held_out, c.self_train.mean_accuracy, c.all_train.mean_accuracy
            );
            bundle.all_train.push(AllTrainRow {
                device_id: device.clone(),
                held_out: c.held_out,
                self_train_accuracy: c.self_train.mean_accuracy,
                all_train_accuracy: c.all_train.mean_accuracy,
            });
            bundle.reports.push(c.all_train);
        }
    }
    let mut dir = RunDir::create(cfg, "crossval")?;
    write_bundle(&mut dir, &bundle, true)?;
    dir.write("matrix.csv", |b| write_matrix_csv(&bundle.matrices, b))?;
    dir.write("all_train.csv", |b| {
        b.extend_from_slice(b"device,held_out,self_train_accuracy,all_train_accuracy\n");
        for r in &bundle.all_train {
            b.extend_from_slice(
                format!(
                    "{},{},{},{}\n",
                    csv_field(&r.device_id),
                    csv_field(&r.held_out),
                    r.self_train_accuracy,
                    r.all_train_accuracy
                )
                .as_bytes(),
            );
        }
        Ok(())
    })?;
    dir.finish(cfg, &inputs.digests)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One block per device: `device,train_patient,<val patient ids...>`.
fn write_matrix_csv(matrices: &[DeviceMatrix], b: &mut Vec<u8>) -> CliResult<()> {
    for m in matrices {
        let mut header = vec!["device".to_string(), "train_patient".to_string()];
        header.extend(m.patient_ids.iter().map(|p| csv_field(p)));
        b.extend_from_slice(header.join(",").as_bytes());
        b.push(b'\n');
        for (id, row) in m.patient_ids.iter().zip(&m.mean_accuracy) {
            let mut line = vec![csv_field(&m.device_id), csv_field(id)];
            line.extend(row.iter().map(|a| a.to_string()));
            b.extend_from_slice(line.join(",").as_bytes());
            b.push(b'\n');
        }
    }
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig) -> CliResult<PathBuf> {
    let cfg = RunConfig {
        jobs: 1,
        ..cfg.clone()
    };
    let inputs = load_inputs(&cfg, false)?;
    let patient = &inputs.patients[0];
    let (train, val) = first_window(&cfg);
    let mut summaries: Vec<TimingSummary> = Vec::new();
    let mut reports = Vec::new();
    for kind in AnomalyKind::ALL {
        let kind_cfg = RunConfig {
            anomaly: crate::config::AnomalySection {
                kind,
                ..cfg.anomaly.clone()
            },
            ..cfg.clone()
        };
        let device = cfg.device_for(kind, &inputs.catalog);
        let mut settings = kind_cfg.settings(&device);
        settings.knn = None;
        let t = evaluate::bench_training(patient, &settings, train, val)?;
        println!(
            "{kind:<8} {device:<20} train={train} reps={} mean={:.4}s min={:.4}s max={:.4}s pairs={:.0} (Raspberry Pi 4 reference: {} s)",
            t.samples_s.len(),
            t.mean_s,
            t.min_s,
            t.max_s,
            t.mean_train_pairs,
            t.reference_rpi4_s
        );
        reports.push(evaluate::run_repetitions(patient, &settings, train, val)?);
        summaries.push(t);
    }
    let mut dir = RunDir::create(&cfg, "bench")?;
    let bundle = ReportBundle {
        command: "bench".into(),
        reports,
        matrices: Vec::new(),
        all_train: Vec::new(),
    };
    write_bundle(&mut dir, &bundle, false)?;
    write_json(&mut dir, "bench.json", &summaries)?;
    dir.write("bench.csv", |b| {
        b.extend_from_slice(
            b"kind,device,train_span,n_reps,mean_s,min_s,max_s,mean_train_pairs,reference_rpi4_s\n",
        );
        for t in &summaries {
            b.extend_from_slice(
                format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    t.anomaly_kind,
                    csv_field(&t.device_id),
                    t.train_span,
                    t.samples_s.len(),
                    t.mean_s,
                    t.min_s,
                    t.max_s,
                    t.mean_train_pairs,
                    t.reference_rpi4_s
                )
                .as_bytes(),
            );
        }
        Ok(())
    })?;
    dir.finish(&cfg, &inputs.digests)
}

/// Re-summarizes the `report.json` of existing run directories.
pub fn cmd_report(cfg: &RunConfig, run_dirs: &[PathBuf]) -> CliResult<PathBuf> {
    if run_dirs.is_empty() {
        return Err(CliError::config(
            "run_dirs",
            "name at least one run directory",
        ));
    }
    let mut digests = Vec::new();
    let mut reports = Vec::new();
    for d in run_dirs {
        let bytes = read_file(&d.join("report.json"), &mut digests)?;
        let bundle: ReportBundle =
            serde_json::from_slice(&bytes).map_err(carewatch_core::Error::from)?;
        reports.extend(bundle.reports);
    }
    print_reports(&reports);
    let mut dir = RunDir::create(cfg, "report")?;
    let bundle = ReportBundle {
        command: "report".into(),
        reports,
        matrices: Vec::new(),
        all_train: Vec::new(),
    };
    write_bundle(&mut dir, &bundle, false)?;
    dir.finish(cfg, &digests)
}
