//! Command-line front end: argument parsing, configuration merging and
//! dispatch to the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod rundir;

use std::path::PathBuf;
use std::str::FromStr;

use carewatch_core::domain::TimeSpan;
use carewatch_core::evaluate::with_jobs;
use carewatch_core::inject::AnomalyKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{synthetic_cohort, PatientSource, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "carewatch",
    version,
    about = "Anomaly injection and detection experiments on home-monitoring sensor data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic patient readings.
    Synth(Opts),
    /// Inject anomalies into each patient's series; write augmented readings and labels.
    Inject(Opts),
    /// Repeated experiments at the first configured window pair.
    Run(Opts),
    /// Repeated experiments over the train x val window grid.
    Sweep(Opts),
    /// Cross-patient matrix and all-patients training comparison.
    Crossval(Opts),
    /// Training wall time per anomaly kind, single-threaded.
    Bench(Opts),
    /// Re-summarize existing run directories.
    Report {
        #[command(flatten)]
        opts: Opts,
        /// Run directories containing report.json.
        run_dirs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub n_reps: Option<usize>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub dump_config: bool,
    /// Anomaly kind: on-off, variance or spike.
    #[arg(long)]
    pub kind: Option<String>,
    /// Target device (repeatable).
    #[arg(long = "device")]
    pub devices: Vec<String>,
    /// Training spans, comma separated (e.g. 24h,3h,15min).
    #[arg(long, value_delimiter = ',')]
    pub train_span: Vec<String>,
    /// Validation spans, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub val_span: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Anomaly events (per 24 h of validation window in experiments).
    #[arg(long)]
    pub count: Option<usize>,
    /// Use a synthetic cohort of this many patients.
    #[arg(long)]
    pub patients: Option<usize>,
    /// Patient readings CSV (repeatable); replaces the configured patients.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Days of synthetic data per patient.
    #[arg(long, conflicts_with = "hours")]
    pub days: Option<u32>,
    /// Hours of synthetic data per patient.
    #[arg(long)]
    pub hours: Option<u32>,
    /// Start of synthetic data, ISO-8601 date or date-time (UTC if no offset).
    #[arg(long)]
    pub start: Option<String>,
    /// Fixed injection seed for `inject`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// On-Off toggles per event.
    #[arg(long)]
    pub burst_len: Option<usize>,
    /// On-Off toggle spacing in milliseconds.
    #[arg(long)]
    pub interval_ms: Option<i64>,
    /// Variance event sigma as a multiple of the local sigma.
    #[arg(long)]
    pub sigma_factor: Option<f64>,
    /// Readings per variance event.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Spike height as a multiple of the local level.
    #[arg(long)]
    pub spike_factor: Option<f64>,
    /// Skip the kNN baseline.
    #[arg(long)]
    pub no_knn: bool,
}

fn parse_spans(field: &str, raw: &[String]) -> CliResult<Vec<TimeSpan>> {
    raw.iter()
        .map(|s| TimeSpan::from_str(s.trim()).map_err(|e| CliError::config(field, e.to_string())))
        .collect()
}

/// Milliseconds since the epoch for an RFC 3339 date-time, a naive
/// date-time or a bare date, the latter two taken as UTC.
fn parse_start(s: &str) -> CliResult<i64> {
    use chrono::{DateTime, NaiveDate, NaiveDateTime};
    let s = s.trim();
    let parsed = DateTime::parse_from_rfc3339(s)
        .map(|d| d.timestamp_millis())
        .or_else(|_| {
            NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
                .map(|d| d.and_utc().timestamp_millis())
        })
        .or_else(|_| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis())
        });
    parsed.map_err(|_| {
        CliError::config(
            "start",
            format!("`{s}` is not an ISO-8601 date or date-time"),
        )
    })
}

impl Opts {
    /// Loads the config file, if any, and applies flag overrides.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.base_seed {
            cfg.base_seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.n_reps {
            cfg.n_reps = v;
        }
        if let Some(k) = &self.kind {
            cfg.anomaly.kind =
                AnomalyKind::from_str(k).map_err(|e| CliError::config("kind", e.to_string()))?;
        }
        if !self.devices.is_empty() {
            cfg.devices = self.devices.clone();
        }
        if !self.train_span.is_empty() {
            cfg.windows.train = parse_spans("train_span", &self.train_span)?;
        }
        if !self.val_span.is_empty() {
            cfg.windows.val = parse_spans("val_span", &self.val_span)?;
        }
        if let Some(v) = self.alpha {
            cfg.training.alpha = v;
        }
        if let Some(v) = self.epochs {
            cfg.training.epochs = v;
        }
        if let Some(v) = self.count {
            cfg.anomaly.count = Some(v);
        }
        if let Some(n) = self.patients {
            cfg.patients = synthetic_cohort(n);
        }
        if !self.inputs.is_empty() {
            cfg.patients = self
                .inputs
                .iter()
                .map(|p| PatientSource::File {
                    path: p.clone(),
                    patient_id: None,
                })
                .collect();
        }
        if let Some(v) = self.days {
            cfg.synth.duration = TimeSpan::hours(24 * i64::from(v));
        }
        if let Some(v) = self.hours {
            cfg.synth.duration = TimeSpan::hours(i64::from(v));
        }
        if let Some(s) = &self.start {
            cfg.synth.start_ms = parse_start(s)?;
        }
        if let Some(v) = self.seed {
            cfg.anomaly.seed = Some(v);
        }
        if let Some(v) = self.burst_len {
            cfg.anomaly.on_off_burst_len = v;
        }
        if let Some(v) = self.interval_ms {
            cfg.anomaly.on_off_interval_ms = v;
        }
        if let Some(v) = self.sigma_factor {
            cfg.anomaly.variance_sigma_factor = v;
        }
        if let Some(v) = self.samples {
            cfg.anomaly.variance_samples = v;
        }
        if let Some(v) = self.spike_factor {
            cfg.anomaly.spike_magnitude_factor = v;
        }
        if self.no_knn {
            cfg.knn.enabled = false;
        }
        Ok(cfg)
    }
}

/// Runs one parsed invocation. Returns the run directory, or `None` when
/// only the configuration was printed.
pub fn run(cli: Cli) -> CliResult<Option<PathBuf>> {
    let (opts, run_dirs) = match &cli.command {
        Command::Synth(o)
        | Command::Inject(o)
        | Command::Run(o)
        | Command::Sweep(o)
        | Command::Crossval(o)
        | Command::Bench(o) => (o, None),
        Command::Report { opts, run_dirs } => (opts, Some(run_dirs)),
    };
    let cfg = opts.resolve()?;
    if opts.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(None);
    }
    let jobs = cfg.jobs;
    let dir = with_jobs(jobs, || match &cli.command {
        Command::Synth(_) => commands::cmd_synth(&cfg),
        Command::Inject(_) => commands::cmd_inject(&cfg),
        Command::Run(_) => commands::cmd_run(&cfg),
        Command::Sweep(_) => commands::cmd_sweep(&cfg),
        Command::Crossval(_) => commands::cmd_crossval(&cfg),
        Command::Bench(_) => commands::cmd_bench(&cfg),
        Command::Report { .. } => commands::cmd_report(&cfg, run_dirs.expect("report dirs")),
    })?;
    Ok(Some(dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("carewatch").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let Command::Sweep(o) = parse(&[
            "sweep",
            "--kind",
            "on-off",
            "--train-span",
            "24h,15min",
            "--device",
            "kitchen",
            "--device",
            "front door",
            "--n-reps",
            "2",
            "--patients",
            "3",
            "--no-knn",
        ])
        .command
        else {
            panic!()
        };
        let cfg = o.resolve().unwrap();
        assert_eq!(cfg.anomaly.kind, AnomalyKind::OnOff);
        assert_eq!(
            cfg.windows.train,
            vec![TimeSpan::hours(24), TimeSpan::minutes(15)]
        );
        assert_eq!(cfg.windows.val.len(), 3);
        assert_eq!(cfg.devices, vec!["kitchen", "front door"]);
        assert_eq!(cfg.patients.len(), 3);
        assert_eq!(cfg.n_reps, 2);
        assert!(!cfg.knn.enabled);
    }

    #[test]
    fn bad_span_flag_names_field() {
        let Command::Run(o) = parse(&["run", "--val-span", "24x"]).command else {
            panic!()
        };
        assert!(matches!(o.resolve(), Err(CliError::Config { field, .. }) if field == "val_span"));
    }

    #[test]
    fn flags_win_over_file() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.toml");
        std::fs::write(&path, "n_reps = 7\nbase_seed = 9\n").unwrap();
        let p = path.to_str().unwrap();
        let Command::Run(o) = parse(&["run", "--config", p, "--n-reps", "2"]).command else {
            panic!()
        };
        let cfg = o.resolve().unwrap();
        assert_eq!((cfg.n_reps, cfg.base_seed), (2, 9));
    }

    #[test]
    fn synth_and_inject_flags() {
        let Command::Inject(o) = parse(&[
            "inject",
            "--hours",
            "36",
            "--start",
            "2024-03-01",
            "--seed",
            "5",
            "--burst-len",
            "8",
            "--spike-factor",
            "4.5",
        ])
        .command
        else {
            panic!()
        };
        let cfg = o.resolve().unwrap();
        assert_eq!(cfg.synth.duration, TimeSpan::hours(36));
        assert_eq!(cfg.synth.start_ms, 1_709_251_200_000);
        assert_eq!(cfg.anomaly.seed, Some(5));
        assert_eq!(cfg.anomaly.on_off_burst_len, 8);
        assert_eq!(cfg.anomaly.spike_magnitude_factor, 4.5);
        assert_eq!(
            parse_start("2024-03-01T01:00:00Z").unwrap(),
            1_709_254_800_000
        );
        assert_eq!(
            parse_start("2024-03-01T02:00:00+01:00").unwrap(),
            1_709_254_800_000
        );
        assert_eq!(
            parse_start("2024-03-01T01:00:00").unwrap(),
            1_709_254_800_000
        );
        assert!(
            matches!(parse_start("March 1"), Err(CliError::Config { field, .. }) if field == "start")
        );
    }
}
