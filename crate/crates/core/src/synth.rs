//! Synthetic patient homes with a learnable daily routine.
//!
//! Each patient gets a [`PatientProfile`] (wake/sleep hours, activity level,
//! temperature and light curves, sensor noise) drawn from fixed uniform
//! ranges. [`generate_dataset`] turns a profile into readings for every
//! device of a catalog:
//!
//! * binary devices fire on/off events from a piecewise-constant Poisson
//!   process, `activity_rate` per hour while awake and `activity_rate / 20`
//!   while asleep; every event is an `1` reading followed by a `0` reading
//!   after a dwell of 30 s to 10 min;
//! * continuous numeric devices are sampled on a fixed grid (60 s by default)
//!   from `base + amplitude * sin(2*pi*(h - wake_hour - 2)/24)` plus Gaussian
//!   noise, clamped to `base +- (amplitude + 6 sigma)`;
//! * non-continuous numeric devices use the same curve at Poisson sample
//!   times.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_dataset, Catalog, DeviceSpec, FunctionClass, PatientDataset, Reading, TimeSpan,
    Timestamp, ValueFormat, MS_PER_DAY, MS_PER_HOUR, MS_PER_MINUTE, MS_PER_SECOND,
};
use crate::error::{Error, Result};
use crate::rng;

pub const WAKE_HOUR_RANGE: (f64, f64) = (5.0, 10.0);
pub const SLEEP_HOUR_RANGE: (f64, f64) = (20.0, 24.0);
pub const ACTIVITY_RATE_RANGE: (f64, f64) = (4.0, 12.0);
pub const TEMPERATURE_BASE_RANGE: (f64, f64) = (17.0, 25.0);
pub const TEMPERATURE_AMPLITUDE_RANGE: (f64, f64) = (0.5, 3.0);
pub const LIGHT_PEAK_RANGE: (f64, f64) = (200.0, 800.0);
pub const NOISE_SIGMA_RANGE: (f64, f64) = (0.05, 0.4);

/// Ratio between the waking and sleeping event rate of binary devices.
pub const SLEEP_RATE_DIVISOR: f64 = 20.0;
pub const DWELL_MIN_MS: i64 = 30 * MS_PER_SECOND;
pub const DWELL_MAX_MS: i64 = 10 * MS_PER_MINUTE;
pub const ENVELOPE_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub patient_id: String,
    pub seed: u64,
    pub wake_hour: f64,
    pub sleep_hour: f64,
    pub activity_rate: f64,
    pub temperature_base: f64,
    pub temperature_daily_amplitude: f64,
    pub light_peak: f64,
    pub noise_sigma: f64,
}

impl PatientProfile {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.wake_hour < self.sleep_hour) {
            return Err(Error::param("wake_hour", "must precede sleep_hour"));
        }
        if !(self.activity_rate > 0.0) {
            return Err(Error::param("activity_rate", "must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::param("noise_sigma", "must be non-negative"));
        }
        Ok(())
    }

    fn is_awake(&self, hour_of_day: f64) -> bool {
        hour_of_day >= self.wake_hour && hour_of_day < self.sleep_hour
    }

    fn event_rate_per_hour(&self, hour_of_day: f64) -> f64 {
        if self.is_awake(hour_of_day) {
            self.activity_rate
        } else {
            self.activity_rate / SLEEP_RATE_DIVISOR
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

/// Draws a profile; a pure function of `(patient_id, seed)`.
pub fn generate_profile(patient_id: &str, seed: u64) -> PatientProfile {
    let mut r = rng::stream("profile", &[seed.into(), patient_id.into()]);
    PatientProfile {
        patient_id: patient_id.to_string(),
        seed,
        wake_hour: uniform(&mut r, WAKE_HOUR_RANGE),
        sleep_hour: uniform(&mut r, SLEEP_HOUR_RANGE),
        activity_rate: uniform(&mut r, ACTIVITY_RATE_RANGE),
        temperature_base: uniform(&mut r, TEMPERATURE_BASE_RANGE),
        temperature_daily_amplitude: uniform(&mut r, TEMPERATURE_AMPLITUDE_RANGE),
        light_peak: uniform(&mut r, LIGHT_PEAK_RANGE),
        noise_sigma: uniform(&mut r, NOISE_SIGMA_RANGE),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    /// Sampling period of continuous numeric devices.
    pub sample_interval: TimeSpan,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            sample_interval: TimeSpan::seconds(60),
        }
    }
}

/// Daily curve of one numeric device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal {
    pub base: f64,
    pub amplitude: f64,
    pub sigma: f64,
    /// Hour of day at which the sinusoid crosses `base` going up.
    pub phase_hour: f64,
}

impl Signal {
    pub fn mean_at(&self, hour_of_day: f64) -> f64 {
        self.base + self.amplitude * (2.0 * PI * (hour_of_day - self.phase_hour) / 24.0).sin()
    }

    /// `(lo, hi)` = `base -+ (amplitude + 6 sigma)`.
    pub fn envelope(&self) -> (f64, f64) {
        let half = self.amplitude + ENVELOPE_SIGMAS * self.sigma;
        (self.base - half, self.base + half)
    }
}

/// The curve a profile implies for a numeric device.
pub fn device_signal(profile: &PatientProfile, device: &DeviceSpec) -> Signal {
    let p = profile;
    let noise = p.noise_sigma;
    let (base, amplitude, sigma) = match device.device_id.as_str() {
        "temperature" => (p.temperature_base, p.temperature_daily_amplitude, noise),
        "skin temperature" => (
            p.temperature_base + 12.0,
            0.5 * p.temperature_daily_amplitude,
            noise,
        ),
        "body temperature" => (36.8, 0.3, 0.5 * noise),
        "light level" => (
            0.5 * p.light_peak,
            0.5 * p.light_peak,
            noise * p.light_peak / 20.0,
        ),
        "sleep mat heart rate" => (60.0, 4.0, 10.0 * noise),
        "sleep mat respiratory rate" => (14.0, 1.5, 3.0 * noise),
        "heart rate" => (72.0, 6.0, 15.0 * noise),
        "blood pressure" => (120.0, 5.0, 10.0 * noise),
        "body mass index" => (25.0, 0.1, noise),
        "body muscle mass" => (30.0, 0.2, noise),
        "body weight" => (70.0, 0.5, 2.0 * noise),
        "body fat" => (25.0, 0.2, noise),
        "body water" => (55.0, 0.3, noise),
        "bone mass" => (3.0, 0.05, 0.1 * noise),
        "sleep mat state" => (1.5, 1.5, 2.0 * noise),
        "agitation" => (1.0, 1.0, 2.0 * noise),
        _ => match device.function_class {
            FunctionClass::Temperature => {
                (p.temperature_base, p.temperature_daily_amplitude, noise)
            }
            FunctionClass::Light => (
                0.5 * p.light_peak,
                0.5 * p.light_peak,
                noise * p.light_peak / 20.0,
            ),
            _ => (10.0, 2.0, noise),
        },
    };
    Signal {
        base,
        amplitude,
        sigma,
        phase_hour: p.wake_hour + 2.0,
    }
}

fn hour_of_day(ts: Timestamp) -> f64 {
    ts.rem_euclid(MS_PER_DAY) as f64 / MS_PER_HOUR as f64
}

/// Start of the next constant-rate segment after `ts`.
fn next_rate_change(profile: &PatientProfile, ts: Timestamp) -> Timestamp {
    let day_start = ts - ts.rem_euclid(MS_PER_DAY);
    let edge = |h: f64| day_start + (h * MS_PER_HOUR as f64).ceil() as i64;
    [
        edge(profile.wake_hour),
        edge(profile.sleep_hour),
        day_start + MS_PER_DAY,
    ]
    .into_iter()
    .filter(|&e| e > ts)
    .min()
    .expect("day end is always after ts")
}

/// Next arrival at or after `from` of a Poisson process whose hourly rate is
/// `rate(hour_of_day)`, piecewise constant between rate changes.
fn next_arrival(
    rng: &mut ChaCha8Rng,
    profile: &PatientProfile,
    rate: impl Fn(f64) -> f64,
    mut from: Timestamp,
    end: Timestamp,
) -> Option<Timestamp> {
    while from < end {
        let lambda_per_ms = rate(hour_of_day(from)) / MS_PER_HOUR as f64;
        let seg_end = next_rate_change(profile, from).min(end);
        if lambda_per_ms > 0.0 {
            let gap = Exp::new(lambda_per_ms).expect("positive rate").sample(rng);
            let t = from as f64 + gap;
            if t < seg_end as f64 {
                return Some(t.floor() as i64);
            }
        }
        from = seg_end;
    }
    None
}

fn sample_value(rng: &mut ChaCha8Rng, signal: &Signal, format: ValueFormat, ts: Timestamp) -> f64 {
    let mean = signal.mean_at(hour_of_day(ts));
    let noise = if signal.sigma > 0.0 {
        Normal::new(0.0, signal.sigma)
            .expect("finite sigma")
            .sample(rng)
    } else {
        0.0
    };
    let (lo, hi) = signal.envelope();
    let v = (mean + noise).clamp(lo, hi);
    match format {
        ValueFormat::Integer => v.round().max(0.0),
        _ => v,
    }
}

fn device_readings(
    profile: &PatientProfile,
    device: &DeviceSpec,
    start: Timestamp,
    end: Timestamp,
    opts: &SynthOptions,
) -> Vec<Reading> {
    let id = device.device_id.as_str();
    let mut r = rng::stream(
        "synth-device",
        &[
            profile.seed.into(),
            profile.patient_id.as_str().into(),
            id.into(),
        ],
    );
    let mut out = Vec::new();

    if device.value_format == ValueFormat::Binary {
        let mut t = start;
        while let Some(on) =
            next_arrival(&mut r, profile, |h| profile.event_rate_per_hour(h), t, end)
        {
            let off = on + r.random_range(DWELL_MIN_MS..=DWELL_MAX_MS);
            if off >= end {
                break;
            }
            out.push(Reading::new(on, id, 1.0));
            out.push(Reading::new(off, id, 0.0));
            t = off;
        }
        return out;
    }

    let signal = device_signal(profile, device);
    if device.continuous {
        let step = opts.sample_interval.as_ms();
        let mut t = start;
        while t < end {
            out.push(Reading::new(
                t,
                id,
                sample_value(&mut r, &signal, device.value_format, t),
            ));
            t += step;
        }
    } else {
        // sparse spot measurements, a few per waking day
        let rate = |h: f64| if profile.is_awake(h) { 0.25 } else { 0.0 };
        let mut t = start;
        while let Some(ts) = next_arrival(&mut r, profile, rate, t, end) {
            out.push(Reading::new(
                ts,
                id,
                sample_value(&mut r, &signal, device.value_format, ts),
            ));
            t = ts + 1;
        }
    }
    out
}

/// Generates readings for every device in `catalog` over `[start, start + duration)`.
pub fn generate_dataset(
    profile: &PatientProfile,
    catalog: &Catalog,
    start: Timestamp,
    duration: TimeSpan,
) -> Result<PatientDataset> {
    generate_dataset_with(profile, catalog, start, duration, &SynthOptions::default())
}

pub fn generate_dataset_with(
    profile: &PatientProfile,
    catalog: &Catalog,
    start: Timestamp,
    duration: TimeSpan,
    opts: &SynthOptions,
) -> Result<PatientDataset> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if duration.as_ms() <= 0 {
        return Err(Error::param("duration", "must be positive"));
    }
    if opts.sample_interval.as_ms() <= 0 {
        return Err(Error::param("sample_interval", "must be positive"));
    }
    profile.validate()?;
    let end = start + duration.as_ms();
    let mut readings = Vec::new();
    for device in catalog.iter() {
        readings.extend(device_readings(profile, device, start, end, opts));
    }
    validate_dataset(profile.patient_id.clone(), readings, catalog)
}

pub fn write_profiles_csv<W: Write>(profiles: &[PatientProfile], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in profiles {
        out.serialize(p)?;
    }
    out.flush().map_err(|e| Error::io("<profiles>", e))?;
    Ok(())
}
