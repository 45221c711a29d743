//! Readings, the device catalog and per-patient datasets.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Milliseconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const MS_PER_SECOND: i64 = 1_000;
pub const MS_PER_MINUTE: i64 = 60 * MS_PER_SECOND;
pub const MS_PER_HOUR: i64 = 60 * MS_PER_MINUTE;
pub const MS_PER_DAY: i64 = 24 * MS_PER_HOUR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionClass {
    Location,
    Door,
    Appliance,
    Temperature,
    HealthRelated,
    Light,
    SleepEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueFormat {
    Binary,
    Float,
    Integer,
}

impl ValueFormat {
    pub fn accepts(self, value: f64) -> bool {
        match self {
            ValueFormat::Binary => value == 0.0 || value == 1.0,
            ValueFormat::Integer => value.is_finite() && value.fract() == 0.0,
            ValueFormat::Float => value.is_finite(),
        }
    }
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $name:literal),* $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),* })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)*
                    other => Err(Error::param(stringify!($ty), format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

str_enum!(FunctionClass {
    Location => "Location",
    Door => "Door",
    Appliance => "Appliance",
    Temperature => "Temperature",
    HealthRelated => "HealthRelated",
    Light => "Light",
    SleepEvent => "SleepEvent",
});

str_enum!(ValueFormat {
    Binary => "Binary",
    Float => "Float",
    Integer => "Integer",
});

/// A catalog entry describing one kind of in-home sensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: String,
    pub function_class: FunctionClass,
    pub value_format: ValueFormat,
    pub continuous: bool,
}

impl DeviceSpec {
    pub fn new(
        device_id: impl Into<String>,
        function_class: FunctionClass,
        value_format: ValueFormat,
        continuous: bool,
    ) -> Self {
        Self {
            device_id: device_id.into(),
            function_class,
            value_format,
            continuous,
        }
    }
}

/// A set of devices with unique ids. Iteration follows insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Catalog {
    devices: Vec<DeviceSpec>,
}

impl Catalog {
    pub fn new(devices: Vec<DeviceSpec>) -> Result<Self> {
        for (i, d) in devices.iter().enumerate() {
            if devices[..i].iter().any(|o| o.device_id == d.device_id) {
                return Err(Error::DuplicateDevice(d.device_id.clone()));
            }
        }
        Ok(Self { devices })
    }

    pub fn get(&self, device_id: &str) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| d.device_id == device_id)
    }

    pub fn contains(&self, device_id: &str) -> bool {
        self.get(device_id).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DeviceSpec> {
        self.devices.iter()
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["device_id", "function_class", "value_format", "continuous"])?;
        for d in &self.devices {
            out.write_record([
                d.device_id.as_str(),
                &d.function_class.to_string(),
                &d.value_format.to_string(),
                if d.continuous { "true" } else { "false" },
            ])?;
        }
        out.flush().map_err(|e| Error::io("<catalog>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut devices = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let continuous = match field(3) {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::param(
                        "continuous",
                        format!("`{other}` is not a boolean"),
                    ))
                }
            };
            devices.push(DeviceSpec::new(
                field(0),
                field(1).parse()?,
                field(2).parse()?,
                continuous,
            ));
        }
        Catalog::new(devices)
    }
}

impl FromIterator<DeviceSpec> for Catalog {
    /// Keeps the first entry for any repeated id.
    fn from_iter<I: IntoIterator<Item = DeviceSpec>>(iter: I) -> Self {
        let mut devices: Vec<DeviceSpec> = Vec::new();
        for d in iter {
            if !devices.iter().any(|o| o.device_id == d.device_id) {
                devices.push(d);
            }
        }
        Self { devices }
    }
}

/// The full in-home device table: location, door, appliance, temperature,
/// health, light and sleep-mat sensors.
pub fn default_catalog() -> Catalog {
    use FunctionClass::*;
    use ValueFormat::*;

    let mut devices = Vec::new();
    let mut group = |class, format, continuous, ids: &[&str]| {
        for id in ids {
            devices.push(DeviceSpec::new(*id, class, format, continuous));
        }
    };
    group(
        Location,
        Binary,
        false,
        &[
            "WC",
            "bathroom",
            "bedroom",
            "corridor",
            "dining room",
            "hallway",
            "kitchen",
            "living room",
            "lounge",
            "office",
            "study",
        ],
    );
    group(
        Door,
        Binary,
        true,
        &[
            "back door",
            "conservatory",
            "fridge door",
            "front door",
            "garage",
            "main door",
            "secondary",
            "utility",
        ],
    );
    group(
        Appliance,
        Binary,
        false,
        &[
            "iron use",
            "kettle use",
            "microwave use",
            "socket use",
            "toaster use",
        ],
    );
    group(
        Temperature,
        Float,
        true,
        &["temperature", "body temperature", "skin temperature"],
    );
    group(
        HealthRelated,
        Float,
        false,
        &[
            "blood pressure",
            "body mass index",
            "body muscle mass",
            "body weight",
            "heart rate",
            "body fat",
            "body water",
            "bone mass",
        ],
    );
    group(Light, Integer, true, &["light level"]);
    group(
        SleepEvent,
        Binary,
        true,
        &["sleep event", "sleep mat snoring"],
    );
    group(
        SleepEvent,
        Float,
        true,
        &["sleep mat heart rate", "sleep mat respiratory rate"],
    );
    group(
        SleepEvent,
        Integer,
        false,
        &["sleep mat state", "agitation"],
    );

    Catalog { devices }
}

/// Devices dropped from modelling because they report rarely or are only
/// installed in a minority of homes.
pub const EXCLUDED_DEVICES: [&str; 8] = [
    "blood pressure",
    "body temperature",
    "body weight",
    "body mass index",
    "body muscle mass",
    "body fat",
    "body water",
    "bone mass",
];

pub fn filter_eligible_devices(catalog: &Catalog) -> Catalog {
    catalog
        .iter()
        .filter(|d| !EXCLUDED_DEVICES.contains(&d.device_id.as_str()))
        .cloned()
        .collect()
}

/// One timestamped sensor sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub timestamp: Timestamp,
    pub device_id: String,
    pub value: f64,
}

impl Reading {
    pub fn new(timestamp: Timestamp, device_id: impl Into<String>, value: f64) -> Self {
        Self {
            timestamp,
            device_id: device_id.into(),
            value,
        }
    }
}

/// All readings recorded in one home, sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientDataset {
    pub patient_id: String,
    readings: Vec<Reading>,
    catalog: Catalog,
}

impl PatientDataset {
    /// Caller guarantees sortedness and catalog/format validity.
    pub(crate) fn from_sorted(
        patient_id: String,
        readings: Vec<Reading>,
        catalog: Catalog,
    ) -> Self {
        debug_assert!(readings
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp));
        Self {
            patient_id,
            readings,
            catalog,
        }
    }

    pub fn readings(&self) -> &[Reading] {
        &self.readings
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn into_readings(self) -> Vec<Reading> {
        self.readings
    }

    pub fn device_readings<'a>(
        &'a self,
        device_id: &'a str,
    ) -> impl Iterator<Item = &'a Reading> + 'a {
        self.readings
            .iter()
            .filter(move |r| r.device_id == device_id)
    }

    /// Earliest and latest timestamp of `device_id`, if it has any readings.
    pub fn device_range(&self, device_id: &str) -> Option<(Timestamp, Timestamp)> {
        let mut it = self.device_readings(device_id);
        let first = it.next()?.timestamp;
        let last = it.last().map_or(first, |r| r.timestamp);
        Some((first, last))
    }

    /// The same home reduced to a single device's readings.
    pub fn restrict_to(&self, device_id: &str) -> PatientDataset {
        PatientDataset {
            patient_id: self.patient_id.clone(),
            readings: self.device_readings(device_id).cloned().collect(),
            catalog: self.catalog.clone(),
        }
    }

    /// Readings of every device with `start <= timestamp < end`.
    pub fn between(&self, start: Timestamp, end: Timestamp) -> PatientDataset {
        let lo = self.readings.partition_point(|r| r.timestamp < start);
        let hi = self.readings.partition_point(|r| r.timestamp < end);
        PatientDataset {
            patient_id: self.patient_id.clone(),
            readings: self.readings[lo..hi].to_vec(),
            catalog: self.catalog.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_readings_csv(&self.readings, w)
    }
}

/// Stable-sorts `readings` and checks every catalog and format invariant.
pub fn validate_dataset(
    patient_id: impl Into<String>,
    mut readings: Vec<Reading>,
    catalog: &Catalog,
) -> Result<PatientDataset> {
    for (index, r) in readings.iter().enumerate() {
        let spec = catalog
            .get(&r.device_id)
            .ok_or_else(|| Error::UnknownDevice(r.device_id.clone()))?;
        if !spec.value_format.accepts(r.value) {
            return Err(Error::FormatViolation {
                index,
                device_id: r.device_id.clone(),
                value: r.value,
            });
        }
    }
    readings.sort_by_key(|r| r.timestamp);
    Ok(PatientDataset {
        patient_id: patient_id.into(),
        readings,
        catalog: catalog.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct ReadingRow {
    timestamp_ms: i64,
    device_id: String,
    value: f64,
}

/// Writes `timestamp_ms,device_id,value` rows. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_readings_csv<W: Write>(readings: &[Reading], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp_ms", "device_id", "value"])?;
    for r in readings {
        out.write_record([
            r.timestamp.to_string(),
            r.device_id.clone(),
            r.value.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<readings>", e))?;
    Ok(())
}

pub fn read_readings_csv<R: Read>(r: R) -> Result<Vec<Reading>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut readings = Vec::new();
    for row in rdr.deserialize() {
        let row: ReadingRow = row?;
        readings.push(Reading::new(row.timestamp_ms, row.device_id, row.value));
    }
    Ok(readings)
}

/// A positive duration in milliseconds, written like `24h`, `3h`, `15min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeSpan(i64);

impl TimeSpan {
    pub const fn from_ms(ms: i64) -> Self {
        TimeSpan(ms)
    }

    pub const fn hours(h: i64) -> Self {
        TimeSpan(h * MS_PER_HOUR)
    }

    pub const fn minutes(m: i64) -> Self {
        TimeSpan(m * MS_PER_MINUTE)
    }

    pub const fn seconds(s: i64) -> Self {
        TimeSpan(s * MS_PER_SECOND)
    }

    pub const fn as_ms(self) -> i64 {
        self.0
    }

    pub fn as_hours(self) -> f64 {
        self.0 as f64 / MS_PER_HOUR as f64
    }

    /// The three window lengths used throughout the experiments.
    pub fn standard_windows() -> [TimeSpan; 3] {
        [
            TimeSpan::hours(24),
            TimeSpan::hours(3),
            TimeSpan::minutes(15),
        ]
    }
}

impl fmt::Display for TimeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ms = self.0;
        if ms != 0 && ms % MS_PER_DAY == 0 && ms / MS_PER_DAY > 1 {
            write!(f, "{}d", ms / MS_PER_DAY)
        } else if ms != 0 && ms % MS_PER_HOUR == 0 {
            write!(f, "{}h", ms / MS_PER_HOUR)
        } else if ms != 0 && ms % MS_PER_MINUTE == 0 {
            write!(f, "{}min", ms / MS_PER_MINUTE)
        } else if ms != 0 && ms % MS_PER_SECOND == 0 {
            write!(f, "{}s", ms / MS_PER_SECOND)
        } else {
            write!(f, "{ms}ms")
        }
    }
}

impl FromStr for TimeSpan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .ok_or_else(|| Error::InvalidSpan(s.to_string()))?;
        let (num, unit) = s.split_at(split);
        let unit_ms = match unit.trim() {
            "ms" => 1.0,
            "s" | "sec" => MS_PER_SECOND as f64,
            "m" | "min" => MS_PER_MINUTE as f64,
            "h" | "hr" => MS_PER_HOUR as f64,
            "d" => MS_PER_DAY as f64,
            _ => return Err(Error::InvalidSpan(s.to_string())),
        };
        let n: f64 = num.parse().map_err(|_| Error::InvalidSpan(s.to_string()))?;
        let ms = (n * unit_ms).round();
        if !(ms >= 1.0 && ms < i64::MAX as f64) {
            return Err(Error::InvalidSpan(s.to_string()));
        }
        Ok(TimeSpan(ms as i64))
    }
}

impl Serialize for TimeSpan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeSpan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn catalog_matches_device_table() {
        let c = default_catalog();
        let kettle = c.get("kettle use").unwrap();
        assert_eq!(kettle.value_format, ValueFormat::Binary);
        assert_eq!(kettle.function_class, FunctionClass::Appliance);
        assert!(!kettle.continuous);

        let light = c.get("light level").unwrap();
        assert_eq!(light.value_format, ValueFormat::Integer);
        assert!(light.continuous);

        assert_eq!(
            c.get("sleep mat heart rate").unwrap().value_format,
            ValueFormat::Float
        );

        let count = |class| c.iter().filter(|d| d.function_class == class).count();
        assert_eq!(count(FunctionClass::Location), 11);
        assert_eq!(count(FunctionClass::Door), 8);
        assert_eq!(count(FunctionClass::Appliance), 5);
        assert_eq!(count(FunctionClass::Temperature), 3);
        assert_eq!(count(FunctionClass::HealthRelated), 8);
        assert_eq!(count(FunctionClass::Light), 1);
        assert_eq!(count(FunctionClass::SleepEvent), 6);
        assert!(c
            .iter()
            .filter(|d| d.function_class == FunctionClass::Door)
            .all(|d| d.continuous));
    }

    #[test]
    fn eligibility_filter() {
        let c = filter_eligible_devices(&default_catalog());
        assert!(!c.contains("body mass index"));
        assert!(!c.contains("body muscle mass"));
        assert!(c.contains("skin temperature"));
        assert!(c.contains("heart rate"));
        assert_eq!(c.len(), default_catalog().len() - EXCLUDED_DEVICES.len());

        let plain = Catalog::new(vec![
            DeviceSpec::new(
                "kitchen",
                FunctionClass::Location,
                ValueFormat::Binary,
                false,
            ),
            DeviceSpec::new(
                "temperature",
                FunctionClass::Temperature,
                ValueFormat::Float,
                true,
            ),
        ])
        .unwrap();
        assert_eq!(filter_eligible_devices(&plain), plain);
    }

    #[test]
    fn filter_is_idempotent() {
        let once = filter_eligible_devices(&default_catalog());
        assert_eq!(filter_eligible_devices(&once), once);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let d = DeviceSpec::new("x", FunctionClass::Light, ValueFormat::Integer, true);
        assert!(matches!(
            Catalog::new(vec![d.clone(), d]),
            Err(Error::DuplicateDevice(_))
        ));
    }

    #[test]
    fn validate_sorts_and_checks() {
        let c = default_catalog();
        let ds = validate_dataset(
            "p",
            vec![
                Reading::new(30, "kitchen", 1.0),
                Reading::new(10, "temperature", 20.5),
                Reading::new(20, "kitchen", 0.0),
            ],
            &c,
        )
        .unwrap();
        let ts: Vec<_> = ds.readings().iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, [10, 20, 30]);

        let err = validate_dataset("p", vec![Reading::new(0, "toilet seat", 1.0)], &c).unwrap_err();
        assert!(matches!(err, Error::UnknownDevice(d) if d == "toilet seat"));

        let err = validate_dataset(
            "p",
            vec![
                Reading::new(0, "kitchen", 1.0),
                Reading::new(1, "kitchen", 0.5),
            ],
            &c,
        )
        .unwrap_err();
        assert!(matches!(err, Error::FormatViolation { index: 1, .. }));

        let err = validate_dataset("p", vec![Reading::new(0, "light level", 2.5)], &c).unwrap_err();
        assert!(matches!(err, Error::FormatViolation { index: 0, .. }));
    }

    #[test]
    fn readings_csv_round_trip() {
        let readings = vec![
            Reading::new(1_600_000_000_000, "temperature", 0.1 + 0.2),
            Reading::new(1_600_000_060_000, "living room", 1.0),
            Reading::new(1_600_000_120_000, "temperature", -1.0e-300),
        ];
        let mut buf = Vec::new();
        write_readings_csv(&readings, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_ms,device_id,value\n"));
        assert_eq!(read_readings_csv(buf.as_slice()).unwrap(), readings);
    }

    #[test]
    fn catalog_csv_round_trip() {
        let c = default_catalog();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"device_id,function_class,value_format,continuous\n"));
        assert_eq!(Catalog::read_csv(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn span_parsing() {
        assert_eq!("24h".parse::<TimeSpan>().unwrap(), TimeSpan::hours(24));
        assert_eq!("15min".parse::<TimeSpan>().unwrap(), TimeSpan::minutes(15));
        assert_eq!("90s".parse::<TimeSpan>().unwrap(), TimeSpan::seconds(90));
        assert_eq!("0.25h".parse::<TimeSpan>().unwrap(), TimeSpan::minutes(15));
        assert!("24x".parse::<TimeSpan>().is_err());
        assert!("0h".parse::<TimeSpan>().is_err());
        assert!("h".parse::<TimeSpan>().is_err());
        for s in TimeSpan::standard_windows() {
            assert_eq!(s.to_string().parse::<TimeSpan>().unwrap(), s);
        }
        assert_eq!(TimeSpan::minutes(15).to_string(), "15min");
    }

    fn reading_strategy() -> impl Strategy<Value = Reading> {
        (
            0i64..50,
            prop::sample::select(vec!["kitchen", "temperature", "light level"]),
            0u8..2,
        )
            .prop_map(|(t, d, v)| Reading::new(t, d, f64::from(v)))
    }

    proptest! {
        #[test]
        fn validation_is_stable_and_idempotent(readings in prop::collection::vec(reading_strategy(), 0..60)) {
            let c = default_catalog();
            let once = validate_dataset("p", readings.clone(), &c).unwrap();
            let twice = validate_dataset("p", once.readings().to_vec(), &c).unwrap();
            prop_assert_eq!(once.readings(), twice.readings());

            // stability: equal timestamps keep input order
            for t in 0..50 {
                let input: Vec<_> = readings.iter().filter(|r| r.timestamp == t).collect();
                let output: Vec<_> = once.readings().iter().filter(|r| r.timestamp == t).collect();
                prop_assert_eq!(input, output);
            }
        }
    }
}
