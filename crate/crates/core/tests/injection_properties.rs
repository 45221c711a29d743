use carewatch_core::domain::{
    default_catalog, validate_dataset, PatientDataset, Reading, MS_PER_MINUTE, MS_PER_SECOND,
};
use carewatch_core::inject::{inject, AnomalyConfig, AnomalyKind, LabeledDataset};
use carewatch_core::Error;
use proptest::prelude::*;

const T0: i64 = 1_700_000_000_000;

/// A target series plus background readings from a second device.
fn dataset(device: &str, gaps: &[i64], values: &[f64]) -> PatientDataset {
    let mut t = T0;
    let mut readings = Vec::new();
    for (i, (&g, &v)) in gaps.iter().zip(values).enumerate() {
        t += g;
        readings.push(Reading::new(t, device, v));
        if i % 3 == 0 {
            readings.push(Reading::new(t, "light level", (i % 50) as f64));
        }
    }
    validate_dataset("prop", readings, &default_catalog()).unwrap()
}

fn expected_injected(cfg: &AnomalyConfig) -> usize {
    cfg.count
        * match cfg.kind {
            AnomalyKind::OnOff => cfg.on_off_burst_len,
            AnomalyKind::Variance => cfg.variance_samples,
            AnomalyKind::Spike => 1,
        }
}

fn check(
    original: &PatientDataset,
    out: &LabeledDataset,
    device: &str,
    cfg: &AnomalyConfig,
) -> Result<(), String> {
    let rs = out.dataset.readings();
    if out.labels.len() != rs.len() {
        return Err("label count differs from reading count".into());
    }
    if rs.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
        return Err("output not sorted".into());
    }
    let kept: Vec<&Reading> = rs
        .iter()
        .zip(&out.labels)
        .filter(|(_, &l)| !l)
        .map(|(r, _)| r)
        .collect();
    let orig: Vec<&Reading> = original.readings().iter().collect();
    if kept != orig {
        return Err("original readings altered or reordered".into());
    }
    let injected: Vec<&Reading> = rs
        .iter()
        .zip(&out.labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .collect();
    if injected.len() != expected_injected(cfg) || out.injected_count != injected.len() {
        return Err(format!(
            "injected {} readings, expected {}",
            injected.len(),
            expected_injected(cfg)
        ));
    }
    let times: Vec<i64> = original
        .device_readings(device)
        .map(|r| r.timestamp)
        .collect();
    let (lo, hi) = (times[0], *times.last().unwrap());
    for r in injected {
        if r.device_id != device {
            return Err("injected reading on wrong device".into());
        }
        if r.timestamp < lo || r.timestamp > hi {
            return Err(format!(
                "injected timestamp {} outside [{lo}, {hi}]",
                r.timestamp
            ));
        }
    }
    Ok(())
}

fn kind_and_device() -> impl Strategy<Value = (AnomalyKind, &'static str)> {
    prop_oneof![
        Just((AnomalyKind::OnOff, "kitchen")),
        Just((AnomalyKind::OnOff, "front door")),
        Just((AnomalyKind::Variance, "temperature")),
        Just((AnomalyKind::Variance, "light level")),
        Just((AnomalyKind::Spike, "temperature")),
        Just((AnomalyKind::Spike, "light level")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn injection_invariants(
        (kind, device) in kind_and_device(),
        n in 3usize..200,
        gap_seed in prop::collection::vec(1i64..20, 200),
        count in 1usize..6,
        burst in 1usize..60,
        interval in 1i64..2000,
        samples in 1usize..40,
        seed in any::<u64>(),
    ) {
        let gaps: Vec<i64> = gap_seed[..n].iter().map(|g| g * MS_PER_MINUTE).collect();
        let values: Vec<f64> = (0..n)
            .map(|i| match kind {
                AnomalyKind::OnOff => (i % 2) as f64,
                _ if device == "light level" => (100 + (i * 7) % 40) as f64,
                _ => 20.0 + (i as f64 * 0.1).sin(),
            })
            .collect();
        let ds = dataset(device, &gaps, &values);
        let cfg = AnomalyConfig {
            kind,
            count,
            seed,
            on_off_burst_len: burst,
            on_off_interval_ms: interval,
            variance_samples: samples,
            ..AnomalyConfig::default()
        };
        let out = inject(&ds, device, &cfg).unwrap();
        prop_assert_eq!(check(&ds, &out, device, &cfg), Ok(()));
        let fmt = ds.catalog().get(device).unwrap().value_format;
        for (r, l) in out.iter() {
            if l {
                prop_assert!(fmt.accepts(r.value), "{} not valid for {:?}", r.value, fmt);
            }
        }
    }

    #[test]
    fn injection_is_deterministic(seed in any::<u64>(), count in 1usize..5) {
        let gaps = vec![MS_PER_MINUTE; 120];
        let values: Vec<f64> = (0..120).map(|i| 20.0 + (i as f64 * 0.2).cos()).collect();
        let ds = dataset("temperature", &gaps, &values);
        let cfg = AnomalyConfig { kind: AnomalyKind::Variance, count, seed, ..AnomalyConfig::default() };
        prop_assert_eq!(inject(&ds, "temperature", &cfg).unwrap(), inject(&ds, "temperature", &cfg).unwrap());
    }
}

#[test]
fn burst_longer_than_series_is_rejected() {
    let ds = dataset("kitchen", &[MS_PER_SECOND; 3], &[1.0, 0.0, 1.0]);
    let cfg = AnomalyConfig {
        kind: AnomalyKind::OnOff,
        count: 1,
        on_off_burst_len: 40,
        ..AnomalyConfig::default()
    };
    assert!(matches!(
        inject(&ds, "kitchen", &cfg),
        Err(Error::InsufficientSpan { .. })
    ));
}

#[test]
fn kind_and_format_must_match() {
    let ds = dataset("temperature", &[MS_PER_MINUTE; 10], &[20.0; 10]);
    let cfg = AnomalyConfig::new(AnomalyKind::OnOff);
    assert!(matches!(
        inject(&ds, "temperature", &cfg),
        Err(Error::IncompatibleKind { .. })
    ));
    let cfg = AnomalyConfig::new(AnomalyKind::Spike);
    assert!(inject(&ds, "kitchen", &cfg).is_err());
}
