//! CSV and JSON report serialization. Reals are rendered with 9 significant digits.

use std::io::Write;

use serde_json::Value;

use super::{CkaReport, DistanceReport, PwccaReport, Report};
use crate::error::{ProbeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(ProbeError::Validation(format!("unknown report format {other:?}"))),
        }
    }
}

/// Fixed-point rendering with 9 significant digits, e.g. `0.329000000`.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    // The exponent after rounding to 9 digits decides the decimal count.
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.split_once('e').unwrap().1.parse().unwrap();
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// `x` rounded to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap()
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig9(n.as_f64().unwrap());
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

fn to_json(report: &Report) -> Vec<u8> {
    let mut value = serde_json::to_value(report).expect("reports serialize");
    round_value(&mut value);
    let mut out = serde_json::to_vec_pretty(&value).expect("value serializes");
    out.push(b'\n');
    out
}

fn distance_csv(r: &DistanceReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["setting", "layer", "mean", "std", "count", "normalized_mean"])
        .unwrap();
    for (raw, norm) in r.raw.iter().zip(&r.normalized) {
        w.write_record([
            raw.setting.as_str().to_string(),
            raw.layer.to_string(),
            format_sig9(raw.mean),
            format_sig9(raw.std),
            raw.count.to_string(),
            format_sig9(norm.mean),
        ])
        .unwrap();
    }
    w.into_inner().unwrap()
}

fn pwcca_csv(r: &PwccaReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let reverse = r.layers.iter().all(|l| l.pwcca_reverse.is_some()) && !r.layers.is_empty();
    if reverse {
        w.write_record(["layer", "pwcca", "pwcca_reverse"]).unwrap();
    } else {
        w.write_record(["layer", "pwcca"]).unwrap();
    }
    for l in &r.layers {
        let mut row = vec![l.layer.to_string(), format_sig9(l.pwcca)];
        if reverse {
            row.push(format_sig9(l.pwcca_reverse.unwrap()));
        }
        w.write_record(row).unwrap();
    }
    w.into_inner().unwrap()
}

fn cka_csv(r: &CkaReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cka", "baseline_mean", "baseline_std", "delta", "permutations", "seed"])
        .unwrap();
    let c = &r.result;
    w.write_record([
        format_sig9(c.cka),
        format_sig9(c.baseline_mean),
        format_sig9(c.baseline_std),
        format_sig9(c.delta),
        c.permutations.to_string(),
        c.seed.to_string(),
    ])
    .unwrap();
    w.into_inner().unwrap()
}

pub fn report_bytes(report: &Report, format: ReportFormat) -> Vec<u8> {
    match (format, report) {
        (ReportFormat::Json, r) => to_json(r),
        (ReportFormat::Csv, Report::Distance(r)) => distance_csv(r),
        (ReportFormat::Csv, Report::Pwcca(r)) => pwcca_csv(r),
        (ReportFormat::Csv, Report::Cka(r)) => cka_csv(r),
    }
}

/// Writes `report` and returns the number of bytes written.
pub fn write_report<W: Write>(report: &Report, format: ReportFormat, mut destination: W) -> Result<u64> {
    let bytes = report_bytes(report, format);
    destination
        .write_all(&bytes)
        .and_then(|_| destination.flush())
        .map_err(|source| ProbeError::Write { offset: 0, source })?;
    Ok(bytes.len() as u64)
}

/// Parses a JSON report back into its typed form.
pub fn read_report(text: &str) -> Result<Report> {
    serde_json::from_str(text).map_err(|e| ProbeError::Format(format!("bad report JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Setting;
    use crate::metrics::{CkaResult, PairDistanceStats};
    use crate::probe::{DistanceMetadata, FeatureDescriptor};
    use std::collections::BTreeMap;

    #[test]
    fn sig9_examples() {
        assert_eq!(format_sig9(0.3290000000001), "0.329000000");
        assert_eq!(format_sig9(-1.0), "-1.00000000");
        assert_eq!(format_sig9(12.345), "12.3450000");
        assert_eq!(format_sig9(0.000123), "0.000123000000");
        assert_eq!(format_sig9(9.9999999999), "10.0000000");
        assert_eq!(format_sig9(0.0), "0.00000000");
        assert_eq!(format_sig9(1234567891234.0), "1234567891234");
        assert_eq!(round_sig9(0.3290000000001), 0.329);
    }

    fn distance_report() -> Report {
        let mut raw = Vec::new();
        let mut normalized = Vec::new();
        for setting in [Setting::Synonym, Setting::Random] {
            for layer in 1..=3 {
                let mean = layer as f64 / 3.0 + if setting == Setting::Random { 1.0 } else { 0.0 };
                raw.push(PairDistanceStats {
                    setting,
                    layer,
                    mean,
                    std: 0.1,
                    count: 4,
                });
                normalized.push(PairDistanceStats {
                    setting,
                    layer,
                    mean: if setting == Setting::Random { 0.0 } else { -1.0 },
                    std: 0.1,
                    count: 4,
                });
            }
        }
        Report::Distance(DistanceReport {
            metadata: DistanceMetadata {
                pooling: "mean".into(),
                distance: "euclidean".into(),
                normalization: "subtract_random_mean".into(),
                homophone_threshold: Some(0.4),
                seed: Some(7),
                max_pairs_per_setting: Some(100),
                excluded_words: Some(0),
                pair_counts: BTreeMap::from([(Setting::Synonym, 4), (Setting::Random, 4)]),
                empty_settings: vec![],
                num_layers: 3,
            },
            raw,
            normalized,
        })
    }

    #[test]
    fn distance_csv_shape() {
        let text = String::from_utf8(report_bytes(&distance_report(), ReportFormat::Csv)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "setting,layer,mean,std,count,normalized_mean");
        assert_eq!(lines[1], "synonym,1,0.333333333,0.100000000,4,-1.00000000");
    }

    #[test]
    fn json_roundtrip_is_stable() {
        let report = distance_report();
        let bytes = report_bytes(&report, ReportFormat::Json);
        let text = std::str::from_utf8(&bytes).unwrap();
        assert!(text.trim_start().starts_with("{\n  \"kind\": \"distance\""));
        let back = read_report(text).unwrap();
        assert_eq!(report_bytes(&back, ReportFormat::Json), bytes);
        if let (Report::Distance(a), Report::Distance(b)) = (&report, &back) {
            assert_eq!(a.metadata, b.metadata);
            for (x, y) in a.raw.iter().zip(&b.raw) {
                assert_eq!(round_sig9(x.mean), y.mean);
            }
        } else {
            panic!("kind changed");
        }
    }

    #[test]
    fn cka_schema_fixture_round_trips() {
        // Magnitudes typical of a neural codec against input text embeddings.
        let report = Report::Cka(CkaReport {
            speech: FeatureDescriptor {
                source: "speech.fmx".into(),
                rows: 1000,
                dim: 512,
            },
            text: FeatureDescriptor {
                source: "text.fmx".into(),
                rows: 1000,
                dim: 4096,
            },
            result: CkaResult {
                cka: 0.329,
                baseline_mean: 0.242,
                baseline_std: 0.01,
                delta: 0.329 - 0.242,
                permutations: 100,
                seed: 0,
            },
        });
        let csv = String::from_utf8(report_bytes(&report, ReportFormat::Csv)).unwrap();
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "0.329000000,0.242000000,0.0100000000,0.0870000000,100,0"
        );
        let back = read_report(std::str::from_utf8(&report_bytes(&report, ReportFormat::Json)).unwrap()).unwrap();
        match back {
            Report::Cka(r) => {
                assert_eq!(r.result.cka, 0.329);
                assert_eq!(r.result.delta, 0.087);
            }
            _ => panic!("kind changed"),
        }
    }
}
