use serde_json::Value;

use super::RunConfig;
use crate::error::Error;

/// CSV cell for a float: shortest round-trip form, empty for NaN.
pub(crate) fn cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

/// Renders rows as CSV text with the given header.
pub(crate) fn csv_text(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

/// Mean and unbiased SD of the finite values; NaN when undefined.
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64, usize) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = finite.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        f64::NAN
    } else {
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    (mean, sd, n)
}

/// The configuration as embedded in reports. Scheduling and output location
/// do not affect results and are left out so reports compare byte for byte.
pub(crate) fn provenance(cfg: &RunConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Value::Object(map) = &mut v {
        map.remove("workers");
        map.remove("out");
    }
    v
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

pub(crate) fn error_text(e: &Error) -> String {
    e.to_string()
}
