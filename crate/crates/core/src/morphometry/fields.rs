use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::ConnectivityTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "mm")]
    Millimeter,
    #[serde(rename = "1/mm")]
    InverseMillimeter,
    #[serde(rename = "1")]
    Dimensionless,
}

/// One scalar per vertex of a tagged connectivity. NaN marks an undefined value.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexScalarField {
    pub values: Vec<f64>,
    pub tag: ConnectivityTag,
    pub unit: Unit,
}

impl VertexScalarField {
    pub fn new(values: Vec<f64>, tag: ConnectivityTag, unit: Unit) -> Result<Self> {
        if values.len() != tag.vertex_count {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a connectivity with {} vertices",
                values.len(),
                tag.vertex_count
            )));
        }
        Ok(Self { values, tag, unit })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `vertex_id,value`.
    pub fn to_csv_string(&self) -> String {
        write_field_csv(&self.values)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Reads `vertex_id,value` rows; ids must be exactly `0..V` in order.
    pub fn load_csv(path: impl AsRef<Path>, tag: ConnectivityTag, unit: Unit) -> Result<Self> {
        let values = read_indexed_csv(path.as_ref(), "value", |s| s.parse::<f64>().ok())?;
        Self::new(values, tag, unit)
    }
}

pub(crate) fn write_field_csv(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 24 + 16);
    out.push_str("vertex_id,value\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

fn read_indexed_csv<T>(
    path: &Path,
    column: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "vertex_id" || &headers[1] != column {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header vertex_id,{column}"),
        });
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad vertex id {:?}", &record[0])))?;
        if id != i {
            return Err(bad(format!("vertex id {id} out of order, expected {i}")));
        }
        let value =
            parse(record[1].trim()).ok_or_else(|| bad(format!("bad {column} {:?}", &record[1])))?;
        out.push(value);
    }
    Ok(out)
}

/// Per-vertex class labels with dense ids `0..C` and a name per class.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLabeling {
    pub labels: Vec<u32>,
    pub names: Vec<String>,
    pub tag: ConnectivityTag,
}

impl RegionLabeling {
    pub fn new(labels: Vec<u32>, names: Vec<String>, tag: ConnectivityTag) -> Result<Self> {
        if labels.len() != tag.vertex_count {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a connectivity with {} vertices",
                labels.len(),
                tag.vertex_count
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= names.len()) {
            return Err(Error::InvalidInput(format!(
                "label {bad} has no entry in a table of {} names",
                names.len()
            )));
        }
        Ok(Self { labels, names, tag })
    }

    pub fn class_count(&self) -> usize {
        self.names.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.names.len()];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    pub fn label_id(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }

    /// Writes `vertex_id,label_id` rows to `csv_path` and the name table to `json_path`.
    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let json_path = json_path.as_ref();
        let mut out = String::from("vertex_id,label_id\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        fs::write(csv_path, out).map_err(|e| Error::io(csv_path, e))?;
        let table =
            serde_json::to_string_pretty(&self.names).map_err(|e| Error::json(json_path, e))?;
        fs::write(json_path, table + "\n").map_err(|e| Error::io(json_path, e))
    }

    pub fn load(
        csv_path: impl AsRef<Path>,
        json_path: impl AsRef<Path>,
        tag: ConnectivityTag,
    ) -> Result<Self> {
        let json_path = json_path.as_ref();
        let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let names: Vec<String> =
            serde_json::from_str(&text).map_err(|e| Error::json(json_path, e))?;
        let labels = read_indexed_csv(csv_path.as_ref(), "label_id", |s| s.parse::<u32>().ok())?;
        Self::new(labels, names, tag)
    }
}
