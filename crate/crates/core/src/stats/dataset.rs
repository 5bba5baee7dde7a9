use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariates of one scan: who, when, and the subject-level covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitMeta {
    pub subject: String,
    pub visit: u32,
    pub age_baseline: f64,
    pub time_years: f64,
    pub diagnosis: u8,
}

/// One row of the long-format table `subject,visit,age_baseline,time_years,diagnosis,value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmeRow {
    pub subject: String,
    pub visit: u32,
    pub age_baseline: f64,
    pub time_years: f64,
    pub diagnosis: u8,
    pub value: f64,
}

impl LmeRow {
    pub fn new(meta: &VisitMeta, value: f64) -> Self {
        Self {
            subject: meta.subject.clone(),
            visit: meta.visit,
            age_baseline: meta.age_baseline,
            time_years: meta.time_years,
            diagnosis: meta.diagnosis,
            value,
        }
    }

    pub fn meta(&self) -> VisitMeta {
        VisitMeta {
            subject: self.subject.clone(),
            visit: self.visit,
            age_baseline: self.age_baseline,
            time_years: self.time_years,
            diagnosis: self.diagnosis,
        }
    }
}

/// Checks the study-design invariants and returns the row indices of every
/// subject, ordered by visit, keyed by subject id.
pub fn group_by_subject(meta: &[VisitMeta]) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, m) in meta.iter().enumerate() {
        if !(m.age_baseline.is_finite() && m.time_years.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "subject {} visit {}: non-finite age or time",
                m.subject, m.visit
            )));
        }
        if m.diagnosis > 1 {
            return Err(Error::InvalidDataset(format!(
                "subject {} visit {}: diagnosis must be 0 or 1, got {}",
                m.subject, m.visit, m.diagnosis
            )));
        }
        groups.entry(m.subject.clone()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "need at least 2 subjects, got {}",
            groups.len()
        )));
    }
    for (id, rows) in groups.iter_mut() {
        rows.sort_by_key(|&i| meta[i].visit);
        let first = &meta[rows[0]];
        if first.time_years != 0.0 {
            return Err(Error::InvalidDataset(format!(
                "subject {id}: first visit {} has time_years {} (expected 0)",
                first.visit, first.time_years
            )));
        }
        for pair in rows.windows(2) {
            let (a, b) = (&meta[pair[0]], &meta[pair[1]]);
            if a.visit == b.visit {
                return Err(Error::InvalidDataset(format!(
                    "subject {id}: visit {} appears twice",
                    a.visit
                )));
            }
            if b.time_years <= a.time_years {
                return Err(Error::InvalidDataset(format!(
                    "subject {id}: visit times not strictly increasing at visit {}",
                    b.visit
                )));
            }
            if b.diagnosis != a.diagnosis {
                return Err(Error::InvalidDataset(format!(
                    "subject {id}: diagnosis changes at visit {}",
                    b.visit
                )));
            }
            if b.age_baseline != a.age_baseline {
                return Err(Error::InvalidDataset(format!(
                    "subject {id}: baseline age changes at visit {}",
                    b.visit
                )));
            }
        }
    }
    Ok(groups)
}

/// Validated long-format table for a single response.
#[derive(Debug, Clone, PartialEq)]
pub struct LmeDataset {
    rows: Vec<LmeRow>,
}

impl LmeDataset {
    pub fn new(rows: Vec<LmeRow>) -> Result<Self> {
        let meta: Vec<VisitMeta> = rows.iter().map(LmeRow::meta).collect();
        group_by_subject(&meta)?;
        if let Some(r) = rows.iter().find(|r| !r.value.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "subject {} visit {}: non-finite value",
                r.subject, r.visit
            )));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[LmeRow] {
        &self.rows
    }

    pub fn meta(&self) -> Vec<VisitMeta> {
        self.rows.iter().map(LmeRow::meta).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let rows = csv::Reader::from_reader(file)
            .deserialize()
            .collect::<std::result::Result<Vec<LmeRow>, _>>()
            .map_err(|e| Error::csv(path, e))?;
        Self::new(rows)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
