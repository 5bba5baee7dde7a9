use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::ConnectivityTag;
use crate::morphometry::{RegionLabeling, Unit, VertexScalarField};

/// Half-open age brackets `[e0, e1), [e1, e2), …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgeBrackets {
    edges: Vec<f64>,
}

impl Default for AgeBrackets {
    /// Ten-year brackets from 50 to 100.
    fn default() -> Self {
        Self {
            edges: vec![50.0, 60.0, 70.0, 80.0, 90.0, 100.0],
        }
    }
}

impl AgeBrackets {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2
            || edges.windows(2).any(|w| !(w[0] < w[1]))
            || edges.iter().any(|e| !e.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "bracket edges must be finite and strictly increasing, got {edges:?}"
            )));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bracket_of(&self, age: f64) -> Option<usize> {
        self.edges
            .windows(2)
            .position(|w| w[0] <= age && age < w[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketNorm {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Per-vertex mean; empty when `count == 0`.
    pub mean: Vec<f64>,
    /// Per-vertex unbiased SD; empty when `count < 2`.
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZNorms {
    pub brackets: AgeBrackets,
    pub norms: Vec<BracketNorm>,
    pub tag: ConnectivityTag,
    /// Reference scans outside every bracket.
    pub unassigned: usize,
}

/// Per-bracket vertex-wise mean and SD of a reference cohort's baseline scans.
pub fn zscore_norms(
    ages: &[f64],
    fields: &[VertexScalarField],
    brackets: &AgeBrackets,
) -> Result<ZNorms> {
    if ages.len() != fields.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ages for {} fields",
            ages.len(),
            fields.len()
        )));
    }
    let tag = fields
        .first()
        .ok_or_else(|| Error::InvalidDataset("empty reference cohort".into()))?
        .tag;
    if let Some(f) = fields.iter().find(|f| f.tag != tag) {
        return Err(Error::ConnectivityMismatch(format!(
            "reference fields on {tag} and {}",
            f.tag
        )));
    }
    let mut members: Vec<Vec<&VertexScalarField>> = vec![Vec::new(); brackets.len()];
    let mut unassigned = 0;
    for (&age, f) in ages.iter().zip(fields) {
        match brackets.bracket_of(age) {
            Some(b) => members[b].push(f),
            None => unassigned += 1,
        }
    }
    let norms = members
        .iter()
        .enumerate()
        .map(|(b, group)| {
            let count = group.len();
            let k = count as f64;
            let mean: Vec<f64> = if count == 0 {
                Vec::new()
            } else {
                (0..tag.vertex_count)
                    .map(|v| group.iter().map(|f| f.values[v]).sum::<f64>() / k)
                    .collect()
            };
            let sd = if count < 2 {
                Vec::new()
            } else {
                (0..tag.vertex_count)
                    .map(|v| {
                        let ss: f64 = group.iter().map(|f| (f.values[v] - mean[v]).powi(2)).sum();
                        (ss / (k - 1.0)).sqrt()
                    })
                    .collect()
            };
            BracketNorm {
                lo: brackets.edges[b],
                hi: brackets.edges[b + 1],
                count,
                mean,
                sd,
            }
        })
        .collect();
    Ok(ZNorms {
        brackets: brackets.clone(),
        norms,
        tag,
        unassigned,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub z: VertexScalarField,
    /// Mean z over the vertices not carrying the excluded label.
    pub cortex_mean: f64,
}

/// Per-vertex z-score of `field` against the bracket containing `age`, and
/// its average over all vertices except those labeled `exclude`.
pub fn zscore(
    field: &VertexScalarField,
    age: f64,
    norms: &ZNorms,
    exclude: Option<(&RegionLabeling, u32)>,
) -> Result<ZScore> {
    if field.tag != norms.tag {
        return Err(Error::ConnectivityMismatch(format!(
            "field on {} but norms on {}",
            field.tag, norms.tag
        )));
    }
    let b = norms
        .brackets
        .bracket_of(age)
        .ok_or_else(|| Error::MissingBracket(format!("age {age} is outside every bracket")))?;
    let norm = &norms.norms[b];
    if norm.count < 2 {
        return Err(Error::MissingBracket(format!(
            "bracket [{}, {}) has {} reference subject(s); at least 2 are needed",
            norm.lo, norm.hi, norm.count
        )));
    }
    if let Some((labels, _)) = exclude {
        if labels.tag != field.tag {
            return Err(Error::ConnectivityMismatch(format!(
                "labels on {} but field on {}",
                labels.tag, field.tag
            )));
        }
    }
    let included = |v: usize| exclude.is_none_or(|(labels, id)| labels.labels[v] != id);

    let mut z = Vec::with_capacity(field.len());
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in 0..field.len() {
        let sd = norm.sd[v];
        let zv = if sd > 0.0 {
            (field.values[v] - norm.mean[v]) / sd
        } else {
            f64::NAN
        };
        if included(v) {
            if !zv.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "z-score undefined at vertex {v}: reference SD is {sd} in bracket [{}, {})",
                    norm.lo, norm.hi
                )));
            }
            sum += zv;
            n += 1;
        }
        z.push(zv);
    }
    if n == 0 {
        return Err(Error::InvalidInput(
            "every vertex carries the excluded label".into(),
        ));
    }
    Ok(ZScore {
        z: VertexScalarField::new(z, field.tag, Unit::Dimensionless)?,
        cortex_mean: sum / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(n: usize) -> ConnectivityTag {
        ConnectivityTag::of(&[], n)
    }

    fn field(values: Vec<f64>) -> VertexScalarField {
        let n = values.len();
        VertexScalarField::new(values, tag(n), Unit::Millimeter).unwrap()
    }

    #[test]
    fn two_subject_bracket_by_hand() {
        let norms = zscore_norms(
            &[72.0, 75.0],
            &[field(vec![1.0]), field(vec![3.0])],
            &AgeBrackets::default(),
        )
        .unwrap();
        let b = &norms.norms[2];
        assert_eq!((b.lo, b.hi, b.count), (70.0, 80.0, 2));
        assert_eq!(b.mean, vec![2.0]);
        assert!((b.sd[0] - 2f64.sqrt()).abs() < 1e-15);
        let z = zscore(&field(vec![2.0 + 2f64.sqrt()]), 71.0, &norms, None).unwrap();
        assert!((z.z.values[0] - 1.0).abs() < 1e-15);
        assert_eq!(
            zscore(&field(vec![2.0]), 79.9, &norms, None)
                .unwrap()
                .cortex_mean,
            0.0
        );
    }

    #[test]
    fn degenerate_and_missing_brackets() {
        let norms = zscore_norms(
            &[72.0, 75.0, 61.0],
            &[field(vec![4.0]), field(vec![4.0]), field(vec![1.0])],
            &AgeBrackets::default(),
        )
        .unwrap();
        assert_eq!(norms.norms[2].sd, vec![0.0]);
        assert!(zscore(&field(vec![4.0]), 73.0, &norms, None).is_err());
        assert!(matches!(
            zscore(&field(vec![4.0]), 65.0, &norms, None),
            Err(Error::MissingBracket(_))
        ));
        assert!(matches!(
            zscore(&field(vec![4.0]), 55.0, &norms, None),
            Err(Error::MissingBracket(_))
        ));
        assert!(matches!(
            zscore(&field(vec![4.0]), 120.0, &norms, None),
            Err(Error::MissingBracket(_))
        ));
    }

    #[test]
    fn exclusion_restricts_the_average() {
        let refs = vec![
            field(vec![0.0, 0.0, 0.0, 0.0]),
            field(vec![2.0, 2.0, 2.0, 2.0]),
        ];
        let norms = zscore_norms(&[70.0, 70.0], &refs, &AgeBrackets::default()).unwrap();
        let s = 2f64.sqrt();
        let subject = field(vec![1.0 + s, 1.0 + 2.0 * s, 1.0 - s, 1.0 + 10.0 * s]);
        let labels = RegionLabeling::new(
            vec![0, 0, 1, 1],
            vec!["cortex".into(), "unknown".into()],
            tag(4),
        )
        .unwrap();
        let z = zscore(&subject, 70.0, &norms, Some((&labels, 1))).unwrap();
        assert!((z.cortex_mean - 1.5).abs() < 1e-12);
        let all = zscore(&subject, 70.0, &norms, None).unwrap();
        assert!((all.cortex_mean - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bad_edges() {
        assert!(AgeBrackets::new(vec![60.0]).is_err());
        assert!(AgeBrackets::new(vec![60.0, 60.0]).is_err());
        assert_eq!(
            AgeBrackets::new(vec![60.0, 70.0, 80.0])
                .unwrap()
                .bracket_of(70.0),
            Some(1)
        );
    }
}
