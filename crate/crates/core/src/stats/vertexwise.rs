use rayon::prelude::*;
use serde::Serialize;

use super::dataset::VisitMeta;
use super::lme::{LmeDesign, LmeFit, LmeSettings};
use crate::error::{Error, Result};
use crate::morphometry::{Unit, VertexScalarField};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexFailure {
    pub vertex: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexwiseResult {
    pub beta3: VertexScalarField,
    /// `-log10(p)` of the diagnosis effect.
    pub neglog10p: VertexScalarField,
    /// Vertices whose fit hit the iteration cap (values still reported).
    pub not_converged: Vec<usize>,
    /// Vertices without a fit; their map values are NaN.
    pub failures: Vec<VertexFailure>,
}

/// Fits the mixed model independently at every vertex. `fields[r]` is the
/// scan described by `meta[r]`.
pub fn lme_vertexwise(
    meta: &[VisitMeta],
    fields: &[VertexScalarField],
    settings: &LmeSettings,
) -> Result<VertexwiseResult> {
    if meta.len() != fields.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} metadata rows for {} fields",
            meta.len(),
            fields.len()
        )));
    }
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidDataset("no fields".into()))?;
    let tag = first.tag;
    if let Some(f) = fields.iter().find(|f| f.tag != tag) {
        return Err(Error::ConnectivityMismatch(format!(
            "fields on {tag} and {}",
            f.tag
        )));
    }
    let design = LmeDesign::new(meta)?;

    let fits: Vec<Result<LmeFit>> = (0..tag.vertex_count)
        .into_par_iter()
        .map_init(
            || vec![0.0; fields.len()],
            |y, v| {
                for (slot, f) in y.iter_mut().zip(fields) {
                    *slot = f.values[v];
                }
                design.fit(y, settings)
            },
        )
        .collect();

    let mut beta3 = Vec::with_capacity(fits.len());
    let mut neglog10p = Vec::with_capacity(fits.len());
    let mut not_converged = Vec::new();
    let mut failures = Vec::new();
    for (vertex, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(fit) => {
                if !fit.converged {
                    not_converged.push(vertex);
                }
                beta3.push(fit.beta[3]);
                neglog10p.push(-fit.p_value.log10());
            }
            Err(e) => {
                beta3.push(f64::NAN);
                neglog10p.push(f64::NAN);
                failures.push(VertexFailure {
                    vertex,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(VertexwiseResult {
        beta3: VertexScalarField::new(beta3, tag, first.unit)?,
        neglog10p: VertexScalarField::new(neglog10p, tag, Unit::Dimensionless)?,
        not_converged,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ConnectivityTag;
    use crate::stats::{lme_fit, LmeDataset, LmeRow, LmeSimulation};

    fn tag(n: usize) -> ConnectivityTag {
        ConnectivityTag::of(&[], n)
    }

    #[test]
    fn single_vertex_matches_lme_fit() {
        let sim = LmeSimulation {
            subjects: 30,
            ..Default::default()
        };
        let meta = sim.design(1);
        let y = sim.response(&meta, 2).unwrap();
        let fields: Vec<VertexScalarField> = y
            .iter()
            .map(|&v| VertexScalarField::new(vec![v], tag(1), Unit::Millimeter).unwrap())
            .collect();
        let r = lme_vertexwise(&meta, &fields, &LmeSettings::default()).unwrap();
        let rows = meta
            .iter()
            .zip(&y)
            .map(|(m, &v)| LmeRow::new(m, v))
            .collect();
        let fit = lme_fit(&LmeDataset::new(rows).unwrap(), &LmeSettings::default()).unwrap();
        assert_eq!(r.beta3.values, vec![fit.beta[3]]);
        assert_eq!(r.neglog10p.values, vec![-fit.p_value.log10()]);
    }

    #[test]
    fn constant_maps_give_p_one() {
        let sim = LmeSimulation {
            subjects: 10,
            ..Default::default()
        };
        let meta = sim.design(3);
        let fields: Vec<VertexScalarField> = meta
            .iter()
            .map(|_| VertexScalarField::new(vec![2.5; 5], tag(5), Unit::Millimeter).unwrap())
            .collect();
        let r = lme_vertexwise(&meta, &fields, &LmeSettings::default()).unwrap();
        assert!(r.beta3.values.iter().all(|&b| b == 0.0));
        assert!(r.neglog10p.values.iter().all(|&p| p == 0.0));
        assert!(r.failures.is_empty());
    }

    #[test]
    fn bad_vertices_become_nan() {
        let sim = LmeSimulation {
            subjects: 10,
            ..Default::default()
        };
        let meta = sim.design(4);
        let y = sim.response(&meta, 5).unwrap();
        let fields: Vec<VertexScalarField> = y
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let bad = if i == 3 { f64::INFINITY } else { v };
                VertexScalarField::new(vec![v, bad], tag(2), Unit::Millimeter).unwrap()
            })
            .collect();
        let r = lme_vertexwise(&meta, &fields, &LmeSettings::default()).unwrap();
        assert!(r.beta3.values[0].is_finite());
        assert!(r.beta3.values[1].is_nan());
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].vertex, 1);
    }
}
