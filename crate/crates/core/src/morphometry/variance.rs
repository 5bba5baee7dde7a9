use super::fields::VertexScalarField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalVariance {
    /// Unbiased variance across visits at each vertex (NaN if any visit is undefined there).
    pub per_vertex: Vec<f64>,
    /// Median of the finite per-vertex variances.
    pub score: f64,
    /// Vertices left out of the median because their variance is undefined.
    pub undefined_vertices: usize,
}

/// Per-vertex unbiased sample variance over a subject's visits and its median
/// over vertices. Used for both curvature (MCVar) and thickness (CThVar).
pub fn longitudinal_variance(fields: &[VertexScalarField]) -> Result<LongitudinalVariance> {
    if fields.len() < 2 {
        return Err(Error::InsufficientVisits {
            needed: 2,
            got: fields.len(),
        });
    }
    let tag = fields[0].tag;
    if let Some(f) = fields.iter().find(|f| f.tag != tag) {
        return Err(Error::ConnectivityMismatch(format!(
            "visit fields on {tag} and {}",
            f.tag
        )));
    }

    let visits = fields.len() as f64;
    let per_vertex: Vec<f64> = (0..tag.vertex_count)
        .map(|v| {
            let mean = fields.iter().map(|f| f.values[v]).sum::<f64>() / visits;
            fields
                .iter()
                .map(|f| (f.values[v] - mean).powi(2))
                .sum::<f64>()
                / (visits - 1.0)
        })
        .collect();

    let mut finite: Vec<f64> = per_vertex
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .collect();
    let undefined_vertices = per_vertex.len() - finite.len();
    Ok(LongitudinalVariance {
        score: median(&mut finite),
        per_vertex,
        undefined_vertices,
    })
}

/// Median with midpoint averaging for even counts; NaN when empty.
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
