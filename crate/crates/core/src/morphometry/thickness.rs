use rayon::prelude::*;

use super::fields::{Unit, VertexScalarField};
use crate::error::{Error, Result};
use crate::mesh::{SurfaceIndex, TriangleMesh};

/// Bilateral cortical thickness: the mean of the distance from each WM vertex
/// to the pial surface and from the corresponding pial vertex to the WM surface.
pub fn cortical_thickness(wm: &TriangleMesh, pial: &TriangleMesh) -> Result<VertexScalarField> {
    let tag = wm.tag();
    if tag != pial.tag() {
        return Err(Error::ConnectivityMismatch(format!(
            "white surface {} vs pial surface {}",
            tag,
            pial.tag()
        )));
    }
    let wm_index = SurfaceIndex::build(wm);
    let pial_index = SurfaceIndex::build(pial);
    let values = wm
        .vertices()
        .par_iter()
        .zip(pial.vertices().par_iter())
        .map(|(w, p)| 0.5 * (pial_index.distance(w) + wm_index.distance(p)))
        .collect();
    VertexScalarField::new(values, tag, Unit::Millimeter)
}
