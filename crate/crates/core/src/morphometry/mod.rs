//! Per-vertex morphology (mean curvature, cortical thickness) and the
//! longitudinal consistency scores built on it.

mod curvature;
mod fields;
mod parcellation;
mod thickness;
mod variance;

pub use curvature::{mean_curvature, mixed_areas};
pub use fields::{RegionLabeling, Unit, VertexScalarField};
pub use parcellation::{parc_f1, parc_f1_brute_force, PairMode, ParcellationF1};
pub use thickness::cortical_thickness;
pub use variance::{longitudinal_variance, median, LongitudinalVariance};
