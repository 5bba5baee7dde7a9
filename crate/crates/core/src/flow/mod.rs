//! Template flow: integration of deformation fields, within-subject templates
//! and the two-stage longitudinal deformation pipeline.

mod field;
mod integrate;
mod template;
mod theorem;
mod two_stage;

pub use field::{mean_field, DeformationField, DisplacementField, FieldSpec, MeanField};
pub use integrate::{fitted_order, integrate, Integrator, TrajectoryConfig};
pub use template::{median_template, within_subject_template};
pub use theorem::{template_eval_discrepancies, verify_theorem1, TemplateFlowCheck};
pub use two_stage::{two_stage_pipeline, TwoStageOutput};

use crate::error::{Error, Result};
use crate::mesh::{FeatureMatrix, TriangleMesh, Vec3};

/// Vertex coordinates plus per-vertex feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedVertexSet {
    pub coords: Vec<Vec3>,
    pub features: FeatureMatrix,
}

impl GeneralizedVertexSet {
    pub fn new(coords: Vec<Vec3>, features: FeatureMatrix) -> Result<Self> {
        if features.rows() != coords.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinate rows vs {} feature rows",
                coords.len(),
                features.rows()
            )));
        }
        Ok(Self { coords, features })
    }

    /// No feature channels.
    pub fn from_coords(coords: Vec<Vec3>) -> Self {
        let features = FeatureMatrix::empty(coords.len());
        Self { coords, features }
    }

    /// Mesh vertices, with the mesh's feature sidecar if present.
    pub fn from_mesh(mesh: &TriangleMesh) -> Self {
        let features = mesh
            .features()
            .cloned()
            .unwrap_or_else(|| FeatureMatrix::empty(mesh.vertex_count()));
        Self {
            coords: mesh.vertices().to_vec(),
            features,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn translated(&self, d: &Vec3) -> Self {
        Self {
            coords: self.coords.iter().map(|p| p + d).collect(),
            features: self.features.clone(),
        }
    }

    /// The mesh with these coordinates on `connectivity`'s faces.
    pub fn to_mesh(&self, connectivity: &TriangleMesh) -> Result<TriangleMesh> {
        let mesh = connectivity.with_vertices(self.coords.clone())?;
        if self.features.cols() == 0 {
            Ok(mesh)
        } else {
            mesh.with_features(self.features.clone())
        }
    }
}
