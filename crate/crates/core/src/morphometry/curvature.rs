//! Signed discrete mean curvature from the cotangent Laplace–Beltrami operator
//! with mixed Voronoi areas (Meyer, Desbrun, Schröder & Barr, 2003).

use rayon::prelude::*;

use super::fields::{Unit, VertexScalarField};
use crate::error::{Error, Result};
use crate::mesh::{validate, vertex_normals, TriangleMesh, Vec3};

fn cot(u: &Vec3, v: &Vec3) -> f64 {
    u.dot(v) / u.cross(v).norm()
}

/// Per-face contributions to the mean-curvature normal and the mixed area of
/// each of the face's three corners.
fn face_terms(mesh: &TriangleMesh, face: usize) -> ([Vec3; 3], [f64; 3]) {
    let [p0, p1, p2] = mesh.triangle(face);
    let p = [p0, p1, p2];
    let area = 0.5 * (p1 - p0).cross(&(p2 - p0)).norm();

    // cot of the interior angle at each corner
    let mut cots = [0.0; 3];
    let mut obtuse = None;
    for i in 0..3 {
        let a = p[(i + 1) % 3] - p[i];
        let b = p[(i + 2) % 3] - p[i];
        cots[i] = cot(&a, &b);
        if a.dot(&b) < 0.0 {
            obtuse = Some(i);
        }
    }

    let mut k = [Vec3::zeros(); 3];
    let mut mixed = [0.0; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let l = (i + 2) % 3;
        // edge i–j is opposite corner l, edge i–l is opposite corner j
        k[i] = (p[i] - p[j]) * cots[l] + (p[i] - p[l]) * cots[j];
        mixed[i] = match obtuse {
            None => {
                ((p[i] - p[j]).norm_squared() * cots[l] + (p[i] - p[l]).norm_squared() * cots[j])
                    / 8.0
            }
            Some(o) if o == i => area / 2.0,
            Some(_) => area / 4.0,
        };
    }
    (k, mixed)
}

/// Mixed Voronoi area per vertex.
pub fn mixed_areas(mesh: &TriangleMesh) -> Vec<f64> {
    let mut areas = vec![0.0; mesh.vertex_count()];
    for f in 0..mesh.face_count() {
        let (_, mixed) = face_terms(mesh, f);
        for (slot, &v) in mesh.faces()[f].iter().enumerate() {
            areas[v as usize] += mixed[slot];
        }
    }
    areas
}

/// Signed mean curvature `H = ‖K‖/2` with `K = (1/2A) Σ (cot α + cot β)(v − v_j)`;
/// the sign is positive where `K` agrees with the outward vertex normal, so a
/// sphere of radius `R` gives `+1/R`.
pub fn mean_curvature(mesh: &TriangleMesh) -> Result<VertexScalarField> {
    let report = validate(mesh);
    if !report.closed {
        return Err(Error::OpenMesh {
            boundary_edges: report.boundary_edges,
        });
    }
    if !report.oriented {
        return Err(Error::InvalidInput("mesh winding is inconsistent".into()));
    }
    if report.degenerate_faces > 0 {
        return Err(Error::InvalidInput(format!(
            "{} degenerate faces (first: {})",
            report.degenerate_faces, report.degenerate_face_ids[0]
        )));
    }

    let v = mesh.vertex_count();
    let mut k_sum = vec![Vec3::zeros(); v];
    let mut area = vec![0.0; v];
    for f in 0..mesh.face_count() {
        let (k, mixed) = face_terms(mesh, f);
        for (slot, &vi) in mesh.faces()[f].iter().enumerate() {
            k_sum[vi as usize] += k[slot];
            area[vi as usize] += mixed[slot];
        }
    }
    let normals = vertex_normals(mesh)?;

    let values: Vec<f64> = (0..v)
        .into_par_iter()
        .map(|i| {
            let a = area[i];
            if !(a > 0.0) {
                return Err(Error::ZeroMixedArea { vertex: i });
            }
            let k = k_sum[i] / (2.0 * a);
            let h = 0.5 * k.norm();
            Ok(if k.dot(&normals[i]) < 0.0 { -h } else { h })
        })
        .collect::<Result<_>>()?;
    VertexScalarField::new(values, mesh.tag(), Unit::InverseMillimeter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::icosphere;

    fn max_abs_error(level: u32, radius: f64) -> f64 {
        let h = mean_curvature(&icosphere(level, radius).unwrap()).unwrap();
        h.values
            .iter()
            .map(|x| (x - 1.0 / radius).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn sphere_converges_to_inverse_radius() {
        let errs: Vec<f64> = (3..=5).map(|l| max_abs_error(l, 2.0)).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(max_abs_error(4, 2.0) < 0.01);
    }

    #[test]
    fn unit_sphere_and_scaling() {
        let m = icosphere(3, 1.0).unwrap();
        let h1 = mean_curvature(&m).unwrap();
        for h in &h1.values {
            assert!((h - 1.0).abs() < 0.05);
        }
        let h2 = mean_curvature(&m.map_vertices(|v| v * 2.0)).unwrap();
        for (a, b) in h1.values.iter().zip(&h2.values) {
            assert!((a / 2.0 - b).abs() < 1e-9);
        }
    }

    #[test]
    fn inward_orientation_flips_sign() {
        let m = icosphere(2, 1.0).unwrap();
        let out = mean_curvature(&m).unwrap();
        let inward = mean_curvature(&m.flipped()).unwrap();
        for (a, b) in out.values.iter().zip(&inward.values) {
            assert!(*a > 0.0);
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn open_mesh_is_rejected() {
        let m =
            TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(mean_curvature(&m), Err(Error::OpenMesh { .. })));
    }

    #[test]
    fn mixed_areas_tile_the_surface() {
        let m = icosphere(3, 1.5).unwrap();
        let total: f64 = mixed_areas(&m).iter().sum();
        assert!((total - m.total_area()).abs() < 1e-10 * m.total_area());
    }
}
