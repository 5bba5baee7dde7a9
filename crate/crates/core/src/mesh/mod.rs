//! Triangle surface meshes with fixed connectivity.
//!
//! Vertex order is meaningful: index `k` denotes the same anatomical location
//! on every mesh that carries the same [`ConnectivityTag`]. All longitudinal
//! operations rely on that correspondence rather than on any registration.

pub(crate) mod bvh;
mod index;
pub mod io;

use std::collections::HashMap;
use std::fmt;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use index::{closest_point_on_triangle, NearestHit, PointIndex, SurfaceIndex};

pub type Vec3 = Vector3<f64>;

/// Dense row-major matrix of per-vertex feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// An `rows × 0` matrix, i.e. coordinates without feature channels.
    pub fn empty(rows: usize) -> Self {
        Self::zeros(rows, 0)
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "feature buffer has {} values, expected {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Identity of a face array. Two meshes are vertex-comparable iff their tags
/// are equal; coordinates never enter the tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConnectivityTag {
    pub face_hash: u64,
    pub vertex_count: usize,
}

impl ConnectivityTag {
    pub fn of(faces: &[[u32; 3]], vertex_count: usize) -> Self {
        let mut hasher = Sha256::new();
        hasher.update((faces.len() as u64).to_le_bytes());
        for f in faces {
            for &i in f {
                hasher.update(i.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Self {
            face_hash: u64::from_le_bytes(head),
            vertex_count,
        }
    }
}

impl fmt::Display for ConnectivityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}/{}", self.face_hash, self.vertex_count)
    }
}

/// Closed oriented triangle surface.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    features: Option<FeatureMatrix>,
}

impl TriangleMesh {
    /// Builds a mesh after checking that every face index is in range.
    ///
    /// Degenerate faces are accepted here and reported by [`validate`].
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let vertex_count = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i as usize >= vertex_count {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index: i as usize,
                        vertex_count,
                    });
                }
            }
        }
        Ok(Self {
            vertices,
            faces,
            features: None,
        })
    }

    pub fn with_features(mut self, features: FeatureMatrix) -> Result<Self> {
        if features.rows() != self.vertices.len() {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix has {} rows but mesh has {} vertices",
                features.rows(),
                self.vertices.len()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn features(&self) -> Option<&FeatureMatrix> {
        self.features.as_ref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn tag(&self) -> ConnectivityTag {
        ConnectivityTag::of(&self.faces, self.vertices.len())
    }

    /// Same connectivity, new coordinates. Features are dropped.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} replacement vertices for a mesh with {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
            features: None,
        })
    }

    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            features: self.features.clone(),
        }
    }

    /// Reverses the winding of every face.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            features: self.features.clone(),
        }
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized face normal; its length is twice the face area.
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.faces.len()).map(|f| self.face_area(f)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// Signed enclosed volume; positive for outward-facing closed meshes.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))),
        )
    }

    /// Undirected edges, each listed once with the smaller index first.
    pub fn edges(&self) -> Vec<[u32; 2]> {
        let mut edges: Vec<[u32; 2]> = self
            .faces
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .filter(|[a, b]| a != b)
            .map(|[a, b]| [a.min(b), a.max(b)])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Vertex-to-face incidence lists.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &i in f {
                if out[i as usize].last() != Some(&fi) {
                    out[i as usize].push(fi);
                }
            }
        }
        out
    }
}

/// One subject's visits of a single surface kind, all on one connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalSubject {
    id: String,
    visits: Vec<TriangleMesh>,
    tag: ConnectivityTag,
}

impl LongitudinalSubject {
    pub fn new(id: impl Into<String>, visits: Vec<TriangleMesh>) -> Result<Self> {
        let id = id.into();
        let first = visits
            .first()
            .ok_or(Error::InsufficientVisits { needed: 1, got: 0 })?;
        let tag = first.tag();
        for (j, v) in visits.iter().enumerate().skip(1) {
            if v.tag() != tag {
                return Err(Error::ConnectivityMismatch(format!(
                    "subject {id}: visit {j} is on {} but visit 0 is on {tag}",
                    v.tag()
                )));
            }
        }
        Ok(Self { id, visits, tag })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn visits(&self) -> &[TriangleMesh] {
        &self.visits
    }

    /// Number of follow-up visits, `K = visits - 1`.
    pub fn follow_ups(&self) -> usize {
        self.visits.len() - 1
    }

    pub fn tag(&self) -> ConnectivityTag {
        self.tag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Outward,
    Inward,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    /// Every edge has exactly two incident faces.
    pub closed: bool,
    /// No directed edge occurs twice, i.e. neighbouring faces agree on winding.
    pub oriented: bool,
    /// Which way a closed oriented mesh faces, from the sign of its volume.
    pub handedness: Handedness,
    pub degenerate_faces: usize,
    pub degenerate_face_ids: Vec<usize>,
    pub boundary_edges: usize,
    pub isolated_vertices: usize,
}

impl ValidationReport {
    pub fn is_valid_closed(&self) -> bool {
        self.closed && self.oriented && self.degenerate_faces == 0
    }
}

/// Checks closedness, orientation consistency and face degeneracy.
pub fn validate(mesh: &TriangleMesh) -> ValidationReport {
    let scale = mesh
        .bounding_box()
        .map(|(lo, hi)| (hi - lo).norm_squared())
        .unwrap_or(0.0);
    let area_floor = f64::EPSILON * scale;

    let mut degenerate_face_ids = Vec::new();
    for (fi, &[a, b, c]) in mesh.faces().iter().enumerate() {
        if a == b || b == c || a == c || mesh.face_area(fi) <= area_floor {
            degenerate_face_ids.push(fi);
        }
    }

    let mut undirected: HashMap<(u32, u32), usize> = HashMap::new();
    let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
    for &[a, b, c] in mesh.faces() {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            if u == v {
                continue;
            }
            *undirected.entry((u.min(v), u.max(v))).or_default() += 1;
            *directed.entry((u, v)).or_default() += 1;
        }
    }
    let boundary_edges = undirected.values().filter(|&&n| n != 2).count();
    let closed = !mesh.faces().is_empty() && boundary_edges == 0;
    let oriented = directed.values().all(|&n| n == 1);

    let mut used = vec![false; mesh.vertex_count()];
    for f in mesh.faces() {
        for &i in f {
            used[i as usize] = true;
        }
    }
    let isolated_vertices = used.iter().filter(|u| !**u).count();

    let handedness = if closed && oriented {
        let vol = mesh.signed_volume();
        if vol > 0.0 {
            Handedness::Outward
        } else if vol < 0.0 {
            Handedness::Inward
        } else {
            Handedness::Undetermined
        }
    } else {
        Handedness::Undetermined
    };

    ValidationReport {
        closed,
        oriented,
        handedness,
        degenerate_faces: degenerate_face_ids.len(),
        degenerate_face_ids,
        boundary_edges,
        isolated_vertices,
    }
}

/// Area-weighted vertex normals (sum of incident face cross products, normalized).
pub fn vertex_normals(mesh: &TriangleMesh) -> Result<Vec<Vec3>> {
    let mut acc = vec![Vec3::zeros(); mesh.vertex_count()];
    for fi in 0..mesh.face_count() {
        let n = mesh.face_cross(fi);
        for &i in &mesh.faces()[fi] {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(v, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                Ok(n / len)
            } else {
                Err(Error::IsolatedVertex { vertex: v })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tetrahedron() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(1.0, 1.0, 1.0),
                Vec3::new(1.0, -1.0, -1.0),
                Vec3::new(-1.0, 1.0, -1.0),
                Vec3::new(-1.0, -1.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
        )
        .unwrap()
    }

    /// Unit cube where every face diagonal passes through (0,0,0) or (1,1,1),
    /// so both of those corners touch exactly two triangles on each adjacent side.
    fn cube() -> TriangleMesh {
        let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        let vertices = vec![
            v(0., 0., 0.), // 0
            v(1., 0., 0.), // 1
            v(0., 1., 0.), // 2
            v(1., 1., 0.), // 3
            v(0., 0., 1.), // 4
            v(1., 0., 1.), // 5
            v(0., 1., 1.), // 6
            v(1., 1., 1.), // 7
        ];
        let faces = vec![
            // z = 0, outward -z, diagonal 0-3
            [0, 2, 3],
            [0, 3, 1],
            // y = 0, outward -y, diagonal 0-5
            [0, 1, 5],
            [0, 5, 4],
            // x = 0, outward -x, diagonal 0-6
            [0, 4, 6],
            [0, 6, 2],
            // z = 1, outward +z, diagonal 4-7
            [4, 5, 7],
            [4, 7, 6],
            // y = 1, outward +y, diagonal 2-7
            [2, 6, 7],
            [2, 7, 3],
            // x = 1, outward +x, diagonal 1-7
            [1, 3, 7],
            [1, 7, 5],
        ];
        TriangleMesh::new(vertices, faces).unwrap()
    }

    #[test]
    fn tetrahedron_is_closed_and_oriented() {
        let r = validate(&tetrahedron());
        assert!(r.closed);
        assert!(r.oriented);
        assert_eq!(r.degenerate_faces, 0);
        assert_eq!(r.handedness, Handedness::Outward);
    }

    #[test]
    fn single_triangle_is_open() {
        let m =
            TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        let r = validate(&m);
        assert!(!r.closed);
        assert_eq!(r.boundary_edges, 3);
    }

    #[test]
    fn repeated_index_face_is_degenerate() {
        let m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 0, 1], [0, 1, 2]],
        )
        .unwrap();
        let r = validate(&m);
        assert_eq!(r.degenerate_faces, 1);
        assert_eq!(r.degenerate_face_ids, vec![0]);
    }

    #[test]
    fn flipping_keeps_closed_and_flips_handedness() {
        let m = tetrahedron();
        let r = validate(&m.flipped());
        assert!(r.closed);
        assert!(r.oriented);
        assert_eq!(r.handedness, Handedness::Inward);
    }

    #[test]
    fn inconsistent_winding_is_not_oriented() {
        let mut m = tetrahedron();
        m.faces[0] = [0, 2, 1];
        let r = validate(&m);
        assert!(r.closed);
        assert!(!r.oriented);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let err = TriangleMesh::new(vec![Vec3::zeros(); 4], vec![[0, 1, 9]]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 9, .. }));
    }

    #[test]
    fn cube_corner_normal_is_diagonal() {
        let m = cube();
        assert!(validate(&m).is_valid_closed());
        let n = vertex_normals(&m).unwrap();
        // two triangles of area 1/2 on each of the three sides meeting at the corner
        let expected = Vec3::new(-1.0, -1.0, -1.0).normalize();
        assert!((n[0] - expected).norm() < 1e-15);
        let expected = Vec3::new(1.0, 1.0, 1.0).normalize();
        assert!((n[7] - expected).norm() < 1e-15);
    }

    #[test]
    fn flipped_normals_are_negated() {
        let m = cube();
        let a = vertex_normals(&m).unwrap();
        let b = vertex_normals(&m.flipped()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).norm() < 1e-15);
        }
    }

    #[test]
    fn isolated_vertex_has_no_normal() {
        let m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(
            vertex_normals(&m),
            Err(Error::IsolatedVertex { vertex: 3 })
        ));
    }

    #[test]
    fn tag_ignores_coordinates() {
        let m = tetrahedron();
        let moved = m.map_vertices(|v| v * 3.0 + Vec3::x());
        assert_eq!(m.tag(), moved.tag());
        assert_ne!(m.tag(), m.flipped().tag());
    }
}
