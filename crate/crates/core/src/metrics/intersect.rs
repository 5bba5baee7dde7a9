//! Self-intersection detection.
//!
//! Two faces that share a vertex index are never tested against each other.
//! All remaining pairs go through a separating-axis test over the 17 candidate
//! axes of a triangle pair (two face normals, nine edge-edge cross products and
//! six in-plane edge normals), which also covers the coplanar case. The three
//! coordinate axes are tested first; they make the test agree with the
//! bounding-box prefilter used by the accelerated search.

use rayon::prelude::*;
use serde::Serialize;

use crate::mesh::bvh::{Aabb, Bvh};
use crate::mesh::{TriangleMesh, Vec3};

/// Gap (mm, along a unit axis) a separating axis must exceed.
pub const SEPARATION_EPS: f64 = 1e-12;

// axes shorter than this (squared, before normalization) are skipped
const MIN_AXIS_NORM_SQ: f64 = 1e-30;

fn project(t: &[Vec3; 3], axis: &Vec3) -> (f64, f64) {
    let a = t[0].dot(axis);
    let b = t[1].dot(axis);
    let c = t[2].dot(axis);
    (a.min(b).min(c), a.max(b).max(c))
}

fn separates(t1: &[Vec3; 3], t2: &[Vec3; 3], axis: Vec3) -> bool {
    let len2 = axis.norm_squared();
    if !(len2 > MIN_AXIS_NORM_SQ) {
        return false;
    }
    let axis = axis / len2.sqrt();
    let (lo1, hi1) = project(t1, &axis);
    let (lo2, hi2) = project(t2, &axis);
    lo2 - hi1 > SEPARATION_EPS || lo1 - hi2 > SEPARATION_EPS
}

/// True when the closed triangles share at least one point (up to
/// [`SEPARATION_EPS`]). Touching and coplanar overlap both count.
pub fn triangles_intersect(t1: &[Vec3; 3], t2: &[Vec3; 3]) -> bool {
    let e1 = [t1[1] - t1[0], t1[2] - t1[1], t1[0] - t1[2]];
    let e2 = [t2[1] - t2[0], t2[2] - t2[1], t2[0] - t2[2]];
    let n1 = e1[0].cross(&e1[1]);
    let n2 = e2[0].cross(&e2[1]);

    if separates(t1, t2, Vec3::x()) || separates(t1, t2, Vec3::y()) || separates(t1, t2, Vec3::z())
    {
        return false;
    }
    if separates(t1, t2, n1) || separates(t1, t2, n2) {
        return false;
    }
    for a in &e1 {
        for b in &e2 {
            if separates(t1, t2, a.cross(b)) {
                return false;
            }
        }
    }
    for e in &e1 {
        if separates(t1, t2, n1.cross(e)) {
            return false;
        }
    }
    for e in &e2 {
        if separates(t1, t2, n2.cross(e)) {
            return false;
        }
    }
    true
}

fn share_vertex(f: &[u32; 3], g: &[u32; 3]) -> bool {
    f.iter().any(|i| g.contains(i))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfIntersection {
    pub count: usize,
    /// `count / F`.
    pub ratio: f64,
    /// Ascending ids of every face that intersects some non-adjacent face.
    pub faces: Vec<usize>,
}

impl SelfIntersection {
    fn from_flags(flags: Vec<bool>) -> Self {
        let total = flags.len();
        let faces: Vec<usize> = flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect();
        Self {
            count: faces.len(),
            ratio: if total == 0 {
                0.0
            } else {
                faces.len() as f64 / total as f64
            },
            faces,
        }
    }
}

/// Faces properly intersecting a non-adjacent face, using a BVH to enumerate
/// candidate pairs.
pub fn self_intersecting_faces(mesh: &TriangleMesh) -> SelfIntersection {
    let faces = mesh.faces();
    let triangles: Vec<[Vec3; 3]> = (0..faces.len()).map(|f| mesh.triangle(f)).collect();
    let boxes: Vec<_> = triangles
        .iter()
        .map(|t| {
            // inflated by the separation tolerance so that no pair the exact
            // test would accept is dropped by the box filter
            let mut b = Aabb::from_points(t);
            b.lo -= Vec3::repeat(SEPARATION_EPS);
            b.hi += Vec3::repeat(SEPARATION_EPS);
            b
        })
        .collect();
    let bvh = Bvh::build(boxes.clone());

    let flags: Vec<bool> = (0..faces.len())
        .into_par_iter()
        .map(|f| {
            let mut hit = false;
            bvh.for_each_overlap(&boxes[f], |g| {
                if !hit && g != f && !share_vertex(&faces[f], &faces[g]) {
                    hit = triangles_intersect(&triangles[f], &triangles[g]);
                }
            });
            hit
        })
        .collect();
    SelfIntersection::from_flags(flags)
}

/// O(F²) all-pairs reference for [`self_intersecting_faces`].
pub fn self_intersecting_faces_brute_force(mesh: &TriangleMesh) -> SelfIntersection {
    let faces = mesh.faces();
    let triangles: Vec<[Vec3; 3]> = (0..faces.len()).map(|f| mesh.triangle(f)).collect();
    let mut flags = vec![false; faces.len()];
    for f in 0..faces.len() {
        for g in f + 1..faces.len() {
            if share_vertex(&faces[f], &faces[g]) {
                continue;
            }
            if triangles_intersect(&triangles[f], &triangles[g]) {
                flags[f] = true;
                flags[g] = true;
            }
        }
    }
    SelfIntersection::from_flags(flags)
}
