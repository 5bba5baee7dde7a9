use super::bvh::{Aabb, Bvh};
use super::{TriangleMesh, Vec3};

/// Closest point on triangle `abc` to `p`, by Voronoi-region classification
/// (three vertex regions, three edge regions, interior).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestHit {
    pub distance: f64,
    pub face: usize,
    pub point: Vec3,
}

/// Read-only BVH over the faces of one mesh for exact point-to-surface queries.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    triangles: Vec<[Vec3; 3]>,
    bvh: Bvh,
}

impl SurfaceIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let triangles: Vec<[Vec3; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let boxes = triangles.iter().map(|t| Aabb::from_points(t)).collect();
        Self {
            triangles,
            bvh: Bvh::build(boxes),
        }
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    /// Nearest point over all faces; `None` only for a mesh without faces.
    pub fn nearest(&self, p: &Vec3) -> Option<NearestHit> {
        self.bvh
            .nearest(p, |f| {
                let [a, b, c] = &self.triangles[f];
                let q = closest_point_on_triangle(p, a, b, c);
                ((p - q).norm_squared(), q)
            })
            .map(|(face, d2, point)| NearestHit {
                distance: d2.sqrt(),
                face,
                point,
            })
    }

    /// Exhaustive O(F) scan with the same tie-breaking as [`Self::nearest`].
    pub fn nearest_brute_force(&self, p: &Vec3) -> Option<NearestHit> {
        let mut best: Option<(usize, f64, Vec3)> = None;
        for (f, [a, b, c]) in self.triangles.iter().enumerate() {
            let q = closest_point_on_triangle(p, a, b, c);
            let d2 = (p - q).norm_squared();
            if best.as_ref().is_none_or(|(_, bd, _)| d2 < *bd) {
                best = Some((f, d2, q));
            }
        }
        best.map(|(face, d2, point)| NearestHit {
            distance: d2.sqrt(),
            face,
            point,
        })
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.nearest(p).map_or(f64::INFINITY, |h| h.distance)
    }
}

/// Nearest-vertex index over a point cloud.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Vec3>,
    bvh: Bvh,
}

impl PointIndex {
    pub fn build(points: &[Vec3]) -> Self {
        let boxes = points.iter().map(|p| Aabb { lo: *p, hi: *p }).collect();
        Self {
            points: points.to_vec(),
            bvh: Bvh::build(boxes),
        }
    }

    /// Index of the nearest point; ties resolve to the smallest index.
    pub fn nearest(&self, p: &Vec3) -> Option<usize> {
        self.bvh
            .nearest(p, |i| ((self.points[i] - p).norm_squared(), ()))
            .map(|(i, _, _)| i)
    }

    pub fn nearest_brute_force(&self, p: &Vec3) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, q) in self.points.iter().enumerate() {
            let d2 = (q - p).norm_squared();
            if best.is_none_or(|(_, bd)| d2 < bd) {
                best = Some((i, d2));
            }
        }
        best.map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closest_point_regions() {
        let a = Vec3::zeros();
        let b = Vec3::x();
        let c = Vec3::y();
        // interior
        let q = closest_point_on_triangle(&Vec3::new(0.25, 0.25, 1.0), &a, &b, &c);
        assert!((q - Vec3::new(0.25, 0.25, 0.0)).norm() < 1e-15);
        // vertex region of a
        let q = closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.5), &a, &b, &c);
        assert_eq!(q, a);
        // edge ab
        let q = closest_point_on_triangle(&Vec3::new(0.5, -2.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        // hypotenuse bc
        let q = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn vertex_query_has_zero_distance() {
        let mesh = icosphere(2, 1.0).unwrap();
        let index = SurfaceIndex::build(&mesh);
        for v in mesh.vertices().iter().step_by(7) {
            assert_eq!(index.nearest(v).unwrap().distance, 0.0);
        }
    }

    #[test]
    fn center_of_sphere_is_at_inradius() {
        let mesh = icosphere(1, 1.0).unwrap();
        let index = SurfaceIndex::build(&mesh);
        let hit = index.nearest(&Vec3::zeros()).unwrap();
        // brute-force inradius: smallest plane distance over all faces
        let inradius = (0..mesh.face_count())
            .map(|f| {
                let [a, _, _] = mesh.triangle(f);
                let n = mesh.face_cross(f).normalize();
                a.dot(&n).abs()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((hit.distance - inradius).abs() < 1e-12);
    }

    #[test]
    fn indexed_matches_exhaustive_scan() {
        let mesh = icosphere(3, 1.0).unwrap();
        let index = SurfaceIndex::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let p = Vec3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            let fast = index.nearest(&p).unwrap();
            let slow = index.nearest_brute_force(&p).unwrap();
            assert_eq!(fast.distance.to_bits(), slow.distance.to_bits());
            assert_eq!(fast.face, slow.face);
        }
    }

    #[test]
    fn point_index_matches_exhaustive_scan() {
        let mesh = icosphere(3, 1.0).unwrap();
        let index = PointIndex::build(mesh.vertices());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = Vec3::new(
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
            );
            assert_eq!(index.nearest(&p), index.nearest_brute_force(&p));
        }
    }
}
