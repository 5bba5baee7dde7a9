use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};

pub const MAX_LEVEL: u32 = 8;

/// Subdivided icosahedron projected onto a sphere of `radius`, faces wound
/// outward. `V = 10·4^L + 2`, `F = 20·4^L`.
pub fn icosphere(level: u32, radius: f64) -> Result<TriangleMesh> {
    if level > MAX_LEVEL {
        return Err(Error::InvalidInput(format!(
            "icosphere level {level} exceeds the maximum of {MAX_LEVEL}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "radius must be positive, got {radius}"
        )));
    }

    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();

    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::with_capacity(faces.len() * 3 / 2);
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }

    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{validate, vertex_normals, Handedness};

    #[test]
    fn counts_follow_closed_form() {
        for level in 0..=4 {
            let m = icosphere(level, 1.0).unwrap();
            let p = 4usize.pow(level);
            assert_eq!(m.vertex_count(), 10 * p + 2);
            assert_eq!(m.face_count(), 20 * p);
        }
        let m = icosphere(3, 1.0).unwrap();
        assert_eq!((m.vertex_count(), m.face_count()), (642, 1280));
    }

    #[test]
    fn every_level_is_valid_and_outward() {
        for level in 0..=4 {
            let r = validate(&icosphere(level, 2.0).unwrap());
            assert!(r.is_valid_closed(), "level {level}: {r:?}");
            assert_eq!(r.handedness, Handedness::Outward);
        }
    }

    #[test]
    fn normals_approach_radial() {
        let worst: Vec<f64> = (0..=5)
            .map(|level| {
                let m = icosphere(level, 1.0).unwrap();
                let n = vertex_normals(&m).unwrap();
                m.vertices()
                    .iter()
                    .zip(&n)
                    .map(|(v, n)| v.normalize().dot(n).clamp(-1.0, 1.0).acos())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(worst[0] < 1e-12, "{worst:?}");
        assert!(worst[2] < 0.03, "{worst:?}");
        assert!(worst[5] < worst[3] && worst[3] < worst[2], "{worst:?}");
    }

    #[test]
    fn rejects_huge_level_and_bad_radius() {
        assert!(icosphere(9, 1.0).is_err());
        assert!(icosphere(1, 0.0).is_err());
        assert!(icosphere(1, -1.0).is_err());
    }
}
