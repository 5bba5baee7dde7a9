use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{ConnectivityTag, TriangleMesh, Vec3};

/// Point count used for surface distances unless configured otherwise.
pub const DEFAULT_SAMPLE_COUNT: usize = 100_000;

/// Area-uniform point sample drawn from one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSample {
    pub points: Vec<Vec3>,
    /// Face each point was drawn from.
    pub faces: Vec<usize>,
    pub tag: ConnectivityTag,
    pub seed: u64,
}

impl PointSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `n` points uniformly by area: a face with probability proportional
/// to its area, then uniform barycentric coordinates inside it.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointSample> {
    let mut cumulative = Vec::with_capacity(mesh.face_count());
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let face = cumulative
            .partition_point(|&c| c <= target)
            .min(cumulative.len() - 1);
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = mesh.triangle(face);
        points.push(a + (b - a) * u + (c - a) * v);
        faces.push(face);
    }
    Ok(PointSample {
        points,
        faces,
        tag: mesh.tag(),
        seed,
    })
}
