use rayon::prelude::*;
use serde::Serialize;

use super::sampling::sample_surface;
use crate::error::{Error, Result};
use crate::mesh::{SurfaceIndex, TriangleMesh, Vec3};

/// Seeds for the two point samples of a symmetric comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSeeds {
    pub pred: u64,
    pub reference: u64,
}

impl SampleSeeds {
    /// Two decorrelated streams from one user seed.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            pred: seed,
            reference: splitmix64(seed ^ 0x5bd1_e995),
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            pred: self.reference,
            reference: self.pred,
        }
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Point-to-surface distances for every point, in point order.
pub fn point_to_surface(points: &[Vec3], index: &SurfaceIndex) -> Vec<f64> {
    points.par_iter().map(|p| index.distance(p)).collect()
}

/// Both directed distance sets of a symmetric comparison.
#[derive(Debug, Clone)]
pub struct BilateralDistances {
    /// d(p, ref) for p sampled on pred.
    pub pred_to_ref: Vec<f64>,
    /// d(p, pred) for p sampled on ref.
    pub ref_to_pred: Vec<f64>,
}

impl BilateralDistances {
    pub fn compute(
        pred: &TriangleMesh,
        reference: &TriangleMesh,
        n: usize,
        seeds: SampleSeeds,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput(
                "surface distances need at least one sample".into(),
            ));
        }
        let pred_points = sample_surface(pred, n, seeds.pred)?;
        let ref_points = sample_surface(reference, n, seeds.reference)?;
        let pred_index = SurfaceIndex::build(pred);
        let ref_index = SurfaceIndex::build(reference);
        Ok(Self {
            pred_to_ref: point_to_surface(&pred_points.points, &ref_index),
            ref_to_pred: point_to_surface(&ref_points.points, &pred_index),
        })
    }

    pub fn assd(&self) -> f64 {
        // each side is summed on its own so that swapping the meshes swaps
        // two addends and nothing else
        let a: f64 = self.pred_to_ref.iter().sum();
        let b: f64 = self.ref_to_pred.iter().sum();
        (a + b) / (self.pred_to_ref.len() + self.ref_to_pred.len()) as f64
    }

    pub fn hausdorff(&self, percentiles: &[f64]) -> Result<Vec<(f64, f64)>> {
        check_percentiles(percentiles)?;
        let mut a = self.pred_to_ref.clone();
        let mut b = self.ref_to_pred.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        Ok(percentiles
            .iter()
            .map(|&p| (p, nearest_rank(&a, p).max(nearest_rank(&b, p))))
            .collect())
    }
}

fn check_percentiles(percentiles: &[f64]) -> Result<()> {
    match percentiles.iter().find(|&&p| !(p > 0.0 && p <= 100.0)) {
        Some(p) => Err(Error::InvalidInput(format!(
            "percentile {p} outside (0, 100]"
        ))),
        None => Ok(()),
    }
}

/// Nearest-rank percentile of an ascending slice: the value at rank ⌈p·N/100⌉.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let rank = (p * n as f64 / 100.0).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Average symmetric surface distance from area-uniform point samples.
pub fn assd(pred: &TriangleMesh, reference: &TriangleMesh, n: usize, seed: u64) -> Result<f64> {
    assd_with_seeds(pred, reference, n, SampleSeeds::from_seed(seed))
}

pub fn assd_with_seeds(
    pred: &TriangleMesh,
    reference: &TriangleMesh,
    n: usize,
    seeds: SampleSeeds,
) -> Result<f64> {
    Ok(BilateralDistances::compute(pred, reference, n, seeds)?.assd())
}

/// Percentile Hausdorff distance for each requested percentile in (0, 100].
pub fn hausdorff(
    pred: &TriangleMesh,
    reference: &TriangleMesh,
    percentiles: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check_percentiles(percentiles)?;
    BilateralDistances::compute(pred, reference, n, SampleSeeds::from_seed(seed))?
        .hausdorff(percentiles)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub assd_mm: f64,
    /// (percentile, distance) in the order requested.
    pub hd: Vec<(f64, f64)>,
}

impl DistanceReport {
    pub fn hd_at(&self, percentile: f64) -> Option<f64> {
        self.hd
            .iter()
            .find(|(p, _)| *p == percentile)
            .map(|(_, d)| *d)
    }
}

/// ASSD and HD from one shared pair of samples.
pub fn surface_distances(
    pred: &TriangleMesh,
    reference: &TriangleMesh,
    percentiles: &[f64],
    n: usize,
    seeds: SampleSeeds,
) -> Result<DistanceReport> {
    check_percentiles(percentiles)?;
    let d = BilateralDistances::compute(pred, reference, n, seeds)?;
    Ok(DistanceReport {
        assd_mm: d.assd(),
        hd: d.hausdorff(percentiles)?,
    })
}

/// `90.0` → `"90"`, `99.5` → `"99.5"`.
pub fn percentile_key(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::icosphere;

    #[test]
    fn nearest_rank_convention() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 100.0), 10.0);
        assert_eq!(nearest_rank(&v, 90.0), 9.0);
        assert_eq!(nearest_rank(&v, 91.0), 10.0);
        assert_eq!(nearest_rank(&v, 1.0), 1.0);
        assert_eq!(nearest_rank(&v, 50.0), 5.0);
    }

    #[test]
    fn identical_meshes_are_zero() {
        let m = icosphere(3, 1.0).unwrap();
        assert!(assd(&m, &m, 5000, 1).unwrap() < 1e-12);
        for (_, d) in hausdorff(&m, &m, &[90.0, 99.0, 100.0], 5000, 1).unwrap() {
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn concentric_spheres() {
        let a = icosphere(4, 1.0).unwrap();
        let b = icosphere(4, 1.1).unwrap();
        let r = surface_distances(
            &a,
            &b,
            &[90.0, 99.0, 100.0],
            20_000,
            SampleSeeds::from_seed(3),
        )
        .unwrap();
        assert!((r.assd_mm - 0.1).abs() < 2e-3, "{r:?}");
        let hd100 = r.hd_at(100.0).unwrap();
        assert!((hd100 - 0.1).abs() < 2e-3 * 4.0, "{r:?}");
        assert!(r.hd_at(90.0).unwrap() <= r.hd_at(99.0).unwrap());
        assert!(r.hd_at(99.0).unwrap() <= hd100);
        assert!(r.assd_mm <= hd100);
    }

    #[test]
    fn swapping_meshes_and_seeds_is_exact() {
        let a = icosphere(2, 1.0).unwrap();
        let b = icosphere(2, 1.0)
            .unwrap()
            .map_vertices(|v| v * 1.05 + Vec3::new(0.01, 0.0, 0.02));
        let s = SampleSeeds {
            pred: 3,
            reference: 17,
        };
        let ab = assd_with_seeds(&a, &b, 3000, s).unwrap();
        let ba = assd_with_seeds(&b, &a, 3000, s.swapped()).unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits());
    }

    #[test]
    fn bad_percentile_is_rejected() {
        let m = icosphere(1, 1.0).unwrap();
        assert!(hausdorff(&m, &m, &[0.0], 10, 1).is_err());
        assert!(hausdorff(&m, &m, &[100.5], 10, 1).is_err());
        assert!(assd(&m, &m, 0, 1).is_err());
    }

    #[test]
    fn percentile_keys() {
        assert_eq!(percentile_key(90.0), "90");
        assert_eq!(percentile_key(99.5), "99.5");
    }
}
