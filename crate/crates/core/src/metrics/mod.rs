//! Surface accuracy and topology metrics.

mod distance;
mod intersect;
mod sampling;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

pub(crate) use distance::splitmix64;
pub use distance::{
    assd, assd_with_seeds, hausdorff, nearest_rank, percentile_key, point_to_surface,
    surface_distances, BilateralDistances, DistanceReport, SampleSeeds,
};
pub use intersect::{
    self_intersecting_faces, self_intersecting_faces_brute_force, triangles_intersect,
    SelfIntersection, SEPARATION_EPS,
};
pub use sampling::{sample_surface, PointSample, DEFAULT_SAMPLE_COUNT};

use crate::error::Result;
use crate::mesh::TriangleMesh;

/// Flat per-scan metric record, serialized as
/// `{"assd_mm":…, "hd":{"90":…}, "sif_count":…, "sif_ratio":…}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanMetrics {
    pub assd_mm: f64,
    pub hd: Vec<(f64, f64)>,
    pub sif_count: usize,
    pub sif_ratio: f64,
}

struct HdMap<'a>(&'a [(f64, f64)]);

impl Serialize for HdMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (p, d) in self.0 {
            map.serialize_entry(&percentile_key(*p), d)?;
        }
        map.end()
    }
}

impl Serialize for ScanMetrics {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(4))?;
        map.serialize_entry("assd_mm", &self.assd_mm)?;
        map.serialize_entry("hd", &HdMap(&self.hd))?;
        map.serialize_entry("sif_count", &self.sif_count)?;
        map.serialize_entry("sif_ratio", &self.sif_ratio)?;
        map.end()
    }
}

/// Distances of `pred` against `reference` plus self-intersections of `pred`.
pub fn scan_metrics(
    pred: &TriangleMesh,
    reference: &TriangleMesh,
    percentiles: &[f64],
    n: usize,
    seeds: SampleSeeds,
) -> Result<ScanMetrics> {
    let d = surface_distances(pred, reference, percentiles, n, seeds)?;
    let sif = self_intersecting_faces(pred);
    Ok(ScanMetrics {
        assd_mm: d.assd_mm,
        hd: d.hd,
        sif_count: sif.count,
        sif_ratio: sif.ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::icosphere;

    #[test]
    fn json_layout() {
        let r = ScanMetrics {
            assd_mm: 0.25,
            hd: vec![(99.0, 1.5), (90.0, 0.5)],
            sif_count: 3,
            sif_ratio: 0.125,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"assd_mm":0.25,"hd":{"99":1.5,"90":0.5},"sif_count":3,"sif_ratio":0.125}"#
        );
    }

    #[test]
    fn self_comparison_is_zero_to_rounding() {
        let m = icosphere(2, 1.0).unwrap();
        let r = scan_metrics(&m, &m, &[90.0, 99.0], 100, SampleSeeds::from_seed(1)).unwrap();
        assert!(r.assd_mm < 1e-12);
        assert!(r.hd.iter().all(|(_, d)| *d < 1e-12));
        assert_eq!((r.sif_count, r.sif_ratio), (0, 0.0));
    }
}
