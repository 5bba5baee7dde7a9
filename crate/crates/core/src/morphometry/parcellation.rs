use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::RegionLabeling;
use crate::error::{Error, Result};
use crate::mesh::{LongitudinalSubject, PointIndex, TriangleMesh};

/// Which visit pairs are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Every unordered pair `(j, k)`, `j < k`.
    #[default]
    AllPairs,
    /// Only `(j, j+1)`.
    Consecutive,
}

impl PairMode {
    pub fn pairs(self, visits: usize) -> Vec<(usize, usize)> {
        match self {
            PairMode::AllPairs => (0..visits)
                .flat_map(|j| (j + 1..visits).map(move |k| (j, k)))
                .collect(),
            PairMode::Consecutive => (1..visits).map(|k| (k - 1, k)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParcellationF1 {
    /// F1 per region; NaN for a region without any vertex.
    pub per_region: Vec<f64>,
    /// `Σ_r (size_r / V) · F1_r`.
    pub weighted: f64,
    /// `confusion[true][predicted]`, pooled over all compared pairs and both directions.
    pub confusion: Vec<Vec<u64>>,
}

/// Transfers labels from one visit to another through nearest vertices and
/// accumulates `confusion[label(v)][label(nn(v))]`.
fn accumulate(
    from: &TriangleMesh,
    to_index: &PointIndex,
    labels: &[u32],
    confusion: &mut [Vec<u64>],
    brute_force: bool,
) {
    let predicted: Vec<u32> = from
        .vertices()
        .par_iter()
        .map(|p| {
            let nn = if brute_force {
                to_index.nearest_brute_force(p)
            } else {
                to_index.nearest(p)
            };
            labels[nn.expect("non-empty visit")]
        })
        .collect();
    for (v, pred) in predicted.into_iter().enumerate() {
        confusion[labels[v] as usize][pred as usize] += 1;
    }
}

fn parc_f1_impl(
    subject: &LongitudinalSubject,
    labels: &RegionLabeling,
    mode: PairMode,
    brute_force: bool,
) -> Result<ParcellationF1> {
    let visits = subject.visits();
    if visits.len() < 2 {
        return Err(Error::InsufficientVisits {
            needed: 2,
            got: visits.len(),
        });
    }
    if subject.tag() != labels.tag {
        return Err(Error::ConnectivityMismatch(format!(
            "labels on {} but subject {} on {}",
            labels.tag,
            subject.id(),
            subject.tag()
        )));
    }

    let classes = labels.class_count();
    let mut confusion = vec![vec![0u64; classes]; classes];
    let indices: Vec<PointIndex> = visits
        .iter()
        .map(|m| PointIndex::build(m.vertices()))
        .collect();
    for (j, k) in mode.pairs(visits.len()) {
        accumulate(
            &visits[j],
            &indices[k],
            &labels.labels,
            &mut confusion,
            brute_force,
        );
        accumulate(
            &visits[k],
            &indices[j],
            &labels.labels,
            &mut confusion,
            brute_force,
        );
    }

    let sizes = labels.sizes();
    let total = labels.labels.len() as f64;
    let mut per_region = Vec::with_capacity(classes);
    let mut weighted = 0.0;
    for r in 0..classes {
        let tp = confusion[r][r] as f64;
        let fn_ = confusion[r].iter().sum::<u64>() as f64 - tp;
        let fp = confusion.iter().map(|row| row[r]).sum::<u64>() as f64 - tp;
        let f1 = if sizes[r] == 0 {
            f64::NAN
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        };
        if sizes[r] > 0 {
            weighted += sizes[r] as f64 * f1;
        }
        per_region.push(f1);
    }
    Ok(ParcellationF1 {
        per_region,
        weighted: weighted / total,
        confusion,
    })
}

/// Region-level longitudinal consistency of a labeling carried on a shared
/// connectivity: labels are transferred between visits by vertex-to-vertex
/// nearest neighbours and scored by per-region F1.
pub fn parc_f1(
    subject: &LongitudinalSubject,
    labels: &RegionLabeling,
    mode: PairMode,
) -> Result<ParcellationF1> {
    parc_f1_impl(subject, labels, mode, false)
}

/// Same as [`parc_f1`] with exhaustive nearest-neighbour search.
pub fn parc_f1_brute_force(
    subject: &LongitudinalSubject,
    labels: &RegionLabeling,
    mode: PairMode,
) -> Result<ParcellationF1> {
    parc_f1_impl(subject, labels, mode, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vec3;
    use crate::phantom::icosphere;
    use nalgebra::{Rotation3, Unit as NUnit};

    fn hemisphere_labels(mesh: &TriangleMesh) -> RegionLabeling {
        let labels = mesh
            .vertices()
            .iter()
            .map(|v| u32::from(v.z > 0.0))
            .collect();
        RegionLabeling::new(labels, vec!["south".into(), "north".into()], mesh.tag()).unwrap()
    }

    #[test]
    fn identical_geometry_is_perfect() {
        let m = icosphere(3, 1.0).unwrap();
        let s = LongitudinalSubject::new("s", vec![m.clone(), m.clone(), m.clone()]).unwrap();
        let r = parc_f1(&s, &hemisphere_labels(&m), PairMode::AllPairs).unwrap();
        assert_eq!(r.per_region, vec![1.0, 1.0]);
        assert_eq!(r.weighted, 1.0);
    }

    #[test]
    fn swapped_hemispheres_score_near_zero() {
        let m = icosphere(3, 1.0).unwrap();
        let flip =
            Rotation3::from_axis_angle(&NUnit::new_normalize(Vec3::x()), std::f64::consts::PI);
        let rotated = m.map_vertices(|v| flip * v);
        let s = LongitudinalSubject::new("s", vec![m.clone(), rotated]).unwrap();
        let r = parc_f1(&s, &hemisphere_labels(&m), PairMode::AllPairs).unwrap();
        assert!(r.weighted < 0.05, "{r:?}");
    }

    #[test]
    fn pair_modes() {
        assert_eq!(PairMode::AllPairs.pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(PairMode::Consecutive.pairs(3), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn single_visit_is_an_error() {
        let m = icosphere(1, 1.0).unwrap();
        let s = LongitudinalSubject::new("s", vec![m.clone()]).unwrap();
        assert!(parc_f1(&s, &hemisphere_labels(&m), PairMode::AllPairs).is_err());
    }
}
