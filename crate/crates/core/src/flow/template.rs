use super::GeneralizedVertexSet;
use crate::error::{Error, Result};
use crate::mesh::{FeatureMatrix, Vec3};

fn check_shapes(visits: &[GeneralizedVertexSet]) -> Result<()> {
    let first = visits
        .first()
        .ok_or(Error::InsufficientVisits { needed: 1, got: 0 })?;
    for (j, v) in visits.iter().enumerate().skip(1) {
        if v.len() != first.len() || v.features.cols() != first.features.cols() {
            return Err(Error::ShapeMismatch(format!(
                "visit {j} is {}×(3+{}) but visit 0 is {}×(3+{})",
                v.len(),
                v.features.cols(),
                first.len(),
                first.features.cols()
            )));
        }
    }
    Ok(())
}

/// Reduces every generalized coordinate (xyz and each feature channel)
/// across visits with `reduce`, which receives the values of one coordinate.
fn reduce_visits(
    visits: &[GeneralizedVertexSet],
    reduce: impl Fn(&mut [f64]) -> f64,
) -> Result<GeneralizedVertexSet> {
    check_shapes(visits)?;
    let n = visits[0].len();
    let d = visits[0].features.cols();
    let mut buf = vec![0.0; visits.len()];

    let mut coords = Vec::with_capacity(n);
    for i in 0..n {
        let mut p = Vec3::zeros();
        for k in 0..3 {
            for (slot, v) in buf.iter_mut().zip(visits) {
                *slot = v.coords[i][k];
            }
            p[k] = reduce(&mut buf);
        }
        coords.push(p);
    }

    let mut features = FeatureMatrix::zeros(n, d);
    for i in 0..n {
        for c in 0..d {
            for (slot, v) in buf.iter_mut().zip(visits) {
                *slot = v.features.row(i)[c];
            }
            features.row_mut(i)[c] = reduce(&mut buf);
        }
    }
    GeneralizedVertexSet::new(coords, features)
}

/// Arithmetic mean of a coordinate's values, summed in ascending order so the
/// result does not depend on visit order.
fn order_free_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Within-subject template: the vertex-wise mean of all visits' generalized
/// vertices (coordinates and feature channels).
pub fn within_subject_template(visits: &[GeneralizedVertexSet]) -> Result<GeneralizedVertexSet> {
    reduce_visits(visits, order_free_mean)
}

/// Componentwise median across visits (midpoint for an even visit count).
pub fn median_template(visits: &[GeneralizedVertexSet]) -> Result<GeneralizedVertexSet> {
    reduce_visits(visits, crate::morphometry::median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GeneralizedVertexSet {
        let coords = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let features = FeatureMatrix::from_row_major(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        GeneralizedVertexSet::new(coords, features).unwrap()
    }

    #[test]
    fn two_point_mean() {
        let a = GeneralizedVertexSet::from_coords(vec![
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(-1.0, 0.0, 0.25),
        ]);
        let b = a.translated(&Vec3::x());
        let t = within_subject_template(&[a.clone(), b]).unwrap();
        for (p, q) in t.coords.iter().zip(&a.coords) {
            assert!((p - q - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn single_visit_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_set(&mut rng, 10, 4);
        assert_eq!(
            within_subject_template(std::slice::from_ref(&a)).unwrap(),
            a
        );
        assert_eq!(median_template(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn mean_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let visits: Vec<_> = (0..5).map(|_| random_set(&mut rng, 20, 3)).collect();
        let t = within_subject_template(&visits).unwrap();
        for i in 0..20 {
            for k in 0..3 {
                let naive = visits.iter().map(|v| v.coords[i][k]).sum::<f64>() / 5.0;
                assert!((t.coords[i][k] - naive).abs() < 1e-15);
            }
            for c in 0..3 {
                let naive = visits.iter().map(|v| v.features.row(i)[c]).sum::<f64>() / 5.0;
                assert!((t.features.row(i)[c] - naive).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mean_ignores_visit_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut visits: Vec<_> = (0..4).map(|_| random_set(&mut rng, 30, 2)).collect();
        let t1 = within_subject_template(&visits).unwrap();
        visits.reverse();
        visits.swap(0, 2);
        assert_eq!(within_subject_template(&visits).unwrap(), t1);
    }

    #[test]
    fn median_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_set(&mut rng, 8, 1);
        let d = Vec3::new(0.5, -1.0, 2.0);
        let lo = v.translated(&-d);
        let hi = v.translated(&d);
        let m = median_template(&[hi.clone(), lo.clone(), v.clone()]).unwrap();
        for (a, b) in m.coords.iter().zip(&v.coords) {
            assert_eq!(a, b);
        }
        let m2 = median_template(&[lo.clone(), hi.clone()]).unwrap();
        let mean = within_subject_template(&[lo, hi]).unwrap();
        for (a, b) in m2.coords.iter().zip(&mean.coords) {
            assert!((a - b).norm() < 1e-14);
        }

        let visits: Vec<_> = (0..5).map(|_| random_set(&mut rng, 12, 2)).collect();
        let m = median_template(&visits).unwrap();
        for i in 0..12 {
            for k in 0..3 {
                let mut xs: Vec<f64> = visits.iter().map(|v| v.coords[i][k]).collect();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(m.coords[i][k], xs[2]);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = GeneralizedVertexSet::from_coords(vec![Vec3::zeros(); 3]);
        let b = GeneralizedVertexSet::from_coords(vec![Vec3::zeros(); 4]);
        assert!(matches!(
            within_subject_template(&[a, b]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(within_subject_template(&[]).is_err());
    }
}
