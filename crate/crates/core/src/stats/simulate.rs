use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::VisitMeta;
use crate::error::{Error, Result};

/// Parameters for drawing a synthetic longitudinal study from the mixed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmeSimulation {
    pub subjects: usize,
    pub visits: usize,
    pub beta: [f64; 4],
    pub psi: [[f64; 2]; 2],
    pub sigma2: f64,
    /// Baseline ages are uniform on this interval.
    pub age_range: (f64, f64),
    /// Visit `j` happens at `j·interval` years plus uniform jitter of ±`jitter` (none at baseline).
    pub interval: f64,
    pub jitter: f64,
}

impl Default for LmeSimulation {
    fn default() -> Self {
        Self {
            subjects: 200,
            visits: 4,
            beta: [2.5, -0.01, -0.02, -0.15],
            psi: [[0.04, 0.0], [0.0, 0.001]],
            sigma2: 0.01,
            age_range: (60.0, 85.0),
            interval: 1.0,
            jitter: 0.1,
        }
    }
}

impl LmeSimulation {
    /// Study design; subjects alternate between diagnosis 0 and 1.
    pub fn design(&self, seed: u64) -> Vec<VisitMeta> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut meta = Vec::with_capacity(self.subjects * self.visits);
        for i in 0..self.subjects {
            let age = rng.random_range(self.age_range.0..self.age_range.1);
            for j in 0..self.visits {
                let time = if j == 0 {
                    0.0
                } else {
                    j as f64 * self.interval + rng.random_range(-self.jitter..=self.jitter)
                };
                meta.push(VisitMeta {
                    subject: format!("s{i:04}"),
                    visit: j as u32,
                    age_baseline: age,
                    time_years: time,
                    diagnosis: (i % 2) as u8,
                });
            }
        }
        meta
    }

    /// One response vector drawn from the model for `design` (rows grouped by
    /// subject as produced by [`Self::design`]).
    pub fn response(&self, design: &[VisitMeta], seed: u64) -> Result<Vec<f64>> {
        let psi = Matrix2::new(
            self.psi[0][0],
            self.psi[0][1],
            self.psi[1][0],
            self.psi[1][1],
        );
        let chol = if psi == Matrix2::zeros() {
            Matrix2::zeros()
        } else {
            psi.cholesky()
                .ok_or_else(|| Error::InvalidInput("psi must be positive definite or zero".into()))?
                .l()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let sigma = self.sigma2.sqrt();
        let mut effects = std::collections::HashMap::new();
        Ok(design
            .iter()
            .map(|m| {
                let b = *effects
                    .entry(m.subject.clone())
                    .or_insert_with(|| chol * Vector2::new(normal(), normal()));
                let [b0, b1, b2, b3] = self.beta;
                b0 + b1 * m.age_baseline
                    + b2 * m.time_years
                    + b3 * f64::from(m.diagnosis)
                    + b[0]
                    + b[1] * m.time_years
                    + sigma * normal()
            })
            .collect())
    }
}
