use serde::{Deserialize, Serialize};

use super::{DeformationField, GeneralizedVertexSet};
use crate::error::{Error, Result};
use crate::mesh::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    /// Classical fourth-order Runge–Kutta, kept as a reference solver.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    pub steps: usize,
    pub step_size: f64,
    pub integrator: Integrator,
}

impl Default for TrajectoryConfig {
    /// Five forward-Euler steps of 0.2 from t = 0 to t = 1.
    fn default() -> Self {
        Self {
            steps: 5,
            step_size: 0.2,
            integrator: Integrator::Euler,
        }
    }
}

impl TrajectoryConfig {
    /// `steps` equal steps covering the unit interval.
    pub fn unit_interval(steps: usize, integrator: Integrator) -> Self {
        Self {
            steps,
            step_size: 1.0 / steps as f64,
            integrator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidInput(
                "trajectory needs at least one step".into(),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        Ok(())
    }

    pub fn end_time(&self) -> f64 {
        self.steps as f64 * self.step_size
    }
}

fn checked_rate(
    field: &dyn DeformationField,
    t: f64,
    state: &GeneralizedVertexSet,
    step: usize,
) -> Result<Vec<Vec3>> {
    let rate = field.rate(t, state);
    if rate.len() != state.len() {
        return Err(Error::ShapeMismatch(format!(
            "field returned {} rates for {} vertices",
            rate.len(),
            state.len()
        )));
    }
    if let Some(vertex) = rate.iter().position(|r| !r.iter().all(|x| x.is_finite())) {
        return Err(Error::NonFiniteField { step, vertex });
    }
    Ok(rate)
}

fn offset(state: &GeneralizedVertexSet, rate: &[Vec3], h: f64) -> GeneralizedVertexSet {
    GeneralizedVertexSet {
        coords: state
            .coords
            .iter()
            .zip(rate)
            .map(|(p, r)| p + r * h)
            .collect(),
        features: state.features.clone(),
    }
}

/// Integrates `dV/dt = f(t, V)` from `V(0) = template`. Only coordinates move;
/// feature channels ride along unchanged.
pub fn integrate(
    template: &GeneralizedVertexSet,
    field: &dyn DeformationField,
    cfg: &TrajectoryConfig,
) -> Result<GeneralizedVertexSet> {
    cfg.validate()?;
    let h = cfg.step_size;
    let mut state = template.clone();
    for s in 0..cfg.steps {
        let t = h * s as f64;
        match cfg.integrator {
            Integrator::Euler => {
                let k1 = checked_rate(field, t, &state, s)?;
                for (p, r) in state.coords.iter_mut().zip(&k1) {
                    *p += r * h;
                }
            }
            Integrator::Rk4 => {
                let k1 = checked_rate(field, t, &state, s)?;
                let k2 = checked_rate(field, t + h / 2.0, &offset(&state, &k1, h / 2.0), s)?;
                let k3 = checked_rate(field, t + h / 2.0, &offset(&state, &k2, h / 2.0), s)?;
                let k4 = checked_rate(field, t + h, &offset(&state, &k3, h), s)?;
                for (i, p) in state.coords.iter_mut().enumerate() {
                    *p += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
                }
            }
        }
    }
    Ok(state)
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn fitted_order(step_sizes: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = step_sizes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
