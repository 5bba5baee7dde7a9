//! Numerical check that averaging per-visit Euler trajectories is the same as
//! one Euler trajectory driven by the mean of the per-visit fields.
//!
//! Two versions of the aggregate trajectory are compared against the mean of
//! the per-visit results:
//!
//! * step recursion: `T_{s+1} = T_s + h/(K+1) Σ_j f_j(hs, V_{j,s})`, each `f_j`
//!   evaluated at its own visit's iterate. Equal to the mean of the per-visit
//!   trajectories at every step, so the discrepancy is pure rounding.
//! * template evaluation: `T_{s+1} = T_s + h f̄(hs, T_s)`, the mean field
//!   evaluated at the aggregate itself. Equal only when the fields share their
//!   Jacobian (constants, affine fields with a common linear part).

use std::sync::Arc;

use serde::Serialize;

use super::integrate::{integrate, Integrator, TrajectoryConfig};
use super::{DeformationField, GeneralizedVertexSet, MeanField};
use crate::error::{Error, Result};
use crate::mesh::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemplateFlowCheck {
    /// max_v ‖mean_j V_j(1) − T(1)‖ with the per-visit step recursion.
    pub recursion_discrepancy: f64,
    /// max_v ‖mean_j V_j(1) − T(1)‖ with the mean field evaluated at `T_s`.
    pub template_eval_discrepancy: f64,
}

fn max_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

fn plain_mean(sets: &[GeneralizedVertexSet]) -> Vec<Vec3> {
    let k = sets.len() as f64;
    (0..sets[0].len())
        .map(|i| sets.iter().map(|s| s.coords[i]).sum::<Vec3>() / k)
        .collect()
}

pub fn verify_theorem1(
    template: &GeneralizedVertexSet,
    fields: &[Arc<dyn DeformationField>],
    cfg: &TrajectoryConfig,
) -> Result<TemplateFlowCheck> {
    cfg.validate()?;
    if cfg.integrator != Integrator::Euler {
        return Err(Error::InvalidInput(
            "the template-flow check is defined for forward Euler".into(),
        ));
    }
    if fields.is_empty() {
        return Err(Error::InvalidInput("no visit fields".into()));
    }
    let k = fields.len() as f64;
    let h = cfg.step_size;

    // left-hand side: mean of the independent per-visit trajectories
    let finals: Vec<GeneralizedVertexSet> = fields
        .iter()
        .map(|f| integrate(template, f.as_ref(), cfg))
        .collect::<Result<_>>()?;
    let lhs = plain_mean(&finals);

    // step recursion, carrying the per-visit iterates alongside the aggregate
    let mut visit_states: Vec<GeneralizedVertexSet> = vec![template.clone(); fields.len()];
    let mut aggregate = template.coords.clone();
    for s in 0..cfg.steps {
        let t = h * s as f64;
        let rates: Vec<Vec<Vec3>> = fields
            .iter()
            .zip(&visit_states)
            .map(|(f, state)| f.rate(t, state))
            .collect();
        for (i, a) in aggregate.iter_mut().enumerate() {
            let sum: Vec3 = rates.iter().map(|r| r[i]).sum();
            *a += sum * (h / k);
        }
        for (state, rate) in visit_states.iter_mut().zip(&rates) {
            for (p, r) in state.coords.iter_mut().zip(rate) {
                *p += r * h;
            }
        }
    }
    let recursion_discrepancy = max_distance(&lhs, &aggregate);

    // template evaluation: one trajectory of the mean field
    let mean = MeanField::new(fields.to_vec())?;
    let direct = integrate(template, &mean, cfg)?;
    let template_eval_discrepancy = max_distance(&lhs, &direct.coords);

    Ok(TemplateFlowCheck {
        recursion_discrepancy,
        template_eval_discrepancy,
    })
}

/// `template_eval_discrepancy` of [`verify_theorem1`] for each step size, with
/// `round(1/h)` steps per run.
pub fn template_eval_discrepancies(
    template: &GeneralizedVertexSet,
    fields: &[Arc<dyn DeformationField>],
    step_sizes: &[f64],
) -> Result<Vec<f64>> {
    step_sizes
        .iter()
        .map(|&h| {
            let cfg = TrajectoryConfig {
                steps: (1.0 / h).round() as usize,
                step_size: h,
                integrator: Integrator::Euler,
            };
            Ok(verify_theorem1(template, fields, &cfg)?.template_eval_discrepancy)
        })
        .collect()
}
