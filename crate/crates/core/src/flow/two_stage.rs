use std::sync::Arc;

use rayon::prelude::*;

use super::integrate::{integrate, TrajectoryConfig};
use super::template::within_subject_template;
use super::{DeformationField, GeneralizedVertexSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageOutput {
    /// Stage-1 result per visit (population template deformed independently).
    pub stage1: Vec<GeneralizedVertexSet>,
    /// Mean of the stage-1 results.
    pub template: GeneralizedVertexSet,
    /// Stage-2 result per visit (subject template deformed again).
    pub visits: Vec<GeneralizedVertexSet>,
}

/// Stage 1 deforms `population_template` once per visit with `stage1(j)`, the
/// results are averaged into the subject template, and stage 2 deforms that
/// template once per visit with `stage2(j, &template)`. All outputs keep the
/// vertex indexing of the input.
pub fn two_stage_pipeline<S1, S2>(
    population_template: &GeneralizedVertexSet,
    visit_count: usize,
    stage1: S1,
    stage2: S2,
    cfg: &TrajectoryConfig,
) -> Result<TwoStageOutput>
where
    S1: Fn(usize) -> Result<Arc<dyn DeformationField>> + Sync,
    S2: Fn(usize, &GeneralizedVertexSet) -> Result<Arc<dyn DeformationField>> + Sync,
{
    if visit_count == 0 {
        return Err(Error::InsufficientVisits { needed: 1, got: 0 });
    }
    cfg.validate()?;
    let stage1_out: Vec<GeneralizedVertexSet> = (0..visit_count)
        .into_par_iter()
        .map(|j| integrate(population_template, stage1(j)?.as_ref(), cfg))
        .collect::<Result<_>>()?;
    let template = within_subject_template(&stage1_out)?;
    let visits: Vec<GeneralizedVertexSet> = (0..visit_count)
        .into_par_iter()
        .map(|j| integrate(&template, stage2(j, &template)?.as_ref(), cfg))
        .collect::<Result<_>>()?;
    Ok(TwoStageOutput {
        stage1: stage1_out,
        template,
        visits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{DisplacementField, FieldSpec};
    use crate::mesh::Vec3;
    use crate::phantom::icosphere;

    fn start() -> GeneralizedVertexSet {
        GeneralizedVertexSet::from_mesh(&icosphere(2, 10.0).unwrap())
    }

    fn constant(j: usize) -> Arc<dyn DeformationField> {
        Arc::new(FieldSpec::Constant {
            c: [0.1 * j as f64, 0.0, -0.05],
        })
    }

    #[test]
    fn zero_stage_two_returns_the_template() {
        let out = two_stage_pipeline(
            &start(),
            3,
            |j| Ok(constant(j)),
            |_, _| Ok(Arc::new(FieldSpec::Zero) as Arc<dyn DeformationField>),
            &TrajectoryConfig::default(),
        )
        .unwrap();
        for v in &out.visits {
            assert_eq!(v, &out.template);
        }
    }

    #[test]
    fn identical_fields_give_identical_visits() {
        let bump: Arc<dyn DeformationField> = Arc::new(FieldSpec::RadialBump {
            amplitude: 0.5,
            center: [10.0, 0.0, 0.0],
            width: 3.0,
        });
        let out = two_stage_pipeline(
            &start(),
            4,
            |_| Ok(bump.clone()),
            |_, _| Ok(bump.clone()),
            &TrajectoryConfig::default(),
        )
        .unwrap();
        assert!(out.visits.iter().all(|v| v == &out.visits[0]));
    }

    #[test]
    fn single_visit_template_is_the_stage_one_output() {
        let out = two_stage_pipeline(
            &start(),
            1,
            |j| Ok(constant(j + 1)),
            |_, _| Ok(Arc::new(FieldSpec::Zero) as Arc<dyn DeformationField>),
            &TrajectoryConfig::default(),
        )
        .unwrap();
        assert_eq!(out.template, out.stage1[0]);
    }

    #[test]
    fn displacement_fields_recover_their_targets() {
        let s = start();
        let targets: Vec<Vec<Vec3>> = (0..3)
            .map(|j| {
                s.coords
                    .iter()
                    .map(|p| p * (1.0 + 0.01 * j as f64) + Vec3::x() * j as f64)
                    .collect()
            })
            .collect();
        let out = two_stage_pipeline(
            &s,
            3,
            |j| {
                Ok(
                    Arc::new(DisplacementField::between(&s.coords, &targets[j])?)
                        as Arc<dyn DeformationField>,
                )
            },
            |j, t| {
                Ok(
                    Arc::new(DisplacementField::between(&t.coords, &targets[j])?)
                        as Arc<dyn DeformationField>,
                )
            },
            &TrajectoryConfig::default(),
        )
        .unwrap();
        for (v, target) in out.visits.iter().zip(&targets) {
            for (a, b) in v.coords.iter().zip(target) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn factory_errors_propagate() {
        let r = two_stage_pipeline(
            &start(),
            2,
            |_| Err(Error::InvalidInput("no field".into())),
            |_, _| Ok(Arc::new(FieldSpec::Zero) as Arc<dyn DeformationField>),
            &TrajectoryConfig::default(),
        );
        assert!(r.is_err());
    }
}
