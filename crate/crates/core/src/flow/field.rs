//! Deformation fields: the displacement-rate functions `f(t, V)` that move a
//! template's vertices. A field instance is bound to one visit; whatever that
//! visit contributes (an image, a target surface) lives inside the instance.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::GeneralizedVertexSet;
use crate::error::{Error, Result};
use crate::mesh::Vec3;

pub trait DeformationField: Send + Sync {
    /// Displacement rate (mm per unit time) for every vertex of `state` at time `t`.
    fn rate(&self, t: f64, state: &GeneralizedVertexSet) -> Vec<Vec3>;
}

impl<F: DeformationField + ?Sized> DeformationField for Arc<F> {
    fn rate(&self, t: f64, state: &GeneralizedVertexSet) -> Vec<Vec3> {
        (**self).rate(t, state)
    }
}

impl<F: DeformationField + ?Sized> DeformationField for Box<F> {
    fn rate(&self, t: f64, state: &GeneralizedVertexSet) -> Vec<Vec3> {
        (**self).rate(t, state)
    }
}

/// Closed-form fields, serializable as JSON, e.g.
/// `{"kind":"affine","A":[1,0,0, 0,1,0, 0,0,1],"b":[0,0,0]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Zero,
    Constant {
        c: [f64; 3],
    },
    /// `v ↦ A·v + b`, `A` row-major.
    Affine {
        #[serde(rename = "A")]
        a: [f64; 9],
        b: [f64; 3],
    },
    /// `v ↦ amplitude · exp(−‖v − center‖² / 2·width²) · v/‖v‖`
    RadialBump {
        amplitude: f64,
        center: [f64; 3],
        width: f64,
    },
    Scaled {
        factor: f64,
        field: Box<FieldSpec>,
    },
    /// Sum of the member fields.
    Composite {
        fields: Vec<FieldSpec>,
    },
}

impl FieldSpec {
    pub fn affine(a: Matrix3<f64>, b: Vec3) -> Self {
        let mut flat = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                flat[3 * r + c] = a[(r, c)];
            }
        }
        FieldSpec::Affine {
            a: flat,
            b: b.into(),
        }
    }

    #[allow(clippy::only_used_in_recursion)]
    pub fn at(&self, t: f64, p: &Vec3) -> Vec3 {
        match self {
            FieldSpec::Zero => Vec3::zeros(),
            FieldSpec::Constant { c } => Vec3::from(*c),
            FieldSpec::Affine { a, b } => Matrix3::from_row_slice(a) * p + Vec3::from(*b),
            FieldSpec::RadialBump {
                amplitude,
                center,
                width,
            } => {
                let r = p.norm();
                if r == 0.0 {
                    return Vec3::zeros();
                }
                let d2 = (p - Vec3::from(*center)).norm_squared();
                p * (amplitude * (-d2 / (2.0 * width * width)).exp() / r)
            }
            FieldSpec::Scaled { factor, field } => field.at(t, p) * *factor,
            FieldSpec::Composite { fields } => fields.iter().map(|f| f.at(t, p)).sum(),
        }
    }

    /// The linear part and offset if the field is affine in `v` (constants included).
    pub fn as_affine(&self) -> Option<(Matrix3<f64>, Vec3)> {
        match self {
            FieldSpec::Zero => Some((Matrix3::zeros(), Vec3::zeros())),
            FieldSpec::Constant { c } => Some((Matrix3::zeros(), Vec3::from(*c))),
            FieldSpec::Affine { a, b } => Some((Matrix3::from_row_slice(a), Vec3::from(*b))),
            FieldSpec::RadialBump { .. } => None,
            FieldSpec::Scaled { factor, field } => {
                field.as_affine().map(|(a, b)| (a * *factor, b * *factor))
            }
            FieldSpec::Composite { fields } => fields
                .iter()
                .try_fold((Matrix3::zeros(), Vec3::zeros()), |(a, b), f| {
                    f.as_affine().map(|(fa, fb)| (a + fa, b + fb))
                }),
        }
    }

    /// Pointwise average of the given fields; affine families collapse to a
    /// single affine field.
    pub fn mean(fields: &[FieldSpec]) -> Result<FieldSpec> {
        if fields.is_empty() {
            return Err(Error::InvalidInput("mean of zero fields".into()));
        }
        let k = fields.len() as f64;
        if let Some(parts) = fields
            .iter()
            .map(FieldSpec::as_affine)
            .collect::<Option<Vec<_>>>()
        {
            let (a, b) = parts
                .into_iter()
                .fold((Matrix3::zeros(), Vec3::zeros()), |(sa, sb), (a, b)| {
                    (sa + a, sb + b)
                });
            return Ok(FieldSpec::affine(a / k, b / k));
        }
        Ok(FieldSpec::Scaled {
            factor: 1.0 / k,
            field: Box::new(FieldSpec::Composite {
                fields: fields.to_vec(),
            }),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

impl DeformationField for FieldSpec {
    fn rate(&self, t: f64, state: &GeneralizedVertexSet) -> Vec<Vec3> {
        state.coords.iter().map(|p| self.at(t, p)).collect()
    }
}

/// Constant per-vertex velocities, addressed by vertex index. Integrated over
/// unit time it carries vertex `k` of the start state by exactly
/// `displacement[k]`; it stands in for a field that knows its target surface.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub displacement: Vec<Vec3>,
}

impl DisplacementField {
    /// The field that carries `from` onto `to` over unit time.
    pub fn between(from: &[Vec3], to: &[Vec3]) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} start vertices vs {} target vertices",
                from.len(),
                to.len()
            )));
        }
        Ok(Self {
            displacement: from.iter().zip(to).map(|(a, b)| b - a).collect(),
        })
    }
}

impl DeformationField for DisplacementField {
    fn rate(&self, _t: f64, state: &GeneralizedVertexSet) -> Vec<Vec3> {
        assert_eq!(
            state.coords.len(),
            self.displacement.len(),
            "displacement field size"
        );
        self.displacement.clone()
    }
}

/// `f̄(t, V) = (1/n) Σ_j f_j(t, V)` over one subject's per-visit fields.
pub struct MeanField {
    fields: Vec<Arc<dyn DeformationField>>,
}

impl MeanField {
    pub fn new(fields: Vec<Arc<dyn DeformationField>>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidInput("mean of zero fields".into()));
        }
        Ok(Self { fields })
    }
}

impl DeformationField for MeanField {
    fn rate(&self, t: f64, state: &GeneralizedVertexSet) -> Vec<Vec3> {
        let k = self.fields.len() as f64;
        let mut acc = vec![Vec3::zeros(); state.len()];
        for f in &self.fields {
            for (a, r) in acc.iter_mut().zip(f.rate(t, state)) {
                *a += r;
            }
        }
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }
}

pub fn mean_field(fields: Vec<Arc<dyn DeformationField>>) -> Result<MeanField> {
    MeanField::new(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> GeneralizedVertexSet {
        GeneralizedVertexSet::from_coords(vec![
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(-0.5, 0.1, 0.0),
            Vec3::zeros(),
        ])
    }

    #[test]
    fn json_shapes() {
        let f: FieldSpec =
            serde_json::from_str(r#"{"kind":"affine","A":[1,0,0,0,2,0,0,0,3],"b":[0,0,1]}"#)
                .unwrap();
        assert_eq!(
            f.at(0.0, &Vec3::new(1.0, 1.0, 1.0)),
            Vec3::new(1.0, 2.0, 4.0)
        );
        let json = serde_json::to_string(&FieldSpec::Constant { c: [0.0, 0.0, 1.0] }).unwrap();
        assert_eq!(json, r#"{"kind":"constant","c":[0.0,0.0,1.0]}"#);
        let bump: FieldSpec = serde_json::from_str(
            r#"{"kind":"radial_bump","amplitude":0.5,"center":[0,0,1],"width":0.3}"#,
        )
        .unwrap();
        let at_center = bump.at(0.0, &Vec3::new(0.0, 0.0, 1.0));
        assert!((at_center - Vec3::new(0.0, 0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn mean_of_opposite_constants_is_zero() {
        let fields: Vec<Arc<dyn DeformationField>> = vec![
            Arc::new(FieldSpec::Constant {
                c: [1.0, -2.0, 0.5],
            }),
            Arc::new(FieldSpec::Constant {
                c: [-1.0, 2.0, -0.5],
            }),
        ];
        let m = mean_field(fields).unwrap();
        assert!(m.rate(0.3, &state()).iter().all(|r| *r == Vec3::zeros()));
    }

    #[test]
    fn mean_of_one_field_is_that_field() {
        let f = FieldSpec::RadialBump {
            amplitude: 0.3,
            center: [1.0, 0.0, 0.0],
            width: 0.5,
        };
        let m = mean_field(vec![Arc::new(f.clone())]).unwrap();
        assert_eq!(m.rate(0.0, &state()), f.rate(0.0, &state()));
    }

    #[test]
    fn mean_of_affine_fields_is_affine() {
        let a1 = Matrix3::new(1.0, 2.0, 0.0, 0.0, -1.0, 0.5, 0.3, 0.0, 0.2);
        let a2 = Matrix3::new(-0.4, 0.0, 1.0, 2.0, 0.0, 0.0, 0.1, 0.1, 0.1);
        let specs = vec![
            FieldSpec::affine(a1, Vec3::new(1.0, 0.0, 0.0)),
            FieldSpec::affine(a2, Vec3::new(0.0, 3.0, 0.0)),
        ];
        let mean = FieldSpec::mean(&specs).unwrap();
        let (a, b) = mean.as_affine().unwrap();
        assert!((a - (a1 + a2) / 2.0).norm() < 1e-15);
        assert!((b - Vec3::new(0.5, 1.5, 0.0)).norm() < 1e-15);
        let dynamic = mean_field(
            specs
                .into_iter()
                .map(|s| Arc::new(s) as Arc<dyn DeformationField>)
                .collect(),
        )
        .unwrap();
        for (x, y) in dynamic
            .rate(0.0, &state())
            .iter()
            .zip(mean.rate(0.0, &state()))
        {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn bump_mean_stays_pointwise() {
        let specs = vec![
            FieldSpec::RadialBump {
                amplitude: 0.2,
                center: [1.0, 0.0, 0.0],
                width: 0.4,
            },
            FieldSpec::Constant { c: [0.0, 0.0, 1.0] },
        ];
        let mean = FieldSpec::mean(&specs).unwrap();
        assert!(mean.as_affine().is_none());
        let p = Vec3::new(0.9, 0.1, 0.0);
        let expected = (specs[0].at(0.0, &p) + specs[1].at(0.0, &p)) / 2.0;
        assert!((mean.at(0.0, &p) - expected).norm() < 1e-15);
    }

    #[test]
    fn empty_mean_is_rejected() {
        assert!(mean_field(Vec::new()).is_err());
        assert!(FieldSpec::mean(&[]).is_err());
    }
}
