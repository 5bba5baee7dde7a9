//! Synthetic cortical phantoms: bumpy spherical white surfaces, pial surfaces
//! offset by a prescribed thickness, sector labels, and longitudinal series
//! with rigid motion and planted atrophy.

mod icosphere;

pub use icosphere::{icosphere, MAX_LEVEL};

use nalgebra::{Rotation3, Unit as NUnit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{vertex_normals, LongitudinalSubject, TriangleMesh, Vec3};
use crate::metrics::splitmix64;
use crate::morphometry::{RegionLabeling, Unit, VertexScalarField};
use crate::stats::VisitMeta;

pub const UNKNOWN_LABEL: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub level: u32,
    /// Radius of the underlying sphere (mm).
    pub radius: f64,
    /// Gaussian bumps on the white surface; centers and signed amplitudes are drawn from `seed`.
    pub bump_count: usize,
    /// Largest bump amplitude (mm).
    pub bump_amplitude: f64,
    /// Bump width as a chord length on the unit sphere.
    pub bump_width: f64,
    /// Mean thickness (mm).
    pub thickness: f64,
    /// Thickness varies as `thickness + variation·u_z` over unit directions `u`.
    pub thickness_variation: f64,
    /// Subject-level thickness shift (mm).
    pub thickness_offset: f64,
    /// SD of independent per-vertex, per-visit thickness noise (mm).
    pub noise_sd: f64,
    /// Label count: 8 gives octants, anything else equal longitude wedges.
    pub sectors: usize,
    /// Sector named `unknown`.
    pub unknown_sector: u32,
    pub visits: usize,
    pub visit_interval_years: f64,
    /// Largest per-visit rotation (degrees).
    pub max_rotation_deg: f64,
    /// Largest per-visit translation (mm).
    pub max_translation_mm: f64,
    /// Thinning inside the affected sectors (mm per year), diagnosis 1 only.
    pub atrophy_rate: f64,
    pub affected_sectors: Vec<u32>,
    /// Years of atrophy already accumulated at baseline (diagnosis 1 only).
    pub disease_duration_years: f64,
    pub diagnosis: u8,
    pub age_baseline: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            level: 4,
            radius: 50.0,
            bump_count: 6,
            bump_amplitude: 3.0,
            bump_width: 0.35,
            thickness: 2.5,
            thickness_variation: 0.3,
            thickness_offset: 0.0,
            noise_sd: 0.0,
            sectors: 8,
            unknown_sector: 7,
            visits: 3,
            visit_interval_years: 1.0,
            max_rotation_deg: 2.0,
            max_translation_mm: 1.0,
            atrophy_rate: 0.0,
            affected_sectors: vec![0],
            disease_duration_years: 0.0,
            diagnosis: 0,
            age_baseline: 70.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(m));
        if self.level > MAX_LEVEL {
            return fail(format!("level {} exceeds {MAX_LEVEL}", self.level));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return fail(format!("radius must be positive, got {}", self.radius));
        }
        if !(self.bump_amplitude >= 0.0
            && self.bump_count as f64 * self.bump_amplitude < self.radius / 2.0)
        {
            return fail("bump amplitudes must sum to less than radius/2".into());
        }
        if !(self.bump_width > 0.0) {
            return fail("bump width must be positive".into());
        }
        if self.visits == 0 {
            return fail("at least one visit".into());
        }
        if !(self.visit_interval_years > 0.0) {
            return fail("visit interval must be positive".into());
        }
        if self.sectors == 0 || self.unknown_sector as usize >= self.sectors {
            return fail(format!(
                "unknown sector {} not among {} sectors",
                self.unknown_sector, self.sectors
            ));
        }
        if let Some(s) = self
            .affected_sectors
            .iter()
            .find(|&&s| s as usize >= self.sectors)
        {
            return fail(format!(
                "affected sector {s} not among {} sectors",
                self.sectors
            ));
        }
        if self.diagnosis > 1 {
            return fail("diagnosis must be 0 or 1".into());
        }
        if !(self.atrophy_rate >= 0.0 && self.disease_duration_years >= 0.0 && self.noise_sd >= 0.0)
        {
            return fail("atrophy rate, disease duration and noise must be non-negative".into());
        }
        if !(self.max_rotation_deg >= 0.0 && self.max_translation_mm >= 0.0) {
            return fail("warp bounds must be non-negative".into());
        }
        let last =
            (self.visits - 1) as f64 * self.visit_interval_years + self.disease_duration_years;
        let thinnest = self.thickness - self.thickness_variation.abs() + self.thickness_offset
            - self.atrophy_rate * last
            - 6.0 * self.noise_sd;
        if !(thinnest > 0.0) {
            return fail(format!("prescribed thickness can reach {thinnest} mm"));
        }
        Ok(())
    }

    fn times(&self) -> Vec<f64> {
        (0..self.visits)
            .map(|j| j as f64 * self.visit_interval_years)
            .collect()
    }
}

/// Fixed generic frame for sector labels, so no sector boundary passes
/// through the icosphere's symmetry planes.
fn label_frame() -> Rotation3<f64> {
    Rotation3::from_axis_angle(&NUnit::new_normalize(Vec3::new(1.0, 2.0, 3.0)), 0.5)
}

fn sector_of(u: &Vec3, sectors: usize) -> u32 {
    let p = label_frame() * u;
    if sectors == 8 {
        (u32::from(p.x < 0.0)) | (u32::from(p.y < 0.0) << 1) | (u32::from(p.z < 0.0) << 2)
    } else {
        let angle = p.y.atan2(p.x) + std::f64::consts::PI;
        ((angle / std::f64::consts::TAU * sectors as f64) as usize).min(sectors - 1) as u32
    }
}

fn sector_names(spec: &PhantomSpec) -> Vec<String> {
    (0..spec.sectors as u32)
        .map(|s| {
            if s == spec.unknown_sector {
                UNKNOWN_LABEL.to_string()
            } else {
                format!("sector_{s}")
            }
        })
        .collect()
}

/// Rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RigidWarp {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidWarp {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
        ) + Vec3::from(self.translation)
    }

    fn random(rng: &mut ChaCha8Rng, max_rotation_deg: f64, max_translation: f64) -> Self {
        let axis = random_direction(rng);
        let angle = rng.random_range(-1.0..=1.0) * max_rotation_deg.to_radians();
        let rot = Rotation3::from_axis_angle(&NUnit::new_normalize(axis), angle);
        let m = rot.matrix();
        let t = random_direction(rng) * (rng.random_range(0.0..=1.0) * max_translation);
        Self {
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: t.into(),
        }
    }
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if v.norm() > 1e-9 {
            return v.normalize();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub wm: TriangleMesh,
    pub pial: TriangleMesh,
    pub labels: RegionLabeling,
    /// Thickness the pial surface was built with.
    pub thickness: VertexScalarField,
}

struct Geometry {
    sphere: TriangleMesh,
    wm: TriangleMesh,
    normals: Vec<Vec3>,
    labels: RegionLabeling,
    base_thickness: Vec<f64>,
}

fn geometry(spec: &PhantomSpec) -> Result<Geometry> {
    spec.validate()?;
    let sphere = icosphere(spec.level, 1.0)?;
    let directions = sphere.vertices().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bumps: Vec<(Vec3, f64)> = (0..spec.bump_count)
        .map(|_| {
            let c = random_direction(&mut rng);
            (c, rng.random_range(-1.0..=1.0) * spec.bump_amplitude)
        })
        .collect();
    let w2 = 2.0 * spec.bump_width * spec.bump_width;
    let wm_vertices = directions
        .iter()
        .map(|u| {
            let r = spec.radius
                + bumps
                    .iter()
                    .map(|(c, a)| a * (-(u - c).norm_squared() / w2).exp())
                    .sum::<f64>();
            u * r
        })
        .collect();
    let wm = sphere.with_vertices(wm_vertices)?;
    let normals = vertex_normals(&wm)?;
    let labels = RegionLabeling::new(
        directions
            .iter()
            .map(|u| sector_of(u, spec.sectors))
            .collect(),
        sector_names(spec),
        sphere.tag(),
    )?;
    let base_thickness = directions
        .iter()
        .map(|u| spec.thickness + spec.thickness_variation * u.z + spec.thickness_offset)
        .collect();
    Ok(Geometry {
        sphere,
        wm,
        normals,
        labels,
        base_thickness,
    })
}

fn offset_surface(g: &Geometry, thickness: &[f64]) -> Result<TriangleMesh> {
    let pial =
        g.wm.vertices()
            .iter()
            .zip(&g.normals)
            .zip(thickness)
            .map(|((p, n), t)| p + n * *t)
            .collect();
    g.sphere.with_vertices(pial)
}

/// Baseline phantom: no motion, no atrophy beyond the disease duration, no noise.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    let g = geometry(spec)?;
    let thickness = visit_thickness(spec, &g, 0.0, None);
    let pial = offset_surface(&g, &thickness)?;
    Ok(Phantom {
        thickness: VertexScalarField::new(thickness, g.sphere.tag(), Unit::Millimeter)?,
        wm: g.wm,
        pial,
        labels: g.labels,
    })
}

fn visit_thickness(
    spec: &PhantomSpec,
    g: &Geometry,
    time: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Vec<f64> {
    let years = if spec.diagnosis == 1 {
        time + spec.disease_duration_years
    } else {
        0.0
    };
    let mut t: Vec<f64> = g
        .base_thickness
        .iter()
        .zip(&g.labels.labels)
        .map(|(base, label)| {
            if spec.affected_sectors.contains(label) {
                base - spec.atrophy_rate * years
            } else {
                *base
            }
        })
        .collect();
    if let Some(rng) = rng {
        if spec.noise_sd > 0.0 {
            for x in &mut t {
                let e: f64 = StandardNormal.sample(rng);
                *x += spec.noise_sd * e;
            }
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVisit {
    pub time_years: f64,
    pub wm: TriangleMesh,
    pub pial: TriangleMesh,
    /// Prescribed thickness of this visit.
    pub thickness: VertexScalarField,
    pub warp: RigidWarp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub id: String,
    pub spec: PhantomSpec,
    pub labels: RegionLabeling,
    /// Unwarped white surface shared by all visits.
    pub wm_template: TriangleMesh,
    pub visits: Vec<SyntheticVisit>,
    pub meta: Vec<VisitMeta>,
}

impl SyntheticSubject {
    pub fn wm_series(&self) -> Result<LongitudinalSubject> {
        LongitudinalSubject::new(
            self.id.clone(),
            self.visits.iter().map(|v| v.wm.clone()).collect(),
        )
    }

    pub fn pial_series(&self) -> Result<LongitudinalSubject> {
        LongitudinalSubject::new(
            self.id.clone(),
            self.visits.iter().map(|v| v.pial.clone()).collect(),
        )
    }
}

/// A subject's visit series: every visit is the phantom under its own rigid
/// motion, with thickness reduced by `rate·(W_j + duration)` inside the
/// affected sectors when the diagnosis is 1, plus optional noise.
pub fn synth_longitudinal(spec: &PhantomSpec, id: &str) -> Result<SyntheticSubject> {
    let g = geometry(spec)?;
    let mut warp_rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ 0x7761_7270));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ 0x6e6f_6973));
    let tag = g.sphere.tag();
    let mut visits = Vec::with_capacity(spec.visits);
    let mut meta = Vec::with_capacity(spec.visits);
    for (j, time) in spec.times().into_iter().enumerate() {
        let thickness = visit_thickness(spec, &g, time, Some(&mut noise_rng));
        if let Some(v) = thickness.iter().position(|t| !(*t > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "visit {j}: thickness {} at vertex {v}",
                thickness[v]
            )));
        }
        let pial = offset_surface(&g, &thickness)?;
        let warp = RigidWarp::random(
            &mut warp_rng,
            spec.max_rotation_deg,
            spec.max_translation_mm,
        );
        visits.push(SyntheticVisit {
            time_years: time,
            wm: g.wm.map_vertices(|p| warp.apply(p)),
            pial: pial.map_vertices(|p| warp.apply(p)),
            thickness: VertexScalarField::new(thickness, tag, Unit::Millimeter)?,
            warp,
        });
        meta.push(VisitMeta {
            subject: id.to_string(),
            visit: j as u32,
            age_baseline: spec.age_baseline,
            time_years: time,
            diagnosis: spec.diagnosis,
        });
    }
    Ok(SyntheticSubject {
        id: id.to_string(),
        spec: spec.clone(),
        labels: g.labels,
        wm_template: g.wm,
        visits,
        meta,
    })
}

/// A two-group study of phantoms that differ in bumps, age and mean thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub subjects_per_group: usize,
    /// Template for every subject; `seed`, `diagnosis`, `age_baseline` and
    /// `thickness_offset` are set per subject.
    pub phantom: PhantomSpec,
    pub age_range: (f64, f64),
    /// SD of the subject-level thickness shift (mm).
    pub thickness_offset_sd: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            subjects_per_group: 20,
            phantom: PhantomSpec {
                level: 3,
                visits: 4,
                atrophy_rate: 0.1,
                disease_duration_years: 2.0,
                noise_sd: 0.05,
                affected_sectors: vec![0, 3],
                ..Default::default()
            },
            age_range: (60.0, 85.0),
            thickness_offset_sd: 0.1,
            seed: 0,
        }
    }
}

impl CohortSpec {
    /// Per-subject specs; subjects alternate between diagnosis 0 and 1.
    pub fn subject_specs(&self) -> Vec<(String, PhantomSpec)> {
        let n = 2 * self.subjects_per_group;
        (0..n)
            .map(|i| {
                let seed = splitmix64(self.seed.wrapping_add(i as u64 + 1));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let offset: f64 = StandardNormal.sample(&mut rng);
                let spec = PhantomSpec {
                    seed,
                    diagnosis: (i % 2) as u8,
                    age_baseline: rng.random_range(self.age_range.0..self.age_range.1),
                    thickness_offset: offset * self.thickness_offset_sd,
                    ..self.phantom.clone()
                };
                (format!("sub-{i:03}"), spec)
            })
            .collect()
    }
}

pub fn synth_cohort(spec: &CohortSpec) -> Result<Vec<SyntheticSubject>> {
    if spec.subjects_per_group == 0 {
        return Err(Error::InvalidInput("empty cohort".into()));
    }
    spec.subject_specs()
        .par_iter()
        .map(|(id, s)| synth_longitudinal(s, id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate;
    use crate::metrics::self_intersecting_faces;
    use crate::morphometry::{cortical_thickness, longitudinal_variance};

    #[test]
    fn concentric_spheres_recover_thickness() {
        let spec = PhantomSpec {
            bump_count: 0,
            thickness_variation: 0.0,
            thickness: 2.0,
            ..Default::default()
        };
        let p = make_phantom(&spec).unwrap();
        let t = cortical_thickness(&p.wm, &p.pial).unwrap();
        assert!(
            t.values.iter().all(|x| (x - 2.0).abs() < 1e-2),
            "{:?}",
            &t.values[..5]
        );
    }

    #[test]
    fn surfaces_are_valid_without_intersections() {
        let p = make_phantom(&PhantomSpec {
            level: 3,
            ..Default::default()
        })
        .unwrap();
        for m in [&p.wm, &p.pial] {
            assert!(validate(m).is_valid_closed());
            assert_eq!(self_intersecting_faces(m).count, 0);
        }
        assert!(p.thickness.values.iter().all(|t| *t > 0.0));
    }

    #[test]
    fn sectors_match_solid_angles() {
        let p = make_phantom(&PhantomSpec::default()).unwrap();
        let n = p.labels.labels.len() as f64;
        for size in p.labels.sizes() {
            assert!(
                (size as f64 / n - 0.125).abs() < 0.05 * 0.125,
                "{:?}",
                p.labels.sizes()
            );
        }
        assert_eq!(p.labels.label_id(UNKNOWN_LABEL), Some(7));
        let wedges = make_phantom(&PhantomSpec {
            sectors: 5,
            unknown_sector: 0,
            ..Default::default()
        })
        .unwrap();
        for size in wedges.labels.sizes() {
            assert!(
                (size as f64 / n - 0.2).abs() < 0.05 * 0.2,
                "{:?}",
                wedges.labels.sizes()
            );
        }
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let a = make_phantom(&PhantomSpec {
            level: 2,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let b = make_phantom(&PhantomSpec {
            level: 2,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let c = make_phantom(&PhantomSpec {
            level: 2,
            seed: 6,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.wm, c.wm);
    }

    #[test]
    fn no_atrophy_means_constant_ground_truth() {
        let s = synth_longitudinal(
            &PhantomSpec {
                level: 2,
                visits: 4,
                diagnosis: 1,
                ..Default::default()
            },
            "s",
        )
        .unwrap();
        let fields: Vec<_> = s.visits.iter().map(|v| v.thickness.clone()).collect();
        assert_eq!(longitudinal_variance(&fields).unwrap().score, 0.0);
        assert_eq!(s.wm_series().unwrap().visits().len(), 4);
    }

    #[test]
    fn planted_sector_thins_at_the_given_rate() {
        let spec = PhantomSpec {
            level: 3,
            visits: 3,
            diagnosis: 1,
            atrophy_rate: 0.05,
            affected_sectors: vec![2],
            ..Default::default()
        };
        let s = synth_longitudinal(&spec, "s").unwrap();
        let mean_in = |j: usize, inside: bool| {
            let vals: Vec<f64> = s.visits[j]
                .thickness
                .values
                .iter()
                .zip(&s.labels.labels)
                .filter(|(_, l)| (**l == 2) == inside)
                .map(|(t, _)| *t)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        for j in 1..3 {
            assert!((mean_in(0, true) - mean_in(j, true) - 0.05 * j as f64).abs() < 1e-12);
            assert!((mean_in(0, false) - mean_in(j, false)).abs() < 1e-12);
        }
        let control = synth_longitudinal(
            &PhantomSpec {
                diagnosis: 0,
                ..spec
            },
            "c",
        )
        .unwrap();
        assert_eq!(control.visits[0].thickness, control.visits[2].thickness);
    }

    #[test]
    fn visits_share_connectivity_and_metadata() {
        let s = synth_longitudinal(
            &PhantomSpec {
                level: 2,
                visits: 3,
                ..Default::default()
            },
            "x",
        )
        .unwrap();
        let tag = s.wm_template.tag();
        assert!(s
            .visits
            .iter()
            .all(|v| v.wm.tag() == tag && v.pial.tag() == tag));
        assert_eq!(
            s.meta.iter().map(|m| m.time_years).collect::<Vec<_>>(),
            vec![0.0, 1.0, 2.0]
        );
    }

    #[test]
    fn invalid_specs() {
        assert!(make_phantom(&PhantomSpec {
            radius: -1.0,
            ..Default::default()
        })
        .is_err());
        assert!(make_phantom(&PhantomSpec {
            bump_amplitude: 5.0,
            ..Default::default()
        })
        .is_err());
        assert!(make_phantom(&PhantomSpec {
            visits: 0,
            ..Default::default()
        })
        .is_err());
        assert!(make_phantom(&PhantomSpec {
            level: 9,
            ..Default::default()
        })
        .is_err());
        assert!(make_phantom(&PhantomSpec {
            atrophy_rate: 2.0,
            visits: 3,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn cohort_alternates_groups() {
        let cohort = synth_cohort(&CohortSpec {
            subjects_per_group: 2,
            phantom: PhantomSpec {
                level: 1,
                ..CohortSpec::default().phantom
            },
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cohort.len(), 4);
        assert_eq!(
            cohort.iter().map(|s| s.spec.diagnosis).collect::<Vec<_>>(),
            vec![0, 1, 0, 1]
        );
    }
}
