//! Browser demo: a shaded phantom colored by curvature or thickness, the
//! template-flow discrepancy as a function of step size, and Euler vs RK4
//! convergence. Every export has a plain Rust counterpart that runs natively.

use std::sync::Arc;

use longsurf::flow::{
    fitted_order, integrate, template_eval_discrepancies, verify_theorem1, DeformationField,
    FieldSpec, GeneralizedVertexSet, Integrator, TrajectoryConfig,
};
use longsurf::mesh::Vec3;
use longsurf::morphometry::mean_curvature;
use longsurf::phantom::{icosphere, make_phantom, PhantomSpec};
use longsurf::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Which per-vertex map colors the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceMap {
    Curvature,
    Thickness,
}

/// Projected, depth-sorted faces ready for a 2-D canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    /// Per face: `x0 y0 x1 y1 x2 y2 r g b` with coordinates in [-1, 1] and
    /// color channels in [0, 255]; far faces first.
    pub faces: Vec<f64>,
    /// Map value range spanned by the color scale.
    pub lo: f64,
    pub hi: f64,
}

fn colormap(x: f64) -> [f64; 3] {
    // blue → white → red
    let x = x.clamp(0.0, 1.0);
    if x < 0.5 {
        let s = x / 0.5;
        [255.0 * s, 255.0 * s, 255.0]
    } else {
        let s = (1.0 - x) / 0.5;
        [255.0, 255.0 * s, 255.0 * s]
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

pub fn render_phantom(
    level: u32,
    bump_amplitude: f64,
    seed: u64,
    map: SurfaceMap,
    yaw: f64,
    pitch: f64,
) -> Result<Rendering> {
    let spec = PhantomSpec {
        level,
        bump_amplitude,
        seed,
        ..Default::default()
    };
    let p = make_phantom(&spec)?;
    let (mesh, values) = match map {
        SurfaceMap::Curvature => {
            let h = mean_curvature(&p.wm)?;
            (p.wm, h.values)
        }
        SurfaceMap::Thickness => (p.pial, p.thickness.values),
    };
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (quantile(&sorted, 0.02), quantile(&sorted, 0.98));
    let span = if hi > lo { hi - lo } else { 1.0 };

    let (sy, cy, sp, cp) = (yaw.sin(), yaw.cos(), pitch.sin(), pitch.cos());
    let view = |v: &Vec3| {
        let x = cy * v.x + sy * v.z;
        let z = -sy * v.x + cy * v.z;
        Vec3::new(x, cp * v.y - sp * z, sp * v.y + cp * z)
    };
    let projected: Vec<Vec3> = mesh.vertices().iter().map(view).collect();
    let scale = projected
        .iter()
        .map(|v| v.x.abs().max(v.y.abs()))
        .fold(0.0, f64::max)
        * 1.05;
    let light = Vec3::new(0.3, 0.4, 1.0).normalize();

    let mut visible: Vec<(f64, [f64; 9])> = mesh
        .faces()
        .iter()
        .filter_map(|f| {
            let [a, b, c] = f.map(|i| projected[i as usize]);
            let n = (b - a).cross(&(c - a));
            if n.z <= 0.0 {
                return None;
            }
            let shade = 0.35 + 0.65 * n.normalize().dot(&light).max(0.0);
            let value = f.iter().map(|&i| values[i as usize]).sum::<f64>() / 3.0;
            let rgb = colormap((value - lo) / span).map(|ch| ch * shade);
            let depth = (a.z + b.z + c.z) / 3.0;
            Some((
                depth,
                [
                    a.x / scale,
                    a.y / scale,
                    b.x / scale,
                    b.y / scale,
                    c.x / scale,
                    c.y / scale,
                    rgb[0],
                    rgb[1],
                    rgb[2],
                ],
            ))
        })
        .collect();
    visible.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(Rendering {
        faces: visible.into_iter().flat_map(|(_, f)| f).collect(),
        lo,
        hi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSweep {
    pub step_sizes: Vec<f64>,
    /// Per-visit step recursion vs the mean trajectory.
    pub recursion: Vec<f64>,
    /// Mean field evaluated along the template vs the mean trajectory.
    pub template_eval: Vec<f64>,
}

/// Two visits pushed by opposite radial bumps of the given amplitude on a
/// unit sphere, integrated over unit time at each step count.
pub fn flow_sweep(amplitude: f64, step_counts: &[usize]) -> Result<FlowSweep> {
    let template = GeneralizedVertexSet::from_mesh(&icosphere(2, 1.0)?);
    let bump = |a: f64, c: [f64; 3]| -> Arc<dyn DeformationField> {
        Arc::new(FieldSpec::RadialBump {
            amplitude: a,
            center: c,
            width: 0.5,
        })
    };
    let fields = vec![
        bump(amplitude, [0.0, 0.0, 1.0]),
        bump(-amplitude, [1.0, 0.0, 0.0]),
    ];
    let step_sizes: Vec<f64> = step_counts.iter().map(|&n| 1.0 / n as f64).collect();
    let recursion = step_counts
        .iter()
        .map(|&n| {
            verify_theorem1(
                &template,
                &fields,
                &TrajectoryConfig::unit_interval(n, Integrator::Euler),
            )
            .map(|c| c.recursion_discrepancy)
        })
        .collect::<Result<_>>()?;
    let template_eval = template_eval_discrepancies(&template, &fields, &step_sizes)?;
    Ok(FlowSweep {
        step_sizes,
        recursion,
        template_eval,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub step_sizes: Vec<f64>,
    pub euler: Vec<f64>,
    pub rk4: Vec<f64>,
    pub euler_order: f64,
    pub rk4_order: f64,
}

/// Global error at t = 1 for `v' = A v` with a rotation in the xy-plane and
/// decay along z, whose exact flow is known.
pub fn integrator_convergence(step_counts: &[usize]) -> Result<Convergence> {
    let field = FieldSpec::Affine {
        a: [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -0.5],
        b: [0.0; 3],
    };
    let start = GeneralizedVertexSet::from_coords(vec![
        Vec3::new(1.0, 0.0, 1.0),
        Vec3::new(0.2, -0.7, 0.4),
    ]);
    let exact: Vec<Vec3> = start
        .coords
        .iter()
        .map(|p| {
            let (s, c) = 1f64.sin_cos();
            Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z * (-0.5f64).exp())
        })
        .collect();
    let error = |n: usize, integrator| -> Result<f64> {
        let end = integrate(
            &start,
            &field,
            &TrajectoryConfig::unit_interval(n, integrator),
        )?;
        Ok(end
            .coords
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    };
    let step_sizes: Vec<f64> = step_counts.iter().map(|&n| 1.0 / n as f64).collect();
    let euler = step_counts
        .iter()
        .map(|&n| error(n, Integrator::Euler))
        .collect::<Result<Vec<_>>>()?;
    let rk4 = step_counts
        .iter()
        .map(|&n| error(n, Integrator::Rk4))
        .collect::<Result<Vec<_>>>()?;
    Ok(Convergence {
        euler_order: fitted_order(&step_sizes, &euler),
        rk4_order: fitted_order(&step_sizes, &rk4),
        step_sizes,
        euler,
        rk4,
    })
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `[lo, hi, faces...]`; see [`Rendering`]. `map` is `"curvature"` or `"thickness"`.
#[wasm_bindgen(js_name = renderPhantom)]
pub fn render_phantom_js(
    level: u32,
    bump_amplitude: f64,
    seed: u32,
    map: &str,
    yaw: f64,
    pitch: f64,
) -> std::result::Result<Vec<f64>, JsError> {
    let map = match map {
        "curvature" => SurfaceMap::Curvature,
        "thickness" => SurfaceMap::Thickness,
        other => return Err(js_err(format!("unknown map {other}"))),
    };
    let r = render_phantom(level.min(5), bump_amplitude, seed as u64, map, yaw, pitch)
        .map_err(js_err)?;
    let mut out = vec![r.lo, r.hi];
    out.extend(r.faces);
    Ok(out)
}

/// JSON [`FlowSweep`] over 1, 2, 5, 10, 20, 50 and 100 steps.
#[wasm_bindgen(js_name = flowSweep)]
pub fn flow_sweep_js(amplitude: f64) -> std::result::Result<String, JsError> {
    let sweep = flow_sweep(amplitude, &[1, 2, 5, 10, 20, 50, 100]).map_err(js_err)?;
    serde_json::to_string(&sweep).map_err(js_err)
}

/// JSON [`Convergence`] over 4 to 128 steps.
#[wasm_bindgen(js_name = integratorConvergence)]
pub fn integrator_convergence_js() -> std::result::Result<String, JsError> {
    let c = integrator_convergence(&[4, 8, 16, 32, 64, 128]).map_err(js_err)?;
    serde_json::to_string(&c).map_err(js_err)
}
