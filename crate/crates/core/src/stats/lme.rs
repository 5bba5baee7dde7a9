//! Linear mixed-effects model with a random intercept and slope per subject:
//!
//! `y_ij = β0 + β1·B_i + β2·W_ij + β3·D_i + b0_i + b1_i·W_ij + ε_ij`,
//! `b_i ~ N(0, Ψ)`, `ε_ij ~ N(0, σ²)`.
//!
//! Fitting works on a standardized copy of the response. `Ψ = σ²·L·Lᵀ` with
//! `L` lower triangular and log-parametrized diagonal; `β` and `σ²` are
//! profiled out, leaving three parameters. A few EM iterations provide the
//! starting point for BFGS.

use std::cmp::Ordering;

use nalgebra::{Matrix2, Matrix3, Matrix4, Matrix4x2, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::dataset::{group_by_subject, LmeDataset, VisitMeta};
use crate::error::{Error, Result};

const P: usize = 4;
const EM_ITERATIONS: usize = 25;
/// Diagonal entries of `L` below this are tested against an exact zero.
const PIN_THRESHOLD: f64 = 1e-3;
const LOG_DIAG_RANGE: (f64, f64) = (-40.0, 20.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Reml,
    Ml,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmeSettings {
    pub criterion: Criterion,
    pub max_iterations: usize,
    /// Relative change of the objective that ends the optimization.
    pub tolerance: f64,
}

impl Default for LmeSettings {
    fn default() -> Self {
        Self {
            criterion: Criterion::Reml,
            max_iterations: 200,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmeFit {
    /// `(β0, β1, β2, β3)`: intercept, baseline age, time, diagnosis.
    pub beta: [f64; 4],
    pub std_errors: [f64; 4],
    /// Random-effects covariance (intercept, slope).
    pub psi: [[f64; 2]; 2],
    pub sigma2: f64,
    /// Wald statistic `β3 / se(β3)`.
    pub z: f64,
    /// Two-sided normal p-value of `z`.
    pub p_value: f64,
    pub converged: bool,
    /// Quasi-Newton iterations.
    pub iterations: usize,
    /// Variance component fixed at zero: `[intercept, slope]`.
    pub boundary: [bool; 2],
    pub criterion: Criterion,
    /// `-2 log L` of the chosen criterion without the `2π` constant; `-inf`
    /// for a constant response.
    pub objective: f64,
    pub inference: &'static str,
}

#[derive(Debug, Clone)]
struct SubjectDesign {
    rows: Vec<usize>,
    x: Vec<Vector4<f64>>,
    z: Vec<Vector2<f64>>,
    xtx: Matrix4<f64>,
    xtz: Matrix4x2<f64>,
    ztz: Matrix2<f64>,
}

/// Sufficient statistics of one subject for one response.
#[derive(Debug, Clone)]
struct SubjectStats {
    xtx: Matrix4<f64>,
    xtz: Matrix4x2<f64>,
    ztz: Matrix2<f64>,
    xty: Vector4<f64>,
    zty: Vector2<f64>,
    yty: f64,
}

impl SubjectStats {
    fn key(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(31);
        k.extend_from_slice(self.xtx.as_slice());
        k.extend_from_slice(self.xtz.as_slice());
        k.extend_from_slice(self.ztz.as_slice());
        k.extend_from_slice(self.xty.as_slice());
        k.extend_from_slice(self.zty.as_slice());
        k.push(self.yty);
        k
    }
}

fn cmp_keys(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Fixed design of a study: covariates for every scan, grouped by subject.
/// Fitting many responses (one per vertex) reuses it.
#[derive(Debug, Clone)]
pub struct LmeDesign {
    subjects: Vec<SubjectDesign>,
    n_obs: usize,
}

impl LmeDesign {
    pub fn new(meta: &[VisitMeta]) -> Result<Self> {
        let groups = group_by_subject(meta)?;
        let subjects: Vec<SubjectDesign> = groups
            .into_values()
            .map(|rows| {
                let x: Vec<Vector4<f64>> = rows
                    .iter()
                    .map(|&r| {
                        let m = &meta[r];
                        Vector4::new(1.0, m.age_baseline, m.time_years, f64::from(m.diagnosis))
                    })
                    .collect();
                let z: Vec<Vector2<f64>> = rows
                    .iter()
                    .map(|&r| Vector2::new(1.0, meta[r].time_years))
                    .collect();
                let mut xtx = Matrix4::zeros();
                let mut xtz = Matrix4x2::zeros();
                let mut ztz = Matrix2::zeros();
                for (xi, zi) in x.iter().zip(&z) {
                    xtx += xi * xi.transpose();
                    xtz += xi * zi.transpose();
                    ztz += zi * zi.transpose();
                }
                SubjectDesign {
                    rows,
                    x,
                    z,
                    xtx,
                    xtz,
                    ztz,
                }
            })
            .collect();
        let design = Self {
            subjects,
            n_obs: meta.len(),
        };
        design.check_rank(meta)?;
        Ok(design)
    }

    pub fn observation_count(&self) -> usize {
        self.n_obs
    }

    pub fn subject_count(&self) -> usize {
        self.subjects.len()
    }

    fn check_rank(&self, meta: &[VisitMeta]) -> Result<()> {
        if self.n_obs <= P {
            return Err(Error::RankDeficient(format!(
                "{} observations for {P} fixed effects",
                self.n_obs
            )));
        }
        let constant = |f: fn(&VisitMeta) -> f64| meta.iter().all(|m| f(m) == f(&meta[0]));
        if constant(|m| f64::from(m.diagnosis)) {
            return Err(Error::RankDeficient(
                "diagnosis is identical for every subject".into(),
            ));
        }
        if constant(|m| m.age_baseline) {
            return Err(Error::RankDeficient(
                "baseline age is identical for every subject".into(),
            ));
        }
        if constant(|m| m.time_years) {
            return Err(Error::RankDeficient("no follow-up time in the data".into()));
        }
        let xtx: Matrix4<f64> = self.subjects.iter().map(|s| s.xtx).sum();
        let scale = Vector4::from_fn(|i, _| 1.0 / xtx[(i, i)].sqrt());
        let corr = Matrix4::from_fn(|i, j| xtx[(i, j)] * scale[i] * scale[j]);
        let eig = corr.symmetric_eigenvalues();
        if eig.min() < 1e-12 * eig.max() {
            return Err(Error::RankDeficient(
                "baseline age, time and diagnosis are collinear with the intercept".into(),
            ));
        }
        Ok(())
    }

    /// Fits the model to `y`, one value per metadata row this design was built from.
    pub fn fit(&self, y: &[f64], settings: &LmeSettings) -> Result<LmeFit> {
        if y.len() != self.n_obs {
            return Err(Error::ShapeMismatch(format!(
                "{} responses for {} observations",
                y.len(),
                self.n_obs
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite response in row {i}"
            )));
        }
        if settings.max_iterations == 0 || settings.tolerance.is_nan() || settings.tolerance <= 0.0
        {
            return Err(Error::InvalidInput(
                "max_iterations and tolerance must be positive".into(),
            ));
        }

        let mut sorted = y.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == sorted[sorted.len() - 1] {
            return Ok(constant_fit(sorted[0], settings.criterion));
        }
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let mut dev: Vec<f64> = sorted.iter().map(|v| (v - mean).powi(2)).collect();
        dev.sort_by(f64::total_cmp);
        let sd = (dev.iter().sum::<f64>() / (n - 1.0)).sqrt();

        let mut stats: Vec<SubjectStats> = self
            .subjects
            .iter()
            .map(|s| {
                let mut xty = Vector4::zeros();
                let mut zty = Vector2::zeros();
                let mut yty = 0.0;
                for ((&r, xi), zi) in s.rows.iter().zip(&s.x).zip(&s.z) {
                    let v = (y[r] - mean) / sd;
                    xty += xi * v;
                    zty += zi * v;
                    yty += v * v;
                }
                SubjectStats {
                    xtx: s.xtx,
                    xtz: s.xtz,
                    ztz: s.ztz,
                    xty,
                    zty,
                    yty,
                }
            })
            .collect();
        // canonical summation order: independent of row order and subject ids
        let mut keyed: Vec<(Vec<f64>, SubjectStats)> =
            stats.drain(..).map(|s| (s.key(), s)).collect();
        keyed.sort_by(|a, b| cmp_keys(&a.0, &b.0));
        let stats: Vec<SubjectStats> = keyed.into_iter().map(|(_, s)| s).collect();

        let fit = fit_standardized(&stats, self.n_obs, settings)?;
        Ok(fit.rescale(mean, sd, settings.criterion))
    }
}

/// Fits a single response table.
pub fn lme_fit(data: &LmeDataset, settings: &LmeSettings) -> Result<LmeFit> {
    LmeDesign::new(&data.meta())?.fit(&data.values(), settings)
}

fn constant_fit(value: f64, criterion: Criterion) -> LmeFit {
    LmeFit {
        beta: [value, 0.0, 0.0, 0.0],
        std_errors: [0.0; 4],
        psi: [[0.0; 2]; 2],
        sigma2: 0.0,
        z: 0.0,
        p_value: 1.0,
        converged: true,
        iterations: 0,
        boundary: [true, true],
        criterion,
        objective: f64::NEG_INFINITY,
        inference: "wald-normal",
    }
}

struct Profile {
    objective: f64,
    beta: Vector4<f64>,
    /// `(Xᵀ H⁻¹ X)⁻¹`
    cov_unscaled: Matrix4<f64>,
    sigma2: f64,
}

/// Profiled `-2 log L` at relative covariance factor `l`.
fn profile(
    stats: &[SubjectStats],
    n_obs: usize,
    l: &Matrix2<f64>,
    criterion: Criterion,
) -> Option<Profile> {
    let mut a = Matrix4::zeros();
    let mut c = Vector4::zeros();
    let mut q = 0.0;
    let mut logdet_h = 0.0;
    let lt = l.transpose();
    for s in stats {
        let m = Matrix2::identity() + lt * s.ztz * l;
        let chol = m.cholesky()?;
        let d = chol.l_dirty();
        logdet_h += 2.0 * (d[(0, 0)].ln() + d[(1, 1)].ln());
        let xzl = s.xtz * l;
        let zly = lt * s.zty;
        a += s.xtx - xzl * chol.solve(&xzl.transpose());
        c += s.xty - xzl * chol.solve(&zly);
        q += s.yty - zly.dot(&chol.solve(&zly));
    }
    let a_chol = a.cholesky()?;
    let beta = a_chol.solve(&c);
    let r2 = q - beta.dot(&c);
    let dof = match criterion {
        Criterion::Reml => (n_obs - P) as f64,
        Criterion::Ml => n_obs as f64,
    };
    if r2.is_nan() || r2 <= 0.0 {
        return None;
    }
    let sigma2 = r2 / dof;
    let mut objective = logdet_h + dof * (1.0 + sigma2.ln());
    if criterion == Criterion::Reml {
        let ad = a_chol.l_dirty();
        objective += 2.0 * (0..P).map(|i| ad[(i, i)].ln()).sum::<f64>();
    }
    objective.is_finite().then(|| Profile {
        objective,
        beta,
        cov_unscaled: a_chol.inverse(),
        sigma2,
    })
}

fn l_from_theta(theta: &Vector3<f64>) -> Matrix2<f64> {
    let clamp = |x: f64| x.clamp(LOG_DIAG_RANGE.0, LOG_DIAG_RANGE.1).exp();
    Matrix2::new(clamp(theta[0]), 0.0, theta[1], clamp(theta[2]))
}

/// EM iterations on `(β, Ψ, σ²)`; returns the starting `θ`.
fn em_start(stats: &[SubjectStats], n_obs: usize) -> Vector3<f64> {
    let xtx: Matrix4<f64> = stats.iter().map(|s| s.xtx).sum();
    let xty: Vector4<f64> = stats.iter().map(|s| s.xty).sum();
    let Some(chol) = xtx.cholesky() else {
        return Vector3::zeros();
    };
    let mut beta = chol.solve(&xty);
    let rss: f64 = stats.iter().map(|s| s.yty).sum::<f64>() - beta.dot(&xty);
    let mut sigma2 = (rss / n_obs as f64).max(1e-6) / 2.0;
    // spread of follow-up times sets the slope scale
    let (sw, sww, n): (f64, f64, f64) = stats.iter().fold((0.0, 0.0, 0.0), |(a, b, c), s| {
        (a + s.ztz[(0, 1)], b + s.ztz[(1, 1)], c + s.ztz[(0, 0)])
    });
    let var_w = (sww / n - (sw / n).powi(2)).max(1e-6);
    let mut psi = Matrix2::new(sigma2, 0.0, 0.0, sigma2 / var_w);

    let m = stats.len() as f64;
    for _ in 0..EM_ITERATIONS {
        let mut psi_acc = Matrix2::zeros();
        let mut ss = 0.0;
        let mut rhs = Vector4::zeros();
        let mut posts = Vec::with_capacity(stats.len());
        for s in stats {
            let r_z = s.zty - s.xtz.transpose() * beta;
            let Some(inv) = (s.ztz * psi / sigma2 + Matrix2::identity()).try_inverse() else {
                return Vector3::zeros();
            };
            let var = psi * inv;
            let var = (var + var.transpose()) / 2.0;
            let b = var * r_z / sigma2;
            psi_acc += b * b.transpose() + var;
            posts.push((b, var));
            rhs += s.xty - s.xtz * b;
        }
        let new_beta = chol.solve(&rhs);
        for (s, (b, var)) in stats.iter().zip(&posts) {
            let resid = s.yty - 2.0 * new_beta.dot(&s.xty) - 2.0 * b.dot(&s.zty)
                + new_beta.dot(&(s.xtx * new_beta))
                + 2.0 * new_beta.dot(&(s.xtz * b))
                + b.dot(&(s.ztz * b));
            ss += resid + (s.ztz * var).trace();
        }
        beta = new_beta;
        psi = psi_acc / m;
        sigma2 = (ss / n_obs as f64).max(1e-12);
    }

    let rel = psi / sigma2 + Matrix2::identity() * 1e-10;
    match rel.cholesky() {
        Some(c) => {
            let l = c.l();
            Vector3::new(
                l[(0, 0)].max(1e-8).ln(),
                l[(1, 0)],
                l[(1, 1)].max(1e-8).ln(),
            )
        }
        None => Vector3::new(-3.0, 0.0, -3.0),
    }
}

struct Minimum {
    theta: Vector3<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn gradient(f: &dyn Fn(&Vector3<f64>) -> f64, x: &Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let h = 1e-5 * x[i].abs().max(1.0);
        let mut up = *x;
        let mut down = *x;
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

fn bfgs(f: &dyn Fn(&Vector3<f64>) -> f64, start: Vector3<f64>, settings: &LmeSettings) -> Minimum {
    let mut x = start;
    let mut fx = f(&x);
    let mut g = gradient(f, &x);
    let mut hinv = Matrix3::identity();
    for iter in 1..=settings.max_iterations {
        let mut dir = -(hinv * g);
        if dir.dot(&g) >= 0.0 {
            hinv = Matrix3::identity();
            dir = -g;
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = x + dir * step;
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // no descent possible along any direction we can take: stationary to precision
            return Minimum {
                theta: x,
                value: fx,
                iterations: iter,
                converged: g.amax() < 1e-4,
            };
        };
        let g_new = gradient(f, &x_new);
        let s = x_new - x;
        let yv = g_new - g;
        let sy = s.dot(&yv);
        if sy > 1e-14 {
            let rho = 1.0 / sy;
            let i = Matrix3::identity();
            hinv = (i - s * yv.transpose() * rho) * hinv * (i - yv * s.transpose() * rho)
                + s * s.transpose() * rho;
        }
        let change = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if change < settings.tolerance {
            return Minimum {
                theta: x,
                value: fx,
                iterations: iter,
                converged: true,
            };
        }
    }
    Minimum {
        theta: x,
        value: fx,
        iterations: settings.max_iterations,
        converged: false,
    }
}

struct StandardizedFit {
    profile: Profile,
    l: Matrix2<f64>,
    iterations: usize,
    converged: bool,
    boundary: [bool; 2],
    dof: f64,
}

fn fit_standardized(
    stats: &[SubjectStats],
    n_obs: usize,
    settings: &LmeSettings,
) -> Result<StandardizedFit> {
    let criterion = settings.criterion;
    let ols = profile(stats, n_obs, &Matrix2::zeros(), criterion).ok_or_else(|| {
        Error::InvalidDataset("response is an exact linear function of the covariates".into())
    })?;

    let objective = |theta: &Vector3<f64>| {
        profile(stats, n_obs, &l_from_theta(theta), criterion)
            .map_or(f64::INFINITY, |p| p.objective)
    };
    let start = em_start(stats, n_obs);
    let min = bfgs(&objective, start, settings);

    let mut l = l_from_theta(&min.theta);
    let mut boundary = [false, false];
    // variance components heading to zero are tested at exactly zero
    let small = [l[(0, 0)] < PIN_THRESHOLD, l[(1, 1)] < PIN_THRESHOLD];
    let mut candidates: Vec<([bool; 2], Matrix2<f64>, f64)> = Vec::new();
    if small[0] && small[1] {
        candidates.push(([true, true], Matrix2::zeros(), ols.objective));
    }
    if small[0] {
        // without an intercept variance the slope variance is l21² + l22²
        let pinned = Matrix2::new(0.0, 0.0, 0.0, l[(1, 0)].hypot(l[(1, 1)]));
        if let Some(p) = profile(stats, n_obs, &pinned, criterion) {
            candidates.push(([true, false], pinned, p.objective));
        }
    }
    if small[1] {
        let mut pinned = l;
        pinned[(1, 1)] = 0.0;
        if let Some(p) = profile(stats, n_obs, &pinned, criterion) {
            candidates.push(([false, true], pinned, p.objective));
        }
    }
    let slack = 1e-9 * min.value.abs().max(1.0);
    candidates.retain(|c| c.2 <= min.value + slack);
    candidates.sort_by(|a, b| {
        let pins = |f: &[bool; 2]| f.iter().filter(|x| **x).count();
        pins(&b.0).cmp(&pins(&a.0)).then(a.2.total_cmp(&b.2))
    });
    if let Some((flags, pinned, _)) = candidates.into_iter().next() {
        l = pinned;
        boundary = flags;
    }

    let profile = profile(stats, n_obs, &l, criterion)
        .ok_or_else(|| Error::InvalidDataset("likelihood is not finite at the optimum".into()))?;
    let dof = match criterion {
        Criterion::Reml => (n_obs - P) as f64,
        Criterion::Ml => n_obs as f64,
    };
    Ok(StandardizedFit {
        profile,
        l,
        dof,
        iterations: min.iterations,
        converged: min.converged,
        boundary,
    })
}

impl StandardizedFit {
    fn rescale(self, mean: f64, sd: f64, criterion: Criterion) -> LmeFit {
        let p = &self.profile;
        let mut beta = [0.0; 4];
        let mut std_errors = [0.0; 4];
        for i in 0..P {
            beta[i] = p.beta[i] * sd;
            std_errors[i] = (p.sigma2 * p.cov_unscaled[(i, i)]).sqrt() * sd;
        }
        beta[0] += mean;
        let z = p.beta[3] / (p.sigma2 * p.cov_unscaled[(3, 3)]).sqrt();
        let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0);
        let psi_m = self.l * self.l.transpose() * (p.sigma2 * sd * sd);
        LmeFit {
            beta,
            std_errors,
            psi: [
                [psi_m[(0, 0)], psi_m[(0, 1)]],
                [psi_m[(1, 0)], psi_m[(1, 1)]],
            ],
            sigma2: p.sigma2 * sd * sd,
            z,
            p_value,
            converged: self.converged,
            iterations: self.iterations,
            boundary: self.boundary,
            criterion,
            objective: p.objective + 2.0 * self.dof * sd.ln(),
            inference: "wald-normal",
        }
    }
}
