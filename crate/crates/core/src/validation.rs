//! Self-checks run by the `validate` command and the acceptance report.

use std::f64::consts::PI;

use nalgebra::{Vector3, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::SceneConfig;
use crate::field::{self, series_value, Basis, CueModel, FieldError};
use crate::localize::{self, LocalizeError, ObservedCues};
use crate::solver::{self, SolverError};
use crate::specfun::{self, lm_count, lm_index, HarmonicTable};
use crate::track::{self, TrackError};
use crate::translation;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Track(#[from] TrackError),
}

/// Worst observed error of one check against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: impl Into<String>, worst: f64, tolerance: f64) -> Self {
        Self { name: name.into(), worst, tolerance, passed: worst < tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Wronskian, orthonormality, conjugation and a closed-form Legendre value.
pub fn specfun_suite() -> SuiteReport {
    let mut wr: f64 = 0.0;
    for l in 0..=40 {
        for i in 0..60 {
            let x = 0.05 * 1000f64.powf(i as f64 / 59.0);
            let j = specfun::spherical_bessel_j(l, x).expect("valid degree");
            let (y, dy) = specfun::spherical_bessel_y(l, x).expect("valid degree");
            let w = j.value.re * dy - j.derivative.re * y;
            wr = wr.max((w * x * x - 1.0).abs());
        }
    }

    let lmax = 10;
    let (nodes, weights) = specfun::gauss_legendre(lmax + 2);
    let nphi = 2 * lmax + 4;
    let tables: Vec<(f64, HarmonicTable)> = nodes
        .iter()
        .zip(&weights)
        .flat_map(|(x, w)| {
            (0..nphi).map(move |j| {
                let phi = 2.0 * PI * j as f64 / nphi as f64;
                (w * 2.0 * PI / nphi as f64, HarmonicTable::new(lmax + 1, x.acos(), phi))
            })
        })
        .collect();
    let n = lm_count(lmax + 1);
    let mut orth: f64 = 0.0;
    for a in 0..n {
        for b in a..n {
            let g: Complex64 = tables.iter().map(|(w, t)| t.values()[a] * t.values()[b].conj() * *w).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            orth = orth.max((g - want).norm());
        }
    }

    let mut conj: f64 = 0.0;
    for &(theta, phi) in &[(0.3, 1.1), (1.7, -2.0), (2.9, 4.0)] {
        let t = HarmonicTable::new(9, theta, phi);
        for l in 0..9 {
            for s in -(l as i64)..=(l as i64) {
                conj = conj.max((t.value(l, s).conj() - t.value(l, -s)).norm());
            }
        }
    }

    let x: f64 = 0.3;
    let closed = 7.5 * (7.0 * x * x - 1.0) * (1.0 - x * x);
    let p42 = specfun::legendre_p(4, 2, x).expect("valid degree");

    SuiteReport {
        suite: "special functions",
        checks: vec![
            Check::below("wronskian l<=40, x in [0.05, 50]", wr, 1e-9),
            Check::below("harmonic orthonormality l<=10", orth, 1e-8),
            Check::below("conj(Y_l^s) = Y_l^-s", conj, 1e-14),
            Check::below("P_4^2(0.3) closed form", ((p42 - closed) / closed).abs(), 1e-12),
        ],
    }
}

/// `h_l(k|r|) Y_l^s(r̂)` or `j_l(k|r|) Y_l^s(r̂)` evaluated directly.
pub fn basis_function(basis: Basis, l: usize, s: i64, k: f64, point: &Vector3<f64>) -> Result<Complex64, FieldError> {
    let (r, theta, phi) = solver::to_spherical(point);
    let y = HarmonicTable::new(l + 1, theta, phi).value(l, s);
    let radial = match basis {
        Basis::Regular => Complex64::from(specfun::spherical_bessel_j(l, k * r)?.value),
        Basis::Singular => specfun::spherical_hankel_h1(l, k * r)?.value,
    };
    Ok(radial * y)
}

/// Largest error, relative to the largest direct value, of a coaxially
/// translated basis function against direct evaluation at `points`.
pub fn addition_theorem_error(
    basis: Basis,
    degree: usize,
    s: i64,
    k: f64,
    t_z: f64,
    p: usize,
    points: &[Vector3<f64>],
) -> Result<f64, ValidationError> {
    let m = s.unsigned_abs() as usize;
    let mat = match basis {
        Basis::Regular => translation::coaxial_rr(s, k, t_z, p),
        Basis::Singular => translation::coaxial_sr(s, k, t_z, p),
    }
    .map_err(SolverError::from)?;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); lm_count(p)];
    for l in m..p {
        coeffs[lm_index(l, s)] = mat.entry(l, degree);
    }
    let shift = Vector3::new(0.0, 0.0, t_z);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for x in points {
        let direct = basis_function(basis, degree, s, k, &(x + shift))?;
        let series = series_value(Basis::Regular, &coeffs, p, k, x)?;
        worst = worst.max((direct - series).norm());
        scale = scale.max(direct.norm());
    }
    Ok(worst / scale)
}

fn ball_points(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() <= 1.0 && v.norm() > 1e-3 {
                break v * radius;
            }
        })
        .collect()
}

/// R|R and S|R against direct evaluation at 50 points for 10 random cases.
pub fn addition_theorem_suite(seed: u64) -> Result<SuiteReport, ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rr: f64 = 0.0;
    let mut sr: f64 = 0.0;
    for _ in 0..10 {
        let k: f64 = rng.random_range(1.0..30.0);
        let t: f64 = rng.random_range(0.1..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let s: i64 = rng.random_range(-3..=3);
        let degree = s.unsigned_abs() as usize + rng.random_range(0..3);
        let p_rr = ((3.0 * k * t.abs()).ceil() as usize + 6).max(degree + 1);
        let pts = ball_points(&mut rng, 50, 0.6 * t.abs());
        rr = rr.max(addition_theorem_error(Basis::Regular, degree, s, k, t, p_rr, &pts)?);
        let pts = ball_points(&mut rng, 50, 0.4 * t.abs());
        sr = sr.max(addition_theorem_error(Basis::Singular, degree, s, k, t, p_rr.max(30), &pts)?);
    }
    Ok(SuiteReport {
        suite: "addition theorem",
        checks: vec![Check::below("R|R, 10 cases x 50 points", rr, 1e-5), Check::below("S|R, 10 cases x 50 points", sr, 1e-5)],
    })
}

/// Boundary residuals at the truncation rule and their decrease at `p + 4`.
pub fn boundary_suite(scene: &SceneConfig, freqs: &[f64]) -> Result<SuiteReport, ValidationError> {
    let mut checks = Vec::new();
    for &f in freqs {
        let p = solver::truncation_degree(&scene.media, &scene.geometry, f, scene.truncation_override)?;
        let residual = |p: usize| -> Result<f64, ValidationError> {
            let inc = solver::plane_wave_coefficients(1.1, 0.7, scene.media.k_outside(f), p);
            let sol = solver::solve_scattering(&scene.media, &scene.geometry, f, &inc, p)?;
            Ok(field::boundary_residuals(&sol, &inc, &scene.media, &scene.geometry, 200)?.max())
        };
        let base = residual(p)?;
        let refined = residual(p + 4)?;
        checks.push(Check::below(format!("residual at {f} Hz, p = {p}"), base, 1e-3));
        checks.push(Check {
            name: format!("residual decreases at {f} Hz, p = {}", p + 4),
            worst: refined,
            tolerance: base,
            passed: refined < base,
        });
    }
    Ok(SuiteReport { suite: "boundary residuals", checks })
}

/// Relative error of the analytic loss gradient and measurement Jacobian
/// against central differences at random states.
pub fn gradient_suite(model: &CueModel, truth: (f64, f64), states: usize, seed: u64) -> Result<SuiteReport, ValidationError> {
    let obs = ObservedCues::from_spectrum(&model.cues(truth.0, truth.1)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut loss_err: f64 = 0.0;
    let mut jac_err: f64 = 0.0;
    for _ in 0..states {
        let t = rng.random_range(0.2..PI - 0.2);
        let p = rng.random_range(0.0..2.0 * PI);
        let g = localize::loss_gradient(t, p, &obs, model)?;
        let l = |a: f64, b: f64| localize::normalized_loss(a, b, &obs, model);
        let fd = [(l(t + h, p)? - l(t - h, p)?) / (2.0 * h), (l(t, p + h)? - l(t, p - h)?) / (2.0 * h)];
        let norm = fd[0].hypot(fd[1]);
        if norm > 1e-8 {
            loss_err = loss_err.max((g[0] - fd[0]).hypot(g[1] - fd[1]) / norm);
        }

        let x = Vector4::new(t, p, 0.0, 0.0);
        let (z, jac) = track::measurement_jacobian(&x, model)?;
        let k = z.len() / 2;
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fd = (track::measurement(&xp, model)? - track::measurement(&xm, model)?) / (2.0 * h);
            for lo in [0, k] {
                let a = jac.column(c).rows(lo, k).into_owned();
                let b = fd.rows(lo, k).into_owned();
                if b.norm() > 0.0 {
                    jac_err = jac_err.max((a - &b).norm() / b.norm());
                }
            }
        }
    }
    Ok(SuiteReport {
        suite: "gradients",
        checks: vec![
            Check::below(format!("loss gradient vs differences, {states} states"), loss_err, 1e-4),
            Check::below(format!("measurement Jacobian vs differences, {states} states"), jac_err, 1e-4),
        ],
    })
}

/// Everything `validate` runs for a scene.
pub fn run_all(scene: &SceneConfig, seed: u64) -> Result<Vec<SuiteReport>, ValidationError> {
    let model = CueModel::new(scene)?;
    Ok(vec![
        specfun_suite(),
        addition_theorem_suite(seed)?,
        boundary_suite(scene, &[500.0, 1000.0, 2000.0])?,
        gradient_suite(&model, (2.13, 1.10), 50, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specfun_suite_passes() {
        let r = specfun_suite();
        assert!(r.passed(), "{r:#?}");
    }

    #[test]
    fn check_threshold_is_strict() {
        assert!(!Check::below("x", 1.0, 1.0).passed);
        assert!(Check::below("x", 0.5, 1.0).passed);
    }
}
