//! Field evaluation in both regions, sensor transfer functions and binaural cues.
//!
//! Transfer functions are referenced to the free incident field at the
//! center `O1`, so the interaural phase retains the geometric path
//! difference between the two sensors.

use std::f64::consts::{LN_10, PI};

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SceneConfig;
use crate::par;
use crate::solver::{
    self, FactorCache, Geometry, IncidentField, Media, ModalSolution, SolverError,
};
use crate::specfun::{self, lm_count, lm_index, HarmonicTable, SpecFunError};

/// Relative slack when testing whether a point lies on a sphere surface.
const SURFACE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("point at distance {radius} from the center is inside the outer sphere (a1 = {a1})")]
    NotExterior { radius: f64, a1: f64 },
    #[error("point is outside the fluid region between the spheres: {0}")]
    NotInterior(String),
    #[error("degenerate cue: left transfer function vanishes")]
    DegenerateCue,
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("phase and frequency vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at {freq} Hz: {source}")]
    AtFrequency { freq: f64, source: SolverError },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// Two sensor directions on `S1`, `(theta, phi)` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPair {
    pub left: (f64, f64),
    pub right: (f64, f64),
}

impl SensorPair {
    /// Sensors on the x-axis, mirror images across the median plane `x = 0`.
    pub fn symmetric() -> Self {
        Self { left: (PI / 2.0, PI), right: (PI / 2.0, 0.0) }
    }

    /// Left sensor lifted and rotated slightly to break front-back ambiguity.
    pub fn asymmetric() -> Self {
        Self { left: (PI / 2.0 - 0.12, 175f64.to_radians()), right: (PI / 2.0, 0.0) }
    }

    pub fn positions(&self, a1: f64) -> [Vector3<f64>; 2] {
        [
            solver::unit_vector(self.left.0, self.left.1) * a1,
            solver::unit_vector(self.right.0, self.right.1) * a1,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Regular,
    Singular,
}

fn radial(basis: Basis, p: usize, x: f64) -> Result<(Vec<Complex64>, Vec<Complex64>), SpecFunError> {
    match basis {
        Basis::Regular => {
            let (j, dj) = specfun::bessel_j_with_derivative(p, x)?;
            Ok((j.into_iter().map(Complex64::from).collect(), dj.into_iter().map(Complex64::from).collect()))
        }
        Basis::Singular => specfun::hankel_with_derivative(p, x),
    }
}

/// `Σ c_l^s F_l(k r) Y_l^s(θ, φ)` over `l < p` at a point in the expansion's own frame.
pub fn series_value(
    basis: Basis,
    coeffs: &[Complex64],
    p: usize,
    k: f64,
    local: &Vector3<f64>,
) -> Result<Complex64, FieldError> {
    let (r, theta, phi) = solver::to_spherical(local);
    let (f, _) = radial(basis, p, k * r)?;
    let y = HarmonicTable::new(p, theta, phi);
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..p {
        let mut inner = Complex64::new(0.0, 0.0);
        for s in -(l as i64)..=(l as i64) {
            inner += coeffs[lm_index(l, s)] * y.value(l, s);
        }
        acc += f[l] * inner;
    }
    Ok(acc)
}

/// Value and Cartesian gradient of a series; the point must be off the local z-axis.
pub fn series_value_gradient(
    basis: Basis,
    coeffs: &[Complex64],
    p: usize,
    k: f64,
    local: &Vector3<f64>,
) -> Result<(Complex64, Vector3<Complex64>), FieldError> {
    let (r, theta, phi) = solver::to_spherical(local);
    let (f, df) = radial(basis, p, k * r)?;
    let y = HarmonicTable::new(p, theta, phi);
    let zero = Complex64::new(0.0, 0.0);
    let (mut v, mut dr, mut dth, mut dph) = (zero, zero, zero, zero);
    for l in 0..p {
        for s in -(l as i64)..=(l as i64) {
            let c = coeffs[lm_index(l, s)];
            v += c * f[l] * y.value(l, s);
            dr += c * k * df[l] * y.value(l, s);
            dth += c * f[l] * y.d_theta(l, s);
            dph += c * f[l] * y.d_phi(l, s);
        }
    }
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let e_r = Vector3::new(st * cp, st * sp, ct);
    let e_t = Vector3::new(ct * cp, ct * sp, -st);
    let e_p = Vector3::new(-sp, cp, 0.0);
    let gt = dth / r;
    let gp = dph / (r * st);
    let grad = Vector3::from_fn(|i, _| dr * e_r[i] + gt * e_t[i] + gp * e_p[i]);
    Ok((v, grad))
}

fn check_exterior(geometry: &Geometry, point: &Vector3<f64>) -> Result<(), FieldError> {
    let r = point.norm();
    if r < geometry.a1 * (1.0 - SURFACE_TOL) {
        return Err(FieldError::NotExterior { radius: r, a1: geometry.a1 });
    }
    Ok(())
}

fn check_interior(geometry: &Geometry, point: &Vector3<f64>) -> Result<(), FieldError> {
    let r1 = point.norm();
    let r3 = (point - geometry.center3()).norm();
    if r1 > geometry.a1 * (1.0 + SURFACE_TOL) {
        return Err(FieldError::NotInterior(format!("|r| = {r1} > a1 = {}", geometry.a1)));
    }
    if r1 < geometry.a2 * (1.0 - SURFACE_TOL) {
        return Err(FieldError::NotInterior(format!("|r| = {r1} < a2 = {}", geometry.a2)));
    }
    if r3 < geometry.a3 * (1.0 - SURFACE_TOL) {
        return Err(FieldError::NotInterior(format!("|r - O3| = {r3} < a3 = {}", geometry.a3)));
    }
    Ok(())
}

/// Total exterior field: incident plus the outward scattered series about `O1`.
pub fn evaluate_exterior(
    sol: &ModalSolution,
    incident: &IncidentField,
    geometry: &Geometry,
    point: &Vector3<f64>,
) -> Result<Complex64, FieldError> {
    check_exterior(geometry, point)?;
    let scat = series_value(Basis::Singular, sol.scattered_outer(), sol.p, sol.k_o, point)?;
    Ok(incident.evaluate(point) + scat)
}

/// Exterior value and gradient.
pub fn evaluate_exterior_gradient(
    sol: &ModalSolution,
    incident: &IncidentField,
    geometry: &Geometry,
    point: &Vector3<f64>,
) -> Result<(Complex64, Vector3<Complex64>), FieldError> {
    check_exterior(geometry, point)?;
    let (v, g) = series_value_gradient(Basis::Singular, sol.scattered_outer(), sol.p, sol.k_o, point)?;
    let (vi, gi) = incident.evaluate_with_gradient(point);
    Ok((v + vi, g + gi))
}

/// Field between the spheres: transmitted and core-scattered series about
/// `O1` plus the offset sphere's series about `O3`.
pub fn evaluate_interior(sol: &ModalSolution, geometry: &Geometry, point: &Vector3<f64>) -> Result<Complex64, FieldError> {
    check_interior(geometry, point)?;
    let local3 = point - geometry.center3();
    Ok(series_value(Basis::Regular, sol.transmitted(), sol.p, sol.k_i, point)?
        + series_value(Basis::Singular, sol.scattered_core(), sol.p, sol.k_i, point)?
        + series_value(Basis::Singular, sol.scattered_offset(), sol.p, sol.k_i, &local3)?)
}

/// Interior value and gradient.
pub fn evaluate_interior_gradient(
    sol: &ModalSolution,
    geometry: &Geometry,
    point: &Vector3<f64>,
) -> Result<(Complex64, Vector3<Complex64>), FieldError> {
    check_interior(geometry, point)?;
    let local3 = point - geometry.center3();
    let (va, ga) = series_value_gradient(Basis::Regular, sol.transmitted(), sol.p, sol.k_i, point)?;
    let (vc, gc) = series_value_gradient(Basis::Singular, sol.scattered_core(), sol.p, sol.k_i, point)?;
    let (vd, gd) = series_value_gradient(Basis::Singular, sol.scattered_offset(), sol.p, sol.k_i, &local3)?;
    Ok((va + vc + vd, ga + gc + gd))
}

/// Total exterior field at a sensor divided by the free incident field at `O1`.
pub fn hrtf(
    sol: &ModalSolution,
    incident: &IncidentField,
    geometry: &Geometry,
    sensor: &Vector3<f64>,
) -> Result<Complex64, FieldError> {
    let reference = incident.evaluate(&Vector3::zeros());
    Ok(evaluate_exterior(sol, incident, geometry, sensor)? / reference)
}

/// `20 log10(|H_R| / |H_L|)`.
pub fn ild(h_left: Complex64, h_right: Complex64) -> Result<f64, FieldError> {
    let l = h_left.norm();
    if l == 0.0 || !l.is_finite() {
        return Err(FieldError::DegenerateCue);
    }
    Ok(20.0 * (h_right.norm() / l).log10())
}

/// Unwrap a phase sequence so consecutive samples differ by at most π.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &ph) in phases.iter().enumerate() {
        if i > 0 {
            let d: f64 = ph + offset - out[i - 1];
            offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
        }
        out.push(ph + offset);
    }
    out
}

/// `(phase_R - phase_L) / (2π f)` for already-unwrapped phases.
pub fn itd(phase_left: &[f64], phase_right: &[f64], freqs: &[f64]) -> Result<Vec<f64>, FieldError> {
    if phase_left.len() != freqs.len() || phase_right.len() != freqs.len() {
        return Err(FieldError::LengthMismatch(phase_left.len().max(phase_right.len()), freqs.len()));
    }
    freqs
        .iter()
        .zip(phase_left.iter().zip(phase_right))
        .map(|(&f, (l, r))| {
            if f > 0.0 {
                Ok((r - l) / (2.0 * PI * f))
            } else {
                Err(FieldError::NonPositiveFrequency(f))
            }
        })
        .collect()
}

/// Per-frequency transfer pair and the cues derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CueSpectrum {
    pub freqs: Vec<f64>,
    pub h_left: Vec<Complex64>,
    pub h_right: Vec<Complex64>,
    /// dB.
    pub ild: Vec<f64>,
    /// Seconds.
    pub itd: Vec<f64>,
}

impl CueSpectrum {
    pub fn from_transfer(freqs: Vec<f64>, h_left: Vec<Complex64>, h_right: Vec<Complex64>) -> Result<Self, FieldError> {
        let ild = h_left.iter().zip(&h_right).map(|(l, r)| ild(*l, *r)).collect::<Result<Vec<_>, _>>()?;
        let pl = unwrap_phase(&h_left.iter().map(|h| h.arg()).collect::<Vec<_>>());
        let pr = unwrap_phase(&h_right.iter().map(|h| h.arg()).collect::<Vec<_>>());
        let itd = itd(&pl, &pr, &freqs)?;
        Ok(Self { freqs, h_left, h_right, ild, itd })
    }
}

/// Derivatives of the cues with respect to the source angles.
#[derive(Debug, Clone, PartialEq)]
pub struct CueJacobian {
    pub ild_theta: Vec<f64>,
    pub ild_phi: Vec<f64>,
    pub itd_theta: Vec<f64>,
    pub itd_phi: Vec<f64>,
}

/// Sensor responses per frequency, precomputed for arbitrary plane-wave
/// source directions.
///
/// For a source lying in direction `û` the incident wave propagates along
/// `-û`, and the transfer function at sensor `M` is
/// `e^{-i k û·M} + Σ w_l^s conj(Y_l^s(û))`.
#[derive(Debug, Clone)]
pub struct CueModel {
    freqs: Vec<f64>,
    k_o: Vec<f64>,
    p: Vec<usize>,
    p_max: usize,
    sensors: [Vector3<f64>; 2],
    weights: Vec<[Vec<Complex64>; 2]>,
    conditions: Vec<f64>,
}

impl CueModel {
    pub fn new(scene: &SceneConfig) -> Result<Self, FieldError> {
        Self::with_cache(scene, &FactorCache::new())
    }

    pub fn with_cache(scene: &SceneConfig, cache: &FactorCache) -> Result<Self, FieldError> {
        let freqs = scene.freqs.values();
        let media = scene.media;
        let geometry = scene.geometry;
        let sensors = scene.sensors.positions(geometry.a1);
        let sensor_angles = [scene.sensors.left, scene.sensors.right];
        let per_freq = par::map_range(freqs.len(), |i| {
            let f = freqs[i];
            build_weights(&media, &geometry, f, scene.truncation_override, cache, &sensor_angles)
                .map_err(|source| FieldError::AtFrequency { freq: f, source })
        });
        let mut k_o = Vec::new();
        let mut p = Vec::new();
        let mut weights = Vec::new();
        let mut conditions = Vec::new();
        for (i, r) in per_freq.into_iter().enumerate() {
            let (pf, w, cond) = r?;
            k_o.push(media.k_outside(freqs[i]));
            p.push(pf);
            weights.push(w);
            conditions.push(cond);
        }
        let p_max = p.iter().copied().max().unwrap_or(0);
        Ok(Self { freqs, k_o, p, p_max, sensors, weights, conditions })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn truncations(&self) -> &[usize] {
        &self.p
    }

    /// Largest block condition number per frequency.
    pub fn condition_numbers(&self) -> &[f64] {
        &self.conditions
    }

    fn transfer_at(&self, fi: usize, side: usize, u: &Vector3<f64>, y: &HarmonicTable) -> Complex64 {
        let w = &self.weights[fi][side];
        let mut h = Complex64::from_polar(1.0, -self.k_o[fi] * u.dot(&self.sensors[side]));
        for (idx, wi) in w.iter().enumerate() {
            h += wi * y.values()[idx].conj();
        }
        h
    }

    /// Transfer functions `(H_L, H_R)` for a source in direction `(theta, phi)`.
    pub fn transfer(&self, theta: f64, phi: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let y = HarmonicTable::new(self.p_max, theta, phi);
        let u = solver::unit_vector(theta, phi);
        let n = self.freqs.len();
        ((0..n).map(|i| self.transfer_at(i, 0, &u, &y)).collect(), (0..n).map(|i| self.transfer_at(i, 1, &u, &y)).collect())
    }

    pub fn cues(&self, theta: f64, phi: f64) -> Result<CueSpectrum, FieldError> {
        let (hl, hr) = self.transfer(theta, phi);
        CueSpectrum::from_transfer(self.freqs.clone(), hl, hr)
    }

    /// Cues and their analytic derivatives in `theta` and `phi`.
    pub fn cues_with_jacobian(&self, theta: f64, phi: f64) -> Result<(CueSpectrum, CueJacobian), FieldError> {
        let y = HarmonicTable::new(self.p_max, theta, phi);
        let u = solver::unit_vector(theta, phi);
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let du_t = Vector3::new(ct * cp, ct * sp, -st);
        let du_p = Vector3::new(-st * sp, st * cp, 0.0);
        let n = self.freqs.len();
        let mut h = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut ratio_t = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut ratio_p = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for fi in 0..n {
            let k = self.k_o[fi];
            for side in 0..2 {
                let m = &self.sensors[side];
                let free = Complex64::from_polar(1.0, -k * u.dot(m));
                let mut v = free;
                let mut dt = free * Complex64::new(0.0, -k * du_t.dot(m));
                let mut dp = free * Complex64::new(0.0, -k * du_p.dot(m));
                let pf = self.p[fi];
                let w = &self.weights[fi][side];
                for l in 0..pf {
                    for s in -(l as i64)..=(l as i64) {
                        let idx = lm_index(l, s);
                        v += w[idx] * y.value(l, s).conj();
                        dt += w[idx] * y.d_theta(l, s).conj();
                        dp += w[idx] * y.d_phi(l, s).conj();
                    }
                }
                h[side].push(v);
                ratio_t[side].push(dt / v);
                ratio_p[side].push(dp / v);
            }
        }
        let [hl, hr] = h;
        let spec = CueSpectrum::from_transfer(self.freqs.clone(), hl, hr)?;
        let db = 20.0 / LN_10;
        let jac = CueJacobian {
            ild_theta: (0..n).map(|i| db * (ratio_t[1][i].re - ratio_t[0][i].re)).collect(),
            ild_phi: (0..n).map(|i| db * (ratio_p[1][i].re - ratio_p[0][i].re)).collect(),
            itd_theta: (0..n).map(|i| (ratio_t[1][i].im - ratio_t[0][i].im) / (2.0 * PI * self.freqs[i])).collect(),
            itd_phi: (0..n).map(|i| (ratio_p[1][i].im - ratio_p[0][i].im) / (2.0 * PI * self.freqs[i])).collect(),
        };
        Ok((spec, jac))
    }
}

type FreqWeights = (usize, [Vec<Complex64>; 2], f64);

fn build_weights(
    media: &Media,
    geometry: &Geometry,
    f: f64,
    override_p: Option<usize>,
    cache: &FactorCache,
    sensor_angles: &[(f64, f64); 2],
) -> Result<FreqWeights, SolverError> {
    let p = solver::truncation_degree(media, geometry, f, override_p)?;
    let sys = cache.get_or_factor(media, geometry, f, p)?;
    let ys: Vec<HarmonicTable> = sensor_angles.iter().map(|&(t, ph)| HarmonicTable::new(p, t, ph)).collect();
    let zero = Complex64::new(0.0, 0.0);
    let mut w = [vec![zero; lm_count(p)], vec![zero; lm_count(p)]];
    for m0 in 0..p {
        let resp = sys.surface_response(m0);
        let n = p - m0;
        let orders: &[i64] = if m0 == 0 { &[0] } else { &[m0 as i64, -(m0 as i64)] };
        for &s in orders {
            for j in 0..n {
                let l_in = m0 + j;
                let plane = Complex64::new(0.0, -1.0).powi(l_in as i32) * (4.0 * PI);
                for (side, y) in ys.iter().enumerate() {
                    let g: Complex64 = (0..n).map(|i| y.value(m0 + i, s) * resp[(i, j)]).sum();
                    w[side][lm_index(l_in, s)] = g * plane;
                }
            }
        }
    }
    let cond = sys.condition_numbers().into_iter().fold(0.0, f64::max);
    let warnings = cond > solver::CONDITION_WARNING;
    if warnings {
        log::warn!("ill-conditioned block system at {f} Hz: condition number {cond:.3e}");
    }
    Ok((p, w, cond))
}

/// Cues for a plane-wave source in direction `(theta, phi)`.
pub fn cue_spectrum(scene: &SceneConfig, theta: f64, phi: f64) -> Result<CueSpectrum, FieldError> {
    CueModel::new(scene)?.cues(theta, phi)
}

/// Same cues computed by a full solve and field evaluation per frequency.
pub fn cue_spectrum_by_solve(scene: &SceneConfig, theta: f64, phi: f64) -> Result<CueSpectrum, FieldError> {
    let freqs = scene.freqs.values();
    let sensors = scene.sensors.positions(scene.geometry.a1);
    let mut hl = Vec::with_capacity(freqs.len());
    let mut hr = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let at = |source| FieldError::AtFrequency { freq: f, source };
        let p = solver::truncation_degree(&scene.media, &scene.geometry, f, scene.truncation_override).map_err(at)?;
        let k = scene.media.k_outside(f);
        let inc = solver::plane_wave_coefficients(PI - theta, phi + PI, k, p);
        let sol = solver::solve_scattering(&scene.media, &scene.geometry, f, &inc, p).map_err(at)?;
        hl.push(hrtf(&sol, &inc, &scene.geometry, &sensors[0])?);
        hr.push(hrtf(&sol, &inc, &scene.geometry, &sensors[1])?);
    }
    CueSpectrum::from_transfer(freqs, hl, hr)
}

/// Quasi-uniform points on the unit sphere, none on the poles.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// Relative boundary-condition residuals of a solved scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryResiduals {
    /// `RMS|d ψ_int - ψ_ext| / RMS|ψ_ext|` on `S1`.
    pub s1_pressure: f64,
    /// `RMS|∂ψ_int/∂n - ∂ψ_ext/∂n| / (k_o RMS|ψ_ext|)` on `S1`.
    pub s1_velocity: f64,
    /// `RMS|∂ψ/∂n| / (k_i RMS|ψ|)` on `S2`.
    pub s2_neumann: f64,
    /// Same on `S3`.
    pub s3_neumann: f64,
}

impl BoundaryResiduals {
    pub fn max(&self) -> f64 {
        self.s1_pressure.max(self.s1_velocity).max(self.s2_neumann).max(self.s3_neumann)
    }
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (sum / n.max(1) as f64).sqrt()
}

/// Sample every boundary condition at `n` points per surface.
pub fn boundary_residuals(
    sol: &ModalSolution,
    incident: &IncidentField,
    media: &Media,
    geometry: &Geometry,
    n: usize,
) -> Result<BoundaryResiduals, FieldError> {
    let dirs = fibonacci_sphere(n);
    let d = media.density_ratio();
    let mut pres = Vec::with_capacity(n);
    let mut vel = Vec::with_capacity(n);
    let mut ext = Vec::with_capacity(n);
    for u in &dirs {
        let x = u * geometry.a1;
        let (vi, gi) = evaluate_interior_gradient(sol, geometry, &x)?;
        let (vo, go) = evaluate_exterior_gradient(sol, incident, geometry, &x)?;
        let ni: Complex64 = (0..3).map(|c| gi[c] * u[c]).sum();
        let no: Complex64 = (0..3).map(|c| go[c] * u[c]).sum();
        pres.push((d * vi - vo).norm());
        vel.push((ni - no).norm());
        ext.push(vo.norm());
    }
    let ext_rms = rms(ext.into_iter());
    let neumann = |center: Vector3<f64>, radius: f64| -> Result<f64, FieldError> {
        let mut dn = Vec::with_capacity(n);
        let mut val = Vec::with_capacity(n);
        for u in &dirs {
            let x = center + u * radius;
            let (v, g) = evaluate_interior_gradient(sol, geometry, &x)?;
            dn.push((0..3).map(|c| g[c] * u[c]).sum::<Complex64>().norm());
            val.push(v.norm());
        }
        Ok(rms(dn.into_iter()) / (sol.k_i * rms(val.into_iter())))
    };
    Ok(BoundaryResiduals {
        s1_pressure: rms(pres.into_iter()) / ext_rms,
        s1_velocity: rms(vel.into_iter()) / (sol.k_o * ext_rms),
        s2_neumann: neumann(Vector3::zeros(), geometry.a2)?,
        s3_neumann: neumann(geometry.center3(), geometry.a3)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ild_examples() {
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(ild(one, one).unwrap(), 0.0);
        assert_relative_eq!(ild(one, one * 10.0).unwrap(), 20.0, epsilon = 1e-12);
        assert!(matches!(ild(Complex64::new(0.0, 0.0), one), Err(FieldError::DegenerateCue)));
    }

    #[test]
    fn itd_examples() {
        let freqs: Vec<f64> = (1..=10).map(|i| 100.0 * i as f64).collect();
        let zero = vec![0.0; 10];
        assert!(itd(&zero, &zero, &freqs).unwrap().iter().all(|&t| t == 0.0));
        let tau = 50e-6;
        let right: Vec<f64> = freqs.iter().map(|f| 2.0 * PI * f * tau).collect();
        for t in itd(&zero, &right, &freqs).unwrap() {
            assert_relative_eq!(t, tau, epsilon = 1e-15);
        }
        assert!(itd(&[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn unwrap_removes_jumps() {
        let truth: Vec<f64> = (0..50).map(|i| 0.4 * i as f64).collect();
        let wrapped: Vec<f64> = truth.iter().map(|x| Complex64::from_polar(1.0, *x).arg()).collect();
        let un = unwrap_phase(&wrapped);
        for (a, b) in un.iter().zip(&truth) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn regular_series_reproduces_plane_wave() {
        let k = 3.0;
        let p = 20;
        let inc = solver::plane_wave_coefficients(PI / 2.0, 0.0, k, p);
        for x in fibonacci_sphere(20) {
            let r = x * (1.9 / k);
            let v = series_value(Basis::Regular, inc.coefficients(), p, k, &r).unwrap();
            assert!((v - inc.evaluate(&r)).norm() < 1e-6);
        }
    }

    #[test]
    fn series_gradient_matches_differences() {
        let k = 2.0;
        let p = 10;
        let inc = solver::plane_wave_coefficients(0.7, 0.3, k, p);
        let x = Vector3::new(0.3, -0.2, 0.25);
        for basis in [Basis::Regular, Basis::Singular] {
            let (_, g) = series_value_gradient(basis, inc.coefficients(), p, k, &x).unwrap();
            for c in 0..3 {
                let mut e = Vector3::zeros();
                e[c] = 1e-6;
                let fd = (series_value(basis, inc.coefficients(), p, k, &(x + e)).unwrap()
                    - series_value(basis, inc.coefficients(), p, k, &(x - e)).unwrap())
                    / 2e-6;
                assert!((fd - g[c]).norm() < 1e-6 * (1.0 + fd.norm()), "{basis:?} {c}");
            }
        }
    }

    #[test]
    fn exterior_rejects_inside_points() {
        let g = Geometry::default_scene();
        let m = Media::water_tissue();
        let inc = solver::plane_wave_coefficients(1.0, 0.0, m.k_outside(500.0), 8);
        let sol = solver::solve_scattering(&m, &g, 500.0, &inc, 8).unwrap();
        assert!(evaluate_exterior(&sol, &inc, &g, &Vector3::new(0.0, 0.0, 0.1)).is_err());
        assert!(evaluate_interior(&sol, &g, &Vector3::new(0.0, 0.0, 0.3)).is_err());
        assert!(evaluate_interior(&sol, &g, &Vector3::new(0.0, 0.0, 0.12)).is_err());
    }

    #[test]
    fn fibonacci_points_are_unit_and_avoid_poles() {
        for x in fibonacci_sphere(200) {
            assert_relative_eq!(x.norm(), 1.0, epsilon = 1e-12);
            assert!(x.z.abs() < 1.0);
        }
    }
}
