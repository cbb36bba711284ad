//! Per-order block systems coupling the four multipole coefficient sets.
//!
//! Unknowns, for each order `s` and degrees `|s|..p`:
//!
//! * `A` – regular field transmitted inside `S1`, about `O1`
//! * `B` – field scattered outward by `S1`, about `O1`
//! * `C` – field scattered by the concentric rigid sphere `S2`, about `O1`
//! * `D` – field scattered by the offset rigid sphere `S3`, about `O3`
//!
//! Row blocks enforce, in order, pressure and normal-velocity continuity on
//! `S1` and the Neumann condition on `S2` and `S3`. The `S3` field enters the
//! `S1` rows through the singular-to-singular re-expansion (its regular
//! re-expansion does not converge at radius `a1 > |offset3_z|`) and the `S2`
//! rows through the singular-to-regular one.
//!
//! The assembled matrix works on surface-normalized unknowns
//! (`B·h_l(k_o a1)`, `C·h_l(k_i a2)`, `D·h_l(k_i a3)`) and rows are divided by
//! the singular radial factor of their own surface, so the rigid rows carry
//! the `Λ = j'/h'` ratios against an identity block.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{self, lm_count, lm_index, HarmonicTable, SpecFunError};
use crate::translation::{self, TranslationError, TranslationKind};

/// Condition number above which a solve is reported as ill-conditioned.
pub const CONDITION_WARNING: f64 = 1e12;

/// Smallest truncation degree the automatic rule returns.
pub const MIN_TRUNCATION: usize = 8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid scene: {}", join_violations(.0))]
    InvalidGeometry(Vec<Violation>),
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("truncation override must be at least 4, got {0}")]
    TruncationOverride(usize),
    #[error("incident field truncated at {have}, system needs {need}")]
    TruncationMismatch { have: usize, need: usize },
    #[error("source at radius {radius} lies inside or on the outer sphere (a1 = {a1})")]
    SourceInsideScatterer { radius: f64, a1: f64 },
    #[error("degenerate system at order {order}: {reason}")]
    Degenerate { order: usize, reason: String },
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Media {
    /// Exterior density, kg/m³.
    pub rho_o: f64,
    /// Exterior sound speed, m/s.
    pub c_o: f64,
    /// Interior density, kg/m³.
    pub rho_i: f64,
    /// Interior sound speed, m/s.
    pub c_i: f64,
}

impl Media {
    /// Water outside, soft tissue inside.
    pub fn water_tissue() -> Self {
        Self { rho_o: 1000.0, c_o: 1500.0, rho_i: 920.0, c_i: 1420.0 }
    }

    pub fn matched(rho: f64, c: f64) -> Self {
        Self { rho_o: rho, c_o: c, rho_i: rho, c_i: c }
    }

    pub fn k_outside(&self, f: f64) -> f64 {
        2.0 * PI * f / self.c_o
    }

    pub fn k_inside(&self, f: f64) -> f64 {
        2.0 * PI * f / self.c_i
    }

    /// Ratio `ρ_i/ρ_o` scaling the pressure continuity condition.
    pub fn density_ratio(&self) -> f64 {
        self.rho_i / self.rho_o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Center of `S3` relative to the common center of `S1`/`S2`, along z.
    pub offset3_z: f64,
}

impl Geometry {
    pub fn default_scene() -> Self {
        Self { a1: 0.2, a2: 0.05, a3: 0.05, offset3_z: 0.12 }
    }

    pub fn center3(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.offset3_z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    OuterLargerThanInner,
    PositiveRadius,
    NoOverlap,
    Containment,
    PositiveMedium,
}

/// One violated scene inequality, with both sides evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (lhs = {}, rhs = {})", self.description, self.lhs, self.rhs)
    }
}

/// Check every geometric and material inequality; empty when the scene is valid.
pub fn validate_geometry(geometry: &Geometry, media: &Media) -> Vec<Violation> {
    let mut out = Vec::new();
    let g = geometry;
    let mut push = |constraint, description: String, lhs, rhs| {
        out.push(Violation { constraint, description, lhs, rhs })
    };
    if !(g.a1 > g.a2) {
        push(Constraint::OuterLargerThanInner, format!("a1 > a2 violated: {} <= {}", g.a1, g.a2), g.a1, g.a2);
    }
    for (name, r) in [("a2", g.a2), ("a3", g.a3)] {
        if !(r > 0.0) {
            push(Constraint::PositiveRadius, format!("{name} > 0 violated: {r}"), r, 0.0);
        }
    }
    let d = g.offset3_z.abs();
    if !(d >= g.a2 + g.a3) {
        push(
            Constraint::NoOverlap,
            format!("no overlap: |offset3_z| = {} < a2 + a3 = {}", d, g.a2 + g.a3),
            d,
            g.a2 + g.a3,
        );
    }
    if !(d + g.a3 <= g.a1) {
        push(
            Constraint::Containment,
            format!("containment: |offset3_z| + a3 = {} > a1 = {}", d + g.a3, g.a1),
            d + g.a3,
            g.a1,
        );
    }
    for (name, v) in [("rho_o", media.rho_o), ("c_o", media.c_o), ("rho_i", media.rho_i), ("c_i", media.c_i)] {
        if !(v > 0.0) {
            push(Constraint::PositiveMedium, format!("{name} > 0 violated: {v}"), v, 0.0);
        }
    }
    out
}

/// Largest per-degree convergence ratio of the multipole couplings.
///
/// Low-frequency convergence is governed by geometry rather than by `k a`:
/// the offset sphere seen from `O1` at radius `a1`, the mutual images of the
/// two rigid spheres, and the transmitted field's singularities (images of
/// `S3` in `S1`) seen from `O3`.
pub fn convergence_ratio(geometry: &Geometry) -> f64 {
    let g = geometry;
    let d = g.offset3_z.abs();
    let outer = d / g.a1;
    let mutual = g.a2 * g.a3 / ((d - g.a2) * (d - g.a3));
    let image = g.a3 * d / (g.a1 * g.a1 - d * d);
    outer.max(mutual).max(image)
}

/// Degree at which geometric convergence reaches `GEOMETRIC_TARGET`.
pub fn geometric_floor(geometry: &Geometry) -> usize {
    let rho = convergence_ratio(geometry);
    if !(rho > 0.0) {
        return MIN_TRUNCATION;
    }
    if rho >= 1.0 {
        return MAX_GEOMETRIC_FLOOR;
    }
    let p = (GEOMETRIC_TARGET.ln() / rho.ln()).ceil() as usize;
    if p > MAX_GEOMETRIC_FLOOR {
        log::warn!("spheres nearly touch (ratio {rho:.3}); truncation capped at {MAX_GEOMETRIC_FLOOR}");
    }
    p.clamp(MIN_TRUNCATION, MAX_GEOMETRIC_FLOOR)
}

/// Tail size the geometric floor aims for.
const GEOMETRIC_TARGET: f64 = 1e-4;

/// Upper bound on the geometric floor.
pub const MAX_GEOMETRIC_FLOOR: usize = 60;

/// Truncation degree `p` (degrees `0..p` retained):
/// `max(⌈3 k_i a1⌉, 8, geometric floor)` unless overridden.
pub fn truncation_degree(
    media: &Media,
    geometry: &Geometry,
    f: f64,
    override_p: Option<usize>,
) -> Result<usize, SolverError> {
    if !(f > 0.0) {
        return Err(SolverError::NonPositiveFrequency(f));
    }
    if let Some(p) = override_p {
        if p < 4 {
            return Err(SolverError::TruncationOverride(p));
        }
        return Ok(p);
    }
    let kia = media.k_inside(f) * geometry.a1;
    Ok(((3.0 * kia).ceil() as usize).max(MIN_TRUNCATION).max(geometric_floor(geometry)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncidentKind {
    /// `e^{i k û·r}` with `û` pointing along `(theta, phi)`: the direction of propagation.
    PlaneWave { theta: f64, phi: f64 },
    /// `Q e^{ik|r - r_s|} / (4π|r - r_s|)`.
    Monopole { position: Vector3<f64>, strength: Complex64 },
}

/// Incident field and its regular-expansion coefficients about `O1`.
#[derive(Debug, Clone)]
pub struct IncidentField {
    pub kind: IncidentKind,
    pub k_o: f64,
    pub p: usize,
    /// Global factor applied to the closed form and to the coefficients.
    pub amplitude: Complex64,
    coeffs: Vec<Complex64>,
}

impl IncidentField {
    pub fn coefficient(&self, l: usize, s: i64) -> Complex64 {
        self.coeffs[lm_index(l, s)]
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Build from explicit coefficients (tests and superposition).
    pub fn from_coefficients(kind: IncidentKind, k_o: f64, p: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), lm_count(p));
        Self { kind, k_o, p, amplitude: Complex64::new(1.0, 0.0), coeffs }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= alpha);
        out.amplitude *= alpha;
        out
    }

    /// Closed-form incident field at `point` (coordinates about `O1`).
    pub fn evaluate(&self, point: &Vector3<f64>) -> Complex64 {
        self.evaluate_with_gradient(point).0
    }

    /// Closed-form value and Cartesian gradient.
    pub fn evaluate_with_gradient(&self, point: &Vector3<f64>) -> (Complex64, Vector3<Complex64>) {
        let i = Complex64::i();
        match self.kind {
            IncidentKind::PlaneWave { theta, phi } => {
                let u = unit_vector(theta, phi);
                let v = self.amplitude * Complex64::from_polar(1.0, self.k_o * u.dot(point));
                (v, u.map(|c| i * self.k_o * c * v))
            }
            IncidentKind::Monopole { position, strength } => {
                let rel = point - position;
                let d = rel.norm();
                let v = self.amplitude * strength * Complex64::from_polar(1.0, self.k_o * d) / (4.0 * PI * d);
                let radial = v * (i * self.k_o - 1.0 / d) / d;
                (v, rel.map(|c| radial * c))
            }
        }
    }

    /// Coefficients of order `s`, degrees `|s|..p`.
    pub fn order_vector(&self, s: i64, p: usize) -> Vec<Complex64> {
        let m = s.unsigned_abs() as usize;
        (m..p).map(|l| self.coeffs[lm_index(l, s)]).collect()
    }
}

pub fn unit_vector(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// Spherical angles `(r, θ, φ)` of a Cartesian point.
pub fn to_spherical(v: &Vector3<f64>) -> (f64, f64, f64) {
    let r = v.norm();
    if r == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let theta = (v.z / r).clamp(-1.0, 1.0).acos();
    let phi = v.y.atan2(v.x);
    (r, theta, phi)
}

/// `E_l^s = 4π i^l conj(Y_l^s(θ, φ))`, the expansion of `e^{i k û·r}`.
pub fn plane_wave_coefficients(theta: f64, phi: f64, k_o: f64, p: usize) -> IncidentField {
    let y = HarmonicTable::new(p, theta, phi);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); lm_count(p)];
    for l in 0..p {
        let il = Complex64::i().powi(l as i32) * (4.0 * PI);
        for s in -(l as i64)..=(l as i64) {
            coeffs[lm_index(l, s)] = il * y.value(l, s).conj();
        }
    }
    IncidentField { kind: IncidentKind::PlaneWave { theta, phi }, k_o, p, amplitude: Complex64::new(1.0, 0.0), coeffs }
}

/// `E_l^s = Q i k_o h_l(k_o|r_s|) Y_l^{-s}(θ_s, φ_s)`; the source must lie outside `S1`.
pub fn monopole_coefficients(
    position: Vector3<f64>,
    strength: Complex64,
    k_o: f64,
    p: usize,
    a1: f64,
) -> Result<IncidentField, SolverError> {
    let (r, theta, phi) = to_spherical(&position);
    if r <= a1 {
        return Err(SolverError::SourceInsideScatterer { radius: r, a1 });
    }
    let (h, _) = specfun::hankel_with_derivative(p, k_o * r)?;
    let y = HarmonicTable::new(p, theta, phi);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); lm_count(p)];
    for l in 0..p {
        for s in -(l as i64)..=(l as i64) {
            coeffs[lm_index(l, s)] = strength * Complex64::i() * k_o * h[l] * y.value(l, -s);
        }
    }
    Ok(IncidentField {
        kind: IncidentKind::Monopole { position, strength },
        k_o,
        p,
        amplitude: Complex64::new(1.0, 0.0),
        coeffs,
    })
}

/// Radial factors on the three surfaces for degrees `0..p`.
#[derive(Debug, Clone)]
struct SurfaceRadials {
    jo1: Vec<f64>,
    djo1: Vec<f64>,
    ho1: Vec<Complex64>,
    dho1: Vec<Complex64>,
    ji1: Vec<f64>,
    dji1: Vec<f64>,
    hi1: Vec<Complex64>,
    dhi1: Vec<Complex64>,
    dji2: Vec<f64>,
    hi2: Vec<Complex64>,
    dhi2: Vec<Complex64>,
    dji3: Vec<f64>,
    hi3: Vec<Complex64>,
    dhi3: Vec<Complex64>,
}

impl SurfaceRadials {
    fn new(k_o: f64, k_i: f64, g: &Geometry, p: usize) -> Result<Self, SolverError> {
        let (jo1, djo1) = specfun::bessel_j_with_derivative(p, k_o * g.a1)?;
        let (ho1, dho1) = specfun::hankel_with_derivative(p, k_o * g.a1)?;
        let (ji1, dji1) = specfun::bessel_j_with_derivative(p, k_i * g.a1)?;
        let (hi1, dhi1) = specfun::hankel_with_derivative(p, k_i * g.a1)?;
        let (_, dji2) = specfun::bessel_j_with_derivative(p, k_i * g.a2)?;
        let (hi2, dhi2) = specfun::hankel_with_derivative(p, k_i * g.a2)?;
        let (_, dji3) = specfun::bessel_j_with_derivative(p, k_i * g.a3)?;
        let (hi3, dhi3) = specfun::hankel_with_derivative(p, k_i * g.a3)?;
        Ok(Self { jo1, djo1, ho1, dho1, ji1, dji1, hi1, dhi1, dji2, hi2, dhi2, dji3, hi3, dhi3 })
    }

    /// Scale of the transmitted unknown `A_l`; never zero since `j_l` and `j_l'` share no root.
    fn a_scale(&self, l: usize) -> f64 {
        self.ji1[l].hypot(self.dji1[l])
    }
}

/// Per-order linear system in surface-normalized unknowns.
///
/// `unknown_scale[j]` converts a solved entry into the physical coefficient:
/// `coefficient = solution[j] * unknown_scale[j]`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub order: i64,
    /// Number of degrees per block, `p - |s|`.
    pub block: usize,
    pub matrix: DMatrix<Complex64>,
    pub rhs: DVector<Complex64>,
    pub unknown_scale: Vec<Complex64>,
}

/// Frequency-dependent data shared by every order of one scene.
struct Assembly {
    p: usize,
    k_o: f64,
    k_i: f64,
    d: f64,
    radials: SurfaceRadials,
    ss31: Vec<translation::TranslationMatrix>,
    sr31: Vec<translation::TranslationMatrix>,
    rr13: Vec<translation::TranslationMatrix>,
    sr13: Vec<translation::TranslationMatrix>,
}

impl Assembly {
    fn new(media: &Media, geometry: &Geometry, f: f64, p: usize) -> Result<Self, SolverError> {
        let violations = validate_geometry(geometry, media);
        if !violations.is_empty() {
            return Err(SolverError::InvalidGeometry(violations));
        }
        if !(f > 0.0) {
            return Err(SolverError::NonPositiveFrequency(f));
        }
        let k_o = media.k_outside(f);
        let k_i = media.k_inside(f);
        let t = geometry.offset3_z;
        let radials = SurfaceRadials::new(k_o, k_i, geometry, p)?;
        for l in 0..p {
            for (name, v) in [("h'(k a1)", radials.dho1[l]), ("h'(k a2)", radials.dhi2[l]), ("h'(k a3)", radials.dhi3[l])] {
                if v.norm() == 0.0 || !v.is_finite() {
                    return Err(SolverError::Degenerate { order: l, reason: format!("{name} is {v}") });
                }
            }
        }
        let set = |kind, tz| translation::coaxial_set(kind, k_i, tz, p, p - 1);
        Ok(Self {
            p,
            k_o,
            k_i,
            d: media.density_ratio(),
            radials,
            ss31: set(TranslationKind::RegularToRegular, -t)?,
            sr31: set(TranslationKind::SingularToRegular, -t)?,
            rr13: set(TranslationKind::RegularToRegular, t)?,
            sr13: set(TranslationKind::SingularToRegular, t)?,
        })
    }

    fn matrix(&self, s: i64) -> (DMatrix<Complex64>, Vec<Complex64>) {
        let m0 = s.unsigned_abs() as usize;
        let n = self.p - m0;
        let r = &self.radials;
        let ss31 = &self.ss31[m0].entries;
        let sr31 = &self.sr31[m0].entries;
        let rr13 = &self.rr13[m0].entries;
        let sr13 = &self.sr13[m0].entries;
        let (ia, ib, ic, id) = (0, n, 2 * n, 3 * n);
        let (rp, rv, r2, r3) = (0, n, 2 * n, 3 * n);
        let one = Complex64::new(1.0, 0.0);
        let mut mat = DMatrix::<Complex64>::zeros(4 * n, 4 * n);
        let mut scale = vec![one; 4 * n];
        for i in 0..n {
            let l = m0 + i;
            scale[ia + i] = Complex64::from(1.0 / r.a_scale(l));
            scale[ib + i] = one / r.ho1[l];
            scale[ic + i] = one / r.hi2[l];
            scale[id + i] = one / r.hi3[l];
        }
        for i in 0..n {
            let l = m0 + i;
            let v_row = r.ho1[l] / (self.k_o * r.dho1[l]);
            let n2_row = r.hi2[l] / r.dhi2[l];
            let n3_row = r.hi3[l] / r.dhi3[l];

            // S1 pressure: d[j A + h (C + SS·D)] - h_o B = j_o E
            mat[(rp + i, ia + i)] = Complex64::from(self.d * r.ji1[l]) * scale[ia + i];
            mat[(rp + i, ib + i)] = -one;
            mat[(rp + i, ic + i)] = self.d * r.hi1[l] * scale[ic + i];
            // S1 velocity: k_i[j' A + h' (C + SS·D)] - k_o h_o' B = k_o j_o' E
            mat[(rv + i, ia + i)] = v_row * self.k_i * r.dji1[l] * scale[ia + i];
            mat[(rv + i, ib + i)] = -one;
            mat[(rv + i, ic + i)] = v_row * self.k_i * r.dhi1[l] * scale[ic + i];
            // S2 Neumann: j'(A + SR·D) + h' C = 0
            mat[(r2 + i, ia + i)] = n2_row * r.dji2[l] * scale[ia + i];
            mat[(r2 + i, ic + i)] = one;
            // S3 Neumann: j'(RR·A + SR·C) + h' D = 0
            mat[(r3 + i, id + i)] = one;
            for j in 0..n {
                let ds = scale[id + j];
                mat[(rp + i, id + j)] = self.d * r.hi1[l] * ss31[(i, j)] * ds;
                mat[(rv + i, id + j)] = v_row * self.k_i * r.dhi1[l] * ss31[(i, j)] * ds;
                mat[(r2 + i, id + j)] = n2_row * r.dji2[l] * sr31[(i, j)] * ds;
                mat[(r3 + i, ia + j)] += n3_row * r.dji3[l] * rr13[(i, j)] * scale[ia + j];
                mat[(r3 + i, ic + j)] += n3_row * r.dji3[l] * sr13[(i, j)] * scale[ic + j];
            }
        }
        (mat, scale)
    }

    /// Right-hand side contributed by a unit incident coefficient at local degree index `i`.
    fn rhs_weights(&self, l: usize) -> (Complex64, Complex64) {
        let r = &self.radials;
        let v_row = r.ho1[l] / (self.k_o * r.dho1[l]);
        (Complex64::from(r.jo1[l]), v_row * self.k_o * r.djo1[l])
    }

    fn rhs(&self, s: i64, e: &[Complex64]) -> DVector<Complex64> {
        let m0 = s.unsigned_abs() as usize;
        let n = self.p - m0;
        let mut rhs = DVector::zeros(4 * n);
        for i in 0..n {
            let (wp, wv) = self.rhs_weights(m0 + i);
            rhs[i] = wp * e[i];
            rhs[n + i] = wv * e[i];
        }
        rhs
    }
}

/// Assemble the block system of order `s` for one frequency and incident field.
pub fn assemble_system(
    s: i64,
    media: &Media,
    geometry: &Geometry,
    f: f64,
    incident: &IncidentField,
    p: usize,
) -> Result<BlockSystem, SolverError> {
    if incident.p < p {
        return Err(SolverError::TruncationMismatch { have: incident.p, need: p });
    }
    let asm = Assembly::new(media, geometry, f, p)?;
    let (matrix, unknown_scale) = asm.matrix(s);
    let rhs = asm.rhs(s, &incident.order_vector(s, p));
    Ok(BlockSystem { order: s, block: p - s.unsigned_abs() as usize, matrix, rhs, unknown_scale })
}

/// LU factors for one `|s|`.
#[derive(Debug)]
struct FactoredOrder {
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    scale: Vec<Complex64>,
    condition: f64,
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// All per-order factorizations for one scene at one frequency.
pub struct FactoredSystem {
    pub frequency: f64,
    pub p: usize,
    pub k_o: f64,
    pub k_i: f64,
    asm: Assembly,
    orders: Vec<FactoredOrder>,
}

impl fmt::Debug for FactoredSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactoredSystem")
            .field("frequency", &self.frequency)
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

impl FactoredSystem {
    pub fn new(media: &Media, geometry: &Geometry, f: f64, p: usize) -> Result<Self, SolverError> {
        let asm = Assembly::new(media, geometry, f, p)?;
        let mut orders = Vec::with_capacity(p);
        for m in 0..p {
            let (mat, scale) = asm.matrix(m as i64);
            let norm = one_norm(&mat);
            let lu = mat.lu();
            let inv = lu.try_inverse().ok_or_else(|| SolverError::Degenerate {
                order: m,
                reason: "singular block matrix".into(),
            })?;
            let condition = norm * one_norm(&inv);
            if !condition.is_finite() {
                return Err(SolverError::Degenerate { order: m, reason: "non-finite condition estimate".into() });
            }
            orders.push(FactoredOrder { lu, scale, condition });
        }
        Ok(Self { frequency: f, p, k_o: asm.k_o, k_i: asm.k_i, asm, orders })
    }

    /// 1-norm condition numbers of the scaled block matrices, by `|s|`.
    pub fn condition_numbers(&self) -> Vec<f64> {
        self.orders.iter().map(|o| o.condition).collect()
    }

    fn solve_order(&self, s: i64, e: &[Complex64]) -> Vec<Complex64> {
        let m0 = s.unsigned_abs() as usize;
        let fo = &self.orders[m0];
        let rhs = self.asm.rhs(s, e);
        let x = fo.lu.solve(&rhs).expect("factor checked invertible at construction");
        x.iter().zip(&fo.scale).map(|(v, sc)| v * sc).collect()
    }

    /// Solve for one incident field.
    pub fn solve(&self, incident: &IncidentField) -> Result<ModalSolution, SolverError> {
        let p = self.p;
        if incident.p < p {
            return Err(SolverError::TruncationMismatch { have: incident.p, need: p });
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut a = vec![zero; lm_count(p)];
        let mut b = a.clone();
        let mut c = a.clone();
        let mut d = a.clone();
        for s in -(p as i64 - 1)..=(p as i64 - 1) {
            let m0 = s.unsigned_abs() as usize;
            let n = p - m0;
            let x = self.solve_order(s, &incident.order_vector(s, p));
            for i in 0..n {
                let idx = lm_index(m0 + i, s);
                a[idx] = x[i];
                b[idx] = x[n + i];
                c[idx] = x[2 * n + i];
                d[idx] = x[3 * n + i];
            }
        }
        let warnings = self
            .orders
            .iter()
            .enumerate()
            .filter(|(_, o)| o.condition > CONDITION_WARNING)
            .map(|(m, o)| format!("order ±{m} at {} Hz: condition number {:.3e}", self.frequency, o.condition))
            .collect::<Vec<_>>();
        for w in &warnings {
            log::warn!("ill-conditioned block system: {w}");
        }
        Ok(ModalSolution { frequency: self.frequency, p, k_o: self.k_o, k_i: self.k_i, a, b, c, d, warnings })
    }

    /// Matrix `R` per `|s|` with `B̂ = R·E` for the order-`s` incident vector,
    /// where `B̂_l = B_l h_l(k_o a1)` is the scattered field on `S1` per unit harmonic.
    pub fn surface_response(&self, m0: usize) -> DMatrix<Complex64> {
        let n = self.p - m0;
        let fo = &self.orders[m0];
        let mut rhs = DMatrix::<Complex64>::zeros(4 * n, n);
        for i in 0..n {
            let (wp, wv) = self.asm.rhs_weights(m0 + i);
            rhs[(i, i)] = wp;
            rhs[(n + i, i)] = wv;
        }
        let x = fo.lu.solve(&rhs).expect("factor checked invertible at construction");
        // rows n..2n already hold B·h_o(k_o a1)
        x.rows(n, n).into_owned()
    }
}

/// Solved coefficient sets for one frequency and incident field.
#[derive(Debug, Clone)]
pub struct ModalSolution {
    pub frequency: f64,
    pub p: usize,
    pub k_o: f64,
    pub k_i: f64,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
    d: Vec<Complex64>,
    pub warnings: Vec<String>,
}

impl ModalSolution {
    pub fn a(&self, l: usize, s: i64) -> Complex64 {
        self.a[lm_index(l, s)]
    }
    pub fn b(&self, l: usize, s: i64) -> Complex64 {
        self.b[lm_index(l, s)]
    }
    pub fn c(&self, l: usize, s: i64) -> Complex64 {
        self.c[lm_index(l, s)]
    }
    pub fn d(&self, l: usize, s: i64) -> Complex64 {
        self.d[lm_index(l, s)]
    }
    pub fn transmitted(&self) -> &[Complex64] {
        &self.a
    }
    pub fn scattered_outer(&self) -> &[Complex64] {
        &self.b
    }
    pub fn scattered_core(&self) -> &[Complex64] {
        &self.c
    }
    pub fn scattered_offset(&self) -> &[Complex64] {
        &self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct FactorKey {
    f: u64,
    p: usize,
    scene: u64,
}

fn scene_hash(media: &Media, geometry: &Geometry) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for v in [media.rho_o, media.c_o, media.rho_i, media.c_i, geometry.a1, geometry.a2, geometry.a3, geometry.offset3_z] {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Thread-safe cache of factored systems keyed by frequency, truncation and scene.
#[derive(Default)]
pub struct FactorCache {
    inner: RwLock<HashMap<FactorKey, Arc<FactoredSystem>>>,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_factor(
        &self,
        media: &Media,
        geometry: &Geometry,
        f: f64,
        p: usize,
    ) -> Result<Arc<FactoredSystem>, SolverError> {
        let key = FactorKey { f: f.to_bits(), p, scene: scene_hash(media, geometry) };
        if let Some(hit) = self.inner.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let sys = Arc::new(FactoredSystem::new(media, geometry, f, p)?);
        let mut w = self.inner.write().expect("cache lock poisoned");
        Ok(Arc::clone(w.entry(key).or_insert(sys)))
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Solve every order of the coupled system for one incident field.
pub fn solve_scattering(
    media: &Media,
    geometry: &Geometry,
    f: f64,
    incident: &IncidentField,
    p: usize,
) -> Result<ModalSolution, SolverError> {
    FactoredSystem::new(media, geometry, f, p)?.solve(incident)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn water() -> Media {
        Media::water_tissue()
    }

    #[test]
    fn truncation_rule() {
        let sparse = Geometry { a1: 0.2, a2: 0.02, a3: 0.01, offset3_z: 0.05 };
        let m = water();
        assert_eq!(truncation_degree(&m, &sparse, 1500.0, None).unwrap(), 8);
        let g = Geometry::default_scene();
        assert!(truncation_degree(&m, &g, 1500.0, None).unwrap() > 8);
        // k_i a1 = 10
        let f = 10.0 * m.c_i / (2.0 * PI * g.a1);
        assert_eq!(truncation_degree(&m, &g, f, None).unwrap(), 30);
        assert_eq!(truncation_degree(&m, &g, 1e5, Some(12)).unwrap(), 12);
        assert!(matches!(truncation_degree(&m, &g, 100.0, Some(3)), Err(SolverError::TruncationOverride(3))));
    }

    #[test]
    fn geometry_validation() {
        let m = water();
        assert!(validate_geometry(&Geometry::default_scene(), &m).is_empty());
        let v = validate_geometry(&Geometry { a1: 0.2, a2: 0.1, a3: 0.1, offset3_z: 0.2 }, &m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, Constraint::Containment);
        assert_relative_eq!(v[0].lhs, 0.3, epsilon = 1e-12);
        let v = validate_geometry(&Geometry { a1: 0.2, a2: 0.2, a3: 0.01, offset3_z: 0.0 }, &m);
        assert!(v.iter().any(|x| x.constraint == Constraint::OuterLargerThanInner));
    }

    #[test]
    fn plane_wave_low_order_coefficients() {
        let pw = plane_wave_coefficients(0.7, 1.9, 3.0, 4);
        assert_relative_eq!(pw.coefficient(0, 0).re, (4.0 * PI).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(pw.coefficient(0, 0).re, 3.5449077, epsilon = 1e-7);
        let pw = plane_wave_coefficients(0.0, 0.0, 3.0, 4);
        let e10 = pw.coefficient(1, 0);
        assert!(e10.re.abs() < 1e-15);
        assert_relative_eq!(e10.im, (12.0 * PI).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn zero_strength_monopole() {
        let m = monopole_coefficients(Vector3::new(1.0, 0.0, 0.5), Complex64::new(0.0, 0.0), 2.0, 6, 0.2).unwrap();
        assert!(m.coefficients().iter().all(|c| c.norm() == 0.0));
        assert!(monopole_coefficients(Vector3::new(0.1, 0.0, 0.0), Complex64::new(1.0, 0.0), 2.0, 6, 0.2).is_err());
    }

    #[test]
    fn block_shape_and_zero_blocks() {
        let g = Geometry::default_scene();
        let inc = plane_wave_coefficients(1.0, 0.3, water().k_outside(800.0), 8);
        let sys = assemble_system(7, &water(), &g, 800.0, &inc, 8).unwrap();
        assert_eq!(sys.matrix.shape(), (4, 4));
        let sys = assemble_system(2, &water(), &g, 800.0, &inc, 8).unwrap();
        let n = sys.block;
        for i in 2 * n..4 * n {
            for j in n..2 * n {
                assert_eq!(sys.matrix[(i, j)], Complex64::new(0.0, 0.0));
            }
        }
        assert!(sys.rhs.rows(2 * n, 2 * n).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn order_decoupling() {
        let g = Geometry::default_scene();
        let m = water();
        let f = 900.0;
        let p = 8;
        let full = plane_wave_coefficients(1.2, 0.4, m.k_outside(f), p);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); lm_count(p)];
        for l in 2..p {
            coeffs[lm_index(l, 2)] = full.coefficient(l, 2);
        }
        let inc = IncidentField::from_coefficients(full.kind, full.k_o, p, coeffs);
        let sol = solve_scattering(&m, &g, f, &inc, p).unwrap();
        for l in 0..p {
            for s in -(l as i64)..=(l as i64) {
                if s != 2 {
                    assert_eq!(sol.a(l, s), Complex64::new(0.0, 0.0));
                    assert_eq!(sol.b(l, s), Complex64::new(0.0, 0.0));
                    assert_eq!(sol.c(l, s), Complex64::new(0.0, 0.0));
                    assert_eq!(sol.d(l, s), Complex64::new(0.0, 0.0));
                }
            }
        }
        assert!(sol.b(3, 2).norm() > 0.0);
    }

    #[test]
    fn linearity_in_incident_coefficients() {
        let g = Geometry::default_scene();
        let m = water();
        let f = 1200.0;
        let p = 8;
        let k = m.k_outside(f);
        let sys = FactoredSystem::new(&m, &g, f, p).unwrap();
        let e1 = plane_wave_coefficients(0.4, 2.0, k, p);
        let e2 = plane_wave_coefficients(2.1, -0.7, k, p);
        let (alpha, beta) = (Complex64::new(0.3, -1.1), Complex64::new(-2.0, 0.5));
        let mix: Vec<Complex64> =
            e1.coefficients().iter().zip(e2.coefficients()).map(|(a, b)| alpha * a + beta * b).collect();
        let mixed = IncidentField::from_coefficients(e1.kind, k, p, mix);
        let s1 = sys.solve(&e1).unwrap();
        let s2 = sys.solve(&e2).unwrap();
        let sm = sys.solve(&mixed).unwrap();
        for i in 0..lm_count(p) {
            let want = alpha * s1.b[i] + beta * s2.b[i];
            assert!((sm.b[i] - want).norm() <= 1e-12 * (1.0 + want.norm()));
            let want = alpha * s1.d[i] + beta * s2.d[i];
            assert!((sm.d[i] - want).norm() <= 1e-12 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn azimuth_mirror_maps_orders() {
        let g = Geometry::default_scene();
        let m = water();
        let f = 1000.0;
        let p = 8;
        let k = m.k_outside(f);
        let sys = FactoredSystem::new(&m, &g, f, p).unwrap();
        let plus = sys.solve(&plane_wave_coefficients(1.1, 0.8, k, p)).unwrap();
        let minus = sys.solve(&plane_wave_coefficients(1.1, -0.8, k, p)).unwrap();
        for l in 0..p {
            for s in -(l as i64)..=(l as i64) {
                assert!((minus.b(l, s) - plus.b(l, -s)).norm() < 1e-12 * (1.0 + plus.b(l, -s).norm()));
            }
        }
    }

    #[test]
    fn cache_reuses_factors() {
        let cache = FactorCache::new();
        let g = Geometry::default_scene();
        let m = water();
        let a = cache.get_or_factor(&m, &g, 700.0, 8).unwrap();
        let b = cache.get_or_factor(&m, &g, 700.0, 8).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let _ = cache.get_or_factor(&m, &g, 710.0, 8).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn invalid_scene_rejected_by_solver() {
        let g = Geometry { a1: 0.2, a2: 0.1, a3: 0.1, offset3_z: 0.1 };
        let inc = plane_wave_coefficients(1.0, 0.0, 1.0, 8);
        assert!(matches!(
            solve_scattering(&water(), &g, 500.0, &inc, 8),
            Err(SolverError::InvalidGeometry(_))
        ));
    }

    #[test]
    fn conditioning_is_moderate_for_default_scene() {
        let sys = FactoredSystem::new(&water(), &Geometry::default_scene(), 2000.0, 12).unwrap();
        for c in sys.condition_numbers() {
            assert!(c < CONDITION_WARNING, "condition {c}");
        }
    }
}
