//! Independent reference solutions shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use multisphere::field::{self, series_value, Basis};
use multisphere::solver::{self, Geometry, IncidentField, Media};
use multisphere::specfun::{self, lm_count, lm_index};
use multisphere::translation;
use multisphere::validation;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Two rigid spheres in a homogeneous medium: `S2` about the origin and
/// `S3` about `offset3_z·ẑ`. No penetrable shell.
pub struct TwoSphereOracle {
    pub k: f64,
    pub p: usize,
    pub geometry: Geometry,
    /// Singular coefficients about the origin.
    pub c: Vec<Complex64>,
    /// Singular coefficients about `O3`.
    pub d: Vec<Complex64>,
}

impl TwoSphereOracle {
    pub fn solve(k: f64, geometry: Geometry, incident: &IncidentField, p: usize) -> Self {
        let t = geometry.offset3_z;
        let (_, dj2) = specfun::bessel_j_with_derivative(p, k * geometry.a2).unwrap();
        let (_, dh2) = specfun::hankel_with_derivative(p, k * geometry.a2).unwrap();
        let (_, dj3) = specfun::bessel_j_with_derivative(p, k * geometry.a3).unwrap();
        let (_, dh3) = specfun::hankel_with_derivative(p, k * geometry.a3).unwrap();
        let mut c = vec![ZERO; lm_count(p)];
        let mut d = vec![ZERO; lm_count(p)];
        for s in -(p as i64 - 1)..=(p as i64 - 1) {
            let m = s.unsigned_abs() as usize;
            let n = p - m;
            let sr_to_o1 = translation::coaxial_sr(s, k, -t, p).unwrap();
            let sr_to_o3 = translation::coaxial_sr(s, k, t, p).unwrap();
            let rr_to_o3 = translation::coaxial_rr(s, k, t, p).unwrap();
            let e = incident.order_vector(s, p);
            let e3 = rr_to_o3.apply(&e);
            // unknowns scaled by h'(k a): x = [C h2', D h3']
            let mut mat = DMatrix::<Complex64>::identity(2 * n, 2 * n);
            let mut rhs = DVector::<Complex64>::zeros(2 * n);
            for i in 0..n {
                let l = m + i;
                for j in 0..n {
                    mat[(i, n + j)] += dj2[l] * sr_to_o1.entries[(i, j)] / dh3[m + j];
                    mat[(n + i, j)] += dj3[l] * sr_to_o3.entries[(i, j)] / dh2[m + j];
                }
                rhs[i] = -dj2[l] * e[i];
                rhs[n + i] = -dj3[l] * e3[i];
            }
            let x = mat.lu().solve(&rhs).unwrap();
            for i in 0..n {
                c[lm_index(m + i, s)] = x[i] / dh2[m + i];
                d[lm_index(m + i, s)] = x[n + i] / dh3[m + i];
            }
        }
        Self { k, p, geometry, c, d }
    }

    /// Total field at a point outside both spheres.
    pub fn total(&self, incident: &IncidentField, point: &Vector3<f64>) -> Complex64 {
        let local3 = point - self.geometry.center3();
        incident.evaluate(point)
            + series_value(Basis::Singular, &self.c, self.p, self.k, point).unwrap()
            + series_value(Basis::Singular, &self.d, self.p, self.k, &local3).unwrap()
    }
}

/// Penetrable shell `S1` around a concentric rigid core `S2`; separable by degree.
///
/// Returns the outward scattered coefficients `B`.
pub fn concentric_shell_core(media: &Media, a1: f64, a2: f64, f: f64, incident: &IncidentField, p: usize) -> Vec<Complex64> {
    let ko = media.k_outside(f);
    let ki = media.k_inside(f);
    let d = media.density_ratio();
    let (jo, djo) = specfun::bessel_j_with_derivative(p, ko * a1).unwrap();
    let (ho, dho) = specfun::hankel_with_derivative(p, ko * a1).unwrap();
    let (ji, dji) = specfun::bessel_j_with_derivative(p, ki * a1).unwrap();
    let (hi, dhi) = specfun::hankel_with_derivative(p, ki * a1).unwrap();
    let (_, dj2) = specfun::bessel_j_with_derivative(p, ki * a2).unwrap();
    let (_, dh2) = specfun::hankel_with_derivative(p, ki * a2).unwrap();
    let mut b = vec![ZERO; lm_count(p)];
    for l in 0..p {
        let lambda = dj2[l] / dh2[l];
        // interior radial function satisfying the rigid condition at a2
        let u = ji[l] - lambda * hi[l];
        let du = dji[l] - lambda * dhi[l];
        // d·A·u = jo E + ho B,  k_i A u' = k_o (jo' E + ho' B)
        let det = d * u * ko * dho[l] - ki * du * ho[l];
        for s in -(l as i64)..=(l as i64) {
            let e = incident.coefficient(l, s);
            let rhs1 = jo[l] * e;
            let rhs2 = ko * djo[l] * e;
            let a = (rhs1 * ko * dho[l] - ho[l] * rhs2) / det;
            b[lm_index(l, s)] = (d * u * a - rhs1) / ho[l];
        }
    }
    b
}

/// Translated-basis error against direct evaluation.
pub fn addition_theorem_error(
    basis: Basis,
    degree: usize,
    s: i64,
    k: f64,
    t_z: f64,
    p: usize,
    points: &[Vector3<f64>],
) -> f64 {
    validation::addition_theorem_error(basis, degree, s, k, t_z, p, points).unwrap()
}

/// Points uniformly distributed in the ball of the given radius.
pub fn ball_points(rng: &mut impl rand::Rng, n: usize, radius: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() <= 1.0 && v.norm() > 1e-3 {
                break v * radius;
            }
        })
        .collect()
}

/// Points on spherical shells between `r_min` and `r_max`.
pub fn shell_points(rng: &mut impl rand::Rng, n: usize, r_min: f64, r_max: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-0.99..0.99);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let r = rng.random_range(r_min..r_max);
            let rho = (1.0 - z * z).sqrt();
            Vector3::new(rho * phi.cos(), rho * phi.sin(), z) * r
        })
        .collect()
}

/// Worst relative difference between the full solver in a matched-media
/// scene and the two-rigid-sphere oracle at 50 exterior points.
pub fn matched_media_worst(freqs: &[f64]) -> f64 {
    let media = Media::matched(1000.0, 1500.0);
    let g = Geometry::default_scene();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points = shell_points(&mut rng, 50, 1.2 * g.a1, 3.0 * g.a1);
    let mut worst: f64 = 0.0;
    for &f in freqs {
        let k = media.k_outside(f);
        let p = solver::truncation_degree(&media, &g, f, None).unwrap();
        let inc = solver::plane_wave_coefficients(1.1, 0.4, k, p + 6);
        let sol = solver::solve_scattering(&media, &g, f, &inc, p).unwrap();
        let oracle = TwoSphereOracle::solve(k, g, &inc, p + 6);
        for x in &points {
            let ours = field::evaluate_exterior(&sol, &inc, &g, x).unwrap();
            let theirs = oracle.total(&inc, x);
            worst = worst.max((ours - theirs).norm() / theirs.norm());
        }
    }
    worst
}

/// Worst relative difference between the full solver with a tiny offset
/// sphere and the separable shell-plus-core solution at 50 exterior points.
pub fn concentric_worst(freqs: &[f64]) -> f64 {
    let media = Media::water_tissue();
    let a3 = 0.002;
    let g = Geometry { a1: 0.2, a2: 0.05, a3, offset3_z: 0.05 + a3 + 0.001 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points = shell_points(&mut rng, 50, 1.1 * g.a1, 2.5 * g.a1);
    let mut worst: f64 = 0.0;
    for &f in freqs {
        let k = media.k_outside(f);
        let p = solver::truncation_degree(&media, &g, f, None).unwrap();
        let inc = solver::plane_wave_coefficients(2.0, 1.0, k, p);
        let sol = solver::solve_scattering(&media, &g, f, &inc, p).unwrap();
        let b = concentric_shell_core(&media, g.a1, g.a2, f, &inc, p);
        for x in &points {
            let ours = field::evaluate_exterior(&sol, &inc, &g, x).unwrap();
            let theirs = inc.evaluate(x) + series_value(Basis::Singular, &b, p, k, x).unwrap();
            worst = worst.max((ours - theirs).norm() / theirs.norm());
        }
    }
    worst
}
