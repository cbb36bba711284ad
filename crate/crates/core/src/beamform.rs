//! Matched-filter beamforming on the two sensor transfer functions, with
//! white noise gain and directivity over an icosphere direction grid.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::field::{CueModel, FieldError};
use crate::par;
use crate::solver;

#[derive(Debug, Error)]
pub enum BeamformError {
    #[error("steering vector has zero norm")]
    DegenerateSteering,
    #[error("grid needs at least 12 directions, got {0}")]
    GridTooSmall(usize),
    #[error("{0} weights for {1} directions")]
    GridMismatch(usize, usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Transfer pair `(H_L, H_R)` for one direction and frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringVector {
    pub f: f64,
    pub h: [Complex64; 2],
}

fn inner(a: &[Complex64; 2], b: &[Complex64; 2]) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// `w = h0 / (h0ᴴ h0)`, so that `wᴴ h0 = 1`.
pub fn matched_weights(h0: &SteeringVector) -> Result<[Complex64; 2], BeamformError> {
    let n = inner(&h0.h, &h0.h).re;
    if !(n > 0.0) || !n.is_finite() {
        return Err(BeamformError::DegenerateSteering);
    }
    Ok([h0.h[0] / n, h0.h[1] / n])
}

/// Beamformer output `wᴴ h`.
pub fn response(w: &[Complex64; 2], h: &[Complex64; 2]) -> Complex64 {
    inner(w, h)
}

/// White noise gain `10 log10(1 / wᴴw)`.
pub fn wng(w: &[Complex64; 2]) -> f64 {
    10.0 * (1.0 / inner(w, w).re).log10()
}

/// Directions with positive quadrature weights summing to `4π`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionGrid {
    /// `(theta, phi)` in radians.
    pub directions: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

impl DirectionGrid {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// `Σ w_j f(θ_j, φ_j)`.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.directions.iter().zip(&self.weights).map(|(&(t, p), w)| w * f(t, p)).sum()
    }
}

/// `DF = |wᴴh0|² / ((1/4π) Σ_j a_j |wᴴh_j|²)` and `DI = 10 log10 DF`.
pub fn directivity(
    w: &[Complex64; 2],
    look: &[Complex64; 2],
    pattern: &[[Complex64; 2]],
    grid: &DirectionGrid,
) -> Result<(f64, f64), BeamformError> {
    if pattern.len() != grid.len() || grid.weights.len() != grid.len() {
        return Err(BeamformError::GridMismatch(pattern.len(), grid.len()));
    }
    let num = response(w, look).norm_sqr();
    let avg = pattern.iter().zip(&grid.weights).map(|(h, a)| a * response(w, h).norm_sqr()).sum::<f64>() / (4.0 * PI);
    let df = num / avg;
    Ok((df, 10.0 * df.log10()))
}

/// Vertex count of the icosphere after `level` subdivisions.
pub fn icosphere_count(level: u32) -> usize {
    10 * 4usize.pow(level) + 2
}

fn icosphere(level: u32) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push((verts[a] + verts[b]).normalize());
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Area of the spherical triangle with unit-vector corners.
fn spherical_triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let num = a.dot(&b.cross(c)).abs();
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

/// Icosphere vertices with spherical Voronoi cell areas as weights.
///
/// `n` snaps to the nearest vertex count `10·4^L + 2` (12, 42, 162, 642, …).
pub fn make_grid(n: usize) -> Result<DirectionGrid, BeamformError> {
    if n < 12 {
        return Err(BeamformError::GridTooSmall(n));
    }
    let level = (0..8u32).min_by_key(|&l| icosphere_count(l).abs_diff(n)).expect("non-empty range");
    if icosphere_count(level) != n {
        log::warn!("grid size {n} is not an icosphere count; using {}", icosphere_count(level));
    }
    let (verts, faces) = icosphere(level);
    let mut weights = voronoi_areas(&verts, &faces);
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w *= 4.0 * PI / total);
    let directions = verts
        .iter()
        .map(|v| {
            let (_, t, p) = solver::to_spherical(v);
            (t, p)
        })
        .collect();
    Ok(DirectionGrid { directions, weights })
}

fn voronoi_areas(verts: &[Vector3<f64>], faces: &[[usize; 3]]) -> Vec<f64> {
    let mut weights = vec![0.0; verts.len()];
    // every icosphere face is acute, so each Voronoi cell meets a face in
    // the kite between the vertex, two edge midpoints and the circumcenter
    for f in faces {
        let [a, b, c] = f.map(|i| verts[i]);
        let mut cc = (b - a).cross(&(c - a)).normalize();
        if cc.dot(&(a + b + c)) < 0.0 {
            cc = -cc;
        }
        for k in 0..3 {
            let v = verts[f[k]];
            let u = verts[f[(k + 1) % 3]];
            let w = verts[f[(k + 2) % 3]];
            let mu = (v + u).normalize();
            let mw = (v + w).normalize();
            weights[f[k]] += spherical_triangle_area(&v, &mu, &cc) + spherical_triangle_area(&v, &cc, &mw);
        }
    }
    weights
}

/// Beamformer metrics at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamRow {
    pub f_hz: f64,
    pub wng_db: f64,
    pub df: f64,
    pub di_db: f64,
    /// `|wᴴ h0|`, one for a distortionless beamformer.
    pub look_gain: f64,
}

/// Matched-filter metrics across the band for a look direction.
pub fn band_metrics(model: &CueModel, look: (f64, f64), grid: &DirectionGrid) -> Result<Vec<BeamRow>, BeamformError> {
    let (ll, lr) = model.transfer(look.0, look.1);
    let pattern = par::map_range(grid.len(), |j| model.transfer(grid.directions[j].0, grid.directions[j].1));
    let mut rows = Vec::with_capacity(model.freqs().len());
    for (fi, &f) in model.freqs().iter().enumerate() {
        let h0 = SteeringVector { f, h: [ll[fi], lr[fi]] };
        let w = matched_weights(&h0)?;
        let hs: Vec<[Complex64; 2]> = pattern.iter().map(|(l, r)| [l[fi], r[fi]]).collect();
        let (df, di) = directivity(&w, &h0.h, &hs, grid)?;
        rows.push(BeamRow { f_hz: f, wng_db: wng(&w), df, di_db: di, look_gain: response(&w, &h0.h).norm() });
    }
    Ok(rows)
}
