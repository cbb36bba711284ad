//! Coaxial re-expansion of multipole series along the z-axis.
//!
//! For a translation by `t_z·ẑ` and a fixed order `s`, the matrix `T` maps
//! coefficients of a series about the original center onto coefficients of
//! the regular series about the shifted center:
//!
//! ```text
//! F_n^s(r + t_z ẑ) = Σ_l T[l, n] · R_l^s(r)
//! ```
//!
//! where `F = S` for the singular-to-regular kind (valid for `|r| < |t_z|`)
//! and `F = R` for the regular-to-regular kind (valid everywhere). The same
//! regular-to-regular coefficients also re-expand a singular series into a
//! singular series about the shifted center when `|r| > |t_z|`.
//!
//! Entries are sums over coupling degrees `q` of radial functions of
//! `k|t_z|` weighted by Gaunt integrals, which keeps every entry accurate
//! relative to its own size (recurrences lose the small off-diagonal
//! regular entries to cancellation).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::specfun::{self, lm_index, SpecFunError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslationError {
    #[error("singular-to-regular translation requires a non-zero distance")]
    ZeroDistance,
    #[error("truncation {p} too small for order {s}")]
    TruncationTooSmall { p: usize, s: i64 },
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TranslationKind {
    /// Singular-to-regular, `(S|R)`.
    SingularToRegular,
    /// Regular-to-regular, `(R|R)`; identical to singular-to-singular `(S|S)`.
    RegularToRegular,
}

/// Re-expansion matrix for one order `s`, rows and columns indexed by
/// degrees `|s|..p`.
#[derive(Debug, Clone)]
pub struct TranslationMatrix {
    pub order_s: i64,
    pub kind: TranslationKind,
    /// Dimensionless translation distance `k|t_z|`.
    pub kt: f64,
    /// `+1` for translation along `+z`, `-1` along `-z`.
    pub direction_sign: i8,
    pub entries: DMatrix<Complex64>,
}

impl TranslationMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// Entry `T[out_degree, in_degree]` addressed by absolute degrees.
    pub fn entry(&self, out_degree: usize, in_degree: usize) -> Complex64 {
        let m = self.order_s.unsigned_abs() as usize;
        self.entries[(out_degree - m, in_degree - m)]
    }

    pub fn apply(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let v = nalgebra::DVector::from_column_slice(coeffs);
        (&self.entries * v).as_slice().to_vec()
    }
}

/// `i^n` for any integer `n`.
fn i_pow(n: i64) -> Complex64 {
    match n.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Build translation matrices for orders `0..=max_order` (negative orders
/// share the matrix of `|s|`).
pub fn coaxial_set(
    kind: TranslationKind,
    k: f64,
    t_z: f64,
    p: usize,
    max_order: usize,
) -> Result<Vec<TranslationMatrix>, TranslationError> {
    build(kind, k, t_z, p, 0..=max_order)
}

fn build(
    kind: TranslationKind,
    k: f64,
    t_z: f64,
    p: usize,
    orders: std::ops::RangeInclusive<usize>,
) -> Result<Vec<TranslationMatrix>, TranslationError> {
    if *orders.end() + 1 > p {
        return Err(TranslationError::TruncationTooSmall { p, s: *orders.end() as i64 });
    }
    let kt = k * t_z.abs();
    let direction_sign: i8 = if t_z >= 0.0 { 1 } else { -1 };
    if kt == 0.0 {
        if kind == TranslationKind::SingularToRegular {
            return Err(TranslationError::ZeroDistance);
        }
        return Ok(orders
            .map(|m| TranslationMatrix {
                order_s: m as i64,
                kind,
                kt,
                direction_sign,
                entries: DMatrix::identity(p - m, p - m),
            })
            .collect());
    }

    // Coupling degrees q run up to 2(p - 1).
    let q_len = 2 * p - 1;
    let radial: Vec<Complex64> = match kind {
        TranslationKind::SingularToRegular => specfun::hankel_with_derivative(q_len, kt)?.0,
        TranslationKind::RegularToRegular => specfun::bessel_j_with_derivative(q_len, kt)?
            .0
            .into_iter()
            .map(Complex64::from)
            .collect(),
    };
    let axis_parity: f64 = if t_z > 0.0 { 1.0 } else { -1.0 };
    let weight: Vec<Complex64> = (0..q_len)
        .map(|q| {
            i_pow(q as i64)
                * radial[q]
                * (4.0 * PI)
                * axis_parity.powi(q as i32)
                * ((2 * q + 1) as f64 / (4.0 * PI)).sqrt()
        })
        .collect();

    // Gaunt integrals 2π ∫ N_n^m N_q^0 N_{n'}^m dx are polynomial of degree <= 4p - 4.
    let (nodes, qw) = specfun::gauss_legendre(q_len);
    let legendre: Vec<Vec<f64>> = nodes.iter().map(|&x| specfun::normalized_legendre(q_len, x.acos()).0).collect();

    let mut out = Vec::with_capacity(orders.clone().count());
    for m in orders {
        let mi = m as i64;
        let dim = p - m;
        let mut entries = DMatrix::<Complex64>::zeros(dim, dim);
        for a in 0..dim {
            for b in a..dim {
                let (n, np) = (m + a, m + b);
                let mut gaunt = vec![0.0; n + np + 1];
                for (xi, nl) in legendre.iter().enumerate() {
                    let base = 2.0 * PI * qw[xi] * nl[lm_index(n, mi)] * nl[lm_index(np, mi)];
                    for q in ((np - n)..=(n + np)).step_by(2) {
                        gaunt[q] += base * nl[lm_index(q, 0)];
                    }
                }
                let mut sum = Complex64::new(0.0, 0.0);
                for q in ((np - n)..=(n + np)).step_by(2) {
                    sum += weight[q] * gaunt[q];
                }
                // T[n', n] = i^{n' - n} Σ_q ..., symmetric in the Gaunt factor
                entries[(b, a)] = i_pow(np as i64 - n as i64) * sum;
                entries[(a, b)] = i_pow(n as i64 - np as i64) * sum;
            }
        }
        out.push(TranslationMatrix { order_s: mi, kind, kt, direction_sign, entries });
    }
    Ok(out)
}

fn single(
    kind: TranslationKind,
    s: i64,
    k: f64,
    t_z: f64,
    p: usize,
) -> Result<TranslationMatrix, TranslationError> {
    let m = s.unsigned_abs() as usize;
    if p < m + 1 {
        return Err(TranslationError::TruncationTooSmall { p, s });
    }
    let mut mat = build(kind, k, t_z, p, m..=m)?.pop().expect("one order requested");
    mat.order_s = s;
    Ok(mat)
}

/// Regular-to-regular coaxial matrix for order `s`.
pub fn coaxial_rr(s: i64, k: f64, t_z: f64, p: usize) -> Result<TranslationMatrix, TranslationError> {
    single(TranslationKind::RegularToRegular, s, k, t_z, p)
}

/// Singular-to-regular coaxial matrix for order `s`; `t_z` must be non-zero.
pub fn coaxial_sr(s: i64, k: f64, t_z: f64, p: usize) -> Result<TranslationMatrix, TranslationError> {
    if t_z == 0.0 {
        return Err(TranslationError::ZeroDistance);
    }
    single(TranslationKind::SingularToRegular, s, k, t_z, p)
}
