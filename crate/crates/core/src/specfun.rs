//! Spherical Bessel/Hankel functions, associated Legendre functions and
//! spherical harmonics.
//!
//! Harmonics follow the convention
//!
//! ```text
//! Y_l^s(θ, φ) = sqrt((2l+1)/4π) · sqrt((l-|s|)!/(l+|s|)!) · P_l^{|s|}(cos θ) · e^{isφ}
//! ```
//!
//! with `P_l^m` carrying no Condon–Shortley factor, so that
//! `conj(Y_l^s) = Y_l^{-s}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

/// Largest degree any routine in this module will evaluate.
pub const MAX_DEGREE: usize = 200;

/// Below this argument `j_l` is evaluated from its power series.
const SERIES_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecFunError {
    #[error("argument must be non-negative, got {0}")]
    NegativeArgument(f64),
    #[error("argument must be strictly positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("degree {degree} exceeds the maximum supported degree {max}")]
    DegreeTooLarge { degree: usize, max: usize },
    #[error("order {order} exceeds degree {degree}")]
    OrderExceedsDegree { degree: usize, order: i64 },
    #[error("argument {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("non-finite value for degree {degree} at x = {x}")]
    Overflow { degree: usize, x: f64 },
}

/// Degree `l` and order `s` of a spherical harmonic, `|s| <= l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DegreeOrder {
    l: usize,
    s: i64,
}

impl DegreeOrder {
    pub fn new(l: usize, s: i64) -> Result<Self, SpecFunError> {
        if s.unsigned_abs() as usize > l {
            return Err(SpecFunError::OrderExceedsDegree { degree: l, order: s });
        }
        Ok(Self { l, s })
    }

    pub fn degree(&self) -> usize {
        self.l
    }

    pub fn order(&self) -> i64 {
        self.s
    }
}

/// Flat index of `(l, s)` in a table holding all orders of degrees `0..L`.
#[inline]
pub fn lm_index(l: usize, s: i64) -> usize {
    ((l * l + l) as i64 + s) as usize
}

/// Number of `(l, s)` pairs with `l < p`.
#[inline]
pub fn lm_count(p: usize) -> usize {
    p * p
}

/// A radial function value and its derivative with respect to its argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialPair {
    pub value: Complex64,
    pub derivative: Complex64,
}

fn check_degree(l: usize) -> Result<(), SpecFunError> {
    if l > MAX_DEGREE {
        return Err(SpecFunError::DegreeTooLarge { degree: l, max: MAX_DEGREE });
    }
    Ok(())
}

/// `j_l(x)` for `l = 0..=n_max` via power series; accurate for small `x`.
fn bessel_j_series(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let half_x2 = 0.5 * x * x;
    // leading x^l / (2l+1)!!
    let mut lead = 1.0;
    for l in 0..=n_max {
        if l > 0 {
            lead *= x / (2 * l + 1) as f64;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            term *= -half_x2 / (k as f64 * (2 * l + 2 * k + 1) as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        out.push(lead * sum);
    }
    out
}

/// `j_l(x)` for `l = 0..=n_max` by Miller's downward recurrence.
fn bessel_j_downward(n_max: usize, x: f64) -> Vec<f64> {
    let start = n_max + 20 + (x.abs() as usize) + (((n_max as f64) + x).sqrt() * 4.0) as usize;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1.0;
    let mut next = 0.0;
    let mut cur = vals[start];
    for l in (1..=start).rev() {
        let prev = (2 * l + 1) as f64 / x * cur - next;
        next = cur;
        cur = prev;
        vals[l - 1] = cur;
        if cur.abs() > 1e250 {
            let scale = 1e-250;
            for v in vals[l - 1..=start].iter_mut() {
                *v *= scale;
            }
            cur *= scale;
            next *= scale;
        }
    }
    // normalize against whichever closed form is better conditioned
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    let scale = if j0.abs() >= j1.abs() { j0 / vals[0] } else { j1 / vals[1] };
    vals.truncate(n_max + 1);
    for v in vals.iter_mut() {
        *v *= scale;
    }
    vals
}

/// `j_l(x)` for `l = 0..=n_max`.
pub fn bessel_j_table(n_max: usize, x: f64) -> Result<Vec<f64>, SpecFunError> {
    if x < 0.0 || x.is_nan() {
        return Err(SpecFunError::NegativeArgument(x));
    }
    check_degree(n_max.saturating_sub(1))?;
    if x == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        return Ok(v);
    }
    if x < SERIES_THRESHOLD {
        Ok(bessel_j_series(n_max, x))
    } else {
        Ok(bessel_j_downward(n_max, x))
    }
}

/// `y_l(x)` for `l = 0..=n_max` by upward recurrence.
fn bessel_y_table(n_max: usize, x: f64) -> Vec<f64> {
    let (s, c) = x.sin_cos();
    let mut y = Vec::with_capacity(n_max + 1);
    y.push(-c / x);
    if n_max >= 1 {
        y.push(-c / (x * x) - s / x);
    }
    for l in 1..n_max {
        let v = (2 * l + 1) as f64 / x * y[l] - y[l - 1];
        y.push(v);
    }
    y
}

/// `(j_l, j_l')` for `l = 0..L` (exclusive), derivatives with respect to `x`.
pub fn bessel_j_with_derivative(len: usize, x: f64) -> Result<(Vec<f64>, Vec<f64>), SpecFunError> {
    if len == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    check_degree(len - 1)?;
    let j = bessel_j_table(len, x)?;
    let dj = (0..len)
        .map(|l| {
            if l == 0 {
                -j[1]
            } else {
                (l as f64 * j[l - 1] - (l + 1) as f64 * j[l + 1]) / (2 * l + 1) as f64
            }
        })
        .collect();
    let mut j = j;
    j.truncate(len);
    Ok((j, dj))
}

/// `(h_l, h_l')` of the first kind for `l = 0..len`.
pub fn hankel_with_derivative(
    len: usize,
    x: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>), SpecFunError> {
    if x <= 0.0 || x.is_nan() {
        return Err(SpecFunError::NonPositiveArgument(x));
    }
    if len == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    check_degree(len - 1)?;
    let j = bessel_j_table(len, x)?;
    let y = bessel_y_table(len, x);
    let mut h = Vec::with_capacity(len);
    let mut dh = Vec::with_capacity(len);
    for l in 0..len {
        let (dj, dy) = if l == 0 {
            (-j[1], -y[1])
        } else {
            let a = l as f64;
            let b = (l + 1) as f64;
            let d = (2 * l + 1) as f64;
            ((a * j[l - 1] - b * j[l + 1]) / d, (a * y[l - 1] - b * y[l + 1]) / d)
        };
        if !(y[l].is_finite() && dy.is_finite()) {
            return Err(SpecFunError::Overflow { degree: l, x });
        }
        h.push(Complex64::new(j[l], y[l]));
        dh.push(Complex64::new(dj, dy));
    }
    Ok((h, dh))
}

/// Spherical Bessel function of the first kind and its derivative.
pub fn spherical_bessel_j(l: usize, x: f64) -> Result<RadialPair, SpecFunError> {
    check_degree(l)?;
    let (j, dj) = bessel_j_with_derivative(l + 1, x)?;
    Ok(RadialPair { value: j[l].into(), derivative: dj[l].into() })
}

/// Spherical Bessel function of the second kind and its derivative.
pub fn spherical_bessel_y(l: usize, x: f64) -> Result<(f64, f64), SpecFunError> {
    let h = spherical_hankel_h1(l, x)?;
    Ok((h.value.im, h.derivative.im))
}

/// Spherical Hankel function of the first kind, `h_l = j_l + i y_l`, and its derivative.
pub fn spherical_hankel_h1(l: usize, x: f64) -> Result<RadialPair, SpecFunError> {
    check_degree(l)?;
    let (h, dh) = hankel_with_derivative(l + 1, x)?;
    Ok(RadialPair { value: h[l], derivative: dh[l] })
}

/// Associated Legendre function `P_l^m(x)` without the Condon–Shortley phase.
pub fn legendre_p(l: usize, m: usize, x: f64) -> Result<f64, SpecFunError> {
    check_degree(l)?;
    if m > l {
        return Err(SpecFunError::OrderExceedsDegree { degree: l, order: m as i64 });
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(SpecFunError::OutOfRange(x));
    }
    let somx2 = ((1.0 - x) * (1.0 + x)).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= fact * somx2;
        fact += 2.0;
    }
    if l == m {
        return Ok(pmm);
    }
    let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return Ok(pmmp1);
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = (x * (2 * ll - 1) as f64 * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmmp1;
        pmmp1 = pll;
    }
    Ok(pll)
}

/// Fully normalized Legendre values `N_l^m(cos θ)` (so that `Y_l^s = N_l^{|s|} e^{isφ}`)
/// and their θ-derivatives, for `l < len`, `0 <= m <= l`. Indexed by [`lm_index`]`(l, m)`.
pub(crate) fn normalized_legendre(len: usize, theta: f64) -> (Vec<f64>, Vec<f64>) {
    let n = lm_count(len);
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if len == 0 {
        return (p, dp);
    }
    let (st, ct) = theta.sin_cos();
    let st = st.abs();
    // diagonal seed
    let mut diag = 1.0 / (4.0 * PI).sqrt();
    for m in 0..len {
        if m > 0 {
            diag *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
        }
        p[lm_index(m, m as i64)] = diag;
        if m + 1 < len {
            p[lm_index(m + 1, m as i64)] = ct * ((2 * m + 3) as f64).sqrt() * diag;
        }
        for l in (m + 2)..len {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[lm_index(l, m as i64)] = a * (ct * p[lm_index(l - 1, m as i64)] - b * p[lm_index(l - 2, m as i64)]);
        }
    }
    for l in 0..len {
        let lf = l as f64;
        for m in 0..=l {
            let mf = m as f64;
            let up = if m < l { p[lm_index(l, m as i64 + 1)] } else { 0.0 };
            let v = if m == 0 {
                -(lf * (lf + 1.0)).sqrt() * up
            } else {
                let down = p[lm_index(l, m as i64 - 1)];
                0.5 * (((lf + mf) * (lf - mf + 1.0)).sqrt() * down
                    - ((lf - mf) * (lf + mf + 1.0)).sqrt() * up)
            };
            dp[lm_index(l, m as i64)] = v;
        }
    }
    (p, dp)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, exact for polynomials of degree `< 2n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Single spherical harmonic `Y_l^s(θ, φ)`.
pub fn spherical_harmonic(lo: DegreeOrder, theta: f64, phi: f64) -> Result<Complex64, SpecFunError> {
    check_degree(lo.l)?;
    if !(0.0..=PI).contains(&theta) {
        return Err(SpecFunError::OutOfRange(theta));
    }
    let table = HarmonicTable::new(lo.l + 1, theta, phi);
    Ok(table.value(lo.l, lo.s))
}

/// All harmonics `Y_l^s(θ, φ)` for `l < len` together with their θ- and φ-derivatives.
#[derive(Debug, Clone)]
pub struct HarmonicTable {
    len: usize,
    values: Vec<Complex64>,
    d_theta: Vec<Complex64>,
}

impl HarmonicTable {
    pub fn new(len: usize, theta: f64, phi: f64) -> Self {
        let (p, dp) = normalized_legendre(len, theta);
        let mut values = vec![Complex64::new(0.0, 0.0); lm_count(len)];
        let mut d_theta = values.clone();
        for l in 0..len {
            for s in -(l as i64)..=(l as i64) {
                let m = s.abs();
                let e = Complex64::from_polar(1.0, s as f64 * phi);
                values[lm_index(l, s)] = e * p[lm_index(l, m)];
                d_theta[lm_index(l, s)] = e * dp[lm_index(l, m)];
            }
        }
        Self { len, values, d_theta }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn value(&self, l: usize, s: i64) -> Complex64 {
        self.values[lm_index(l, s)]
    }

    #[inline]
    pub fn d_theta(&self, l: usize, s: i64) -> Complex64 {
        self.d_theta[lm_index(l, s)]
    }

    #[inline]
    pub fn d_phi(&self, l: usize, s: i64) -> Complex64 {
        Complex64::new(0.0, s as f64) * self.values[lm_index(l, s)]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}
