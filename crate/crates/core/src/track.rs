//! Extended Kalman filter tracking of a moving source from stacked ILD/ITD
//! measurements, with constant-velocity dynamics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::field::{CueModel, FieldError};
use crate::localize;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("measurement has {got} entries, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("invalid tracker setting: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `[θ, φ, θ̇, φ̇]` with covariance `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
}

impl TrackState {
    pub fn angles(&self) -> (f64, f64) {
        (self.x[0], self.x[1])
    }
}

/// Constant-velocity transition and its acceleration-driven noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessModel {
    pub f: Matrix4<f64>,
    pub q: Matrix4<f64>,
}

pub fn process_matrices(dt: f64, sigma_theta: f64, sigma_phi: f64) -> ProcessModel {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    let mut q = Matrix4::zeros();
    for (i, s2) in [(0, sigma_theta * sigma_theta), (1, sigma_phi * sigma_phi)] {
        q[(i, i)] = dt.powi(4) / 4.0 * s2;
        q[(i, i + 2)] = dt.powi(3) / 2.0 * s2;
        q[(i + 2, i)] = dt.powi(3) / 2.0 * s2;
        q[(i + 2, i + 2)] = dt * dt * s2;
    }
    ProcessModel { f, q }
}

/// Measurement stacking `[ILD(f_1..f_K), ITD(f_1..f_K)]` with diagonal noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementModel {
    /// dB.
    pub sigma_ild: f64,
    /// Seconds.
    pub sigma_itd: f64,
}

impl MeasurementModel {
    /// Diagonal of `R`.
    pub fn r_diagonal(&self, n_freq: usize) -> DVector<f64> {
        DVector::from_fn(2 * n_freq, |i, _| if i < n_freq { self.sigma_ild.powi(2) } else { self.sigma_itd.powi(2) })
    }

    fn sigmas(&self, n_freq: usize) -> DVector<f64> {
        self.r_diagonal(n_freq).map(f64::sqrt)
    }
}

/// Noiseless stacked cues at the angular part of `x`.
pub fn measurement(x: &Vector4<f64>, model: &CueModel) -> Result<DVector<f64>, TrackError> {
    let c = model.cues(x[0], x[1])?;
    Ok(DVector::from_iterator(c.ild.len() * 2, c.ild.into_iter().chain(c.itd)))
}

/// Stacked cues and the `2K × 4` Jacobian; velocity columns are zero.
pub fn measurement_jacobian(x: &Vector4<f64>, model: &CueModel) -> Result<(DVector<f64>, DMatrix<f64>), TrackError> {
    let (c, j) = model.cues_with_jacobian(x[0], x[1])?;
    let k = c.ild.len();
    let z = DVector::from_iterator(2 * k, c.ild.into_iter().chain(c.itd));
    let mut h = DMatrix::zeros(2 * k, 4);
    for i in 0..k {
        h[(i, 0)] = j.ild_theta[i];
        h[(i, 1)] = j.ild_phi[i];
        h[(k + i, 0)] = j.itd_theta[i];
        h[(k + i, 1)] = j.itd_phi[i];
    }
    Ok((z, h))
}

/// Per-update quantities in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub innovation: DVector<f64>,
    pub s: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// Normalized innovation squared `yᵀ S⁻¹ y`.
    pub nis: f64,
}

/// Map `θ` back into `[0, π]` and `φ` into `[0, 2π)`, flipping the `θ`
/// velocity and the matching covariance terms on each reflection.
fn normalize_state(x: &mut Vector4<f64>, p: &mut Matrix4<f64>) {
    let mut flip = false;
    while !(0.0..=PI).contains(&x[0]) {
        x[0] = if x[0] < 0.0 { -x[0] } else { 2.0 * PI - x[0] };
        x[1] += PI;
        flip = !flip;
    }
    if flip {
        let j = Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, -1.0, 1.0));
        *p = j * *p * j;
        x[2] = -x[2];
    }
    x[1] = x[1].rem_euclid(2.0 * PI);
    if x[1] >= 2.0 * PI {
        x[1] = 0.0;
    }
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// One predict/update cycle.
pub fn ekf_step(
    state: &TrackState,
    z: &DVector<f64>,
    process: &ProcessModel,
    meas: &MeasurementModel,
    model: &CueModel,
) -> Result<(TrackState, StepDiagnostics), TrackError> {
    let k = model.freqs().len();
    if z.len() != 2 * k {
        return Err(TrackError::Dimension { got: z.len(), expected: 2 * k });
    }
    let mut x = process.f * state.x;
    let mut p = symmetrize(&(process.f * state.p * process.f.transpose() + process.q));
    normalize_state(&mut x, &mut p);

    let (zp, h) = measurement_jacobian(&x, model)?;
    // whitened: R becomes the identity
    let sig = meas.sigmas(k);
    if sig.iter().any(|s| !(*s > 0.0)) {
        return Err(TrackError::BadConfig("measurement noise must be positive".into()));
    }
    let y = z - &zp;
    let yw = y.component_div(&sig);
    let mut hw = h.clone();
    for (mut row, s) in hw.row_iter_mut().zip(sig.iter()) {
        row /= *s;
    }
    let pd = DMatrix::from_column_slice(4, 4, p.as_slice());
    let sw = &hw * &pd * hw.transpose() + DMatrix::identity(2 * k, 2 * k);
    let chol = sw.clone().cholesky().ok_or(TrackError::SingularInnovation)?;
    // K̃ = P H̃ᵀ S̃⁻¹ = (P⁻¹ + H̃ᵀH̃)⁻¹ H̃ᵀ; the 4×4 form stays accurate when S̃ is ill-conditioned
    let gw = match pd.clone().cholesky() {
        Some(pc) => {
            let info = pc.inverse() + hw.transpose() * &hw;
            info.cholesky().ok_or(TrackError::SingularInnovation)?.solve(&hw.transpose())
        }
        None => chol.solve(&(&hw * &pd)).transpose(),
    };
    let dx = &gw * &yw;
    let nis = yw.dot(&chol.solve(&yw));

    let ikh = DMatrix::identity(4, 4) - &gw * &hw;
    let pj = &ikh * &pd * ikh.transpose() + &gw * gw.transpose();
    let mut p_new = symmetrize(&Matrix4::from_column_slice(pj.as_slice()));
    let mut x_new = x + Vector4::from_column_slice(dx.as_slice());
    normalize_state(&mut x_new, &mut p_new);

    let mut gain = gw;
    for (mut col, s) in gain.column_iter_mut().zip(sig.iter()) {
        col /= *s;
    }
    let mut s = sw;
    for i in 0..2 * k {
        for j in 0..2 * k {
            s[(i, j)] *= sig[i] * sig[j];
        }
    }
    Ok((TrackState { x: x_new, p: p_new }, StepDiagnostics { innovation: y, s, gain, nis }))
}

/// Tracker settings. Noise levels set both `R` and the simulated noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub sigma_ild_db: f64,
    pub sigma_itd_s: f64,
    pub sigma_acc: f64,
    pub dt: f64,
    pub init: (f64, f64),
    pub p0: Matrix4<f64>,
    /// When false, measurements are the noiseless cues at the truth.
    pub add_noise: bool,
    pub seed: u64,
}

pub fn default_p0() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(0.3f64.powi(2), 0.3f64.powi(2), 0.05f64.powi(2), 0.05f64.powi(2)))
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            sigma_ild_db: 0.5,
            sigma_itd_s: 10e-6,
            sigma_acc: 0.03,
            dt: 1.0,
            init: (2.2, 2.6),
            p0: default_p0(),
            add_noise: true,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackStep {
    pub t: usize,
    pub theta_true: f64,
    pub phi_true: f64,
    pub theta_hat: f64,
    pub phi_hat: f64,
    pub err_deg: f64,
    pub p_trace: f64,
    pub nis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRun {
    pub steps: Vec<TrackStep>,
    pub states: Vec<TrackState>,
}

impl TrackRun {
    /// Median angular error over steps `from..`.
    pub fn median_error(&self, from: usize) -> Option<f64> {
        let mut e: Vec<f64> = self.steps.iter().skip(from).map(|s| s.err_deg).collect();
        if e.is_empty() {
            return None;
        }
        e.sort_by(f64::total_cmp);
        let n = e.len();
        Some(if n % 2 == 1 { e[n / 2] } else { 0.5 * (e[n / 2 - 1] + e[n / 2]) })
    }

    pub fn mean_nis(&self) -> f64 {
        self.steps.iter().map(|s| s.nis).sum::<f64>() / self.steps.len() as f64
    }
}

/// Linear path in degrees from `start` to `end` over `steps` points, in radians.
pub fn linear_trajectory(start_deg: (f64, f64), end_deg: (f64, f64), steps: usize) -> Vec<(f64, f64)> {
    (0..steps)
        .map(|i| {
            let a = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 0.0 };
            (
                (start_deg.0 + a * (end_deg.0 - start_deg.0)).to_radians(),
                (start_deg.1 + a * (end_deg.1 - start_deg.1)).to_radians(),
            )
        })
        .collect()
}

/// Simulate measurements along `truth` and filter them in sequence.
pub fn run_tracker(model: &CueModel, truth: &[(f64, f64)], cfg: &TrackerConfig) -> Result<TrackRun, TrackError> {
    if truth.is_empty() {
        return Err(TrackError::BadConfig("trajectory is empty".into()));
    }
    if !(cfg.dt > 0.0) || cfg.sigma_acc < 0.0 {
        return Err(TrackError::BadConfig("dt must be positive and sigma_acc non-negative".into()));
    }
    let process = process_matrices(cfg.dt, cfg.sigma_acc, cfg.sigma_acc);
    let meas = MeasurementModel { sigma_ild: cfg.sigma_ild_db, sigma_itd: cfg.sigma_itd_s };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ild_noise = Normal::new(0.0, cfg.sigma_ild_db).map_err(|e| TrackError::BadConfig(e.to_string()))?;
    let itd_noise = Normal::new(0.0, cfg.sigma_itd_s).map_err(|e| TrackError::BadConfig(e.to_string()))?;
    let k = model.freqs().len();

    let mut state = TrackState { x: Vector4::new(cfg.init.0, cfg.init.1, 0.0, 0.0), p: cfg.p0 };
    let mut steps = Vec::with_capacity(truth.len());
    let mut states = Vec::with_capacity(truth.len());
    for (t, &(tt, tp)) in truth.iter().enumerate() {
        let mut z = measurement(&Vector4::new(tt, tp, 0.0, 0.0), model)?;
        if cfg.add_noise {
            for i in 0..2 * k {
                z[i] += if i < k { ild_noise.sample(&mut rng) } else { itd_noise.sample(&mut rng) };
            }
        }
        let (next, diag) = ekf_step(&state, &z, &process, &meas, model)?;
        state = next;
        steps.push(TrackStep {
            t,
            theta_true: tt,
            phi_true: tp,
            theta_hat: state.x[0],
            phi_hat: state.x[1],
            err_deg: localize::angular_error(state.angles(), (tt, tp)),
            p_trace: state.p.trace(),
            nis: diag.nis,
        });
        states.push(state.clone());
    }
    Ok(TrackRun { steps, states })
}
