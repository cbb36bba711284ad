//! Source-direction estimation from binaural cues by multi-start Adam, and
//! the noise-robustness sweep.
//!
//! Both cue families are divided by their range across the band, taken from
//! the observation once and then frozen, so the loss surface does not move
//! during optimization.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::field::{CueModel, CueSpectrum, FieldError};
use crate::par;
use crate::specfun::HarmonicTable;

/// Smallest ILD range (dB) accepted as a normalizer.
pub const MIN_ILD_RANGE: f64 = 1e-9;
/// Smallest ITD range (s) accepted as a normalizer.
pub const MIN_ITD_RANGE: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum LocalizeError {
    #[error("observed {family} is flat across the band (range {range:e})")]
    FlatCues { family: &'static str, range: f64 },
    #[error("observation has {got} frequency bins, model has {want}")]
    GridMismatch { got: usize, want: usize },
    #[error("weights must be non-negative and not all zero")]
    BadWeights,
    #[error("invalid optimizer settings: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn range(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Target cues with their frozen normalization ranges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservedCues {
    pub freqs: Vec<f64>,
    pub ild: Vec<f64>,
    pub itd: Vec<f64>,
    pub ild_range: f64,
    pub itd_range: f64,
}

impl ObservedCues {
    pub fn new(freqs: Vec<f64>, ild: Vec<f64>, itd: Vec<f64>) -> Result<Self, LocalizeError> {
        if ild.len() != freqs.len() || itd.len() != freqs.len() {
            return Err(LocalizeError::GridMismatch { got: ild.len().min(itd.len()), want: freqs.len() });
        }
        let ild_range = range(&ild);
        let itd_range = range(&itd);
        if !(ild_range > MIN_ILD_RANGE) {
            return Err(LocalizeError::FlatCues { family: "ILD", range: ild_range });
        }
        if !(itd_range > MIN_ITD_RANGE) {
            return Err(LocalizeError::FlatCues { family: "ITD", range: itd_range });
        }
        Ok(Self { freqs, ild, itd, ild_range, itd_range })
    }

    pub fn from_spectrum(cues: &CueSpectrum) -> Result<Self, LocalizeError> {
        Self::new(cues.freqs.clone(), cues.ild.clone(), cues.itd.clone())
    }

    fn check(&self, model: &CueModel) -> Result<(), LocalizeError> {
        if self.freqs.len() != model.freqs().len() {
            return Err(LocalizeError::GridMismatch { got: self.freqs.len(), want: model.freqs().len() });
        }
        Ok(())
    }
}

/// Per-frequency weights and per-family weights for the weighted loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossWeights {
    pub per_freq: Vec<f64>,
    pub ild: f64,
    pub itd: f64,
}

impl LossWeights {
    pub fn uniform(n: usize) -> Self {
        Self { per_freq: vec![1.0; n], ild: 1.0, itd: 1.0 }
    }

    /// Family weights proportional to the spatial variance of each
    /// range-normalized cue over a horizontal-plane azimuth scan, scaled so
    /// they sum to 2.
    pub fn from_variance(model: &CueModel, obs: &ObservedCues, azimuths: usize) -> Result<Self, LocalizeError> {
        obs.check(model)?;
        let scans = par::map_range(azimuths, |i| model.cues(PI / 2.0, 2.0 * PI * i as f64 / azimuths as f64));
        let scans = scans.into_iter().collect::<Result<Vec<_>, _>>()?;
        let n = obs.freqs.len();
        let mean_variance = |get: &dyn Fn(&CueSpectrum) -> &[f64], scale: f64| {
            let mut total = 0.0;
            for fi in 0..n {
                let vals: Vec<f64> = scans.iter().map(|c| get(c)[fi] / scale).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                total += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            }
            total / n as f64
        };
        let vi = mean_variance(&|c| &c.ild, obs.ild_range);
        let vt = mean_variance(&|c| &c.itd, obs.itd_range);
        let sum = vi + vt;
        if !(sum > 0.0) {
            return Err(LocalizeError::BadWeights);
        }
        Ok(Self { per_freq: vec![1.0; n], ild: 2.0 * vi / sum, itd: 2.0 * vt / sum })
    }

    fn check(&self, n: usize) -> Result<(), LocalizeError> {
        let ok = self.per_freq.len() == n
            && self.per_freq.iter().all(|w| *w >= 0.0 && w.is_finite())
            && self.ild >= 0.0
            && self.itd >= 0.0
            && self.per_freq.iter().any(|w| *w > 0.0)
            && (self.ild > 0.0 || self.itd > 0.0);
        if ok {
            Ok(())
        } else {
            Err(LocalizeError::BadWeights)
        }
    }
}

fn residuals(spec: &CueSpectrum, obs: &ObservedCues) -> (Vec<f64>, Vec<f64>) {
    let ri = spec.ild.iter().zip(&obs.ild).map(|(a, b)| (a - b) / obs.ild_range).collect();
    let rt = spec.itd.iter().zip(&obs.itd).map(|(a, b)| (a - b) / obs.itd_range).collect();
    (ri, rt)
}

/// Sum over frequencies of squared range-normalized ILD and ITD errors.
pub fn normalized_loss(theta: f64, phi: f64, obs: &ObservedCues, model: &CueModel) -> Result<f64, LocalizeError> {
    obs.check(model)?;
    let (ri, rt) = residuals(&model.cues(theta, phi)?, obs);
    Ok(ri.iter().map(|r| r * r).sum::<f64>() + rt.iter().map(|r| r * r).sum::<f64>())
}

pub fn weighted_loss(
    theta: f64,
    phi: f64,
    obs: &ObservedCues,
    model: &CueModel,
    weights: &LossWeights,
) -> Result<f64, LocalizeError> {
    obs.check(model)?;
    weights.check(obs.freqs.len())?;
    let (ri, rt) = residuals(&model.cues(theta, phi)?, obs);
    Ok(weights
        .per_freq
        .iter()
        .zip(ri.iter().zip(&rt))
        .map(|(w, (a, b))| w * (weights.ild * a * a + weights.itd * b * b))
        .sum())
}

/// Loss and its gradient `(∂L/∂θ, ∂L/∂φ)`, optionally weighted.
pub fn loss_and_gradient(
    theta: f64,
    phi: f64,
    obs: &ObservedCues,
    model: &CueModel,
    weights: Option<&LossWeights>,
) -> Result<(f64, [f64; 2]), LocalizeError> {
    obs.check(model)?;
    let n = obs.freqs.len();
    let uniform;
    let w = match weights {
        Some(w) => {
            w.check(n)?;
            w
        }
        None => {
            uniform = LossWeights::uniform(n);
            &uniform
        }
    };
    let (spec, jac) = model.cues_with_jacobian(theta, phi)?;
    let (ri, rt) = residuals(&spec, obs);
    let mut loss = 0.0;
    let mut g = [0.0; 2];
    for fi in 0..n {
        let wi = w.per_freq[fi] * w.ild;
        let wt = w.per_freq[fi] * w.itd;
        loss += wi * ri[fi] * ri[fi] + wt * rt[fi] * rt[fi];
        let ci = 2.0 * wi * ri[fi] / obs.ild_range;
        let ct = 2.0 * wt * rt[fi] / obs.itd_range;
        g[0] += ci * jac.ild_theta[fi] + ct * jac.itd_theta[fi];
        g[1] += ci * jac.ild_phi[fi] + ct * jac.itd_phi[fi];
    }
    Ok((loss, g))
}

pub fn loss_gradient(theta: f64, phi: f64, obs: &ObservedCues, model: &CueModel) -> Result<[f64; 2], LocalizeError> {
    Ok(loss_and_gradient(theta, phi, obs, model, None)?.1)
}

/// Great-circle angle in degrees, through the degree-one harmonic addition theorem.
pub fn angular_error(est: (f64, f64), truth: (f64, f64)) -> f64 {
    let a = HarmonicTable::new(2, est.0, est.1);
    let b = HarmonicTable::new(2, truth.0, truth.1);
    let sum: Complex64 = (-1..=1).map(|s| a.value(1, s) * b.value(1, s).conj()).sum();
    let c = (4.0 * PI / 3.0 * sum.re).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Starting points spread over the sphere.
pub fn default_starts() -> Vec<(f64, f64)> {
    vec![(PI / 3.0, PI / 4.0), (PI / 3.0, 5.0 * PI / 4.0), (2.0 * PI / 3.0, 3.0 * PI / 4.0), (2.0 * PI / 3.0, 7.0 * PI / 4.0)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop after this many consecutive steps without a new best loss.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub starts: Vec<(f64, f64)>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 0.02, max_iters: 100, patience: 30, beta1: 0.9, beta2: 0.999, eps: 1e-8, starts: default_starts() }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        if !(self.learning_rate > 0.0) {
            return Err(LocalizeError::BadConfig(format!("learning_rate = {} must be positive", self.learning_rate)));
        }
        if self.patience > self.max_iters {
            return Err(LocalizeError::BadConfig(format!("patience {} exceeds max_iters {}", self.patience, self.max_iters)));
        }
        if self.starts.is_empty() {
            return Err(LocalizeError::BadConfig("no starting points".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub theta: f64,
    pub phi: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationResult {
    pub theta_hat: f64,
    pub phi_hat: f64,
    pub final_loss: f64,
    /// Degrees; present when the truth is known.
    pub angular_error: Option<f64>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning start.
    pub start: usize,
}

impl LocalizationResult {
    pub fn with_truth(mut self, truth: (f64, f64)) -> Self {
        self.angular_error = Some(angular_error((self.theta_hat, self.phi_hat), truth));
        self
    }
}

fn wrap_phi(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Bring `theta` into `[0, π]` by reflection through the poles, shifting
/// `phi` by π per crossing, and wrap `phi` into `[0, 2π)`.
pub fn reflect_angles(theta: f64, phi: f64) -> (f64, f64) {
    let mut t = theta;
    let mut p = phi;
    while !(0.0..=PI).contains(&t) {
        t = if t < 0.0 { -t } else { 2.0 * PI - t };
        p += PI;
    }
    (t, wrap_phi(p))
}

/// Adam from one starting point; the returned estimate is the best iterate.
pub fn adam(
    obs: &ObservedCues,
    model: &CueModel,
    cfg: &OptimizerConfig,
    start: (f64, f64),
    weights: Option<&LossWeights>,
) -> Result<LocalizationResult, LocalizeError> {
    let (mut theta, mut phi) = reflect_angles(start.0, start.1);
    let mut m = [0.0; 2];
    let mut v = [0.0; 2];
    let (mut loss, mut grad) = loss_and_gradient(theta, phi, obs, model, weights)?;
    let mut trajectory = vec![TrajectoryPoint { theta, phi, loss }];
    let mut best = (theta, phi, loss);
    let mut stale = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        for i in 0..2 {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        }
        let bc1 = 1.0 - cfg.beta1.powi(it as i32);
        let bc2 = 1.0 - cfg.beta2.powi(it as i32);
        let step = |i: usize| cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.eps);
        let raw_theta = theta - step(0);
        let raw_phi = phi - step(1);
        let crossed = !(0.0..=PI).contains(&raw_theta);
        let (t, p) = reflect_angles(raw_theta, raw_phi);
        if crossed {
            m[0] = -m[0];
        }
        theta = t;
        phi = p;
        let lg = loss_and_gradient(theta, phi, obs, model, weights)?;
        loss = lg.0;
        grad = lg.1;
        trajectory.push(TrajectoryPoint { theta, phi, loss });
        iterations = it;
        if loss < best.2 {
            best = (theta, phi, loss);
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience || loss == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(LocalizationResult {
        theta_hat: best.0,
        phi_hat: best.1,
        final_loss: best.2,
        angular_error: None,
        trajectory,
        iterations,
        converged,
        start: 0,
    })
}

/// Run Adam from every configured start and keep the lowest final loss
/// (earliest start on ties).
pub fn localize(obs: &ObservedCues, model: &CueModel, cfg: &OptimizerConfig) -> Result<LocalizationResult, LocalizeError> {
    localize_weighted(obs, model, cfg, None)
}

pub fn localize_weighted(
    obs: &ObservedCues,
    model: &CueModel,
    cfg: &OptimizerConfig,
    weights: Option<&LossWeights>,
) -> Result<LocalizationResult, LocalizeError> {
    cfg.validate()?;
    obs.check(model)?;
    let runs = par::map_range(cfg.starts.len(), |i| adam(obs, model, cfg, cfg.starts[i], weights));
    best_start(runs)
}

fn best_start(runs: impl IntoIterator<Item = Result<LocalizationResult, LocalizeError>>) -> Result<LocalizationResult, LocalizeError> {
    let mut best: Option<LocalizationResult> = None;
    for (i, r) in runs.into_iter().enumerate() {
        let mut r = r?;
        r.start = i;
        if best.as_ref().is_none_or(|b| r.final_loss < b.final_loss) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| LocalizeError::BadConfig("no starting points".into()))
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

/// Gaussian noise with `σ = RMS(clean) / 10^{SNR/20}` per cue family.
pub fn add_cue_noise(cues: &CueSpectrum, snr_db: f64, seed: u64) -> Result<ObservedCues, LocalizeError> {
    let gain = 10f64.powf(snr_db / 20.0);
    add_cue_noise_absolute(cues, rms(&cues.ild) / gain, rms(&cues.itd) / gain, seed)
}

/// Gaussian noise with fixed standard deviations (dB and seconds).
pub fn add_cue_noise_absolute(
    cues: &CueSpectrum,
    sigma_ild: f64,
    sigma_itd: f64,
    seed: u64,
) -> Result<ObservedCues, LocalizeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ild = perturb(&cues.ild, sigma_ild, &mut rng);
    let itd = perturb(&cues.itd, sigma_itd, &mut rng);
    ObservedCues::new(cues.freqs.clone(), ild, itd)
}

fn perturb(v: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if !(sigma > 0.0) {
        return v.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("positive finite sigma");
    v.iter().map(|x| x + normal.sample(rng)).collect()
}

/// Four elevations by eight azimuths, in radians.
pub fn default_sweep_directions() -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(32);
    for el in [60.0f64, 90.0, 120.0, 150.0] {
        for az in 0..8 {
            out.push((el.to_radians(), (45.0 * az as f64).to_radians()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub mean_err_deg: f64,
    pub median_err_deg: f64,
    pub frac_lt_5: f64,
    pub frac_lt_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Errors per SNR, ordered by direction then trial.
    pub errors: Vec<Vec<f64>>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Seed for one (direction, SNR, trial) cell, derived from the master seed.
pub fn trial_seed(master: u64, direction: usize, snr: usize, trial: usize) -> u64 {
    let mut z = master
        ^ (direction as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (snr as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (trial as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Localize noisy observations for every direction, SNR and trial.
pub fn sweep(
    model: &CueModel,
    directions: &[(f64, f64)],
    snrs: &[f64],
    trials: usize,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<SweepTable, LocalizeError> {
    if trials == 0 {
        return Err(LocalizeError::BadConfig("trials must be at least 1".into()));
    }
    cfg.validate()?;
    let clean = par::map_range(directions.len(), |d| model.cues(directions[d].0, directions[d].1));
    let clean = clean.into_iter().collect::<Result<Vec<_>, _>>()?;
    let per_snr = directions.len() * trials;
    let jobs = snrs.len() * per_snr;
    let errors = par::map_range(jobs, |j| {
        let si = j / per_snr;
        let d = (j % per_snr) / trials;
        let t = j % trials;
        let obs = add_cue_noise(&clean[d], snrs[si], trial_seed(seed, d, si, t))?;
        // starts run serially here; the jobs already fill the pool
        let b = best_start(cfg.starts.iter().map(|&s| adam(&obs, model, cfg, s, None)))?;
        Ok::<f64, LocalizeError>(angular_error((b.theta_hat, b.phi_hat), directions[d]))
    });
    let errors = errors.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(snrs.len());
    let mut grouped = Vec::with_capacity(snrs.len());
    for (si, &snr) in snrs.iter().enumerate() {
        let e = errors[si * per_snr..(si + 1) * per_snr].to_vec();
        let n = e.len() as f64;
        rows.push(SweepRow {
            snr_db: snr,
            mean_err_deg: e.iter().sum::<f64>() / n,
            median_err_deg: median(&e),
            frac_lt_5: e.iter().filter(|x| **x < 5.0).count() as f64 / n,
            frac_lt_10: e.iter().filter(|x| **x < 10.0).count() as f64 / n,
        });
        grouped.push(e);
    }
    Ok(SweepTable { rows, errors: grouped })
}
