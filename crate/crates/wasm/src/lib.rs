//! Browser bindings for the static demo page.
//!
//! Results cross the boundary as flat `Float64Array`s; each method documents
//! its row layout.

use multisphere::beamform;
use multisphere::config::SceneConfig;
use multisphere::field::CueModel;
use multisphere::localize::{self, OptimizerConfig};
use multisphere::solver::Media;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Default scene with an adjustable inner sound speed and band size.
#[wasm_bindgen]
pub struct Demo {
    model: CueModel,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(c_inner: f64, freq_count: usize) -> Result<Demo, JsError> {
        let mut scene = SceneConfig { media: Media { c_i: c_inner, ..Media::water_tissue() }, ..SceneConfig::default() };
        scene.freqs.count = freq_count;
        scene.validate().map_err(js_err)?;
        Ok(Demo { model: CueModel::new(&scene).map_err(js_err)? })
    }

    /// Rows of `[f_hz, ild_db, itd_us]` for a source at (theta, phi) in degrees.
    pub fn cues(&self, theta_deg: f64, phi_deg: f64) -> Result<Vec<f64>, JsError> {
        let c = self.model.cues(theta_deg.to_radians(), phi_deg.to_radians()).map_err(js_err)?;
        Ok((0..c.freqs.len()).flat_map(|i| [c.freqs[i], c.ild[i], c.itd[i] * 1e6]).collect())
    }

    /// Rows of `[f_hz, wng_db, di_db]` for a matched beam steered to (theta, phi) in degrees.
    pub fn beamform(&self, theta_deg: f64, phi_deg: f64, grid: usize) -> Result<Vec<f64>, JsError> {
        let g = beamform::make_grid(grid).map_err(js_err)?;
        let rows =
            beamform::band_metrics(&self.model, (theta_deg.to_radians(), phi_deg.to_radians()), &g).map_err(js_err)?;
        Ok(rows.iter().flat_map(|r| [r.f_hz, r.wng_db, r.di_db]).collect())
    }

    /// Localizes a noisy source; returns `[theta_hat_deg, phi_hat_deg, error_deg, iterations]`.
    pub fn localize(&self, theta_deg: f64, phi_deg: f64, snr_db: f64, seed: u64) -> Result<Vec<f64>, JsError> {
        let truth = (theta_deg.to_radians(), phi_deg.to_radians());
        let cues = self.model.cues(truth.0, truth.1).map_err(js_err)?;
        let obs = localize::add_cue_noise(&cues, snr_db, seed).map_err(js_err)?;
        let r = localize::localize(&obs, &self.model, &OptimizerConfig::default()).map_err(js_err)?.with_truth(truth);
        Ok(vec![r.theta_hat.to_degrees(), r.phi_hat.to_degrees(), r.angular_error.unwrap_or(f64::NAN), r.iterations as f64])
    }
}
