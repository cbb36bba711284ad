//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Report-only by default so the workspace test run stays green while known
//! failures are visible. Set `ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use multisphere::beamform::{self, SteeringVector};
use multisphere::config::SceneConfig;
use multisphere::field::CueModel;
use multisphere::localize::{self, ObservedCues, OptimizerConfig};
use multisphere::track::{self, TrackerConfig};
use multisphere::validation;

struct Outcome {
    passed: bool,
    detail: String,
}

fn run(id: usize, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let passed = out.passed && in_time;
    let timing = if in_time { String::new() } else { format!(", over the {} s limit", limit.as_secs()) };
    println!(
        "criterion {id}: {} {title}: {} ({:.1} s{timing})",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    passed
}

fn suite_outcome(r: &validation::SuiteReport) -> Outcome {
    let detail = r
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} = {:.3e} (limit {:.1e})", c.name, c.worst, c.tolerance))
        .collect::<Vec<_>>();
    let worst = r.checks.iter().map(|c| c.worst / c.tolerance).fold(0.0, f64::max);
    Outcome {
        passed: r.passed(),
        detail: if detail.is_empty() {
            format!("{} checks, worst at {:.2} of tolerance", r.checks.len(), worst)
        } else {
            detail.join("; ")
        },
    }
}

fn main() {
    let scene = SceneConfig::default();
    let model = CueModel::new(&scene).expect("default scene builds");
    let truth = (2.13, 1.10);
    let mut all = true;

    all &= run(1, "boundary residuals", Duration::from_secs(30), || {
        suite_outcome(&validation::boundary_suite(&scene, &[500.0, 1000.0, 2000.0]).unwrap())
    });

    all &= run(2, "oracle equivalence", Duration::from_secs(60), || {
        let matched = common::matched_media_worst(&[500.0, 2000.0]);
        let concentric = common::concentric_worst(&[500.0, 1500.0]);
        Outcome {
            passed: matched < 1e-4 && concentric < 1e-3,
            detail: format!("two rigid spheres {matched:.2e} (< 1e-4), shell and core {concentric:.2e} (< 1e-3)"),
        }
    });

    all &= run(3, "translation addition theorem", Duration::from_secs(10), || {
        suite_outcome(&validation::addition_theorem_suite(2024).unwrap())
    });

    all &= run(4, "gradient contract", Duration::from_secs(60), || {
        suite_outcome(&validation::gradient_suite(&model, truth, 50, 4).unwrap())
    });

    all &= run(5, "single-direction localization", Duration::from_secs(120), || {
        let obs = ObservedCues::from_spectrum(&model.cues(truth.0, truth.1).unwrap()).unwrap();
        let cfg = OptimizerConfig { starts: vec![(PI / 4.0, PI / 2.0)], ..OptimizerConfig::default() };
        let r = localize::localize(&obs, &model, &cfg).unwrap().with_truth(truth);
        let err = r.angular_error.unwrap();
        Outcome {
            passed: err < 1.0 && r.iterations <= 100,
            detail: format!(
                "error {err:.2} deg after {} iterations at ({:.3}, {:.3}), loss {:.3e}",
                r.iterations, r.theta_hat, r.phi_hat, r.final_loss
            ),
        }
    });

    all &= run(6, "sweep shape", Duration::from_secs(1200), || {
        let dirs = localize::default_sweep_directions();
        let table =
            localize::sweep(&model, &dirs, &[20.0, 10.0, 0.0], 5, &OptimizerConfig::default(), scene.seed).unwrap();
        let mean: Vec<f64> = table.rows.iter().map(|r| r.mean_err_deg).collect();
        let increasing = mean.windows(2).all(|w| w[1] > w[0]);
        let frac = table.rows[0].frac_lt_5 > table.rows[2].frac_lt_5;
        Outcome {
            passed: increasing && frac,
            detail: format!(
                "mean error {:.1}/{:.1}/{:.1} deg at 20/10/0 dB, frac<5 deg {:.3} vs {:.3}",
                mean[0], mean[1], mean[2], table.rows[0].frac_lt_5, table.rows[2].frac_lt_5
            ),
        }
    });

    all &= run(7, "beamforming identities", Duration::from_secs(120), || {
        let (hl, hr) = model.transfer(2.1293, 1.0996);
        let mut gain: f64 = 0.0;
        let mut wng: f64 = 0.0;
        for (i, &f) in model.freqs().iter().enumerate() {
            let h = [hl[i], hr[i]];
            let w = beamform::matched_weights(&SteeringVector { f, h }).unwrap();
            gain = gain.max((beamform::response(&w, &h).norm() - 1.0).abs());
            wng = wng.max((beamform::wng(&w) - 10.0 * (h[0].norm_sqr() + h[1].norm_sqr()).log10()).abs());
        }
        let look = (2.1293, 1.0996);
        let coarse = beamform::band_metrics(&model, look, &beamform::make_grid(162).unwrap()).unwrap();
        let fine = beamform::band_metrics(&model, look, &beamform::make_grid(642).unwrap()).unwrap();
        let di = coarse.iter().zip(&fine).map(|(a, b)| (a.di_db - b.di_db).abs()).fold(0.0, f64::max);
        Outcome {
            passed: gain < 1e-14 && wng < 1e-12 && di < 0.05,
            detail: format!("| |w^H h0| - 1 | {gain:.1e}, WNG identity {wng:.1e}, DI 162 vs 642 {di:.4} dB"),
        }
    });

    all &= run(8, "tracking", Duration::from_secs(300), || {
        let truth = track::linear_trajectory((110.0, 50.0), (140.0, 110.0), 60);
        let cfg = TrackerConfig::default();
        let a = track::run_tracker(&model, &truth, &cfg).unwrap();
        let b = track::run_tracker(&model, &truth, &cfg).unwrap();
        let psd = a
            .states
            .iter()
            .all(|s| s.p == s.p.transpose() && s.p.symmetric_eigenvalues().iter().all(|e| *e >= -1e-10));
        let median = a.median_error(20).unwrap();
        Outcome {
            passed: median < 2.0 && psd && a == b,
            detail: format!(
                "median error over steps 20-59 {median:.2} deg, covariance PSD {psd}, deterministic {}",
                a == b
            ),
        }
    });

    all &= run(9, "special functions", Duration::from_secs(5), || suite_outcome(&validation::specfun_suite()));

    println!("acceptance: {}", if all { "all criteria pass" } else { "some criteria fail" });
    if !all && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
