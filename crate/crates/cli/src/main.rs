//! Command-line front end: cue spectra, localization, SNR sweeps,
//! beamforming metrics, tracking and self-validation.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use multisphere::beamform;
use multisphere::config::{
    BeamformSection, ConfigError, ConfigFile, LocalizeSection, SceneConfig, SweepSection, TrackSection,
};
use multisphere::field::{self, CueModel};
use multisphere::localize::{self, ObservedCues, OptimizerConfig};
use multisphere::track::{self, TrackerConfig};
use multisphere::validation;
use serde_json::json;

use output::{emit, sig9, Csv};

#[derive(Parser)]
#[command(name = "multisphere", version, about = "Scattering, binaural cues, localization, beamforming and tracking")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML configuration; the built-in default scene when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// HRTF, ILD and ITD spectra for one source direction.
    Cues {
        /// Source direction in degrees, `theta,phi`.
        #[arg(long, value_parser = pair)]
        source: (f64, f64),
    },
    /// Gradient localization of a noiseless source; writes JSON.
    Localize {
        /// Single start in radians, `theta,phi`; multi-start when omitted.
        #[arg(long, value_parser = pair)]
        init: Option<(f64, f64)>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Localization error statistics over directions and SNRs.
    Sweep {
        /// Comma-separated SNRs in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Matched-filter WNG and directivity across the band.
    Beamform {
        /// Look direction in radians, `theta,phi`.
        #[arg(long, value_parser = pair)]
        look: Option<(f64, f64)>,
        /// Direction grid size (icosphere count).
        #[arg(long)]
        grid: Option<usize>,
    },
    /// EKF tracking along a linear trajectory.
    Track {
        #[arg(long)]
        steps: Option<usize>,
        /// ILD noise in dB.
        #[arg(long)]
        sigma_ild: Option<f64>,
        /// ITD noise in microseconds.
        #[arg(long)]
        sigma_itd: Option<f64>,
    },
    /// Special-function, translation, boundary and gradient checks.
    Validate,
}

fn pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got `{s}`"));
    }
    let a = parts[0].parse::<f64>().map_err(|e| format!("`{}`: {e}", parts[0]))?;
    let b = parts[1].parse::<f64>().map_err(|e| format!("`{}`: {e}", parts[1]))?;
    Ok((a, b))
}

fn load(shared: &Shared) -> Result<ConfigFile, ConfigError> {
    let mut file = match &shared.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::from_scene(&SceneConfig::default()),
    };
    if let Some(s) = shared.seed {
        file.seed = s;
    }
    Ok(file)
}

fn default_localize() -> LocalizeSection {
    LocalizeSection { truth_rad: [2.13, 1.10], init_rad: None, learning_rate: 0.02, max_iters: 100, patience: 30 }
}

fn default_sweep() -> SweepSection {
    SweepSection { snr_db: vec![20.0, 10.0, 0.0], trials: 5, max_iters: 100, learning_rate: 0.02 }
}

fn default_beamform() -> BeamformSection {
    BeamformSection { look_rad: [2.1293, 1.0996], grid: 162 }
}

fn default_track() -> TrackSection {
    TrackSection {
        steps: 60,
        start_deg: [110.0, 50.0],
        end_deg: [140.0, 110.0],
        init_rad: [2.2, 2.6],
        sigma_ild_db: 0.5,
        sigma_itd_us: 10.0,
        sigma_acc: 0.03,
        dt: 1.0,
    }
}

fn cmd_cues(scene: &SceneConfig, source_deg: (f64, f64), out: Option<&Path>) -> Result<()> {
    let c = field::cue_spectrum(scene, source_deg.0.to_radians(), source_deg.1.to_radians())?;
    let mut csv = Csv::new(&["f_hz", "ild_db", "itd_s", "hl_re", "hl_im", "hr_re", "hr_im"]);
    for i in 0..c.freqs.len() {
        csv.row([
            sig9(c.freqs[i]),
            sig9(c.ild[i]),
            sig9(c.itd[i]),
            sig9(c.h_left[i].re),
            sig9(c.h_left[i].im),
            sig9(c.h_right[i].re),
            sig9(c.h_right[i].im),
        ]);
    }
    emit(out, &csv.into_string())
}

fn cmd_localize(
    scene: &SceneConfig,
    section: &LocalizeSection,
    init: Option<(f64, f64)>,
    lr: Option<f64>,
    iters: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let model = CueModel::new(scene)?;
    let truth = (section.truth_rad[0], section.truth_rad[1]);
    let obs = ObservedCues::from_spectrum(&model.cues(truth.0, truth.1)?)?;
    let mut cfg = OptimizerConfig {
        learning_rate: lr.unwrap_or(section.learning_rate),
        max_iters: iters.unwrap_or(section.max_iters),
        patience: section.patience,
        ..OptimizerConfig::default()
    };
    cfg.patience = cfg.patience.min(cfg.max_iters);
    if let Some(s) = init.or(section.init_rad.map(|a| (a[0], a[1]))) {
        cfg.starts = vec![s];
    }
    let r = localize::localize(&obs, &model, &cfg)?.with_truth(truth);
    let doc = json!({
        "truth_rad": [truth.0, truth.1],
        "estimate_rad": [r.theta_hat, r.phi_hat],
        "angular_error_deg": r.angular_error,
        "final_loss": r.final_loss,
        "iterations": r.iterations,
        "converged": r.converged,
        "start_index": r.start,
        "starts_rad": cfg.starts,
        "learning_rate": cfg.learning_rate,
        "trajectory": r.trajectory,
    });
    emit(out, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn cmd_sweep(scene: &SceneConfig, section: &SweepSection, out: Option<&Path>) -> Result<()> {
    if section.trials == 0 || section.snr_db.is_empty() {
        bail!("sweep needs at least one SNR and one trial");
    }
    let model = CueModel::new(scene)?;
    let cfg = OptimizerConfig {
        learning_rate: section.learning_rate,
        max_iters: section.max_iters,
        patience: OptimizerConfig::default().patience.min(section.max_iters),
        ..OptimizerConfig::default()
    };
    let dirs = localize::default_sweep_directions();
    let table = localize::sweep(&model, &dirs, &section.snr_db, section.trials, &cfg, scene.seed)?;
    let mut csv = Csv::new(&["snr_db", "mean_err_deg", "median_err_deg", "frac_lt_5", "frac_lt_10"]);
    for r in &table.rows {
        csv.row([sig9(r.snr_db), sig9(r.mean_err_deg), sig9(r.median_err_deg), sig9(r.frac_lt_5), sig9(r.frac_lt_10)]);
    }
    emit(out, &csv.into_string())
}

fn cmd_beamform(scene: &SceneConfig, section: &BeamformSection, out: Option<&Path>) -> Result<()> {
    let model = CueModel::new(scene)?;
    let grid = beamform::make_grid(section.grid)?;
    let rows = beamform::band_metrics(&model, (section.look_rad[0], section.look_rad[1]), &grid)?;
    let mut csv = Csv::new(&["f_hz", "wng_db", "df", "di_db"]);
    for r in &rows {
        csv.row([sig9(r.f_hz), sig9(r.wng_db), sig9(r.df), sig9(r.di_db)]);
    }
    emit(out, &csv.into_string())
}

fn cmd_track(scene: &SceneConfig, section: &TrackSection, out: Option<&Path>) -> Result<()> {
    let model = CueModel::new(scene)?;
    let truth = track::linear_trajectory(
        (section.start_deg[0], section.start_deg[1]),
        (section.end_deg[0], section.end_deg[1]),
        section.steps,
    );
    let cfg = TrackerConfig {
        sigma_ild_db: section.sigma_ild_db,
        sigma_itd_s: section.sigma_itd_us * 1e-6,
        sigma_acc: section.sigma_acc,
        dt: section.dt,
        init: (section.init_rad[0], section.init_rad[1]),
        seed: scene.seed,
        ..TrackerConfig::default()
    };
    let run = track::run_tracker(&model, &truth, &cfg)?;
    let mut csv = Csv::new(&["t", "theta_true", "phi_true", "theta_hat", "phi_hat", "err_deg", "p_trace"]);
    for s in &run.steps {
        csv.row([
            s.t.to_string(),
            sig9(s.theta_true),
            sig9(s.phi_true),
            sig9(s.theta_hat),
            sig9(s.phi_hat),
            sig9(s.err_deg),
            sig9(s.p_trace),
        ]);
    }
    emit(out, &csv.into_string())
}

fn cmd_validate(scene: &SceneConfig, out: Option<&Path>) -> Result<bool> {
    let reports = validation::run_all(scene, scene.seed)?;
    let mut ok = true;
    for r in &reports {
        for c in &r.checks {
            eprintln!(
                "{} [{}] {}: {:.3e} (limit {:.1e})",
                if c.passed { "ok  " } else { "FAIL" },
                r.suite,
                c.name,
                c.worst,
                c.tolerance
            );
        }
        ok &= r.passed();
    }
    if out.is_some() {
        emit(out, &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.shared.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot configure the thread pool")?;
    }
    let file = match load(&cli.shared) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let scene = file.scene();
    let out = cli.shared.out.as_deref();
    match cli.command {
        Command::Cues { source } => cmd_cues(&scene, source, out)?,
        Command::Localize { init, lr, iters } => {
            let section = file.localize.clone().unwrap_or_else(default_localize);
            cmd_localize(&scene, &section, init, lr, iters, out)?
        }
        Command::Sweep { snr, trials } => {
            let mut section = file.sweep.clone().unwrap_or_else(default_sweep);
            if let Some(s) = snr {
                section.snr_db = s;
            }
            if let Some(t) = trials {
                section.trials = t;
            }
            cmd_sweep(&scene, &section, out)?
        }
        Command::Beamform { look, grid } => {
            let mut section = file.beamform.clone().unwrap_or_else(default_beamform);
            if let Some(l) = look {
                section.look_rad = [l.0, l.1];
            }
            if let Some(g) = grid {
                section.grid = g;
            }
            cmd_beamform(&scene, &section, out)?
        }
        Command::Track { steps, sigma_ild, sigma_itd } => {
            let mut section = file.track.clone().unwrap_or_else(default_track);
            section.steps = steps.unwrap_or(section.steps);
            section.sigma_ild_db = sigma_ild.unwrap_or(section.sigma_ild_db);
            section.sigma_itd_us = sigma_itd.unwrap_or(section.sigma_itd_us);
            cmd_track(&scene, &section, out)?
        }
        Command::Validate => {
            if !cmd_validate(&scene, out)? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
