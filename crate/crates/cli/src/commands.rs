use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use carl_core::analytics::predictor_report;
use carl_core::config::RunConfig;
use carl_core::diagnostics::gain;
use carl_core::dynamics::{integrate, Trajectory};
use carl_core::error::CarlError;
use carl_core::io::{
    json_with_digest, peaks_csv, read_snapshot_csv, read_spectrum_csv, snapshot_csv,
    snapshot_file_name, spectrum_csv, trajectory_csv, SweepManifest,
};
use carl_core::model::{init_ensemble, theta_to_position_mod1};
use carl_core::plot::{render, Figure};
use carl_core::selftest;
use carl_core::sweep::{compare_comb, run_sweep, CombThresholds, SeedPolicy, Spectrum, SweepSpec};

use crate::RunArgs;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid input; exit 2.
    Config(String),
    /// The integration blew up; outputs were still written. Exit 3.
    Diverged(String),
    /// Anything else, including failed self-tests; exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Diverged(m) => write!(f, "diverged: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

type CliResult<T = ()> = Result<T, CliError>;

fn load_config(args: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| {
                config_err(format!(
                    "{}: line {}, column {}: {e}",
                    path.display(),
                    e.line(),
                    e.column()
                ))
            })?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.n_atoms {
        cfg.n_atoms = v;
    }
    if let Some(v) = args.tau_end {
        cfg.tau_end = v;
    }
    if let Some(v) = args.delta21 {
        cfg.delta21 = v;
    }
    if let Some(v) = args.nu {
        cfg.nu = v;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = Some(dir.display().to_string());
    }
    for w in cfg.validate().map_err(config_err)? {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = PathBuf::from(cfg.out_dir.as_deref().unwrap_or("out"));
    fs::create_dir_all(&dir).map_err(|e| runtime_err(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

fn trajectory_plots(dir: &Path, traj: &Trajectory, digest: &str) -> CliResult {
    let intensity = traj.probe_intensity();
    let fig = Figure {
        log_y: true,
        ..Figure::line("probe intensity", "tau", "|A1|^2")
    };
    write(dir, "probe_intensity.svg", &render(&fig, &traj.times, &intensity, digest))?;
    let fig = Figure {
        y_range: Some((0.0, 1.0)),
        ..Figure::line("order parameter", "tau", "R")
    };
    write(dir, "order_parameter.svg", &render(&fig, &traj.times, &traj.r_series, digest))
}

pub fn simulate(args: &RunArgs) -> CliResult {
    let mut cfg = load_config(args)?;
    let digest = cfg.digest();
    let dir = out_dir(&cfg)?;

    let mut snaps = if cfg.snapshot_times.is_empty() {
        vec![0.0, cfg.tau_end]
    } else {
        cfg.snapshot_times.clone()
    };
    if let Some(t) = cfg.predictor_tau {
        snaps.push(t);
    }
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();
    cfg.snapshot_times = snaps;

    let params = cfg.params();
    let init = init_ensemble(&cfg.initial_conditions(), &params).map_err(config_err)?;
    let traj = integrate(&init, &params, &cfg.schedule(), cfg.motion).map_err(config_err)?;

    write(&dir, "trajectory.csv", &trajectory_csv(&traj, &digest))?;
    trajectory_plots(&dir, &traj, &digest)?;
    for (k, snap) in traj.snapshots.iter().enumerate() {
        write(&dir, &snapshot_file_name(k), &snapshot_csv(snap, &digest))?;
        let z: Vec<f64> = snap.state.theta.iter().map(|&t| theta_to_position_mod1(t)).collect();
        let title = format!("phase space at tau = {}", snap.tau);
        let fig = Figure {
            x_range: Some((0.0, 1.0)),
            ..Figure::scatter(&title, "z / lambda (mod 1)", "p")
        };
        write(&dir, &format!("phase_space_{k:03}.svg"), &render(&fig, &z, &snap.state.p, &digest))?;
    }

    let final_state = &traj.final_state;
    if traj.diverged {
        return Err(CliError::Diverged(
            traj.failure.clone().unwrap_or_else(|| "unknown".into()),
        ));
    }

    let source = match cfg.predictor_tau {
        Some(t) => traj
            .snapshots
            .iter()
            .min_by(|a, b| (a.tau - t).abs().total_cmp(&(b.tau - t).abs()))
            .map(|s| &s.state)
            .unwrap_or(final_state),
        None => final_state,
    };
    if cfg.nu > 0.0 {
        let report = predictor_report(source, &params, cfg.a1_0(), cfg.trap_center, cfg.n_max)
            .map_err(runtime_err)?;
        write(&dir, "predictor_report.json", &json_with_digest(&report, &digest))?;
    } else {
        eprintln!("note: nu = 0, no trap oscillation to expand; predictor report skipped");
    }

    let g = gain(final_state.a1, cfg.a1_0()).map_err(runtime_err)?;
    let last = traj.len() - 1;
    println!(
        "tau = {}  gain = {g:.6e}  |A1|^2 = {:.6e}  R = {:.4}  ({} samples, {} snapshots) -> {}",
        final_state.tau,
        final_state.a1.norm_sqr(),
        traj.r_series[last],
        traj.len(),
        traj.snapshots.len(),
        dir.display()
    );
    Ok(())
}

pub struct GridArgs {
    pub delta21_min: f64,
    pub delta21_max: f64,
    pub points: usize,
    pub workers: Option<usize>,
    pub per_point_seeds: bool,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn spectrum_plot(spectrum: &Spectrum, digest: &str) -> String {
    let fig = Figure::line("gain spectrum", "Delta21", "G");
    render(&fig, &spectrum.delta21, &spectrum.gain, digest)
}

pub fn sweep(args: &RunArgs, grid: GridArgs) -> CliResult {
    let cfg = load_config(args)?;
    let digest = cfg.digest();
    let spec = SweepSpec {
        delta21_min: grid.delta21_min,
        delta21_max: grid.delta21_max,
        n_points: grid.points,
        seed_policy: if grid.per_point_seeds {
            SeedPolicy::PerPoint(cfg.seed)
        } else {
            SeedPolicy::Shared
        },
        base_config: cfg,
    };
    spec.validate().map_err(config_err)?;
    let workers = grid.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(config_err("--workers must be at least 1"));
    }
    let dir = out_dir(&spec.base_config)?;

    let spectrum = run_sweep(&spec, workers).map_err(runtime_err)?;
    write(&dir, "spectrum.csv", &spectrum_csv(&spectrum, &digest))?;
    write(&dir, "spectrum.svg", &spectrum_plot(&spectrum, &digest))?;
    let manifest = SweepManifest::new(&spec, &spectrum, workers);
    write(&dir, "manifest.json", &json_with_digest(&manifest, &digest))?;

    let nu = spec.base_config.nu;
    let peaks = spectrum.peaks(0.0).map_err(runtime_err)?;
    write(&dir, "peaks.csv", &peaks_csv(&peaks, nu, &digest))?;
    if nu > 0.0 {
        let report = compare_comb(&spectrum, nu, &CombThresholds::default()).map_err(runtime_err)?;
        write(&dir, "comb_report.json", &json_with_digest(&report, &digest))?;
        println!("{}", report.summary);
    } else {
        eprintln!("note: nu = 0, comb report skipped");
    }
    if let Some((d, g)) = spectrum.max_gain() {
        println!(
            "{} points, max gain {g:.6e} at Delta21 = {d}, {:.1} s on {workers} worker(s) -> {}",
            spectrum.len(),
            spectrum.meta.wall_time_s,
            dir.display()
        );
    }
    let diverged = manifest.diverged_points.len();
    if diverged > 0 {
        return Err(CliError::Diverged(format!("{diverged} grid point(s) diverged")));
    }
    Ok(())
}

pub fn predict(args: &RunArgs, snapshot: &Path) -> CliResult {
    let cfg = load_config(args)?;
    let text = fs::read_to_string(snapshot)
        .map_err(|e| config_err(format!("{}: {e}", snapshot.display())))?;
    let state = read_snapshot_csv(&text)
        .map_err(|e| config_err(format!("{}: {e}", snapshot.display())))?;
    let mut params = cfg.params();
    if state.len() != params.n_atoms {
        eprintln!(
            "note: snapshot holds {} atoms, config says {}; using the snapshot",
            state.len(),
            params.n_atoms
        );
        params.n_atoms = state.len();
    }
    let report = predictor_report(&state, &params, cfg.a1_0(), cfg.trap_center, cfg.n_max)
        .map_err(|e| match e {
            CarlError::OutOfRange(_) | CarlError::InvalidParameter(_) => config_err(e),
            other => runtime_err(other),
        })?;
    let json = json_with_digest(&report, &cfg.digest());
    match &cfg.out_dir {
        Some(_) => write(&out_dir(&cfg)?, "predictor_report.json", &json)?,
        None => print!("{json}"),
    }
    Ok(())
}

pub fn peaks(spectrum_path: &Path, nu: f64, min_height: f64, out: Option<&Path>) -> CliResult {
    let text = fs::read_to_string(spectrum_path)
        .map_err(|e| config_err(format!("{}: {e}", spectrum_path.display())))?;
    let spectrum = read_spectrum_csv(&text)
        .map_err(|e| config_err(format!("{}: {e}", spectrum_path.display())))?;
    let thresholds = CombThresholds {
        min_height,
        ..Default::default()
    };
    let report = compare_comb(&spectrum, nu, &thresholds).map_err(config_err)?;
    let found = spectrum.peaks(min_height).map_err(config_err)?;
    let digest = spectrum.meta.config_digest.clone();
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| runtime_err(format!("{}: {e}", dir.display())))?;
            write(dir, "peaks.csv", &peaks_csv(&found, nu, &digest))?;
            write(dir, "comb_report.json", &json_with_digest(&report, &digest))?;
        }
        None => print!("{}", peaks_csv(&found, nu, &digest)),
    }
    eprintln!("{}", report.summary);
    Ok(())
}

pub fn selftest() -> CliResult {
    let results = selftest::run_all();
    print!("{}", selftest::format_table(&results));
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(runtime_err(format!("{failed} self-test(s) failed")));
    }
    Ok(())
}
