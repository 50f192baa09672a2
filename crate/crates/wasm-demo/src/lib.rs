//! Browser bindings: a gain spectrum sweep, a single run with its final
//! phase-space snapshot, and Raman comb analysis of a spectrum.
//!
//! The `*_impl` functions hold the logic and are plain Rust so they can be
//! tested natively.

use carl_core::analytics::predictor_report;
use carl_core::config::RunConfig;
use carl_core::dynamics::{integrate, MotionMode};
use carl_core::model::{init_ensemble, theta_to_position_mod1};
use carl_core::sweep::{compare_comb, run_sweep, CombThresholds, SeedPolicy, Spectrum, SweepSpec};
use wasm_bindgen::prelude::*;

/// Small runs only: the page is single-threaded.
pub const MAX_ATOMS: usize = 2000;

fn base_config(n_atoms: usize, tau_end: f64, nu: f64, seed: u64) -> Result<RunConfig, String> {
    if n_atoms == 0 || n_atoms > MAX_ATOMS {
        return Err(format!("n_atoms must be in 1..={MAX_ATOMS}"));
    }
    Ok(RunConfig {
        n_atoms,
        tau_end,
        nu,
        seed,
        ..Default::default()
    })
}

#[allow(clippy::too_many_arguments)]
pub fn gain_spectrum_impl(
    n_atoms: usize,
    tau_end: f64,
    nu: f64,
    motionless: bool,
    delta21_min: f64,
    delta21_max: f64,
    points: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let mut cfg = base_config(n_atoms, tau_end, nu, seed)?;
    if motionless {
        cfg.motion = MotionMode::Motionless;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let spec = SweepSpec {
        delta21_min,
        delta21_max,
        n_points: points,
        base_config: cfg,
        seed_policy: SeedPolicy::Shared,
    };
    let spectrum = run_sweep(&spec, 1).map_err(|e| e.to_string())?;
    Ok(spectrum.gain)
}

/// Gain `G(Delta21)` on the uniform grid `min + i (max - min) / (points - 1)`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn gain_spectrum(
    n_atoms: usize,
    tau_end: f64,
    nu: f64,
    motionless: bool,
    delta21_min: f64,
    delta21_max: f64,
    points: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    gain_spectrum_impl(n_atoms, tau_end, nu, motionless, delta21_min, delta21_max, points, seed)
        .map_err(|e| JsError::new(&e))
}

/// Time series and final snapshot of one run.
#[wasm_bindgen]
pub struct RunView {
    times: Vec<f64>,
    intensity: Vec<f64>,
    order: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    report: String,
}

#[wasm_bindgen]
impl RunView {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    /// `|A1|^2` at each sample.
    pub fn intensity(&self) -> Vec<f64> {
        self.intensity.clone()
    }

    /// Order parameter magnitude `R` at each sample.
    pub fn order(&self) -> Vec<f64> {
        self.order.clone()
    }

    /// Final positions as `z / lambda mod 1`.
    pub fn z(&self) -> Vec<f64> {
        self.z.clone()
    }

    pub fn p(&self) -> Vec<f64> {
        self.p.clone()
    }

    /// Analytic predictor report as JSON; empty without a trap.
    pub fn report(&self) -> String {
        self.report.clone()
    }
}

pub fn simulate_impl(
    n_atoms: usize,
    tau_end: f64,
    nu: f64,
    delta21: f64,
    seed: u64,
) -> Result<RunView, String> {
    let mut cfg = base_config(n_atoms, tau_end, nu, seed)?;
    cfg.delta21 = delta21;
    cfg.record_stride = ((tau_end / cfg.dtau / 2000.0).ceil() as usize).max(1);
    cfg.validate().map_err(|e| e.to_string())?;
    let params = cfg.params();
    let init = init_ensemble(&cfg.initial_conditions(), &params).map_err(|e| e.to_string())?;
    let traj = integrate(&init, &params, &cfg.schedule(), cfg.motion).map_err(|e| e.to_string())?;
    if traj.diverged {
        return Err(traj.failure.unwrap_or_else(|| "diverged".into()));
    }
    let last = &traj.final_state;
    let report = if nu > 0.0 {
        let r = predictor_report(last, &params, cfg.a1_0(), cfg.trap_center, cfg.n_max)
            .map_err(|e| e.to_string())?;
        serde_json::to_string_pretty(&r).map_err(|e| e.to_string())?
    } else {
        String::new()
    };
    Ok(RunView {
        intensity: traj.probe_intensity(),
        times: traj.times,
        order: traj.r_series,
        z: last.theta.iter().map(|&t| theta_to_position_mod1(t)).collect(),
        p: last.p.clone(),
        report,
    })
}

#[wasm_bindgen]
pub fn simulate(
    n_atoms: usize,
    tau_end: f64,
    nu: f64,
    delta21: f64,
    seed: u64,
) -> Result<RunView, JsError> {
    simulate_impl(n_atoms, tau_end, nu, delta21, seed).map_err(|e| JsError::new(&e))
}

pub fn comb_report_impl(delta21: Vec<f64>, gain: Vec<f64>, nu: f64) -> Result<String, String> {
    let spectrum = Spectrum::new(delta21, gain).map_err(|e| e.to_string())?;
    let report =
        compare_comb(&spectrum, nu, &CombThresholds::default()).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// Raman comb comparison of a spectrum, as JSON.
#[wasm_bindgen]
pub fn comb_report(delta21: Vec<f64>, gain: Vec<f64>, nu: f64) -> Result<String, JsError> {
    comb_report_impl(delta21, gain, nu).map_err(|e| JsError::new(&e))
}
