//! Built-in invariant checks at small N.
//!
//! Everything here is seeded and hermetic; the full suite runs in well under
//! a minute on one core.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::analytics::{jacobi_anger_residual, n_max_rule, resonance_kernel};
use crate::config::RunConfig;
use crate::dynamics::{integrate, reconstruct_probe, rhs_into, MotionMode, Rk4, VectorField};
use crate::error::Result;
use crate::model::{init_ensemble, unit_open_right, EnsembleState, SystemParams};

pub const BLOCH_TOLERANCE: f64 = 1e-6;
/// RK4 damps the fast Rabi precession by `O((h w)^6)` per step; at the
/// default parameters `h = 0.005` leaves a drift near `5e-5` over `tau = 50`,
/// so the conservation check runs at a quarter of that step.
pub const BLOCH_DTAU: f64 = 0.00125;
pub const RK4_RATIO_RANGE: (f64, f64) = (12.0, 20.0);
pub const ORACLE_TOLERANCE: f64 = 1e-3;
pub const JACOBI_ANGER_TOLERANCE: f64 = 1e-8;
pub const KERNEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Measured value against its threshold, human readable.
    pub detail: String,
    pub elapsed_s: f64,
}

/// Ensemble with random positions, momenta and Bloch vectors on the surface
/// `|sigma|^2 + sigma_z^2 / 4 = 1/4`.
pub fn random_bloch_ensemble(n: usize, seed: u64) -> EnsembleState {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut state = EnsembleState {
        tau: 0.0,
        theta: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        sigma_z: Vec::with_capacity(n),
        a1: C64::new(0.05, 0.02),
    };
    for _ in 0..n {
        state.theta.push(4.0 * PI * unit_open_right(&mut rng));
        state.p.push(2.0 * unit_open_right(&mut rng) - 1.0);
        // uniform on the sphere: cos(polar) uniform in [-1, 1)
        let cz = 2.0 * unit_open_right(&mut rng) - 1.0;
        let az = 2.0 * PI * unit_open_right(&mut rng);
        let sz = (1.0 - cz * cz).sqrt();
        state.sigma.push(C64::from_polar(0.5 * sz, az));
        state.sigma_z.push(cz);
    }
    state
}

/// Largest per-atom drift of `|sigma|^2 + sigma_z^2 / 4` over a lossless run
/// driven by `field`.
pub fn bloch_drift(field: VectorField, n_atoms: usize, tau_end: f64, dtau: f64, seed: u64) -> Result<f64> {
    let params = SystemParams {
        gamma: 0.0,
        n_atoms,
        ..Default::default()
    };
    let mut state = random_bloch_ensemble(n_atoms, seed);
    let norm = |s: &EnsembleState, j: usize| s.sigma[j].norm_sqr() + 0.25 * s.sigma_z[j] * s.sigma_z[j];
    let start: Vec<f64> = (0..n_atoms).map(|j| norm(&state, j)).collect();
    let mut rk = Rk4::with_field(n_atoms, field);
    let steps = (tau_end / dtau).round() as usize;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        rk.step(&mut state, &params, dtau, MotionMode::Full)?;
        for (j, s0) in start.iter().enumerate() {
            worst = worst.max((norm(&state, j) - s0).abs());
        }
    }
    Ok(worst)
}

fn harmonic_error(dtau: f64) -> Result<f64> {
    let params = SystemParams {
        a2: 0.0,
        n_atoms: 1,
        ..Default::default()
    };
    let mut state = EnsembleState {
        tau: 0.0,
        theta: vec![1.0],
        p: vec![0.0],
        sigma: vec![C64::new(0.0, 0.0)],
        sigma_z: vec![1.0],
        a1: C64::new(0.0, 0.0),
    };
    let steps = (FRAC_PI_2 / dtau).round() as usize;
    let h = FRAC_PI_2 / steps as f64;
    let mut rk = Rk4::new(1);
    for _ in 0..steps {
        rk.step(&mut state, &params, h, MotionMode::Full)?;
    }
    let nu = params.nu;
    let t = steps as f64 * h;
    let (s, c) = (nu * t).sin_cos();
    Ok((state.theta[0] - c).hypot((state.p[0] + nu * s) / nu))
}

/// Phase-space error ratio `e(h) / e(h/2)` for a decoupled trapped atom;
/// 16 for a fourth-order scheme.
pub fn rk4_order_ratio(h: f64) -> Result<f64> {
    Ok(harmonic_error(h)? / harmonic_error(h / 2.0)?)
}

/// `max |A1_direct - A1_quadrature| / max |A1_direct|` for a run sampled
/// at every `stride` steps.
pub fn oracle_mismatch(cfg: &RunConfig) -> Result<f64> {
    let params = cfg.params();
    let init = init_ensemble(&cfg.initial_conditions(), &params)?;
    let traj = integrate(&init, &params, &cfg.schedule(), cfg.motion)?;
    let rebuilt = reconstruct_probe(&traj.c_series, &traj.times, cfg.a1_0(), &params)?;
    let scale = traj.a1_series.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let diff = traj
        .a1_series
        .iter()
        .zip(&rebuilt)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(diff / scale)
}

/// Worst Jacobi-Anger residual over the given amplitudes, each truncated by
/// the amplitude rule.
pub fn jacobi_anger_worst(amplitudes: &[f64], nu: f64) -> Result<f64> {
    let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.037).collect();
    let mut worst = 0.0f64;
    for &a in amplitudes {
        let r = jacobi_anger_residual(a, 0.3, nu, n_max_rule(a), &times)?;
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Relative error of the kernel at zero detuning against `(e^{kappa tau} - 1) / kappa`.
pub fn kernel_limit_error(kappa: f64, tau: f64) -> f64 {
    let exact = (kappa * tau).exp_m1() / kappa;
    let k = resonance_kernel(kappa, 0.0, tau);
    (k - C64::new(exact, 0.0)).norm() / exact
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name,
        passed,
        detail,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

pub fn check_bloch(field: VectorField) -> CheckResult {
    timed("bloch conservation", || {
        let drift = bloch_drift(field, 16, 50.0, BLOCH_DTAU, 7)?;
        Ok((drift < BLOCH_TOLERANCE, format!("max drift {drift:.3e} < {BLOCH_TOLERANCE:e}")))
    })
}

pub fn check_rk4_order() -> CheckResult {
    timed("rk4 order", || {
        let r = rk4_order_ratio(0.1)?;
        let (lo, hi) = RK4_RATIO_RANGE;
        Ok(((lo..=hi).contains(&r), format!("error ratio {r:.3} in [{lo}, {hi}]")))
    })
}

pub fn check_oracle() -> CheckResult {
    timed("probe quadrature oracle", || {
        let cfg = RunConfig {
            n_atoms: 32,
            tau_end: 20.0,
            record_stride: 1,
            ..Default::default()
        };
        let m = oracle_mismatch(&cfg)?;
        Ok((m < ORACLE_TOLERANCE, format!("relative mismatch {m:.3e} < {ORACLE_TOLERANCE:e}")))
    })
}

pub fn check_jacobi_anger() -> CheckResult {
    timed("jacobi-anger truncation", || {
        let r = jacobi_anger_worst(&[0.5, 2.0, 10.0], 2.0)?;
        Ok((
            r < JACOBI_ANGER_TOLERANCE,
            format!("worst residual {r:.3e} < {JACOBI_ANGER_TOLERANCE:e}"),
        ))
    })
}

pub fn check_kernel_limit() -> CheckResult {
    timed("resonance kernel limit", || {
        let e = kernel_limit_error(0.01, 100.0);
        Ok((e < KERNEL_TOLERANCE, format!("relative error {e:.3e} < {KERNEL_TOLERANCE:e}")))
    })
}

/// Runs every check with `field` standing in for the equations of motion in
/// the conservation test.
pub fn run_with_field(field: VectorField) -> Vec<CheckResult> {
    vec![
        check_bloch(field),
        check_rk4_order(),
        check_oracle(),
        check_jacobi_anger(),
        check_kernel_limit(),
    ]
}

pub fn run_all() -> Vec<CheckResult> {
    run_with_field(rhs_into)
}

/// One line per check.
pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    results
        .iter()
        .map(|r| {
            format!(
                "{:<4}  {:<width$}  {}  ({:.2} s)\n",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.detail,
                r.elapsed_s
            )
        })
        .collect()
}
