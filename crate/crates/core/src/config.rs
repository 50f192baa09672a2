//! JSON run configuration.
//!
//! A config is a flat JSON object. Missing keys take their defaults; unknown
//! keys are rejected.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{MotionMode, RunSchedule};
use crate::error::{invalid, Result};
use crate::model::{validate_params, InitialConditionSpec, SystemParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub nu: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub rho: f64,
    pub a2: f64,
    pub delta20: f64,
    pub delta21: f64,
    pub n_atoms: usize,

    pub theta_span: f64,
    pub p_mean: f64,
    pub p_sigma: f64,
    /// `[re, im]`
    pub a1_0: [f64; 2],
    pub seed: u64,

    pub dtau: f64,
    pub tau_end: f64,
    pub record_stride: usize,
    pub snapshot_times: Vec<f64>,
    pub motion: MotionMode,

    /// Trap centre in `theta` units for the secular decomposition.
    pub trap_center: f64,
    /// Snapshot time fed to the analytic predictor; defaults to the end of
    /// the run.
    pub predictor_tau: Option<f64>,
    /// Sideband truncation override; defaults to the amplitude rule.
    pub n_max: Option<usize>,
    pub out_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_parts(
            &SystemParams::default(),
            &InitialConditionSpec::default(),
            &RunSchedule::default(),
            MotionMode::Full,
        )
    }
}

impl RunConfig {
    pub fn from_parts(
        params: &SystemParams,
        ic: &InitialConditionSpec,
        schedule: &RunSchedule,
        motion: MotionMode,
    ) -> Self {
        RunConfig {
            nu: params.nu,
            gamma: params.gamma,
            kappa: params.kappa,
            rho: params.rho,
            a2: params.a2,
            delta20: params.delta20,
            delta21: params.delta21,
            n_atoms: params.n_atoms,
            theta_span: ic.theta_span,
            p_mean: ic.p_mean,
            p_sigma: ic.p_sigma,
            a1_0: [ic.a1_0.re, ic.a1_0.im],
            seed: ic.seed,
            dtau: schedule.dtau,
            tau_end: schedule.tau_end,
            record_stride: schedule.record_stride,
            snapshot_times: schedule.snapshot_times.clone(),
            motion,
            trap_center: 0.0,
            predictor_tau: None,
            n_max: None,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn params(&self) -> SystemParams {
        SystemParams {
            nu: self.nu,
            gamma: self.gamma,
            kappa: self.kappa,
            rho: self.rho,
            a2: self.a2,
            delta20: self.delta20,
            delta21: self.delta21,
            n_atoms: self.n_atoms,
        }
    }

    pub fn initial_conditions(&self) -> InitialConditionSpec {
        InitialConditionSpec {
            theta_span: self.theta_span,
            p_mean: self.p_mean,
            p_sigma: self.p_sigma,
            a1_0: self.a1_0(),
            seed: self.seed,
        }
    }

    pub fn schedule(&self) -> RunSchedule {
        RunSchedule {
            dtau: self.dtau,
            tau_end: self.tau_end,
            record_stride: self.record_stride,
            snapshot_times: self.snapshot_times.clone(),
        }
    }

    pub fn a1_0(&self) -> C64 {
        C64::new(self.a1_0[0], self.a1_0[1])
    }

    /// Full validation; returns the advisory warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        let warnings = validate_params(&self.params()).into_result()?;
        self.initial_conditions().validate()?;
        self.schedule().validate()?;
        if !self.trap_center.is_finite() {
            return Err(invalid("trap_center must be finite"));
        }
        if let Some(t) = self.predictor_tau {
            if !(t >= 0.0 && t <= self.tau_end) {
                return Err(invalid("predictor_tau must lie in [0, tau_end]"));
            }
        }
        if self.n_max == Some(0) {
            return Err(invalid("n_max must be at least 1"));
        }
        Ok(warnings)
    }

    /// SHA-256 over the canonical JSON encoding, ignoring `out_dir`.
    pub fn digest(&self) -> String {
        let canonical = RunConfig {
            out_dir: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
