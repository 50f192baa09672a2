//! Domain types, scaling to dimensionless units and initial conditions.
//!
//! All dynamical quantities are dimensionless:
//!
//! * `theta = 2 k <z>`: position on the pump/probe grating,
//! * `p = <p> / (hbar k rho)`,
//! * `sigma`: complex polarization in the pump frame,
//! * `sigma_z = -2 <sigma_z>`.
//!
//! Note the sign of `sigma_z`: the ground state is `sigma_z = +1`, the
//! inverse of the usual spin convention. The pure ground state sits on the
//! Bloch shell `|sigma|^2 + sigma_z^2 / 4 = 1/4`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CarlError, Result};

/// Dimensionless model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Trap frequency `nu_z / (omega_r rho)`.
    pub nu: f64,
    /// Polarization and population damping.
    pub gamma: f64,
    /// Probe-field (cavity) damping.
    pub kappa: f64,
    /// Collective CARL parameter.
    pub rho: f64,
    /// Real, undepleted pump amplitude.
    pub a2: f64,
    /// Pump-atom detuning.
    pub delta20: f64,
    /// Pump-probe detuning.
    pub delta21: f64,
    pub n_atoms: usize,
}

impl Default for SystemParams {
    /// The trapped parameter set used throughout: `nu = 2, Gamma = 1,
    /// kappa = 0.01, rho = 3, A2 = 2, Delta20 = -15`, probing the second
    /// Raman sideband `Delta21 = 2 nu`.
    fn default() -> Self {
        SystemParams {
            nu: 2.0,
            gamma: 1.0,
            kappa: 0.01,
            rho: 3.0,
            a2: 2.0,
            delta20: -15.0,
            delta21: 4.0,
            n_atoms: 200,
        }
    }
}

impl SystemParams {
    /// Pump Rabi frequency `Omega = 2 rho A2`.
    pub fn rabi_frequency(&self) -> f64 {
        2.0 * self.rho * self.a2
    }

    pub fn with_delta21(mut self, delta21: f64) -> Self {
        self.delta21 = delta21;
        self
    }
}

/// Laboratory constants, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Optical wavenumber (1/m).
    pub k: f64,
    /// Atomic mass (kg).
    pub m: f64,
    /// Atom-field coupling (rad/s).
    pub g: f64,
    pub n_atoms: f64,
    /// Axial trap frequency (rad/s).
    pub nu_z: f64,
    pub omega0: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub hbar: f64,
}

/// Result of [`nondimensionalize`]. Damping rates and the pump amplitude
/// are left at zero for the caller to fill in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub params: SystemParams,
    /// Two-photon recoil frequency `2 hbar k^2 / m` (rad/s).
    pub omega_r: f64,
}

pub fn nondimensionalize(phys: &PhysicalParams) -> Result<Scaled> {
    for (name, v) in [
        ("k", phys.k),
        ("m", phys.m),
        ("g", phys.g),
        ("n_atoms", phys.n_atoms),
        ("hbar", phys.hbar),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("{name} must be positive and finite")));
        }
    }
    if !(phys.nu_z.is_finite() && phys.nu_z >= 0.0) {
        return Err(invalid("nu_z must be non-negative and finite"));
    }
    if ![phys.omega0, phys.omega1, phys.omega2]
        .iter()
        .all(|w| w.is_finite())
    {
        return Err(invalid("optical frequencies must be finite"));
    }

    let omega_r = 2.0 * phys.hbar * phys.k * phys.k / phys.m;
    let rho = (phys.g * phys.n_atoms.sqrt() / omega_r).powf(2.0 / 3.0);
    let unit = omega_r * rho;
    let n_atoms = phys.n_atoms.round();
    if n_atoms < 1.0 {
        return Err(invalid("n_atoms must be at least 1"));
    }

    Ok(Scaled {
        params: SystemParams {
            nu: phys.nu_z / unit,
            gamma: 0.0,
            kappa: 0.0,
            rho,
            a2: 0.0,
            delta20: (phys.omega2 - phys.omega0) / unit,
            delta21: (phys.omega2 - phys.omega1) / unit,
            n_atoms: n_atoms as usize,
        },
        omega_r,
    })
}

/// Outcome of [`validate_params`]: hard errors plus advisory warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Validation {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn into_result(self) -> Result<Vec<String>> {
        if self.errors.is_empty() {
            Ok(self.warnings)
        } else {
            Err(CarlError::InvalidParameter(self.errors.join("; ")))
        }
    }
}

pub fn validate_params(params: &SystemParams) -> Validation {
    validate_params_with_probe(params, None)
}

/// Like [`validate_params`], additionally checking the harmonic-motion
/// condition `nu >= 2 rho |A1 A2| / |Delta20|` for an estimated probe
/// amplitude. The condition only ever produces a warning.
pub fn validate_params_with_probe(params: &SystemParams, a1_abs: Option<f64>) -> Validation {
    let mut v = Validation::default();
    let finite = [
        ("nu", params.nu),
        ("gamma", params.gamma),
        ("kappa", params.kappa),
        ("rho", params.rho),
        ("a2", params.a2),
        ("delta20", params.delta20),
        ("delta21", params.delta21),
    ];
    for (name, value) in finite {
        if !value.is_finite() {
            v.errors.push(format!("{name} must be finite"));
        }
    }
    if params.gamma < 0.0 {
        v.errors.push("gamma must be non-negative".into());
    }
    if params.kappa < 0.0 {
        v.errors.push("kappa must be non-negative".into());
    }
    if !(params.rho > 0.0) {
        v.errors.push("rho must be positive".into());
    }
    if params.nu < 0.0 {
        v.errors.push("nu must be non-negative".into());
    }
    if params.n_atoms == 0 {
        v.errors.push("n_atoms must be at least 1".into());
    }

    if let Some(a1) = a1_abs {
        let check = harmonic_condition(params, a1);
        let msg = format!(
            "harmonic-motion condition: 2 rho |A1 A2| / |Delta20| = {:.6} {} nu = {}",
            check.threshold,
            if check.holds { "<=" } else { ">" },
            params.nu
        );
        v.warnings.push(msg);
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicCheck {
    pub threshold: f64,
    pub holds: bool,
}

/// Trap strength needed for atoms to execute near-harmonic motion under the
/// optical potential, `2 rho |A1 A2| / |Delta20|`.
pub fn harmonic_condition(params: &SystemParams, a1_abs: f64) -> HarmonicCheck {
    let threshold = 2.0 * params.rho * (a1_abs * params.a2).abs() / params.delta20.abs();
    HarmonicCheck {
        threshold,
        holds: params.nu >= threshold,
    }
}

/// Position in optical wavelengths, `z / lambda = theta / (4 pi)`.
pub fn theta_to_position(theta: f64) -> f64 {
    theta / (4.0 * PI)
}

/// Wavelength-periodic coordinate in `[0, 1)`.
pub fn theta_to_position_mod1(theta: f64) -> f64 {
    let z = theta_to_position(theta).rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if z >= 1.0 {
        0.0
    } else {
        z
    }
}

/// Internal and external state of one atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub theta: f64,
    pub p: f64,
    pub sigma: C64,
    pub sigma_z: f64,
}

impl AtomState {
    /// `|sigma|^2 + sigma_z^2 / 4`; equals 1/4 on the pure-state shell.
    pub fn bloch_norm(&self) -> f64 {
        self.sigma.norm_sqr() + 0.25 * self.sigma_z * self.sigma_z
    }
}

/// Full system state, stored component-wise: `theta[j]`, `p[j]`,
/// `sigma[j]` and `sigma_z[j]` describe atom `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub tau: f64,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma: Vec<C64>,
    pub sigma_z: Vec<f64>,
    pub a1: C64,
}

impl EnsembleState {
    pub fn from_atoms(tau: f64, atoms: &[AtomState], a1: C64) -> Self {
        EnsembleState {
            tau,
            theta: atoms.iter().map(|a| a.theta).collect(),
            p: atoms.iter().map(|a| a.p).collect(),
            sigma: atoms.iter().map(|a| a.sigma).collect(),
            sigma_z: atoms.iter().map(|a| a.sigma_z).collect(),
            a1,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn atom(&self, j: usize) -> AtomState {
        AtomState {
            theta: self.theta[j],
            p: self.p[j],
            sigma: self.sigma[j],
            sigma_z: self.sigma_z[j],
        }
    }

    pub fn atoms(&self) -> impl Iterator<Item = AtomState> + '_ {
        (0..self.len()).map(move |j| self.atom(j))
    }

    /// Checks that every component array has the same length.
    pub fn check_layout(&self) -> Result<()> {
        let n = self.theta.len();
        for (what, len) in [
            ("p", self.p.len()),
            ("sigma", self.sigma.len()),
            ("sigma_z", self.sigma_z.len()),
        ] {
            if len != n {
                return Err(CarlError::LengthMismatch {
                    what,
                    left: n,
                    right: len,
                });
            }
        }
        Ok(())
    }
}

/// Preparation of the atomic cloud and probe seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionSpec {
    /// Width of the uniform position window; `4 pi` is one optical wavelength.
    pub theta_span: f64,
    pub p_mean: f64,
    /// Standard deviation of the Gaussian momentum distribution.
    pub p_sigma: f64,
    pub a1_0: C64,
    pub seed: u64,
}

impl Default for InitialConditionSpec {
    fn default() -> Self {
        InitialConditionSpec {
            theta_span: 4.0 * PI,
            p_mean: 0.0,
            p_sigma: 0.8,
            a1_0: C64::new(0.01, 0.0),
            seed: 1,
        }
    }
}

impl InitialConditionSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("theta_span", self.theta_span),
            ("p_mean", self.p_mean),
            ("p_sigma", self.p_sigma),
            ("a1_0.re", self.a1_0.re),
            ("a1_0.im", self.a1_0.im),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        if !(self.theta_span > 0.0) {
            return Err(invalid("theta_span must be positive"));
        }
        if self.p_sigma < 0.0 {
            return Err(invalid("p_sigma must be non-negative"));
        }
        if !(self.a1_0.norm() > 0.0) {
            return Err(invalid("a1_0 must be non-zero"));
        }
        Ok(())
    }
}

/// ChaCha20 stream used for positions.
pub const POSITION_STREAM: u64 = 0;
/// ChaCha20 stream used for momenta.
pub const MOMENTUM_STREAM: u64 = 1;

/// Uniform variate in `[0, 1)` with 53 random bits.
pub(crate) fn unit_open_right(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform variate in `(0, 1]`.
fn unit_open_left(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Builds the `tau = 0` ensemble.
///
/// Positions are uniform on `[0, theta_span)` and drawn from ChaCha20 stream
/// [`POSITION_STREAM`] keyed by `spec.seed`. Momenta come from stream
/// [`MOMENTUM_STREAM`] through the Box-Muller transform: for each pair of
/// variates `u1 in (0, 1]`, `u2 in [0, 1)`, the two normals
/// `sqrt(-2 ln u1) cos(2 pi u2)` and `sqrt(-2 ln u1) sin(2 pi u2)` are used in
/// that order. Every atom starts in the ground state `sigma = 0`,
/// `sigma_z = 1`, and the probe starts at `a1_0`.
pub fn init_ensemble(spec: &InitialConditionSpec, params: &SystemParams) -> Result<EnsembleState> {
    let n = params.n_atoms;
    if n == 0 {
        return Err(invalid("n_atoms must be at least 1"));
    }
    spec.validate()?;

    let mut pos_rng = ChaCha20Rng::seed_from_u64(spec.seed);
    pos_rng.set_stream(POSITION_STREAM);
    let theta: Vec<f64> = (0..n)
        .map(|_| {
            let t = unit_open_right(&mut pos_rng) * spec.theta_span;
            if t < spec.theta_span {
                t
            } else {
                spec.theta_span * (1.0 - f64::EPSILON)
            }
        })
        .collect();

    let mut mom_rng = ChaCha20Rng::seed_from_u64(spec.seed);
    mom_rng.set_stream(MOMENTUM_STREAM);
    let mut p = Vec::with_capacity(n);
    while p.len() < n {
        let u1 = unit_open_left(&mut mom_rng);
        let u2 = unit_open_right(&mut mom_rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        p.push(spec.p_mean + spec.p_sigma * r * c);
        if p.len() < n {
            p.push(spec.p_mean + spec.p_sigma * r * s);
        }
    }

    Ok(EnsembleState {
        tau: 0.0,
        theta,
        p,
        sigma: vec![C64::new(0.0, 0.0); n],
        sigma_z: vec![1.0; n],
        a1: spec.a1_0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rb87() -> PhysicalParams {
        PhysicalParams {
            k: 8.0552e6,
            m: 1.443e-25,
            g: 1.0e5,
            n_atoms: 1.0e4,
            nu_z: 0.0,
            omega0: 2.4e15,
            omega1: 2.4e15,
            omega2: 2.4e15,
            hbar: 1.0546e-34,
        }
    }

    #[test]
    fn recoil_frequency_rb87() {
        let s = nondimensionalize(&rb87()).unwrap();
        // 2 * 1.0546e-34 * (8.0552e6)^2 / 1.443e-25, evaluated by hand
        assert_relative_eq!(s.omega_r, 9.4838e4, max_relative = 1e-4);
    }

    #[test]
    fn rho_is_one_when_collective_coupling_equals_recoil() {
        let mut phys = rb87();
        let omega_r = 2.0 * phys.hbar * phys.k * phys.k / phys.m;
        phys.n_atoms = 100.0;
        phys.g = omega_r / 10.0;
        let s = nondimensionalize(&phys).unwrap();
        assert_relative_eq!(s.params.rho, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn detuning_of_one_scaling_unit() {
        let mut phys = rb87();
        let s = nondimensionalize(&phys).unwrap();
        let unit = s.omega_r * s.params.rho;
        phys.omega1 = phys.omega2 - unit;
        phys.nu_z = 2.0 * unit;
        let s = nondimensionalize(&phys).unwrap();
        assert_relative_eq!(s.params.delta21, 1.0, max_relative = 1e-6);
        assert_relative_eq!(s.params.nu, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn rho_depends_only_on_collective_coupling() {
        let phys = rb87();
        let a = nondimensionalize(&phys).unwrap();
        let scaled = PhysicalParams {
            g: phys.g * 4.0,
            n_atoms: phys.n_atoms / 16.0,
            ..phys
        };
        let b = nondimensionalize(&scaled).unwrap();
        assert_relative_eq!(a.params.rho, b.params.rho, max_relative = 1e-12);
    }

    #[test]
    fn nondimensionalize_rejects_bad_constants() {
        for f in [
            |p: &mut PhysicalParams| p.k = 0.0,
            |p: &mut PhysicalParams| p.m = -1.0,
            |p: &mut PhysicalParams| p.g = 0.0,
            |p: &mut PhysicalParams| p.n_atoms = 0.0,
            |p: &mut PhysicalParams| p.hbar = f64::NAN,
        ] {
            let mut phys = rb87();
            f(&mut phys);
            assert!(matches!(
                nondimensionalize(&phys),
                Err(CarlError::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn theta_position_map() {
        assert_eq!(theta_to_position(0.0), 0.0);
        assert_relative_eq!(theta_to_position(PI), 0.25, max_relative = 1e-15);
        assert_relative_eq!(theta_to_position(4.0 * PI), 1.0, max_relative = 1e-15);
        assert_eq!(theta_to_position_mod1(4.0 * PI), 0.0);
        assert!(theta_to_position_mod1(-1e-300) < 1.0);
        assert_relative_eq!(theta_to_position_mod1(-3.0 * PI), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn validation() {
        let ok = SystemParams::default();
        assert!(validate_params(&ok).is_ok());

        let bad = SystemParams { rho: 0.0, ..ok };
        let v = validate_params(&bad);
        assert_eq!(v.errors, vec!["rho must be positive".to_string()]);

        let bad = SystemParams {
            gamma: -1.0,
            kappa: -0.1,
            n_atoms: 0,
            ..ok
        };
        assert_eq!(validate_params(&bad).errors.len(), 3);
        assert!(validate_params(&bad).into_result().is_err());
    }

    #[test]
    fn harmonic_condition_warning() {
        let params = SystemParams::default();
        let check = harmonic_condition(&params, 1.0);
        assert_relative_eq!(check.threshold, 0.8, max_relative = 1e-14);
        assert!(check.holds);
        let v = validate_params_with_probe(&params, Some(1.0));
        assert!(v.is_ok());
        assert_eq!(v.warnings.len(), 1);
        assert!(v.warnings[0].contains("<="));

        let weak = SystemParams { nu: 0.5, ..params };
        assert!(!harmonic_condition(&weak, 1.0).holds);
    }

    #[test]
    fn ensemble_ground_state_and_window() {
        let params = SystemParams {
            n_atoms: 1001,
            ..Default::default()
        };
        let spec = InitialConditionSpec::default();
        let e = init_ensemble(&spec, &params).unwrap();
        assert_eq!(e.len(), 1001);
        assert_eq!(e.tau, 0.0);
        assert_eq!(e.a1, spec.a1_0);
        for a in e.atoms() {
            assert!(a.theta >= 0.0 && a.theta < spec.theta_span);
            assert_eq!(a.bloch_norm(), 0.25);
        }
    }

    #[test]
    fn zero_momentum_spread_is_exact() {
        let params = SystemParams {
            n_atoms: 33,
            ..Default::default()
        };
        let spec = InitialConditionSpec {
            p_mean: 0.3,
            p_sigma: 0.0,
            ..Default::default()
        };
        let e = init_ensemble(&spec, &params).unwrap();
        assert!(e.p.iter().all(|&p| p == 0.3));
    }

    #[test]
    fn seeded_ensembles_are_identical() {
        let params = SystemParams::default();
        let spec = InitialConditionSpec {
            seed: 42,
            ..Default::default()
        };
        let a = init_ensemble(&spec, &params).unwrap();
        let b = init_ensemble(&spec, &params).unwrap();
        assert_eq!(a, b);
        let c = init_ensemble(&InitialConditionSpec { seed: 43, ..spec }, &params).unwrap();
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn momentum_spread_statistics() {
        let params = SystemParams {
            n_atoms: 100_000,
            ..Default::default()
        };
        let spec = InitialConditionSpec::default();
        let e = init_ensemble(&spec, &params).unwrap();
        let n = e.len() as f64;
        let mean = e.p.iter().sum::<f64>() / n;
        let var = e.p.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.8).abs() < 0.02, "stddev {}", var.sqrt());
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn init_rejects_bad_specs() {
        let params = SystemParams::default();
        let zero = SystemParams {
            n_atoms: 0,
            ..params
        };
        assert!(init_ensemble(&InitialConditionSpec::default(), &zero).is_err());
        for spec in [
            InitialConditionSpec {
                theta_span: 0.0,
                ..Default::default()
            },
            InitialConditionSpec {
                p_sigma: f64::NAN,
                ..Default::default()
            },
            InitialConditionSpec {
                a1_0: C64::new(0.0, 0.0),
                ..Default::default()
            },
        ] {
            assert!(init_ensemble(&spec, &params).is_err());
        }
    }
}
