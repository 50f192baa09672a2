//! Semiclassical atom-field equations and their fixed-step integration.
//!
//! For atom `j` and the probe amplitude `A1`:
//!
//! ```text
//! dtheta_j/dtau   = p_j
//! dp_j/dtau       = -nu^2 theta_j - 2 Re(A1* sigma_j e^{-i theta_j}) + 2 A2 Re(sigma_j)
//! dsigma_z_j/dtau = 4 rho Re(E_j* sigma_j) - Gamma (sigma_z_j - 1)
//! dsigma_j/dtau   = i (Delta20 + p_j / 2) sigma_j - rho sigma_z_j E_j - Gamma sigma_j
//! dA1/dtau        = (i Delta21 - kappa) A1 + (1/N) sum_j sigma_j e^{-i theta_j}
//! ```
//!
//! with the local field `E_j = A1 e^{i theta_j} + A2`. The collective source
//! is summed sequentially in atom order so every run is bit-reproducible.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, OrderParameter};
use crate::error::{invalid, CarlError, Result};
use crate::model::{validate_params, EnsembleState, SystemParams};

/// Any field larger than this in magnitude marks a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionMode {
    /// Atoms recoil and move in the trap.
    #[default]
    Full,
    /// Positions frozen, momenta pinned to zero; only the internal state and
    /// the probe evolve.
    Motionless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSchedule {
    pub dtau: f64,
    pub tau_end: f64,
    /// Steps between recorded samples.
    pub record_stride: usize,
    /// Times at which a full copy of the ensemble is kept, snapped to the
    /// nearest step.
    pub snapshot_times: Vec<f64>,
}

impl Default for RunSchedule {
    fn default() -> Self {
        RunSchedule {
            dtau: 0.005,
            tau_end: 100.0,
            record_stride: 20,
            snapshot_times: Vec::new(),
        }
    }
}

impl RunSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.dtau.is_finite() && self.dtau > 0.0) {
            return Err(invalid("dtau must be positive"));
        }
        if !(self.tau_end.is_finite() && self.tau_end >= 0.0) {
            return Err(invalid("tau_end must be non-negative"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride must be at least 1"));
        }
        for &t in &self.snapshot_times {
            if !(t >= 0.0 && t <= self.tau_end) {
                return Err(invalid(format!(
                    "snapshot time {t} outside [0, {}]",
                    self.tau_end
                )));
            }
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("snapshot_times must be sorted"));
        }
        Ok(())
    }

    /// Number of steps; `tau_end` is rounded to a whole number of steps.
    pub fn n_steps(&self) -> usize {
        (self.tau_end / self.dtau).round() as usize
    }
}

/// Time derivative of an [`EnsembleState`], same component layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma: Vec<C64>,
    pub sigma_z: Vec<f64>,
    pub a1: C64,
}

impl Derivative {
    pub fn zeros(n: usize) -> Self {
        Derivative {
            theta: vec![0.0; n],
            p: vec![0.0; n],
            sigma: vec![C64::new(0.0, 0.0); n],
            sigma_z: vec![0.0; n],
            a1: C64::new(0.0, 0.0),
        }
    }

    fn resize(&mut self, n: usize) {
        self.theta.resize(n, 0.0);
        self.p.resize(n, 0.0);
        self.sigma.resize(n, C64::new(0.0, 0.0));
        self.sigma_z.resize(n, 0.0);
    }
}

/// Signature shared by [`rhs_into`] and test doubles of it.
pub type VectorField =
    fn(&EnsembleState, &SystemParams, MotionMode, &mut Derivative) -> Result<()>;

pub fn rhs(state: &EnsembleState, params: &SystemParams, mode: MotionMode) -> Result<Derivative> {
    state.check_layout()?;
    let mut out = Derivative::zeros(state.len());
    rhs_into(state, params, mode, &mut out)?;
    Ok(out)
}

/// Evaluates the equations of motion into `out`, which must already have
/// the ensemble's length.
pub fn rhs_into(
    state: &EnsembleState,
    params: &SystemParams,
    mode: MotionMode,
    out: &mut Derivative,
) -> Result<()> {
    let n = state.len();
    if n == 0 {
        return Err(CarlError::EmptyEnsemble);
    }
    let a1 = state.a1;
    if !(a1.re.is_finite() && a1.im.is_finite()) {
        return Err(CarlError::NonFiniteProbe);
    }
    let moving = mode == MotionMode::Full;
    let nu2 = params.nu * params.nu;
    let a2 = params.a2;
    let rho = params.rho;
    let gamma = params.gamma;
    let d20 = params.delta20;

    let theta = &state.theta[..n];
    let mom = &state.p[..n];
    let sigma = &state.sigma[..n];
    let sigma_z = &state.sigma_z[..n];
    let d_theta = &mut out.theta[..n];
    let d_p = &mut out.p[..n];
    let d_sigma = &mut out.sigma[..n];
    let d_sigma_z = &mut out.sigma_z[..n];

    let mut source = C64::new(0.0, 0.0);
    for j in 0..n {
        let th = theta[j];
        let p = if moving { mom[j] } else { 0.0 };
        let s = sigma[j];
        let sz = sigma_z[j];
        if !(th.is_finite() && p.is_finite() && s.re.is_finite() && s.im.is_finite()) || !sz.is_finite()
        {
            return Err(non_finite_field(j, th, p, s, sz));
        }

        let (sn, cs) = th.sin_cos();
        // sigma e^{-i theta}
        let se = C64::new(s.re * cs + s.im * sn, s.im * cs - s.re * sn);
        source += se;
        // E = A1 e^{i theta} + A2
        let e = C64::new(a1.re * cs - a1.im * sn + a2, a1.re * sn + a1.im * cs);

        if moving {
            let probe_force = a1.re * se.re + a1.im * se.im;
            d_theta[j] = p;
            d_p[j] = -nu2 * th - 2.0 * probe_force + 2.0 * a2 * s.re;
        } else {
            d_theta[j] = 0.0;
            d_p[j] = 0.0;
        }

        let drive = e.re * s.re + e.im * s.im;
        d_sigma_z[j] = 4.0 * rho * drive - gamma * (sz - 1.0);

        let w = d20 + 0.5 * p;
        d_sigma[j] = C64::new(
            -w * s.im - rho * sz * e.re - gamma * s.re,
            w * s.re - rho * sz * e.im - gamma * s.im,
        );
    }

    out.a1 = C64::new(-params.kappa, params.delta21) * a1 + source / n as f64;
    if !(out.a1.re.is_finite() && out.a1.im.is_finite()) {
        return Err(CarlError::NonFiniteProbe);
    }
    Ok(())
}

fn non_finite_field(atom: usize, th: f64, p: f64, s: C64, sz: f64) -> CarlError {
    let field = if !th.is_finite() {
        "theta"
    } else if !p.is_finite() {
        "p"
    } else if !(s.re.is_finite() && s.im.is_finite()) {
        "sigma"
    } else {
        debug_assert!(!sz.is_finite());
        "sigma_z"
    };
    CarlError::NonFinite { atom, field }
}

/// `out = y + h k`, keeping `y.tau`.
fn offset_into(out: &mut EnsembleState, y: &EnsembleState, h: f64, k: &Derivative) {
    let n = y.len();
    for j in 0..n {
        out.theta[j] = y.theta[j] + h * k.theta[j];
        out.p[j] = y.p[j] + h * k.p[j];
        out.sigma[j] = y.sigma[j] + k.sigma[j] * h;
        out.sigma_z[j] = y.sigma_z[j] + h * k.sigma_z[j];
    }
    out.a1 = y.a1 + k.a1 * h;
    out.tau = y.tau;
}

/// Classical fourth-order Runge-Kutta stepper with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    field: VectorField,
    k: [Derivative; 4],
    stage: EnsembleState,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self::with_field(n, rhs_into)
    }

    /// Stepper over an arbitrary vector field with the [`rhs_into`] signature.
    pub fn with_field(n: usize, field: VectorField) -> Self {
        Rk4 {
            field,
            k: std::array::from_fn(|_| Derivative::zeros(n)),
            stage: EnsembleState {
                tau: 0.0,
                theta: vec![0.0; n],
                p: vec![0.0; n],
                sigma: vec![C64::new(0.0, 0.0); n],
                sigma_z: vec![0.0; n],
                a1: C64::new(0.0, 0.0),
            },
        }
    }

    fn ensure_len(&mut self, n: usize) {
        if self.stage.len() != n {
            for k in &mut self.k {
                k.resize(n);
            }
            self.stage.theta.resize(n, 0.0);
            self.stage.p.resize(n, 0.0);
            self.stage.sigma.resize(n, C64::new(0.0, 0.0));
            self.stage.sigma_z.resize(n, 0.0);
        }
    }

    /// Advances `state` by `dtau` in place. On error `state` is untouched.
    pub fn step(
        &mut self,
        state: &mut EnsembleState,
        params: &SystemParams,
        dtau: f64,
        mode: MotionMode,
    ) -> Result<()> {
        if !(dtau.is_finite() && dtau > 0.0) {
            return Err(invalid("dtau must be positive"));
        }
        let n = state.len();
        self.ensure_len(n);
        let field = self.field;
        let wrap = |stage: usize| move |e: CarlError| CarlError::StageFailed {
            stage,
            source: Box::new(e),
        };

        let [k1, k2, k3, k4] = &mut self.k;
        field(state, params, mode, k1).map_err(wrap(1))?;
        offset_into(&mut self.stage, state, 0.5 * dtau, k1);
        field(&self.stage, params, mode, k2).map_err(wrap(2))?;
        offset_into(&mut self.stage, state, 0.5 * dtau, k2);
        field(&self.stage, params, mode, k3).map_err(wrap(3))?;
        offset_into(&mut self.stage, state, dtau, k3);
        field(&self.stage, params, mode, k4).map_err(wrap(4))?;

        let w = dtau / 6.0;
        for j in 0..n {
            state.theta[j] += w * (k1.theta[j] + 2.0 * (k2.theta[j] + k3.theta[j]) + k4.theta[j]);
            state.p[j] += w * (k1.p[j] + 2.0 * (k2.p[j] + k3.p[j]) + k4.p[j]);
            state.sigma[j] += (k1.sigma[j] + (k2.sigma[j] + k3.sigma[j]) * 2.0 + k4.sigma[j]) * w;
            state.sigma_z[j] +=
                w * (k1.sigma_z[j] + 2.0 * (k2.sigma_z[j] + k3.sigma_z[j]) + k4.sigma_z[j]);
        }
        state.a1 += (k1.a1 + (k2.a1 + k3.a1) * 2.0 + k4.a1) * w;
        state.tau += dtau;
        Ok(())
    }
}

/// One RK4 step, returning the advanced state.
pub fn step_rk4(
    state: &EnsembleState,
    params: &SystemParams,
    dtau: f64,
    mode: MotionMode,
) -> Result<EnsembleState> {
    state.check_layout()?;
    let mut next = state.clone();
    if mode == MotionMode::Motionless {
        next.p.iter_mut().for_each(|p| *p = 0.0);
    }
    Rk4::new(state.len()).step(&mut next, params, dtau, mode)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tau: f64,
    pub state: EnsembleState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub a1_series: Vec<C64>,
    pub c_series: Vec<C64>,
    pub r_series: Vec<f64>,
    pub phi_series: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// State at the last completed step.
    pub final_state: EnsembleState,
    /// Set when the run stopped early on a divergent or non-finite state.
    pub diverged: bool,
    pub failure: Option<String>,
}

impl Trajectory {
    fn with_capacity(cap: usize, initial: &EnsembleState) -> Self {
        Trajectory {
            times: Vec::with_capacity(cap),
            a1_series: Vec::with_capacity(cap),
            c_series: Vec::with_capacity(cap),
            r_series: Vec::with_capacity(cap),
            phi_series: Vec::with_capacity(cap),
            snapshots: Vec::new(),
            final_state: initial.clone(),
            diverged: false,
            failure: None,
        }
    }

    fn record(&mut self, state: &EnsembleState) -> Result<()> {
        let c = diagnostics::coherence(state)?;
        let OrderParameter { r, phi } = diagnostics::order_parameter(&state.theta)?;
        self.times.push(state.tau);
        self.a1_series.push(state.a1);
        self.c_series.push(c);
        self.r_series.push(r);
        self.phi_series.push(phi);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `|A1|^2` at each sample.
    pub fn probe_intensity(&self) -> Vec<f64> {
        self.a1_series.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn max_abs_field(state: &EnsembleState) -> f64 {
    let mut m = state.a1.norm();
    for j in 0..state.len() {
        m = m
            .max(state.theta[j].abs())
            .max(state.p[j].abs())
            .max(state.sigma[j].norm())
            .max(state.sigma_z[j].abs());
    }
    m
}

/// Integrates from `initial` for `schedule.tau_end`.
///
/// Samples are taken at step 0, every `record_stride` steps and at the last
/// step. A divergent (`|field| > 1e12`) or non-finite state stops the run and
/// returns the partial trajectory with `diverged` set.
pub fn integrate(
    initial: &EnsembleState,
    params: &SystemParams,
    schedule: &RunSchedule,
    mode: MotionMode,
) -> Result<Trajectory> {
    validate_params(params).into_result()?;
    schedule.validate()?;
    initial.check_layout()?;
    if initial.len() != params.n_atoms {
        return Err(CarlError::LengthMismatch {
            what: "ensemble size vs n_atoms",
            left: initial.len(),
            right: params.n_atoms,
        });
    }

    let n_steps = schedule.n_steps();
    let tau0 = initial.tau;
    let mut state = initial.clone();
    if mode == MotionMode::Motionless {
        state.p.iter_mut().for_each(|p| *p = 0.0);
    }

    let mut snap_steps: Vec<usize> = schedule
        .snapshot_times
        .iter()
        .map(|t| ((t / schedule.dtau).round() as usize).min(n_steps))
        .collect();
    snap_steps.reverse();

    let mut traj = Trajectory::with_capacity(n_steps / schedule.record_stride + 2, &state);
    let mut stepper = Rk4::new(state.len());
    traj.record(&state)?;
    take_snapshots(&mut traj, &mut snap_steps, 0, &state);

    for step in 1..=n_steps {
        if let Err(e) = stepper.step(&mut state, params, schedule.dtau, mode) {
            traj.diverged = true;
            traj.failure = Some(e.to_string());
            break;
        }
        // Absolute step time avoids accumulating round-off in tau.
        state.tau = tau0 + step as f64 * schedule.dtau;
        if max_abs_field(&state) > DIVERGENCE_THRESHOLD {
            traj.diverged = true;
            traj.failure = Some(format!("divergence at tau = {}", state.tau));
            traj.record(&state)?;
            break;
        }
        if step % schedule.record_stride == 0 || step == n_steps {
            traj.record(&state)?;
        }
        take_snapshots(&mut traj, &mut snap_steps, step, &state);
    }
    traj.final_state = state;
    Ok(traj)
}

fn take_snapshots(
    traj: &mut Trajectory,
    pending: &mut Vec<usize>,
    step: usize,
    state: &EnsembleState,
) {
    while pending.last() == Some(&step) {
        pending.pop();
        traj.snapshots.push(Snapshot {
            tau: state.tau,
            state: state.clone(),
        });
    }
}

/// Running trapezoid integral `int_{t0}^{t} C(t') e^{(kappa - i Delta21)(t' - t0)} dt'`
/// over sampled coherence values.
pub fn coherence_transform(
    c_series: &[C64],
    times: &[f64],
    kappa: f64,
    delta21: f64,
) -> Result<Vec<C64>> {
    if c_series.len() != times.len() {
        return Err(CarlError::LengthMismatch {
            what: "c_series vs times",
            left: c_series.len(),
            right: times.len(),
        });
    }
    let Some(&t0) = times.first() else {
        return Ok(Vec::new());
    };
    let z = C64::new(kappa, -delta21);
    let integrand = |i: usize| c_series[i] * (z * (times[i] - t0)).exp();

    let mut out = Vec::with_capacity(times.len());
    let mut acc = C64::new(0.0, 0.0);
    let mut prev = integrand(0);
    out.push(acc);
    for i in 1..times.len() {
        let cur = integrand(i);
        acc += (prev + cur) * (0.5 * (times[i] - times[i - 1]));
        out.push(acc);
        prev = cur;
    }
    Ok(out)
}

/// Probe amplitude rebuilt from the coherence history alone:
/// `A1(t) = e^{(i Delta21 - kappa)(t - t0)} [A1(t0) + int C e^{(kappa - i Delta21)(t' - t0)} dt']`.
///
/// Serves as an independent check on the directly integrated `A1`; the
/// sampling must be dense enough for the trapezoid rule.
pub fn reconstruct_probe(
    c_series: &[C64],
    times: &[f64],
    a1_0: C64,
    params: &SystemParams,
) -> Result<Vec<C64>> {
    let integral = coherence_transform(c_series, times, params.kappa, params.delta21)?;
    let Some(&t0) = times.first() else {
        return Ok(Vec::new());
    };
    let z = C64::new(-params.kappa, params.delta21);
    Ok(times
        .iter()
        .zip(&integral)
        .map(|(&t, &acc)| (z * (t - t0)).exp() * (a1_0 + acc))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AtomState;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single(atom: AtomState, a1: C64) -> EnsembleState {
        EnsembleState::from_atoms(0.0, &[atom], a1)
    }

    fn ground(theta: f64, p: f64) -> AtomState {
        AtomState {
            theta,
            p,
            sigma: c(0.0, 0.0),
            sigma_z: 1.0,
        }
    }

    #[test]
    fn rhs_single_ground_atom_under_pump() {
        let params = SystemParams {
            n_atoms: 1,
            ..Default::default()
        };
        let d = rhs(&single(ground(0.0, 0.0), c(0.0, 0.0)), &params, MotionMode::Full).unwrap();
        assert_eq!(d.sigma[0], c(-6.0, 0.0));
        assert_eq!(d.p[0], 0.0);
        assert_eq!(d.sigma_z[0], 0.0);
        assert_eq!(d.a1, c(0.0, 0.0));
        assert_eq!(d.theta[0], 0.0);
    }

    #[test]
    fn rhs_free_streaming_when_decoupled() {
        let params = SystemParams {
            nu: 0.0,
            n_atoms: 3,
            ..Default::default()
        };
        let atoms = [ground(0.1, 0.5), ground(2.0, -1.5), ground(-3.0, 0.0)];
        let state = EnsembleState::from_atoms(0.0, &atoms, c(0.0, 0.0));
        // the pump alone would still excite ground-state atoms
        let params = SystemParams { a2: 0.0, ..params };
        let d = rhs(&state, &params, MotionMode::Full).unwrap();
        assert_eq!(d.theta, state.p);
        assert!(d.p.iter().all(|&x| x == 0.0));
        assert!(d.sigma.iter().all(|&x| x == c(0.0, 0.0)));
        assert!(d.sigma_z.iter().all(|&x| x == 0.0));
        assert_eq!(d.a1, c(0.0, 0.0));
    }

    #[test]
    fn rhs_field_source() {
        let params = SystemParams {
            kappa: 0.0,
            delta21: 0.0,
            n_atoms: 1,
            ..Default::default()
        };
        let atom = AtomState {
            theta: 0.0,
            p: 0.0,
            sigma: c(0.0, 0.5),
            sigma_z: 0.0,
        };
        let d = rhs(&single(atom, c(0.0, 0.0)), &params, MotionMode::Full).unwrap();
        assert_eq!(d.a1, c(0.0, 0.5));
    }

    #[test]
    fn rhs_real_channels_match_complex_formulas() {
        let params = SystemParams {
            n_atoms: 1,
            ..Default::default()
        };
        let atom = AtomState {
            theta: 0.7,
            p: -0.3,
            sigma: c(0.11, -0.27),
            sigma_z: 0.4,
        };
        let a1 = c(0.2, -0.05);
        let d = rhs(&single(atom, a1), &params, MotionMode::Full).unwrap();

        let s = atom.sigma;
        let eminus = C64::from_polar(1.0, -atom.theta);
        let eplus = eminus.conj();
        let a2 = params.a2;
        let dp = -params.nu.powi(2) * atom.theta - a1.conj() * s * eminus - a1 * s.conj() * eplus
            + (s + s.conj()) * a2;
        let dsz = (a1.conj() * eminus + a2) * s + s.conj() * (a1 * eplus + a2);
        let dsz = dsz * (2.0 * params.rho) - params.gamma * (atom.sigma_z - 1.0);
        let ds = C64::i() * (params.delta20 + atom.p / 2.0) * s
            - params.rho * atom.sigma_z * (a1 * eplus + a2)
            - params.gamma * s;
        let da1 = C64::i() * params.delta21 * a1 + s * eminus - params.kappa * a1;

        assert_relative_eq!(d.p[0], dp.re, max_relative = 1e-13);
        assert!(dp.im.abs() < 1e-15);
        assert_relative_eq!(d.sigma_z[0], dsz.re, max_relative = 1e-13);
        assert!(dsz.im.abs() < 1e-15);
        assert_relative_eq!(d.sigma[0].re, ds.re, max_relative = 1e-13);
        assert_relative_eq!(d.sigma[0].im, ds.im, max_relative = 1e-13);
        assert_relative_eq!(d.a1.re, da1.re, max_relative = 1e-13);
        assert_relative_eq!(d.a1.im, da1.im, max_relative = 1e-13);
    }

    #[test]
    fn rhs_reports_offending_atom() {
        let params = SystemParams {
            n_atoms: 3,
            ..Default::default()
        };
        let mut state =
            EnsembleState::from_atoms(0.0, &[ground(0.0, 0.0); 3], c(0.01, 0.0));
        state.sigma[2] = c(f64::NAN, 0.0);
        assert_eq!(
            rhs(&state, &params, MotionMode::Full),
            Err(CarlError::NonFinite {
                atom: 2,
                field: "sigma"
            })
        );
        state.sigma[2] = c(0.0, 0.0);
        state.p[1] = f64::INFINITY;
        assert_eq!(
            rhs(&state, &params, MotionMode::Full),
            Err(CarlError::NonFinite { atom: 1, field: "p" })
        );
    }

    fn harmonic_error(dtau: f64) -> f64 {
        let params = SystemParams {
            a2: 0.0,
            n_atoms: 1,
            ..Default::default()
        };
        let mut state = single(ground(1.0, 0.0), c(0.0, 0.0));
        let tau_end = std::f64::consts::FRAC_PI_2;
        let steps = (tau_end / dtau).round() as usize;
        let h = tau_end / steps as f64;
        let mut rk = Rk4::new(1);
        for _ in 0..steps {
            rk.step(&mut state, &params, h, MotionMode::Full).unwrap();
        }
        // phase-space distance: the endpoint sits at a turning point where
        // theta alone only sees the (higher order) amplitude error
        let (s, c) = (2.0 * tau_end).sin_cos();
        (state.theta[0] - c).hypot((state.p[0] + 2.0 * s) / 2.0)
    }

    #[test]
    fn harmonic_trap_motion() {
        assert!(harmonic_error(0.005) < 1e-6);
    }

    #[test]
    fn rk4_fourth_order() {
        let ratio = harmonic_error(0.1) / harmonic_error(0.05);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn bloch_norm_conserved_without_damping() {
        use crate::selftest::bloch_drift;
        let coarse = bloch_drift(rhs_into, 4, 10.0, 0.0025, 11).unwrap();
        let fine = bloch_drift(rhs_into, 4, 10.0, 0.00125, 11).unwrap();
        assert!(fine < 1e-7, "drift {fine}");
        // RK4 damps the precession at O(h^5) per unit time
        assert!(coarse / fine > 16.0, "{coarse} / {fine}");
    }

    #[test]
    fn zero_step_rejected() {
        let params = SystemParams {
            n_atoms: 1,
            ..Default::default()
        };
        let state = single(ground(0.0, 0.0), c(0.01, 0.0));
        assert!(step_rk4(&state, &params, 0.0, MotionMode::Full).is_err());
        assert!(step_rk4(&state, &params, -1.0, MotionMode::Full).is_err());
    }

    #[test]
    fn failed_step_leaves_state_untouched() {
        fn broken(
            s: &EnsembleState,
            p: &SystemParams,
            m: MotionMode,
            out: &mut Derivative,
        ) -> Result<()> {
            rhs_into(s, p, m, out)?;
            if s.tau == 0.0 && s.a1 != C64::new(0.01, 0.0) {
                return Err(CarlError::NonFiniteProbe);
            }
            Ok(())
        }
        let params = SystemParams {
            n_atoms: 1,
            ..Default::default()
        };
        let mut state = single(ground(0.3, 0.1), c(0.01, 0.0));
        let before = state.clone();
        let err = Rk4::with_field(1, broken)
            .step(&mut state, &params, 0.01, MotionMode::Full)
            .unwrap_err();
        assert!(matches!(err, CarlError::StageFailed { stage: 2, .. }));
        assert_eq!(state, before);
    }

    #[test]
    fn motionless_freezes_positions() {
        let params = SystemParams {
            n_atoms: 2,
            ..Default::default()
        };
        let state = EnsembleState::from_atoms(0.0, &[ground(0.3, 0.5), ground(5.0, -1.0)], c(0.01, 0.0));
        let schedule = RunSchedule {
            tau_end: 2.0,
            ..Default::default()
        };
        let traj = integrate(&state, &params, &schedule, MotionMode::Motionless).unwrap();
        assert_eq!(traj.final_state.theta, state.theta);
        assert!(traj.final_state.p.iter().all(|&p| p == 0.0));
        assert!(traj.final_state.sigma[0].norm() > 0.0);
    }

    #[test]
    fn zero_length_run_has_one_sample() {
        let params = SystemParams {
            n_atoms: 2,
            ..Default::default()
        };
        let state = EnsembleState::from_atoms(0.0, &[ground(0.3, 0.5), ground(5.0, -1.0)], c(0.01, 0.0));
        let schedule = RunSchedule {
            tau_end: 0.0,
            snapshot_times: vec![0.0],
            ..Default::default()
        };
        let traj = integrate(&state, &params, &schedule, MotionMode::Full).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.a1_series[0], state.a1);
        assert_eq!(traj.final_state, state);
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].state, state);
    }

    #[test]
    fn sampling_and_snapshots() {
        let params = SystemParams {
            n_atoms: 1,
            ..Default::default()
        };
        let state = single(ground(0.0, 0.0), c(0.01, 0.0));
        let schedule = RunSchedule {
            dtau: 0.01,
            tau_end: 1.007,
            record_stride: 30,
            snapshot_times: vec![0.5, 0.504, 1.0],
        };
        let traj = integrate(&state, &params, &schedule, MotionMode::Full).unwrap();
        // 101 steps: samples at 0, 30, 60, 90 and the final step
        assert_eq!(traj.len(), 5);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_relative_eq!(*traj.times.last().unwrap(), 1.01, max_relative = 1e-14);
        let snap_taus: Vec<f64> = traj.snapshots.iter().map(|s| s.tau).collect();
        assert_eq!(snap_taus.len(), 3);
        assert_relative_eq!(snap_taus[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(snap_taus[1], 0.5, max_relative = 1e-14);
        assert_relative_eq!(snap_taus[2], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn divergence_is_flagged() {
        let params = SystemParams {
            nu: 0.0,
            n_atoms: 1,
            ..Default::default()
        };
        let state = single(ground(0.0, 1e15), c(0.01, 0.0));
        let schedule = RunSchedule {
            tau_end: 1.0,
            ..Default::default()
        };
        let traj = integrate(&state, &params, &schedule, MotionMode::Full).unwrap();
        assert!(traj.diverged);
        assert!(traj.failure.is_some());
        assert!(traj.len() <= 2);
    }

    #[test]
    fn reconstruct_homogeneous_and_constant_source() {
        let params = SystemParams {
            kappa: 0.3,
            delta21: 1.7,
            ..Default::default()
        };
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let a0 = c(0.01, 0.02);
        let zero = vec![c(0.0, 0.0); times.len()];
        let rec = reconstruct_probe(&zero, &times, a0, &params).unwrap();
        for (t, a) in times.iter().zip(&rec) {
            let exact = a0 * (C64::new(-0.3, 1.7) * t).exp();
            assert!((a - exact).norm() < 1e-15);
        }

        let params = SystemParams {
            kappa: 0.0,
            delta21: 0.0,
            ..params
        };
        let cval = c(0.2, -0.1);
        let src = vec![cval; times.len()];
        let rec = reconstruct_probe(&src, &times, a0, &params).unwrap();
        for (t, a) in times.iter().zip(&rec) {
            assert!((a - (a0 + cval * *t)).norm() < 1e-14);
        }
    }

    #[test]
    fn reconstruct_length_mismatch() {
        let params = SystemParams::default();
        assert!(matches!(
            reconstruct_probe(&[c(0.0, 0.0)], &[0.0, 1.0], c(1.0, 0.0), &params),
            Err(CarlError::LengthMismatch { .. })
        ));
    }
}
