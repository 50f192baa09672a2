//! Closed-form gain machinery for the trapped system: adiabatic polarization,
//! Bessel functions, the Jacobi-Anger sideband expansion, the resonance
//! kernel and the resonant-gain predictors.
//!
//! An atom oscillating as `theta(tau) = amp cos(nu tau + phase)` radiates
//! into the probe through `e^{-i theta}`, which splits into sidebands
//!
//! ```text
//! e^{-i theta(tau)} = sum_n J_n(amp) e^{i n (phase - pi/2)} e^{i n nu tau}
//! ```
//!
//! so the probe sees gain whenever `Delta21 = n nu`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    extract_oscillation_about, secular_order_parameter, OrderParameter, SecularOscillation,
};
use crate::error::{invalid, CarlError, Result};
use crate::model::{EnsembleState, SystemParams};

pub const BESSEL_MAX_ORDER: u32 = 200;
pub const BESSEL_MAX_ARG: f64 = 500.0;

/// Orders beyond the truncation point summed into the residual estimate.
const TAIL_ORDERS: usize = 40;

/// Below this `|z tau|` the resonance kernel switches to its Taylor series.
pub const KERNEL_SERIES_THRESHOLD: f64 = 1e-6;

/// Long-time adiabatic polarization `S0` of an atom under the pump alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyPolarization {
    pub s0: C64,
    /// Pump Rabi frequency `2 rho A2`.
    pub rabi: f64,
}

/// `S0 = -Omega (Gamma + i Delta20) / (2 (Omega^2 + Gamma^2 + Delta20^2))`.
pub fn steady_polarization(params: &SystemParams) -> Result<SteadyPolarization> {
    let rabi = params.rabi_frequency();
    let denom = rabi * rabi + params.gamma * params.gamma + params.delta20 * params.delta20;
    if !(denom > 0.0) {
        return Err(CarlError::Degenerate(
            "Omega, Gamma and Delta20 all vanish".into(),
        ));
    }
    let scale = -rabi / (2.0 * denom);
    Ok(SteadyPolarization {
        s0: C64::new(scale * params.gamma, scale * params.delta20),
        rabi,
    })
}

/// `J_0(x) ..= J_{n_max}(x)` by Miller's backward recurrence, normalized
/// with `J_0 + 2 sum_k J_{2k} = 1`.
pub fn bessel_j_sequence(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = (n_max as f64).max(ax.ceil());
    let mut m = (top + 20.0 + (160.0 * top).sqrt()).ceil() as usize;
    m += m % 2;

    const BIG: f64 = 1e250;
    let two_over_x = 2.0 / ax;
    let mut j_next = 0.0; // J_{k+1}
    let mut j_cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=m).rev() {
        let j_prev = k as f64 * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        let idx = k - 1;
        if idx <= n_max {
            out[idx] = j_cur;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * j_cur;
        }
        if j_cur.abs() > BIG {
            let s = 1.0 / BIG;
            j_cur *= s;
            j_next *= s;
            norm *= s;
            let hi = n_max.min(m);
            for v in &mut out[idx.min(hi)..=hi] {
                *v *= s;
            }
        }
    }
    norm += j_cur;
    for v in &mut out {
        *v /= norm;
    }
    if x < 0.0 {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// Bessel function of the first kind `J_n(x)` for `|n| <= 200`,
/// `|x| <= 500`, absolute error below `1e-10`.
pub fn bessel_jn(n: i32, x: f64) -> Result<f64> {
    if n.unsigned_abs() > BESSEL_MAX_ORDER {
        return Err(CarlError::OutOfRange(format!(
            "Bessel order {n} exceeds {BESSEL_MAX_ORDER}"
        )));
    }
    if !(x.abs() <= BESSEL_MAX_ARG) {
        return Err(CarlError::OutOfRange(format!(
            "Bessel argument {x} exceeds {BESSEL_MAX_ARG}"
        )));
    }
    let k = n.unsigned_abs() as usize;
    let v = bessel_j_sequence(k, x)[k];
    Ok(if n < 0 && k % 2 == 1 { -v } else { v })
}

/// `e^z - 1` without cancellation for small `|z|`.
fn exp_m1(z: C64) -> C64 {
    let em1 = z.re.exp_m1();
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    C64::new(em1 * c - 2.0 * half * half, z.re.exp() * s)
}

/// Resonance kernel `K = (e^{(kappa - i delta) tau} - 1) / (kappa - i delta)`,
/// continuous through `kappa = delta = 0` where it equals `tau`.
pub fn resonance_kernel(kappa: f64, delta: f64, tau: f64) -> C64 {
    let z = C64::new(kappa, -delta);
    let zt = z * tau;
    if zt.norm() < KERNEL_SERIES_THRESHOLD {
        (C64::new(1.0, 0.0) + zt / 2.0 + zt * zt / 6.0) * tau
    } else {
        exp_m1(zt) / z
    }
}

/// `(1 - e^{-kappa tau}) / kappa`, tending to `tau` as `kappa -> 0`.
pub fn cavity_build_up(kappa: f64, tau: f64) -> f64 {
    let x = kappa * tau;
    if x.abs() < KERNEL_SERIES_THRESHOLD {
        tau * (1.0 - x / 2.0 + x * x / 6.0)
    } else {
        -(-x).exp_m1() / kappa
    }
}

/// Truncation order `ceil(a + 10 a^{1/3} + 10)` beyond which `J_n(a)` is
/// negligible.
pub fn n_max_rule(max_amp: f64) -> usize {
    let a = max_amp.max(0.0);
    (a + 10.0 * a.cbrt() + 10.0).ceil() as usize
}

/// Per-sideband ensemble weights
/// `w_n = (1/N) sum_j J_n(amp_j) e^{i n (phase_j - pi/2)}` for
/// `n = -n_max ..= n_max`, stored at index `n + n_max`.
pub fn sideband_weights(oscillations: &[SecularOscillation], n_max: usize) -> Result<Vec<C64>> {
    if oscillations.is_empty() {
        return Err(CarlError::EmptyEnsemble);
    }
    let mut w = vec![C64::new(0.0, 0.0); 2 * n_max + 1];
    for o in oscillations {
        if !(o.amp <= BESSEL_MAX_ARG) {
            return Err(CarlError::OutOfRange(format!(
                "oscillation amplitude {} exceeds {BESSEL_MAX_ARG}",
                o.amp
            )));
        }
        let j = bessel_j_sequence(n_max, o.amp);
        let step = C64::from_polar(1.0, o.phase - FRAC_PI_2);
        let mut rot = C64::new(1.0, 0.0);
        for (n, &jn) in j.iter().enumerate() {
            w[n_max + n] += rot * jn;
            if n > 0 {
                // J_{-n} e^{-i n x} = (-1)^n J_n e^{-i n x}
                let sign = if n % 2 == 0 { jn } else { -jn };
                w[n_max - n] += rot.conj() * sign;
            }
            rot *= step;
        }
    }
    let scale = 1.0 / oscillations.len() as f64;
    w.iter_mut().for_each(|v| *v *= scale);
    Ok(w)
}

/// Upper bound on the discarded part of the sideband series,
/// `max_j sum_{n_max < |n| <= n_max + 40} |J_n(amp_j)|`.
pub fn truncation_residual(oscillations: &[SecularOscillation], n_max: usize) -> f64 {
    oscillations
        .iter()
        .map(|o| {
            let j = bessel_j_sequence(n_max + TAIL_ORDERS, o.amp);
            2.0 * j[n_max + 1..].iter().map(|v| v.abs()).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Largest deviation between the truncated sideband series and
/// `e^{-i amp cos(nu tau + phase)}` over the sample times.
pub fn jacobi_anger_residual(
    amp: f64,
    phase: f64,
    nu: f64,
    n_max: usize,
    times: &[f64],
) -> Result<f64> {
    let osc = SecularOscillation {
        amp,
        phase,
        center_offset: 0.0,
    };
    let w = sideband_weights(&[osc], n_max)?;
    let mut worst: f64 = 0.0;
    for &t in times {
        let series: C64 = w
            .iter()
            .enumerate()
            .map(|(i, &wn)| wn * C64::from_polar(1.0, (i as f64 - n_max as f64) * nu * t))
            .sum();
        let exact = C64::from_polar(1.0, -amp * (nu * t + phase).cos());
        worst = worst.max((series - exact).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorInput {
    pub oscillations: Vec<SecularOscillation>,
    pub s0: C64,
    pub tau: f64,
    pub n_max: usize,
}

impl PredictorInput {
    /// Secular decomposition of a snapshot, with `n_max` from [`n_max_rule`].
    pub fn from_state(
        state: &EnsembleState,
        params: &SystemParams,
        trap_center: f64,
    ) -> Result<Self> {
        let oscillations = state
            .theta
            .iter()
            .zip(&state.p)
            .map(|(&th, &p)| extract_oscillation_about(th, p, params.nu, state.tau, trap_center))
            .collect::<Result<Vec<_>>>()?;
        let max_amp = oscillations.iter().map(|o| o.amp).fold(0.0, f64::max);
        Ok(PredictorInput {
            oscillations,
            s0: steady_polarization(params)?.s0,
            tau: state.tau,
            n_max: n_max_rule(max_amp),
        })
    }

    pub fn required_n_max(&self) -> usize {
        let max_amp = self.oscillations.iter().map(|o| o.amp).fold(0.0, f64::max);
        n_max_rule(max_amp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtildePrediction {
    pub value: C64,
    /// True when `n_max` is below [`n_max_rule`] for the input amplitudes.
    pub under_resolved: bool,
    pub truncation_residual: f64,
}

/// Dc-polarization estimate of the coherence transform,
/// `C~ = S0 sum_n w_n K(kappa, Delta21 - n nu, tau)`.
pub fn predict_ctilde(
    input: &PredictorInput,
    kappa: f64,
    delta21: f64,
    nu: f64,
) -> Result<CtildePrediction> {
    if input.n_max < 1 {
        return Err(invalid("n_max must be at least 1"));
    }
    let w = sideband_weights(&input.oscillations, input.n_max)?;
    Ok(CtildePrediction {
        value: ctilde_from_weights(&w, input.s0, kappa, delta21, nu, input.tau),
        under_resolved: input.n_max < input.required_n_max(),
        truncation_residual: truncation_residual(&input.oscillations, input.n_max),
    })
}

/// Same sum as [`predict_ctilde`] over precomputed [`sideband_weights`].
pub fn ctilde_from_weights(
    weights: &[C64],
    s0: C64,
    kappa: f64,
    delta21: f64,
    nu: f64,
    tau: f64,
) -> C64 {
    let n_max = (weights.len() / 2) as f64;
    let sum: C64 = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| w * resonance_kernel(kappa, delta21 - (i as f64 - n_max) * nu, tau))
        .sum();
    s0 * sum
}

/// Probe gain from the coherence transform `C~`:
/// `e^{-2 kappa tau} (|C~/A1(0)|^2 + 2 Re(C~/A1(0))) + e^{-2 kappa tau} - 1`.
pub fn gain_from_ctilde(ctilde: C64, a1_0: C64, kappa: f64, tau: f64) -> Result<f64> {
    if !(a1_0.norm() > 0.0) {
        return Err(invalid("initial probe amplitude must be non-zero"));
    }
    let q = ctilde / a1_0;
    let decay = (-2.0 * kappa * tau).exp();
    Ok(decay * (q.norm_sqr() + 2.0 * q.re) + (decay - 1.0))
}

/// The three contributions to the resonant gain estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainTerms {
    /// Collective emission, quadratic in the coherence.
    pub coherent: f64,
    /// Interference with the seed.
    pub cross: f64,
    /// Cavity loss of the seed, `e^{-2 kappa tau} - 1`.
    pub decay: f64,
    pub total: f64,
}

/// Resonant gain from an asymptotic coherence `C0`:
/// `f^2 |C0/A1(0)|^2 + 2 e^{-kappa tau} f Re(C0/A1(0)) + e^{-2 kappa tau} - 1`
/// with `f = (1 - e^{-kappa tau}) / kappa`.
pub fn predict_gain_from_coherence(
    params: &SystemParams,
    tau: f64,
    c0: C64,
    a1_0: C64,
) -> Result<GainTerms> {
    if !(a1_0.norm() > 0.0) {
        return Err(invalid("initial probe amplitude must be non-zero"));
    }
    if params.kappa < 0.0 {
        return Err(invalid("kappa must be non-negative"));
    }
    let f = cavity_build_up(params.kappa, tau);
    let q = c0 / a1_0;
    let coherent = f * f * q.norm_sqr();
    let cross = 2.0 * (-params.kappa * tau).exp() * f * q.re;
    let decay = (-2.0 * params.kappa * tau).exp() - 1.0;
    Ok(GainTerms {
        coherent,
        cross,
        decay,
        total: coherent + cross + decay,
    })
}

/// Resonant gain in terms of the secular order parameter,
/// `C0 = S0 R0 e^{i Phi0}`.
pub fn predict_gain_resonant(
    params: &SystemParams,
    tau: f64,
    r0: OrderParameter,
    s0: C64,
    a1_0: C64,
) -> Result<GainTerms> {
    predict_gain_from_coherence(params, tau, s0 * r0.to_complex(), a1_0)
}

/// Asymptotic coherence `C0 = (1/N) sum_j S0 e^{i amp_j cos(phase_j)}`.
pub fn secular_coherence(oscillations: &[SecularOscillation], s0: C64) -> Result<C64> {
    if oscillations.is_empty() {
        return Err(CarlError::EmptyEnsemble);
    }
    let sum: C64 = oscillations
        .iter()
        .map(|o| C64::from_polar(1.0, o.amp * o.phase.cos()))
        .sum();
    Ok(s0 * sum / oscillations.len() as f64)
}

/// Raman resonances `n nu` for `n_lo ..= n_hi`.
pub fn resonance_comb(nu: f64, n_lo: i32, n_hi: i32) -> Result<Vec<f64>> {
    if !(nu > 0.0) {
        return Err(invalid("nu must be positive"));
    }
    if n_lo > n_hi {
        return Err(invalid("n_lo must not exceed n_hi"));
    }
    Ok((n_lo..=n_hi).map(|n| n as f64 * nu).collect())
}

/// Analytic summary of a snapshot, serialized as the predictor report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub tau: f64,
    pub delta21: f64,
    pub s0: [f64; 2],
    pub r0: f64,
    pub phi0: f64,
    /// Resonant-gain terms built from `R0`.
    pub gain_terms: GainTerms,
    /// The same estimate built from the asymptotic coherence `C0`.
    pub gain_from_c0: f64,
    /// Sideband estimate of the coherence transform at `delta21`.
    pub ctilde: [f64; 2],
    pub gain_from_ctilde: f64,
    pub n_max: usize,
    pub n_max_rule: usize,
    pub truncation_residual: f64,
}

pub fn predictor_report(
    snapshot: &EnsembleState,
    params: &SystemParams,
    a1_0: C64,
    trap_center: f64,
    n_max: Option<usize>,
) -> Result<PredictorReport> {
    let mut input = PredictorInput::from_state(snapshot, params, trap_center)?;
    let rule = input.n_max;
    if let Some(n) = n_max {
        input.n_max = n;
    }
    let r0 = secular_order_parameter(&input.oscillations)?;
    let terms = predict_gain_resonant(params, input.tau, r0, input.s0, a1_0)?;
    let c0 = secular_coherence(&input.oscillations, input.s0)?;
    let from_c0 = predict_gain_from_coherence(params, input.tau, c0, a1_0)?;
    let ct = predict_ctilde(&input, params.kappa, params.delta21, params.nu)?;
    Ok(PredictorReport {
        tau: input.tau,
        delta21: params.delta21,
        s0: [input.s0.re, input.s0.im],
        r0: r0.r,
        phi0: r0.phi,
        gain_terms: terms,
        gain_from_c0: from_c0.total,
        ctilde: [ct.value.re, ct.value.im],
        gain_from_ctilde: gain_from_ctilde(ct.value, a1_0, params.kappa, input.tau)?,
        n_max: input.n_max,
        n_max_rule: rule,
        truncation_residual: ct.truncation_residual,
    })
}
