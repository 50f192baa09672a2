//! Gain, collective coherence, synchronization and bunching measures.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CarlError, Result};
use crate::model::{theta_to_position_mod1, EnsembleState};

/// Magnitudes below this are treated as an exactly vanishing order parameter.
pub const ORDER_PARAMETER_FLOOR: f64 = 1e-14;

/// Relative probe intensity gain `(|A1(tau)|^2 - |A1(0)|^2) / |A1(0)|^2`.
pub fn gain(a1_tau: C64, a1_0: C64) -> Result<f64> {
    let i0 = a1_0.norm_sqr();
    if !(i0 > 0.0) {
        return Err(invalid("initial probe amplitude must be non-zero"));
    }
    Ok((a1_tau.norm_sqr() - i0) / i0)
}

/// Collective coherence `C = (1/N) sum_j sigma_j e^{-i theta_j}`.
pub fn coherence(state: &EnsembleState) -> Result<C64> {
    coherence_of(&state.theta, &state.sigma)
}

pub fn coherence_of(theta: &[f64], sigma: &[C64]) -> Result<C64> {
    if theta.is_empty() {
        return Err(CarlError::EmptyEnsemble);
    }
    if theta.len() != sigma.len() {
        return Err(CarlError::LengthMismatch {
            what: "theta vs sigma",
            left: theta.len(),
            right: sigma.len(),
        });
    }
    let sum = theta
        .iter()
        .zip(sigma)
        .fold(C64::new(0.0, 0.0), |acc, (&th, &s)| {
            let (sn, cs) = th.sin_cos();
            acc + C64::new(s.re * cs + s.im * sn, s.im * cs - s.re * sn)
        });
    Ok(sum / theta.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParameter {
    /// Phase coherence in `[0, 1]`.
    pub r: f64,
    /// Mean phase in `(-pi, pi]`; zero when `r` vanishes.
    pub phi: f64,
}

impl OrderParameter {
    fn from_mean(mean: C64) -> Self {
        let r = mean.norm();
        if r < ORDER_PARAMETER_FLOOR {
            OrderParameter { r: 0.0, phi: 0.0 }
        } else {
            OrderParameter {
                r: r.min(1.0),
                phi: wrap_phase(mean.arg()),
            }
        }
    }

    pub fn to_complex(self) -> C64 {
        C64::from_polar(self.r, self.phi)
    }
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Kuramoto order parameter `R e^{i Phi} = (1/N) sum_j e^{-i theta_j}`.
pub fn order_parameter(theta: &[f64]) -> Result<OrderParameter> {
    if theta.is_empty() {
        return Err(CarlError::EmptyEnsemble);
    }
    let sum = theta.iter().fold(C64::new(0.0, 0.0), |acc, &th| {
        let (sn, cs) = th.sin_cos();
        acc + C64::new(cs, -sn)
    });
    Ok(OrderParameter::from_mean(sum / theta.len() as f64))
}

/// Amplitude and phase of an atom's trap oscillation,
/// `theta(tau) ~ center_offset + amp cos(nu tau + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecularOscillation {
    pub amp: f64,
    pub phase: f64,
    pub center_offset: f64,
}

impl SecularOscillation {
    /// `(theta, p)` on the pure harmonic orbit at time `tau`.
    pub fn evaluate(&self, nu: f64, tau: f64) -> (f64, f64) {
        let (s, c) = (nu * tau + self.phase).sin_cos();
        (self.center_offset + self.amp * c, -nu * self.amp * s)
    }
}

/// Inverts `(theta, p)` at time `tau` into the harmonic orbit through that
/// point, with the trap centred at `theta = 0`.
pub fn extract_oscillation(theta: f64, p: f64, nu: f64, tau: f64) -> Result<SecularOscillation> {
    extract_oscillation_about(theta, p, nu, tau, 0.0)
}

pub fn extract_oscillation_about(
    theta: f64,
    p: f64,
    nu: f64,
    tau: f64,
    center: f64,
) -> Result<SecularOscillation> {
    if !(nu > 0.0) {
        return Err(invalid("nu must be positive to define a trap oscillation"));
    }
    let x = theta - center;
    let y = -p / nu;
    Ok(SecularOscillation {
        amp: x.hypot(y),
        phase: wrap_phase(y.atan2(x) - nu * tau),
        center_offset: center,
    })
}

/// Secular order parameter `R0 e^{i Phi0} = (1/N) sum_j e^{i amp_j cos(phase_j)}`.
pub fn secular_order_parameter(oscillations: &[SecularOscillation]) -> Result<OrderParameter> {
    if oscillations.is_empty() {
        return Err(CarlError::EmptyEnsemble);
    }
    let sum = oscillations.iter().fold(C64::new(0.0, 0.0), |acc, o| {
        acc + C64::from_polar(1.0, o.amp * o.phase.cos())
    });
    Ok(OrderParameter::from_mean(sum / oscillations.len() as f64))
}

/// Fraction of atoms whose wavelength-periodic position `z / lambda mod 1`
/// lies in the circular window `[center - halfwidth, center + halfwidth)`.
pub fn bunching_fraction(theta: &[f64], center: f64, halfwidth: f64) -> Result<f64> {
    if !(halfwidth > 0.0 && halfwidth < 0.5) {
        return Err(invalid("halfwidth must lie in (0, 0.5)"));
    }
    if theta.is_empty() {
        return Err(CarlError::EmptyEnsemble);
    }
    let inside = theta
        .iter()
        .filter(|&&th| {
            let d = (theta_to_position_mod1(th) - center + 0.5).rem_euclid(1.0) - 0.5;
            d >= -halfwidth && d < halfwidth
        })
        .count();
    Ok(inside as f64 / theta.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub delta21: f64,
    pub gain: f64,
}

/// Interior local maxima of `gain` with height at least `min_height`.
///
/// A flat top counts once, at its lowest index, when both neighbours of the
/// plateau are strictly lower.
pub fn find_peaks(delta21: &[f64], gain: &[f64], min_height: f64) -> Result<Vec<Peak>> {
    if delta21.len() != gain.len() {
        return Err(CarlError::LengthMismatch {
            what: "delta21 vs gain",
            left: delta21.len(),
            right: gain.len(),
        });
    }
    if gain.len() < 3 {
        return Err(invalid("peak search needs at least 3 grid points"));
    }
    if delta21.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("grid must be strictly increasing"));
    }

    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < gain.len() {
        if gain[i] > gain[i - 1] {
            let start = i;
            while i + 1 < gain.len() && gain[i + 1] == gain[start] {
                i += 1;
            }
            if i + 1 < gain.len() && gain[i + 1] < gain[start] && gain[start] >= min_height {
                peaks.push(Peak {
                    index: start,
                    delta21: delta21[start],
                    gain: gain[start],
                });
            }
        }
        i += 1;
    }
    Ok(peaks)
}
