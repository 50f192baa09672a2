//! Gain spectra over a uniform pump-probe detuning grid.
//!
//! Every grid point is an independent run from a fresh ensemble. Points may
//! be evaluated on any number of workers; results are assembled by grid
//! index, so a spectrum is bit-identical whatever the worker count.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::diagnostics::{find_peaks, gain, Peak};
use crate::dynamics::{integrate, RunSchedule};
use crate::error::{invalid, Result};
use crate::model::init_ensemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Every grid point starts from the ensemble of `base_config.seed`.
    #[default]
    Shared,
    /// Grid point `i` uses seed `base + i`.
    PerPoint(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub delta21_min: f64,
    pub delta21_max: f64,
    pub n_points: usize,
    pub base_config: RunConfig,
    pub seed_policy: SeedPolicy,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(invalid("a sweep needs at least 2 points"));
        }
        if !(self.delta21_min.is_finite()
            && self.delta21_max.is_finite()
            && self.delta21_min < self.delta21_max)
        {
            return Err(invalid("delta21_min must be below delta21_max"));
        }
        self.base_config.validate()?;
        Ok(())
    }

    /// `min + i (max - min) / (n_points - 1)`.
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.delta21_max - self.delta21_min) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| self.delta21_min + i as f64 * step)
            .collect()
    }

    pub fn point_config(&self, index: usize, delta21: f64) -> RunConfig {
        let seed = match self.seed_policy {
            SeedPolicy::Shared => self.base_config.seed,
            SeedPolicy::PerPoint(base) => base.wrapping_add(index as u64),
        };
        RunConfig {
            delta21,
            seed,
            ..self.base_config.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub config_digest: String,
    pub wall_time_s: f64,
    pub diverged: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub delta21: Vec<f64>,
    pub gain: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(delta21: Vec<f64>, gain: Vec<f64>) -> Result<Self> {
        if delta21.len() != gain.len() {
            return Err(invalid("delta21 and gain differ in length"));
        }
        if delta21.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("grid must be strictly increasing"));
        }
        let n = gain.len();
        Ok(Spectrum {
            delta21,
            gain,
            meta: SpectrumMeta {
                config_digest: String::new(),
                wall_time_s: 0.0,
                diverged: vec![false; n],
            },
        })
    }

    pub fn len(&self) -> usize {
        self.delta21.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta21.is_empty()
    }

    pub fn peaks(&self, min_height: f64) -> Result<Vec<Peak>> {
        find_peaks(&self.delta21, &self.gain, min_height)
    }

    pub fn max_gain(&self) -> Option<(f64, f64)> {
        self.delta21
            .iter()
            .zip(&self.gain)
            .map(|(&d, &g)| (d, g))
            .fold(None, |best, cur| match best {
                Some((_, g)) if g >= cur.1 => best,
                _ => Some(cur),
            })
    }

    pub fn min_gain(&self) -> Option<(f64, f64)> {
        self.delta21
            .iter()
            .zip(&self.gain)
            .map(|(&d, &g)| (d, g))
            .fold(None, |best, cur| match best {
                Some((_, g)) if g <= cur.1 => best,
                _ => Some(cur),
            })
    }

    /// Linear interpolation of the gain; `None` outside the grid.
    pub fn gain_at(&self, delta21: f64) -> Option<f64> {
        let (first, last) = (*self.delta21.first()?, *self.delta21.last()?);
        if !(delta21 >= first && delta21 <= last) {
            return None;
        }
        let hi = self.delta21.partition_point(|&d| d < delta21);
        if hi == 0 {
            return Some(self.gain[0]);
        }
        let lo = hi - 1;
        let (d0, d1) = (self.delta21[lo], self.delta21[hi]);
        let t = (delta21 - d0) / (d1 - d0);
        Some(self.gain[lo] + t * (self.gain[hi] - self.gain[lo]))
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResult {
    pub gain: f64,
    pub diverged: bool,
}

/// Integrates one configuration to `tau_end` and returns the probe gain.
pub fn run_point(cfg: &RunConfig) -> Result<PointResult> {
    let params = cfg.params();
    let ic = cfg.initial_conditions();
    let initial = init_ensemble(&ic, &params)?;
    let base = cfg.schedule();
    let schedule = RunSchedule {
        record_stride: base.n_steps().max(1),
        snapshot_times: Vec::new(),
        ..base
    };
    let traj = integrate(&initial, &params, &schedule, cfg.motion)?;
    Ok(PointResult {
        gain: gain(traj.final_state.a1, ic.a1_0)?,
        diverged: traj.diverged,
    })
}

/// Seconds since the call; `wasm32` has no clock and reports 0.
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl FnOnce() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl FnOnce() -> f64 {
    || 0.0
}

/// Runs the sweep on `workers` threads (sequentially without the
/// `parallel` feature).
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<Spectrum> {
    spec.validate()?;
    if workers == 0 {
        return Err(invalid("workers must be at least 1"));
    }
    let elapsed = stopwatch();
    let grid = spec.grid();
    let configs: Vec<RunConfig> = grid
        .iter()
        .enumerate()
        .map(|(i, &d)| spec.point_config(i, d))
        .collect();

    let results = evaluate(&configs, workers)?;

    Ok(Spectrum {
        delta21: grid,
        gain: results.iter().map(|r| r.gain).collect(),
        meta: SpectrumMeta {
            config_digest: spec.base_config.digest(),
            wall_time_s: elapsed(),
            diverged: results.iter().map(|r| r.diverged).collect(),
        },
    })
}

#[cfg(feature = "parallel")]
fn evaluate(configs: &[RunConfig], workers: usize) -> Result<Vec<PointResult>> {
    use rayon::prelude::*;
    if workers == 1 {
        return configs.iter().map(run_point).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    pool.install(|| configs.par_iter().map(run_point).collect())
}

#[cfg(not(feature = "parallel"))]
fn evaluate(configs: &[RunConfig], _workers: usize) -> Result<Vec<PointResult>> {
    configs.iter().map(run_point).collect()
}

/// Contrast reported when the reference gain between sidebands is not
/// positive.
pub const CONTRAST_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombThresholds {
    pub min_height: f64,
    /// Maximum distance from `n nu`, in grid steps.
    pub max_offset_steps: f64,
    /// Required `G(peak) / G(nearest half-integer multiple of nu)`.
    pub min_contrast: f64,
    /// Required number of matched peaks at positive `n`.
    pub min_peaks: usize,
}

impl Default for CombThresholds {
    fn default() -> Self {
        CombThresholds {
            min_height: 0.0,
            max_offset_steps: 1.0,
            min_contrast: 10.0,
            min_peaks: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombPeak {
    pub delta21: f64,
    pub gain: f64,
    pub nearest_n: i64,
    /// `delta21 - nearest_n * nu`.
    pub offset: f64,
    pub midpoint_gain: Option<f64>,
    /// Capped at [`CONTRAST_CAP`].
    pub contrast: Option<f64>,
    /// Positive `n`, within the offset tolerance and above the contrast
    /// threshold.
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombReport {
    pub nu: f64,
    pub grid_step: f64,
    pub thresholds: CombThresholds,
    pub peaks: Vec<CombPeak>,
    pub matched: usize,
    pub pass: bool,
    pub summary: String,
}

/// Matches detected peaks against the Raman comb `n nu`.
pub fn compare_comb(spectrum: &Spectrum, nu: f64, thresholds: &CombThresholds) -> Result<CombReport> {
    if !(nu > 0.0) {
        return Err(invalid("nu must be positive"));
    }
    let peaks = spectrum.peaks(thresholds.min_height)?;
    let grid_step = (spectrum.delta21[spectrum.len() - 1] - spectrum.delta21[0])
        / (spectrum.len() - 1) as f64;
    let tolerance = thresholds.max_offset_steps * grid_step * (1.0 + 1e-9);

    let comb_peaks: Vec<CombPeak> = peaks
        .iter()
        .map(|p| {
            let x = p.delta21 / nu;
            let n = x.round();
            let offset = p.delta21 - n * nu;
            let halves: Vec<f64> = if (x - n).abs() < 1e-9 {
                vec![n - 0.5, n + 0.5]
            } else {
                vec![x.floor() + 0.5]
            };
            let midpoint_gain = halves
                .iter()
                .filter_map(|h| spectrum.gain_at(h * nu))
                .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))));
            let contrast = midpoint_gain.map(|m| {
                if m > 0.0 {
                    (p.gain / m).min(CONTRAST_CAP)
                } else {
                    CONTRAST_CAP
                }
            });
            let matched = n >= 1.0
                && offset.abs() <= tolerance
                && contrast.is_some_and(|c| c >= thresholds.min_contrast);
            CombPeak {
                delta21: p.delta21,
                gain: p.gain,
                nearest_n: n as i64,
                offset,
                midpoint_gain,
                contrast,
                matched,
            }
        })
        .collect();

    let matched = comb_peaks.iter().filter(|p| p.matched).count();
    let pass = matched >= thresholds.min_peaks;
    let summary = if comb_peaks.is_empty() {
        "no comb".to_string()
    } else {
        format!(
            "{} peaks, {} matched to positive multiples of nu = {}: {}",
            comb_peaks.len(),
            matched,
            nu,
            if pass { "comb" } else { "no comb" }
        )
    };
    Ok(CombReport {
        nu,
        grid_step,
        thresholds: *thresholds,
        peaks: comb_peaks,
        matched,
        pass,
        summary,
    })
}
