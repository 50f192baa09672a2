//! CSV and JSON export.
//!
//! All writers return strings. Every file opens with a `# config_digest=`
//! line; readers skip lines starting with `#`. Floats carry 17 significant
//! digits so values round-trip exactly.

use std::fmt::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Peak;
use crate::dynamics::{Snapshot, Trajectory};
use crate::error::{CarlError, Result};
use crate::model::{theta_to_position_mod1, EnsembleState};
use crate::sweep::{Spectrum, SweepSpec};

pub const TRAJECTORY_HEADER: &str = "tau,re_a1,im_a1,abs_a1_sq,re_c,im_c,r,phi";
pub const SNAPSHOT_HEADER: &str = "tau,atom,theta,p,re_sigma,im_sigma,sigma_z,z_over_lambda_mod1";
pub const SPECTRUM_HEADER: &str = "delta21,gain";
pub const PEAKS_HEADER: &str = "delta21,gain,nearest_n,offset";

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn digest_line(out: &mut String, digest: &str) {
    writeln!(out, "# config_digest={digest}").unwrap();
}

fn row(out: &mut String, values: &[f64]) {
    let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

pub fn trajectory_csv(traj: &Trajectory, digest: &str) -> String {
    let mut out = String::new();
    digest_line(&mut out, digest);
    if let Some(msg) = &traj.failure {
        writeln!(out, "# failure={msg}").unwrap();
    }
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for i in 0..traj.len() {
        let a = traj.a1_series[i];
        let c = traj.c_series[i];
        row(
            &mut out,
            &[
                traj.times[i],
                a.re,
                a.im,
                a.norm_sqr(),
                c.re,
                c.im,
                traj.r_series[i],
                traj.phi_series[i],
            ],
        );
    }
    out
}

pub fn snapshot_csv(snapshot: &Snapshot, digest: &str) -> String {
    let s = &snapshot.state;
    let mut out = String::new();
    digest_line(&mut out, digest);
    writeln!(out, "# a1={},{}", fmt_f64(s.a1.re), fmt_f64(s.a1.im)).unwrap();
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    for j in 0..s.len() {
        let cells = [
            fmt_f64(snapshot.tau),
            j.to_string(),
            fmt_f64(s.theta[j]),
            fmt_f64(s.p[j]),
            fmt_f64(s.sigma[j].re),
            fmt_f64(s.sigma[j].im),
            fmt_f64(s.sigma_z[j]),
            fmt_f64(theta_to_position_mod1(s.theta[j])),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> CarlError {
    CarlError::Parse {
        line,
        message: message.into(),
    }
}

/// Data rows of a CSV as `(line number, cells)`, after checking the header.
fn data_rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == header => {}
        Some((n, h)) => return Err(parse_err(n, format!("expected header `{header}`, found `{h}`"))),
        None => return Err(parse_err(0, "missing header")),
    }
    let width = header.split(',').count();
    lines
        .map(|(n, l)| {
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            if cells.len() != width {
                return Err(parse_err(n, format!("expected {width} columns, found {}", cells.len())));
            }
            Ok((n, cells))
        })
        .collect()
}

fn cell_f64(line: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| parse_err(line, format!("not a number: `{cell}`")))
}

/// Reads a snapshot written by [`snapshot_csv`]. The probe amplitude comes
/// from the `# a1=` comment when present and is zero otherwise.
pub fn read_snapshot_csv(text: &str) -> Result<EnsembleState> {
    let a1 = text
        .lines()
        .find_map(|l| l.strip_prefix("# a1="))
        .map(|v| -> Result<C64> {
            let (re, im) = v
                .split_once(',')
                .ok_or_else(|| parse_err(0, "malformed a1 comment"))?;
            Ok(C64::new(cell_f64(0, re.trim())?, cell_f64(0, im.trim())?))
        })
        .transpose()?
        .unwrap_or_default();

    let rows = data_rows(text, SNAPSHOT_HEADER)?;
    if rows.is_empty() {
        return Err(CarlError::EmptyEnsemble);
    }
    let mut state = EnsembleState {
        tau: cell_f64(rows[0].0, rows[0].1[0])?,
        theta: Vec::with_capacity(rows.len()),
        p: Vec::with_capacity(rows.len()),
        sigma: Vec::with_capacity(rows.len()),
        sigma_z: Vec::with_capacity(rows.len()),
        a1,
    };
    for (n, cells) in &rows {
        let tau = cell_f64(*n, cells[0])?;
        if tau != state.tau {
            return Err(parse_err(*n, "snapshot rows disagree on tau"));
        }
        state.theta.push(cell_f64(*n, cells[2])?);
        state.p.push(cell_f64(*n, cells[3])?);
        state
            .sigma
            .push(C64::new(cell_f64(*n, cells[4])?, cell_f64(*n, cells[5])?));
        state.sigma_z.push(cell_f64(*n, cells[6])?);
    }
    Ok(state)
}

pub fn spectrum_csv(spectrum: &Spectrum, digest: &str) -> String {
    let mut out = String::new();
    digest_line(&mut out, digest);
    out.push_str(SPECTRUM_HEADER);
    out.push('\n');
    for (&d, &g) in spectrum.delta21.iter().zip(&spectrum.gain) {
        row(&mut out, &[d, g]);
    }
    out
}

/// Reads a spectrum CSV along with its digest comment, if any.
pub fn read_spectrum_csv(text: &str) -> Result<Spectrum> {
    let rows = data_rows(text, SPECTRUM_HEADER)?;
    let mut delta21 = Vec::with_capacity(rows.len());
    let mut gain = Vec::with_capacity(rows.len());
    for (n, cells) in &rows {
        delta21.push(cell_f64(*n, cells[0])?);
        gain.push(cell_f64(*n, cells[1])?);
    }
    let mut spectrum = Spectrum::new(delta21, gain)?;
    if let Some(d) = text.lines().find_map(|l| l.strip_prefix("# config_digest=")) {
        spectrum.meta.config_digest = d.trim().to_string();
    }
    Ok(spectrum)
}

pub fn peaks_csv(peaks: &[Peak], nu: f64, digest: &str) -> String {
    let mut out = String::new();
    digest_line(&mut out, digest);
    out.push_str(PEAKS_HEADER);
    out.push('\n');
    for p in peaks {
        let n = if nu > 0.0 { (p.delta21 / nu).round() } else { 0.0 };
        let offset = p.delta21 - n * nu;
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(p.delta21),
            fmt_f64(p.gain),
            n as i64,
            fmt_f64(offset)
        )
        .unwrap();
    }
    out
}

/// Reproducibility record written next to a sweep's spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub config_digest: String,
    pub code_version: String,
    pub spec: SweepSpec,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    pub diverged_points: Vec<usize>,
}

impl SweepManifest {
    pub fn new(spec: &SweepSpec, spectrum: &Spectrum, workers: usize) -> Self {
        SweepManifest {
            config_digest: spec.base_config.digest(),
            code_version: code_version(),
            spec: spec.clone(),
            seed: spec.base_config.seed,
            workers,
            wall_time_s: spectrum.meta.wall_time_s,
            diverged_points: spectrum
                .meta
                .diverged
                .iter()
                .enumerate()
                .filter_map(|(i, &d)| d.then_some(i))
                .collect(),
        }
    }
}

/// Crate name and version, e.g. `carl-core 0.1.0`.
pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Pretty JSON with a `config_digest` key merged into the top-level object.
pub fn json_with_digest<T: Serialize>(value: &T, digest: &str) -> String {
    let mut map = serde_json::Map::new();
    map.insert("config_digest".into(), digest.into());
    match serde_json::to_value(value).expect("value serializes") {
        serde_json::Value::Object(obj) => map.extend(obj),
        other => {
            map.insert("value".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap();
    s.push('\n');
    s
}

/// Snapshot file names are indexed, not timed, so they sort in order.
pub fn snapshot_file_name(index: usize) -> String {
    format!("snapshot_{index:03}.csv")
}
