//! Parameter sweeps, critical-point location and decay-exponent fits.

use std::io::Write;
use std::path::{Path, PathBuf};

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ONE, ZERO};
use crate::model::{dp_site_rule, quantum_rates, RatePreset};
use crate::mps::{evolve, EvolveOptions, InfiniteMPS, RoundPropagator, TruncationConfig};
use crate::observables::{RunMetadata, TrajectorySeries};
use crate::superop::{build_round_gates, ScheduleConfig, ScheduleMode, DEFAULT_DISCRETE_TAU, DEFAULT_TROTTER_CONSTANT};

/// Fits need at least this many tail points.
pub const MIN_TAIL_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub p_grid: Vec<f64>,
    pub omega: f64,
    pub mode: ScheduleMode,
    /// Round duration in discrete mode.
    pub tau: f64,
    /// `C` in `tau = sqrt(C / (p (1 - p)))` for continuous mode.
    pub trotter_constant: f64,
    pub max_bond: usize,
    pub truncation_tolerance: f64,
    pub rounds: usize,
    pub stride: usize,
    pub preset: RatePreset,
    /// Fraction of the log-time range used as the fit tail.
    pub tail_fraction: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            p_grid: vec![0.6, 0.7, 0.8],
            omega: 0.0,
            mode: ScheduleMode::Continuous,
            tau: DEFAULT_DISCRETE_TAU,
            trotter_constant: DEFAULT_TROTTER_CONSTANT,
            max_bond: 64,
            truncation_tolerance: 1e-12,
            rounds: 400,
            stride: 1,
            preset: RatePreset::default(),
            tail_fraction: 0.5,
            output_dir: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() || self.p_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("p grid must be non-empty and strictly increasing".into()));
        }
        if self.max_bond < 1 {
            return Err(Error::BondOverflow(self.max_bond));
        }
        if self.rounds < 1 || self.stride < 1 {
            return Err(Error::InvalidParameter("rounds and stride must be at least 1".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!("tail fraction {}", self.tail_fraction)));
        }
        Ok(())
    }

    pub fn schedule(&self, p: f64) -> Result<ScheduleConfig> {
        match self.mode {
            ScheduleMode::Continuous => ScheduleConfig::continuous(p, self.trotter_constant),
            ScheduleMode::Discrete => ScheduleConfig::discrete(self.tau),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// One iTEBD trajectory from the fully occupied state.
pub fn run_point(config: &SweepConfig, p: f64) -> Result<TrajectorySeries> {
    run_point_with(config, p, |_, _| Ok(()))
}

pub fn run_point_with(config: &SweepConfig, p: f64, hook: impl FnMut(usize, &InfiniteMPS) -> Result<()>) -> Result<TrajectorySeries> {
    let params = quantum_rates(&dp_site_rule(p)?, config.omega, config.preset)?;
    let schedule = config.schedule(p)?;
    let (v, w) = build_round_gates(&params, &schedule)?;
    let full = Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { ONE } else { ZERO });
    let truncation = TruncationConfig { max_bond: config.max_bond, tolerance: config.truncation_tolerance };
    let mut state = InfiniteMPS::init_product_state(&full, truncation)?;
    let prop = RoundPropagator::new(&v, &w, &state.active)?;
    let metadata = point_metadata(config, p, &schedule, &prop);
    let opts = EvolveOptions { rounds: config.rounds, stride: config.stride, first_round: 0 };
    evolve(&mut state, &prop, &opts, metadata, hook)
}

pub fn point_metadata(config: &SweepConfig, p: f64, schedule: &ScheduleConfig, prop: &RoundPropagator) -> RunMetadata {
    RunMetadata {
        p,
        omega: config.omega,
        mode: format!("{:?}", schedule.mode).to_lowercase(),
        tau: schedule.tau,
        trotter_constant: schedule.trotter_constant,
        max_bond: config.max_bond,
        truncation_tolerance: config.truncation_tolerance,
        rounds: config.rounds,
        stride: config.stride,
        preset: config.preset.name().into(),
        engine: "itebd".into(),
        params_hash: prop.params_hash,
        ..Default::default()
    }
    .entropy_conventions()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p: f64,
    pub series: Option<TrajectorySeries>,
    pub error: Option<String>,
}

/// Runs every grid point in the rayon pool; failures are recorded per point.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    Ok(config
        .p_grid
        .par_iter()
        .map(|&p| match run_point(config, p) {
            Ok(series) => SweepPoint { p, series: Some(series), error: None },
            Err(e) => SweepPoint { p, series: None, error: Some(e.to_string()) },
        })
        .collect())
}

/// Indices of the tail: the last `fraction` of the log-time range spanned
/// by the positive times.
pub fn tail_window(t: &[f64], fraction: f64) -> Vec<usize> {
    let positive: Vec<usize> = (0..t.len()).filter(|&i| t[i] > 0.0).collect();
    let (Some(&first), Some(&last)) = (positive.first(), positive.last()) else {
        return Vec::new();
    };
    let (lo, hi) = (t[first].ln(), t[last].ln());
    let start = hi - fraction * (hi - lo);
    positive.into_iter().filter(|&i| t[i].ln() >= start - 1e-12).collect()
}

fn log_points(t: &[f64], n: &[f64], idx: &[usize], log_time: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let pts: Vec<(f64, f64)> = idx
        .iter()
        .filter(|&&i| n[i] > 0.0)
        .map(|&i| (if log_time { t[i].ln() } else { t[i] }, n[i].ln()))
        .collect();
    if pts.len() < MIN_TAIL_POINTS {
        return Err(Error::InsufficientTail { available: pts.len(), required: MIN_TAIL_POINTS });
    }
    Ok(pts.into_iter().unzip())
}

/// Least-squares polynomial coefficients (constant first) and RMS residual.
fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<(Vec<f64>, f64)> {
    let k = degree + 1;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let spread = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max).max(1e-300);
    let u: Vec<f64> = x.iter().map(|v| (v - mean) / spread).collect();
    let design = Mat::from_fn(x.len(), k, |i, j| u[i].powi(j as i32));
    let rhs = Mat::from_fn(x.len(), 1, |i, _| y[i]);
    let normal = design.transpose() * &design;
    let b = design.transpose() * &rhs;
    let (vals, vecs) = crate::linalg::eigh_real(normal.as_ref())?;
    if vals[0] <= 1e-14 * vals[k - 1] {
        return Err(Error::IllConditioned("degenerate fit abscissae".into()));
    }
    // Solve in the eigenbasis of the (small, symmetric) normal matrix.
    let proj = vecs.transpose() * &b;
    let coef_u = &vecs * Mat::from_fn(k, 1, |i, _| proj[(i, 0)] / vals[i]);
    let fitted = &design * &coef_u;
    let rms = ((0..x.len()).map(|i| (fitted[(i, 0)] - y[i]).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    // Undo the affine change of variable.
    let mut coef = vec![0.0; k];
    for j in 0..k {
        let c = coef_u[(j, 0)] / spread.powi(j as i32);
        // c * (x - mean)^j expanded.
        for m in 0..=j {
            let binom = (0..m).fold(1.0, |acc, i| acc * (j - i) as f64 / (i + 1) as f64);
            coef[m] += c * binom * (-mean).powi((j - m) as i32);
        }
    }
    Ok((coef, rms))
}

/// Second-order coefficient of a quadratic fit of `log n` against `log t`
/// over the tail window.
pub fn curvature(t: &[f64], n: &[f64], tail_fraction: f64) -> Result<f64> {
    let idx = tail_window(t, tail_fraction);
    let (x, y) = log_points(t, n, &idx, true)?;
    Ok(polyfit(&x, &y, 2)?.0[2])
}

/// `p` where the curvature first changes from negative to positive, linearly
/// interpolated between neighbouring grid points.
pub fn locate_critical(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!("{} grid points, need at least 3", points.len())));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    for w in sorted.windows(2) {
        let ((p0, c0), (p1, c1)) = (w[0], w[1]);
        if c0 < 0.0 && c1 >= 0.0 {
            return Ok(p0 + (p1 - p0) * (-c0) / (c1 - c0));
        }
    }
    Err(Error::NoSignChange)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// `n ~ t^-delta`.
    PowerLaw,
    /// `n ~ exp(-delta t)`, offered as an alternative reading.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub p_c: Option<f64>,
    pub delta: f64,
    pub window: (f64, f64),
    /// RMS deviation of `log n` from the fitted line.
    pub residual: f64,
    pub points: usize,
    pub method: FitMethod,
}

pub fn fit_delta(t: &[f64], n: &[f64], tail_fraction: f64, method: FitMethod) -> Result<FitResult> {
    let idx = tail_window(t, tail_fraction);
    let (x, y) = log_points(t, n, &idx, method == FitMethod::PowerLaw)?;
    let (coef, residual) = polyfit(&x, &y, 1)?;
    let window = (t[idx[0]], t[*idx.last().expect("non-empty tail")]);
    Ok(FitResult { p_c: None, delta: -coef[1], window, residual, points: x.len(), method })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub p: f64,
    pub curvature: Option<f64>,
    pub final_n: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub points: Vec<PointSummary>,
    pub p_c: Option<f64>,
    pub fit: Option<FitResult>,
    pub fit_p: Option<f64>,
    pub runtime_seconds: f64,
    pub notes: Vec<String>,
}

/// Curvature classification of each point, `p_c`, and a power-law fit on
/// the grid point closest to `p_c`.
pub fn summarize(points: &[SweepPoint], tail_fraction: f64, runtime_seconds: f64) -> SweepSummary {
    let mut notes = Vec::new();
    let summaries: Vec<PointSummary> = points
        .iter()
        .map(|pt| match &pt.series {
            Some(s) => {
                let c = curvature(&s.times(), &s.densities(), tail_fraction);
                if let Err(e) = &c {
                    notes.push(format!("p = {}: {e}", pt.p));
                }
                PointSummary { p: pt.p, curvature: c.ok(), final_n: s.last().map(|r| r.observables.n), error: None }
            }
            None => PointSummary { p: pt.p, curvature: None, final_n: None, error: pt.error.clone() },
        })
        .collect();
    let curv: Vec<(f64, f64)> = summaries.iter().filter_map(|s| s.curvature.map(|c| (s.p, c))).collect();
    let p_c = match locate_critical(&curv) {
        Ok(p) => Some(p),
        Err(e) => {
            notes.push(format!("critical point: {e}"));
            None
        }
    };
    let mut fit = None;
    let mut fit_p = None;
    if let Some(pc) = p_c {
        let nearest = points
            .iter()
            .filter(|pt| pt.series.is_some())
            .min_by(|a, b| (a.p - pc).abs().partial_cmp(&(b.p - pc).abs()).unwrap_or(std::cmp::Ordering::Equal));
        if let Some(pt) = nearest {
            let s = pt.series.as_ref().expect("filtered");
            match fit_delta(&s.times(), &s.densities(), tail_fraction, FitMethod::PowerLaw) {
                Ok(mut f) => {
                    f.p_c = Some(pc);
                    fit = Some(f);
                    fit_p = Some(pt.p);
                }
                Err(e) => notes.push(format!("fit: {e}")),
            }
        }
    }
    SweepSummary { points: summaries, p_c, fit, fit_p, runtime_seconds, notes }
}

/// Long-format CSV: one row per `(p, record)`.
pub fn write_long_csv(points: &[SweepPoint], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p", "round", "t", "n", "S", "C1", "concurrence", "trace_drift", "discarded_weight"])?;
    for pt in points {
        if let Some(s) = &pt.series {
            for r in &s.records {
                let o = &r.observables;
                out.write_record([
                    pt.p.to_string(),
                    r.round.to_string(),
                    r.t.to_string(),
                    o.n.to_string(),
                    o.entropy.to_string(),
                    o.c1.to_string(),
                    o.concurrence.to_string(),
                    r.truncation.trace_drift.to_string(),
                    r.truncation.total_discarded().to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes one CSV and JSON per trajectory, the long-format CSV and the
/// summary into `dir`.
pub fn write_outputs(dir: &Path, points: &[SweepPoint], summary: &SweepSummary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for pt in points {
        if let Some(s) = &pt.series {
            let stem = format!("trajectory_p{:.4}", pt.p);
            s.save_csv(dir.join(format!("{stem}.csv")))?;
            s.save_json(dir.join(format!("{stem}.json")))?;
        }
    }
    write_long_csv(points, std::io::BufWriter::new(std::fs::File::create(dir.join("long.csv"))?))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(std::fs::File::create(dir.join("summary.json"))?), summary)?;
    Ok(())
}
