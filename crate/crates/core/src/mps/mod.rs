//! Matrix-product states of vectorized density matrices.
//!
//! Tensors are real: each qubit is expanded on the Hermitian operator basis
//! `{|0><0|, |1><1|, X/sqrt2, Y/sqrt2}` (see
//! [`crate::superop::hermitian_basis_change`]). A coarse site carries two
//! qubits, index `4 k0 + k1`. Basis coordinates that the gates can never
//! populate (for example the coherences when there is no drive) are dropped
//! from the physical index altogether.

pub mod finite;
pub mod infinite;
pub mod tensor;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};
use crate::observables::{Observables, ReducedStates, RunMetadata, TrajectoryRecord, TrajectorySeries};
use crate::superop::{vectorize, GateLayer, RealGate, SuperOperatorGate, SITE_DIM};

pub use finite::FiniteMPS;
pub use infinite::{CheckpointHeader, InfiniteMPS, TraceEnvironment};

/// Per-qubit trace functional in the Hermitian basis.
pub const QUBIT_TRACE: [f64; 4] = [1.0, 1.0, 0.0, 0.0];

/// Gate entries below this (relative to the largest entry) count as
/// structural zeros when deciding which basis coordinates are reachable.
const SUPPORT_TOLERANCE: f64 = 1e-13;

/// The set of per-qubit basis coordinates kept in the physical index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSpace {
    /// Sorted subset of `0..4`.
    pub digits: Vec<usize>,
}

impl ActiveSpace {
    pub fn full() -> Self {
        Self { digits: vec![0, 1, 2, 3] }
    }

    pub fn new(mut digits: Vec<usize>) -> Result<Self> {
        digits.sort_unstable();
        digits.dedup();
        if digits.is_empty() || digits.iter().any(|&d| d > 3) {
            return Err(Error::InvalidParameter(format!("bad active digits {digits:?}")));
        }
        Ok(Self { digits })
    }

    /// Local physical dimension of a coarse site.
    pub fn site_dim(&self) -> usize {
        self.digits.len() * self.digits.len()
    }

    /// Full 16-valued index of local site index `s`.
    pub fn site_index(&self, s: usize) -> usize {
        let q = self.digits.len();
        4 * self.digits[s / q] + self.digits[s % q]
    }

    pub fn site_indices(&self) -> Vec<usize> {
        (0..self.site_dim()).map(|s| self.site_index(s)).collect()
    }

    /// Trace functional on local site indices.
    pub fn site_trace(&self) -> Vec<f64> {
        self.site_indices().iter().map(|&f| QUBIT_TRACE[f / 4] * QUBIT_TRACE[f % 4]).collect()
    }

    pub fn contains(&self, other: &ActiveSpace) -> bool {
        other.digits.iter().all(|d| self.digits.contains(d))
    }

    /// Smallest digit set containing `seed` that both gates leave invariant.
    pub fn closure(seed: &ActiveSpace, gates: &[&RealGate]) -> Self {
        let mut digits = seed.digits.clone();
        loop {
            let mut grown = digits.clone();
            for gate in gates {
                let scale = (0..256)
                    .flat_map(|r| (0..256).map(move |c| (r, c)))
                    .map(|(r, c)| gate.matrix[(r, c)].abs())
                    .fold(0.0, f64::max);
                let inputs: Vec<usize> = (0..256).filter(|&c| window_digits(c).iter().all(|d| digits.contains(d))).collect();
                for r in 0..256 {
                    if inputs.iter().any(|&c| gate.matrix[(r, c)].abs() > SUPPORT_TOLERANCE * scale) {
                        for d in window_digits(r) {
                            if !grown.contains(&d) {
                                grown.push(d);
                            }
                        }
                    }
                }
            }
            grown.sort_unstable();
            if grown == digits {
                return Self { digits };
            }
            digits = grown;
        }
    }
}

fn window_digits(index: usize) -> [usize; 4] {
    [(index >> 6) & 3, (index >> 4) & 3, (index >> 2) & 3, index & 3]
}

/// Hermitian-basis coordinates `tr(B_k rho)` of a single-qubit state.
pub fn qubit_coordinates(rho: &CMat) -> Result<[f64; 4]> {
    if rho.nrows() != 2 || rho.ncols() != 2 {
        return Err(Error::InvalidDensityMatrix(format!("{}x{} matrix", rho.nrows(), rho.ncols())));
    }
    let herm = (rho[(0, 1)] - rho[(1, 0)].conj()).norm()
        .max(rho[(0, 0)].im.abs())
        .max(rho[(1, 1)].im.abs());
    if herm > 1e-12 {
        return Err(Error::InvalidDensityMatrix(format!("not Hermitian (defect {herm:.2e})")));
    }
    let trace = rho[(0, 0)].re + rho[(1, 1)].re;
    if (trace - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDensityMatrix(format!("trace {trace}")));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let v = vectorize(1, rho.as_ref());
    // tr(B rho) with B = X/sqrt2, Y/sqrt2.
    Ok([rho[(0, 0)].re, rho[(1, 1)].re, r * (v[1] + v[2]).re, r * (v[2] - v[1]).im])
}

/// Schmidt-value truncation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub max_bond: usize,
    /// Singular values below `tolerance * largest` are dropped.
    pub tolerance: f64,
}

impl TruncationConfig {
    pub fn new(max_bond: usize) -> Result<Self> {
        let cfg = Self { max_bond, tolerance: 1e-12 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// No truncation beyond numerically zero singular values.
    pub fn exact() -> Self {
        Self { max_bond: usize::MAX, tolerance: 1e-14 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_bond < 1 {
            return Err(Error::BondOverflow(self.max_bond));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Number of singular values to keep and the discarded weight. Values come
/// sorted descending. A degenerate block straddling the cap is dropped whole
/// when at least half of the cap remains; otherwise the earlier values win.
pub fn truncate(values: &[f64], cfg: &TruncationConfig) -> (usize, f64) {
    let total: f64 = values.iter().map(|s| s * s).sum();
    if values.is_empty() || total == 0.0 {
        return (values.len().min(1), 0.0);
    }
    let cutoff = cfg.tolerance * values[0];
    let mut keep = values.iter().take_while(|&&s| s > cutoff).count().max(1);
    if keep > cfg.max_bond {
        keep = cfg.max_bond;
        let edge = values[keep - 1];
        let degenerate = |s: f64| (s - edge).abs() <= 1e-10 * edge;
        if degenerate(values[keep]) {
            let start = (0..keep).rev().take_while(|&i| degenerate(values[i])).last().unwrap_or(keep);
            if start >= cfg.max_bond.div_ceil(2) {
                keep = start;
            }
        }
    }
    let dropped: f64 = values[keep..].iter().map(|s| s * s).sum();
    (keep, dropped / total)
}

/// Truncation bookkeeping of one round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TruncationReport {
    /// Discarded weight on the A-B bond (V layer) and the B-A bond (W layer).
    pub discarded_weight: [f64; 2],
    pub max_bond: usize,
    /// `|mu_after / mu_before - 1|` of the per-cell trace, largest over layers.
    pub trace_drift: f64,
}

impl TruncationReport {
    pub fn total_discarded(&self) -> f64 {
        self.discarded_weight[0] + self.discarded_weight[1]
    }
}

/// Both round gates restricted to the reachable coordinates.
#[derive(Debug, Clone)]
pub struct RoundPropagator {
    pub active: ActiveSpace,
    /// Row/column index `s * d + t` over local site indices.
    pub v: RMat,
    pub w: RMat,
    pub tau: f64,
    pub params_hash: u64,
}

impl RoundPropagator {
    /// `seed` is the coordinate support of the initial state.
    pub fn new(v: &SuperOperatorGate, w: &SuperOperatorGate, seed: &ActiveSpace) -> Result<Self> {
        if v.layer != GateLayer::V || w.layer != GateLayer::W {
            return Err(Error::Shape("gates passed in the wrong layer order".into()));
        }
        let rv = v.to_hermitian_basis()?;
        let rw = w.to_hermitian_basis()?;
        let active = ActiveSpace::closure(seed, &[&rv, &rw]);
        Ok(Self { v: restrict(&rv.matrix, &active), w: restrict(&rw.matrix, &active), active, tau: v.tau, params_hash: v.params_hash })
    }

    pub fn identity(active: ActiveSpace) -> Self {
        let d = active.site_dim();
        let id = Mat::<f64>::identity(d * d, d * d);
        Self { active, v: id.clone(), w: id, tau: 0.0, params_hash: 0 }
    }

    pub fn gate(&self, layer: GateLayer) -> &RMat {
        match layer {
            GateLayer::V => &self.v,
            GateLayer::W => &self.w,
        }
    }
}

fn restrict(gate: &RMat, active: &ActiveSpace) -> RMat {
    let idx = active.site_indices();
    let d = idx.len();
    Mat::from_fn(d * d, d * d, |r, c| gate[(SITE_DIM * idx[r / d] + idx[r % d], SITE_DIM * idx[c / d] + idx[c % d])])
}

/// Digits carrying weight in a product of `coords`.
pub fn support(coords: &[f64; 4]) -> ActiveSpace {
    let digits: Vec<usize> = (0..4).filter(|&k| coords[k] != 0.0).collect();
    ActiveSpace { digits }
}

/// Re-indexes `site` from the `old` physical digits onto the larger `new`
/// set, with zero slices for the added coordinates.
pub(crate) fn pad_physical(site: &tensor::SiteTensor, old: &ActiveSpace, new: &ActiveSpace) -> Result<tensor::SiteTensor> {
    if !new.contains(old) {
        return Err(Error::Shape(format!("cannot shrink active digits {:?} to {:?}", old.digits, new.digits)));
    }
    let old_idx = old.site_indices();
    let (l, r) = (site.left(), site.right());
    let slices = new
        .site_indices()
        .iter()
        .map(|f| match old_idx.iter().position(|g| g == f) {
            Some(k) => site.slices[k].clone(),
            None => Mat::zeros(l, r),
        })
        .collect();
    Ok(tensor::SiteTensor { slices })
}

/// A state that can be advanced by one full round.
pub trait RoundEvolution: ReducedStates {
    fn advance(&mut self, prop: &RoundPropagator) -> Result<TruncationReport>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvolveOptions {
    pub rounds: usize,
    /// Observables are recorded every `stride` rounds and at the last round.
    pub stride: usize,
    /// Round index of the incoming state (non-zero when resuming). The
    /// incoming state is recorded only when this is zero.
    pub first_round: usize,
}

impl EvolveOptions {
    pub fn new(rounds: usize) -> Self {
        Self { rounds, stride: 1, first_round: 0 }
    }
}

/// Runs `opts.rounds` rounds, calling `hook(round, state)` after each one.
pub fn evolve<S: RoundEvolution>(
    state: &mut S,
    prop: &RoundPropagator,
    opts: &EvolveOptions,
    metadata: RunMetadata,
    mut hook: impl FnMut(usize, &S) -> Result<()>,
) -> Result<TrajectorySeries> {
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let mut series = TrajectorySeries::new(metadata);
    let record = |round: usize, state: &S, truncation: TruncationReport| -> Result<TrajectoryRecord> {
        Ok(TrajectoryRecord { round, t: round as f64 * prop.tau, observables: Observables::of(state)?, truncation })
    };
    if opts.first_round == 0 {
        series.push(record(0, state, TruncationReport { max_bond: 1, ..Default::default() })?);
    }
    let end = opts.first_round + opts.rounds;
    for round in opts.first_round + 1..=end {
        let report = state.advance(prop)?;
        if round % opts.stride == 0 || round == end {
            series.push(record(round, state, report)?);
        }
        hook(round, state)?;
    }
    Ok(series)
}

/// Open-chain evolution of `n_sites` coarse sites from a product of `rho`.
pub fn finite_evolve(
    n_sites: usize,
    rho: &CMat,
    v: &SuperOperatorGate,
    w: &SuperOperatorGate,
    truncation: TruncationConfig,
    opts: &EvolveOptions,
) -> Result<(FiniteMPS, TrajectorySeries)> {
    let mut state = FiniteMPS::product(n_sites, rho, truncation)?;
    let prop = RoundPropagator::new(v, w, &state.active)?;
    let metadata = RunMetadata { tau: v.tau, rounds: opts.rounds, stride: opts.stride, engine: format!("finite-{n_sites}"), ..Default::default() };
    let series = evolve(&mut state, &prop, opts, metadata.entropy_conventions(), |_, _| Ok(()))?;
    Ok((state, series))
}
