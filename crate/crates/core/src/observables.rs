//! Physical observables of vectorized-MPS states and trajectory records.
//!
//! States hand out a [`ReducedSnapshot`]: per-qubit and adjacent-pair
//! coordinates in the Hermitian basis `{|0><0|, |1><1|, X/sqrt2, Y/sqrt2}`,
//! plus the Schmidt spectra used for the half-chain entropy. Entropies use
//! the natural log and are computed from the doubled-space Schmidt values,
//! which in general differ from the von Neumann entropy of a physical
//! half-chain reduced state.

use std::io::Write;
use std::path::Path;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::mps::{TruncationReport, QUBIT_TRACE};
use crate::superop::{pauli_x, pauli_y, SITE_DIM};

/// Eigenvalues below this count as numerical noise.
pub const POSITIVITY_TOLERANCE: f64 = 1e-6;
/// Below this the input is rejected as unphysical.
pub const NONPHYSICAL_THRESHOLD: f64 = -1e-4;

/// Local reduced data of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSnapshot {
    /// One entry per physical qubit in chain order.
    pub qubits: Vec<[f64; 4]>,
    /// Adjacent pairs `(q, q + 1)`, index `4 a + b`. For a unit cell the last
    /// pair wraps into the next cell.
    pub pairs: Vec<[f64; 16]>,
    /// Schmidt spectra entering the half-chain entropy.
    pub schmidt: Vec<Vec<f64>>,
}

pub trait ReducedStates {
    fn snapshot(&self) -> Result<ReducedSnapshot>;
}

fn qubit_marginals(site: &[f64; SITE_DIM]) -> ([f64; 4], [f64; 4]) {
    let mut first = [0.0; 4];
    let mut second = [0.0; 4];
    for a in 0..4 {
        for b in 0..4 {
            first[a] += site[4 * a + b] * QUBIT_TRACE[b];
            second[b] += QUBIT_TRACE[a] * site[4 * a + b];
        }
    }
    (first, second)
}

impl ReducedSnapshot {
    /// Builds the snapshot from coarse-site coordinates and, for each bond
    /// `j`, the joint coordinates `bonds[j][s][t]` of sites `j` and `j + 1`.
    pub fn from_sites(sites: &[[f64; SITE_DIM]], bonds: &[Vec<[f64; SITE_DIM]>], schmidt: Vec<Vec<f64>>) -> Self {
        let mut qubits = Vec::with_capacity(2 * sites.len());
        let mut pairs = Vec::new();
        for (j, site) in sites.iter().enumerate() {
            let (q0, q1) = qubit_marginals(site);
            qubits.push(q0);
            qubits.push(q1);
            pairs.push(*site);
            if let Some(joint) = bonds.get(j) {
                let mut cross = [0.0; 16];
                for (s, row) in joint.iter().enumerate() {
                    let (a0, a1) = (s / 4, s % 4);
                    for (t, &value) in row.iter().enumerate() {
                        let (b0, b1) = (t / 4, t % 4);
                        cross[4 * a1 + b0] += QUBIT_TRACE[a0] * QUBIT_TRACE[b1] * value;
                    }
                }
                pairs.push(cross);
            }
        }
        Self { qubits, pairs, schmidt }
    }
}

/// Hermitian basis element `k` of one qubit.
pub fn basis_operator(k: usize) -> CMat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match k {
        0 => Mat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { ONE } else { ZERO }),
        1 => Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { ONE } else { ZERO }),
        2 => linalg::scale(pauli_x().as_ref(), C64::new(r, 0.0)),
        _ => linalg::scale(pauli_y().as_ref(), C64::new(r, 0.0)),
    }
}

pub fn qubit_density(coords: &[f64; 4]) -> CMat {
    let mut rho: CMat = Mat::zeros(2, 2);
    for (k, &c) in coords.iter().enumerate() {
        rho += linalg::scale(basis_operator(k).as_ref(), C64::new(c, 0.0));
    }
    rho
}

pub fn pair_density(coords: &[f64; 16]) -> CMat {
    let mut rho: CMat = Mat::zeros(4, 4);
    for (k, &c) in coords.iter().enumerate() {
        if c != 0.0 {
            let op = linalg::kron(basis_operator(k / 4).as_ref(), basis_operator(k % 4).as_ref());
            rho += linalg::scale(op.as_ref(), C64::new(c, 0.0));
        }
    }
    rho
}

/// Which reduced matrix to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sites {
    One(usize),
    /// Qubits `q` and `q + 1`.
    Pair(usize),
}

pub fn reduce_density(state: &impl ReducedStates, sites: Sites) -> Result<CMat> {
    let snap = state.snapshot()?;
    match sites {
        Sites::One(q) => snap.qubits.get(q).map(qubit_density),
        Sites::Pair(q) => snap.pairs.get(q).map(pair_density),
    }
    .ok_or_else(|| Error::InvalidParameter(format!("no reduced state for {sites:?}")))
}

pub fn occupation_density(state: &impl ReducedStates) -> Result<f64> {
    Ok(mean_occupation(&state.snapshot()?))
}

fn mean_occupation(snap: &ReducedSnapshot) -> f64 {
    snap.qubits.iter().map(|c| c[1]).sum::<f64>() / snap.qubits.len() as f64
}

/// `-sum p log p` with `p = lambda^2 / sum lambda^2`.
pub fn schmidt_entropy(values: &[f64]) -> f64 {
    let total: f64 = values.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return 0.0;
    }
    let s: f64 = values
        .iter()
        .map(|x| x * x / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    s.max(0.0)
}

fn mean_entropy(snap: &ReducedSnapshot) -> f64 {
    if snap.schmidt.is_empty() {
        return 0.0;
    }
    snap.schmidt.iter().map(|v| schmidt_entropy(v)).sum::<f64>() / snap.schmidt.len() as f64
}

pub fn half_chain_entropy(state: &impl ReducedStates) -> Result<f64> {
    Ok(mean_entropy(&state.snapshot()?))
}

pub fn l1_coherence(rho: &CMat) -> f64 {
    let mut total = 0.0;
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            if i != j {
                total += rho[(i, j)].norm();
            }
        }
    }
    total
}

fn hermitian_part(rho: &CMat) -> CMat {
    Mat::from_fn(rho.nrows(), rho.ncols(), |i, j| (rho[(i, j)] + rho[(j, i)].conj()) * 0.5)
}

pub fn min_eigenvalue(rho: &CMat) -> Result<f64> {
    let (w, _) = linalg::eigh(hermitian_part(rho).as_ref())?;
    Ok(w[0])
}

/// Wootters concurrence of a two-qubit density matrix.
pub fn concurrence(rho: &CMat) -> Result<f64> {
    if rho.nrows() != 4 || rho.ncols() != 4 {
        return Err(Error::Shape(format!("{}x{} two-qubit state", rho.nrows(), rho.ncols())));
    }
    let herm = hermitian_part(rho);
    let (w, u) = linalg::eigh(herm.as_ref())?;
    if w[0] < NONPHYSICAL_THRESHOLD {
        return Err(Error::NonPhysicalInput(w[0]));
    }
    let roots: Vec<f64> = w.iter().map(|&x| if x > 0.0 { x.sqrt() } else { 0.0 }).collect();
    let sqrt_rho = &u * Mat::from_fn(4, 4, |i, j| if i == j { C64::new(roots[i], 0.0) } else { ZERO }) * u.adjoint();
    let yy = linalg::kron(pauli_y().as_ref(), pauli_y().as_ref());
    let flipped = &yy * linalg::conjugate(herm.as_ref()) * &yy;
    // sqrt(rho) rho~ sqrt(rho) shares its spectrum with rho rho~.
    let m = hermitian_part(&(&sqrt_rho * &flipped * &sqrt_rho));
    let (ev, _) = linalg::eigh(m.as_ref())?;
    let mut l: Vec<f64> = ev.iter().map(|&x| x.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok((l[0] - l[1] - l[2] - l[3]).max(0.0))
}

/// Observables of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub n: f64,
    pub entropy: f64,
    /// Mean single-qubit l1 coherence.
    pub c1: f64,
    /// Largest adjacent-pair concurrence.
    pub concurrence: f64,
    /// Smallest eigenvalue over all one- and two-qubit reduced matrices.
    pub min_eigenvalue: f64,
}

impl Observables {
    pub fn from_snapshot(snap: &ReducedSnapshot) -> Result<Self> {
        let mut c1 = 0.0;
        let mut min_ev = f64::INFINITY;
        for q in &snap.qubits {
            let rho = qubit_density(q);
            c1 += l1_coherence(&rho);
            min_ev = min_ev.min(min_eigenvalue(&rho)?);
        }
        let mut conc: f64 = 0.0;
        for p in &snap.pairs {
            let rho = pair_density(p);
            min_ev = min_ev.min(min_eigenvalue(&rho)?);
            conc = conc.max(concurrence(&rho)?);
        }
        Ok(Self {
            n: mean_occupation(snap),
            entropy: mean_entropy(snap),
            c1: c1 / snap.qubits.len() as f64,
            concurrence: conc,
            min_eigenvalue: min_ev,
        })
    }

    pub fn of(state: &impl ReducedStates) -> Result<Self> {
        Self::from_snapshot(&state.snapshot()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub round: usize,
    pub t: f64,
    pub observables: Observables,
    pub truncation: TruncationReport,
}

/// Run metadata stored next to the records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub p: f64,
    pub omega: f64,
    pub mode: String,
    pub tau: f64,
    pub trotter_constant: f64,
    pub max_bond: usize,
    pub truncation_tolerance: f64,
    pub rounds: usize,
    pub stride: usize,
    pub preset: String,
    pub engine: String,
    pub params_hash: u64,
    pub entropy_log_base: String,
    pub entropy_definition: String,
}

impl RunMetadata {
    pub fn entropy_conventions(mut self) -> Self {
        self.entropy_log_base = "e".into();
        self.entropy_definition = "renormalized doubled-space Schmidt values, mean over the two cell bonds".into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectorySeries {
    pub metadata: RunMetadata,
    pub records: Vec<TrajectoryRecord>,
}

#[derive(Serialize)]
struct CsvRow {
    round: usize,
    t: f64,
    n: f64,
    #[serde(rename = "S")]
    entropy: f64,
    #[serde(rename = "C1")]
    c1: f64,
    concurrence: f64,
    trace_drift: f64,
    discarded_weight: f64,
}

impl TrajectorySeries {
    pub fn new(metadata: RunMetadata) -> Self {
        Self { metadata, records: Vec::new() }
    }

    pub fn push(&mut self, record: TrajectoryRecord) {
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn densities(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.observables.n).collect()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.observables.entropy).collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(CsvRow {
                round: r.round,
                t: r.t,
                n: r.observables.n,
                entropy: r.observables.entropy,
                c1: r.observables.c1,
                concurrence: r.observables.concurrence,
                trace_drift: r.truncation.trace_drift,
                discarded_weight: r.truncation.total_discarded(),
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }
}
