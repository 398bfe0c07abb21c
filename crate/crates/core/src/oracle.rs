//! Brute-force reference for small chains.
//!
//! Everything here works on plain density matrices with qubit 0 as the most
//! significant bit, and builds its superoperators from the action on the
//! matrix units `|i><j|` rather than from Kronecker products. It shares no
//! index bookkeeping with [`crate::superop`].

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, ZERO};
use crate::model::{NeighborhoodLabel, SteadyState3Cell, ThreeCellParams};
use crate::superop::{Partition, ScheduleConfig};

pub const MAX_QUBITS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundary {
    Open,
    Periodic,
}

/// Density matrix of an `n`-qubit chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub n: usize,
    pub rho: CMat,
}

impl DenseState {
    pub fn new(n: usize, rho: CMat) -> Result<Self> {
        check_size(n)?;
        let dim = 1usize << n;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::Shape(format!("{}x{} matrix for {n} qubits", rho.nrows(), rho.ncols())));
        }
        Ok(Self { n, rho })
    }

    /// Product of identical single-qubit states.
    pub fn product(n: usize, local: &CMat) -> Result<Self> {
        check_size(n)?;
        let mut rho = local.clone();
        for _ in 1..n {
            rho = linalg::kron(rho.as_ref(), local.as_ref());
        }
        Self::new(n, rho)
    }

    /// Classical basis state `|bits><bits|`.
    pub fn basis(bits: &[u8]) -> Result<Self> {
        let n = bits.len();
        check_size(n)?;
        let idx = bits.iter().fold(0usize, |acc, &b| 2 * acc + b as usize);
        let dim = 1usize << n;
        let rho = Mat::from_fn(dim, dim, |i, j| if i == idx && j == idx { C64::new(1.0, 0.0) } else { ZERO });
        Self::new(n, rho)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rho.nrows()).map(|i| self.rho[(i, i)]).sum()
    }

    /// `<1|rho_q|1>` for every qubit.
    pub fn occupations(&self) -> Vec<f64> {
        let dim = self.rho.nrows();
        (0..self.n)
            .map(|q| {
                let bit = self.n - 1 - q;
                (0..dim).filter(|i| (i >> bit) & 1 == 1).map(|i| self.rho[(i, i)].re).sum()
            })
            .collect()
    }

    /// Reduced state on `qubits` (kept in the given order).
    pub fn reduce(&self, qubits: &[usize]) -> CMat {
        let k = qubits.len();
        let sub = 1usize << k;
        let dim = self.rho.nrows();
        let rest: Vec<usize> = (0..self.n).filter(|q| !qubits.contains(q)).collect();
        let compose = |local: usize, env: usize| {
            let mut idx = 0usize;
            for (pos, &q) in qubits.iter().enumerate() {
                let bit = (local >> (k - 1 - pos)) & 1;
                idx |= bit << (self.n - 1 - q);
            }
            for (pos, &q) in rest.iter().enumerate() {
                let bit = (env >> (rest.len() - 1 - pos)) & 1;
                idx |= bit << (self.n - 1 - q);
            }
            idx
        };
        let envs = dim / sub;
        Mat::from_fn(sub, sub, |a, b| (0..envs).map(|e| self.rho[(compose(a, e), compose(b, e))]).sum())
    }

    /// Operator-Schmidt coefficients across the cut after the first `cut`
    /// qubits, normalized to unit 2-norm. Computed from the realigned matrix
    /// `M[(i_L j_L), (i_R j_R)] = rho[(i_L i_R), (j_L j_R)]`.
    pub fn operator_schmidt_values(&self, cut: usize) -> Result<Vec<f64>> {
        if cut == 0 || cut >= self.n {
            return Err(Error::InvalidParameter(format!("cut {cut} of {} qubits", self.n)));
        }
        let (dl, dr) = (1usize << cut, 1usize << (self.n - cut));
        let m = Mat::from_fn(dl * dl, dr * dr, |row, col| {
            let (il, jl) = (row / dl, row % dl);
            let (ir, jr) = (col / dr, col % dr);
            self.rho[(il * dr + ir, jl * dr + jr)]
        });
        let s = linalg::singular_values(m.as_ref())?;
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(s.into_iter().map(|x| x / norm).filter(|&x| x > 1e-14).collect())
    }

    /// `-tr(rho_Q ln rho_Q)` of the reduced state on `qubits`.
    pub fn von_neumann_entropy(&self, qubits: &[usize]) -> Result<f64> {
        let (w, _) = linalg::eigh(self.reduce(qubits).as_ref())?;
        Ok(w.into_iter().filter(|&x| x > 1e-15).map(|x| -x * x.ln()).sum())
    }

    fn flat(&self) -> Vec<C64> {
        let dim = self.rho.nrows();
        (0..dim * dim).map(|k| self.rho[(k / dim, k % dim)]).collect()
    }

    fn from_flat(n: usize, v: &[C64]) -> Self {
        let dim = 1usize << n;
        Self { n, rho: Mat::from_fn(dim, dim, |i, j| v[i * dim + j]) }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        return Err(Error::DimensionOverflow { requested: n, max: MAX_QUBITS });
    }
    Ok(())
}

/// Hamiltonian and jump operators of one rule on 3 qubits `(left, center, right)`.
fn local_operators(params: &ThreeCellParams) -> (CMat, Vec<CMat>) {
    let mut h: CMat = Mat::zeros(8, 8);
    let mut jumps = Vec::new();
    for label in NeighborhoodLabel::ALL {
        let r = params.get(label);
        let (a, b) = (label.alpha() as usize, label.beta() as usize);
        let ket = |c: usize| 4 * a + 2 * c + b;
        if r.theta != 0.0 {
            h[(ket(1), ket(0))] += C64::new(r.omega(), 0.0);
            h[(ket(0), ket(1))] += C64::new(r.omega(), 0.0);
        }
        if r.gamma_plus != 0.0 {
            let mut l: CMat = Mat::zeros(8, 8);
            l[(ket(1), ket(0))] = C64::new(r.gamma_plus.sqrt(), 0.0);
            jumps.push(l);
        }
        if r.gamma_minus != 0.0 {
            let mut l: CMat = Mat::zeros(8, 8);
            l[(ket(0), ket(1))] = C64::new(r.gamma_minus.sqrt(), 0.0);
            jumps.push(l);
        }
    }
    (h, jumps)
}

fn lindblad_action(h: &CMat, jumps: &[CMat], rho: &CMat) -> CMat {
    let i = C64::new(0.0, 1.0);
    let mut out = (h * rho - rho * h) * faer::Scale(-i);
    for l in jumps {
        let ld = l.adjoint().to_owned();
        let ldl = &ld * l;
        out += l * rho * &ld;
        out -= (&ldl * rho + rho * &ldl) * faer::Scale(C64::new(0.5, 0.0));
    }
    out
}

/// Local rule as a `64 x 64` superoperator, column `i * 8 + j` holding the
/// image of `|i><j|` in row-major order.
pub fn local_superoperator(params: &ThreeCellParams) -> CMat {
    let (h, jumps) = local_operators(params);
    let mut s = Mat::zeros(64, 64);
    for i in 0..8 {
        for j in 0..8 {
            let mut unit: CMat = Mat::zeros(8, 8);
            unit[(i, j)] = C64::new(1.0, 0.0);
            let img = lindblad_action(&h, &jumps, &unit);
            for k in 0..8 {
                for l in 0..8 {
                    s[(k * 8 + l, i * 8 + j)] = img[(k, l)];
                }
            }
        }
    }
    s
}

/// Center-site steady state of one rule with the neighbors frozen to `label`.
pub fn conditional_steady_state(params: &ThreeCellParams, label: NeighborhoodLabel) -> Result<SteadyState3Cell> {
    let s = local_superoperator(params);
    let (a, b) = (label.alpha() as usize, label.beta() as usize);
    let ket = |c: usize| 4 * a + 2 * c + b;
    let pair = |k: usize| ket(k / 2) * 8 + ket(k % 2);
    let block = Mat::from_fn(4, 4, |r, c| s[(pair(r), pair(c))]);
    let (_, sv, v) = linalg::svd_complex(block.as_ref())?;
    let scale = sv.first().copied().unwrap_or(0.0).max(1e-300);
    let tolerance = 1e-10;
    let null = sv.iter().filter(|&&x| x <= tolerance * scale).count();
    if null != 1 {
        return Err(Error::DegenerateNullSpace { dimension: null, tolerance });
    }
    let col = sv.len() - 1;
    let vec: Vec<C64> = (0..4).map(|r| v[(r, col)]).collect();
    let trace = vec[0] + vec[3];
    let norm: Vec<C64> = vec.iter().map(|z| z / trace).collect();
    Ok(SteadyState3Cell { empty: norm[0].re, active: norm[3].re, coherence: norm[2] })
}

/// Compressed-row sparse generator of a whole chain, acting on the
/// row-major flattening of the density matrix.
#[derive(Debug, Clone)]
pub struct DenseLiouvillian {
    pub n: usize,
    pub boundary: Boundary,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl DenseLiouvillian {
    pub fn dim(&self) -> usize {
        1usize << (2 * self.n)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        (0..self.dim())
            .map(|r| {
                (self.indptr[r]..self.indptr[r + 1])
                    .map(|k| self.values[k] * v[self.indices[k]])
                    .sum()
            })
            .collect()
    }

    pub fn one_norm(&self) -> f64 {
        let mut cols = vec![0.0; self.dim()];
        for (k, &c) in self.indices.iter().enumerate() {
            cols[c] += self.values[k].norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = Mat::zeros(self.dim(), self.dim());
        for r in 0..self.dim() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                m[(r, self.indices[k])] += self.values[k];
            }
        }
        m
    }
}

/// Qubit triples `(left, center, right)` of every rule on the chain.
pub fn rule_sites(n: usize, boundary: Boundary) -> Vec<[usize; 3]> {
    match boundary {
        Boundary::Open => (1..n.saturating_sub(1)).map(|c| [c - 1, c, c + 1]).collect(),
        Boundary::Periodic => (0..n).map(|c| [(c + n - 1) % n, c, (c + 1) % n]).collect(),
    }
}

fn extract(idx: usize, n: usize, sites: &[usize; 3]) -> usize {
    sites.iter().fold(0, |acc, &q| 2 * acc + ((idx >> (n - 1 - q)) & 1))
}

fn replace(idx: usize, n: usize, sites: &[usize; 3], local: usize) -> usize {
    let mut out = idx;
    for (pos, &q) in sites.iter().enumerate() {
        let bit = (local >> (2 - pos)) & 1;
        let shift = n - 1 - q;
        out = (out & !(1 << shift)) | (bit << shift);
    }
    out
}

pub fn assemble_chain_liouvillian(params: &ThreeCellParams, n: usize, boundary: Boundary) -> Result<DenseLiouvillian> {
    check_size(n)?;
    if n < 3 {
        return Err(Error::InvalidParameter(format!("chain needs at least 3 qubits, got {n}")));
    }
    let s = local_superoperator(params);
    let local_cols: Vec<Vec<(usize, C64)>> = (0..64)
        .map(|c| (0..64).filter(|&r| s[(r, c)] != ZERO).map(|r| (r, s[(r, c)])).collect())
        .collect();
    let dim = 1usize << n;
    let mut triplets = Vec::new();
    for sites in rule_sites(n, boundary) {
        for ket in 0..dim {
            let i = extract(ket, n, &sites);
            for bra in 0..dim {
                let j = extract(bra, n, &sites);
                let col = ket * dim + bra;
                for &(r, v) in &local_cols[i * 8 + j] {
                    let row = replace(ket, n, &sites, r / 8) * dim + replace(bra, n, &sites, r % 8);
                    triplets.push((row, col, v));
                }
            }
        }
    }
    triplets.sort_by_key(|t| (t.0, t.1));
    let mut indptr = vec![0usize; dim * dim + 1];
    let mut indices = Vec::with_capacity(triplets.len());
    let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in triplets {
        if last == Some((r, c)) {
            *values.last_mut().expect("merged entry exists") += v;
            continue;
        }
        indices.push(c);
        values.push(v);
        indptr[r + 1] += 1;
        last = Some((r, c));
    }
    for r in 0..dim * dim {
        indptr[r + 1] += indptr[r];
    }
    Ok(DenseLiouvillian { n, boundary, indptr, indices, values })
}

/// `exp(L t) rho` by a scaled Taylor series.
pub fn integrate(state: &DenseState, liouvillian: &DenseLiouvillian, t: f64) -> Result<DenseState> {
    if state.n != liouvillian.n {
        return Err(Error::Shape(format!("state on {} qubits, generator on {}", state.n, liouvillian.n)));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t = {t}")));
    }
    let mut v = state.flat();
    if t == 0.0 {
        return Ok(state.clone());
    }
    let steps = (liouvillian.one_norm() * t).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let inf = |x: &[C64]| x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for _ in 0..steps {
        let mut term = v.clone();
        let mut acc = v.clone();
        for k in 1..=100 {
            term = liouvillian.apply(&term);
            let f = h / k as f64;
            term.iter_mut().for_each(|z| *z *= f);
            acc.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
            if inf(&term) <= 1e-18 * inf(&acc).max(1e-300) {
                break;
            }
        }
        if acc.iter().any(|z| !z.is_finite()) {
            return Err(Error::IllConditioned("non-finite propagated state".into()));
        }
        v = acc;
    }
    Ok(DenseState::from_flat(state.n, &v))
}

/// Applies a 3-local superoperator (row-major, `64 x 64`) on `sites`.
pub fn apply_local(state: &DenseState, op: &CMat, sites: &[usize; 3]) -> DenseState {
    let n = state.n;
    let dim = 1usize << n;
    let mut out: CMat = Mat::zeros(dim, dim);
    for ket in 0..dim {
        if extract(ket, n, sites) != 0 {
            continue;
        }
        for bra in 0..dim {
            if extract(bra, n, sites) != 0 {
                continue;
            }
            let input: Vec<C64> = (0..64)
                .map(|c| state.rho[(replace(ket, n, sites, c / 8), replace(bra, n, sites, c % 8))])
                .collect();
            for r in 0..64 {
                let val: C64 = (0..64).map(|c| op[(r, c)] * input[c]).sum();
                out[(replace(ket, n, sites, r / 8), replace(bra, n, sites, r % 8))] = val;
            }
        }
    }
    DenseState { n, rho: out }
}

/// Open chain evolved by the same layered partition sequence as the MPS
/// engine, so that only truncation separates the two.
#[derive(Debug, Clone)]
pub struct TrotterChain {
    pub n: usize,
    pub schedule: ScheduleConfig,
    propagator: CMat,
}

impl TrotterChain {
    pub fn new(params: &ThreeCellParams, n: usize, schedule: &ScheduleConfig) -> Result<Self> {
        check_size(n)?;
        schedule.validate()?;
        let s = local_superoperator(params);
        let propagator = linalg::expm(s.as_ref(), schedule.tau)?;
        Ok(Self { n, schedule: *schedule, propagator })
    }

    /// Rule centers of `partition` on the open chain.
    pub fn centers(&self, partition: Partition) -> Vec<usize> {
        (1..self.n.saturating_sub(1)).filter(|c| c % 4 == partition.qubit_class()).collect()
    }

    pub fn apply_partition(&self, state: &DenseState, partition: Partition) -> DenseState {
        self.centers(partition)
            .into_iter()
            .fold(state.clone(), |s, c| apply_local(&s, &self.propagator, &[c - 1, c, c + 1]))
    }

    pub fn round(&self, state: &DenseState) -> DenseState {
        self.schedule
            .partition_order
            .iter()
            .fold(state.clone(), |s, &p| self.apply_partition(&s, p))
    }
}
