//! Classical Domany-Kinzel cellular automaton and a stochastic sampler of the
//! incoherent (`Omega = 0`) limit of the partitioned quantum rule.
//!
//! Each updated cell consumes exactly one `u32` from a per-seed ChaCha8
//! stream, in a fixed cell order. Runs that share a seed therefore share
//! their random numbers, which couples site-DP trajectories monotonically in
//! `p`.

use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DkcaRule, NeighborhoodLabel, ThreeCellParams};
use crate::superop::ScheduleConfig;

/// `u < threshold(p)` happens with probability `p` for a uniform `u32`.
fn threshold(p: f64) -> u64 {
    (p * 4294967296.0).round() as u64
}

#[derive(Debug, Clone)]
pub struct DkcaLattice {
    pub cells: Vec<u8>,
    pub time: usize,
    /// Sublattice updated next: 0 even, 1 odd.
    pub parity: usize,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl DkcaLattice {
    pub fn new(cells: Vec<u8>, seed: u64) -> Result<Self> {
        if cells.is_empty() || cells.len() % 2 != 0 {
            return Err(Error::InvalidParameter(format!("lattice length {} must be even and positive", cells.len())));
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::InvalidParameter("cells must be 0 or 1".into()));
        }
        Ok(Self { cells, time: 0, parity: 0, seed, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn full(length: usize, seed: u64) -> Result<Self> {
        Self::new(vec![1; length], seed)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn density(&self) -> f64 {
        self.cells.iter().map(|&c| c as usize).sum::<usize>() as f64 / self.cells.len() as f64
    }

    /// Updates one sublattice from its (unchanged) neighbors.
    pub fn dk_step(&mut self, rule: &DkcaRule) {
        let t = [threshold(rule.x), threshold(rule.y), threshold(rule.z)];
        let n = self.cells.len();
        for i in (self.parity..n).step_by(2) {
            let left = self.cells[(i + n - 1) % n];
            let right = self.cells[(i + 1) % n];
            let u = self.rng.next_u32() as u64;
            self.cells[i] = (u < t[(left + right) as usize]) as u8;
        }
        self.parity ^= 1;
        self.time += 1;
    }

    /// Even then odd sublattice.
    pub fn round(&mut self, rule: &DkcaRule) {
        self.dk_step(rule);
        self.dk_step(rule);
    }
}

/// Ensemble-averaged density per round, round 0 being the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTrace {
    pub length: usize,
    pub seeds: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl DensityTrace {
    fn aggregate(length: usize, seeds: &[u64], runs: Vec<Vec<f64>>) -> Self {
        let rounds = runs[0].len();
        let m = runs.len() as f64;
        let mut mean = vec![0.0; rounds];
        let mut stderr = vec![0.0; rounds];
        for r in 0..rounds {
            let mu = runs.iter().map(|run| run[r]).sum::<f64>() / m;
            let var = if runs.len() > 1 { runs.iter().map(|run| (run[r] - mu).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
            mean[r] = mu;
            stderr[r] = (var / m).sqrt();
        }
        Self { length, seeds: seeds.to_vec(), mean, stderr }
    }

    pub fn n_seeds(&self) -> usize {
        self.seeds.len()
    }

    /// `(round, density)` pairs with `round >= 1`, the axis used for fits.
    pub fn series(&self) -> (Vec<f64>, Vec<f64>) {
        ((1..self.mean.len()).map(|r| r as f64).collect(), self.mean[1..].to_vec())
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "mean_density", "stderr"])?;
        for (r, (m, s)) in self.mean.iter().zip(&self.stderr).enumerate() {
            out.write_record([r.to_string(), m.to_string(), s.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

fn check_ensemble(length: usize, rounds: usize, seeds: &[u64]) -> Result<()> {
    if length == 0 || length % 2 != 0 {
        return Err(Error::InvalidParameter(format!("lattice length {length} must be even and positive")));
    }
    if rounds == 0 || seeds.is_empty() {
        return Err(Error::InvalidParameter("need at least one round and one seed".into()));
    }
    Ok(())
}

/// Runs one fully occupied lattice per seed, in parallel.
pub fn dk_density_trace(rule: &DkcaRule, length: usize, rounds: usize, seeds: &[u64]) -> Result<DensityTrace> {
    check_ensemble(length, rounds, seeds)?;
    let runs: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut lattice = DkcaLattice::full(length, seed).expect("validated length");
            let mut out = Vec::with_capacity(rounds + 1);
            out.push(lattice.density());
            for _ in 0..rounds {
                if rule.x == 0.0 && out.last() == Some(&0.0) {
                    out.push(0.0);
                    continue;
                }
                lattice.round(rule);
                out.push(lattice.density());
            }
            out
        })
        .collect();
    Ok(DensityTrace::aggregate(length, seeds, runs))
}

/// Stochastic sampler of the incoherent quantum model on a ring of qubits.
///
/// Without a drive the partition gates map diagonal states to diagonal
/// states, so the diagonal evolves as a classical Markov chain: a center
/// with neighborhood `ab` ends in `|1>` with probability
/// `pi (1 - e^{-Gamma tau}) + [old = 1] e^{-Gamma tau}`, where
/// `Gamma = gamma_minus + gamma_plus` and `pi = gamma_plus / Gamma`.
#[derive(Debug, Clone)]
pub struct ClassicalLimitChain {
    /// Thresholds `[label][old]`.
    thresholds: [[u64; 2]; 4],
    order: [usize; 4],
}

impl ClassicalLimitChain {
    pub fn new(params: &ThreeCellParams, schedule: &ScheduleConfig) -> Result<Self> {
        if params.has_hamiltonian() {
            return Err(Error::InvalidParameter("classical sampling needs Omega = 0".into()));
        }
        schedule.validate()?;
        let mut thresholds = [[0; 2]; 4];
        for label in NeighborhoodLabel::ALL {
            let r = params.get(label);
            let total = r.gamma_minus + r.gamma_plus;
            let (pi, stay) = if total > 0.0 { (r.gamma_plus / total, (-total * schedule.tau).exp()) } else { (0.0, 1.0) };
            thresholds[label.index()] = [threshold(pi * (1.0 - stay)), threshold(pi * (1.0 - stay) + stay)];
        }
        let mut order = [0; 4];
        for (slot, part) in order.iter_mut().zip(schedule.partition_order) {
            *slot = part.qubit_class();
        }
        Ok(Self { thresholds, order })
    }

    /// One round on a ring whose length is a multiple of four.
    pub fn round(&self, cells: &mut [u8], rng: &mut ChaCha8Rng) {
        let n = cells.len();
        for &class in &self.order {
            for i in (class..n).step_by(4) {
                let label = 2 * cells[(i + n - 1) % n] as usize + cells[(i + 1) % n] as usize;
                let u = rng.next_u32() as u64;
                cells[i] = (u < self.thresholds[label][cells[i] as usize]) as u8;
            }
        }
    }

    pub fn density_trace(&self, length: usize, rounds: usize, seeds: &[u64]) -> Result<DensityTrace> {
        check_ensemble(length, rounds, seeds)?;
        if length % 4 != 0 {
            return Err(Error::InvalidParameter(format!("ring length {length} must be a multiple of 4")));
        }
        let runs: Vec<Vec<f64>> = seeds
            .par_iter()
            .map(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut cells = vec![1u8; length];
                let mut out = Vec::with_capacity(rounds + 1);
                out.push(1.0);
                for _ in 0..rounds {
                    self.round(&mut cells, &mut rng);
                    out.push(cells.iter().map(|&c| c as usize).sum::<usize>() as f64 / length as f64);
                }
                out
            })
            .collect();
        Ok(DensityTrace::aggregate(length, seeds, runs))
    }
}
