//! Doubled-space Lindblad generators and the two-site round gates.
//!
//! Density matrices are vectorized row-major, `vec(A rho B) = (A (x) B^T) vec(rho)`.
//! Multi-qubit superoperators are stored in the interleaved layout: qubit `q`
//! contributes the base-4 digit `2 i_q + j_q` (ket bit, bra bit), qubit 0 is the
//! most significant digit. Two adjacent qubits form a coarse site of dimension
//! 16, so a 4-qubit window index is `16 * site_a + site_b`.

use std::io::{Read, Write};
use std::path::Path;

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, I, ONE, ZERO};
use crate::model::{NeighborhoodLabel, ThreeCellParams};

pub const QUBIT_DIM: usize = 4;
pub const SITE_DIM: usize = 16;
pub const WINDOW_DIM: usize = 256;
pub const CELL_DIM: usize = 64;

/// Default Trotter constant of the continuous schedule.
pub const DEFAULT_TROTTER_CONSTANT: f64 = 0.0025;
/// Default step of the discrete schedule.
pub const DEFAULT_DISCRETE_TAU: f64 = 10.0;

pub fn pauli_x() -> CMat {
    Mat::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO })
}

pub fn pauli_y() -> CMat {
    Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => -I,
        (1, 0) => I,
        _ => ZERO,
    })
}

/// `|1><0|`.
pub fn sigma_plus() -> CMat {
    Mat::from_fn(2, 2, |i, j| if (i, j) == (1, 0) { ONE } else { ZERO })
}

/// `|0><1|`.
pub fn sigma_minus() -> CMat {
    Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { ONE } else { ZERO })
}

/// `|b><b|`.
pub fn projector(b: u8) -> CMat {
    Mat::from_fn(2, 2, |i, j| if i == j && i == b as usize { ONE } else { ZERO })
}

/// Row-major Lindblad generator for Hamiltonian `h` and jump operators `jumps`.
pub fn lindblad_generator(h: MatRef<'_, C64>, jumps: &[CMat]) -> CMat {
    let n = h.nrows();
    let id = linalg::identity(n);
    let mut gen = linalg::kron(h, id.as_ref()) - linalg::kron(id.as_ref(), linalg::transpose(h).as_ref());
    gen = linalg::scale(gen.as_ref(), -I);
    for l in jumps {
        let ldl = linalg::matmul(linalg::adjoint(l.as_ref()).as_ref(), l.as_ref());
        gen += linalg::kron(l.as_ref(), linalg::conjugate(l.as_ref()).as_ref());
        let anti = linalg::kron(ldl.as_ref(), id.as_ref()) + linalg::kron(id.as_ref(), linalg::transpose(ldl.as_ref()).as_ref());
        gen -= linalg::scale(anti.as_ref(), C64::new(0.5, 0.0));
    }
    gen
}

/// Maps the row-major index `i * 2^n + j` to the interleaved index.
pub fn interleaved_index(n: usize, row_major: usize) -> usize {
    let dim = 1usize << n;
    let (i, j) = (row_major / dim, row_major % dim);
    let mut out = 0;
    for q in 0..n {
        let shift = n - 1 - q;
        let digit = 2 * ((i >> shift) & 1) + ((j >> shift) & 1);
        out = out * 4 + digit;
    }
    out
}

/// Reorders a row-major superoperator on `n` qubits into the interleaved layout.
pub fn to_interleaved(n: usize, op: MatRef<'_, C64>) -> CMat {
    let dim = 1usize << (2 * n);
    let perm: Vec<usize> = (0..dim).map(|k| interleaved_index(n, k)).collect();
    let mut out = Mat::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            out[(perm[r], perm[c])] = op[(r, c)];
        }
    }
    out
}

/// Interleaved vectorization of an `n`-qubit density matrix.
pub fn vectorize(n: usize, rho: MatRef<'_, C64>) -> Vec<C64> {
    let dim = 1usize << n;
    let mut out = vec![ZERO; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[interleaved_index(n, i * dim + j)] = rho[(i, j)];
        }
    }
    out
}

/// Inverse of [`vectorize`].
pub fn devectorize(n: usize, v: &[C64]) -> CMat {
    let dim = 1usize << n;
    Mat::from_fn(dim, dim, |i, j| v[interleaved_index(n, i * dim + j)])
}

/// Interleaved vectorized identity `<<I|` on `n` qubits.
pub fn trace_vector(n: usize) -> Vec<C64> {
    let dim = 1usize << n;
    (0..dim * dim)
        .map(|k| {
            let mut rest = k;
            for _ in 0..n {
                let digit = rest % 4;
                if digit == 1 || digit == 2 {
                    return ZERO;
                }
                rest /= 4;
            }
            ONE
        })
        .collect()
}

/// Three-qubit generator of one rule centered on the middle qubit,
/// interleaved layout, `64 x 64`.
#[derive(Debug, Clone)]
pub struct Vectorized3CellLiouvillian {
    pub matrix: CMat,
}

impl Vectorized3CellLiouvillian {
    /// The `4 x 4` center-qubit block with both neighbors frozen to `label`.
    pub fn conditional_block(&self, label: NeighborhoodLabel) -> CMat {
        let left = 3 * label.alpha() as usize;
        let right = 3 * label.beta() as usize;
        Mat::from_fn(4, 4, |r, c| self.matrix[(16 * left + 4 * r + right, 16 * left + 4 * c + right)])
    }
}

/// Generator of one three-cell rule: `H = sum (theta/2) P_a X P_b` and jump
/// operators `sqrt(gamma) P_a sigma P_b` for each neighborhood.
pub fn build_3cell_liouvillian(params: &ThreeCellParams) -> Vectorized3CellLiouvillian {
    let mut h: CMat = Mat::zeros(8, 8);
    let mut jumps = Vec::new();
    for label in NeighborhoodLabel::ALL {
        let rates = params.get(label);
        let pa = projector(label.alpha());
        let pb = projector(label.beta());
        let embed = |center: &CMat| linalg::kron_all(&[pa.clone(), center.clone(), pb.clone()]);
        if rates.theta != 0.0 {
            h += linalg::scale(embed(&pauli_x()).as_ref(), C64::new(rates.omega(), 0.0));
        }
        if rates.gamma_plus != 0.0 {
            jumps.push(linalg::scale(embed(&sigma_plus()).as_ref(), C64::new(rates.gamma_plus.sqrt(), 0.0)));
        }
        if rates.gamma_minus != 0.0 {
            jumps.push(linalg::scale(embed(&sigma_minus()).as_ref(), C64::new(rates.gamma_minus.sqrt(), 0.0)));
        }
    }
    let generator = lindblad_generator(h.as_ref(), &jumps);
    Vectorized3CellLiouvillian { matrix: to_interleaved(3, generator.as_ref()) }
}

/// One of the four layers of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partition {
    P1,
    P2,
    P3,
    P4,
}

impl Partition {
    pub const ALL: [Partition; 4] = [Partition::P1, Partition::P2, Partition::P3, Partition::P4];

    /// Local qubit position of the rule center inside its 4-qubit window.
    pub fn window_center(self) -> usize {
        match self {
            Partition::P1 | Partition::P4 => 2,
            Partition::P2 | Partition::P3 => 1,
        }
    }

    /// Centers of this partition are the qubits `q` with `q % 4 == class`.
    pub fn qubit_class(self) -> usize {
        match self {
            Partition::P1 => 2,
            Partition::P2 => 1,
            Partition::P3 => 3,
            Partition::P4 => 0,
        }
    }

    /// True for the layers acting on the A-B bond.
    pub fn is_ab_layer(self) -> bool {
        matches!(self, Partition::P1 | Partition::P2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Continuous,
    Discrete,
}

/// Time step and layer order of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub tau: f64,
    pub mode: ScheduleMode,
    pub trotter_constant: f64,
    pub partition_order: [Partition; 4],
}

impl ScheduleConfig {
    pub const DEFAULT_ORDER: [Partition; 4] = Partition::ALL;

    /// `tau = sqrt(C / (p (1 - p)))`, capped at the discrete step where the
    /// formula diverges.
    pub fn continuous(p: f64, trotter_constant: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(trotter_constant > 0.0) {
            return Err(Error::InvalidParameter(format!("p = {p}, C = {trotter_constant}")));
        }
        let var = p * (1.0 - p);
        let tau = if var > 0.0 { (trotter_constant / var).sqrt().min(DEFAULT_DISCRETE_TAU) } else { DEFAULT_DISCRETE_TAU };
        Ok(Self { tau, mode: ScheduleMode::Continuous, trotter_constant, partition_order: Self::DEFAULT_ORDER })
    }

    pub fn discrete(tau: f64) -> Result<Self> {
        let s = Self { tau, mode: ScheduleMode::Discrete, trotter_constant: DEFAULT_TROTTER_CONSTANT, partition_order: Self::DEFAULT_ORDER };
        s.validate()?;
        Ok(s)
    }

    pub fn for_mode(mode: ScheduleMode, p: f64) -> Result<Self> {
        match mode {
            ScheduleMode::Continuous => Self::continuous(p, DEFAULT_TROTTER_CONSTANT),
            ScheduleMode::Discrete => Self::discrete(DEFAULT_DISCRETE_TAU),
        }
    }

    /// Physical time elapsed per round: every cell is updated once for `tau`.
    pub fn time_per_round(&self) -> f64 {
        self.tau
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau = {} must be finite and > 0", self.tau)));
        }
        let order = &self.partition_order;
        let mut seen = [false; 4];
        for p in order {
            seen[*p as usize] = true;
        }
        if seen.iter().any(|s| !s) || !order[0].is_ab_layer() || !order[1].is_ab_layer() {
            return Err(Error::InvalidParameter(format!(
                "partition order {order:?} must list P1 and P2 before P3 and P4"
            )));
        }
        Ok(())
    }
}

/// Superoperator of a rule placed in a 4-qubit window, centered on `center`
/// (1 or 2).
pub fn embed_in_window(cell: MatRef<'_, C64>, center: usize) -> CMat {
    let id = linalg::identity(QUBIT_DIM);
    match center {
        1 => linalg::kron(cell, id.as_ref()),
        2 => linalg::kron(id.as_ref(), cell),
        _ => panic!("window center must be 1 or 2, got {center}"),
    }
}

pub fn window_liouvillian(params: &ThreeCellParams, partition: Partition) -> CMat {
    let cell = build_3cell_liouvillian(params);
    embed_in_window(cell.matrix.as_ref(), partition.window_center())
}

/// `exp(tau L)` of a single three-cell rule, `64 x 64`.
pub fn cell_propagator(params: &ThreeCellParams, tau: f64) -> Result<CMat> {
    let cell = build_3cell_liouvillian(params);
    linalg::expm(cell.matrix.as_ref(), tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateLayer {
    /// Acts on the A-B bond.
    V,
    /// Acts on the B-A bond.
    W,
}

/// Two-site gate in doubled space, `256 x 256`, index `16 * a + b`.
#[derive(Debug, Clone)]
pub struct SuperOperatorGate {
    pub matrix: CMat,
    pub tau: f64,
    pub layer: GateLayer,
    /// Partitions in application order.
    pub partitions: [Partition; 2],
    pub params_hash: u64,
}

impl SuperOperatorGate {
    pub fn identity(layer: GateLayer) -> Self {
        let partitions = match layer {
            GateLayer::V => [Partition::P1, Partition::P2],
            GateLayer::W => [Partition::P3, Partition::P4],
        };
        Self { matrix: linalg::identity(WINDOW_DIM), tau: 0.0, layer, partitions, params_hash: 0 }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        linalg::mat_vec(self.matrix.as_ref(), v)
    }

    /// `max |<<I| G - <<I||`.
    pub fn trace_defect(&self) -> f64 {
        let tr = trace_vector(4);
        let row = linalg::vec_mat(&tr, self.matrix.as_ref());
        row.iter().zip(&tr).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// The gate in the real Hermitian operator basis.
    pub fn to_hermitian_basis(&self) -> Result<RealGate> {
        let t = hermitian_basis_change(4);
        let m = linalg::matmul(linalg::matmul(t.as_ref(), self.matrix.as_ref()).as_ref(), linalg::adjoint(t.as_ref()).as_ref());
        let imag = (0..WINDOW_DIM)
            .flat_map(|r| (0..WINDOW_DIM).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)].im.abs())
            .fold(0.0, f64::max);
        if imag > 1e-10 {
            return Err(Error::Shape(format!("gate is not Hermiticity preserving (imaginary part {imag:.2e})")));
        }
        Ok(RealGate {
            matrix: Mat::from_fn(WINDOW_DIM, WINDOW_DIM, |r, c| m[(r, c)].re),
            layer: self.layer,
        })
    }

    /// Writes the binary dump: magic, rows, cols, tau, params hash, then the
    /// row-major complex128 entries, all little-endian.
    pub fn write_dump(&self, mut w: impl Write) -> Result<()> {
        w.write_all(GATE_MAGIC)?;
        w.write_all(&(self.matrix.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.matrix.ncols() as u64).to_le_bytes())?;
        w.write_all(&self.tau.to_le_bytes())?;
        w.write_all(&self.params_hash.to_le_bytes())?;
        w.write_all(&[self.layer as u8])?;
        for r in 0..self.matrix.nrows() {
            for c in 0..self.matrix.ncols() {
                let z = self.matrix[(r, c)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_dump(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != GATE_MAGIC {
            return Err(Error::Format("bad gate magic".into()));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        if rows != WINDOW_DIM || cols != WINDOW_DIM {
            return Err(Error::Format(format!("gate shape {rows}x{cols}")));
        }
        let tau = f64::from_bits(read_u64(&mut r)?);
        let params_hash = read_u64(&mut r)?;
        let mut layer = [0u8; 1];
        r.read_exact(&mut layer)?;
        let layer = match layer[0] {
            0 => GateLayer::V,
            1 => GateLayer::W,
            other => return Err(Error::Format(format!("unknown gate layer {other}"))),
        };
        let mut matrix = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let re = f64::from_bits(read_u64(&mut r)?);
                let im = f64::from_bits(read_u64(&mut r)?);
                matrix[(i, j)] = C64::new(re, im);
            }
        }
        let partitions = SuperOperatorGate::identity(layer).partitions;
        Ok(Self { matrix, tau, layer, partitions, params_hash })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_dump(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_dump(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const GATE_MAGIC: &[u8; 8] = b"DPQCAGT1";

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Real form of a gate: coordinates on the basis
/// `{|0><0|, |1><1|, X/sqrt2, Y/sqrt2}` per qubit.
#[derive(Debug, Clone)]
pub struct RealGate {
    pub matrix: RMat,
    pub layer: GateLayer,
}

/// Rows are `conj(vec(B_k))` for the per-qubit Hermitian basis; an `n`-fold
/// Kronecker power in the interleaved layout. Unitary.
pub fn hermitian_basis_change(n: usize) -> CMat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let rows = [
        [ONE, ZERO, ZERO, ZERO],
        [ZERO, ZERO, ZERO, ONE],
        [ZERO, C64::new(r, 0.0), C64::new(r, 0.0), ZERO],
        [ZERO, C64::new(0.0, r), C64::new(0.0, -r), ZERO],
    ];
    let single = Mat::from_fn(4, 4, |i, j| rows[i][j]);
    let factors = vec![single; n];
    linalg::kron_all(&factors)
}

/// Both gates of one round. `V = G(P_b) G(P_a)` over the A-B window and
/// `W = G(P_d) G(P_c)` over the B-A window, in `schedule.partition_order`.
pub fn build_round_gates(params: &ThreeCellParams, schedule: &ScheduleConfig) -> Result<(SuperOperatorGate, SuperOperatorGate)> {
    schedule.validate()?;
    let cell = cell_propagator(params, schedule.tau)?;
    let hash = params.hash64();
    let layer_gate = |first: Partition, second: Partition, layer: GateLayer| {
        let g1 = embed_in_window(cell.as_ref(), first.window_center());
        let g2 = embed_in_window(cell.as_ref(), second.window_center());
        SuperOperatorGate {
            matrix: linalg::matmul(g2.as_ref(), g1.as_ref()),
            tau: schedule.tau,
            layer,
            partitions: [first, second],
            params_hash: hash,
        }
    };
    let o = schedule.partition_order;
    Ok((layer_gate(o[0], o[1], GateLayer::V), layer_gate(o[2], o[3], GateLayer::W)))
}

/// Gate of a single partition over its window.
pub fn partition_gate(params: &ThreeCellParams, partition: Partition, tau: f64) -> Result<CMat> {
    let cell = cell_propagator(params, tau)?;
    Ok(embed_in_window(cell.as_ref(), partition.window_center()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dp_quantum_rates, dp_site_rule, quantum_rates, RatePreset};

    fn product(n: usize, rho: &CMat) -> CMat {
        linalg::kron_all(&vec![rho.clone(); n])
    }

    #[test]
    fn interleave_roundtrip() {
        let rho = Mat::from_fn(8, 8, |i, j| C64::new(i as f64, j as f64));
        let v = vectorize(3, rho.as_ref());
        assert_eq!(devectorize(3, &v), rho);
        assert_eq!(v[interleaved_index(3, 0)], rho[(0, 0)]);
    }

    #[test]
    fn trace_vector_matches_trace() {
        let rho = Mat::from_fn(4, 4, |i, j| C64::new((i * 4 + j) as f64, (i as f64) - (j as f64)));
        let v = vectorize(2, rho.as_ref());
        let tr: C64 = trace_vector(2).iter().zip(&v).map(|(a, b)| a * b).sum();
        let want: C64 = (0..4).map(|i| rho[(i, i)]).sum();
        assert!((tr - want).norm() < 1e-14);
    }

    #[test]
    fn no_hamiltonian_block() {
        // With H = 0 the generator equals the dissipator built without it.
        let params = dp_quantum_rates(0.7, 0.0).unwrap();
        let l = build_3cell_liouvillian(&params);
        let mut stripped = params;
        for r in stripped.rates.iter_mut() {
            r.gamma_minus = 0.0;
            r.gamma_plus = 0.0;
        }
        assert_eq!(linalg::max_abs(build_3cell_liouvillian(&stripped).matrix.as_ref()), 0.0);
        assert!(linalg::max_abs(l.matrix.as_ref()) > 0.0);
    }

    #[test]
    fn absorbing_cell_is_fixed_point() {
        let params = dp_quantum_rates(0.8, 0.1).unwrap();
        let l = build_3cell_liouvillian(&params);
        let vac = vectorize(3, product(3, &projector(0)).as_ref());
        let out = linalg::mat_vec(l.matrix.as_ref(), &vac);
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn generator_is_trace_preserving() {
        let params = dp_quantum_rates(0.7, 0.1).unwrap();
        let l = build_3cell_liouvillian(&params);
        let row = linalg::vec_mat(&trace_vector(3), l.matrix.as_ref());
        assert!(row.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn conditional_block_steady_state() {
        let params = dp_quantum_rates(0.7, 0.1).unwrap();
        let block = build_3cell_liouvillian(&params).conditional_block(NeighborhoodLabel::ALL[3]);
        // Null vector from a long-time propagator of the block.
        let prop = linalg::expm(block.as_ref(), 400.0).unwrap();
        let start = [ONE, ZERO, ZERO, ZERO];
        let ss = linalg::mat_vec(prop.as_ref(), &start);
        assert!((ss[0].re - 0.3).abs() < 1e-10);
        assert!((ss[3].re - 0.7).abs() < 1e-10);
    }

    #[test]
    fn discrete_step_relaxes_the_center() {
        // Window |1111>: the P1 center sees two active neighbors and relaxes
        // towards p at rate Gamma, so a second application moves it by
        // (1 - p) e^{-Gamma tau} (1 - e^{-Gamma tau}).
        let p = 0.7;
        let window = vectorize(4, product(4, &projector(1)).as_ref());
        for (preset, gamma) in [(RatePreset::SiteDpTable, 1.0), (RatePreset::UnitDecay, 1.0 / (1.0 - p))] {
            let params = quantum_rates(&dp_site_rule(p).unwrap(), 0.0, preset).unwrap();
            let g = partition_gate(&params, Partition::P1, DEFAULT_DISCRETE_TAU).unwrap();
            let once = linalg::mat_vec(g.as_ref(), &window);
            let twice = linalg::mat_vec(g.as_ref(), &once);
            let change = once.iter().zip(&twice).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let decay = (-gamma * DEFAULT_DISCRETE_TAU).exp();
            assert!((change - (1.0 - p) * decay * (1.0 - decay)).abs() < 1e-12, "{preset:?}: {change:e}");
        }
    }

    #[test]
    fn small_tau_limit() {
        let params = dp_quantum_rates(0.7, 0.1).unwrap();
        let schedule = ScheduleConfig::discrete(1e-6).unwrap();
        let (v, _) = build_round_gates(&params, &schedule).unwrap();
        let sum = window_liouvillian(&params, Partition::P1) + window_liouvillian(&params, Partition::P2);
        let dev = linalg::max_abs_diff(v.matrix.as_ref(), linalg::identity(WINDOW_DIM).as_ref());
        assert!(dev <= 1e-6 * linalg::max_abs(sum.as_ref()) * 1.01);
    }

    #[test]
    fn gates_trace_preserving_and_real_in_hermitian_basis() {
        let params = dp_quantum_rates(0.72, 0.1).unwrap();
        let schedule = ScheduleConfig::continuous(0.72, DEFAULT_TROTTER_CONSTANT).unwrap();
        let (v, w) = build_round_gates(&params, &schedule).unwrap();
        for g in [&v, &w] {
            assert!(g.trace_defect() < 1e-12);
            g.to_hermitian_basis().unwrap();
        }
    }

    #[test]
    fn basis_change_is_unitary() {
        let t = hermitian_basis_change(2);
        let prod = linalg::matmul(t.as_ref(), linalg::adjoint(t.as_ref()).as_ref());
        assert!(linalg::max_abs_diff(prod.as_ref(), linalg::identity(16).as_ref()) < 1e-14);
    }

    #[test]
    fn schedule_defaults() {
        let c = ScheduleConfig::continuous(0.5, DEFAULT_TROTTER_CONSTANT).unwrap();
        assert!((c.tau - 0.1).abs() < 1e-15);
        assert_eq!(ScheduleConfig::for_mode(ScheduleMode::Discrete, 0.5).unwrap().tau, 10.0);
        assert_eq!(ScheduleConfig::continuous(0.0, DEFAULT_TROTTER_CONSTANT).unwrap().tau, DEFAULT_DISCRETE_TAU);
        let mut bad = c;
        bad.partition_order = [Partition::P3, Partition::P1, Partition::P2, Partition::P4];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dump_roundtrip() {
        let params = dp_quantum_rates(0.7, 0.1).unwrap();
        let (v, _) = build_round_gates(&params, &ScheduleConfig::discrete(0.3).unwrap()).unwrap();
        let mut buf = Vec::new();
        v.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 * 4 + 1 + 16 * WINDOW_DIM * WINDOW_DIM);
        let back = SuperOperatorGate::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back.matrix, v.matrix);
        assert_eq!(back.params_hash, params.hash64());
        assert_eq!(back.tau, 0.3);
        buf[0] = b'X';
        assert!(SuperOperatorGate::read_dump(buf.as_slice()).is_err());
    }
}
