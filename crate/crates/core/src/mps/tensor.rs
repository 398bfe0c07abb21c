//! Real rank-3 site tensors stored as one matrix per physical index.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::linalg::RMat;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    /// `slices[s]` is the `left x right` matrix of physical index `s`.
    pub slices: Vec<RMat>,
}

/// Plain-data form used by checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTensorData {
    pub left: usize,
    pub right: usize,
    /// Slice-major, each slice row-major.
    pub data: Vec<f64>,
}

impl SiteTensor {
    pub fn zeros(phys: usize, left: usize, right: usize) -> Self {
        Self { slices: vec![Mat::zeros(left, right); phys] }
    }

    /// Bond-dimension-one tensor with the given physical amplitudes.
    pub fn product(amplitudes: &[f64]) -> Self {
        Self { slices: amplitudes.iter().map(|&a| Mat::from_fn(1, 1, |_, _| a)).collect() }
    }

    pub fn phys(&self) -> usize {
        self.slices.len()
    }

    pub fn left(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn right(&self) -> usize {
        self.slices[0].ncols()
    }

    /// `(phys * left) x right`, row `s * left + i`.
    pub fn stack_rows(&self) -> RMat {
        let (l, r) = (self.left(), self.right());
        Mat::from_fn(self.phys() * l, r, |row, c| self.slices[row / l][(row % l, c)])
    }

    /// `left x (phys * right)`, column `s * right + k`.
    pub fn stack_cols(&self) -> RMat {
        let (l, r) = (self.left(), self.right());
        Mat::from_fn(l, self.phys() * r, |row, col| self.slices[col / r][(row, col % r)])
    }

    pub fn from_stacked_rows(m: &RMat, phys: usize) -> Self {
        let l = m.nrows() / phys;
        let slices = (0..phys).map(|s| Mat::from_fn(l, m.ncols(), |i, c| m[(s * l + i, c)])).collect();
        Self { slices }
    }

    pub fn from_stacked_cols(m: &RMat, phys: usize) -> Self {
        let r = m.ncols() / phys;
        let slices = (0..phys).map(|s| Mat::from_fn(m.nrows(), r, |i, k| m[(i, s * r + k)])).collect();
        Self { slices }
    }

    /// `sum_s w_s A[s]`.
    pub fn contract(&self, weights: &[f64]) -> RMat {
        let mut out = Mat::zeros(self.left(), self.right());
        for (slice, &w) in self.slices.iter().zip(weights) {
            if w != 0.0 {
                out += slice * faer::Scale(w);
            }
        }
        out
    }

    /// `sum_s A[s] x A[s]^T` with `x` on the right bond.
    pub fn transfer_right(&self, x: &RMat) -> RMat {
        let mut out = Mat::zeros(self.left(), self.left());
        for a in &self.slices {
            out += a * x * a.transpose();
        }
        out
    }

    /// `sum_s A[s]^T x A[s]` with `x` on the left bond.
    pub fn transfer_left(&self, x: &RMat) -> RMat {
        let mut out = Mat::zeros(self.right(), self.right());
        for a in &self.slices {
            out += a.transpose() * x * a;
        }
        out
    }

    /// `left * A[s] * right` for every slice.
    pub fn gauge(&self, left: &RMat, right: &RMat) -> Self {
        Self { slices: self.slices.iter().map(|a| left * a * right).collect() }
    }

    /// `A[s] * right` for every slice.
    pub fn times_right(&self, right: &RMat) -> Self {
        Self { slices: self.slices.iter().map(|a| a * right).collect() }
    }

    /// `left * A[s]` for every slice.
    pub fn times_left(&self, left: &RMat) -> Self {
        Self { slices: self.slices.iter().map(|a| left * a).collect() }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.slices.iter_mut() {
            *a *= faer::Scale(factor);
        }
    }

    pub fn to_data(&self) -> SiteTensorData {
        let (l, r) = (self.left(), self.right());
        let mut data = Vec::with_capacity(self.phys() * l * r);
        for a in &self.slices {
            for i in 0..l {
                for k in 0..r {
                    data.push(a[(i, k)]);
                }
            }
        }
        SiteTensorData { left: l, right: r, data }
    }

    pub fn from_data(d: &SiteTensorData) -> Option<Self> {
        let size = d.left * d.right;
        if size == 0 || d.data.len() % size != 0 {
            return None;
        }
        let phys = d.data.len() / size;
        let slices = (0..phys)
            .map(|s| Mat::from_fn(d.left, d.right, |i, k| d.data[s * size + i * d.right + k]))
            .collect();
        Some(Self { slices })
    }
}

pub fn diag(values: &[f64]) -> RMat {
    Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
}

/// Product of the two site tensors as `(phys * left) x (phys * right)`,
/// rows `s * left + i`, columns `t * right + k`.
pub fn two_site(left: &SiteTensor, right: &SiteTensor) -> RMat {
    left.stack_rows() * right.stack_cols()
}

/// Applies a two-site gate (index `s * d + t`) to a [`two_site`] matrix.
pub fn apply_gate(theta: &RMat, gate: &RMat, phys: usize, left: usize, right: usize) -> RMat {
    let pairs = phys * phys;
    let grid = Mat::from_fn(pairs, left * right, |st, ik| {
        let (s, t) = (st / phys, st % phys);
        let (i, k) = (ik / right, ik % right);
        theta[(s * left + i, t * right + k)]
    });
    let out = gate * &grid;
    Mat::from_fn(phys * left, phys * right, |row, col| {
        let (s, i) = (row / left, row % left);
        let (t, k) = (col / right, col % right);
        out[(s * phys + t, i * right + k)]
    })
}
