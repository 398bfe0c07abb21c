//! Open-chain TEBD over `N` coarse sites, used to compare against the dense
//! oracle. The chain is kept in mixed canonical form around `center`.

use faer::Mat;

use super::tensor::{self, diag, SiteTensor};
use super::{pad_physical, qubit_coordinates, support, truncate, ActiveSpace, RoundEvolution, RoundPropagator, TruncationConfig, TruncationReport};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::observables::{ReducedSnapshot, ReducedStates};
use crate::superop::{GateLayer, SITE_DIM};

/// Singular values below this relative size are dropped when moving the center.
const GAUGE_CUTOFF: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct FiniteMPS {
    pub active: ActiveSpace,
    pub sites: Vec<SiteTensor>,
    pub center: usize,
    pub truncation: TruncationConfig,
}

fn kept(values: &[f64]) -> usize {
    let top = values.first().copied().unwrap_or(0.0);
    values.iter().take_while(|&&s| s > GAUGE_CUTOFF * top).count().max(1)
}

impl FiniteMPS {
    pub fn product(n_sites: usize, rho: &CMat, truncation: TruncationConfig) -> Result<Self> {
        truncation.validate()?;
        if n_sites < 2 {
            return Err(Error::InvalidParameter(format!("{n_sites} coarse sites, need at least 2")));
        }
        let c = qubit_coordinates(rho)?;
        let active = support(&c);
        let amps: Vec<f64> = active.site_indices().iter().map(|&f| c[f / 4] * c[f % 4]).collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let site = SiteTensor::product(&amps.iter().map(|a| a / norm).collect::<Vec<_>>());
        let mut state = Self { active, sites: vec![site; n_sites], center: 0, truncation };
        let tr = state.trace();
        state.sites[0].scale(1.0 / tr);
        Ok(state)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.sites.len()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[1..].iter().map(|s| s.left()).collect()
    }

    pub fn expand(&mut self, active: &ActiveSpace) -> Result<()> {
        if *active == self.active {
            return Ok(());
        }
        for site in self.sites.iter_mut() {
            *site = pad_physical(site, &self.active, active)?;
        }
        self.active = active.clone();
        Ok(())
    }

    fn shift_right(&mut self) -> Result<()> {
        let c = self.center;
        let d = self.active.site_dim();
        let (u, s, v) = linalg::svd_real(self.sites[c].stack_rows().as_ref()).map_err(|reason| Error::SvdFailure { bond: c, reason })?;
        let k = kept(&s);
        self.sites[c] = SiteTensor::from_stacked_rows(&u.subcols(0, k).to_owned(), d);
        let carry: RMat = diag(&s[..k]) * v.subcols(0, k).transpose();
        self.sites[c + 1] = self.sites[c + 1].gauge(&carry, &Mat::identity(self.sites[c + 1].right(), self.sites[c + 1].right()));
        self.center = c + 1;
        Ok(())
    }

    fn shift_left(&mut self) -> Result<()> {
        let c = self.center;
        let d = self.active.site_dim();
        let (u, s, v) = linalg::svd_real(self.sites[c].stack_cols().as_ref()).map_err(|reason| Error::SvdFailure { bond: c - 1, reason })?;
        let k = kept(&s);
        self.sites[c] = SiteTensor::from_stacked_cols(&v.subcols(0, k).transpose().to_owned(), d);
        let carry: RMat = u.subcols(0, k) * diag(&s[..k]);
        self.sites[c - 1] = self.sites[c - 1].gauge(&Mat::identity(self.sites[c - 1].left(), self.sites[c - 1].left()), &carry);
        self.center = c - 1;
        Ok(())
    }

    pub fn move_center(&mut self, to: usize) -> Result<()> {
        while self.center < to {
            self.shift_right()?;
        }
        while self.center > to {
            self.shift_left()?;
        }
        Ok(())
    }

    /// Applies `gate` on coarse sites `(k, k + 1)`; returns the discarded weight.
    pub fn apply_bond(&mut self, k: usize, gate: &RMat) -> Result<f64> {
        if k + 1 >= self.sites.len() {
            return Err(Error::InvalidParameter(format!("bond {k} outside a chain of {}", self.sites.len())));
        }
        let d = self.active.site_dim();
        self.move_center(k)?;
        let (l, r) = (self.sites[k].left(), self.sites[k + 1].right());
        let theta = tensor::apply_gate(&tensor::two_site(&self.sites[k], &self.sites[k + 1]), gate, d, l, r);
        let (u, s, v) = linalg::svd_real(theta.as_ref()).map_err(|reason| Error::SvdFailure { bond: k, reason })?;
        let (keep, discarded) = truncate(&s, &self.truncation);
        self.sites[k] = SiteTensor::from_stacked_rows(&u.subcols(0, keep).to_owned(), d);
        let right: RMat = diag(&s[..keep]) * v.subcols(0, keep).transpose();
        self.sites[k + 1] = SiteTensor::from_stacked_cols(&right, d);
        self.center = k + 1;
        Ok(discarded)
    }

    /// `<<I|rho>>` of the whole chain.
    pub fn trace(&self) -> f64 {
        let e = self.active.site_trace();
        let mut env: RMat = Mat::identity(1, 1);
        for site in &self.sites {
            env = &env * site.contract(&e);
        }
        env[(0, 0)]
    }

    /// Normalized Schmidt values across the bond between sites `bond` and `bond + 1`.
    pub fn schmidt_values(&self, bond: usize) -> Result<Vec<f64>> {
        if bond + 1 >= self.sites.len() {
            return Err(Error::InvalidParameter(format!("bond {bond}")));
        }
        let mut copy = self.clone();
        copy.move_center(bond)?;
        let s = linalg::svd_real(copy.sites[bond].stack_rows().as_ref()).map_err(|reason| Error::SvdFailure { bond, reason })?.1;
        let n = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(s.iter().map(|x| x / n).collect())
    }

    /// Largest deviation from left orthonormality left of the center and
    /// right orthonormality right of it.
    pub fn canonical_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, site) in self.sites.iter().enumerate() {
            let (m, n) = if k < self.center {
                (site.transfer_left(&Mat::identity(site.left(), site.left())), site.right())
            } else if k > self.center {
                (site.transfer_right(&Mat::identity(site.right(), site.right())), site.left())
            } else {
                continue;
            };
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((m[(i, j)] - target).abs());
                }
            }
        }
        worst
    }

    /// Bonds whose spectra define the half-chain entropy: the middle bond,
    /// or the two bonds around the middle site for odd `N`.
    pub fn middle_bonds(&self) -> Vec<usize> {
        let n = self.sites.len();
        if n % 2 == 0 {
            vec![n / 2 - 1]
        } else {
            vec![n / 2 - 1, n / 2]
        }
    }
}

impl RoundEvolution for FiniteMPS {
    /// V on bonds `(2m, 2m + 1)`, then W on bonds `(2m + 1, 2m + 2)`.
    fn advance(&mut self, prop: &RoundPropagator) -> Result<TruncationReport> {
        self.expand(&prop.active)?;
        let before = self.trace();
        let n = self.sites.len();
        let mut report = TruncationReport::default();
        for k in (0..n - 1).step_by(2) {
            report.discarded_weight[0] += self.apply_bond(k, prop.gate(GateLayer::V))?;
        }
        for k in (1..n - 1).step_by(2).rev() {
            report.discarded_weight[1] += self.apply_bond(k, prop.gate(GateLayer::W))?;
        }
        let after = self.trace();
        report.trace_drift = (after / before - 1.0).abs();
        let c = self.center;
        self.sites[c].scale(1.0 / after);
        report.max_bond = self.bond_dims().into_iter().max().unwrap_or(1);
        Ok(report)
    }
}

impl ReducedStates for FiniteMPS {
    fn snapshot(&self) -> Result<ReducedSnapshot> {
        let e = self.active.site_trace();
        let n = self.sites.len();
        let transfer: Vec<RMat> = self.sites.iter().map(|s| s.contract(&e)).collect();
        let mut left = vec![Mat::<f64>::identity(1, 1)];
        for t in &transfer {
            let next = left.last().expect("non-empty") * t;
            left.push(next);
        }
        let mut right = vec![Mat::<f64>::identity(1, 1); n + 1];
        for k in (0..n).rev() {
            right[k] = &transfer[k] * &right[k + 1];
        }
        let total = left[n][(0, 0)];
        let idx = self.active.site_indices();
        let mut sites = Vec::with_capacity(n);
        for k in 0..n {
            let mut c = [0.0; SITE_DIM];
            for (s, &f) in idx.iter().enumerate() {
                c[f] = (&left[k] * &self.sites[k].slices[s] * &right[k + 1])[(0, 0)] / total;
            }
            sites.push(c);
        }
        let mut bonds = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let mut joint = vec![[0.0; SITE_DIM]; SITE_DIM];
            for (s, &f) in idx.iter().enumerate() {
                let head = &left[k] * &self.sites[k].slices[s];
                for (t, &g) in idx.iter().enumerate() {
                    joint[f][g] = (&head * &self.sites[k + 1].slices[t] * &right[k + 2])[(0, 0)] / total;
                }
            }
            bonds.push(joint);
        }
        let schmidt = self.middle_bonds().into_iter().map(|b| self.schmidt_values(b)).collect::<Result<Vec<_>>>()?;
        Ok(ReducedSnapshot::from_sites(&sites, &bonds, schmidt))
    }
}
