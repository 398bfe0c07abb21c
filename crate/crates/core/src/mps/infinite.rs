//! Two-site unit cell iTEBD.
//!
//! The cell is stored in right-canonical form: `b[k] = Gamma_k lambda_{k+1}`,
//! with site 0 = A, site 1 = B and `lambda[k]` the Schmidt values on the bond
//! to the left of site `k` (so `lambda[0]` is B-A and `lambda[1]` is A-B).
//! Gate updates never divide by Schmidt values. After every layer the cell is
//! brought back to canonical form by orthogonal factorizations iterated
//! around the cell, and rescaled so that the trace per cell is one.

use std::io::{Read, Write};
use std::path::Path;

use faer::Mat;

use super::tensor::{self, diag, SiteTensor};
use super::{pad_physical, qubit_coordinates, support, truncate, ActiveSpace, RoundEvolution, RoundPropagator, TruncationConfig, TruncationReport};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::observables::{ReducedSnapshot, ReducedStates};
use crate::superop::{read_u64, GateLayer, ScheduleConfig, ScheduleMode, SITE_DIM};

const GAUGE_CUTOFF: f64 = 1e-14;
const GAUGE_ITERATIONS: usize = 2000;
const GAUGE_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct InfiniteMPS {
    pub active: ActiveSpace,
    pub b: [SiteTensor; 2],
    pub lambda: [Vec<f64>; 2],
    pub truncation: TruncationConfig,
}

/// Dominant eigenvalue and eigenvectors of the trace transfer matrix at the
/// B-A bond.
#[derive(Debug, Clone)]
pub struct TraceEnvironment {
    pub mu: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Sign flips that make the diagonal of `r` non-negative, so that the factors
/// are unique and the fixed-point iterations below can be compared step to
/// step.
fn positive_signs(r: &RMat) -> Vec<f64> {
    (0..r.nrows()).map(|k| if r[(k, k)] < 0.0 { -1.0 } else { 1.0 }).collect()
}

/// `r` of `m = q r`, with a non-negative diagonal.
fn positive_r(m: &RMat) -> RMat {
    let r = m.qr().thin_R().to_owned();
    let signs = positive_signs(&r);
    Mat::from_fn(r.nrows(), r.ncols(), |i, j| signs[i] * r[(i, j)])
}

/// `m = l q` with `q` having orthonormal rows; returns `(q, l)`.
fn lq(m: &RMat) -> (RMat, RMat) {
    let (q, r) = linalg::qr_real(m.transpose().to_owned().as_ref());
    let signs = positive_signs(&r);
    let q = Mat::from_fn(q.ncols(), q.nrows(), |i, j| signs[i] * q[(j, i)]);
    let l = Mat::from_fn(r.ncols(), r.nrows(), |i, j| signs[j] * r[(j, i)]);
    (q, l)
}

/// Frobenius-normalized copy and the distance to `previous` when shapes agree.
fn settle(m: RMat, previous: &RMat) -> (RMat, f64) {
    let m = &m * faer::Scale(1.0 / m.norm_l2());
    let change = if m.shape() == previous.shape() { (&m - previous).norm_l2() } else { f64::INFINITY };
    (m, change)
}

impl InfiniteMPS {
    /// Translation-invariant product of `rho` on every qubit.
    pub fn init_product_state(rho: &CMat, truncation: TruncationConfig) -> Result<Self> {
        truncation.validate()?;
        let c = qubit_coordinates(rho)?;
        let active = support(&c);
        let amps: Vec<f64> = active.site_indices().iter().map(|&f| c[f / 4] * c[f % 4]).collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let site = SiteTensor::product(&amps.iter().map(|a| a / norm).collect::<Vec<_>>());
        let mut state = Self {
            active,
            b: [site.clone(), site],
            lambda: [vec![1.0], vec![1.0]],
            truncation,
        };
        let env = state.trace_environment()?;
        state.b[0].scale(1.0 / env.mu);
        Ok(state)
    }

    pub fn bond_dims(&self) -> [usize; 2] {
        [self.lambda[0].len(), self.lambda[1].len()]
    }

    /// Enlarges the physical index to `active`, padding with zero slices.
    pub fn expand(&mut self, active: &ActiveSpace) -> Result<()> {
        if *active == self.active {
            return Ok(());
        }
        for site in self.b.iter_mut() {
            *site = pad_physical(site, &self.active, active)?;
        }
        self.active = active.clone();
        Ok(())
    }

    /// Trace transfer eigenpair `l^T E_A E_B = mu l^T`, `E_A E_B r = mu r`.
    pub fn trace_environment(&self) -> Result<TraceEnvironment> {
        let e = self.active.site_trace();
        let t = self.b[0].contract(&e) * self.b[1].contract(&e);
        let pick = |m: &RMat| -> Result<(f64, Vec<f64>)> {
            let (vals, vecs) = linalg::eig_real(m.as_ref())?;
            let k = (0..vals.len())
                .max_by(|&a, &b| vals[a].norm().partial_cmp(&vals[b].norm()).unwrap_or(std::cmp::Ordering::Equal))
                .ok_or_else(|| Error::EigenFailure("empty trace transfer".into()))?;
            let pivot = (0..vals.len())
                .max_by(|&a, &b| vecs[(a, k)].norm().partial_cmp(&vecs[(b, k)].norm()).unwrap_or(std::cmp::Ordering::Equal))
                .expect("non-empty");
            let phase = vecs[(pivot, k)];
            Ok((vals[k].re, (0..vals.len()).map(|i| (vecs[(i, k)] / phase).re).collect()))
        };
        let (mu, right) = pick(&t)?;
        let (_, left) = pick(&t.transpose().to_owned())?;
        Ok(TraceEnvironment { mu, left, right })
    }

    /// Applies a two-site gate on bond `j` (1: A-B, 0: B-A). Returns the
    /// discarded weight and the relative change of the per-cell trace.
    pub fn apply_layer(&mut self, gate: &RMat, j: usize) -> Result<(f64, f64)> {
        let (l, r) = (j ^ 1, j);
        let d = self.active.site_dim();
        if gate.nrows() != d * d {
            return Err(Error::Shape(format!("gate of size {} for site dimension {d}", gate.nrows())));
        }
        let (chil, chir) = (self.b[l].left(), self.b[r].right());
        let raw = tensor::two_site(&self.b[l], &self.b[r]);
        let updated = tensor::apply_gate(&raw, gate, d, chil, chir);
        let lam = &self.lambda[l];
        let theta = Mat::from_fn(d * chil, d * chir, |row, col| lam[row % chil] * updated[(row, col)]);
        let (_, s, v) = linalg::svd_real(theta.as_ref()).map_err(|reason| Error::SvdFailure { bond: j, reason })?;
        let (keep, discarded) = truncate(&s, &self.truncation);
        let vk = v.subcols(0, keep).to_owned();
        self.b[r] = SiteTensor::from_stacked_cols(&vk.transpose().to_owned(), d);
        self.b[l] = SiteTensor::from_stacked_rows(&(&updated * &vk), d);
        self.lambda[j] = normalized(&s[..keep]);
        let drift = (self.trace_environment()?.mu - 1.0).abs();
        self.canonicalize(l)?;
        let mu = self.trace_environment()?.mu;
        self.b[l].scale(1.0 / mu);
        Ok((discarded, drift))
    }

    /// Restores canonical form with `outer` as the reference bond.
    ///
    /// The right gauge comes from iterating LQ factorizations around the cell
    /// and the left gauge from QR factorizations, both until the gauge
    /// matrices stop changing. The Schmidt values are then the singular
    /// values of the product of the two gauges on each bond. Working with the
    /// gauges themselves rather than with the environments they square to
    /// keeps small Schmidt values accurate to machine precision.
    pub fn canonicalize(&mut self, outer: usize) -> Result<()> {
        let (s1, s2) = (outer, outer ^ 1);
        let d = self.active.site_dim();
        let chi = self.b[s1].left();
        let right_factor = |site: usize, c: &RMat| positive_r(&self.b[site].times_right(c).stack_cols().transpose().to_owned()).transpose().to_owned();
        let left_factor = |site: usize, g: &RMat| positive_r(&self.b[site].times_left(g).stack_rows());
        let mut c_outer = Mat::<f64>::identity(chi, chi);
        for _ in 0..GAUGE_ITERATIONS {
            let next = right_factor(s1, &right_factor(s2, &c_outer));
            let (next, change) = settle(next, &c_outer);
            c_outer = next;
            if change < GAUGE_TOLERANCE {
                break;
            }
        }
        let mut d_outer = diag(&self.lambda[outer]);
        for _ in 0..GAUGE_ITERATIONS {
            let next = left_factor(s2, &left_factor(s1, &d_outer));
            let (next, change) = settle(next, &d_outer);
            d_outer = next;
            if change < GAUGE_TOLERANCE {
                break;
            }
        }
        let d_mid = left_factor(s1, &d_outer);
        let (q2, c_mid) = lq(&self.b[s2].times_right(&c_outer).stack_cols());
        let (q1, _) = lq(&self.b[s1].times_right(&c_mid).stack_cols());
        let center = |dm: &RMat, cm: &RMat, bond: usize| -> Result<(RMat, Vec<f64>)> {
            let (_, s, v) = linalg::svd_real((dm * cm).as_ref()).map_err(|reason| Error::SvdFailure { bond, reason })?;
            let top = s.first().copied().unwrap_or(0.0);
            let m = s.iter().take_while(|&&x| x > GAUGE_CUTOFF * top).count().max(1);
            Ok((v.subcols(0, m).to_owned(), normalized(&s[..m])))
        };
        let (v_o, lam_o) = center(&d_outer, &c_outer, outer)?;
        let (v_m, lam_m) = center(&d_mid, &c_mid, s2)?;
        let first = SiteTensor::from_stacked_cols(&q1, d);
        let second = SiteTensor::from_stacked_cols(&q2, d);
        self.b[s1] = first.gauge(&v_o.transpose().to_owned(), &v_m);
        self.b[s2] = second.gauge(&v_m.transpose().to_owned(), &v_o);
        self.lambda[outer] = lam_o;
        self.lambda[s2] = lam_m;
        Ok(())
    }

    /// Largest relative violation of the right and left orthonormality
    /// conditions, each measured up to an overall scale.
    pub fn canonical_residual(&self) -> f64 {
        let [r, l] = self.canonical_residuals();
        r.max(l)
    }

    /// Right and left orthonormality residuals.
    pub fn canonical_residuals(&self) -> [f64; 2] {
        let mut worst = [0.0f64; 2];
        for k in 0..2 {
            let site = &self.b[k];
            let chi_l = site.left();
            let right = site.transfer_right(&Mat::<f64>::identity(site.right(), site.right()));
            let c = (0..chi_l).map(|i| right[(i, i)]).sum::<f64>() / chi_l as f64;
            for i in 0..chi_l {
                for j in 0..chi_l {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst[0] = worst[0].max((right[(i, j)] / c - target).abs());
                }
            }
            let lam_l: Vec<f64> = self.lambda[k].iter().map(|x| x * x).collect();
            let lam_r: Vec<f64> = self.lambda[k ^ 1].iter().map(|x| x * x).collect();
            let left = site.transfer_left(&diag(&lam_l));
            let c = (0..left.nrows()).map(|i| left[(i, i)]).sum::<f64>();
            for i in 0..left.nrows() {
                for j in 0..left.ncols() {
                    let target = if i == j { lam_r[i] } else { 0.0 };
                    worst[1] = worst[1].max((left[(i, j)] / c - target).abs() / lam_r[0]);
                }
            }
        }
        worst
    }

    /// One full round: V on every A-B bond, then W on every B-A bond.
    pub fn apply_gate_pair(&mut self, prop: &RoundPropagator) -> Result<TruncationReport> {
        self.expand(&prop.active)?;
        let (wv, dv) = self.apply_layer(prop.gate(GateLayer::V), 1)?;
        let (ww, dw) = self.apply_layer(prop.gate(GateLayer::W), 0)?;
        let dims = self.bond_dims();
        Ok(TruncationReport { discarded_weight: [wv, ww], max_bond: dims[0].max(dims[1]), trace_drift: dv.max(dw) })
    }

    fn full_site_coords(&self, local: impl Fn(usize) -> f64) -> [f64; SITE_DIM] {
        let mut out = [0.0; SITE_DIM];
        for (s, f) in self.active.site_indices().into_iter().enumerate() {
            out[f] = local(s);
        }
        out
    }

    pub fn write_checkpoint(&self, mut w: impl Write, header: &CheckpointHeader) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        for v in [SITE_DIM as u64, self.truncation.max_bond as u64, header.round as u64, header.params_hash] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&header.schedule.tau.to_le_bytes())?;
        w.write_all(&[matches!(header.schedule.mode, ScheduleMode::Discrete) as u8])?;
        w.write_all(&header.schedule.trotter_constant.to_le_bytes())?;
        w.write_all(&self.truncation.tolerance.to_le_bytes())?;
        w.write_all(&(self.active.digits.len() as u64).to_le_bytes())?;
        for &d in &self.active.digits {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for k in 0..2 {
            w.write_all(&(self.lambda[k].len() as u64).to_le_bytes())?;
            for x in &self.lambda[k] {
                w.write_all(&x.to_le_bytes())?;
            }
            let data = self.b[k].to_data();
            for v in [self.b[k].phys() as u64, data.left as u64, data.right as u64] {
                w.write_all(&v.to_le_bytes())?;
            }
            for x in &data.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint(mut r: impl Read) -> Result<(Self, CheckpointHeader)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let d = read_u64(&mut r)? as usize;
        if d != SITE_DIM {
            return Err(Error::Format(format!("site dimension {d}")));
        }
        let max_bond = read_u64(&mut r)? as usize;
        let round = read_u64(&mut r)? as usize;
        let params_hash = read_u64(&mut r)?;
        let tau = f64::from_bits(read_u64(&mut r)?);
        let mut mode = [0u8; 1];
        r.read_exact(&mut mode)?;
        let trotter_constant = f64::from_bits(read_u64(&mut r)?);
        let tolerance = f64::from_bits(read_u64(&mut r)?);
        let n_digits = read_u64(&mut r)? as usize;
        if n_digits == 0 || n_digits > 4 {
            return Err(Error::Format(format!("{n_digits} active digits")));
        }
        let digits = (0..n_digits).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let active = ActiveSpace::new(digits)?;
        let mut lambda: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut sites = Vec::new();
        for slot in lambda.iter_mut() {
            let len = read_u64(&mut r)? as usize;
            *slot = (0..len).map(|_| read_u64(&mut r).map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
            let phys = read_u64(&mut r)? as usize;
            let left = read_u64(&mut r)? as usize;
            let right = read_u64(&mut r)? as usize;
            if phys != active.site_dim() || left == 0 || right == 0 {
                return Err(Error::Format(format!("tensor shape {phys}x{left}x{right}")));
            }
            let data = (0..phys * left * right).map(|_| read_u64(&mut r).map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
            let t = SiteTensor::from_data(&tensor::SiteTensorData { left, right, data })
                .ok_or_else(|| Error::Format("tensor data".into()))?;
            sites.push(t);
        }
        let b1 = sites.pop().expect("two sites");
        let b0 = sites.pop().expect("two sites");
        if b0.right() != b1.left() || b1.right() != b0.left() || lambda[0].len() != b0.left() || lambda[1].len() != b1.left() {
            return Err(Error::Format("inconsistent bond dimensions".into()));
        }
        let schedule = ScheduleConfig {
            tau,
            mode: if mode[0] == 1 { ScheduleMode::Discrete } else { ScheduleMode::Continuous },
            trotter_constant,
            partition_order: ScheduleConfig::DEFAULT_ORDER,
        };
        let state = Self {
            active,
            b: [b0, b1],
            lambda,
            truncation: TruncationConfig { max_bond, tolerance },
        };
        Ok((state, CheckpointHeader { round, params_hash, schedule }))
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>, header: &CheckpointHeader) -> Result<()> {
        let tmp = path.as_ref().with_extension("tmp");
        self.write_checkpoint(std::io::BufWriter::new(std::fs::File::create(&tmp)?), header)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Self, CheckpointHeader)> {
        Self::read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DPQCACK1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub round: usize,
    pub params_hash: u64,
    pub schedule: ScheduleConfig,
}

impl RoundEvolution for InfiniteMPS {
    fn advance(&mut self, prop: &RoundPropagator) -> Result<TruncationReport> {
        self.apply_gate_pair(prop)
    }
}

impl ReducedStates for InfiniteMPS {
    fn snapshot(&self) -> Result<ReducedSnapshot> {
        let env = self.trace_environment()?;
        let e = self.active.site_trace();
        let (ea, eb) = (self.b[0].contract(&e), self.b[1].contract(&e));
        let l = Mat::from_fn(1, env.left.len(), |_, i| env.left[i]);
        let r = Mat::from_fn(env.right.len(), 1, |i, _| env.right[i]);
        let norm = env.mu * (&l * &r)[(0, 0)];
        let l_eb = &l * &ea;
        let eb_r = &eb * &r;
        let site_a = self.full_site_coords(|s| (&l * &self.b[0].slices[s] * &eb_r)[(0, 0)] / norm);
        let site_b = self.full_site_coords(|s| (&l_eb * &self.b[1].slices[s] * &r)[(0, 0)] / norm);
        let d = self.active.site_dim();
        let idx = self.active.site_indices();
        let mut ab = vec![[0.0; SITE_DIM]; SITE_DIM];
        let mut ba = vec![[0.0; SITE_DIM]; SITE_DIM];
        for s in 0..d {
            let left_a = &l * &self.b[0].slices[s];
            let left_b = &l_eb * &self.b[1].slices[s];
            for t in 0..d {
                ab[idx[s]][idx[t]] = (&left_a * &self.b[1].slices[t] * &r)[(0, 0)] / norm;
                // B of this cell, then A of the next one, closed by E_B r.
                ba[idx[s]][idx[t]] = (&left_b * &self.b[0].slices[t] * &eb_r)[(0, 0)] / (norm * env.mu);
            }
        }
        Ok(ReducedSnapshot::from_sites(&[site_a, site_b], &[ab, ba], vec![self.lambda[1].clone(), self.lambda[0].clone()]))
    }
}
