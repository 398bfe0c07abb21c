//! Model parameters of the three-cell rule and the steady-state rate solve.
//!
//! Conventions used throughout the crate: `|0>` is the empty cell, `|1>` the
//! active cell, `n = |1><1|`, `sigma+ = |1><0|` (excitation at rate
//! `gamma_plus`) and `sigma- = |0><1|` (decay at rate `gamma_minus`). With these
//! normalizations the rates are exactly the jump rates of the center cell.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// State of the (left, right) neighbors of a three-cell rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeighborhoodLabel {
    alpha: u8,
    beta: u8,
}

impl NeighborhoodLabel {
    pub const ALL: [NeighborhoodLabel; 4] = [
        NeighborhoodLabel { alpha: 0, beta: 0 },
        NeighborhoodLabel { alpha: 0, beta: 1 },
        NeighborhoodLabel { alpha: 1, beta: 0 },
        NeighborhoodLabel { alpha: 1, beta: 1 },
    ];

    pub fn new(alpha: u8, beta: u8) -> Result<Self> {
        if alpha > 1 || beta > 1 {
            return Err(Error::InvalidParameter(format!(
                "neighborhood bits must be 0 or 1, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(self) -> u8 {
        self.alpha
    }

    pub fn beta(self) -> u8 {
        self.beta
    }

    /// Position in `ALL`, i.e. `2 * alpha + beta`.
    pub fn index(self) -> usize {
        2 * self.alpha as usize + self.beta as usize
    }

    pub fn as_str(self) -> &'static str {
        ["00", "01", "10", "11"][self.index()]
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "00" => Ok(Self::ALL[0]),
            "01" => Ok(Self::ALL[1]),
            "10" => Ok(Self::ALL[2]),
            "11" => Ok(Self::ALL[3]),
            _ => Err(Error::InvalidParameter(format!("unknown neighborhood label {s:?}"))),
        }
    }
}

impl fmt::Display for NeighborhoodLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rates of one neighborhood-conditioned term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborhoodRates {
    /// Hamiltonian amplitude; the center sees `(theta / 2) X`.
    pub theta: f64,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
}

impl NeighborhoodRates {
    pub fn omega(&self) -> f64 {
        self.theta / 2.0
    }
}

/// Which gamma_minus normalization a preset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatePreset {
    /// `gamma_minus = 1 - y` for one active neighbor and `1 - z` for two, with
    /// `gamma_minus = 1` for the empty neighborhood. Total rate is 1 wherever
    /// a neighbor is active.
    #[default]
    SiteDpTable,
    /// `gamma_minus = 1` everywhere, `gamma_plus = p / (1 - p)`.
    UnitDecay,
}

impl RatePreset {
    pub fn name(self) -> &'static str {
        match self {
            RatePreset::SiteDpTable => "site-dp-table",
            RatePreset::UnitDecay => "unit-decay",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "site-dp-table" | "table" => Ok(RatePreset::SiteDpTable),
            "unit-decay" | "unit" => Ok(RatePreset::UnitDecay),
            _ => Err(Error::InvalidParameter(format!("unknown rate preset {s:?}"))),
        }
    }
}

/// Full parameter set of the three-cell rule: one set of rates per neighborhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeCellParams {
    /// Nominal update probability the rates were derived from.
    pub p: f64,
    /// Nominal Hamiltonian amplitude of the `11` neighborhood.
    pub omega: f64,
    pub rates: [NeighborhoodRates; 4],
}

impl ThreeCellParams {
    pub fn zero() -> Self {
        Self { p: 0.0, omega: 0.0, rates: [NeighborhoodRates::default(); 4] }
    }

    pub fn get(&self, label: NeighborhoodLabel) -> &NeighborhoodRates {
        &self.rates[label.index()]
    }

    pub fn has_hamiltonian(&self) -> bool {
        self.rates.iter().any(|r| r.theta != 0.0)
    }

    /// Steady active-state occupation of the center for a frozen neighborhood.
    pub fn target_probability(&self, label: NeighborhoodLabel) -> Result<f64> {
        steady_state_3cell(self.get(label)).map(|s| s.active)
    }

    /// Checks rate signs, physicality of the coherent drive and the
    /// absorbing-state constraint of the `00` neighborhood.
    pub fn validate(&self) -> Result<()> {
        for label in NeighborhoodLabel::ALL {
            let r = self.get(label);
            for (name, v) in [("theta", r.theta), ("gamma_minus", r.gamma_minus), ("gamma_plus", r.gamma_plus)] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidParameter(format!("{name}[{label}] = {v} must be finite and >= 0")));
                }
            }
            if r.gamma_minus <= 0.0 && r.gamma_plus <= 0.0 {
                continue;
            }
            if r.theta != 0.0 {
                let target = self.target_probability(label)?;
                let disc = discriminant(target, r.omega(), r.gamma_minus);
                if disc < -1e-12 * r.gamma_minus.powi(2).max(1.0) {
                    return Err(Error::NegativeDiscriminant {
                        p: target,
                        omega: r.omega(),
                        gamma_minus: r.gamma_minus,
                        discriminant: disc,
                    });
                }
            }
        }
        Ok(())
    }

    /// True when the `00` neighborhood can neither excite nor drive the
    /// center, so the empty lattice is absorbing.
    pub fn is_absorbing(&self) -> bool {
        let r = &self.rates[0];
        r.gamma_plus == 0.0 && r.theta == 0.0
    }

    pub fn to_config(&self) -> RateConfig {
        let mut config = RateConfig {
            p: self.p,
            omega: self.omega,
            gamma_minus: BTreeMap::new(),
            gamma_plus: BTreeMap::new(),
            theta: BTreeMap::new(),
        };
        for label in NeighborhoodLabel::ALL {
            let r = self.get(label);
            let key = label.as_str().to_string();
            config.gamma_minus.insert(key.clone(), r.gamma_minus);
            config.gamma_plus.insert(key.clone(), r.gamma_plus);
            config.theta.insert(key, r.theta);
        }
        config
    }

    /// Stable 64-bit fingerprint of the rates, used in binary dump headers.
    pub fn hash64(&self) -> u64 {
        let mut hasher = Sha256::new();
        for v in [self.p, self.omega] {
            hasher.update(v.to_le_bytes());
        }
        for r in &self.rates {
            for v in [r.theta, r.gamma_minus, r.gamma_plus] {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
    }
}

/// Plain-text (TOML) form of [`ThreeCellParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub p: f64,
    pub omega: f64,
    pub gamma_minus: BTreeMap<String, f64>,
    pub gamma_plus: BTreeMap<String, f64>,
    pub theta: BTreeMap<String, f64>,
}

impl RateConfig {
    pub fn to_params(&self) -> Result<ThreeCellParams> {
        let mut params = ThreeCellParams::zero();
        params.p = self.p;
        params.omega = self.omega;
        for (table, name) in [(&self.gamma_minus, "gamma_minus"), (&self.gamma_plus, "gamma_plus"), (&self.theta, "theta")] {
            if table.len() != 4 {
                return Err(Error::InvalidParameter(format!(
                    "{name} needs exactly the four labels 00, 01, 10, 11"
                )));
            }
            for (key, &v) in table {
                let label = NeighborhoodLabel::parse(key)?;
                let slot = &mut params.rates[label.index()];
                match name {
                    "gamma_minus" => slot.gamma_minus = v,
                    "gamma_plus" => slot.gamma_plus = v,
                    _ => slot.theta = v,
                }
            }
        }
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// Center-site reduced density matrix of a three-cell rule in its steady
/// state, conditioned on a frozen neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState3Cell {
    /// `<0|rho|0>`.
    pub empty: f64,
    /// `<1|rho|1>`; equals the target update probability.
    pub active: f64,
    /// `<1|rho|0>`, the active-row / empty-column coherence. Purely imaginary
    /// for a real drive amplitude.
    pub coherence: C64,
}

impl SteadyState3Cell {
    /// The 2x2 matrix in the `(|0>, |1>)` basis.
    pub fn matrix(&self) -> [[C64; 2]; 2] {
        [
            [C64::new(self.empty, 0.0), self.coherence.conj()],
            [self.coherence, C64::new(self.active, 0.0)],
        ]
    }
}

/// `gamma_minus^2 - 16 omega^2 (1 - 3p + 2p^2)`.
pub fn discriminant(p: f64, omega: f64, gamma_minus: f64) -> f64 {
    gamma_minus * gamma_minus - 16.0 * omega * omega * (1.0 - 3.0 * p + 2.0 * p * p)
}

/// Excitation rate that makes `p` the steady active occupation of a center
/// driven by `omega X` and decaying at `gamma_minus`.
pub fn solve_gamma_plus(p: f64, omega: f64, gamma_minus: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!("p = {p}, omega = {omega}")));
    }
    if !(gamma_minus > 0.0) || !gamma_minus.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma_minus = {gamma_minus} must be > 0")));
    }
    if p == 1.0 {
        return Err(Error::DegenerateP);
    }
    if omega == 0.0 {
        return Ok(p * gamma_minus / (1.0 - p));
    }
    let disc = discriminant(p, omega, gamma_minus);
    if disc < 0.0 {
        return Err(Error::NegativeDiscriminant { p, omega, gamma_minus, discriminant: disc });
    }
    let gamma_plus = ((2.0 * p - 1.0) * gamma_minus + disc.sqrt()) / (2.0 * (1.0 - p));
    if gamma_plus < 0.0 {
        // Coherent pumping alone already overshoots the target occupation.
        return Err(Error::NegativeRate { p, omega, gamma_minus, gamma_plus });
    }
    Ok(gamma_plus)
}

/// Closed-form `<1|rho|0>` of the driven steady state with target `p`.
pub fn coherence_closed_form(p: f64, omega: f64, gamma_minus: f64) -> Result<C64> {
    if omega == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let disc = discriminant(p, omega, gamma_minus);
    if disc < 0.0 {
        return Err(Error::NegativeDiscriminant { p, omega, gamma_minus, discriminant: disc });
    }
    Ok(C64::new(0.0, -1.0 / (4.0 * omega)) * (gamma_minus - disc.sqrt()))
}

/// Steady state of the center cell for the given rates, solving the
/// four-equation stationarity system directly.
pub fn steady_state_3cell(rates: &NeighborhoodRates) -> Result<SteadyState3Cell> {
    let omega = rates.omega();
    let total = rates.gamma_plus + rates.gamma_minus;
    if !(total > 0.0) {
        return Err(Error::DegenerateNullSpace { dimension: if omega == 0.0 { 4 } else { 2 }, tolerance: 0.0 });
    }
    let drive = 4.0 * omega * omega / total;
    let active = (rates.gamma_plus + drive) / (total + 2.0 * drive);
    let empty = 1.0 - active;
    let coherence = C64::new(0.0, -2.0 * omega * (empty - active) / total);
    Ok(SteadyState3Cell { empty, active, coherence })
}

/// Residuals of the four stationarity equations for a candidate center
/// state. In `(|0>, |1>)` indexing these are `d rho_11/dt`, `d rho_10/dt`,
/// `d rho_01/dt` and `d rho_00/dt`.
pub fn stationarity_residuals(rates: &NeighborhoodRates, state: &SteadyState3Cell) -> [C64; 4] {
    let omega = rates.omega();
    let i = C64::new(0.0, 1.0);
    let r00 = C64::new(state.empty, 0.0);
    let r11 = C64::new(state.active, 0.0);
    let r10 = state.coherence;
    let r01 = state.coherence.conj();
    let half = (rates.gamma_plus + rates.gamma_minus) / 2.0;
    [
        -i * omega * (r01 - r10) + rates.gamma_plus * r00 - rates.gamma_minus * r11,
        -i * omega * (r00 - r11) - half * r10,
        -i * omega * (r11 - r00) - half * r01,
        -i * omega * (r10 - r01) - rates.gamma_plus * r00 + rates.gamma_minus * r11,
    ]
}

/// Classical Domany-Kinzel update probabilities `p(1 | left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkcaRule {
    /// `p(1 | 0, 0)`.
    pub x: f64,
    /// `p(1 | 0, 1) = p(1 | 1, 0)`.
    pub y: f64,
    /// `p(1 | 1, 1)`.
    pub z: f64,
}

impl DkcaRule {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        for (name, v) in [("x", x), ("y", y), ("z", z)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} is not a probability")));
            }
        }
        Ok(Self { x, y, z })
    }

    pub fn probability(&self, left: bool, right: bool) -> f64 {
        match (left, right) {
            (false, false) => self.x,
            (true, true) => self.z,
            _ => self.y,
        }
    }

    pub fn for_label(&self, label: NeighborhoodLabel) -> f64 {
        self.probability(label.alpha() == 1, label.beta() == 1)
    }

    pub fn is_directed_percolation(&self) -> bool {
        self.x == 0.0
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{p} is not a probability")))
    }
}

/// Site directed percolation: `(0, p, p)`.
pub fn dp_site_rule(p: f64) -> Result<DkcaRule> {
    check_probability(p)?;
    DkcaRule::new(0.0, p, p)
}

/// Bond directed percolation: `(0, q, q (2 - q))`.
pub fn dp_bond_rule(q: f64) -> Result<DkcaRule> {
    check_probability(q)?;
    DkcaRule::new(0.0, q, q * (2.0 - q))
}

/// Rates realizing `rule` with a coherent drive `omega` on the `11`
/// neighborhood.
pub fn quantum_rates(rule: &DkcaRule, omega: f64, preset: RatePreset) -> Result<ThreeCellParams> {
    if omega < 0.0 || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!("omega = {omega} must be finite and >= 0")));
    }
    let mut params = ThreeCellParams::zero();
    params.p = rule.z;
    params.omega = omega;
    for label in NeighborhoodLabel::ALL {
        let target = rule.for_label(label);
        let drive = if label.index() == 3 { omega } else { 0.0 };
        let gamma_minus = match (preset, label.index()) {
            (RatePreset::SiteDpTable, 0) => 1.0,
            (RatePreset::SiteDpTable, _) => 1.0 - target,
            (RatePreset::UnitDecay, _) => 1.0,
        };
        let gamma_plus = if gamma_minus == 0.0 {
            // Deterministic activation: decay is switched off, any positive rate works.
            if target == 1.0 && drive == 0.0 {
                1.0
            } else {
                return Err(Error::DegenerateP);
            }
        } else if label.index() == 0 && target == 0.0 {
            0.0
        } else {
            solve_gamma_plus(target, drive, gamma_minus)?
        };
        params.rates[label.index()] = NeighborhoodRates { theta: 2.0 * drive, gamma_minus, gamma_plus };
    }
    params.validate()?;
    Ok(params)
}

/// Site-DP rates of the coherent model (`x = 0`, `y = z = p`) with the
/// table normalization of `gamma_minus`.
pub fn dp_quantum_rates(p: f64, omega: f64) -> Result<ThreeCellParams> {
    quantum_rates(&dp_site_rule(p)?, omega, RatePreset::SiteDpTable)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_plus_symmetric_at_half() {
        assert_eq!(solve_gamma_plus(0.5, 0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn gamma_plus_incoherent_branch() {
        let g = solve_gamma_plus(0.7, 0.0, 1.0).unwrap();
        assert!((g - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_plus_coherent_branch() {
        let g = solve_gamma_plus(0.75, 0.1, 1.0).unwrap();
        let want = (0.5 + 1.02f64.sqrt()) / 0.5;
        assert!((g - want).abs() < 1e-14);
        assert!((g - 3.019901).abs() < 1e-6);
    }

    #[test]
    fn gamma_plus_errors() {
        assert!(matches!(solve_gamma_plus(1.0, 0.0, 1.0), Err(Error::DegenerateP)));
        // p < 1/2 with a drive well beyond the discriminant bound.
        assert!(matches!(solve_gamma_plus(0.2, 1.0, 1.0), Err(Error::NegativeDiscriminant { .. })));
        // Discriminant positive but pumping alone overshoots p.
        assert!(matches!(solve_gamma_plus(0.01, 0.1, 1.0), Err(Error::NegativeRate { .. })));
        assert!(solve_gamma_plus(0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn zero_drive_limit_is_continuous() {
        for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let a = solve_gamma_plus(p, 0.0, 1.0).unwrap();
            let b = solve_gamma_plus(p, 1e-6, 1.0).unwrap();
            assert!((a - b).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn steady_state_equal_rates() {
        let s = steady_state_3cell(&NeighborhoodRates { theta: 0.0, gamma_minus: 1.0, gamma_plus: 1.0 }).unwrap();
        assert_eq!((s.empty, s.active), (0.5, 0.5));
        assert_eq!(s.coherence, C64::new(0.0, 0.0));
    }

    #[test]
    fn steady_state_coherence_example() {
        let gp = solve_gamma_plus(0.75, 0.1, 1.0).unwrap();
        let rates = NeighborhoodRates { theta: 0.2, gamma_minus: 1.0, gamma_plus: gp };
        let s = steady_state_3cell(&rates).unwrap();
        assert!((s.active - 0.75).abs() < 1e-14);
        assert!(s.coherence.re.abs() < 1e-16);
        assert!((s.coherence.im - 0.024876).abs() < 1e-6);
        let closed = coherence_closed_form(0.75, 0.1, 1.0).unwrap();
        assert!((closed - s.coherence).norm() < 1e-14);
    }

    #[test]
    fn site_and_bond_rules() {
        assert_eq!(dp_site_rule(0.7).unwrap(), DkcaRule { x: 0.0, y: 0.7, z: 0.7 });
        assert_eq!(dp_site_rule(0.0).unwrap(), DkcaRule { x: 0.0, y: 0.0, z: 0.0 });
        assert_eq!(dp_site_rule(1.0).unwrap(), DkcaRule { x: 0.0, y: 1.0, z: 1.0 });
        assert_eq!(dp_bond_rule(0.5).unwrap(), DkcaRule { x: 0.0, y: 0.5, z: 0.75 });
        assert_eq!(dp_bond_rule(0.0).unwrap(), DkcaRule { x: 0.0, y: 0.0, z: 0.0 });
        assert_eq!(dp_bond_rule(1.0).unwrap(), DkcaRule { x: 0.0, y: 1.0, z: 1.0 });
        assert!(dp_site_rule(1.5).is_err());
    }

    #[test]
    fn dp_quantum_rate_table() {
        let params = dp_quantum_rates(0.7, 0.0).unwrap();
        let r11 = params.get(NeighborhoodLabel::ALL[3]);
        assert!((r11.gamma_plus - 0.7).abs() < 1e-15);
        assert!((r11.gamma_minus - 0.3).abs() < 1e-15);
        assert_eq!(params.rates[0], NeighborhoodRates { theta: 0.0, gamma_minus: 1.0, gamma_plus: 0.0 });
        assert!(params.is_absorbing());

        let empty = dp_quantum_rates(0.0, 0.0).unwrap();
        assert!(empty.rates.iter().all(|r| r.gamma_plus == 0.0));

        let driven = dp_quantum_rates(0.7, 0.1).unwrap();
        assert_eq!(driven.rates[3].theta, 0.2);
        assert!(driven.rates[..3].iter().all(|r| r.theta == 0.0));
        for label in NeighborhoodLabel::ALL {
            let target = if label.index() == 0 { 0.0 } else { 0.7 };
            assert!((driven.target_probability(label).unwrap() - target).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_decay_preset() {
        let params = quantum_rates(&dp_site_rule(0.8).unwrap(), 0.0, RatePreset::UnitDecay).unwrap();
        assert!(params.rates.iter().all(|r| r.gamma_minus == 1.0));
        assert!((params.rates[1].gamma_plus - 4.0).abs() < 1e-12);
    }

    #[test]
    fn config_roundtrip_uses_label_keys() {
        let params = dp_quantum_rates(0.7, 0.1).unwrap();
        let text = params.to_config().to_toml().unwrap();
        assert!(text.contains("[gamma_minus]"));
        assert!(text.contains("11 = "));
        let back = RateConfig::from_toml(&text).unwrap().to_params().unwrap();
        assert_eq!(back, params);
        assert_eq!(back.hash64(), params.hash64());
    }

    #[test]
    fn config_rejects_missing_label() {
        let mut config = dp_quantum_rates(0.7, 0.0).unwrap().to_config();
        config.theta.remove("10");
        assert!(config.to_params().is_err());
    }
}
