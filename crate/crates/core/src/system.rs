//! Aggregate market representation and the margin system.
//!
//! A [`Market`] couples type-level populations with a transfer technology
//! per pair and a temperature. The equilibrium conditions are a pair of
//! margin equations in the potentials `(u, v)`:
//!
//! ```text
//! unmatched_x(u_x) + sum_y mass_xy(u_x, v_y) = n_x
//! unmatched_y(v_y) + sum_x mass_xy(u_x, v_y) = m_y
//! ```
//!
//! In the balanced variant the unmatched terms are dropped; total masses on
//! the two sides must then agree, the margin equations lose one degree of
//! freedom, and solutions are pinned down by normalizing one potential
//! (see [`gauge_pin`]).

use crate::numeric::compensated_sum;
use crate::transfer::{unmatched_mass, TransferError, TransferSpec};

/// Relative slack allowed when checking that a balanced market has equal
/// total masses on both sides.
pub const BALANCE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarketError {
    #[error("market needs at least one type on each side")]
    EmptySide,
    #[error("mass for {side} type '{label}' must be strictly positive, got {value}")]
    NonPositiveMass {
        side: &'static str,
        label: String,
        value: f64,
    },
    #[error("{side} has {labels} labels but {masses} masses")]
    MassCountMismatch {
        side: &'static str,
        labels: usize,
        masses: usize,
    },
    #[error("duplicate {side} label '{label}'")]
    DuplicateLabel { side: &'static str, label: String },
    #[error("balanced market requires equal total masses: sum(n) = {sum_n}, sum(m) = {sum_m}")]
    BalanceMismatch { sum_n: f64, sum_m: f64 },
    #[error("transfer table row for '{x}' is missing an entry for '{y}'")]
    MissingTransfer { x: String, y: String },
    #[error("transfer table has {rows} rows, expected one per x type ({expected})")]
    TransferRowCount { rows: usize, expected: usize },
    #[error("temperature must be strictly positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("invalid transfer for pair ({x}, {y}): {source}")]
    InvalidTransfer {
        x: String,
        y: String,
        source: TransferError,
    },
    #[error("operation requires a balanced market")]
    NotBalanced,
    #[error("potentials have {u_len}/{v_len} entries, market has {nx}/{ny} types")]
    PotentialsShape {
        u_len: usize,
        v_len: usize,
        nx: usize,
        ny: usize,
    },
}

/// Transfer technology assignment: one spec for every pair, or a full table.
#[derive(Debug, Clone)]
pub enum TransferTable {
    Global(TransferSpec),
    PerPair(Vec<Vec<TransferSpec>>),
}

/// An aggregate matching market.
#[derive(Debug, Clone)]
pub struct Market {
    x_types: Vec<String>,
    y_types: Vec<String>,
    n: Vec<f64>,
    m: Vec<f64>,
    transfers: Vec<TransferSpec>, // row-major |X| x |Y|
    temperature: f64,
    balanced: bool,
}

impl Market {
    pub fn new(
        x_types: Vec<String>,
        y_types: Vec<String>,
        n: Vec<f64>,
        m: Vec<f64>,
        transfers: TransferTable,
        temperature: f64,
        balanced: bool,
    ) -> Result<Self, MarketError> {
        if x_types.is_empty() || y_types.is_empty() {
            return Err(MarketError::EmptySide);
        }
        if x_types.len() != n.len() {
            return Err(MarketError::MassCountMismatch {
                side: "x",
                labels: x_types.len(),
                masses: n.len(),
            });
        }
        if y_types.len() != m.len() {
            return Err(MarketError::MassCountMismatch {
                side: "y",
                labels: y_types.len(),
                masses: m.len(),
            });
        }
        for (side, labels) in [("x", &x_types), ("y", &y_types)] {
            let mut seen = std::collections::HashSet::new();
            for label in labels.iter() {
                if !seen.insert(label.as_str()) {
                    return Err(MarketError::DuplicateLabel {
                        side,
                        label: label.clone(),
                    });
                }
            }
        }
        for (side, labels, masses) in [("x", &x_types, &n), ("y", &y_types, &m)] {
            for (label, &value) in labels.iter().zip(masses.iter()) {
                if !(value.is_finite() && value > 0.0) {
                    return Err(MarketError::NonPositiveMass {
                        side,
                        label: label.clone(),
                        value,
                    });
                }
            }
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(MarketError::InvalidTemperature(temperature));
        }
        if balanced {
            let sum_n = compensated_sum(n.iter().cloned());
            let sum_m = compensated_sum(m.iter().cloned());
            if (sum_n - sum_m).abs() > BALANCE_REL_TOL * sum_n.abs().max(sum_m.abs()) {
                return Err(MarketError::BalanceMismatch { sum_n, sum_m });
            }
        }

        let flat = match transfers {
            TransferTable::Global(spec) => {
                spec.validate()
                    .map_err(|source| MarketError::InvalidTransfer {
                        x: "*".into(),
                        y: "*".into(),
                        source,
                    })?;
                vec![spec; x_types.len() * y_types.len()]
            }
            TransferTable::PerPair(rows) => {
                if rows.len() != x_types.len() {
                    return Err(MarketError::TransferRowCount {
                        rows: rows.len(),
                        expected: x_types.len(),
                    });
                }
                let mut flat = Vec::with_capacity(x_types.len() * y_types.len());
                for (x, row) in rows.into_iter().enumerate() {
                    if row.len() != y_types.len() {
                        let missing = row.len().min(y_types.len().saturating_sub(1));
                        return Err(MarketError::MissingTransfer {
                            x: x_types[x].clone(),
                            y: y_types.get(missing).cloned().unwrap_or_default(),
                        });
                    }
                    for (y, spec) in row.into_iter().enumerate() {
                        spec.validate()
                            .map_err(|source| MarketError::InvalidTransfer {
                                x: x_types[x].clone(),
                                y: y_types[y].clone(),
                                source,
                            })?;
                        flat.push(spec);
                    }
                }
                flat
            }
        };

        Ok(Market {
            x_types,
            y_types,
            n,
            m,
            transfers: flat,
            temperature,
            balanced,
        })
    }

    pub fn num_x(&self) -> usize {
        self.x_types.len()
    }

    pub fn num_y(&self) -> usize {
        self.y_types.len()
    }

    pub fn x_types(&self) -> &[String] {
        &self.x_types
    }

    pub fn y_types(&self) -> &[String] {
        &self.y_types
    }

    pub fn x_index(&self, label: &str) -> Option<usize> {
        self.x_types.iter().position(|l| l == label)
    }

    pub fn y_index(&self, label: &str) -> Option<usize> {
        self.y_types.iter().position(|l| l == label)
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn balanced(&self) -> bool {
        self.balanced
    }

    pub fn transfer(&self, x: usize, y: usize) -> &TransferSpec {
        &self.transfers[x * self.y_types.len() + y]
    }

    /// Iterator over `(x, y, spec)` in row-major order.
    pub fn transfers(&self) -> impl Iterator<Item = (usize, usize, &TransferSpec)> {
        let ny = self.y_types.len();
        self.transfers
            .iter()
            .enumerate()
            .map(move |(k, spec)| (k / ny, k % ny, spec))
    }

    /// Whether every pair uses a smooth transfer family.
    pub fn all_smooth(&self) -> bool {
        self.transfers.iter().all(TransferSpec::is_smooth)
    }

    /// Returns a copy with a different temperature.
    pub fn with_temperature(&self, temperature: f64) -> Result<Market, MarketError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(MarketError::InvalidTemperature(temperature));
        }
        let mut market = self.clone();
        market.temperature = temperature;
        Ok(market)
    }

    pub(crate) fn check_potentials(&self, pot: &Potentials) -> Result<(), MarketError> {
        if pot.u.len() != self.num_x() || pot.v.len() != self.num_y() {
            return Err(MarketError::PotentialsShape {
                u_len: pot.u.len(),
                v_len: pot.v.len(),
                nx: self.num_x(),
                ny: self.num_y(),
            });
        }
        Ok(())
    }
}

/// Equilibrium potentials, one entry per type on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Potentials {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Self {
        Potentials { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Matching masses: pair masses plus the unmatched mass on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    nx: usize,
    ny: usize,
    pub mu: Vec<f64>, // row-major nx x ny
    pub mu_x0: Vec<f64>,
    pub mu_0y: Vec<f64>,
}

impl Matching {
    pub fn new(nx: usize, ny: usize) -> Self {
        Matching {
            nx,
            ny,
            mu: vec![0.0; nx * ny],
            mu_x0: vec![0.0; nx],
            mu_0y: vec![0.0; ny],
        }
    }

    pub fn num_x(&self) -> usize {
        self.nx
    }

    pub fn num_y(&self) -> usize {
        self.ny
    }

    pub fn pair_mass(&self, x: usize, y: usize) -> f64 {
        self.mu[x * self.ny + y]
    }

    pub fn set_pair_mass(&mut self, x: usize, y: usize, value: f64) {
        self.mu[x * self.ny + y] = value;
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.mu[x * self.ny..(x + 1) * self.ny]
    }

    /// Matched mass in row `x` (excluding the unmatched entry).
    pub fn row_matched_sum(&self, x: usize) -> f64 {
        compensated_sum(self.row(x).iter().cloned())
    }

    /// Matched mass in column `y`.
    pub fn col_matched_sum(&self, y: usize) -> f64 {
        compensated_sum((0..self.nx).map(|x| self.pair_mass(x, y)))
    }

    pub fn total_matched(&self) -> f64 {
        compensated_sum(self.mu.iter().cloned())
    }
}

/// Margin residuals at the given potentials: for each type, the mass its
/// margin equation produces minus the population mass.
pub fn residual(market: &Market, pot: &Potentials) -> Result<(Vec<f64>, Vec<f64>), TransferError> {
    let temp = market.temperature();
    let (nx, ny) = (market.num_x(), market.num_y());
    let mut masses = vec![0.0; nx * ny];
    for (x, y, spec) in market.transfers() {
        masses[x * ny + y] = spec.matching_mass(temp, pot.u[x], pot.v[y])?;
    }

    let mut x_res = Vec::with_capacity(nx);
    for x in 0..nx {
        let matched = compensated_sum(masses[x * ny..(x + 1) * ny].iter().cloned());
        let unmatched = if market.balanced() {
            0.0
        } else {
            unmatched_mass(temp, pot.u[x])
        };
        x_res.push(unmatched + matched - market.n()[x]);
    }
    let mut y_res = Vec::with_capacity(ny);
    for y in 0..ny {
        let matched = compensated_sum((0..nx).map(|x| masses[x * ny + y]));
        let unmatched = if market.balanced() {
            0.0
        } else {
            unmatched_mass(temp, pot.v[y])
        };
        y_res.push(unmatched + matched - market.m()[y]);
    }
    Ok((x_res, y_res))
}

/// Largest margin violation scaled by the corresponding population mass.
/// This is the convergence norm used throughout: it is invariant to
/// rescaling the whole market.
pub fn scaled_residual_norm(market: &Market, x_res: &[f64], y_res: &[f64]) -> f64 {
    let from_x = x_res
        .iter()
        .zip(market.n())
        .map(|(r, n)| (r / n).abs())
        .fold(0.0_f64, f64::max);
    let from_y = y_res
        .iter()
        .zip(market.m())
        .map(|(r, m)| (r / m).abs())
        .fold(0.0_f64, f64::max);
    from_x.max(from_y)
}

/// Builds the full matching implied by a set of potentials. The margin
/// invariants hold exactly when `residual(market, pot)` vanishes.
pub fn matching_from_potentials(
    market: &Market,
    pot: &Potentials,
) -> Result<Matching, TransferError> {
    let temp = market.temperature();
    let (nx, ny) = (market.num_x(), market.num_y());
    let mut matching = Matching::new(nx, ny);
    for (x, y, spec) in market.transfers() {
        matching.set_pair_mass(x, y, spec.matching_mass(temp, pot.u[x], pot.v[y])?);
    }
    if !market.balanced() {
        for x in 0..nx {
            matching.mu_x0[x] = unmatched_mass(temp, pot.u[x]);
        }
        for y in 0..ny {
            matching.mu_0y[y] = unmatched_mass(temp, pot.v[y]);
        }
    }
    Ok(matching)
}

/// Normalizes a balanced-market solution so that `u[anchor_x] = 0`.
///
/// Balanced solutions form a one-parameter family; this selects the
/// canonical representative. For all-TU markets the family is an exact
/// shift `(u - c, v + c)`, applied directly; other families re-solve the
/// pinned system warm-started from the shifted potentials.
pub fn gauge_pin(
    market: &Market,
    pot: &Potentials,
    anchor_x: usize,
) -> Result<Potentials, crate::ipfp::SolveError> {
    if !market.balanced() {
        return Err(MarketError::NotBalanced.into());
    }
    market.check_potentials(pot)?;
    let shift = pot.u[anchor_x];
    if shift == 0.0 {
        return Ok(pot.clone());
    }
    let shifted = Potentials {
        u: pot.u.iter().map(|u| u - shift).collect(),
        v: pot.v.iter().map(|v| v + shift).collect(),
    };
    let all_tu = market
        .transfers
        .iter()
        .all(|s| matches!(s, TransferSpec::Tu { .. }));
    if all_tu {
        return Ok(shifted);
    }
    let config = crate::ipfp::SolverConfig {
        gauge_anchor: Some(anchor_x),
        ..crate::ipfp::SolverConfig::default()
    };
    let solution = crate::ipfp::solve_warm(market, &shifted, &config)?;
    Ok(solution.potentials)
}
