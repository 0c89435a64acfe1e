//! Alternating margin-fitting solver for the aggregate system.
//!
//! Each full iteration solves every x-margin equation exactly (holding `v`
//! fixed), then every y-margin equation (holding the fresh `u` fixed),
//! starting from the sentinel `v = +inf` under which matched terms
//! contribute exactly zero. The trailing side's iterates decrease
//! monotonically toward the solution; the sweep stops once the sup-change
//! of the trailing side falls below `tol` *and* the scaled margin residual
//! certifies the fixed point.
//!
//! Scalar margin equations are solved via closed forms where the row is a
//! single family (all-TU rows reduce to a quadratic in `exp(-u/2T)`,
//! all-NTU rows to a sorted piecewise-linear solve in `exp(-u/T)`), and by
//! bracketed bisection with Newton acceleration otherwise.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::numeric::{log_add_exp, log_sum_exp};
use crate::rootfind::{self, Bracket};
use crate::system::{
    matching_from_potentials, residual, scaled_residual_norm, Market, MarketError, Matching,
    Potentials,
};
use crate::transfer::{unmatched_mass, TransferError, TransferSpec};

/// Half-sweeps with at least this many rows run on the rayon pool.
const PARALLEL_ROWS: usize = 8;

/// Solver settings.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Stopping precision for the sup-change statistic and the residual
    /// certificate. The residual is only demanded down to the floor that
    /// f64 potentials can express (about `eps / temperature`), which
    /// matters for strongly cooled solves.
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iter: usize,
    /// Relative tolerance of the inner scalar margin solves.
    pub scalar_tol: f64,
    /// Emit a `log::debug!` progress line every this many sweeps (0 = never).
    pub log_every: usize,
    /// Interleave single x and y updates instead of full half-sweeps.
    pub gauss_seidel: bool,
    /// Sweep the y side first (mirrored iteration). Useful for verifying
    /// that the fixed point does not depend on the sweep order.
    pub y_first: bool,
    /// Anchor type pinned to zero in balanced markets (defaults to the
    /// first x type).
    pub gauge_anchor: Option<usize>,
    /// Require the residual certificate in addition to the sup-change
    /// statistic before declaring convergence. Disabled for warm-up solves
    /// inside the cooling loop, where stabilized iterates are all that is
    /// needed; the measured residual is still reported.
    pub certify_residual: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_iter: 10_000,
            scalar_tol: 1e-13,
            log_every: 0,
            gauss_seidel: false,
            y_first: false,
            gauge_anchor: None,
            certify_residual: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SolveError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.scalar_tol <= 0.0 || self.scalar_tol.is_nan() || self.scalar_tol > self.tol {
            return Err(SolveError::InvalidConfig(format!(
                "scalar_tol must satisfy 0 < scalar_tol <= tol, got {}",
                self.scalar_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(SolveError::InvalidConfig(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Convergence data for one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// Full sweeps performed.
    pub iterations: usize,
    /// Sup-norm change of the trailing side between consecutive sweeps;
    /// this is the stopping statistic. The first sweep (change from the
    /// infinite sentinel) is not recorded.
    pub sup_change_history: Vec<f64>,
    /// Largest margin violation scaled by the corresponding mass.
    pub final_residual: f64,
    pub converged: bool,
    /// Count of trailing-side entries that increased by more than
    /// `10 * scalar_tol` between sweeps. Zero for every built-in family
    /// when solving from the cold start.
    pub monotone_violations: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// A converged solve: potentials, the induced matching, and the report.
#[derive(Debug, Clone)]
pub struct Solution {
    pub potentials: Potentials,
    pub matching: Matching,
    pub report: SolveReport,
}

/// State returned with a non-convergence error so callers can inspect or
/// resume the partial solve.
#[derive(Debug, Clone)]
pub struct PartialSolve {
    pub report: SolveReport,
    pub potentials: Potentials,
    pub matching: Matching,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("margin equation for {side} type '{label}' has no root within the bracket budget")]
    NoRoot { side: &'static str, label: String },
    #[error(
        "did not converge within {} sweeps (last residual {:.3e})",
        .0.report.iterations,
        .0.report.final_residual
    )]
    NotConverged(Box<PartialSolve>),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("jacobian diagnostic requires smooth transfers, market has a {family} pair")]
    DiagnosticUnsupported { family: String },
    #[error("finite-difference step {step} produced non-finite jacobian entries")]
    BadStep { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    X,
    Y,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::X => "x",
            Side::Y => "y",
        }
    }
}

/// One scalar margin equation: find the potential `w` of `side`/`index`
/// such that the row's matched mass (plus the unmatched term outside the
/// balanced variant) meets the population target. Partner entries at
/// `+inf` contribute exactly zero mass.
struct MarginProblem<'a> {
    market: &'a Market,
    side: Side,
    index: usize,
    others: &'a [f64],
    target: f64,
    include_unmatched: bool,
}

enum RowKind {
    AllTu,
    AllNtu,
    Generic,
}

impl<'a> MarginProblem<'a> {
    fn new(market: &'a Market, side: Side, index: usize, others: &'a [f64]) -> Self {
        let target = match side {
            Side::X => market.n()[index],
            Side::Y => market.m()[index],
        };
        MarginProblem {
            market,
            side,
            index,
            others,
            target,
            include_unmatched: !market.balanced(),
        }
    }

    fn spec(&self, partner: usize) -> &TransferSpec {
        match self.side {
            Side::X => self.market.transfer(self.index, partner),
            Side::Y => self.market.transfer(partner, self.index),
        }
    }

    fn label(&self) -> String {
        match self.side {
            Side::X => self.market.x_types()[self.index].clone(),
            Side::Y => self.market.y_types()[self.index].clone(),
        }
    }

    fn classify(&self) -> RowKind {
        let mut all_tu = true;
        let mut all_ntu = true;
        for k in 0..self.others.len() {
            match self.spec(k) {
                TransferSpec::Tu { .. } => all_ntu = false,
                TransferSpec::Ntu { .. } => all_tu = false,
                _ => return RowKind::Generic,
            }
        }
        if all_tu {
            RowKind::AllTu
        } else if all_ntu {
            RowKind::AllNtu
        } else {
            RowKind::Generic
        }
    }

    fn pair_mass(&self, spec: &TransferSpec, w: f64, other: f64) -> Result<f64, TransferError> {
        let temp = self.market.temperature();
        match self.side {
            Side::X => spec.matching_mass(temp, w, other),
            Side::Y => spec.matching_mass(temp, other, w),
        }
    }

    /// Row mass at potential `w` minus the target; strictly decreasing in `w`.
    fn gap(&self, w: f64) -> Result<f64, TransferError> {
        let temp = self.market.temperature();
        let mut total = if self.include_unmatched {
            unmatched_mass(temp, w)
        } else {
            0.0
        };
        for (k, &other) in self.others.iter().enumerate() {
            if other == f64::INFINITY {
                continue;
            }
            total += self.pair_mass(self.spec(k), w, other)?;
        }
        Ok(total - self.target)
    }

    fn gap_derivative(&self, w: f64) -> Option<f64> {
        let temp = self.market.temperature();
        let mut slope = if self.include_unmatched {
            -unmatched_mass(temp, w) / temp
        } else {
            0.0
        };
        for (k, &other) in self.others.iter().enumerate() {
            if other == f64::INFINITY {
                continue;
            }
            let grad = match self.side {
                Side::X => self.spec(k).matching_mass_gradient(temp, w, other),
                Side::Y => self.spec(k).matching_mass_gradient(temp, other, w),
            };
            match grad {
                Ok(Some((du, dv))) => {
                    slope += match self.side {
                        Side::X => du,
                        Side::Y => dv,
                    }
                }
                _ => return None,
            }
        }
        Some(slope)
    }

    /// All-TU rows: with `s = exp(-w / 2T)` the margin equation becomes
    /// `s^2 [unmatched] + K s = target`, solved in log space.
    fn solve_tu(&self) -> Option<f64> {
        let temp = self.market.temperature();
        let double_t = 2.0 * temp;
        let mut log_terms = Vec::with_capacity(self.others.len());
        for (k, &other) in self.others.iter().enumerate() {
            if other == f64::INFINITY {
                continue;
            }
            let TransferSpec::Tu { phi } = self.spec(k) else {
                unreachable!()
            };
            log_terms.push((phi - other) / double_t);
        }
        let log_k = log_sum_exp(&log_terms);
        let log_s = if !self.include_unmatched {
            if log_k == f64::NEG_INFINITY {
                return None;
            }
            self.target.ln() - log_k
        } else if log_k == f64::NEG_INFINITY {
            0.5 * self.target.ln()
        } else if log_k <= 150.0 {
            // s = 2n / (K + sqrt(K^2 + 4n)): positive terms only, no
            // cancellation.
            let k = log_k.exp();
            (2.0 * self.target / (k + (k * k + 4.0 * self.target).sqrt())).ln()
        } else {
            // Huge kernel: factor K out of the discriminant.
            let tail = (1.0 + (1.0 + 4.0 * self.target * (-2.0 * log_k).exp()).sqrt()).ln();
            (2.0 * self.target).ln() - log_k - tail
        };
        Some(-double_t * log_s)
    }

    /// All-NTU rows with an unmatched term: with `w = exp(-pot / T)` the
    /// equation is `w + sum_k min(a_k w, c_k) = target`, piecewise linear
    /// and increasing in `w`. Walk the sorted breakpoints and solve the
    /// active segment exactly, all in log space.
    fn solve_ntu(&self) -> Option<f64> {
        debug_assert!(self.include_unmatched);
        let temp = self.market.temperature();
        // (breakpoint in log w, log slope a, log plateau c)
        let mut items: Vec<(f64, f64, f64)> = Vec::with_capacity(self.others.len());
        for (k, &other) in self.others.iter().enumerate() {
            let TransferSpec::Ntu { alpha, gamma } = self.spec(k) else {
                unreachable!()
            };
            let (log_a, log_c) = match self.side {
                Side::X => (alpha / temp, (gamma - other) / temp),
                Side::Y => (gamma / temp, (alpha - other) / temp),
            };
            items.push((log_c - log_a, log_a, log_c));
        }
        items.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite breakpoints"));
        let count = items.len();
        // Prefix log-sums of saturated plateaus, suffix log-sums of the
        // active slopes combined with the unmatched unit slope.
        let mut log_plateau = vec![f64::NEG_INFINITY; count + 1];
        for i in 0..count {
            log_plateau[i + 1] = log_add_exp(log_plateau[i], items[i].2);
        }
        let mut log_slope = vec![0.0_f64; count + 1];
        for i in (0..count).rev() {
            log_slope[i] = log_add_exp(log_slope[i + 1], items[i].1);
        }
        for i in 0..=count {
            let plateau_total = if log_plateau[i] == f64::NEG_INFINITY {
                0.0
            } else if log_plateau[i] > 700.0 {
                continue;
            } else {
                log_plateau[i].exp()
            };
            let remaining = self.target - plateau_total;
            if remaining <= 0.0 {
                continue;
            }
            let log_w = remaining.ln() - log_slope[i];
            let above_lo = i == 0 || log_w >= items[i - 1].0 - 1e-9;
            let below_hi = i == count || log_w <= items[i].0 + 1e-9;
            if above_lo && below_hi {
                return Some(-temp * log_w);
            }
        }
        None
    }

    fn solve_generic(&self, tol: f64, hint: Option<f64>) -> Result<f64, SolveError> {
        let temp = self.market.temperature();
        if self.include_unmatched && self.others.iter().all(|o| *o == f64::INFINITY) {
            // Only the unmatched term is live: exact inversion.
            return Ok(-temp * self.target.ln());
        }
        let start = hint
            .filter(|h| h.is_finite())
            .unwrap_or(if self.include_unmatched {
                -temp * self.target.ln()
            } else {
                0.0
            });
        let span = 1e6 * temp.max(1.0);
        let gap = |w: f64| self.gap(w);
        let bracket = match rootfind::expand_bracket(gap, start, start - span, start + span)? {
            Bracket::Found { lo, hi, f_lo, f_hi } => (lo, hi, f_lo, f_hi),
            Bracket::NotFound => {
                return Err(SolveError::NoRoot {
                    side: self.side.name(),
                    label: self.label(),
                })
            }
        };
        Ok(rootfind::solve_decreasing(
            gap,
            Some(|w: f64| self.gap_derivative(w)),
            bracket,
            tol,
        )?)
    }

    fn solve(&self, tol: f64, hint: Option<f64>) -> Result<f64, SolveError> {
        let fast = match self.classify() {
            RowKind::AllTu => self.solve_tu(),
            RowKind::AllNtu if self.include_unmatched => self.solve_ntu(),
            _ => None,
        };
        match fast {
            Some(value) => Ok(value),
            None => self.solve_generic(tol, hint),
        }
    }
}

/// Solves the x-margin equation for type `x` given the partner potentials
/// `v` (entries may be `+inf`, contributing no matched mass).
pub fn update_u(market: &Market, v: &[f64], x: usize) -> Result<f64, SolveError> {
    if x >= market.num_x() {
        return Err(SolveError::InvalidConfig(format!(
            "x index {x} out of range for {} types",
            market.num_x()
        )));
    }
    if v.len() != market.num_y() {
        return Err(MarketError::PotentialsShape {
            u_len: market.num_x(),
            v_len: v.len(),
            nx: market.num_x(),
            ny: market.num_y(),
        }
        .into());
    }
    MarginProblem::new(market, Side::X, x, v).solve(SolverConfig::default().scalar_tol, None)
}

/// Mirror of [`update_u`] for the y side.
pub fn update_v(market: &Market, u: &[f64], y: usize) -> Result<f64, SolveError> {
    if y >= market.num_y() {
        return Err(SolveError::InvalidConfig(format!(
            "y index {y} out of range for {} types",
            market.num_y()
        )));
    }
    if u.len() != market.num_x() {
        return Err(MarketError::PotentialsShape {
            u_len: u.len(),
            v_len: market.num_y(),
            nx: market.num_x(),
            ny: market.num_y(),
        }
        .into());
    }
    MarginProblem::new(market, Side::Y, y, u).solve(SolverConfig::default().scalar_tol, None)
}

fn half_sweep(
    market: &Market,
    side: Side,
    others: &[f64],
    out: &mut [f64],
    scalar_tol: f64,
    pin: Option<usize>,
) -> Result<(), SolveError> {
    let solve_one = |index: usize, hint: f64| -> Result<f64, SolveError> {
        if pin == Some(index) {
            return Ok(0.0);
        }
        let hint = hint.is_finite().then_some(hint);
        MarginProblem::new(market, side, index, others).solve(scalar_tol, hint)
    };
    if out.len() >= PARALLEL_ROWS {
        let results: Vec<Result<f64, SolveError>> = out
            .par_iter()
            .enumerate()
            .map(|(index, &hint)| solve_one(index, hint))
            .collect();
        for (slot, result) in out.iter_mut().zip(results) {
            *slot = result?;
        }
    } else {
        for index in 0..out.len() {
            out[index] = solve_one(index, out[index])?;
        }
    }
    Ok(())
}

/// Solves the market from the cold start.
pub fn solve(market: &Market, config: &SolverConfig) -> Result<Solution, SolveError> {
    solve_inner(market, None, config)
}

/// Solves the market starting from the supplied potentials.
pub fn solve_warm(
    market: &Market,
    start: &Potentials,
    config: &SolverConfig,
) -> Result<Solution, SolveError> {
    market.check_potentials(start)?;
    solve_inner(market, Some(start), config)
}

fn solve_inner(
    market: &Market,
    warm: Option<&Potentials>,
    config: &SolverConfig,
) -> Result<Solution, SolveError> {
    config.validate()?;
    let started = Instant::now();
    let (nx, ny) = (market.num_x(), market.num_y());
    let cold = warm.is_none();

    let pin = if market.balanced() {
        let anchor = config.gauge_anchor.unwrap_or(0);
        if anchor >= nx {
            return Err(SolveError::InvalidConfig(format!(
                "gauge anchor {anchor} out of range for {nx} x types"
            )));
        }
        Some(anchor)
    } else {
        None
    };

    let (mut u, mut v) = match warm {
        Some(p) => (p.u.clone(), p.v.clone()),
        // Balanced sweeps need finite partners from the start; the standard
        // variant begins at the sentinel so the first sweep inverts the
        // unmatched margins exactly.
        None if market.balanced() => (vec![0.0; nx], vec![0.0; ny]),
        None => (vec![f64::INFINITY; nx], vec![f64::INFINITY; ny]),
    };
    if let Some(anchor) = pin {
        u[anchor] = 0.0;
    }

    // The trailing side closes each iteration; its sup-change is the
    // stopping statistic and, for cold standard solves, the monotone
    // sequence from the convergence argument.
    let trailing_is_v = !config.y_first;
    let track_monotone = cold && !market.balanced();

    let mut history = Vec::new();
    let mut violations = 0usize;
    let mut prev_trailing: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut iterations = 0usize;

    for sweep_index in 1..=config.max_iter {
        iterations = sweep_index;
        if config.gauss_seidel {
            for k in 0..nx.max(ny) {
                if k < nx && pin != Some(k) {
                    let hint = u[k].is_finite().then_some(u[k]);
                    u[k] = MarginProblem::new(market, Side::X, k, &v)
                        .solve(config.scalar_tol, hint)?;
                }
                if k < ny {
                    let hint = v[k].is_finite().then_some(v[k]);
                    v[k] = MarginProblem::new(market, Side::Y, k, &u)
                        .solve(config.scalar_tol, hint)?;
                }
            }
        } else if config.y_first {
            half_sweep(market, Side::Y, &u, &mut v, config.scalar_tol, None)?;
            half_sweep(market, Side::X, &v, &mut u, config.scalar_tol, pin)?;
        } else {
            half_sweep(market, Side::X, &v, &mut u, config.scalar_tol, pin)?;
            half_sweep(market, Side::Y, &u, &mut v, config.scalar_tol, None)?;
        }

        let trailing: &[f64] = if trailing_is_v { &v } else { &u };
        if let Some(prev) = &prev_trailing {
            let mut sup = 0.0_f64;
            for (new, old) in trailing.iter().zip(prev.iter()) {
                sup = sup.max((new - old).abs());
                if track_monotone && *new > *old + 10.0 * config.scalar_tol {
                    violations += 1;
                }
            }
            history.push(sup);
            if config.log_every > 0 && sweep_index % config.log_every == 0 {
                log::debug!("sweep {sweep_index}: sup-change {sup:.3e}");
            }
            if sup < config.tol {
                if !config.certify_residual {
                    converged = true;
                } else {
                    let pot = Potentials {
                        u: u.clone(),
                        v: v.clone(),
                    };
                    let (x_res, y_res) = residual(market, &pot)?;
                    // One ulp of potential moves scaled margins by ~eps/T,
                    // so at low temperatures the residual certificate can
                    // only be demanded down to that attainable floor.
                    let scale = pot
                        .u
                        .iter()
                        .chain(pot.v.iter())
                        .fold(0.0_f64, |a, b| a.max(b.abs()));
                    let floor = 32.0 * f64::EPSILON * (1.0 + scale) / market.temperature();
                    if scaled_residual_norm(market, &x_res, &y_res) <= config.tol.max(floor) {
                        converged = true;
                    }
                }
            }
        }
        prev_trailing = Some(trailing.to_vec());
        if converged {
            break;
        }
    }

    let potentials = Potentials { u, v };
    let (x_res, y_res) = residual(market, &potentials)?;
    let final_residual = scaled_residual_norm(market, &x_res, &y_res);
    let matching = matching_from_potentials(market, &potentials)?;
    let report = SolveReport {
        iterations,
        sup_change_history: history,
        final_residual,
        converged,
        monotone_violations: violations,
        elapsed: started.elapsed(),
    };
    if !converged {
        return Err(SolveError::NotConverged(Box::new(PartialSolve {
            report,
            potentials,
            matching,
        })));
    }
    Ok(Solution {
        potentials,
        matching,
        report,
    })
}

/// Structural certificate from the finite-difference Jacobian of the
/// margin map at `pot`.
///
/// The margin map is coordinate-wise decreasing, so the negated Jacobian is
/// the candidate for a dominant-diagonal P-matrix. Dominance is measured
/// per column: each potential's own margin response must outweigh the sum
/// of its cross responses. Mass conservation makes that slack exactly the
/// unmatched-mass derivative, so strictly positive margins certify local
/// injectivity (hence uniqueness) of the system.
#[derive(Debug, Clone, Serialize)]
pub struct JacobianDiagnostic {
    pub step: f64,
    /// Per-column dominance margin: `|J_jj| - sum_{i != j} |J_ij|`.
    pub dominance_margins: Vec<f64>,
    pub min_margin: f64,
    /// Diagonal of the negated Jacobian is strictly positive.
    pub diagonal_positive: bool,
    pub dominant_diagonal: bool,
}

/// Assembles the central finite-difference Jacobian of the margin map and
/// reports its diagonal-dominance structure.
pub fn jacobian_diagnostic(
    market: &Market,
    pot: &Potentials,
    step: f64,
) -> Result<JacobianDiagnostic, SolveError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(SolveError::BadStep { step });
    }
    market.check_potentials(pot)?;
    for (_, _, spec) in market.transfers() {
        if !spec.is_smooth() {
            return Err(SolveError::DiagnosticUnsupported {
                family: spec.family_name().to_owned(),
            });
        }
    }
    let (nx, ny) = (market.num_x(), market.num_y());
    let dim = nx + ny;
    let margin_map = |z: &[f64]| -> Result<Vec<f64>, SolveError> {
        let p = Potentials {
            u: z[..nx].to_vec(),
            v: z[nx..].to_vec(),
        };
        let (mut x_res, y_res) = residual(market, &p)?;
        x_res.extend(y_res);
        Ok(x_res)
    };
    let base: Vec<f64> = pot.u.iter().chain(pot.v.iter()).cloned().collect();
    // jacobian[row][col]
    let mut jacobian = vec![vec![0.0_f64; dim]; dim];
    for col in 0..dim {
        let mut plus = base.clone();
        plus[col] += step;
        let mut minus = base.clone();
        minus[col] -= step;
        let f_plus = margin_map(&plus)?;
        let f_minus = margin_map(&minus)?;
        for row in 0..dim {
            let entry = (f_plus[row] - f_minus[row]) / (2.0 * step);
            if !entry.is_finite() {
                return Err(SolveError::BadStep { step });
            }
            jacobian[row][col] = entry;
        }
    }
    let mut margins = Vec::with_capacity(dim);
    let mut diagonal_positive = true;
    for col in 0..dim {
        let diag = jacobian[col][col];
        if -diag <= 0.0 {
            diagonal_positive = false;
        }
        let off: f64 = (0..dim)
            .filter(|&row| row != col)
            .map(|row| jacobian[row][col].abs())
            .sum();
        margins.push(diag.abs() - off);
    }
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let dominant_diagonal = diagonal_positive && margins.iter().all(|m| *m > 0.0);
    Ok(JacobianDiagnostic {
        step,
        dominance_margins: margins,
        min_margin,
        diagonal_positive,
        dominant_diagonal,
    })
}
