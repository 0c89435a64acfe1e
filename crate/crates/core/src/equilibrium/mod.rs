//! Equilibrium assignment between two finite populations.
//!
//! An outcome `(mu, u, v)` is an equilibrium when masses and payoffs are
//! nonnegative, each agent's total mass is at most one, no pair could both
//! gain by matching (`psi(u_i, v_j) >= 0` everywhere), and matched pairs sit
//! exactly on their feasibility frontier (`mu_ij > 0` implies
//! `psi(u_i, v_j) = 0`).
//!
//! Sharp outcomes are computed by tempering: the aggregate system with unit
//! masses is solved along a geometrically decreasing temperature schedule,
//! warm-starting each solve from the previous potentials. As the
//! temperature drops the soft matching concentrates; the final masses are
//! rounded to a 0/1 matching and the outcome conditions are re-verified.

mod assignment;

use serde::Serialize;

use crate::ipfp::{self, SolveError, SolveReport, SolverConfig};
use crate::numeric::EXP_CLAMP;
use crate::system::{Market, MarketError, Matching, Potentials, TransferTable};
use crate::transfer::{TransferError, TransferSpec};

/// Masses above this are treated as "matched" when checking the frontier
/// condition and when rounding to an integral matching.
pub const DEFAULT_MASS_THRESHOLD: f64 = 1e-3;

/// Potentials at or beyond this magnitude have saturated the mass
/// arithmetic; they are flagged rather than trusted.
const PRICED_OUT_BOUND: f64 = 0.9 * EXP_CLAMP;

#[derive(Debug, thiserror::Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("invalid cooling schedule: {0}")]
    Schedule(String),
    #[error("annealed outcome failed verification: {}", .record.summary())]
    AnnealingFailed { record: Box<VerificationRecord> },
    #[error("integral rounding failed verification: {}", .record.summary())]
    RoundingFailed {
        record: Box<VerificationRecord>,
        fractional: Box<EquilibriumOutcome>,
    },
    #[error("integral extraction supports at most {limit} agents on the smaller side, got {size}")]
    ExtractionTooLarge { size: usize, limit: usize },
}

/// Two finite populations and a transfer technology per pair.
#[derive(Debug, Clone)]
pub struct IndividualMarket {
    men: Vec<String>,
    women: Vec<String>,
    transfers: Vec<TransferSpec>, // row-major |I| x |J|
}

impl IndividualMarket {
    pub fn new(
        men: Vec<String>,
        women: Vec<String>,
        transfers: TransferTable,
    ) -> Result<Self, MarketError> {
        // The unit-mass market performs all structural validation.
        let market = Market::new(
            men.clone(),
            women.clone(),
            vec![1.0; men.len()],
            vec![1.0; women.len()],
            transfers,
            1.0,
            false,
        )?;
        let flat = market
            .transfers()
            .map(|(_, _, spec)| spec.clone())
            .collect();
        Ok(IndividualMarket {
            men,
            women,
            transfers: flat,
        })
    }

    pub fn num_men(&self) -> usize {
        self.men.len()
    }

    pub fn num_women(&self) -> usize {
        self.women.len()
    }

    pub fn men(&self) -> &[String] {
        &self.men
    }

    pub fn women(&self) -> &[String] {
        &self.women
    }

    pub fn transfer(&self, i: usize, j: usize) -> &TransferSpec {
        &self.transfers[i * self.women.len() + j]
    }

    /// The aggregate system induced by this population at the given
    /// temperature: unit masses, one type per agent.
    pub fn to_market(&self, temperature: f64) -> Result<Market, MarketError> {
        let rows: Vec<Vec<TransferSpec>> = (0..self.men.len())
            .map(|i| {
                (0..self.women.len())
                    .map(|j| self.transfer(i, j).clone())
                    .collect()
            })
            .collect();
        Market::new(
            self.men.clone(),
            self.women.clone(),
            vec![1.0; self.men.len()],
            vec![1.0; self.women.len()],
            TransferTable::PerPair(rows),
            temperature,
            false,
        )
    }
}

/// Candidate equilibrium outcome over individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOutcome {
    /// Pair masses in `[0, 1]`, row-major `|I| x |J|`.
    pub mu: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub integral: bool,
}

impl EquilibriumOutcome {
    pub fn pair_mass(&self, i: usize, j: usize) -> f64 {
        self.mu[i * self.v.len() + j]
    }

    /// Pairs whose mass exceeds the threshold.
    pub fn matched_pairs(&self, threshold: f64) -> Vec<(usize, usize)> {
        let nj = self.v.len();
        self.mu
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > threshold)
            .map(|(k, _)| (k / nj, k % nj))
            .collect()
    }
}

/// Geometric cooling sequence `t_initial * ratio^k`, `k = 0 .. steps-1`.
#[derive(Debug, Clone, Serialize)]
pub struct CoolingSchedule {
    pub t_initial: f64,
    pub ratio: f64,
    pub steps: usize,
    /// Start each solve from the previous temperature's potentials.
    pub warm_start: bool,
}

impl Default for CoolingSchedule {
    fn default() -> Self {
        CoolingSchedule {
            t_initial: 1.0,
            ratio: 0.5,
            steps: 30,
            warm_start: true,
        }
    }
}

impl CoolingSchedule {
    pub fn validate(&self) -> Result<(), EquilibriumError> {
        if !(self.t_initial > 0.0 && self.t_initial.is_finite()) {
            return Err(EquilibriumError::Schedule(format!(
                "t_initial must be positive, got {}",
                self.t_initial
            )));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(EquilibriumError::Schedule(format!(
                "ratio must lie in (0, 1), got {}",
                self.ratio
            )));
        }
        if self.steps == 0 {
            return Err(EquilibriumError::Schedule(
                "steps must be at least 1".into(),
            ));
        }
        let final_temp = self.final_temperature();
        if !final_temp.is_normal() || final_temp <= 0.0 {
            return Err(EquilibriumError::Schedule(format!(
                "final temperature {final_temp} is not representable"
            )));
        }
        Ok(())
    }

    pub fn temperatures(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps).map(move |k| self.t_initial * self.ratio.powi(k as i32))
    }

    pub fn final_temperature(&self) -> f64 {
        self.t_initial * self.ratio.powi(self.steps as i32 - 1)
    }
}

/// Potentials and matching of one tempered solve.
#[derive(Debug, Clone)]
pub struct TemperatureSolve {
    pub potentials: Potentials,
    pub matching: Matching,
    pub report: SolveReport,
}

/// Solves the unit-mass system at a fixed temperature.
pub fn solve_at_temperature(
    imarket: &IndividualMarket,
    temperature: f64,
    config: &SolverConfig,
) -> Result<TemperatureSolve, EquilibriumError> {
    let market = imarket.to_market(temperature)?;
    let solution = ipfp::solve(&market, config)?;
    Ok(TemperatureSolve {
        potentials: solution.potentials,
        matching: solution.matching,
        report: solution.report,
    })
}

/// As [`solve_at_temperature`], warm-started from earlier potentials.
pub fn solve_at_temperature_warm(
    imarket: &IndividualMarket,
    temperature: f64,
    start: &Potentials,
    config: &SolverConfig,
) -> Result<TemperatureSolve, EquilibriumError> {
    let market = imarket.to_market(temperature)?;
    let solution = ipfp::solve_warm(&market, start, config)?;
    Ok(TemperatureSolve {
        potentials: solution.potentials,
        matching: solution.matching,
        report: solution.report,
    })
}

/// Telemetry for one temperature of the cooling loop.
#[derive(Debug, Clone, Serialize)]
pub struct AnnealStep {
    pub temperature: f64,
    pub iterations: usize,
    /// `max_pairs max(0, -psi(u_i, v_j))`: how far the worst pair is from
    /// the no-blocking condition.
    pub max_stability_violation: f64,
    /// Agents whose potentials saturated the exponential clamp.
    pub priced_out: Vec<String>,
}

/// Full result of the cooling loop.
#[derive(Debug, Clone)]
pub struct AnnealResult {
    pub outcome: EquilibriumOutcome,
    pub trace: Vec<AnnealStep>,
    pub verification: VerificationRecord,
}

/// Cools the system along the schedule and returns the verified outcome.
pub fn anneal(
    imarket: &IndividualMarket,
    schedule: &CoolingSchedule,
    config: &SolverConfig,
) -> Result<EquilibriumOutcome, EquilibriumError> {
    anneal_with_trace(imarket, schedule, config).map(|r| r.outcome)
}

/// As [`anneal`], also returning the per-temperature trace and the
/// verification record (whose slack is reused by integral extraction).
pub fn anneal_with_trace(
    imarket: &IndividualMarket,
    schedule: &CoolingSchedule,
    config: &SolverConfig,
) -> Result<AnnealResult, EquilibriumError> {
    schedule.validate()?;
    let mut potentials: Option<Potentials> = None;
    let mut trace = Vec::with_capacity(schedule.steps);
    let mut last: Option<TemperatureSolve> = None;
    for (step, temperature) in schedule.temperatures().enumerate() {
        // Intermediate temperatures only warm-start the next solve, so they
        // stop on stabilized iterates at a temperature-proportional
        // tolerance; near-tied markets crawl there and full certification
        // is both unattainable and unnecessary. The final temperature runs
        // under the caller's full criterion.
        let step_config = if step + 1 < schedule.steps {
            SolverConfig {
                tol: config.tol.max(1e-3 * temperature),
                certify_residual: false,
                ..config.clone()
            }
        } else {
            config.clone()
        };
        let solve = match (&potentials, schedule.warm_start) {
            (Some(start), true) => {
                solve_at_temperature_warm(imarket, temperature, start, &step_config)?
            }
            _ => solve_at_temperature(imarket, temperature, &step_config)?,
        };
        let mut worst = 0.0_f64;
        for i in 0..imarket.num_men() {
            for j in 0..imarket.num_women() {
                let psi = imarket
                    .transfer(i, j)
                    .psi(solve.potentials.u[i], solve.potentials.v[j])?;
                if -psi > worst {
                    worst = -psi;
                }
            }
        }
        let mut priced_out = Vec::new();
        for (labels, values) in [
            (imarket.men(), &solve.potentials.u),
            (imarket.women(), &solve.potentials.v),
        ] {
            for (label, value) in labels.iter().zip(values.iter()) {
                if value.abs() >= PRICED_OUT_BOUND {
                    priced_out.push(label.clone());
                }
            }
        }
        trace.push(AnnealStep {
            temperature,
            iterations: solve.report.iterations,
            max_stability_violation: worst,
            priced_out,
        });
        potentials = Some(solve.potentials.clone());
        last = Some(solve);
    }
    let last = last.expect("schedule has at least one step");

    // Stability slack: verification at a finite final temperature can only
    // be honest up to the temperature scale of the transfer values. A pair
    // held at mass `threshold < mu < 1` sits off its frontier by up to
    // `gradient_bound * T * ln(1/threshold)`, which dominates the scale.
    let mut psi_scale = 1.0_f64;
    let off_frontier = DEFAULT_MASS_THRESHOLD.recip().ln();
    for i in 0..imarket.num_men() {
        for j in 0..imarket.num_women() {
            let spec = imarket.transfer(i, j);
            let psi = spec.psi(last.potentials.u[i], last.potentials.v[j])?;
            psi_scale = psi_scale
                .max(psi.abs())
                .max(spec.gradient_bound() * off_frontier);
        }
    }
    let slack = (10.0 * config.tol).max(psi_scale * schedule.final_temperature());

    let outcome = EquilibriumOutcome {
        mu: last.matching.mu.clone(),
        u: last.potentials.u.clone(),
        v: last.potentials.v.clone(),
        integral: false,
    };
    let verification = verify_outcome(imarket, &outcome, slack);
    if !verification.passed {
        return Err(EquilibriumError::AnnealingFailed {
            record: Box::new(verification),
        });
    }
    Ok(AnnealResult {
        outcome,
        trace,
        verification,
    })
}

/// Rounds a near-integral outcome to a 0/1 matching and re-verifies it.
///
/// Edges with mass above the threshold compete in a max-cardinality,
/// max-weight matching on `log` masses; payoffs are kept unchanged.
pub fn extract_integral(
    imarket: &IndividualMarket,
    outcome: &EquilibriumOutcome,
    slack: f64,
) -> Result<EquilibriumOutcome, EquilibriumError> {
    extract_integral_with_threshold(imarket, outcome, slack, DEFAULT_MASS_THRESHOLD)
}

pub fn extract_integral_with_threshold(
    imarket: &IndividualMarket,
    outcome: &EquilibriumOutcome,
    slack: f64,
    threshold: f64,
) -> Result<EquilibriumOutcome, EquilibriumError> {
    if outcome.integral {
        return Ok(outcome.clone());
    }
    let (ni, nj) = (imarket.num_men(), imarket.num_women());
    let weights: Vec<Vec<f64>> = (0..ni)
        .map(|i| {
            (0..nj)
                .map(|j| {
                    let mass = outcome.pair_mass(i, j);
                    if mass > threshold {
                        mass.ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect()
        })
        .collect();
    let matched = assignment::max_weight_matching(&weights).map_err(|e| {
        EquilibriumError::ExtractionTooLarge {
            size: e.size,
            limit: e.limit,
        }
    })?;

    let mut mu = vec![0.0; ni * nj];
    for (i, m) in matched.iter().enumerate() {
        if let Some(j) = m {
            mu[i * nj + j] = 1.0;
        }
    }
    let integral = EquilibriumOutcome {
        mu,
        u: outcome.u.clone(),
        v: outcome.v.clone(),
        integral: true,
    };
    let record = verify_outcome_with_threshold(imarket, &integral, slack, threshold);
    if !record.passed {
        return Err(EquilibriumError::RoundingFailed {
            record: Box::new(record),
            fractional: Box::new(outcome.clone()),
        });
    }
    Ok(integral)
}

/// One verified outcome condition.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Magnitude of the worst violation (0 when the condition holds
    /// exactly).
    pub worst_violation: f64,
    /// Human-readable location of the worst violation.
    pub worst_location: Option<String>,
}

impl ConditionCheck {
    fn pass(name: &'static str) -> Self {
        ConditionCheck {
            name,
            passed: true,
            worst_violation: 0.0,
            worst_location: None,
        }
    }
}

/// Per-condition verification of an outcome. Never fails; reports.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationRecord {
    pub slack: f64,
    pub threshold: f64,
    pub conditions: Vec<ConditionCheck>,
    pub passed: bool,
}

impl VerificationRecord {
    pub fn summary(&self) -> String {
        let failing: Vec<&str> = self
            .conditions
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        if failing.is_empty() {
            "all conditions hold".to_owned()
        } else {
            format!("failing: {}", failing.join(", "))
        }
    }
}

/// Checks the four outcome conditions to the given slack.
pub fn verify_outcome(
    imarket: &IndividualMarket,
    outcome: &EquilibriumOutcome,
    slack: f64,
) -> VerificationRecord {
    verify_outcome_with_threshold(imarket, outcome, slack, DEFAULT_MASS_THRESHOLD)
}

pub fn verify_outcome_with_threshold(
    imarket: &IndividualMarket,
    outcome: &EquilibriumOutcome,
    slack: f64,
    threshold: f64,
) -> VerificationRecord {
    let (ni, nj) = (imarket.num_men(), imarket.num_women());

    // (i) nonnegative masses and payoffs
    let mut nonneg = ConditionCheck::pass("nonnegativity");
    {
        let mut consider = |value: f64, location: String| {
            let violation = if value.is_finite() {
                -value.min(0.0)
            } else {
                f64::INFINITY
            };
            if violation > nonneg.worst_violation {
                nonneg.worst_violation = violation;
                nonneg.worst_location = Some(location);
            }
        };
        for i in 0..ni {
            for j in 0..nj {
                consider(
                    outcome.pair_mass(i, j),
                    format!("mu[{}, {}]", imarket.men()[i], imarket.women()[j]),
                );
            }
        }
        for (i, &u) in outcome.u.iter().enumerate() {
            consider(u, format!("u[{}]", imarket.men()[i]));
        }
        for (j, &v) in outcome.v.iter().enumerate() {
            consider(v, format!("v[{}]", imarket.women()[j]));
        }
        nonneg.passed = nonneg.worst_violation <= slack;
    }

    // (ii) each agent's total mass at most one
    let mut feasible = ConditionCheck::pass("unit margins");
    {
        let mut consider = |total: f64, location: String| {
            let violation = if total.is_finite() {
                (total - 1.0).max(0.0)
            } else {
                f64::INFINITY
            };
            if violation > feasible.worst_violation {
                feasible.worst_violation = violation;
                feasible.worst_location = Some(location);
            }
        };
        for i in 0..ni {
            let total: f64 = (0..nj).map(|j| outcome.pair_mass(i, j)).sum();
            consider(total, format!("row[{}]", imarket.men()[i]));
        }
        for j in 0..nj {
            let total: f64 = (0..ni).map(|i| outcome.pair_mass(i, j)).sum();
            consider(total, format!("column[{}]", imarket.women()[j]));
        }
        feasible.passed = feasible.worst_violation <= slack;
    }

    // (iii) no blocking pair and (iv) matched pairs on the frontier
    let mut no_blocking = ConditionCheck::pass("no blocking pair");
    let mut frontier = ConditionCheck::pass("matched pairs on frontier");
    for i in 0..ni {
        for j in 0..nj {
            let psi = imarket
                .transfer(i, j)
                .psi(outcome.u[i], outcome.v[j])
                .unwrap_or(f64::NAN);
            let location = || format!("pair[{}, {}]", imarket.men()[i], imarket.women()[j]);
            let blocking = if psi.is_finite() {
                (-psi).max(0.0)
            } else {
                f64::INFINITY
            };
            if blocking > no_blocking.worst_violation {
                no_blocking.worst_violation = blocking;
                no_blocking.worst_location = Some(location());
            }
            if outcome.pair_mass(i, j) > threshold {
                let off = if psi.is_finite() {
                    psi.abs()
                } else {
                    f64::INFINITY
                };
                if off > frontier.worst_violation {
                    frontier.worst_violation = off;
                    frontier.worst_location = Some(location());
                }
            }
        }
    }
    no_blocking.passed = no_blocking.worst_violation <= slack;
    frontier.passed = frontier.worst_violation <= slack;

    let conditions = vec![nonneg, feasible, no_blocking, frontier];
    let passed = conditions.iter().all(|c| c.passed);
    VerificationRecord {
        slack,
        threshold,
        conditions,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tu_pair(phi: f64) -> IndividualMarket {
        IndividualMarket::new(
            vec!["m1".into()],
            vec!["w1".into()],
            TransferTable::Global(TransferSpec::Tu { phi }),
        )
        .unwrap()
    }

    fn short_schedule(steps: usize) -> CoolingSchedule {
        CoolingSchedule {
            steps,
            ..CoolingSchedule::default()
        }
    }

    #[test]
    fn unit_temperature_matches_aggregate_fixed_point() {
        let solve = solve_at_temperature(&tu_pair(0.0), 1.0, &SolverConfig::default()).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((solve.potentials.u[0] - ln2).abs() < 1e-9);
        assert!((solve.potentials.v[0] - ln2).abs() < 1e-9);
        assert!((solve.matching.pair_mass(0, 0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn positive_surplus_pair_saturates_as_temperature_drops() {
        // Cool toward the target temperature: at this saturation the
        // matched mass crowds out the unmatched anchor and a cold start
        // would converge only at an O(mu_x0) rate.
        let imarket = tu_pair(4.0);
        let config = SolverConfig::default();
        let mut solve = solve_at_temperature(&imarket, 1.0, &config).unwrap();
        for temperature in [0.5, 0.25, 0.125] {
            solve = solve_at_temperature_warm(&imarket, temperature, &solve.potentials, &config)
                .unwrap();
        }
        assert!(solve.matching.pair_mass(0, 0) >= 0.99);
        let split = solve.potentials.u[0] + solve.potentials.v[0];
        assert!((split - 4.0).abs() < 1e-2);
    }

    #[test]
    fn negative_surplus_pair_dissolves() {
        let solve = solve_at_temperature(&tu_pair(-4.0), 0.125, &SolverConfig::default()).unwrap();
        assert!(solve.matching.pair_mass(0, 0) <= 0.01);
        assert!(solve.potentials.u[0].abs() < 0.01);
        assert!(solve.potentials.v[0].abs() < 0.01);
    }

    #[test]
    fn anneal_ntu_pair_reaches_reservation_payoffs() {
        let imarket = IndividualMarket::new(
            vec!["m1".into()],
            vec!["w1".into()],
            TransferTable::Global(TransferSpec::Ntu {
                alpha: 1.0,
                gamma: 1.0,
            }),
        )
        .unwrap();
        let result = anneal_with_trace(
            &imarket,
            &CoolingSchedule::default(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((result.outcome.u[0] - 1.0).abs() < 1e-6);
        assert!((result.outcome.v[0] - 1.0).abs() < 1e-6);
        assert!(result.outcome.pair_mass(0, 0) > 0.999);
        assert!(result.verification.passed);
    }

    #[test]
    fn anneal_concentrates_on_strong_diagonal() {
        let rows = vec![
            vec![TransferSpec::Tu { phi: 4.0 }, TransferSpec::Tu { phi: 0.0 }],
            vec![TransferSpec::Tu { phi: 0.0 }, TransferSpec::Tu { phi: 4.0 }],
        ];
        let imarket = IndividualMarket::new(
            vec!["m1".into(), "m2".into()],
            vec!["w1".into(), "w2".into()],
            TransferTable::PerPair(rows),
        )
        .unwrap();
        let result = anneal_with_trace(
            &imarket,
            &CoolingSchedule::default(),
            &SolverConfig::default(),
        )
        .unwrap();
        let integral =
            extract_integral(&imarket, &result.outcome, result.verification.slack).unwrap();
        assert_eq!(integral.pair_mass(0, 0), 1.0);
        assert_eq!(integral.pair_mass(1, 1), 1.0);
        assert_eq!(integral.pair_mass(0, 1), 0.0);
        // Realized surplus approaches the best assignment value of 8.
        let surplus: f64 =
            4.0 * result.outcome.pair_mass(0, 0) + 4.0 * result.outcome.pair_mass(1, 1);
        assert!(surplus >= 8.0 - 1e-3);
    }

    #[test]
    fn annealing_is_deterministic() {
        let imarket = IndividualMarket::new(
            vec!["m1".into(), "m2".into()],
            vec!["w1".into()],
            TransferTable::Global(TransferSpec::Etu {
                tau: 0.7,
                alpha: 0.5,
                gamma: 0.4,
            }),
        )
        .unwrap();
        let schedule = short_schedule(12);
        let a = anneal(&imarket, &schedule, &SolverConfig::default()).unwrap();
        let b = anneal(&imarket, &schedule, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stability_violations_shrink_along_the_schedule() {
        let imarket = IndividualMarket::new(
            vec!["m1".into(), "m2".into(), "m3".into()],
            vec!["w1".into(), "w2".into()],
            TransferTable::Global(TransferSpec::Ltu {
                lambda: 1.0,
                zeta: 1.4,
                alpha: 0.8,
                gamma: 0.3,
            }),
        )
        .unwrap();
        let config = SolverConfig::default();
        let result = anneal_with_trace(&imarket, &short_schedule(16), &config).unwrap();
        for window in result.trace.windows(2) {
            assert!(
                window[1].max_stability_violation
                    <= window[0].max_stability_violation + 10.0 * config.tol
            );
        }
    }

    #[test]
    fn warm_and_cold_schedules_agree_on_smooth_families() {
        let imarket = IndividualMarket::new(
            vec!["m1".into(), "m2".into()],
            vec!["w1".into(), "w2".into()],
            TransferTable::Global(TransferSpec::Tu { phi: 1.0 }),
        )
        .unwrap();
        // A schedule shallow enough that every temperature stays cold-start
        // solvable; warm restarts must land on the same unique solution.
        let warm = anneal(&imarket, &short_schedule(4), &SolverConfig::default()).unwrap();
        let cold_schedule = CoolingSchedule {
            warm_start: false,
            ..short_schedule(4)
        };
        let cold = anneal(&imarket, &cold_schedule, &SolverConfig::default()).unwrap();
        for (a, b) in warm.u.iter().zip(cold.u.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in warm.mu.iter().zip(cold.mu.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn extract_integral_is_idempotent() {
        let imarket = tu_pair(2.0);
        let outcome = EquilibriumOutcome {
            mu: vec![1.0],
            u: vec![1.0],
            v: vec![1.0],
            integral: true,
        };
        let again = extract_integral(&imarket, &outcome, 1e-6).unwrap();
        assert_eq!(again, outcome);
    }

    #[test]
    fn extract_integral_picks_dominant_diagonal() {
        let imarket = IndividualMarket::new(
            vec!["m1".into(), "m2".into()],
            vec!["w1".into(), "w2".into()],
            TransferTable::Global(TransferSpec::Tu { phi: 0.0 }),
        )
        .unwrap();
        let outcome = EquilibriumOutcome {
            mu: vec![0.98, 0.01, 0.01, 0.98],
            u: vec![0.0, 0.0],
            v: vec![0.0, 0.0],
            integral: false,
        };
        let integral = extract_integral(&imarket, &outcome, 1e-2).unwrap();
        assert_eq!(integral.mu, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn extract_integral_breaks_symmetric_ties_lexicographically() {
        let imarket = IndividualMarket::new(
            vec!["m1".into(), "m2".into()],
            vec!["w1".into(), "w2".into()],
            TransferTable::Global(TransferSpec::Tu { phi: 0.0 }),
        )
        .unwrap();
        let outcome = EquilibriumOutcome {
            mu: vec![0.5, 0.5, 0.5, 0.5],
            u: vec![0.0, 0.0],
            v: vec![0.0, 0.0],
            integral: false,
        };
        let integral = extract_integral(&imarket, &outcome, 1e-2).unwrap();
        assert_eq!(integral.mu, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn verify_accepts_unmatched_boundary_outcome() {
        let imarket = tu_pair(0.0);
        let outcome = EquilibriumOutcome {
            mu: vec![0.0],
            u: vec![0.0],
            v: vec![0.0],
            integral: true,
        };
        let record = verify_outcome(&imarket, &outcome, 1e-9);
        assert!(record.passed, "{}", record.summary());
    }

    #[test]
    fn verify_flags_negative_payoffs() {
        let imarket = tu_pair(0.0);
        let outcome = EquilibriumOutcome {
            mu: vec![0.0],
            u: vec![-0.1],
            v: vec![-0.1],
            integral: true,
        };
        let record = verify_outcome(&imarket, &outcome, 1e-9);
        assert!(!record.passed);
        assert!(!record.conditions[0].passed);
        assert!((record.conditions[0].worst_violation - 0.1).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(CoolingSchedule::default().validate().is_ok());
        assert!(CoolingSchedule {
            ratio: 1.0,
            ..CoolingSchedule::default()
        }
        .validate()
        .is_err());
        assert!(CoolingSchedule {
            steps: 0,
            ..CoolingSchedule::default()
        }
        .validate()
        .is_err());
        assert!(CoolingSchedule {
            t_initial: 1.0,
            ratio: 0.1,
            steps: 400,
            warm_start: true
        }
        .validate()
        .is_err());
    }
}
