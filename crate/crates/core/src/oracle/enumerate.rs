//! Exhaustive stability enumeration for desk-scale populations.
//!
//! For every integral matching, searches for supporting payoffs: matched
//! pairs must sit on their feasibility frontier (`psi = 0`, sampled in
//! closed form per family on a payoff grid), unmatched agents keep their
//! outside option of zero, and no pair may block. A matching is reported
//! stable when some grid assignment satisfies all constraints within the
//! grid's resolution.

use super::OracleError;
use crate::equilibrium::{EquilibriumOutcome, IndividualMarket};
use crate::transfer::TransferSpec;

/// Hard cap on the population sizes; the search is exponential by design.
pub const MAX_SIDE: usize = 4;

/// Enumerates every integral matching that admits supporting payoffs on a
/// grid of the given step, returning one outcome per stable matching.
pub fn enumerate_stable_outcomes(
    imarket: &IndividualMarket,
    payoff_grid_step: f64,
) -> Result<Vec<EquilibriumOutcome>, OracleError> {
    let (ni, nj) = (imarket.num_men(), imarket.num_women());
    let size = ni.max(nj);
    if size > MAX_SIDE {
        return Err(OracleError::SizeExceeded {
            size,
            limit: MAX_SIDE,
        });
    }
    if !(payoff_grid_step > 0.0 && payoff_grid_step.is_finite()) {
        return Err(OracleError::BadInput(format!(
            "payoff grid step must be positive, got {payoff_grid_step}"
        )));
    }

    // Payoff box: family parameters plus headroom.
    let mut bound = 1.0_f64;
    let mut lipschitz = 1.0_f64;
    for i in 0..ni {
        for j in 0..nj {
            bound = bound.max(1.0 + payoff_scale(imarket.transfer(i, j)));
            lipschitz = lipschitz.max(imarket.transfer(i, j).gradient_bound());
        }
    }
    // Grid resolution slack for the blocking checks.
    let kappa = lipschitz * payoff_grid_step + 1e-9;

    let mut candidates: Vec<Vec<Vec<(f64, f64)>>> = Vec::with_capacity(ni);
    for i in 0..ni {
        let mut row = Vec::with_capacity(nj);
        for j in 0..nj {
            row.push(frontier_samples(
                imarket.transfer(i, j),
                bound,
                payoff_grid_step,
            )?);
        }
        candidates.push(row);
    }

    let mut outcomes = Vec::new();
    for matching in all_matchings(ni, nj) {
        if let Some((u, v)) = support_payoffs(imarket, &matching, &candidates, kappa)? {
            let mut mu = vec![0.0; ni * nj];
            for (i, m) in matching.iter().enumerate() {
                if let Some(j) = m {
                    mu[i * nj + j] = 1.0;
                }
            }
            outcomes.push(EquilibriumOutcome {
                mu,
                u,
                v,
                integral: true,
            });
        }
    }
    Ok(outcomes)
}

fn payoff_scale(spec: &TransferSpec) -> f64 {
    match spec {
        TransferSpec::Tu { phi } => phi.abs(),
        TransferSpec::Ntu { alpha, gamma }
        | TransferSpec::Ltu { alpha, gamma, .. }
        | TransferSpec::Etu { alpha, gamma, .. } => alpha.abs().max(gamma.abs()),
        TransferSpec::Custom(_) => 4.0,
    }
}

fn grid(hi: f64, step: f64) -> Vec<f64> {
    if hi < 0.0 {
        return Vec::new();
    }
    let mut points = Vec::new();
    let mut t = 0.0;
    while t < hi {
        points.push(t);
        t += step;
    }
    points.push(hi);
    points
}

/// Samples the nonnegative part of the frontier `psi(u, v) = 0`,
/// parameterized from both axes so kinked frontiers are fully covered.
fn frontier_samples(
    spec: &TransferSpec,
    bound: f64,
    step: f64,
) -> Result<Vec<(f64, f64)>, OracleError> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut push = |u: f64, v: f64| {
        if u >= -1e-12 && v >= -1e-12 && u.is_finite() && v.is_finite() {
            points.push((u.max(0.0), v.max(0.0)));
        }
    };
    match spec {
        TransferSpec::Tu { phi } => {
            for u in grid(phi.min(bound), step) {
                push(u, phi - u);
            }
        }
        TransferSpec::Ntu { alpha, gamma } => {
            if *alpha >= 0.0 && *gamma >= 0.0 {
                for u in grid(alpha.min(bound), step) {
                    push(u, *gamma);
                }
                for v in grid(gamma.min(bound), step) {
                    push(*alpha, v);
                }
                push(*alpha, *gamma);
            }
        }
        TransferSpec::Ltu {
            lambda,
            zeta,
            alpha,
            gamma,
        } => {
            let u_max = alpha + zeta * gamma / lambda;
            for u in grid(u_max.min(bound), step) {
                push(u, gamma + lambda * (alpha - u) / zeta);
            }
            let v_max = gamma + lambda * alpha / zeta;
            for v in grid(v_max.min(bound), step) {
                push(alpha + zeta * (gamma - v) / lambda, v);
            }
        }
        TransferSpec::Etu { tau, alpha, gamma } => {
            let u_sup = alpha + tau * std::f64::consts::LN_2;
            for u in grid((u_sup - 1e-9).min(bound), step) {
                let inner = 2.0 - ((u - alpha) / tau).exp();
                if inner > 0.0 {
                    push(u, gamma + tau * inner.ln());
                }
            }
            let v_sup = gamma + tau * std::f64::consts::LN_2;
            for v in grid((v_sup - 1e-9).min(bound), step) {
                let inner = 2.0 - ((v - gamma) / tau).exp();
                if inner > 0.0 {
                    push(alpha + tau * inner.ln(), v);
                }
            }
        }
        TransferSpec::Custom(_) => {
            for u in grid(bound, step) {
                if let Some(v) = bisect_partner(spec, u, bound, true)? {
                    push(u, v);
                }
            }
            for v in grid(bound, step) {
                if let Some(u) = bisect_partner(spec, v, bound, false)? {
                    push(u, v);
                }
            }
        }
    }
    Ok(points)
}

/// Solves `psi(fixed, x) = 0` (or `psi(x, fixed) = 0`) for custom
/// frontiers by bisection over the payoff box.
fn bisect_partner(
    spec: &TransferSpec,
    fixed: f64,
    bound: f64,
    fixed_is_u: bool,
) -> Result<Option<f64>, OracleError> {
    let eval = |x: f64| -> Result<f64, OracleError> {
        Ok(if fixed_is_u {
            spec.psi(fixed, x)?
        } else {
            spec.psi(x, fixed)?
        })
    };
    let (mut lo, mut hi) = (-bound - 10.0, bound + 10.0);
    let (f_lo, f_hi) = (eval(lo)?, eval(hi)?);
    if !(f_lo <= 0.0 && f_hi >= 0.0) {
        return Ok(None);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// All injective partial matchings of men to women.
fn all_matchings(ni: usize, nj: usize) -> Vec<Vec<Option<usize>>> {
    fn go(
        i: usize,
        ni: usize,
        nj: usize,
        used: &mut u32,
        current: &mut Vec<Option<usize>>,
        results: &mut Vec<Vec<Option<usize>>>,
    ) {
        if i == ni {
            results.push(current.clone());
            return;
        }
        current[i] = None;
        go(i + 1, ni, nj, used, current, results);
        for j in 0..nj {
            if *used & (1 << j) == 0 {
                *used |= 1 << j;
                current[i] = Some(j);
                go(i + 1, ni, nj, used, current, results);
                current[i] = None;
                *used &= !(1 << j);
            }
        }
    }
    let mut results = Vec::new();
    let mut current = vec![None; ni];
    let mut used = 0u32;
    go(0, ni, nj, &mut used, &mut current, &mut results);
    results
}

/// Payoff vectors `(u, v)` certifying stability of a matching.
type SupportingPayoffs = Option<(Vec<f64>, Vec<f64>)>;

/// Backtracking search for grid payoffs supporting the matching. Payoffs
/// of unmatched agents are fixed at zero; each matched pair ranges over its
/// frontier samples; blocking constraints are checked as soon as both
/// endpoints are decided.
fn support_payoffs(
    imarket: &IndividualMarket,
    matching: &[Option<usize>],
    candidates: &[Vec<Vec<(f64, f64)>>],
    kappa: f64,
) -> Result<SupportingPayoffs, OracleError> {
    let (ni, nj) = (imarket.num_men(), imarket.num_women());
    let mut man_of: Vec<Option<usize>> = vec![None; nj];
    for (i, m) in matching.iter().enumerate() {
        if let Some(j) = m {
            man_of[*j] = Some(i);
        }
    }

    // Blocking among the all-zero payoffs of unmatched agents does not
    // depend on the search; reject early.
    for i in 0..ni {
        for j in 0..nj {
            if matching[i].is_none()
                && man_of[j].is_none()
                && imarket.transfer(i, j).psi(0.0, 0.0)? < -kappa
            {
                return Ok(None);
            }
        }
    }

    let pairs: Vec<(usize, usize)> = matching
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| (i, j)))
        .collect();
    let mut u = vec![0.0_f64; ni];
    let mut v = vec![0.0_f64; nj];
    let found = assign_pair(
        imarket, &pairs, 0, candidates, kappa, matching, &man_of, &mut u, &mut v,
    )?;
    Ok(found.then_some((u, v)))
}

#[allow(clippy::too_many_arguments)]
fn assign_pair(
    imarket: &IndividualMarket,
    pairs: &[(usize, usize)],
    depth: usize,
    candidates: &[Vec<Vec<(f64, f64)>>],
    kappa: f64,
    matching: &[Option<usize>],
    man_of: &[Option<usize>],
    u: &mut [f64],
    v: &mut [f64],
) -> Result<bool, OracleError> {
    if depth == pairs.len() {
        return Ok(true);
    }
    let (i, j) = pairs[depth];
    'next_candidate: for &(cu, cv) in &candidates[i][j] {
        // Against earlier fixed pairs, in both directions.
        for &(pi, pj) in &pairs[..depth] {
            if imarket.transfer(i, pj).psi(cu, v[pj])? < -kappa
                || imarket.transfer(pi, j).psi(u[pi], cv)? < -kappa
            {
                continue 'next_candidate;
            }
        }
        // Against unmatched agents (payoff zero).
        for (other_j, owner) in man_of.iter().enumerate() {
            if owner.is_none() && imarket.transfer(i, other_j).psi(cu, 0.0)? < -kappa {
                continue 'next_candidate;
            }
        }
        for (other_i, partner) in matching.iter().enumerate() {
            if partner.is_none() && imarket.transfer(other_i, j).psi(0.0, cv)? < -kappa {
                continue 'next_candidate;
            }
        }
        u[i] = cu;
        v[j] = cv;
        if assign_pair(
            imarket,
            pairs,
            depth + 1,
            candidates,
            kappa,
            matching,
            man_of,
            u,
            v,
        )? {
            return Ok(true);
        }
    }
    u[i] = 0.0;
    v[j] = 0.0;
    Ok(false)
}
