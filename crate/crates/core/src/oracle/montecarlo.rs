//! Monte-Carlo simulation of the heterogeneous discrete-choice model.
//!
//! Each type-`x` agent draws an i.i.d. standard Gumbel taste shock per
//! alternative and picks the best of `systematic utility + T * shock`
//! against the outside option. At equilibrium the systematic utilities are
//! `U_xy = T log(mu_xy / mu_x0)`, so empirical choice frequencies estimate
//! the type-level matching pattern.

use super::OracleError;
use crate::ipfp::{self, SolverConfig};
use crate::system::Market;
use crate::transfer::TransferSpec;

/// Counter-based Gumbel source: every draw is a pure function of
/// `(seed, agent, alternative)`, so results do not depend on iteration
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationDraw {
    seed: u64,
}

impl SimulationDraw {
    pub fn new(seed: u64) -> Self {
        SimulationDraw { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Taste shock of man `agent` of type `x_type` for alternative
    /// `alternative` (partner type index, or `num_y` for staying single).
    pub fn epsilon(&self, x_type: usize, agent: usize, alternative: usize) -> f64 {
        gumbel(
            self.seed,
            0x45,
            x_type as u64,
            agent as u64,
            alternative as u64,
        )
    }

    /// Taste shock on the women's side, kept for symmetry with the model.
    pub fn eta(&self, y_type: usize, agent: usize, alternative: usize) -> f64 {
        gumbel(
            self.seed,
            0x9a,
            y_type as u64,
            agent as u64,
            alternative as u64,
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn gumbel(seed: u64, tag: u64, a: u64, b: u64, c: u64) -> f64 {
    let mut h = splitmix64(seed ^ tag.wrapping_mul(0xd1b54a32d192ed03));
    h = splitmix64(h ^ a.wrapping_mul(0x8cb92ba72f3d8dd7));
    h = splitmix64(h ^ b.wrapping_mul(0xe9846af9b1a615d));
    h = splitmix64(h ^ c.wrapping_mul(0x2545f4914f6cdd1d));
    // Uniform on the open interval (0, 1), then inverse CDF.
    let uniform = ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -(-uniform.ln()).ln()
}

/// Empirical men's-side choice frequencies, one row per x type.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFrequencies {
    num_y: usize,
    pub agents_per_type: usize,
    /// Fraction of type-`x` agents choosing partner type `y` (row-major).
    pub match_fraction: Vec<f64>,
    /// Fraction staying unmatched.
    pub unmatched_fraction: Vec<f64>,
}

impl SimulatedFrequencies {
    pub fn fraction(&self, x: usize, y: usize) -> f64 {
        self.match_fraction[x * self.num_y + y]
    }
}

/// Simulates `agents_per_type` agents per x type on a TU market and
/// tabulates their utility-maximizing choices.
pub fn simulate_heterogeneous_market(
    market: &Market,
    agents_per_type: usize,
    draw: &SimulationDraw,
) -> Result<SimulatedFrequencies, OracleError> {
    for (_, _, spec) in market.transfers() {
        if !matches!(spec, TransferSpec::Tu { .. }) {
            return Err(OracleError::RequiresTu {
                operation: "heterogeneity simulation",
                family: spec.family_name().to_owned(),
            });
        }
    }
    let (nx, ny) = (market.num_x(), market.num_y());
    let temperature = market.temperature();

    let mut frequencies = SimulatedFrequencies {
        num_y: ny,
        agents_per_type,
        match_fraction: vec![0.0; nx * ny],
        unmatched_fraction: vec![0.0; nx],
    };
    if agents_per_type == 0 {
        return Ok(frequencies);
    }

    let solution = ipfp::solve(market, &SolverConfig::default())?;
    // Systematic utilities: U_xy = T log(mu_xy / mu_x0).
    let systematic: Vec<f64> = (0..nx * ny)
        .map(|k| {
            let (x, y) = (k / ny, k % ny);
            temperature * (solution.matching.pair_mass(x, y).ln() - solution.matching.mu_x0[x].ln())
        })
        .collect();

    let scale = 1.0 / agents_per_type as f64;
    for x in 0..nx {
        for agent in 0..agents_per_type {
            let mut best_value = temperature * draw.epsilon(x, agent, ny);
            let mut best_choice = ny; // outside option
            for y in 0..ny {
                let value = systematic[x * ny + y] + temperature * draw.epsilon(x, agent, y);
                if value > best_value {
                    best_value = value;
                    best_choice = y;
                }
            }
            if best_choice == ny {
                frequencies.unmatched_fraction[x] += scale;
            } else {
                frequencies.match_fraction[x * ny + best_choice] += scale;
            }
        }
    }
    Ok(frequencies)
}
