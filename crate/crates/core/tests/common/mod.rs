//! Deterministic random-market generation shared by the integration
//! suites.

#![allow(dead_code)]

use itu_match::equilibrium::IndividualMarket;
use itu_match::system::{Market, TransferTable};
use itu_match::transfer::TransferSpec;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Tu,
    Ntu,
    Ltu,
    Etu,
    Mixed,
}

impl FamilyKind {
    pub const ALL_PURE: [FamilyKind; 4] = [
        FamilyKind::Tu,
        FamilyKind::Ntu,
        FamilyKind::Ltu,
        FamilyKind::Etu,
    ];

    pub fn is_smooth(self) -> bool {
        matches!(self, FamilyKind::Tu | FamilyKind::Ltu | FamilyKind::Etu)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parameter ranges keep the equilibria away from degenerate saturation so
/// the plain alternating solver contracts at a healthy rate.
pub fn random_spec(rng: &mut ChaCha8Rng, kind: FamilyKind) -> TransferSpec {
    let kind = match kind {
        FamilyKind::Mixed => FamilyKind::ALL_PURE[rng.gen_range(0..4)],
        k => k,
    };
    match kind {
        FamilyKind::Tu => TransferSpec::Tu {
            phi: rng.gen_range(-1.0..1.2),
        },
        FamilyKind::Ntu => TransferSpec::Ntu {
            alpha: rng.gen_range(-0.8..0.8),
            gamma: rng.gen_range(-0.8..0.8),
        },
        FamilyKind::Ltu => TransferSpec::Ltu {
            lambda: rng.gen_range(0.4..1.8),
            zeta: rng.gen_range(0.4..1.8),
            alpha: rng.gen_range(-0.8..0.8),
            gamma: rng.gen_range(-0.8..0.8),
        },
        FamilyKind::Etu => TransferSpec::Etu {
            tau: rng.gen_range(0.4..2.5),
            alpha: rng.gen_range(-0.8..0.8),
            gamma: rng.gen_range(-0.8..0.8),
        },
        FamilyKind::Mixed => unreachable!(),
    }
}

pub fn random_market(
    rng: &mut ChaCha8Rng,
    nx: usize,
    ny: usize,
    kind: FamilyKind,
    temperature: f64,
) -> Market {
    let rows: Vec<Vec<TransferSpec>> = (0..nx)
        .map(|_| (0..ny).map(|_| random_spec(rng, kind)).collect())
        .collect();
    Market::new(
        (0..nx).map(|i| format!("x{i}")).collect(),
        (0..ny).map(|j| format!("y{j}")).collect(),
        (0..nx).map(|_| rng.gen_range(0.6..1.8)).collect(),
        (0..ny).map(|_| rng.gen_range(0.6..1.8)).collect(),
        TransferTable::PerPair(rows),
        temperature,
        false,
    )
    .unwrap()
}

/// Balanced markets: masses rescaled so the side totals agree exactly.
pub fn random_balanced_market(
    rng: &mut ChaCha8Rng,
    nx: usize,
    ny: usize,
    kind: FamilyKind,
    temperature: f64,
) -> Market {
    let n: Vec<f64> = (0..nx).map(|_| rng.gen_range(0.6..1.8)).collect();
    let mut m: Vec<f64> = (0..ny).map(|_| rng.gen_range(0.6..1.8)).collect();
    let scale = n.iter().sum::<f64>() / m.iter().sum::<f64>();
    for mass in &mut m {
        *mass *= scale;
    }
    let rows: Vec<Vec<TransferSpec>> = (0..nx)
        .map(|_| (0..ny).map(|_| random_spec(rng, kind)).collect())
        .collect();
    Market::new(
        (0..nx).map(|i| format!("x{i}")).collect(),
        (0..ny).map(|j| format!("y{j}")).collect(),
        n,
        m,
        TransferTable::PerPair(rows),
        temperature,
        true,
    )
    .unwrap()
}

pub fn random_individual_market(
    rng: &mut ChaCha8Rng,
    ni: usize,
    nj: usize,
    kind: FamilyKind,
) -> IndividualMarket {
    let rows: Vec<Vec<TransferSpec>> = (0..ni)
        .map(|_| (0..nj).map(|_| random_spec(rng, kind)).collect())
        .collect();
    IndividualMarket::new(
        (0..ni).map(|i| format!("m{i}")).collect(),
        (0..nj).map(|j| format!("w{j}")).collect(),
        TransferTable::PerPair(rows),
    )
    .unwrap()
}

/// TU individual market with an explicit surplus matrix.
pub fn tu_individual_market(surplus: &[Vec<f64>]) -> IndividualMarket {
    let rows: Vec<Vec<TransferSpec>> = surplus
        .iter()
        .map(|row| row.iter().map(|&phi| TransferSpec::Tu { phi }).collect())
        .collect();
    IndividualMarket::new(
        (0..surplus.len()).map(|i| format!("m{i}")).collect(),
        (0..surplus[0].len()).map(|j| format!("w{j}")).collect(),
        TransferTable::PerPair(rows),
    )
    .unwrap()
}
