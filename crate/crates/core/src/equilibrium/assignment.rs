//! Exact max-cardinality, max-weight bipartite matching on small graphs.
//!
//! Used to round a near-integral mass matrix to a 0/1 matching. Cardinality
//! dominates weight (via a constant bonus per matched edge), and ties are
//! broken toward the lexicographically smallest pair list.

/// Largest side that may be used as the DP bitmask.
pub(crate) const MAX_MASK_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TooLarge {
    pub size: usize,
    pub limit: usize,
}

/// `weights[i][j]` is the edge weight or `-inf` for a missing edge.
/// Returns the column matched to each row.
pub(crate) fn max_weight_matching(weights: &[Vec<f64>]) -> Result<Vec<Option<usize>>, TooLarge> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Ok(vec![None; rows]);
    }
    if cols <= MAX_MASK_SIDE {
        return Ok(solve_masked(weights, rows, cols));
    }
    if rows <= MAX_MASK_SIDE {
        let transposed: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| weights[i][j]).collect())
            .collect();
        let by_col = solve_masked(&transposed, cols, rows);
        let mut by_row = vec![None; rows];
        for (j, m) in by_col.iter().enumerate() {
            if let Some(i) = m {
                by_row[*i] = Some(j);
            }
        }
        return Ok(by_row);
    }
    Err(TooLarge {
        size: rows.min(cols),
        limit: MAX_MASK_SIDE,
    })
}

fn solve_masked(weights: &[Vec<f64>], rows: usize, cols: usize) -> Vec<Option<usize>> {
    // Bonus large enough that one extra matched edge beats any total weight
    // difference, making the objective "cardinality first".
    let weight_span: f64 = weights
        .iter()
        .flatten()
        .filter(|w| w.is_finite())
        .map(|w| w.abs())
        .sum();
    let bonus = weight_span + 1.0;

    let masks = 1usize << cols;
    // best[i][mask]: optimum over rows i.. with available columns `mask`.
    let mut best = vec![vec![0.0_f64; masks]; rows + 1];
    for i in (0..rows).rev() {
        for mask in 0..masks {
            let mut value = best[i + 1][mask];
            for j in 0..cols {
                let bit = 1usize << j;
                if mask & bit == 0 || weights[i][j] == f64::NEG_INFINITY {
                    continue;
                }
                let candidate = weights[i][j] + bonus + best[i + 1][mask & !bit];
                if candidate > value {
                    value = candidate;
                }
            }
            best[i][mask] = value;
        }
    }

    // Reconstruct preferring the smallest column (and matching over
    // skipping) whenever the optimum allows it; candidate values repeat the
    // exact arithmetic above, so equality comparisons are reliable.
    let mut matched = vec![None; rows];
    let mut mask = masks - 1;
    for i in 0..rows {
        let target = best[i][mask];
        let mut choice = None;
        for j in 0..cols {
            let bit = 1usize << j;
            if mask & bit == 0 || weights[i][j] == f64::NEG_INFINITY {
                continue;
            }
            if weights[i][j] + bonus + best[i + 1][mask & !bit] == target {
                choice = Some(j);
                break;
            }
        }
        if let Some(j) = choice {
            matched[i] = Some(j);
            mask &= !(1usize << j);
        }
    }
    matched
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEG: f64 = f64::NEG_INFINITY;

    #[test]
    fn picks_heavier_diagonal() {
        let w = vec![vec![-0.02, -4.6], vec![-4.6, -0.02]];
        assert_eq!(max_weight_matching(&w).unwrap(), vec![Some(0), Some(1)]);
    }

    #[test]
    fn cardinality_beats_weight() {
        // Row 0 prefers column 1 alone, but matching both rows requires
        // taking the lighter edges.
        let w = vec![vec![-0.1, -5.0], vec![NEG, -5.0]];
        assert_eq!(max_weight_matching(&w).unwrap(), vec![Some(0), Some(1)]);
    }

    #[test]
    fn symmetric_tie_breaks_lexicographically() {
        let w = vec![vec![-1.0, -1.0], vec![-1.0, -1.0]];
        assert_eq!(max_weight_matching(&w).unwrap(), vec![Some(0), Some(1)]);
    }

    #[test]
    fn isolated_rows_stay_unmatched() {
        let w = vec![vec![NEG, NEG], vec![-0.5, NEG]];
        assert_eq!(max_weight_matching(&w).unwrap(), vec![None, Some(0)]);
    }

    #[test]
    fn wide_matrices_transpose() {
        let mut w = vec![vec![NEG; 20]; 2];
        w[0][17] = -0.1;
        w[1][3] = -0.2;
        assert_eq!(max_weight_matching(&w).unwrap(), vec![Some(17), Some(3)]);
    }

    #[test]
    fn too_large_is_reported() {
        let w = vec![vec![0.0; 17]; 17];
        assert!(max_weight_matching(&w).is_err());
    }
}
