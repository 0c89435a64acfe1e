//! Exact maximum-weight bipartite assignment (Hungarian algorithm).
//!
//! Shortest-augmenting-path formulation with row/column potentials, O(n^3).
//! Maximization is handled by negating the surplus; the unmatched option is
//! modeled with zero-cost dummy columns, one per row.

use super::OracleError;

/// An optimal assignment: the matched column per row (in the caller's
/// orientation) and the total surplus over matched real pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub matched: Vec<Option<usize>>,
    pub total_surplus: f64,
}

/// Maximum-weight assignment for a dense surplus matrix.
///
/// With `allow_unmatched`, any row or column may stay unmatched (worth
/// zero), so pairs only form at nonnegative surplus. Otherwise the smaller
/// side is matched completely, whatever the sign of the surplus.
pub fn hungarian_optimal(
    surplus: &[Vec<f64>],
    allow_unmatched: bool,
) -> Result<Assignment, OracleError> {
    let rows = surplus.len();
    if rows == 0 {
        return Err(OracleError::BadInput("empty surplus matrix".into()));
    }
    let cols = surplus[0].len();
    if cols == 0 {
        return Err(OracleError::BadInput("empty surplus matrix".into()));
    }
    for row in surplus {
        if row.len() != cols {
            return Err(OracleError::BadInput("irregular surplus matrix".into()));
        }
        if row.iter().any(|w| !w.is_finite()) {
            return Err(OracleError::BadInput("non-finite surplus entry".into()));
        }
    }

    // The solver wants rows <= cols; transpose if needed.
    let transposed = rows > cols;
    type WeightFn<'a> = Box<dyn Fn(usize, usize) -> f64 + 'a>;
    let (work_rows, work_cols, weight): (usize, usize, WeightFn) = if transposed {
        (cols, rows, Box::new(move |i, j| surplus[j][i]))
    } else {
        (rows, cols, Box::new(move |i, j| surplus[i][j]))
    };

    // Cost matrix: negated surplus, plus one zero-cost dummy column per row
    // when opting out is allowed.
    let total_cols = if allow_unmatched {
        work_cols + work_rows
    } else {
        work_cols
    };
    let cost = |i: usize, j: usize| -> f64 {
        if j < work_cols {
            -weight(i, j)
        } else {
            0.0
        }
    };

    let matched_work = min_cost_assignment(work_rows, total_cols, cost);
    let mut matched = vec![None; rows];
    let mut total = 0.0;
    for (i, j) in matched_work.iter().enumerate() {
        let Some(j) = *j else { continue };
        if j >= work_cols {
            continue; // dummy column: row opted out
        }
        let (row, col) = if transposed { (j, i) } else { (i, j) };
        matched[row] = Some(col);
        total += surplus[row][col];
    }
    Ok(Assignment {
        matched,
        total_surplus: total,
    })
}

/// Min-cost perfect assignment of all `rows` (requires `rows <= cols`),
/// via successive shortest augmenting paths with potentials.
fn min_cost_assignment(
    rows: usize,
    cols: usize,
    cost: impl Fn(usize, usize) -> f64,
) -> Vec<Option<usize>> {
    assert!(rows <= cols);
    // 1-based with a virtual column 0, the standard formulation.
    let mut u_pot = vec![0.0_f64; rows + 1];
    let mut v_pot = vec![0.0_f64; cols + 1];
    let mut row_of_col = vec![0usize; cols + 1]; // 0 = free
    let mut path = vec![0usize; cols + 1];

    for i in 1..=rows {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut min_to = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u_pot[i0] - v_pot[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    path[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u_pot[row_of_col[j]] += delta;
                    v_pot[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        // Unwind the augmenting path.
        while j0 != 0 {
            let j1 = path[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        }
    }

    let mut matched = vec![None; rows];
    for j in 1..=cols {
        if row_of_col[j] != 0 {
            matched[row_of_col[j] - 1] = Some(j - 1);
        }
    }
    matched
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force best assignment by recursion, for cross-checking.
    fn brute_force(surplus: &[Vec<f64>], allow_unmatched: bool) -> f64 {
        fn go(surplus: &[Vec<f64>], allow: bool, i: usize, used: u32) -> f64 {
            if i == surplus.len() {
                return 0.0;
            }
            // leave row i unmatched
            let mut best = if allow || surplus[0].len() < surplus.len() {
                go(surplus, allow, i + 1, used)
            } else {
                f64::NEG_INFINITY
            };
            for j in 0..surplus[0].len() {
                if used & (1 << j) != 0 {
                    continue;
                }
                let value = surplus[i][j] + go(surplus, allow, i + 1, used | (1 << j));
                if value > best {
                    best = value;
                }
            }
            best
        }
        go(surplus, allow_unmatched, 0, 0)
    }

    #[test]
    fn diagonal_dominant_matrix() {
        let surplus = vec![vec![4.0, 0.0], vec![0.0, 4.0]];
        let result = hungarian_optimal(&surplus, true).unwrap();
        assert_eq!(result.matched, vec![Some(0), Some(1)]);
        assert_eq!(result.total_surplus, 8.0);
    }

    #[test]
    fn all_negative_surplus_goes_unmatched() {
        let surplus = vec![vec![-1.0, -2.0], vec![-3.0, -0.5]];
        let result = hungarian_optimal(&surplus, true).unwrap();
        assert_eq!(result.matched, vec![None, None]);
        assert_eq!(result.total_surplus, 0.0);
    }

    #[test]
    fn single_pair() {
        let result = hungarian_optimal(&[vec![5.0]], true).unwrap();
        assert_eq!(result.matched, vec![Some(0)]);
        assert_eq!(result.total_surplus, 5.0);
    }

    #[test]
    fn forced_matching_takes_least_bad_pairs() {
        let surplus = vec![vec![-1.0, -5.0], vec![-5.0, -2.0]];
        let result = hungarian_optimal(&surplus, false).unwrap();
        assert_eq!(result.matched, vec![Some(0), Some(1)]);
        assert_eq!(result.total_surplus, -3.0);
    }

    #[test]
    fn rectangular_matrices_work_both_ways() {
        let wide = vec![vec![1.0, 7.0, 3.0]];
        let result = hungarian_optimal(&wide, true).unwrap();
        assert_eq!(result.matched, vec![Some(1)]);
        let tall = vec![vec![1.0], vec![7.0], vec![3.0]];
        let result = hungarian_optimal(&tall, true).unwrap();
        assert_eq!(result.matched, vec![None, Some(0), None]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        // Deterministic pseudo-random fill, no external RNG needed here.
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 6.0 - 3.0
        };
        for size in [2usize, 3, 4, 5] {
            for _ in 0..8 {
                let surplus: Vec<Vec<f64>> = (0..size)
                    .map(|_| (0..size).map(|_| next()).collect())
                    .collect();
                for allow in [true, false] {
                    let fast = hungarian_optimal(&surplus, allow).unwrap().total_surplus;
                    let slow = brute_force(&surplus, allow);
                    assert!(
                        (fast - slow).abs() < 1e-9,
                        "size {size} allow {allow}: {fast} vs {slow}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(hungarian_optimal(&[], true).is_err());
        assert!(hungarian_optimal(&[vec![1.0], vec![]], true).is_err());
        assert!(hungarian_optimal(&[vec![f64::NAN]], true).is_err());
    }
}
