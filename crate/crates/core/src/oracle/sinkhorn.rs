//! Classical biproportional scaling reference for TU markets.
//!
//! Works directly on the surplus kernel `K = exp(phi / 2T)` with scaling
//! vectors `a`, `b`; the unmatched masses are the squared scalings, so each
//! margin update solves the quadratic `a^2 + a (K b) = n` in closed form.
//! Implemented without touching the transfer or solver modules so it can
//! serve as an independent cross-check.

use super::OracleError;
use crate::system::Matching;

const MAX_SWEEPS: usize = 100_000;

/// Scales the TU kernel until the margins match `n` and `m` to `tol`
/// (scaled by the corresponding mass).
pub fn sinkhorn_reference(
    phi: &[Vec<f64>],
    n: &[f64],
    m: &[f64],
    temperature: f64,
    tol: f64,
) -> Result<Matching, OracleError> {
    let rows = n.len();
    let cols = m.len();
    if phi.len() != rows || phi.iter().any(|r| r.len() != cols) || rows == 0 || cols == 0 {
        return Err(OracleError::BadInput(format!(
            "surplus matrix must be {rows} x {cols} to match the mass vectors"
        )));
    }
    if temperature <= 0.0 || tol <= 0.0 || temperature.is_nan() || tol.is_nan() {
        return Err(OracleError::BadInput(
            "temperature and tol must be positive".into(),
        ));
    }

    let kernel: Vec<Vec<f64>> = phi
        .iter()
        .map(|row| {
            row.iter()
                .map(|p| (p / (2.0 * temperature)).exp())
                .collect()
        })
        .collect();

    let quadratic_root = |coef: f64, target: f64| -> f64 {
        // positive root of s^2 + coef * s = target
        2.0 * target / (coef + (coef * coef + 4.0 * target).sqrt())
    };

    let mut a = vec![1.0_f64; rows];
    let mut b = vec![1.0_f64; cols];
    for _ in 0..MAX_SWEEPS {
        for i in 0..rows {
            let kb: f64 = (0..cols).map(|j| kernel[i][j] * b[j]).sum();
            a[i] = quadratic_root(kb, n[i]);
        }
        for j in 0..cols {
            let ka: f64 = (0..rows).map(|i| kernel[i][j] * a[i]).sum();
            b[j] = quadratic_root(ka, m[j]);
        }

        let mut worst = 0.0_f64;
        for i in 0..rows {
            let row: f64 = (0..cols).map(|j| a[i] * kernel[i][j] * b[j]).sum();
            worst = worst.max(((a[i] * a[i] + row - n[i]) / n[i]).abs());
        }
        for j in 0..cols {
            let col: f64 = (0..rows).map(|i| a[i] * kernel[i][j] * b[j]).sum();
            worst = worst.max(((b[j] * b[j] + col - m[j]) / m[j]).abs());
        }
        if worst <= tol {
            let mut matching = Matching::new(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    matching.set_pair_mass(i, j, a[i] * kernel[i][j] * b[j]);
                }
            }
            for i in 0..rows {
                matching.mu_x0[i] = a[i] * a[i];
            }
            for j in 0..cols {
                matching.mu_0y[j] = b[j] * b[j];
            }
            return Ok(matching);
        }
    }
    Err(OracleError::NonConvergence(MAX_SWEEPS))
}
