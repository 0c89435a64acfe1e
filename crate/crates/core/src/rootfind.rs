//! Scalar root finding for monotone functions.
//!
//! Everything here assumes the function is non-increasing (the margin maps
//! and transfer gaps solved in this crate all are, up to a sign flip at the
//! call site). The workhorse is a bracketed bisection with optional Newton
//! acceleration: bisection guarantees progress, Newton steps are accepted
//! only while they stay inside the bracket.

/// Outcome of a bracket expansion attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Bracket {
    /// `lo <= root <= hi` with `f(lo) >= 0 >= f(hi)`.
    Found {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    /// No sign change within the expansion budget.
    NotFound,
}

/// Expands a bracket around `start` for a decreasing function by doubling
/// step sizes, staying within `[min_x, max_x]`.
pub(crate) fn expand_bracket<F, E>(
    mut f: F,
    start: f64,
    min_x: f64,
    max_x: f64,
) -> Result<Bracket, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let f_start = f(start)?;
    if f_start == 0.0 {
        return Ok(Bracket::Found {
            lo: start,
            hi: start,
            f_lo: 0.0,
            f_hi: 0.0,
        });
    }
    let mut step = 1.0;
    if f_start > 0.0 {
        // Root is to the right.
        let (lo, f_lo) = (start, f_start);
        let mut hi = start;
        for _ in 0..64 {
            hi = (hi + step).min(max_x);
            let f_hi = f(hi)?;
            if f_hi <= 0.0 {
                return Ok(Bracket::Found { lo, hi, f_lo, f_hi });
            }
            if hi >= max_x {
                return Ok(Bracket::NotFound);
            }
            step *= 2.0;
        }
    } else {
        let (hi, f_hi) = (start, f_start);
        let mut lo = start;
        for _ in 0..64 {
            lo = (lo - step).max(min_x);
            let f_lo = f(lo)?;
            if f_lo >= 0.0 {
                return Ok(Bracket::Found { lo, hi, f_lo, f_hi });
            }
            if lo <= min_x {
                return Ok(Bracket::NotFound);
            }
            step *= 2.0;
        }
    }
    Ok(Bracket::NotFound)
}

/// Solves `f(x) = 0` for a non-increasing `f` on a valid bracket.
///
/// `df` supplies the derivative for Newton acceleration; without it the
/// solve is pure bisection. A Newton step is only taken when it stays
/// strictly inside the bracket *and* is at most half the step from two
/// iterations ago — otherwise the step bisects, so progress is never
/// slower than halving (stiff exponential gaps make unguarded Newton
/// crawl in temperature-sized steps). Finishes with up to two Newton
/// polish steps when a derivative is available.
pub(crate) fn solve_decreasing<F, D, E>(
    mut f: F,
    mut df: Option<D>,
    bracket: (f64, f64, f64, f64),
    tol: f64,
) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    D: FnMut(f64) -> Option<f64>,
{
    let (mut lo, mut hi, f_lo, f_hi) = bracket;
    debug_assert!(lo <= hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }

    let mut x = 0.5 * (lo + hi);
    let mut step_prev = hi - lo;
    let mut step_last = step_prev;
    for _ in 0..200 {
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let scale = tol * x.abs().max(1.0);
        if hi - lo <= scale {
            break;
        }
        let mut next = f64::NAN;
        let mut taken = 0.0;
        if let Some(d) = df.as_mut() {
            if let Some(slope) = d(x) {
                if slope.is_finite() && slope != 0.0 {
                    let newton_step = fx / slope;
                    let candidate = x - newton_step;
                    if candidate.is_finite()
                        && candidate > lo
                        && candidate < hi
                        && 2.0 * newton_step.abs() <= step_prev
                    {
                        next = candidate;
                        taken = newton_step.abs();
                    }
                }
            }
        }
        if !next.is_finite() {
            next = 0.5 * (lo + hi);
            taken = 0.5 * (hi - lo);
        }
        step_prev = step_last;
        step_last = taken;
        x = next;
        // A converged Newton sequence can sit far from the slower bracket
        // end; once its steps drop below tolerance the root is pinned.
        if step_last <= 0.1 * scale {
            break;
        }
    }

    // Newton polish: sharpens the root to machine precision on smooth
    // problems without endangering the bracketed estimate. Seeded from the
    // last evaluated point: on a step-based break the bracket may still be
    // wide and only `x` carries the converged Newton sequence.
    let mut best = if df.is_some() {
        x.clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    };
    if let Some(d) = df.as_mut() {
        for _ in 0..2 {
            let fb = f(best)?;
            match d(best) {
                Some(slope) if slope.is_finite() && slope != 0.0 => {
                    let candidate = best - fb / slope;
                    if candidate.is_finite() && candidate >= lo && candidate <= hi {
                        best = candidate;
                    } else {
                        break;
                    }
                }
                _ => break,
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    type NoErr = std::convert::Infallible;

    fn solve(f: impl Fn(f64) -> f64 + Copy, df: impl Fn(f64) -> f64 + Copy, start: f64) -> f64 {
        let wrapped = |x: f64| -> Result<f64, NoErr> { Ok(f(x)) };
        match expand_bracket(wrapped, start, -1e6, 1e6).unwrap() {
            Bracket::Found { lo, hi, f_lo, f_hi } => solve_decreasing(
                wrapped,
                Some(|x: f64| Some(df(x))),
                (lo, hi, f_lo, f_hi),
                1e-13,
            )
            .unwrap(),
            Bracket::NotFound => panic!("no bracket"),
        }
    }

    #[test]
    fn finds_exponential_root() {
        // exp(-x) - 0.25 = 0  =>  x = log 4
        let root = solve(|x| (-x).exp() - 0.25, |x| -(-x).exp(), 0.0);
        assert!((root - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bisection_only_still_converges() {
        let f = |x: f64| -> Result<f64, NoErr> { Ok(1.0 - x * x * x) };
        let bracket = match expand_bracket(f, 0.0, -1e6, 1e6).unwrap() {
            Bracket::Found { lo, hi, f_lo, f_hi } => (lo, hi, f_lo, f_hi),
            Bracket::NotFound => panic!(),
        };
        let root =
            solve_decreasing::<_, fn(f64) -> Option<f64>, NoErr>(f, None, bracket, 1e-13).unwrap();
        assert!((root - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_missing_bracket() {
        // Strictly positive everywhere: no root.
        let f = |x: f64| -> Result<f64, NoErr> { Ok(2.0 + (-x * x).exp()) };
        assert_eq!(
            expand_bracket(f, 0.0, -50.0, 50.0).unwrap(),
            Bracket::NotFound
        );
    }
}
