//! Output rendering and atomic file writes.

use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use itu_match::equilibrium::{EquilibriumOutcome, IndividualMarket};
use itu_match::io::format_float;
use itu_match::oracle::SimulatedFrequencies;
use itu_match::system::{Market, Matching};

/// Writes `content` to `path`, or to stdout when no path is given. File
/// writes go through a temp file in the target directory and a rename, so
/// readers never observe a partial document.
pub fn write_output(path: Option<&Path>, content: &str) -> anyhow::Result<()> {
    match path {
        None => {
            print!("{content}");
            std::io::stdout().flush()?;
            Ok(())
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
            let mut temp = match dir {
                Some(dir) => tempfile::NamedTempFile::new_in(dir),
                None => tempfile::NamedTempFile::new_in("."),
            }
            .context("creating temporary output file")?;
            temp.write_all(content.as_bytes())
                .context("writing output")?;
            temp.persist(path)
                .with_context(|| format!("moving output into place at {}", path.display()))?;
            Ok(())
        }
    }
}

/// Flattened mass table: one row per pair plus unmatched rows with an
/// empty partner column.
pub fn solution_csv(market: &Market, matching: &Matching) -> anyhow::Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["x", "y", "mass"])?;
    for (x, x_label) in market.x_types().iter().enumerate() {
        for (y, y_label) in market.y_types().iter().enumerate() {
            writer.write_record([
                x_label.as_str(),
                y_label.as_str(),
                &format_float(matching.pair_mass(x, y)),
            ])?;
        }
    }
    if !market.balanced() {
        for (x, x_label) in market.x_types().iter().enumerate() {
            writer.write_record([x_label.as_str(), "", &format_float(matching.mu_x0[x])])?;
        }
        for (y, y_label) in market.y_types().iter().enumerate() {
            writer.write_record(["", y_label.as_str(), &format_float(matching.mu_0y[y])])?;
        }
    }
    Ok(String::from_utf8(writer.into_inner()?)?)
}

pub fn outcome_csv(
    imarket: &IndividualMarket,
    outcome: &EquilibriumOutcome,
) -> anyhow::Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["man", "woman", "mass"])?;
    for (i, man) in imarket.men().iter().enumerate() {
        for (j, woman) in imarket.women().iter().enumerate() {
            writer.write_record([
                man.as_str(),
                woman.as_str(),
                &format_float(outcome.pair_mass(i, j)),
            ])?;
        }
    }
    Ok(String::from_utf8(writer.into_inner()?)?)
}

/// Side-by-side solver-vs-reference table as a JSON document.
pub fn comparison_document(
    market: &Market,
    solver: &Matching,
    reference: &Matching,
    monte_carlo: Option<(&SimulatedFrequencies, u64)>,
) -> String {
    let mut worst = 0.0_f64;
    let mut rows = Vec::new();
    for (x, x_label) in market.x_types().iter().enumerate() {
        for (y, y_label) in market.y_types().iter().enumerate() {
            let s = solver.pair_mass(x, y);
            let r = reference.pair_mass(x, y);
            worst = worst.max((s - r).abs());
            rows.push(format!(
                "{{\"x\": \"{x_label}\", \"y\": \"{y_label}\", \"solver\": {}, \"reference\": {}, \"difference\": {}}}",
                format_float(s),
                format_float(r),
                format_float(s - r),
            ));
        }
    }
    let mut body = format!(
        "{{\n  \"schema_version\": 1,\n  \"comparison\": {{\n    \"max_abs_difference\": {},\n    \"cells\": [{}]",
        format_float(worst),
        rows.join(", "),
    );
    if let Some((frequencies, seed)) = monte_carlo {
        let mut cells = Vec::new();
        for (x, x_label) in market.x_types().iter().enumerate() {
            for (y, y_label) in market.y_types().iter().enumerate() {
                let analytic = solver.pair_mass(x, y) / market.n()[x];
                let empirical = frequencies.fraction(x, y);
                cells.push(format!(
                    "{{\"x\": \"{x_label}\", \"y\": \"{y_label}\", \"analytic\": {}, \"empirical\": {}}}",
                    format_float(analytic),
                    format_float(empirical),
                ));
            }
            let analytic = solver.mu_x0[x] / market.n()[x];
            cells.push(format!(
                "{{\"x\": \"{x_label}\", \"y\": \"\", \"analytic\": {}, \"empirical\": {}}}",
                format_float(analytic),
                format_float(frequencies.unmatched_fraction[x]),
            ));
        }
        body.push_str(&format!(
            ",\n    \"monte_carlo\": {{\"seed\": {seed}, \"agents_per_type\": {}, \"choice_fractions\": [{}]}}",
            frequencies.agents_per_type,
            cells.join(", "),
        ));
    }
    body.push_str("\n  }\n}\n");
    body
}

/// Validation verdict document.
pub fn validation_document(max_scaled_residual: f64, tol: f64, passed: bool) -> String {
    format!(
        "{{\n  \"schema_version\": 1,\n  \"validation\": {{\n    \"max_scaled_residual\": {},\n    \"tol\": {},\n    \"passed\": {}\n  }}\n}}\n",
        format_float(max_scaled_residual),
        format_float(tol),
        passed,
    )
}
