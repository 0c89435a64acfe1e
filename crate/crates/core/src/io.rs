//! Market file schema and solution serialization.
//!
//! Markets are JSON documents with a `schema_version` field and either a
//! `market` (aggregate) or an `individual_market` body:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "market": {
//!     "x_types": ["x1"], "y_types": ["y1"],
//!     "n": [1.0], "m": [1.0],
//!     "temperature": 1.0,
//!     "balanced": false,
//!     "transfers": {"family": "TU", "params": {"phi": 0.0}}
//!   }
//! }
//! ```
//!
//! `transfers` is either a single tagged spec applied to every pair or
//! `{"table": [[spec, ...], ...]}` with one row per x type. Custom transfer
//! functions are library-only and have no file representation.
//!
//! Solution documents are written with every float at 17 significant
//! digits, so reading a solution back reproduces the exact bit pattern.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{AnnealStep, EquilibriumOutcome, IndividualMarket, VerificationRecord};
use crate::ipfp::{JacobianDiagnostic, SolveReport};
use crate::system::{Market, MarketError, Matching, Potentials, TransferTable};
use crate::transfer::TransferSpec;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema_version {found}; this build reads version {expected}")]
    SchemaVersion { found: u64, expected: u64 },
    #[error("document must contain exactly one of `market` or `individual_market`")]
    AmbiguousDocument,
    #[error(transparent)]
    Market(#[from] MarketError),
}

fn parse_error(err: serde_json::Error) -> IoError {
    IoError::Parse {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

/// File form of a transfer spec: `{"family": ..., "params": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", deny_unknown_fields)]
pub enum TransferSpecFile {
    #[serde(rename = "TU")]
    Tu { phi: f64 },
    #[serde(rename = "NTU")]
    Ntu {
        #[serde(default)]
        alpha: f64,
        #[serde(default)]
        gamma: f64,
    },
    #[serde(rename = "LTU")]
    Ltu {
        lambda: f64,
        zeta: f64,
        #[serde(default)]
        alpha: f64,
        #[serde(default)]
        gamma: f64,
    },
    #[serde(rename = "ETU")]
    Etu {
        tau: f64,
        #[serde(default)]
        alpha: f64,
        #[serde(default)]
        gamma: f64,
    },
}

impl From<TransferSpecFile> for TransferSpec {
    fn from(file: TransferSpecFile) -> Self {
        match file {
            TransferSpecFile::Tu { phi } => TransferSpec::Tu { phi },
            TransferSpecFile::Ntu { alpha, gamma } => TransferSpec::Ntu { alpha, gamma },
            TransferSpecFile::Ltu {
                lambda,
                zeta,
                alpha,
                gamma,
            } => TransferSpec::Ltu {
                lambda,
                zeta,
                alpha,
                gamma,
            },
            TransferSpecFile::Etu { tau, alpha, gamma } => TransferSpec::Etu { tau, alpha, gamma },
        }
    }
}

#[derive(Debug, Clone)]
enum TransfersFile {
    Table { table: Vec<Vec<TransferSpecFile>> },
    Global(TransferSpecFile),
}

// Hand-rolled instead of `#[serde(untagged)]`: the untagged machinery
// replaces the inner error ("unknown variant `X`") with a generic
// no-variant-matched message, losing the family name.
impl<'de> Deserialize<'de> for TransfersFile {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(deserializer)?;
        if let Some(object) = value.as_object() {
            if let Some(table) = object.get("table") {
                if object.len() != 1 {
                    return Err(D::Error::custom(
                        "transfer table takes no fields besides `table`",
                    ));
                }
                let table: Vec<Vec<TransferSpecFile>> =
                    serde_json::from_value(table.clone()).map_err(D::Error::custom)?;
                return Ok(TransfersFile::Table { table });
            }
        }
        let spec: TransferSpecFile = serde_json::from_value(value).map_err(D::Error::custom)?;
        Ok(TransfersFile::Global(spec))
    }
}

impl From<TransfersFile> for TransferTable {
    fn from(file: TransfersFile) -> Self {
        match file {
            TransfersFile::Global(spec) => TransferTable::Global(spec.into()),
            TransfersFile::Table { table } => TransferTable::PerPair(
                table
                    .into_iter()
                    .map(|row| row.into_iter().map(Into::into).collect())
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Deserialize)]
struct MarketFile {
    x_types: Vec<String>,
    y_types: Vec<String>,
    n: Vec<f64>,
    m: Vec<f64>,
    temperature: f64,
    #[serde(default)]
    balanced: bool,
    transfers: TransfersFile,
}

#[derive(Debug, Deserialize)]
struct IndividualMarketFile {
    men: Vec<String>,
    women: Vec<String>,
    transfers: TransfersFile,
}

#[derive(Debug, Deserialize)]
struct DocumentFile {
    schema_version: u64,
    #[serde(default)]
    market: Option<MarketFile>,
    #[serde(default)]
    individual_market: Option<IndividualMarketFile>,
}

/// A parsed market document.
#[derive(Debug, Clone)]
pub enum LoadedMarket {
    Aggregate(Market),
    Individual(IndividualMarket),
}

/// Parses and validates a market document.
pub fn parse_market_document(text: &str) -> Result<LoadedMarket, IoError> {
    let doc: DocumentFile = serde_json::from_str(text).map_err(parse_error)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(IoError::SchemaVersion {
            found: doc.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    match (doc.market, doc.individual_market) {
        (Some(market), None) => {
            let market = Market::new(
                market.x_types,
                market.y_types,
                market.n,
                market.m,
                market.transfers.into(),
                market.temperature,
                market.balanced,
            )?;
            Ok(LoadedMarket::Aggregate(market))
        }
        (None, Some(individual)) => {
            let imarket = IndividualMarket::new(
                individual.men,
                individual.women,
                individual.transfers.into(),
            )?;
            Ok(LoadedMarket::Individual(imarket))
        }
        _ => Err(IoError::AmbiguousDocument),
    }
}

/// Reads and parses a market document from disk.
pub fn load_market(path: impl AsRef<Path>) -> Result<LoadedMarket, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_market_document(&text)
}

/// Formats a float with 17 significant digits: enough for an exact f64
/// round trip, and a valid JSON number.
pub fn format_float(x: f64) -> String {
    debug_assert!(x.is_finite());
    format!("{x:.16e}")
}

fn escape_json(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn string_array(items: &[String]) -> String {
    let quoted: Vec<String> = items
        .iter()
        .map(|s| format!("\"{}\"", escape_json(s)))
        .collect();
    format!("[{}]", quoted.join(", "))
}

fn float_array(values: &[f64]) -> String {
    let rendered: Vec<String> = values.iter().map(|v| format_float(*v)).collect();
    format!("[{}]", rendered.join(", "))
}

fn float_matrix(values: &[f64], cols: usize) -> String {
    let rows: Vec<String> = values.chunks(cols).map(float_array).collect();
    format!("[{}]", rows.join(", "))
}

fn report_json(report: &SolveReport) -> String {
    format!(
        "{{\"iterations\": {}, \"converged\": {}, \"final_residual\": {}, \
         \"monotone_violations\": {}, \"sup_change_history\": {}}}",
        report.iterations,
        report.converged,
        format_float(report.final_residual),
        report.monotone_violations,
        float_array(&report.sup_change_history),
    )
}

fn diagnostic_json(diag: &JacobianDiagnostic) -> String {
    format!(
        "{{\"step\": {}, \"min_margin\": {}, \"diagonal_positive\": {}, \
         \"dominant_diagonal\": {}, \"dominance_margins\": {}}}",
        format_float(diag.step),
        format_float(diag.min_margin),
        diag.diagonal_positive,
        diag.dominant_diagonal,
        float_array(&diag.dominance_margins),
    )
}

/// Renders a solved aggregate market as the canonical solution document.
pub fn render_solution(
    market: &Market,
    potentials: &Potentials,
    matching: &Matching,
    report: &SolveReport,
    diagnostic: Option<&JacobianDiagnostic>,
) -> String {
    let mut out = String::new();
    out.push_str("{\n  \"schema_version\": 1,\n  \"solution\": {\n");
    let _ = writeln!(out, "    \"x_types\": {},", string_array(market.x_types()));
    let _ = writeln!(out, "    \"y_types\": {},", string_array(market.y_types()));
    let _ = writeln!(
        out,
        "    \"temperature\": {},",
        format_float(market.temperature())
    );
    let _ = writeln!(out, "    \"balanced\": {},", market.balanced());
    let _ = writeln!(out, "    \"u\": {},", float_array(&potentials.u));
    let _ = writeln!(out, "    \"v\": {},", float_array(&potentials.v));
    let _ = writeln!(
        out,
        "    \"mu\": {},",
        float_matrix(&matching.mu, matching.num_y())
    );
    let _ = writeln!(out, "    \"mu_x0\": {},", float_array(&matching.mu_x0));
    let _ = writeln!(out, "    \"mu_0y\": {},", float_array(&matching.mu_0y));
    if let Some(diag) = diagnostic {
        let _ = writeln!(
            out,
            "    \"jacobian_diagnostic\": {},",
            diagnostic_json(diag)
        );
    }
    let _ = writeln!(out, "    \"report\": {}", report_json(report));
    out.push_str("  }\n}\n");
    out
}

fn verification_json(record: &VerificationRecord) -> String {
    let conditions: Vec<String> = record
        .conditions
        .iter()
        .map(|c| {
            let location = match &c.worst_location {
                Some(l) => format!("\"{}\"", escape_json(l)),
                None => "null".to_owned(),
            };
            format!(
                "{{\"name\": \"{}\", \"passed\": {}, \"worst_violation\": {}, \
                 \"worst_location\": {}}}",
                escape_json(c.name),
                c.passed,
                format_float(c.worst_violation),
                location,
            )
        })
        .collect();
    format!(
        "{{\"slack\": {}, \"threshold\": {}, \"passed\": {}, \"conditions\": [{}]}}",
        format_float(record.slack),
        format_float(record.threshold),
        record.passed,
        conditions.join(", "),
    )
}

fn trace_json(trace: &[AnnealStep]) -> String {
    let steps: Vec<String> = trace
        .iter()
        .map(|step| {
            format!(
                "{{\"temperature\": {}, \"iterations\": {}, \
                 \"max_stability_violation\": {}, \"priced_out\": {}}}",
                format_float(step.temperature),
                step.iterations,
                format_float(step.max_stability_violation),
                string_array(&step.priced_out),
            )
        })
        .collect();
    format!("[{}]", steps.join(", "))
}

/// Renders an annealed outcome with its verification record.
pub fn render_outcome(
    imarket: &IndividualMarket,
    outcome: &EquilibriumOutcome,
    verification: &VerificationRecord,
    trace: &[AnnealStep],
) -> String {
    let nj = imarket.num_women();
    let matched: Vec<String> = outcome
        .matched_pairs(verification.threshold)
        .into_iter()
        .map(|(i, j)| {
            format!(
                "[\"{}\", \"{}\"]",
                escape_json(&imarket.men()[i]),
                escape_json(&imarket.women()[j])
            )
        })
        .collect();
    let mut out = String::new();
    out.push_str("{\n  \"schema_version\": 1,\n  \"outcome\": {\n");
    let _ = writeln!(out, "    \"men\": {},", string_array(imarket.men()));
    let _ = writeln!(out, "    \"women\": {},", string_array(imarket.women()));
    let _ = writeln!(out, "    \"integral\": {},", outcome.integral);
    let _ = writeln!(out, "    \"mu\": {},", float_matrix(&outcome.mu, nj));
    let _ = writeln!(out, "    \"u\": {},", float_array(&outcome.u));
    let _ = writeln!(out, "    \"v\": {},", float_array(&outcome.v));
    let _ = writeln!(out, "    \"matched_pairs\": [{}],", matched.join(", "));
    let _ = writeln!(
        out,
        "    \"verification\": {},",
        verification_json(verification)
    );
    let _ = writeln!(out, "    \"trace\": {}", trace_json(trace));
    out.push_str("  }\n}\n");
    out
}

/// Parsed solution document (the output of `render_solution`).
#[derive(Debug, Clone, Deserialize)]
pub struct SolutionFile {
    pub schema_version: u64,
    pub solution: SolutionBody,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SolutionBody {
    pub x_types: Vec<String>,
    pub y_types: Vec<String>,
    pub temperature: f64,
    pub balanced: bool,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub mu_x0: Vec<f64>,
    pub mu_0y: Vec<f64>,
}

pub fn parse_solution_document(text: &str) -> Result<SolutionFile, IoError> {
    let file: SolutionFile = serde_json::from_str(text).map_err(parse_error)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(IoError::SchemaVersion {
            found: file.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipfp::{self, SolverConfig};

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "market": {
            "x_types": ["x1"],
            "y_types": ["y1"],
            "n": [1.0],
            "m": [1.0],
            "temperature": 1.0,
            "transfers": {"family": "TU", "params": {"phi": 0.0}}
        }
    }"#;

    #[test]
    fn minimal_market_parses() {
        match parse_market_document(MINIMAL).unwrap() {
            LoadedMarket::Aggregate(market) => {
                assert_eq!(market.num_x(), 1);
                assert_eq!(market.num_y(), 1);
                assert!(!market.balanced());
            }
            LoadedMarket::Individual(_) => panic!("expected aggregate"),
        }
    }

    #[test]
    fn unbalanced_masses_with_balanced_flag_are_rejected_naming_sums() {
        let text = MINIMAL.replace("\"n\": [1.0]", "\"n\": [2.0]").replace(
            "\"temperature\": 1.0,",
            "\"temperature\": 1.0, \"balanced\": true,",
        );
        match parse_market_document(&text) {
            Err(IoError::Market(MarketError::BalanceMismatch { sum_n, sum_m })) => {
                assert_eq!(sum_n, 2.0);
                assert_eq!(sum_m, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn incomplete_transfer_table_is_rejected_naming_the_pair() {
        let text = r#"{
            "schema_version": 1,
            "market": {
                "x_types": ["x1"], "y_types": ["y1", "y2"],
                "n": [1.0], "m": [1.0, 1.0],
                "temperature": 1.0,
                "transfers": {"table": [[{"family": "TU", "params": {"phi": 0.0}}]]}
            }
        }"#;
        match parse_market_document(text) {
            Err(IoError::Market(MarketError::MissingTransfer { x, y })) => {
                assert_eq!((x.as_str(), y.as_str()), ("x1", "y2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_family_is_a_parse_error_with_location() {
        let text = MINIMAL.replace("\"TU\"", "\"XTU\"");
        match parse_market_document(&text) {
            Err(IoError::Parse { line, message, .. }) => {
                assert!(line > 1);
                assert!(message.contains("XTU"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn future_schema_versions_are_rejected() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(matches!(
            parse_market_document(&text),
            Err(IoError::SchemaVersion { found: 99, .. })
        ));
    }

    #[test]
    fn individual_market_parses() {
        let text = r#"{
            "schema_version": 1,
            "individual_market": {
                "men": ["a", "b"],
                "women": ["c"],
                "transfers": {"family": "NTU", "params": {"alpha": 0.5, "gamma": 0.25}}
            }
        }"#;
        match parse_market_document(text).unwrap() {
            LoadedMarket::Individual(imarket) => {
                assert_eq!(imarket.num_men(), 2);
                assert_eq!(imarket.num_women(), 1);
            }
            LoadedMarket::Aggregate(_) => panic!("expected individual"),
        }
    }

    #[test]
    fn format_float_round_trips_exactly() {
        for &x in &[
            0.5,
            std::f64::consts::LN_2,
            1.0 / 3.0,
            6.02e23,
            -1.2345678901234567e-300,
            0.0,
        ] {
            let text = format_float(x);
            let back: f64 = text.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{text}");
        }
    }

    #[test]
    fn solution_round_trip_preserves_bits() {
        let LoadedMarket::Aggregate(market) = parse_market_document(MINIMAL).unwrap() else {
            unreachable!()
        };
        let solution = ipfp::solve(&market, &SolverConfig::default()).unwrap();
        let text = render_solution(
            &market,
            &solution.potentials,
            &solution.matching,
            &solution.report,
            None,
        );
        let parsed = parse_solution_document(&text).unwrap();
        assert_eq!(
            parsed.solution.u[0].to_bits(),
            solution.potentials.u[0].to_bits()
        );
        assert_eq!(
            parsed.solution.mu[0][0].to_bits(),
            solution.matching.pair_mass(0, 0).to_bits()
        );
    }
}
