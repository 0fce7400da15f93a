//! Trial records, per-cell summaries, output files and checks.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Check, ExperimentConfig, Method};
use crate::error::{Error, Result};

/// One trial of one configuration cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub problem: String,
    pub method: Method,
    pub sequence: String,
    pub budget: f64,
    pub trial: usize,
    pub nu_hat: f64,
    pub std_err: f64,
    /// `|nu_hat - reference|` when the reference is known.
    pub abs_error: Option<f64>,
    pub n_per_level: Vec<u64>,
    pub cost: f64,
    pub wall_time_s: f64,
}

/// Column names of [`emit_csv`], without and with timing.
pub const CSV_COLUMNS: &[&str] = &[
    "problem",
    "method",
    "sequence",
    "budget",
    "trial",
    "nu_hat",
    "std_err",
    "abs_error",
    "n_per_level",
    "cost",
];

/// Write records as CSV. `n_per_level` is `;`-separated and `abs_error` is
/// empty when unknown. Wall time is appended only with `timing`, so the
/// default output is byte-identical across runs with the same seed.
pub fn emit_csv<W: Write>(records: &[TrialRecord], out: W, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if timing {
        header.push("wall_time_s");
    }
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.problem.clone(),
            r.method.to_string(),
            r.sequence.clone(),
            r.budget.to_string(),
            r.trial.to_string(),
            r.nu_hat.to_string(),
            r.std_err.to_string(),
            r.abs_error.map(|e| e.to_string()).unwrap_or_default(),
            r.n_per_level
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            r.cost.to_string(),
        ];
        if timing {
            row.push(r.wall_time_s.to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregates over the trials of one (problem, method, sequence, budget).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub problem: String,
    pub method: Method,
    pub sequence: String,
    pub budget: f64,
    pub trials: usize,
    pub median_abs_error: Option<f64>,
    pub median_std_err: f64,
    /// Fraction of trials with `|error| <= 2 stderr`.
    pub coverage: Option<f64>,
    pub mean_cost: f64,
}

/// Least-squares slope of `log2(median error)` against `log2(budget)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub problem: String,
    pub method: Method,
    pub sequence: String,
    pub slope: Option<f64>,
    pub budgets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub slopes: Vec<SlopeSummary>,
}

/// Median of a nonempty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares slope of `ys` against `xs` (at least two distinct `xs`).
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

type CellKey = (String, Method, String);

fn group(records: &[TrialRecord]) -> BTreeMap<CellKey, BTreeMap<u64, Vec<&TrialRecord>>> {
    let mut out: BTreeMap<CellKey, BTreeMap<u64, Vec<&TrialRecord>>> = BTreeMap::new();
    for r in records {
        out.entry((r.problem.clone(), r.method, r.sequence.clone()))
            .or_default()
            .entry(r.budget.to_bits())
            .or_default()
            .push(r);
    }
    out
}

fn slope_over(cells: &[&CellSummary], lo: f64, hi: f64) -> (Option<f64>, Vec<f64>) {
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.budget >= lo && c.budget <= hi)
        .filter_map(|c| {
            c.median_abs_error
                .filter(|e| *e > 0.0)
                .map(|e| (c.budget, e))
        })
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.log2()).collect();
    (fit_slope(&xs, &ys), pts.iter().map(|p| p.0).collect())
}

/// Per-cell medians, coverage and slopes.
pub fn summarize(records: &[TrialRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    for ((problem, method, sequence), by_budget) in group(records) {
        let first = cells.len();
        for rows in by_budget.values() {
            let errs: Vec<f64> = rows.iter().filter_map(|r| r.abs_error).collect();
            let known = errs.len() == rows.len();
            let stderrs: Vec<f64> = rows.iter().map(|r| r.std_err).collect();
            let covered = rows
                .iter()
                .filter(|r| r.abs_error.is_some_and(|e| e <= 2.0 * r.std_err))
                .count();
            cells.push(CellSummary {
                problem: problem.clone(),
                method,
                sequence: sequence.clone(),
                budget: rows[0].budget,
                trials: rows.len(),
                median_abs_error: known.then(|| median(&errs)),
                median_std_err: median(&stderrs),
                coverage: known.then(|| covered as f64 / rows.len() as f64),
                mean_cost: rows.iter().map(|r| r.cost).sum::<f64>() / rows.len() as f64,
            });
        }
        let mine: Vec<&CellSummary> = cells[first..].iter().collect();
        let (slope, budgets) = slope_over(&mine, f64::NEG_INFINITY, f64::INFINITY);
        slopes.push(SlopeSummary {
            problem,
            method,
            sequence,
            slope,
            budgets,
        });
    }
    Ok(Summary { cells, slopes })
}

/// Write the summary (and check outcomes, if any) as pretty JSON.
pub fn emit_json<W: Write>(summary: &Summary, checks: &[CheckOutcome], mut out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        cells: &'a [CellSummary],
        slopes: &'a [SlopeSummary],
        checks: &'a [CheckOutcome],
    }
    serde_json::to_writer_pretty(
        &mut out,
        &Doc {
            cells: &summary.cells,
            slopes: &summary.slopes,
            checks,
        },
    )?;
    writeln!(out)?;
    Ok(())
}

/// Write `records.csv` and `summary.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    records: &[TrialRecord],
    summary: &Summary,
    checks: &[CheckOutcome],
    timing: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    emit_csv(
        records,
        std::fs::File::create(dir.join("records.csv"))?,
        timing,
    )?;
    emit_json(
        summary,
        checks,
        std::fs::File::create(dir.join("summary.json"))?,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn sequence_label(
    cfg: &ExperimentConfig,
    method: Method,
    seq: Option<crate::ld::SeqKind>,
) -> String {
    match (method, seq) {
        (Method::Mc, _) => "iid".into(),
        (_, Some(s)) => s.as_str().into(),
        (_, None) => cfg
            .sequences
            .first()
            .map(|s| s.as_str().to_string())
            .unwrap_or_default(),
    }
}

fn cells_for<'a>(
    summary: &'a Summary,
    problem: &str,
    method: Method,
    seq: &str,
) -> Vec<&'a CellSummary> {
    summary
        .cells
        .iter()
        .filter(|c| c.problem == problem && c.method == method && c.sequence == seq)
        .collect()
}

fn bounds_ok(v: f64, min: Option<f64>, max: Option<f64>) -> bool {
    min.map_or(true, |m| v >= m) && max.map_or(true, |m| v <= m)
}

/// Evaluate the config's `[[check]]` entries.
pub fn evaluate_checks(
    cfg: &ExperimentConfig,
    summary: &Summary,
    records: &[TrialRecord],
) -> Vec<CheckOutcome> {
    let problem = cfg.problem.as_str();
    cfg.checks
        .iter()
        .map(|check| match check {
            Check::Slope {
                method,
                sequence,
                min,
                max,
                min_budget,
                max_budget,
            } => {
                let seq = sequence_label(cfg, *method, *sequence);
                let cells = cells_for(summary, problem, *method, &seq);
                let (slope, _) = slope_over(
                    &cells,
                    min_budget.unwrap_or(f64::NEG_INFINITY),
                    max_budget.unwrap_or(f64::INFINITY),
                );
                let name = format!("slope {problem} {method}-{seq}");
                match slope {
                    Some(s) => CheckOutcome {
                        name,
                        passed: bounds_ok(s, *min, *max),
                        detail: format!("slope {s:.3}, bounds [{min:?}, {max:?}]"),
                    },
                    None => CheckOutcome {
                        name,
                        passed: false,
                        detail: "no slope (need two budgets with known errors)".into(),
                    },
                }
            }
            Check::Coverage {
                method,
                sequence,
                min_budget,
                min,
            } => {
                let seq = sequence_label(cfg, *method, *sequence);
                let lo = min_budget.unwrap_or(f64::NEG_INFINITY);
                let rows: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.problem == problem && r.method == *method && r.sequence == seq)
                    .filter(|r| r.budget >= lo && r.abs_error.is_some())
                    .collect();
                let name = format!("coverage {problem} {method}-{seq}");
                if rows.is_empty() {
                    return CheckOutcome {
                        name,
                        passed: false,
                        detail: "no records with known error".into(),
                    };
                }
                let hit = rows
                    .iter()
                    .filter(|r| r.abs_error.is_some_and(|e| e <= 2.0 * r.std_err))
                    .count();
                let frac = hit as f64 / rows.len() as f64;
                CheckOutcome {
                    name,
                    passed: frac >= *min,
                    detail: format!("{hit}/{} = {frac:.3}, min {min}", rows.len()),
                }
            }
            Check::MedianErrorLe {
                method,
                other,
                sequence,
                budget,
                factor,
            } => {
                let sa = sequence_label(cfg, *method, *sequence);
                let sb = sequence_label(cfg, *other, *sequence);
                let a = cells_for(summary, problem, *method, &sa);
                let b = cells_for(summary, problem, *other, &sb);
                let common = a
                    .iter()
                    .map(|c| c.budget)
                    .filter(|x| b.iter().any(|c| c.budget == *x))
                    .filter(|x| budget.map_or(true, |want| *x == want))
                    .fold(f64::NEG_INFINITY, f64::max);
                let name =
                    format!("median error {problem} {method}-{sa} <= {factor} x {other}-{sb}");
                let at = |cs: &[&CellSummary]| {
                    cs.iter()
                        .find(|c| c.budget == common)
                        .and_then(|c| c.median_abs_error)
                };
                match (at(&a), at(&b)) {
                    (Some(ea), Some(eb)) => CheckOutcome {
                        name,
                        passed: ea <= factor * eb,
                        detail: format!("budget {common}: {ea:.3e} vs {eb:.3e}"),
                    },
                    _ => CheckOutcome {
                        name,
                        passed: false,
                        detail: "no common budget with known errors".into(),
                    },
                }
            }
        })
        .collect()
}
