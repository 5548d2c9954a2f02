//! CSV and Markdown emitters for evaluation results.
//!
//! All numbers are formatted with `Display`, which round-trips f64 exactly;
//! two runs that produce the same values therefore produce byte-identical
//! files, and the determinism checks in the test suite compare raw bytes.

use super::HarnessError;
use crate::trainers::{ConvergencePoint, EvalRow};

pub const EVAL_CSV_HEADER: &str = "regime,attack,scale,mean_pre,mean_post,std_post,n_tasks";
pub const CONVERGENCE_CSV_HEADER: &str = "regime,iteration,mean_return";

/// One row per (regime, attack, scale) evaluation cell.
pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(EVAL_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.regime, r.attack, r.scale, r.mean_pre, r.mean_post, r.std_post, r.n_tasks
        ));
    }
    out
}

/// Strict inverse of [`eval_csv`]; used by the `report` verb to rebuild the
/// summary table from an existing results file.
pub fn parse_eval_csv(text: &str) -> Result<Vec<EvalRow>, HarnessError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, detail: String| HarnessError::Config {
        location: format!("eval csv line {}", line + 1),
        detail,
    };
    match lines.next() {
        Some((_, h)) if h == EVAL_CSV_HEADER => {}
        other => {
            return Err(bad(0, format!("expected header `{EVAL_CSV_HEADER}`, got {other:?}")))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(i, format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64, HarnessError> {
            s.parse().map_err(|_| bad(i, format!("bad number `{s}`")))
        };
        rows.push(EvalRow {
            regime: f[0].to_string(),
            attack: f[1].to_string(),
            scale: num(f[2])?,
            mean_pre: num(f[3])?,
            mean_post: num(f[4])?,
            std_post: num(f[5])?,
            n_tasks: f[6].parse().map_err(|_| bad(i, format!("bad count `{}`", f[6])))?,
        });
    }
    Ok(rows)
}

/// One row per logged training iteration.
pub fn convergence_csv(points: &[ConvergencePoint]) -> String {
    let mut out = String::from(CONVERGENCE_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.regime, p.iteration, p.mean_return));
    }
    out
}

fn kind_rank(attack: &str) -> usize {
    match attack {
        "clean" => 0,
        "random" => 1,
        "fgsm" => 2,
        "adgan" => 3,
        _ => 4,
    }
}

fn cell_label(attack: &str, scale: f64) -> String {
    // the canonical attack-free cell; clean cells at a configured scale
    // (the identity ignores it) keep the scale in their label so columns
    // stay distinguishable
    if attack == "clean" && scale == 0.0 {
        "clean".to_string()
    } else {
        format!("{attack}@{scale}")
    }
}

/// Columns in presentation order (clean first, then each attack kind by
/// increasing scale) and the regimes in first-seen order.
fn table_axes(rows: &[EvalRow]) -> (Vec<String>, Vec<(String, f64)>) {
    let mut regimes: Vec<String> = Vec::new();
    let mut columns: Vec<(String, f64)> = Vec::new();
    for r in rows {
        if !regimes.contains(&r.regime) {
            regimes.push(r.regime.clone());
        }
        let col = (r.attack.clone(), r.scale);
        if !columns.contains(&col) {
            columns.push(col);
        }
    }
    columns.sort_by(|a, b| {
        kind_rank(&a.0)
            .cmp(&kind_rank(&b.0))
            .then(a.0.cmp(&b.0))
            .then(a.1.total_cmp(&b.1))
    });
    (regimes, columns)
}

fn lookup(rows: &[EvalRow], regime: &str, col: &(String, f64)) -> Option<f64> {
    rows.iter()
        .find(|r| r.regime == regime && r.attack == col.0 && r.scale == col.1)
        .map(|r| r.mean_post)
}

/// The best (largest) post-adaptation return per column; ties keep every
/// index.
fn best_per_column(
    rows: &[EvalRow],
    regimes: &[String],
    col: &(String, f64),
) -> Vec<usize> {
    let vals: Vec<Option<f64>> =
        regimes.iter().map(|reg| lookup(rows, reg, col)).collect();
    let best = vals.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    vals.iter()
        .enumerate()
        .filter(|(_, v)| v.map(|x| x == best).unwrap_or(false))
        .map(|(i, _)| i)
        .collect()
}

/// Markdown summary: regimes as rows, attack cells as columns, the best
/// regime per column in bold. Cells nobody evaluated read `absent`.
pub fn report_markdown(rows: &[EvalRow]) -> String {
    let (regimes, columns) = table_axes(rows);
    let mut out = String::from("# Meta-test returns\n\n");
    out.push_str(
        "Mean post-adaptation return per training regime and evaluation attack; \
         the best regime in each column is bold.\n\n",
    );
    out.push_str("| regime |");
    for col in &columns {
        out.push_str(&format!(" {} |", cell_label(&col.0, col.1)));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');
    let mut any_tie = false;
    for (i, regime) in regimes.iter().enumerate() {
        out.push_str(&format!("| {regime} |"));
        for col in &columns {
            let best = best_per_column(rows, &regimes, col);
            any_tie |= best.len() > 1;
            match lookup(rows, regime, col) {
                Some(v) if best.contains(&i) => out.push_str(&format!(" **{v}** |")),
                Some(v) => out.push_str(&format!(" {v} |")),
                None => out.push_str(" absent |"),
            }
        }
        out.push('\n');
    }
    if any_tie {
        out.push_str("\nColumns with more than one bold entry are exact ties.\n");
    }
    out
}

/// The same table as machine-readable CSV; the best cell per column carries
/// a trailing `*`.
pub fn report_table_csv(rows: &[EvalRow]) -> String {
    let (regimes, columns) = table_axes(rows);
    let mut out = String::from("regime");
    for col in &columns {
        out.push_str(&format!(",{}", cell_label(&col.0, col.1)));
    }
    out.push('\n');
    for (i, regime) in regimes.iter().enumerate() {
        out.push_str(regime);
        for col in &columns {
            let best = best_per_column(rows, &regimes, col);
            match lookup(rows, regime, col) {
                Some(v) if best.contains(&i) => out.push_str(&format!(",{v}*")),
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push_str(",absent"),
            }
        }
        out.push('\n');
    }
    out
}
