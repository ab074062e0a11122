//! Generation of standalone matplotlib scripts for result CSV files.

use std::fmt::Write as _;

use qnflow_core::kacanov::IterationRecord;

use crate::experiment::ResultTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    ErrorDecay,
    EnergyDecay,
    Factors,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::ErrorDecay, PlotKind::EnergyDecay, PlotKind::Factors];

    pub fn slug(self) -> &'static str {
        match self {
            PlotKind::ErrorDecay => "error",
            PlotKind::EnergyDecay => "energy",
            PlotKind::Factors => "factors",
        }
    }

    /// Whether any run carries data for this plot.
    pub fn applies(self, runs: &[PlotRun<'_>]) -> bool {
        runs.iter().any(|r| match self {
            PlotKind::ErrorDecay => r.table.rows.iter().any(|x| x.h1_error.is_some()),
            PlotKind::EnergyDecay => r.table.rows.iter().any(|x| x.energy_error.is_some()),
            PlotKind::Factors => !r.table.rows.is_empty(),
        })
    }
}

/// One curve group: a result table and the path of its CSV relative to the
/// script.
#[derive(Debug, Clone, Copy)]
pub struct PlotRun<'a> {
    pub label: &'a str,
    pub csv: &'a str,
    pub table: &'a ResultTable,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlotError {
    #[error("nothing to plot: no runs given")]
    NoRuns,
    #[error("nothing to plot: run `{0}` has no rows")]
    EmptyTable(String),
}

type Present = fn(&IterationRecord) -> bool;

const FACTOR_COLUMNS: [(&str, Present); 5] = [
    ("q_E", |r| r.q_e.is_some()),
    ("q_A", |r| r.q_a.is_some()),
    ("q_W", |r| r.q_w.is_some()),
    ("q_H", |r| r.q_h.is_some()),
    ("q_thm", |r| r.q_thm.is_some()),
];

fn py_str(s: &str) -> String {
    let escaped: String = s
        .chars()
        .flat_map(|c| match c {
            '\\' => vec!['\\', '\\'],
            '"' => vec!['\\', '"'],
            '\n' => vec!['\\', 'n'],
            c => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}

const PRELUDE: &str = r#"import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def load(name):
    with open(os.path.join(HERE, name), newline="") as fh:
        return list(csv.DictReader(fh))


def series(rows, key, positive=False):
    xs, ys = [], []
    for row in rows:
        if row[key] and (not positive or float(row[key]) > 0.0):
            xs.append(int(row["n"]))
            ys.append(float(row[key]))
    return xs, ys

"#;

/// Deterministic plotting script for the given runs.
pub fn emit_plot_script(runs: &[PlotRun<'_>], kind: PlotKind) -> Result<String, PlotError> {
    if runs.is_empty() {
        return Err(PlotError::NoRuns);
    }
    if let Some(r) = runs.iter().find(|r| r.table.rows.is_empty()) {
        return Err(PlotError::EmptyTable(r.label.to_string()));
    }
    let mut out = String::from("#!/usr/bin/env python3\n");
    let title = match kind {
        PlotKind::ErrorDecay => "Gradient error against iteration step.",
        PlotKind::EnergyDecay => "Energy error against iteration step.",
        PlotKind::Factors => "Energy error and contraction factors against iteration step.",
    };
    let _ = writeln!(out, "\"\"\"{title}\"\"\"");
    out.push_str(PRELUDE);
    out.push_str("RUNS = [\n");
    for r in runs {
        let _ = writeln!(out, "    ({}, {}),", py_str(r.label), py_str(r.csv));
    }
    out.push_str("]\n\n");
    match kind {
        PlotKind::ErrorDecay | PlotKind::EnergyDecay => {
            let (column, ylabel) = match kind {
                PlotKind::ErrorDecay => ("h1_error", "|| grad u^n - grad u* ||"),
                _ => ("energy_error", "E(u^n) - E(u*)"),
            };
            out.push_str("fig, ax = plt.subplots(figsize=(6.4, 4.8))\n");
            out.push_str("for label, name in RUNS:\n");
            let _ = writeln!(out, "    xs, ys = series(load(name), {}, positive=True)", py_str(column));
            out.push_str("    ax.semilogy(xs, ys, label=label)\n");
            out.push_str("ax.set_xlabel(\"iteration n\")\n");
            let _ = writeln!(out, "ax.set_ylabel({})", py_str(ylabel));
        }
        PlotKind::Factors => {
            // only columns that hold data in at least one run
            let columns: Vec<&str> = FACTOR_COLUMNS
                .iter()
                .filter(|(_, present)| runs.iter().any(|r| r.table.rows.iter().any(present)))
                .map(|(name, _)| *name)
                .collect();
            let list: Vec<String> = columns.iter().map(|c| py_str(c)).collect();
            let _ = writeln!(out, "FACTORS = [{}]", list.join(", "));
            out.push_str("fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 7.2))\n");
            out.push_str("for label, name in RUNS:\n");
            out.push_str("    rows = load(name)\n");
            out.push_str("    xs, ys = series(rows, \"energy_error\", positive=True)\n");
            out.push_str("    if ys:\n");
            out.push_str("        top.semilogy(xs, ys, label=label)\n");
            out.push_str("    for key in FACTORS:\n");
            out.push_str("        xs, ys = series(rows, key)\n");
            out.push_str("        if ys:\n");
            out.push_str("            bottom.plot(xs, ys, label=f\"{key} ({label})\" if len(RUNS) > 1 else key)\n");
            out.push_str("top.set_ylabel(\"E(u^n) - E(u*)\")\n");
            out.push_str("top.set_yscale(\"log\")\n");
            out.push_str("bottom.set_ylabel(\"contraction factor\")\n");
            out.push_str("bottom.set_xlabel(\"iteration n\")\n");
            out.push_str("bottom.legend(fontsize=\"small\")\n");
            out.push_str("ax = top\n");
        }
    }
    out.push_str("ax.legend(fontsize=\"small\")\n");
    out.push_str("fig.tight_layout()\n");
    out.push_str("fig.savefig(os.path.splitext(os.path.abspath(__file__))[0] + \".png\", dpi=150)\n");
    Ok(out)
}
