//! Plain-text payoff matrices.
//!
//! One row per line, entries separated by whitespace or commas, `#` starts a
//! comment. Entry `(a, b)` is the payoff to an agent playing `a` against `b`.

use std::path::Path;

use stagelearn_core::PayoffMatrix;

use crate::error::{CliError, Result};

pub const PRISONERS_DILEMMA: &str = include_str!("../data/prisoners_dilemma.txt");
pub const CLIMBING: &str = include_str!("../data/climbing.txt");

/// Parses matrix text; `origin` names the source in error messages.
pub fn parse_matrix(text: &str, origin: &str) -> Result<PayoffMatrix> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::Syntax {
                        path: origin.to_string(),
                        line: i + 1,
                        reason: format!("`{t}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    PayoffMatrix::new(rows).map_err(|e| CliError::Syntax {
        path: origin.to_string(),
        line: 0,
        reason: e.to_string(),
    })
}

/// Inline form used in configs and config echoes: rows separated by `;`.
pub fn parse_inline(text: &str, key: &str) -> Result<PayoffMatrix> {
    parse_matrix(&text.replace(';', "\n"), key)
}

pub fn to_inline(matrix: &PayoffMatrix) -> String {
    (0..matrix.size())
        .map(|r| {
            matrix
                .row(r)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn read_matrix(path: &Path) -> Result<PayoffMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix(&text, &path.display().to_string())
}
