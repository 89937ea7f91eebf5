//! Per-sample best-of-perspectives oracle analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::Perspective;

use super::EvalError;

/// Rectangular correctness matrix: one row per sample, one column per
/// perspective, each cell recording whether that prediction was correct.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectnessMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<Perspective>,
    pub cells: Vec<Vec<bool>>,
}

impl CorrectnessMatrix {
    pub fn new(rows: Vec<String>, cols: Vec<Perspective>, cells: Vec<Vec<bool>>) -> Self {
        assert_eq!(rows.len(), cells.len(), "one cell row per sample");
        for row in &cells {
            assert_eq!(row.len(), cols.len(), "matrix must be rectangular");
        }
        CorrectnessMatrix { rows, cols, cells }
    }
}

/// Column accuracies, the any-perspective combined accuracy, and the gain
/// of combined over the baseline column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSummary {
    pub per_perspective: BTreeMap<Perspective, f64>,
    pub combined: f64,
    pub relative_gain: f64,
}

/// Combined accuracy counts a sample correct when any perspective hit.
///
/// The gain baseline is the `original` column if present, otherwise the best
/// single column.
pub fn oracle_combined(m: &CorrectnessMatrix) -> Result<OracleSummary, EvalError> {
    if m.rows.is_empty() || m.cols.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    let n = m.rows.len() as f64;
    let mut per_perspective = BTreeMap::new();
    for (j, col) in m.cols.iter().enumerate() {
        let correct = m.cells.iter().filter(|row| row[j]).count();
        per_perspective.insert(*col, correct as f64 / n);
    }
    let combined =
        m.cells.iter().filter(|row| row.iter().any(|&c| c)).count() as f64 / n;
    let baseline = per_perspective
        .get(&Perspective::Original)
        .copied()
        .unwrap_or_else(|| per_perspective.values().cloned().fold(0.0, f64::max));
    let relative_gain = if baseline == 0.0 {
        if combined == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (combined - baseline) / baseline
    };
    Ok(OracleSummary { per_perspective, combined, relative_gain })
}
