//! Policy surfaces on rectangular state grids.

use emc_core::{ControlProblem, EmcError, Result};

use crate::output::{num, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    /// Index of the state coordinate this axis moves.
    pub coord: usize,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(name: &str, coord: usize, lo: f64, hi: f64, points: usize) -> Self {
        GridAxis {
            name: name.into(),
            coord,
            lo,
            hi,
            points,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        (0..self.points)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub period: usize,
    /// State used for every coordinate no axis moves.
    pub base_state: Vec<f64>,
    pub axes: Vec<GridAxis>,
}

/// A named quantity evaluated at `(t, state)`.
pub struct GridColumn<'a> {
    pub name: String,
    pub eval: Box<dyn Fn(usize, &[f64]) -> f64 + 'a>,
}

impl<'a> GridColumn<'a> {
    pub fn new(name: impl Into<String>, eval: impl Fn(usize, &[f64]) -> f64 + 'a) -> Self {
        GridColumn {
            name: name.into(),
            eval: Box::new(eval),
        }
    }
}

/// Evaluates `columns` on the cartesian product of the axes at `spec.period`.
/// Rows run over the last axis fastest.
pub fn emit_policy_grid(problem: &ControlProblem, spec: &GridSpec, columns: &[GridColumn<'_>]) -> Result<Table> {
    if spec.period >= problem.horizon() {
        return Err(EmcError::InvalidArgument(format!(
            "grid period {} outside 0..{}",
            spec.period,
            problem.horizon()
        )));
    }
    if spec.base_state.len() != problem.state_dim() {
        return Err(EmcError::InvalidArgument("grid base state has the wrong dimension".into()));
    }
    if spec.axes.is_empty() || spec.axes.iter().any(|a| a.points == 0 || a.coord >= problem.state_dim()) {
        return Err(EmcError::InvalidArgument("grid axes must move valid coordinates with at least one point".into()));
    }
    let mut header = vec!["t".to_string()];
    header.extend(spec.axes.iter().map(|a| a.name.clone()));
    header.extend(columns.iter().map(|c| c.name.clone()));
    let mut table = Table::new(header);
    let values: Vec<Vec<f64>> = spec.axes.iter().map(GridAxis::values).collect();
    let mut idx = vec![0usize; spec.axes.len()];
    let mut state = spec.base_state.clone();
    loop {
        let mut row = vec![spec.period.to_string()];
        for (a, axis) in spec.axes.iter().enumerate() {
            state[axis.coord] = values[a][idx[a]];
            row.push(num(values[a][idx[a]]));
        }
        row.extend(columns.iter().map(|c| num((c.eval)(spec.period, &state))));
        table.push(row);
        // odometer over the axes
        let mut a = spec.axes.len();
        loop {
            if a == 0 {
                return Ok(table);
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < values[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
}
