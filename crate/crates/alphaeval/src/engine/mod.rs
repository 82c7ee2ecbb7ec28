//! Expression evaluation over a panel: one T × N signal matrix per alpha.

mod kernels;

use std::sync::Arc;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::expr::AlphaExpr;
use crate::panel::{is_missing, Panel, MISSING};
use crate::parallel;

/// T × N alpha scores with missing cells.
///
/// The first `lookback(expr) - 1` rows are missing for every asset with a
/// fully populated history; all non-missing cells are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    dates: Arc<Vec<NaiveDate>>,
    assets: Arc<Vec<String>>,
    /// Row-major (time, asset): `values[t * N + n]`.
    values: Vec<f64>,
}

impl SignalMatrix {
    pub fn num_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn num_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn get(&self, t: usize, n: usize) -> f64 {
        self.values[t * self.num_assets() + n]
    }

    /// Cross-section at one date, length N.
    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.num_assets();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Build from raw parts; mostly useful for synthetic signals in tests
    /// and for signal combination.
    pub fn from_values(
        dates: Arc<Vec<NaiveDate>>,
        assets: Arc<Vec<String>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != dates.len() * assets.len() {
            return Err(Error::InvalidInput(format!(
                "signal matrix has {} cells, expected {}",
                values.len(),
                dates.len() * assets.len()
            )));
        }
        Ok(SignalMatrix {
            dates,
            assets,
            values,
        })
    }

    /// First row index holding a non-missing value in any column, if any.
    pub fn first_valid_row(&self) -> Option<usize> {
        (0..self.num_dates()).find(|t| self.row(*t).iter().any(|v| !is_missing(*v)))
    }

    /// True when every cell is missing.
    pub fn is_all_missing(&self) -> bool {
        self.values.iter().all(|v| is_missing(*v))
    }

    /// Serialize as `date,symbol,value` rows, skipping missing cells.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("date,symbol,value\n");
        for t in 0..self.num_dates() {
            for n in 0..self.num_assets() {
                let v = self.get(t, n);
                if !is_missing(v) {
                    let _ = writeln!(out, "{},{},{v}", self.dates[t], self.assets[n]);
                }
            }
        }
        out
    }
}

/// Evaluate an expression over the panel.
///
/// Numeric pathologies (division by zero, logs of non-positive values,
/// degenerate regressions) become missing cells rather than errors; the only
/// failure mode is referencing a feature the panel does not carry, which
/// `validate` catches up front.
pub fn evaluate(expr: &AlphaExpr, panel: &Panel) -> Result<SignalMatrix> {
    let t_len = panel.num_dates();
    let n_len = panel.num_assets();
    // Internal layout (asset, time) so rolling kernels see contiguous series.
    let nt = eval_node(expr, panel)?;
    let mut values = vec![MISSING; t_len * n_len];
    for n in 0..n_len {
        for t in 0..t_len {
            values[t * n_len + n] = nt[n * t_len + t];
        }
    }
    Ok(SignalMatrix {
        dates: panel.dates_arc(),
        assets: panel.assets_arc(),
        values,
    })
}

/// Evaluate a batch of expressions with a bounded worker pool.
///
/// Output order matches the input; results are identical to sequential
/// evaluation for any worker count.
pub fn evaluate_many(
    exprs: &[AlphaExpr],
    panel: &Panel,
    workers: usize,
) -> Vec<Result<SignalMatrix>> {
    parallel::map_indexed(exprs, workers, |_, e| evaluate(e, panel))
}

fn eval_node(expr: &AlphaExpr, panel: &Panel) -> Result<Vec<f64>> {
    let t_len = panel.num_dates();
    let n_len = panel.num_assets();
    match expr {
        AlphaExpr::Feature(name) => {
            let f = panel
                .feature_index(name)
                .ok_or_else(|| Error::MissingFeature { name: name.clone() })?;
            let mut out = Vec::with_capacity(n_len * t_len);
            for n in 0..n_len {
                out.extend_from_slice(panel.series(f, n));
            }
            Ok(out)
        }
        AlphaExpr::Constant(c) => Ok(vec![*c; n_len * t_len]),
        AlphaExpr::Unary { op, child } => {
            let mut x = eval_node(child, panel)?;
            for v in x.iter_mut() {
                *v = kernels::elementwise_unary(*op, *v);
            }
            Ok(x)
        }
        AlphaExpr::Binary { op, left, right } => {
            let mut x = eval_node(left, panel)?;
            let y = eval_node(right, panel)?;
            for (a, b) in x.iter_mut().zip(&y) {
                *a = kernels::elementwise_binary(*op, *a, *b);
            }
            Ok(x)
        }
        AlphaExpr::Shift { op, child, days } => {
            let x = eval_node(child, panel)?;
            let d = *days;
            let mut out = vec![MISSING; n_len * t_len];
            for n in 0..n_len {
                let series = &x[n * t_len..(n + 1) * t_len];
                let dst = &mut out[n * t_len..(n + 1) * t_len];
                for t in d..t_len {
                    let (past, today) = (series[t - d], series[t]);
                    dst[t] = match op {
                        crate::expr::ShiftOp::Ref => past,
                        crate::expr::ShiftOp::Delta => {
                            if is_missing(past) || is_missing(today) {
                                MISSING
                            } else {
                                today - past
                            }
                        }
                    };
                }
            }
            Ok(out)
        }
        AlphaExpr::Rolling { op, child, window } => {
            let x = eval_node(child, panel)?;
            let mut out = vec![MISSING; n_len * t_len];
            for n in 0..n_len {
                kernels::rolling_unary(
                    *op,
                    &x[n * t_len..(n + 1) * t_len],
                    *window,
                    &mut out[n * t_len..(n + 1) * t_len],
                );
            }
            Ok(out)
        }
        AlphaExpr::RollingBinary {
            op,
            left,
            right,
            window,
        } => {
            let x = eval_node(left, panel)?;
            let y = eval_node(right, panel)?;
            let mut out = vec![MISSING; n_len * t_len];
            for n in 0..n_len {
                kernels::rolling_binary(
                    *op,
                    &x[n * t_len..(n + 1) * t_len],
                    &y[n * t_len..(n + 1) * t_len],
                    *window,
                    &mut out[n * t_len..(n + 1) * t_len],
                );
            }
            Ok(out)
        }
    }
}
