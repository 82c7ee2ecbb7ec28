//! Long-short portfolio diagnostics: daily top/bottom-K weights, portfolio
//! returns and NAV, annualized return, Sharpe ratio, turnover, and maximum
//! drawdown.

use crate::engine::SignalMatrix;
use crate::error::{Error, Result};
use crate::panel::{is_missing, ReturnMatrix};
use crate::stats::{mean, sample_std};

/// Trading days per year used for annualization.
pub const DEFAULT_TRADING_DAYS: f64 = 252.0;

/// Daily long-short weights: per date, K entries at +1/K and K at -1/K.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    t: usize,
    n: usize,
    pub k: usize,
    /// Row-major (time, asset).
    values: Vec<f64>,
    /// Dates with fewer than 2K valid scores hold no positions.
    skipped: Vec<bool>,
}

impl WeightMatrix {
    pub fn num_dates(&self) -> usize {
        self.t
    }

    pub fn num_assets(&self) -> usize {
        self.n
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n..(t + 1) * self.n]
    }

    pub fn is_skipped(&self, t: usize) -> bool {
        self.skipped[t]
    }

    pub fn skipped_count(&self) -> usize {
        self.skipped.iter().filter(|s| **s).count()
    }
}

/// Build daily top/bottom-K long-short weights from a signal.
///
/// Valid scores are ordered descending; the top K go long at +1/K and the
/// bottom K short at -1/K. Boundary ties break by ascending asset index.
/// Dates with fewer than 2K valid scores produce an all-zero row flagged
/// as skipped.
pub fn build_weights(signal: &SignalMatrix, k: usize) -> Result<WeightMatrix> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let (t_len, n_len) = (signal.num_dates(), signal.num_assets());
    let mut values = vec![0.0; t_len * n_len];
    let mut skipped = vec![false; t_len];
    let mut order: Vec<usize> = Vec::with_capacity(n_len);
    for t in 0..t_len {
        let row = signal.row(t);
        order.clear();
        order.extend((0..n_len).filter(|&n| !is_missing(row[n])));
        if order.len() < 2 * k {
            skipped[t] = true;
            continue;
        }
        order.sort_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .expect("scores are non-missing")
                .then(a.cmp(&b))
        });
        let w = 1.0 / k as f64;
        for &n in &order[..k] {
            values[t * n_len + n] = w;
        }
        for &n in &order[order.len() - k..] {
            values[t * n_len + n] = -w;
        }
    }
    Ok(WeightMatrix {
        t: t_len,
        n: n_len,
        k,
        values,
        skipped,
    })
}

/// Daily portfolio returns and the cumulative net asset value path.
#[derive(Debug, Clone)]
pub struct PortfolioSeries {
    pub returns: Vec<f64>,
    /// nav[t] = prod_{i<=t} (1 + returns[i]), starting from 1.
    pub nav: Vec<f64>,
}

/// r_t = sum_n w_{t,n} * y_{t,n} over non-missing returns.
pub fn portfolio_returns(weights: &WeightMatrix, returns: &ReturnMatrix) -> Result<PortfolioSeries> {
    if weights.num_dates() != returns.num_dates() || weights.num_assets() != returns.num_assets() {
        return Err(Error::InvalidInput(format!(
            "weights are {}x{} but returns are {}x{}",
            weights.num_dates(),
            weights.num_assets(),
            returns.num_dates(),
            returns.num_assets()
        )));
    }
    let mut rets = Vec::with_capacity(weights.num_dates());
    for t in 0..weights.num_dates() {
        let w = weights.row(t);
        let y = returns.row(t);
        let mut r = 0.0;
        for n in 0..w.len() {
            if w[n] != 0.0 && !is_missing(y[n]) {
                r += w[n] * y[n];
            }
        }
        rets.push(r);
    }
    let mut nav = Vec::with_capacity(rets.len());
    let mut acc = 1.0;
    for r in &rets {
        acc *= 1.0 + r;
        nav.push(acc);
    }
    Ok(PortfolioSeries { returns: rets, nav })
}

/// Annualized return: mean daily return times D.
pub fn annualized_return(series: &PortfolioSeries, trading_days: f64) -> Result<f64> {
    if series.returns.is_empty() {
        return Err(Error::InsufficientData("no portfolio returns".into()));
    }
    Ok(mean(&series.returns) * trading_days)
}

/// Sharpe ratio with zero risk-free rate: (mean / sample std) * sqrt(D).
pub fn sharpe(series: &PortfolioSeries, trading_days: f64) -> Result<f64> {
    if series.returns.len() < 2 {
        return Err(Error::InsufficientData(
            "sharpe needs at least 2 returns".into(),
        ));
    }
    if series.returns.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::UndefinedSharpe);
    }
    let std = sample_std(&series.returns).expect("length checked");
    if std == 0.0 {
        return Err(Error::UndefinedSharpe);
    }
    Ok(mean(&series.returns) / std * trading_days.sqrt())
}

/// Mean l1 change in weights across consecutive dates.
pub fn turnover(weights: &WeightMatrix) -> Result<f64> {
    let t_len = weights.num_dates();
    if t_len < 2 {
        return Err(Error::InsufficientData(
            "turnover needs at least 2 dates".into(),
        ));
    }
    let mut total = 0.0;
    for t in 1..t_len {
        let (prev, cur) = (weights.row(t - 1), weights.row(t));
        total += prev
            .iter()
            .zip(cur)
            .map(|(a, b)| (b - a).abs())
            .sum::<f64>();
    }
    Ok(total / (t_len - 1) as f64)
}

/// Largest observed relative loss from a running NAV peak.
pub fn max_drawdown(series: &PortfolioSeries) -> Result<f64> {
    if series.nav.is_empty() {
        return Err(Error::InsufficientData("no nav points".into()));
    }
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0_f64;
    for (step, nav) in series.nav.iter().enumerate() {
        if *nav <= 0.0 {
            return Err(Error::BankruptPath { step });
        }
        peak = peak.max(*nav);
        worst = worst.max((peak - nav) / peak);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SignalMatrix;
    use chrono::NaiveDate;
    use std::sync::Arc;

    fn dates(n: usize) -> Arc<Vec<NaiveDate>> {
        Arc::new(
            (0..n)
                .map(|i| {
                    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(i as u64)
                })
                .collect(),
        )
    }

    fn assets(n: usize) -> Arc<Vec<String>> {
        Arc::new((0..n).map(|i| format!("A{i:02}")).collect())
    }

    fn signal(rows: &[&[f64]]) -> SignalMatrix {
        SignalMatrix::from_values(dates(rows.len()), assets(rows[0].len()), rows.concat()).unwrap()
    }

    fn returns(rows: &[&[f64]]) -> ReturnMatrix {
        ReturnMatrix::from_raw(1, dates(rows.len()), assets(rows[0].len()), rows.concat())
    }

    fn series(rets: &[f64]) -> PortfolioSeries {
        let mut nav = Vec::new();
        let mut acc = 1.0;
        for r in rets {
            acc *= 1.0 + r;
            nav.push(acc);
        }
        PortfolioSeries {
            returns: rets.to_vec(),
            nav,
        }
    }

    #[test]
    fn weights_basic_top_bottom() {
        let w = build_weights(&signal(&[&[4.0, 3.0, 2.0, 1.0]]), 1).unwrap();
        assert_eq!(w.row(0), &[1.0, 0.0, 0.0, -1.0]);
        assert!(!w.is_skipped(0));
    }

    #[test]
    fn weights_tie_break_is_deterministic() {
        let w = build_weights(&signal(&[&[5.0, 5.0, 5.0, 5.0]]), 1).unwrap();
        assert_eq!(w.row(0), &[1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn weights_skip_when_too_few_valid() {
        let w = build_weights(&signal(&[&[1.0, 2.0, 3.0, f64::NAN]]), 2).unwrap();
        assert!(w.is_skipped(0));
        assert_eq!(w.row(0), &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(w.skipped_count(), 1);
    }

    #[test]
    fn weights_are_argtop_invariant_under_monotone_transform() {
        let rows: Vec<Vec<f64>> = vec![
            vec![0.3, -0.2, 1.4, 0.9, -1.1],
            vec![-0.4, 0.8, 0.1, -0.9, 0.5],
        ];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let raw = build_weights(&signal(&refs), 2).unwrap();
        let warped_rows: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|v| (3.0 * v).exp()).collect()).collect();
        let warped_refs: Vec<&[f64]> = warped_rows.iter().map(|r| r.as_slice()).collect();
        let warped = build_weights(&signal(&warped_refs), 2).unwrap();
        for t in 0..2 {
            assert_eq!(raw.row(t), warped.row(t));
        }
    }

    #[test]
    fn fully_formed_rows_sum_zero_with_l1_norm_two() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 5.0, 3.0, 2.0, 4.0, 0.5]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        for k in 1..=3 {
            let w = build_weights(&signal(&refs), k).unwrap();
            let sum: f64 = w.row(0).iter().sum();
            let l1: f64 = w.row(0).iter().map(|v| v.abs()).sum();
            assert!(sum.abs() < 1e-15);
            assert!((l1 - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn portfolio_return_dot_product() {
        let w = build_weights(&signal(&[&[2.0, 1.0]]), 1).unwrap();
        let r = returns(&[&[0.02, -0.01]]);
        let p = portfolio_returns(&w, &r).unwrap();
        assert!((p.returns[0] - 0.03).abs() < 1e-15);
    }

    #[test]
    fn skipped_rows_contribute_zero() {
        let w = build_weights(&signal(&[&[1.0, f64::NAN]]), 1).unwrap();
        let r = returns(&[&[0.05, 0.01]]);
        let p = portfolio_returns(&w, &r).unwrap();
        assert_eq!(p.returns[0], 0.0);
        assert_eq!(p.nav[0], 1.0);
    }

    #[test]
    fn annualized_return_cases() {
        assert!((annualized_return(&series(&[0.001; 10]), 252.0).unwrap() - 0.252).abs() < 1e-12);
        assert_eq!(annualized_return(&series(&[0.0; 5]), 252.0).unwrap(), 0.0);
        let alternating: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert!(annualized_return(&series(&alternating), 252.0)
            .unwrap()
            .abs()
            < 1e-15);
    }

    #[test]
    fn sharpe_cases() {
        assert!(matches!(
            sharpe(&series(&[0.002; 30]), 252.0),
            Err(Error::UndefinedSharpe)
        ));
        let sr = sharpe(&series(&[0.01, -0.01]), 252.0).unwrap();
        assert_eq!(sr, 0.0);
    }

    #[test]
    fn turnover_hand_cases() {
        // (+1, 0, -1) -> (0, +1, -1): |dw| = 1 + 1 + 0 = 2
        let w = build_weights(&signal(&[&[3.0, 2.0, 1.0], &[2.0, 3.0, 1.0]]), 1).unwrap();
        assert!((turnover(&w).unwrap() - 2.0).abs() < 1e-15);
        // full long/short flip with K=1: l1 distance 4
        let w = build_weights(&signal(&[&[2.0, 1.0], &[1.0, 2.0]]), 1).unwrap();
        assert!((turnover(&w).unwrap() - 4.0).abs() < 1e-15);
        // identical weights every day: 0
        let w = build_weights(&signal(&[&[2.0, 1.0], &[2.0, 1.0], &[2.0, 1.0]]), 1).unwrap();
        assert_eq!(turnover(&w).unwrap(), 0.0);
    }

    #[test]
    fn max_drawdown_cases() {
        assert_eq!(max_drawdown(&series(&[0.01, 0.02, 0.005])).unwrap(), 0.0);
        let dd = max_drawdown(&series(&[0.10, -0.20])).unwrap();
        assert!((dd - 0.2).abs() < 1e-12);
        assert!(matches!(
            max_drawdown(&series(&[0.5, -1.5])),
            Err(Error::BankruptPath { step: 1 })
        ));
    }

    #[test]
    fn max_drawdown_matches_quadratic_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let rets: Vec<f64> = (0..100).map(|_| rng.gen_range(-0.05..0.05)).collect();
            let s = series(&rets);
            let fast = max_drawdown(&s).unwrap();
            let mut slow = 0.0_f64;
            for t in 0..s.nav.len() {
                for peak in 0..=t {
                    slow = slow.max((s.nav[peak] - s.nav[t]) / s.nav[peak]);
                }
            }
            assert!((fast - slow).abs() <= 1e-12);
        }
    }
}
