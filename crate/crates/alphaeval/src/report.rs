//! Set-level aggregation: score normalization, the integrated score,
//! top-k selection, signal combination, NDCG ranking agreement, and
//! deterministic JSON report output.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::engine::SignalMatrix;
use crate::error::{Error, Result};
use crate::metrics::DimensionScores;
use crate::panel::is_missing;
use crate::stats::average_ranks;

/// One alpha's row in the report.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaRecord {
    pub expression: String,
    pub pps: Option<f64>,
    pub ic: Option<f64>,
    pub rank_ic: Option<f64>,
    pub icir: Option<f64>,
    pub rre: Option<f64>,
    pub pfs: Option<f64>,
    pub logic: Option<f64>,
    pub integrated: Option<f64>,
    pub diagnostics: Vec<String>,
}

impl AlphaRecord {
    pub fn from_scores(expression: String, scores: &DimensionScores) -> Self {
        AlphaRecord {
            expression,
            pps: scores.pps,
            ic: scores.ic,
            rank_ic: scores.rank_ic,
            icir: scores.icir,
            rre: scores.rre,
            pfs: scores.pfs,
            logic: scores.logic,
            integrated: None,
            diagnostics: scores.diagnostics.clone(),
        }
    }
}

/// Full evaluation report: per-alpha rows plus set-level fields and the
/// configuration echo that makes the run reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub config: serde_json::Value,
    pub alphas: Vec<AlphaRecord>,
    pub set: SetScores,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SetScores {
    pub dh: Option<f64>,
    pub dh_note: Option<String>,
    pub logic_mean: Option<f64>,
    pub alphas_submitted: usize,
    pub alphas_scored: usize,
}

/// Per-alpha normalized dimension values in [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormalizedScores {
    pub pps: Option<f64>,
    pub rre: Option<f64>,
    pub pfs: Option<f64>,
    pub dh: Option<f64>,
    pub logic: Option<f64>,
}

/// Min-max normalize each dimension across the set; a constant (degenerate)
/// column maps to 0.5 everywhere. Logic is divided by 100 instead (its scale
/// is anchored by the prompt), and dh is set-level so it always degenerates
/// to 0.5.
pub fn normalize_scores(records: &[DimensionScores]) -> Vec<NormalizedScores> {
    let mut out = vec![NormalizedScores::default(); records.len()];
    let columns: [(fn(&DimensionScores) -> Option<f64>, usize); 4] = [
        (|r| r.pps, 0),
        (|r| r.rre, 1),
        (|r| r.pfs, 2),
        (|r| r.dh, 3),
    ];
    for (getter, which) in columns {
        let present: Vec<f64> = records.iter().filter_map(getter).collect();
        if present.is_empty() {
            continue;
        }
        let min = present.iter().copied().fold(f64::INFINITY, f64::min);
        let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (rec, norm) in records.iter().zip(out.iter_mut()) {
            if let Some(v) = getter(rec) {
                let scaled = if max > min { (v - min) / (max - min) } else { 0.5 };
                match which {
                    0 => norm.pps = Some(scaled),
                    1 => norm.rre = Some(scaled),
                    2 => norm.pfs = Some(scaled),
                    _ => norm.dh = Some(scaled),
                }
            }
        }
    }
    for (rec, norm) in records.iter().zip(out.iter_mut()) {
        norm.logic = rec.logic.map(|v| (v / 100.0).clamp(0.0, 1.0));
    }
    out
}

/// Weights over the five dimensions (pps, rre, pfs, dh, logic).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DimensionWeights {
    pub pps: f64,
    pub rre: f64,
    pub pfs: f64,
    pub dh: f64,
    pub logic: f64,
}

impl Default for DimensionWeights {
    fn default() -> Self {
        DimensionWeights {
            pps: 0.2,
            rre: 0.2,
            pfs: 0.2,
            dh: 0.2,
            logic: 0.2,
        }
    }
}

impl DimensionWeights {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.pps, self.rre, self.pfs, self.dh, self.logic];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "dimension weights must be nonnegative".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "dimension weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Weighted sum of normalized dimensions; weights on absent dimensions are
/// redistributed proportionally over the present ones.
pub fn alphaeval_score(norm: &NormalizedScores, weights: &DimensionWeights) -> Result<f64> {
    weights.validate()?;
    let pairs = [
        (norm.pps, weights.pps),
        (norm.rre, weights.rre),
        (norm.pfs, weights.pfs),
        (norm.dh, weights.dh),
        (norm.logic, weights.logic),
    ];
    let mut total_weight = 0.0;
    let mut acc = 0.0;
    for (value, weight) in pairs {
        if let Some(v) = value {
            total_weight += weight;
            acc += weight * v;
        }
    }
    if total_weight <= 0.0 {
        return Err(Error::InvalidInput(
            "no dimensions available for the integrated score".into(),
        ));
    }
    Ok(acc / total_weight)
}

/// Selection key for top-k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectBy {
    Pps,
    Rre,
    Pfs,
    Logic,
    Integrated,
}

impl std::str::FromStr for SelectBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pps" => Ok(SelectBy::Pps),
            "rre" => Ok(SelectBy::Rre),
            "pfs" => Ok(SelectBy::Pfs),
            "logic" => Ok(SelectBy::Logic),
            "integrated" => Ok(SelectBy::Integrated),
            other => Err(Error::InvalidParameter(format!(
                "unknown selection key `{other}` (expected pps|rre|pfs|logic|integrated)"
            ))),
        }
    }
}

fn key_of(record: &AlphaRecord, by: SelectBy) -> Option<f64> {
    match by {
        SelectBy::Pps => record.pps,
        SelectBy::Rre => record.rre,
        SelectBy::Pfs => record.pfs,
        SelectBy::Logic => record.logic,
        SelectBy::Integrated => record.integrated,
    }
}

/// Indices of the top-k records by the chosen key, descending; records
/// without the key sort last, ties break by expression text ascending.
pub fn select_top(records: &[AlphaRecord], k: usize, by: SelectBy) -> Result<Vec<usize>> {
    if k == 0 || k > records.len() {
        return Err(Error::InvalidInput(format!(
            "cannot select top {k} of {} records",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = key_of(&records[a], by).unwrap_or(f64::NEG_INFINITY);
        let kb = key_of(&records[b], by).unwrap_or(f64::NEG_INFINITY);
        kb.partial_cmp(&ka)
            .expect("keys are finite or -inf")
            .then_with(|| records[a].expression.cmp(&records[b].expression))
    });
    order.truncate(k);
    Ok(order)
}

/// Equal-weight combination of per-date z-scored member signals.
///
/// Per member and date, the cross-section is standardized over its valid
/// cells (dates with fewer than 2 valid cells or zero spread are skipped for
/// that member); each output cell averages the available standardized
/// values and is missing only where every member is missing.
pub fn combine_signals(signals: &[&SignalMatrix]) -> Result<SignalMatrix> {
    if signals.is_empty() {
        return Err(Error::InvalidInput("no signals to combine".into()));
    }
    let (t_len, n_len) = (signals[0].num_dates(), signals[0].num_assets());
    for s in signals {
        if s.num_dates() != t_len || s.num_assets() != n_len {
            return Err(Error::InvalidInput(
                "combine_signals needs identically shaped signals".into(),
            ));
        }
    }
    let mut acc = vec![0.0_f64; t_len * n_len];
    let mut count = vec![0u32; t_len * n_len];
    for s in signals {
        for t in 0..t_len {
            let row = s.row(t);
            let valid: Vec<f64> = row.iter().copied().filter(|v| !is_missing(*v)).collect();
            if valid.len() < 2 {
                continue;
            }
            let mean = valid.iter().sum::<f64>() / valid.len() as f64;
            let var = valid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (valid.len() as f64 - 1.0);
            if var == 0.0 {
                continue;
            }
            let std = var.sqrt();
            for n in 0..n_len {
                if !is_missing(row[n]) {
                    acc[t * n_len + n] += (row[n] - mean) / std;
                    count[t * n_len + n] += 1;
                }
            }
        }
    }
    let values: Vec<f64> = acc
        .iter()
        .zip(&count)
        .map(|(a, c)| if *c > 0 { a / *c as f64 } else { f64::NAN })
        .collect();
    SignalMatrix::from_values(
        Arc::new(signals[0].dates().to_vec()),
        Arc::new(signals[0].assets().to_vec()),
        values,
    )
}

/// NDCG@k agreement between a candidate ranking (`scores_a`) and a reference
/// (`scores_b`), with relevance = rank-normalized reference scores.
pub fn rank_agreement(scores_a: &[f64], scores_b: &[f64], k: usize) -> Result<f64> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::InvalidInput(format!(
            "ranking lengths differ: {} vs {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    let n = scores_a.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    let relevance: Vec<f64> = average_ranks(scores_b)
        .iter()
        .map(|r| r / n as f64)
        .collect();
    let order = |scores: &[f64]| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("finite scores")
                .then(a.cmp(&b))
        });
        idx
    };
    let dcg = |idx: &[usize]| -> f64 {
        idx.iter()
            .take(k)
            .enumerate()
            .map(|(j, &i)| relevance[i] / ((j + 2) as f64).log2())
            .sum()
    };
    let dcg_a = dcg(&order(scores_a));
    let idcg = dcg(&order(&relevance));
    Ok(dcg_a / idcg)
}

/// Render a value as canonical JSON: keys sorted, floats rounded to six
/// significant digits, so identical runs produce byte-identical files.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let rounded = round_floats(value);
    serde_json::to_string_pretty(&rounded).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = canonical_json(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn round_floats(value: serde_json::Value) -> serde_json::Value {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    return serde_json::Number::from_f64(round_sig(f, 6))
                        .map(serde_json::Value::Number)
                        .unwrap_or(serde_json::Value::Null);
                }
            }
            serde_json::Value::Number(n)
        }
        serde_json::Value::Array(items) => {
            serde_json::Value::Array(items.into_iter().map(round_floats).collect())
        }
        serde_json::Value::Object(map) => serde_json::Value::Object(
            map.into_iter().map(|(k, v)| (k, round_floats(v))).collect(),
        ),
        other => other,
    }
}

/// Round to `digits` significant digits.
fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - magnitude);
    (x * factor).round() / factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn scores(pps: Option<f64>, rre: Option<f64>, pfs: Option<f64>, logic: Option<f64>) -> DimensionScores {
        DimensionScores {
            pps,
            rre,
            pfs,
            dh: Some(0.9),
            logic,
            ..DimensionScores::default()
        }
    }

    #[test]
    fn normalize_min_max_endpoints() {
        let recs = vec![
            scores(Some(0.01), Some(0.8), None, Some(70.0)),
            scores(Some(0.03), Some(0.8), None, Some(40.0)),
        ];
        let norm = normalize_scores(&recs);
        assert_eq!(norm[0].pps, Some(0.0));
        assert_eq!(norm[1].pps, Some(1.0));
        // constant column degenerates to 0.5
        assert_eq!(norm[0].rre, Some(0.5));
        assert_eq!(norm[1].rre, Some(0.5));
        // dh column is set-level constant
        assert_eq!(norm[0].dh, Some(0.5));
        // logic uses the absolute scale
        assert_eq!(norm[0].logic, Some(0.70));
        assert_eq!(norm[1].logic, Some(0.40));
        assert_eq!(norm[0].pfs, None);
    }

    #[test]
    fn integrated_score_cases() {
        let w = DimensionWeights::default();
        let all_one = NormalizedScores {
            pps: Some(1.0),
            rre: Some(1.0),
            pfs: Some(1.0),
            dh: Some(1.0),
            logic: Some(1.0),
        };
        assert!((alphaeval_score(&all_one, &w).unwrap() - 1.0).abs() < 1e-15);

        let mixed = NormalizedScores {
            pps: Some(1.0),
            rre: Some(0.0),
            pfs: Some(1.0),
            dh: Some(0.0),
            logic: Some(1.0),
        };
        assert!((alphaeval_score(&mixed, &w).unwrap() - 0.6).abs() < 1e-15);

        let absent_pfs = NormalizedScores {
            pps: Some(1.0),
            rre: Some(1.0),
            pfs: None,
            dh: Some(1.0),
            logic: Some(1.0),
        };
        assert!((alphaeval_score(&absent_pfs, &w).unwrap() - 1.0).abs() < 1e-15);

        let empty = NormalizedScores::default();
        assert!(alphaeval_score(&empty, &w).is_err());

        let bad = DimensionWeights {
            pps: 0.5,
            rre: 0.5,
            pfs: 0.5,
            dh: 0.0,
            logic: 0.0,
        };
        assert!(alphaeval_score(&all_one, &bad).is_err());
    }

    fn record(expr: &str, integrated: Option<f64>) -> AlphaRecord {
        AlphaRecord {
            expression: expr.into(),
            pps: None,
            ic: None,
            rank_ic: None,
            icir: None,
            rre: None,
            pfs: None,
            logic: None,
            integrated,
            diagnostics: Vec::new(),
        }
    }

    #[test]
    fn select_top_cases() {
        let recs = vec![
            record("b", Some(0.5)),
            record("a", Some(0.9)),
            record("c", Some(0.7)),
        ];
        assert_eq!(
            select_top(&recs, 3, SelectBy::Integrated).unwrap(),
            vec![1, 2, 0]
        );
        assert_eq!(select_top(&recs, 1, SelectBy::Integrated).unwrap(), vec![1]);
        assert!(select_top(&recs, 4, SelectBy::Integrated).is_err());
        assert!(select_top(&recs, 0, SelectBy::Integrated).is_err());

        // tie-break by expression text ascending
        let tied = vec![
            record("zeta", Some(0.5)),
            record("alpha", Some(0.5)),
            record("mid", Some(0.5)),
        ];
        assert_eq!(
            select_top(&tied, 2, SelectBy::Integrated).unwrap(),
            vec![1, 2]
        );
    }

    fn sig(rows: &[&[f64]]) -> SignalMatrix {
        let dates: Vec<NaiveDate> = (0..rows.len())
            .map(|i| NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(i as u64))
            .collect();
        let assets: Vec<String> = (0..rows[0].len()).map(|i| format!("A{i}")).collect();
        SignalMatrix::from_values(Arc::new(dates), Arc::new(assets), rows.concat()).unwrap()
    }

    #[test]
    fn combine_single_signal_is_its_zscores() {
        let s = sig(&[&[1.0, 2.0, 3.0]]);
        let c = combine_signals(&[&s]).unwrap();
        assert!((c.get(0, 0) + 1.0).abs() < 1e-12);
        assert!(c.get(0, 1).abs() < 1e-12);
        assert!((c.get(0, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combine_duplicate_is_idempotent() {
        let s = sig(&[&[1.0, 4.0, 2.0], &[3.0, 1.0, 2.0]]);
        let one = combine_signals(&[&s]).unwrap();
        let two = combine_signals(&[&s, &s]).unwrap();
        for t in 0..2 {
            for n in 0..3 {
                assert!((one.get(t, n) - two.get(t, n)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn combine_anti_correlated_cancels() {
        let s = sig(&[&[1.0, 4.0, 2.0], &[3.0, 1.0, 2.0]]);
        let neg = sig(&[&[-1.0, -4.0, -2.0], &[-3.0, -1.0, -2.0]]);
        let c = combine_signals(&[&s, &neg]).unwrap();
        for t in 0..2 {
            for n in 0..3 {
                assert_eq!(c.get(t, n), 0.0);
            }
        }
    }

    #[test]
    fn combine_order_invariant() {
        let a = sig(&[&[1.0, 4.0, 2.0]]);
        let b = sig(&[&[0.5, 0.1, 0.9]]);
        let ab = combine_signals(&[&a, &b]).unwrap();
        let ba = combine_signals(&[&b, &a]).unwrap();
        for n in 0..3 {
            assert_eq!(ab.get(0, n), ba.get(0, n));
        }
    }

    #[test]
    fn ndcg_identity_and_top1() {
        let b = [0.1, 0.5, 0.3, 0.9];
        assert_eq!(rank_agreement(&b, &b, 4).unwrap(), 1.0);
        assert_eq!(rank_agreement(&b, &b, 1).unwrap(), 1.0);
        // different tails but same argmax -> NDCG@1 = 1
        let a = [0.2, 0.1, 0.3, 0.9];
        assert_eq!(rank_agreement(&a, &b, 1).unwrap(), 1.0);
        assert!(rank_agreement(&a, &b[..3], 2).is_err());
    }

    #[test]
    fn ndcg_reversed_hand_value() {
        // reference scores (1,2,3): relevance = (1/3, 2/3, 1).
        // candidate reversed: order (item0, item1, item2) by desc a = (3,2,1)
        // -> picks items 0,1,2 i.e. relevances (1/3, 2/3, 1).
        // DCG = (1/3)/log2(2) + (2/3)/log2(3) + 1/log2(4)
        // IDCG = 1/log2(2) + (2/3)/log2(3) + (1/3)/log2(4)
        let a = [3.0, 2.0, 1.0];
        let b = [1.0, 2.0, 3.0];
        let dcg = 1.0 / 3.0 + (2.0 / 3.0) / 3.0_f64.log2() + 1.0 / 2.0;
        let idcg = 1.0 + (2.0 / 3.0) / 3.0_f64.log2() + (1.0 / 3.0) / 2.0;
        let expected = dcg / idcg;
        let got = rank_agreement(&a, &b, 3).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, expected {expected}");
    }

    #[test]
    fn report_json_is_deterministic_and_rounded() {
        let report = MetricReport {
            config: serde_json::json!({"beta": 0.5, "seed": 42}),
            alphas: vec![AlphaRecord {
                expression: "Mean(close, 5)".into(),
                pps: Some(0.0123456789),
                ic: Some(0.01),
                rank_ic: Some(0.0147),
                icir: None,
                rre: Some(0.91234567),
                pfs: None,
                logic: None,
                integrated: Some(0.5),
                diagnostics: vec!["pfs: skipped".into()],
            }],
            set: SetScores {
                dh: Some(0.87654321),
                dh_note: None,
                logic_mean: None,
                alphas_submitted: 1,
                alphas_scored: 1,
            },
        };
        let a = canonical_json(&report).unwrap();
        let b = canonical_json(&report).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("0.0123457"));
        assert!(a.contains("0.912346"));
        // keys sorted
        let pps_pos = a.find("\"pps\"").unwrap();
        let ic_pos = a.find("\"ic\"").unwrap();
        assert!(ic_pos < pps_pos);
    }

    #[test]
    fn write_report_fails_on_unwritable_path() {
        let report = MetricReport {
            config: serde_json::json!({}),
            alphas: vec![],
            set: SetScores::default(),
        };
        let err = write_report(&report, "/nonexistent-dir/report.json");
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn round_sig_behaves() {
        assert_eq!(round_sig(0.0123456789, 6), 0.0123457);
        assert_eq!(round_sig(123456789.0, 6), 123457000.0);
        assert_eq!(round_sig(-0.000123456449, 6), -0.000123456);
        assert_eq!(round_sig(0.0, 6), 0.0);
    }
}
