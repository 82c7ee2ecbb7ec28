//! The five evaluation dimensions: predictive power (IC / RankIC / PPS),
//! temporal stability (RRE), robustness (PFS), diversity (DH), plus the
//! ICIR utility. The logic dimension lives in [`crate::logic`].

use nalgebra::DMatrix;

use crate::engine::{evaluate, SignalMatrix};
use crate::error::{Error, Result};
use crate::expr::AlphaExpr;
use crate::panel::{is_missing, NoiseSpec, Panel, ReturnMatrix};
use crate::seed;
use crate::stats::{average_ranks, mean, pearson, sample_std, spearman};

/// Correlation flavor for per-date cross-sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrKind {
    Pearson,
    Spearman,
}

/// Per-date correlation values over the usable dates, with skip accounting.
#[derive(Debug, Clone)]
pub struct PerDateSeries {
    /// One correlation per usable date, in date order.
    pub values: Vec<f64>,
    /// Dates skipped for too few jointly valid pairs or zero variance.
    pub skipped: usize,
}

impl PerDateSeries {
    pub fn mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            None
        } else {
            Some(mean(&self.values))
        }
    }
}

/// Cross-sectional correlation between two matrices, date by date.
///
/// Only jointly non-missing pairs enter each date's correlation; dates with
/// fewer than two pairs or a zero-variance side are skipped and counted.
pub fn per_date_correlation(
    signal: &SignalMatrix,
    returns: &ReturnMatrix,
    kind: CorrKind,
) -> Result<PerDateSeries> {
    if signal.num_dates() != returns.num_dates() || signal.num_assets() != returns.num_assets() {
        return Err(Error::InvalidInput(format!(
            "signal is {}x{} but returns are {}x{}",
            signal.num_dates(),
            signal.num_assets(),
            returns.num_dates(),
            returns.num_assets()
        )));
    }
    let mut values = Vec::new();
    let mut skipped = 0usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in 0..signal.num_dates() {
        xs.clear();
        ys.clear();
        let srow = signal.row(t);
        let rrow = returns.row(t);
        for n in 0..srow.len() {
            if !is_missing(srow[n]) && !is_missing(rrow[n]) {
                xs.push(srow[n]);
                ys.push(rrow[n]);
            }
        }
        let corr = match kind {
            CorrKind::Pearson => pearson(&xs, &ys),
            CorrKind::Spearman => spearman(&xs, &ys),
        };
        match corr {
            Some(c) => values.push(c),
            None => skipped += 1,
        }
    }
    Ok(PerDateSeries { values, skipped })
}

/// Information Coefficient: mean per-date Pearson correlation between alpha
/// scores and forward returns.
pub fn ic(signal: &SignalMatrix, returns: &ReturnMatrix) -> Result<f64> {
    ic_series(signal, returns)?
        .mean()
        .ok_or_else(|| Error::InsufficientData("no usable dates for IC".into()))
}

pub fn ic_series(signal: &SignalMatrix, returns: &ReturnMatrix) -> Result<PerDateSeries> {
    per_date_correlation(signal, returns, CorrKind::Pearson)
}

/// RankIC: mean per-date Spearman correlation (average ranks, then Pearson).
pub fn rank_ic(signal: &SignalMatrix, returns: &ReturnMatrix) -> Result<f64> {
    rank_ic_series(signal, returns)?
        .mean()
        .ok_or_else(|| Error::InsufficientData("no usable dates for RankIC".into()))
}

pub fn rank_ic_series(signal: &SignalMatrix, returns: &ReturnMatrix) -> Result<PerDateSeries> {
    per_date_correlation(signal, returns, CorrKind::Spearman)
}

/// ICIR: mean of the per-date ICs over their sample standard deviation.
pub fn icir(per_date_ics: &[f64]) -> Result<f64> {
    if per_date_ics.len() < 2 {
        return Err(Error::InsufficientData(
            "icir needs at least 2 per-date ICs".into(),
        ));
    }
    if per_date_ics.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::UndefinedIcir);
    }
    let std = sample_std(per_date_ics).expect("length checked");
    if std == 0.0 {
        return Err(Error::UndefinedIcir);
    }
    Ok(mean(per_date_ics) / std)
}

/// Predictive Power Score: `beta * IC + (1 - beta) * RankIC`.
pub fn pps(signal: &SignalMatrix, returns: &ReturnMatrix, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    Ok(beta * ic(signal, returns)? + (1.0 - beta) * rank_ic(signal, returns)?)
}

/// Rank-derived discrete distribution over one cross-section.
///
/// Ranks ascend (1 = lowest) with ties averaged; probabilities are ranks
/// normalized by their sum.
#[derive(Debug, Clone)]
pub struct RankDistribution {
    pub probabilities: Vec<f64>,
}

pub fn rank_distribution(scores: &[f64]) -> Result<RankDistribution> {
    if scores.is_empty() || scores.iter().any(|v| is_missing(*v)) {
        return Err(Error::InvalidInput(
            "rank distribution needs a non-empty, fully valid cross-section".into(),
        ));
    }
    let ranks = average_ranks(scores);
    let total: f64 = ranks.iter().sum();
    Ok(RankDistribution {
        probabilities: ranks.iter().map(|r| r / total).collect(),
    })
}

/// KL divergence between two strictly positive discrete distributions on the
/// same support, in nats. Tiny negative round-off is clamped to zero.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let kl: f64 = p
        .iter()
        .zip(q)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum();
    debug_assert!(kl > -1e-9, "KL should be nonnegative, got {kl}");
    kl.max(0.0)
}

/// Relative Rank Entropy: mean over consecutive date pairs of
/// `1 / (1 + KL(p_t || p_{t-1}))` where p are rank-derived distributions
/// over the assets valid on both dates.
pub fn rre(signal: &SignalMatrix) -> Result<f64> {
    let mut terms = Vec::new();
    let mut prev_scores: Vec<f64> = Vec::new();
    let mut cur_scores: Vec<f64> = Vec::new();
    for t in 1..signal.num_dates() {
        let prev = signal.row(t - 1);
        let cur = signal.row(t);
        prev_scores.clear();
        cur_scores.clear();
        for n in 0..cur.len() {
            if !is_missing(prev[n]) && !is_missing(cur[n]) {
                prev_scores.push(prev[n]);
                cur_scores.push(cur[n]);
            }
        }
        if cur_scores.len() < 2 {
            continue;
        }
        let p_cur = rank_distribution(&cur_scores)?.probabilities;
        let p_prev = rank_distribution(&prev_scores)?.probabilities;
        let kl = kl_divergence(&p_cur, &p_prev);
        terms.push(1.0 / (1.0 + kl));
    }
    if terms.is_empty() {
        return Err(Error::InsufficientData(
            "rre needs at least one consecutive date pair with 2+ common valid assets".into(),
        ));
    }
    Ok(mean(&terms))
}

/// Perturbation settings for one PFS computation: a Gaussian and a
/// Student-t family at the same target standard deviation.
#[derive(Debug, Clone, Copy)]
pub struct PfsConfig {
    pub sigma: f64,
    pub nu: f64,
    pub trials: usize,
    pub seed: u64,
}

impl PfsConfig {
    pub fn new(sigma: f64, nu: f64, trials: usize, seed: u64) -> Self {
        PfsConfig {
            sigma,
            nu,
            trials,
            seed,
        }
    }
}

/// Perturbation Fidelity Score for one expression:
/// `min(PFS_gaussian, PFS_student_t)`, each family averaged over `trials`
/// independent perturbation seeds of the mean per-date Spearman correlation
/// between original and perturbed signals.
pub fn pfs(expr: &AlphaExpr, panel: &Panel, cfg: &PfsConfig) -> Result<f64> {
    let base = evaluate(expr, panel)?;
    pfs_with_base(expr, panel, &base, cfg)
}

/// As [`pfs`], reusing an already evaluated unperturbed signal.
pub fn pfs_with_base(
    expr: &AlphaExpr,
    panel: &Panel,
    base: &SignalMatrix,
    cfg: &PfsConfig,
) -> Result<f64> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("pfs needs trials >= 1".into()));
    }
    let gaussian = NoiseSpec::gaussian(cfg.sigma, 0);
    let student = NoiseSpec::student_t(cfg.sigma, cfg.nu, 0);
    gaussian.validate()?;
    student.validate()?;
    let g = pfs_family(expr, panel, base, gaussian, cfg.trials, cfg.seed, "pfs-gaussian")?;
    let t = pfs_family(expr, panel, base, student, cfg.trials, cfg.seed, "pfs-student-t")?;
    Ok(g.min(t))
}

fn pfs_family(
    expr: &AlphaExpr,
    panel: &Panel,
    base: &SignalMatrix,
    spec: NoiseSpec,
    trials: usize,
    root_seed: u64,
    tag: &str,
) -> Result<f64> {
    let mut trial_means = Vec::with_capacity(trials);
    for k in 0..trials {
        let spec = spec.with_seed(seed::derive(root_seed, tag, k as u64));
        let perturbed_panel = panel.perturb(&spec)?;
        let perturbed = evaluate(expr, &perturbed_panel)?;
        let mut per_date = Vec::new();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for t in 0..base.num_dates() {
            let brow = base.row(t);
            let prow = perturbed.row(t);
            xs.clear();
            ys.clear();
            for n in 0..brow.len() {
                if !is_missing(brow[n]) && !is_missing(prow[n]) {
                    xs.push(brow[n]);
                    ys.push(prow[n]);
                }
            }
            // Degenerate (constant or tiny) cross-sections are skipped.
            if let Some(c) = spearman(&xs, &ys) {
                per_date.push(c);
            }
        }
        if !per_date.is_empty() {
            trial_means.push(mean(&per_date));
        }
    }
    if trial_means.is_empty() {
        return Err(Error::InsufficientData(format!(
            "pfs ({tag}): every date degenerate in all {trials} trials"
        )));
    }
    Ok(mean(&trial_means))
}

/// Diversity Entropy of an alpha set: normalized Shannon entropy of the
/// eigenvalue spectrum of the signals' covariance matrix over jointly valid
/// cells. 0 means perfectly collinear, 1 maximally diverse.
pub fn diversity_entropy(signals: &[&SignalMatrix]) -> Result<f64> {
    let m = signals.len();
    if m < 2 {
        return Err(Error::InvalidInput(
            "diversity entropy needs at least 2 signals (log m = 0 at m = 1)".into(),
        ));
    }
    let cells = signals[0].num_dates() * signals[0].num_assets();
    for s in signals {
        if s.num_dates() * s.num_assets() != cells {
            return Err(Error::InvalidInput(
                "diversity entropy needs signals with identical shapes".into(),
            ));
        }
    }
    // Flatten over cells where every signal is valid.
    let mut joint: Vec<usize> = Vec::new();
    for i in 0..cells {
        if signals.iter().all(|s| !is_missing(s.values()[i])) {
            joint.push(i);
        }
    }
    if joint.len() < m + 1 {
        return Err(Error::InsufficientData(format!(
            "diversity entropy needs more than {m} jointly valid cells, got {}",
            joint.len()
        )));
    }
    let k = joint.len() as f64;
    let means: Vec<f64> = signals
        .iter()
        .map(|s| joint.iter().map(|&i| s.values()[i]).sum::<f64>() / k)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let (va, vb) = (signals[a].values(), signals[b].values());
            let c: f64 = joint
                .iter()
                .map(|&i| (va[i] - means[a]) * (vb[i] - means[b]))
                .sum::<f64>()
                / (k - 1.0);
            cov[(a, b)] = c;
            cov[(b, a)] = c;
        }
    }
    let eigen = cov.symmetric_eigen();
    // PSD up to round-off: clamp small negative eigenvalues at zero.
    let lambdas: Vec<f64> = eigen.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateCovariance);
    }
    let entropy: f64 = lambdas
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| {
            let p = l / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy / (m as f64).ln())
}

/// Per-alpha scores along the evaluation dimensions. `dh` is set-level and
/// repeated on every member; absent entries were not computable and carry an
/// explanation in `diagnostics`.
#[derive(Debug, Clone, Default)]
pub struct DimensionScores {
    pub pps: Option<f64>,
    pub rre: Option<f64>,
    pub pfs: Option<f64>,
    pub dh: Option<f64>,
    pub logic: Option<f64>,
    pub ic: Option<f64>,
    pub rank_ic: Option<f64>,
    pub icir: Option<f64>,
    pub diagnostics: Vec<String>,
}

/// Batch scoring configuration.
#[derive(Debug, Clone)]
pub struct MetricConfig {
    pub beta: f64,
    pub pfs: Option<PfsConfig>,
    pub workers: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            beta: 0.5,
            pfs: None,
            workers: 1,
        }
    }
}

/// Scores for a whole alpha set: one record per alpha plus the set-level
/// diversity entropy.
#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub per_alpha: Vec<DimensionScores>,
    pub dh: Option<f64>,
    pub dh_note: Option<String>,
}

/// Compute PPS / RRE / PFS per alpha and DH for the set.
///
/// Per-alpha failures become absent entries with diagnostics; the batch
/// never aborts on a single bad alpha. Signals must come from
/// [`evaluate_many`](crate::engine::evaluate_many) over the same panel.
pub fn score_dimensions(
    exprs: &[AlphaExpr],
    signals: &[SignalMatrix],
    panel: &Panel,
    returns: &ReturnMatrix,
    cfg: &MetricConfig,
) -> Result<ScoreOutcome> {
    if exprs.len() != signals.len() {
        return Err(Error::InvalidInput(
            "score_dimensions needs one signal per expression".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.beta) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in [0, 1], got {}",
            cfg.beta
        )));
    }
    let items: Vec<(usize, &AlphaExpr, &SignalMatrix)> = exprs
        .iter()
        .zip(signals)
        .enumerate()
        .map(|(i, (e, s))| (i, e, s))
        .collect();
    let per_alpha = crate::parallel::map_indexed(&items, cfg.workers, |_, (_, expr, signal)| {
        score_one(expr, signal, panel, returns, cfg)
    });

    let usable: Vec<&SignalMatrix> = signals.iter().filter(|s| !s.is_all_missing()).collect();
    let (dh, dh_note) = if usable.len() < 2 {
        (
            None,
            Some(format!(
                "diversity entropy needs at least 2 non-empty signals, got {}",
                usable.len()
            )),
        )
    } else {
        match diversity_entropy(&usable) {
            Ok(v) => {
                let note = if usable.len() != signals.len() {
                    Some(format!(
                        "diversity entropy over {} of {} signals (empty signals skipped)",
                        usable.len(),
                        signals.len()
                    ))
                } else {
                    None
                };
                (Some(v), note)
            }
            Err(e) => (None, Some(e.to_string())),
        }
    };

    let mut per_alpha = per_alpha;
    for rec in per_alpha.iter_mut() {
        rec.dh = dh;
    }
    Ok(ScoreOutcome {
        per_alpha,
        dh,
        dh_note,
    })
}

fn score_one(
    expr: &AlphaExpr,
    signal: &SignalMatrix,
    panel: &Panel,
    returns: &ReturnMatrix,
    cfg: &MetricConfig,
) -> DimensionScores {
    let mut rec = DimensionScores::default();

    match ic_series(signal, returns) {
        Ok(series) => match series.mean() {
            Some(v) => {
                rec.ic = Some(v);
                match icir(&series.values) {
                    Ok(r) => rec.icir = Some(r),
                    Err(e) => rec.diagnostics.push(format!("icir: {e}")),
                }
            }
            None => rec.diagnostics.push("ic: no usable dates".into()),
        },
        Err(e) => rec.diagnostics.push(format!("ic: {e}")),
    }
    match rank_ic(signal, returns) {
        Ok(v) => rec.rank_ic = Some(v),
        Err(e) => rec.diagnostics.push(format!("rank_ic: {e}")),
    }
    rec.pps = match (rec.ic, rec.rank_ic) {
        (Some(i), Some(r)) => Some(cfg.beta * i + (1.0 - cfg.beta) * r),
        _ => None,
    };

    match rre(signal) {
        Ok(v) => rec.rre = Some(v),
        Err(e) => rec.diagnostics.push(format!("rre: {e}")),
    }

    if let Some(pfs_cfg) = &cfg.pfs {
        match pfs_with_base(expr, panel, signal, pfs_cfg) {
            Ok(v) => rec.pfs = Some(v),
            Err(e) => rec.diagnostics.push(format!("pfs: {e}")),
        }
    }

    rec
}
