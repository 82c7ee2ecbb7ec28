//! File-to-file pipelines behind the CLI subcommands: evaluation,
//! backtesting, synthetic data, and random alpha baselines.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::backtest;
use crate::engine::{evaluate_many, SignalMatrix};
use crate::error::{Error, Result};
use crate::expr::{self, random::GeneratorConfig, Alpha, Schema};
use crate::logic::{self, LlmConfig};
use crate::metrics::{self, MetricConfig, PfsConfig};
use crate::panel::{compute_returns, index_volatility, Panel};
use crate::report::{
    alphaeval_score, combine_signals, normalize_scores, select_top, AlphaRecord, DimensionWeights,
    MetricReport, SelectBy, SetScores,
};
use crate::seed;
use crate::synth::{generate_panel, SynthConfig};

/// Whether every submitted alpha was fully scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    Partial,
}

/// Sigma calibration: a fixed value or the panel's index-volatility proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSpec {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for SigmaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SigmaSpec::Auto);
        }
        s.parse::<f64>()
            .map(SigmaSpec::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("sigma must be `auto` or a number, got `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub panel_path: PathBuf,
    pub alphas_path: PathBuf,
    pub out_path: Option<PathBuf>,
    pub beta: f64,
    pub dt: usize,
    pub sigma: SigmaSpec,
    pub nu: f64,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub weights: DimensionWeights,
    pub logic: Option<LlmConfig>,
    pub dump_signals: Option<PathBuf>,
    pub allow_extra_features: bool,
}

impl Default for EvalArgs {
    fn default() -> Self {
        EvalArgs {
            panel_path: PathBuf::new(),
            alphas_path: PathBuf::new(),
            out_path: None,
            beta: 0.5,
            dt: 1,
            sigma: SigmaSpec::Auto,
            nu: 3.0,
            trials: 5,
            seed: 42,
            workers: 1,
            weights: DimensionWeights::default(),
            logic: None,
            dump_signals: None,
            allow_extra_features: false,
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalConfigEcho {
    panel: String,
    alphas: String,
    beta: f64,
    dt: usize,
    sigma_mode: String,
    sigma: f64,
    nu: f64,
    trials: usize,
    seed: u64,
    workers: usize,
    weights: DimensionWeights,
    llm: Option<LlmEcho>,
    conventions: Conventions,
}

#[derive(Debug, Serialize)]
struct LlmEcho {
    model: String,
    endpoint: String,
    mock: Option<String>,
    batch_size: usize,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Debug, Serialize)]
struct Conventions {
    wma: &'static str,
    ema: &'static str,
    moments: &'static str,
    ranks: &'static str,
    median: &'static str,
    regression: &'static str,
    windows: &'static str,
    perturbation: &'static str,
    rre: &'static str,
    pfs: &'static str,
    portfolio: &'static str,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            wma: "linear weights, most recent day heaviest, normalized to sum 1",
            ema: "alpha = 2/(d+1), seeded with the oldest value in the window",
            moments: "sample variance (d-1); bias-corrected skewness; excess kurtosis",
            ranks: "ties take average ranks; IdxMax/IdxMin ties take the most recent day",
            median: "midpoint interpolation for even windows (Med and Mad)",
            regression: "OLS against time index 0..d-1; zero-variance windows are missing",
            windows: "windows containing any missing value emit missing",
            perturbation: "i.i.d. noise added to raw feature values, all features uniformly",
            rre: "natural-log KL over the consecutive-date valid-asset intersection, re-ranked",
            pfs: "per-date cross-sectional Spearman vs the unperturbed signal, averaged over \
                  dates and trials, minimum over noise families",
            portfolio: "top/bottom-K boundary ties break by ascending asset index; dates with \
                        under 2K valid scores hold no positions",
        }
    }
}

/// Load a panel, parse and score an alpha list, and assemble the report.
pub fn run_eval(args: &EvalArgs) -> Result<(MetricReport, RunStatus)> {
    let panel = Panel::load_csv(&args.panel_path, args.allow_extra_features)?;
    let schema = Schema::from_panel(&panel);
    let list_text = std::fs::read_to_string(&args.alphas_path)
        .map_err(|e| Error::io(&args.alphas_path, e))?;
    let lines = expr::alpha_list_lines(&list_text);
    if lines.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no alpha expressions in {}",
            args.alphas_path.display()
        )));
    }

    // Parse and validate; keep failures as report rows without scores.
    let mut records: Vec<AlphaRecord> = Vec::with_capacity(lines.len());
    let mut valid: Vec<(usize, Alpha)> = Vec::new();
    for (slot, (line_no, text)) in lines.iter().enumerate() {
        match Alpha::parse(text) {
            Ok(alpha) => {
                let diags = expr::validate(&alpha.expr, &schema);
                if expr::is_valid(&diags) {
                    let mut rec = empty_record(text.clone());
                    rec.diagnostics.extend(
                        diags
                            .iter()
                            .map(|d| format!("note: {}", d.message)),
                    );
                    records.push(rec);
                    valid.push((slot, alpha));
                } else {
                    let mut rec = empty_record(text.clone());
                    rec.diagnostics.extend(
                        diags
                            .iter()
                            .map(|d| format!("validate (line {line_no}): {}", d.message)),
                    );
                    records.push(rec);
                }
            }
            Err(e) => {
                let mut rec = empty_record(text.clone());
                rec.diagnostics.push(format!("parse (line {line_no}): {e}"));
                records.push(rec);
            }
        }
    }

    let returns = compute_returns(&panel, args.dt)?;
    let (sigma_mode, sigma) = match args.sigma {
        SigmaSpec::Fixed(v) => ("fixed", v),
        SigmaSpec::Auto => {
            let one_day = if args.dt == 1 {
                index_volatility(&returns)?
            } else {
                index_volatility(&compute_returns(&panel, 1)?)?
            };
            ("auto", one_day)
        }
    };

    let exprs: Vec<_> = valid.iter().map(|(_, a)| a.expr.clone()).collect();
    let signals: Vec<SignalMatrix> = evaluate_many(&exprs, &panel, args.workers)
        .into_iter()
        .collect::<Result<_>>()?;

    let cfg = MetricConfig {
        beta: args.beta,
        pfs: Some(PfsConfig {
            sigma,
            nu: args.nu,
            trials: args.trials,
            seed: seed::derive(args.seed, "pfs", 0),
        }),
        workers: args.workers,
    };
    let outcome = metrics::score_dimensions(&exprs, &signals, &panel, &returns, &cfg)?;
    for ((slot, _), scores) in valid.iter().zip(&outcome.per_alpha) {
        let rec = &mut records[*slot];
        let mut filled = AlphaRecord::from_scores(rec.expression.clone(), scores);
        filled.diagnostics = rec
            .diagnostics
            .iter()
            .cloned()
            .chain(scores.diagnostics.iter().cloned())
            .collect();
        *rec = filled;
    }

    // Logic scores over the alphas that evaluated.
    let mut logic_mean = None;
    if let Some(llm) = &args.logic {
        let texts: Vec<String> = valid
            .iter()
            .map(|(slot, _)| records[*slot].expression.clone())
            .collect();
        if !texts.is_empty() {
            let verdicts = logic::score_alphas(&texts, llm)?;
            for ((slot, _), verdict) in valid.iter().zip(&verdicts) {
                records[*slot].logic = Some(verdict.score);
                if verdict.clamped {
                    records[*slot]
                        .diagnostics
                        .push("note: logic score clamped into [0, 100]".into());
                }
                if verdict.score < 50.0 {
                    records[*slot]
                        .diagnostics
                        .push("note: logic score below the prompt floor of 50".into());
                }
            }
            logic_mean = Some(logic::logic_score(&verdicts)?);
        }
    }

    // Integrated score over normalized dimensions.
    let dims: Vec<metrics::DimensionScores> = records
        .iter()
        .map(|r| metrics::DimensionScores {
            pps: r.pps,
            rre: r.rre,
            pfs: r.pfs,
            dh: if r.pps.is_some() || r.rre.is_some() {
                outcome.dh
            } else {
                None
            },
            logic: r.logic,
            ..Default::default()
        })
        .collect();
    let normalized = normalize_scores(&dims);
    for (rec, norm) in records.iter_mut().zip(&normalized) {
        rec.integrated = alphaeval_score(norm, &args.weights).ok();
    }

    if let Some(dir) = &args.dump_signals {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for ((slot, _), signal) in valid.iter().zip(&signals) {
            let path = dir.join(format!("{slot}.csv"));
            std::fs::write(&path, signal.to_csv()).map_err(|e| Error::io(&path, e))?;
        }
    }

    let scored = records
        .iter()
        .filter(|r| r.pps.is_some() || r.rre.is_some() || r.pfs.is_some())
        .count();
    let config = EvalConfigEcho {
        panel: args.panel_path.display().to_string(),
        alphas: args.alphas_path.display().to_string(),
        beta: args.beta,
        dt: args.dt,
        sigma_mode: sigma_mode.into(),
        sigma,
        nu: args.nu,
        trials: args.trials,
        seed: args.seed,
        workers: args.workers,
        weights: args.weights,
        llm: args.logic.as_ref().map(|l| LlmEcho {
            model: l.model.clone(),
            endpoint: l.endpoint.clone(),
            mock: l.mock_path.as_ref().map(|p| p.display().to_string()),
            batch_size: l.batch_size,
            max_tokens: l.max_tokens,
            temperature: l.temperature,
        }),
        conventions: Conventions::default(),
    };
    let report = MetricReport {
        config: serde_json::to_value(&config).map_err(|e| Error::InvalidInput(e.to_string()))?,
        set: SetScores {
            dh: outcome.dh,
            dh_note: outcome.dh_note.clone(),
            logic_mean,
            alphas_submitted: records.len(),
            alphas_scored: scored,
        },
        alphas: records,
    };

    if let Some(path) = &args.out_path {
        crate::report::write_report(&report, path)?;
    }

    let status = if report
        .alphas
        .iter()
        .all(|r| r.diagnostics.iter().all(|d| d.starts_with("note:")))
    {
        RunStatus::Complete
    } else {
        RunStatus::Partial
    };
    Ok((report, status))
}

fn empty_record(expression: String) -> AlphaRecord {
    AlphaRecord {
        expression,
        pps: None,
        ic: None,
        rank_ic: None,
        icir: None,
        rre: None,
        pfs: None,
        logic: None,
        integrated: None,
        diagnostics: Vec::new(),
    }
}

#[derive(Debug, Clone)]
pub struct BacktestArgs {
    pub panel_path: PathBuf,
    pub alphas_path: PathBuf,
    pub out_path: Option<PathBuf>,
    pub k: usize,
    pub dt: usize,
    pub trading_days: f64,
    pub beta: f64,
    pub workers: usize,
    pub combine: Option<CombineSpec>,
    pub dump_nav: Option<PathBuf>,
    pub allow_extra_features: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CombineSpec {
    pub top: usize,
    pub by: SelectBy,
}

impl Default for BacktestArgs {
    fn default() -> Self {
        BacktestArgs {
            panel_path: PathBuf::new(),
            alphas_path: PathBuf::new(),
            out_path: None,
            k: 5,
            dt: 1,
            trading_days: backtest::DEFAULT_TRADING_DAYS,
            beta: 0.5,
            workers: 1,
            combine: None,
            dump_nav: None,
            allow_extra_features: false,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BacktestRow {
    pub expression: String,
    pub annualized_return: Option<f64>,
    pub sharpe: Option<f64>,
    pub turnover: Option<f64>,
    pub max_drawdown: Option<f64>,
    pub final_nav: Option<f64>,
    pub skipped_dates: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct BacktestReport {
    pub config: serde_json::Value,
    pub alphas: Vec<BacktestRow>,
    pub combined: Option<BacktestRow>,
}

/// Long-short backtest per alpha, optionally adding a combined top-k signal.
pub fn run_backtest(args: &BacktestArgs) -> Result<(BacktestReport, RunStatus)> {
    let panel = Panel::load_csv(&args.panel_path, args.allow_extra_features)?;
    let schema = Schema::from_panel(&panel);
    let list_text = std::fs::read_to_string(&args.alphas_path)
        .map_err(|e| Error::io(&args.alphas_path, e))?;
    let lines = expr::alpha_list_lines(&list_text);
    if lines.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no alpha expressions in {}",
            args.alphas_path.display()
        )));
    }
    let returns = compute_returns(&panel, args.dt)?;

    let mut rows: Vec<BacktestRow> = Vec::with_capacity(lines.len());
    let mut valid: Vec<(usize, Alpha)> = Vec::new();
    for (slot, (line_no, text)) in lines.iter().enumerate() {
        match Alpha::parse(text) {
            Ok(alpha) if expr::is_valid(&expr::validate(&alpha.expr, &schema)) => {
                rows.push(empty_backtest_row(text.clone()));
                valid.push((slot, alpha));
            }
            Ok(alpha) => {
                let mut row = empty_backtest_row(text.clone());
                for d in expr::validate(&alpha.expr, &schema) {
                    row.diagnostics
                        .push(format!("validate (line {line_no}): {}", d.message));
                }
                rows.push(row);
            }
            Err(e) => {
                let mut row = empty_backtest_row(text.clone());
                row.diagnostics.push(format!("parse (line {line_no}): {e}"));
                rows.push(row);
            }
        }
    }

    let exprs: Vec<_> = valid.iter().map(|(_, a)| a.expr.clone()).collect();
    let signals: Vec<SignalMatrix> = evaluate_many(&exprs, &panel, args.workers)
        .into_iter()
        .collect::<Result<_>>()?;

    if let Some(dir) = &args.dump_nav {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for ((slot, _), signal) in valid.iter().zip(&signals) {
        let expression = rows[*slot].expression.clone();
        rows[*slot] = backtest_one(&expression, signal, &returns, args)?;
        if let Some(dir) = &args.dump_nav {
            let weights = backtest::build_weights(signal, args.k)?;
            let series = backtest::portfolio_returns(&weights, &returns)?;
            let path = dir.join(format!("{slot}.csv"));
            std::fs::write(&path, nav_csv(&panel, &series)).map_err(|e| Error::io(&path, e))?;
        }
    }

    // Combined signal over the top alphas by the requested key.
    let combined = if let Some(spec) = args.combine {
        let metric_cfg = MetricConfig {
            beta: args.beta,
            pfs: None,
            workers: args.workers,
        };
        let outcome = metrics::score_dimensions(&exprs, &signals, &panel, &returns, &metric_cfg)?;
        let mut records: Vec<AlphaRecord> = Vec::new();
        for ((slot, _), scores) in valid.iter().zip(&outcome.per_alpha) {
            records.push(AlphaRecord::from_scores(
                rows[*slot].expression.clone(),
                scores,
            ));
        }
        let normalized = normalize_scores(&outcome.per_alpha);
        for (rec, norm) in records.iter_mut().zip(&normalized) {
            rec.integrated = alphaeval_score(norm, &DimensionWeights::default()).ok();
        }
        let chosen = select_top(&records, spec.top.min(records.len().max(1)), spec.by)?;
        let member_signals: Vec<&SignalMatrix> = chosen.iter().map(|&i| &signals[i]).collect();
        let combined_signal = combine_signals(&member_signals)?;
        let label = format!(
            "combined(top {} by {:?})",
            chosen.len(),
            spec.by
        );
        let row = backtest_one(&label, &combined_signal, &returns, args)?;
        if let Some(dir) = &args.dump_nav {
            let weights = backtest::build_weights(&combined_signal, args.k)?;
            let series = backtest::portfolio_returns(&weights, &returns)?;
            let path = dir.join("combined.csv");
            std::fs::write(&path, nav_csv(&panel, &series)).map_err(|e| Error::io(&path, e))?;
        }
        Some(row)
    } else {
        None
    };

    let config = serde_json::json!({
        "panel": args.panel_path.display().to_string(),
        "alphas": args.alphas_path.display().to_string(),
        "k": args.k,
        "dt": args.dt,
        "trading_days": args.trading_days,
        "beta": args.beta,
        "workers": args.workers,
        "combine": args.combine.map(|c| serde_json::json!({
            "top": c.top,
            "by": format!("{:?}", c.by).to_lowercase(),
        })),
    });
    let report = BacktestReport {
        config,
        alphas: rows,
        combined,
    };
    if let Some(path) = &args.out_path {
        crate::report::write_report(&report, path)?;
    }
    let status = if report
        .alphas
        .iter()
        .all(|r| r.diagnostics.iter().all(|d| d.starts_with("note:")))
    {
        RunStatus::Complete
    } else {
        RunStatus::Partial
    };
    Ok((report, status))
}

fn empty_backtest_row(expression: String) -> BacktestRow {
    BacktestRow {
        expression,
        annualized_return: None,
        sharpe: None,
        turnover: None,
        max_drawdown: None,
        final_nav: None,
        skipped_dates: 0,
        diagnostics: Vec::new(),
    }
}

fn backtest_one(
    expression: &str,
    signal: &SignalMatrix,
    returns: &crate::panel::ReturnMatrix,
    args: &BacktestArgs,
) -> Result<BacktestRow> {
    let mut row = empty_backtest_row(expression.to_string());
    let weights = backtest::build_weights(signal, args.k)?;
    row.skipped_dates = weights.skipped_count();
    let series = backtest::portfolio_returns(&weights, returns)?;
    match backtest::annualized_return(&series, args.trading_days) {
        Ok(v) => row.annualized_return = Some(v),
        Err(e) => row.diagnostics.push(format!("annualized_return: {e}")),
    }
    match backtest::sharpe(&series, args.trading_days) {
        Ok(v) => row.sharpe = Some(v),
        Err(e) => row.diagnostics.push(format!("sharpe: {e}")),
    }
    match backtest::turnover(&weights) {
        Ok(v) => row.turnover = Some(v),
        Err(e) => row.diagnostics.push(format!("turnover: {e}")),
    }
    match backtest::max_drawdown(&series) {
        Ok(v) => row.max_drawdown = Some(v),
        Err(e) => row.diagnostics.push(format!("max_drawdown: {e}")),
    }
    row.final_nav = series.nav.last().copied();
    Ok(row)
}

fn nav_csv(panel: &Panel, series: &backtest::PortfolioSeries) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("date,r,nav\n");
    for (t, date) in panel.dates().iter().enumerate() {
        let _ = writeln!(out, "{date},{},{}", series.returns[t], series.nav[t]);
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub out_path: PathBuf,
    pub num_dates: usize,
    pub num_assets: usize,
    pub seed: u64,
    pub signal_strength: f64,
}

/// Write a synthetic panel CSV.
pub fn run_synth(args: &SynthArgs) -> Result<()> {
    if args.num_dates < 2 || args.num_assets < 1 {
        return Err(Error::InvalidParameter(
            "synthetic panels need at least 2 dates and 1 asset".into(),
        ));
    }
    if !(0.0..=1.0).contains(&args.signal_strength) {
        return Err(Error::InvalidParameter(format!(
            "signal strength must lie in [0, 1], got {}",
            args.signal_strength
        )));
    }
    let panel = generate_panel(
        &SynthConfig::new(args.num_dates, args.num_assets, args.seed)
            .with_signal_strength(args.signal_strength),
    )?;
    panel.write_csv(&args.out_path)
}

#[derive(Debug, Clone)]
pub struct RandomAlphasArgs {
    pub out_path: PathBuf,
    pub count: usize,
    pub max_depth: usize,
    pub max_window: usize,
    pub seed: u64,
    pub dense: bool,
}

/// Write a random alpha-list file sampled from the operator grammar.
pub fn run_random_alphas(args: &RandomAlphasArgs) -> Result<()> {
    if args.count == 0 {
        return Err(Error::InvalidParameter("count must be >= 1".into()));
    }
    let mut cfg = GeneratorConfig::new(
        crate::panel::KNOWN_FEATURES
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    cfg.max_depth = args.max_depth;
    cfg.max_window = args.max_window;
    cfg.profile = if args.dense {
        expr::random::OpProfile::Dense
    } else {
        expr::random::OpProfile::Full
    };
    let exprs = expr::random::random_exprs(&cfg, args.count, args.seed);
    let mut text = String::new();
    for e in &exprs {
        text.push_str(&e.to_string());
        text.push('\n');
    }
    std::fs::write(&args.out_path, text).map_err(|e| Error::io(&args.out_path, e))
}

/// Convenience for tests and examples: evaluate a list of alpha texts
/// against an in-memory panel with default settings.
pub fn quick_eval(panel: &Panel, alpha_texts: &[&str], beta: f64) -> Result<Vec<AlphaRecord>> {
    let schema = Schema::from_panel(panel);
    let mut alphas = Vec::new();
    for text in alpha_texts {
        let alpha = Alpha::parse(text)?;
        let diags = expr::validate(&alpha.expr, &schema);
        if !expr::is_valid(&diags) {
            return Err(Error::Validation(format!(
                "`{text}`: {}",
                diags
                    .iter()
                    .map(|d| d.message.clone())
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }
        alphas.push(alpha);
    }
    let exprs: Vec<_> = alphas.iter().map(|a| a.expr.clone()).collect();
    let signals: Vec<SignalMatrix> = evaluate_many(&exprs, panel, 1)
        .into_iter()
        .collect::<Result<_>>()?;
    let returns = compute_returns(panel, 1)?;
    let outcome = metrics::score_dimensions(
        &exprs,
        &signals,
        panel,
        &returns,
        &MetricConfig {
            beta,
            pfs: None,
            workers: 1,
        },
    )?;
    Ok(alphas
        .iter()
        .zip(&outcome.per_alpha)
        .map(|(a, s)| AlphaRecord::from_scores(a.source.clone(), s))
        .collect())
}

/// Resolve the panel path and sigma for reporting; shared by the CLI.
pub fn auto_sigma(panel: &Panel) -> Result<f64> {
    index_volatility(&compute_returns(panel, 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_synth_panel(dir: &Path, t: usize, n: usize, seed: u64) -> PathBuf {
        let path = dir.join("panel.csv");
        run_synth(&SynthArgs {
            out_path: path.clone(),
            num_dates: t,
            num_assets: n,
            seed,
            signal_strength: 0.0,
        })
        .unwrap();
        path
    }

    #[test]
    fn eval_pipeline_end_to_end() {
        let dir = tempdir().unwrap();
        let panel_path = write_synth_panel(dir.path(), 60, 8, 3);
        let alphas_path = dir.path().join("alphas.txt");
        std::fs::write(
            &alphas_path,
            "# demo list\nMean(close, 5)\nDiv(Sub(close, open), open)\n",
        )
        .unwrap();
        let out_path = dir.path().join("report.json");
        let args = EvalArgs {
            panel_path,
            alphas_path,
            out_path: Some(out_path.clone()),
            trials: 1,
            ..EvalArgs::default()
        };
        let (report, status) = run_eval(&args).unwrap();
        assert_eq!(status, RunStatus::Complete);
        assert_eq!(report.alphas.len(), 2);
        assert!(report.alphas[0].pps.is_some());
        assert!(report.alphas[0].pfs.is_some());
        assert!(report.alphas[0].integrated.is_some());
        assert!(report.set.dh.is_some());
        assert!(out_path.exists());
    }

    #[test]
    fn eval_isolates_malformed_alphas() {
        let dir = tempdir().unwrap();
        let panel_path = write_synth_panel(dir.path(), 40, 6, 5);
        let alphas_path = dir.path().join("alphas.txt");
        std::fs::write(&alphas_path, "Mean(close, 5)\nMean(close)\nRef(open, 2)\n").unwrap();
        let args = EvalArgs {
            panel_path,
            alphas_path,
            trials: 1,
            ..EvalArgs::default()
        };
        let (report, status) = run_eval(&args).unwrap();
        assert_eq!(status, RunStatus::Partial);
        assert_eq!(report.alphas.len(), 3);
        assert!(report.alphas[0].pps.is_some());
        assert!(report.alphas[1].pps.is_none());
        assert!(!report.alphas[1].diagnostics.is_empty());
        assert!(report.alphas[2].pps.is_some());
        assert_eq!(report.set.alphas_scored, 2);
    }

    #[test]
    fn eval_report_is_byte_identical_across_worker_counts() {
        let dir = tempdir().unwrap();
        let panel_path = write_synth_panel(dir.path(), 50, 6, 9);
        let alphas_path = dir.path().join("alphas.txt");
        std::fs::write(
            &alphas_path,
            "Mean(close, 5)\nRank(volume, 7)\nDelta(vwap, 2)\nWMA(close, 4)\n",
        )
        .unwrap();
        let out1 = dir.path().join("r1.json");
        let out4 = dir.path().join("r4.json");
        let base = EvalArgs {
            panel_path,
            alphas_path,
            trials: 2,
            ..EvalArgs::default()
        };
        run_eval(&EvalArgs {
            out_path: Some(out1.clone()),
            workers: 1,
            ..base.clone()
        })
        .unwrap();
        run_eval(&EvalArgs {
            out_path: Some(out4.clone()),
            workers: 4,
            ..base
        })
        .unwrap();
        // workers is echoed in the config; strip that line before comparing
        let (a, b) = (
            std::fs::read_to_string(&out1).unwrap(),
            std::fs::read_to_string(&out4).unwrap(),
        );
        let strip = |s: &str| -> String {
            s.lines()
                .filter(|l| !l.contains("\"workers\""))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn backtest_pipeline_with_combine() {
        let dir = tempdir().unwrap();
        let panel_path = write_synth_panel(dir.path(), 80, 10, 21);
        let alphas_path = dir.path().join("alphas.txt");
        std::fs::write(&alphas_path, "Mean(close, 5)\nRank(volume, 7)\nDelta(vwap, 2)\n")
            .unwrap();
        let nav_dir = dir.path().join("nav");
        let args = BacktestArgs {
            panel_path,
            alphas_path,
            out_path: Some(dir.path().join("bt.json")),
            k: 2,
            combine: Some(CombineSpec {
                top: 2,
                by: SelectBy::Integrated,
            }),
            dump_nav: Some(nav_dir.clone()),
            ..BacktestArgs::default()
        };
        let (report, status) = run_backtest(&args).unwrap();
        assert_eq!(status, RunStatus::Complete);
        assert_eq!(report.alphas.len(), 3);
        for row in &report.alphas {
            assert!(row.annualized_return.is_some());
            assert!(row.turnover.is_some());
            assert!(row.max_drawdown.is_some());
        }
        let combined = report.combined.as_ref().unwrap();
        assert!(combined.max_drawdown.is_some());
        assert!(nav_dir.join("0.csv").exists());
        assert!(nav_dir.join("combined.csv").exists());
    }

    #[test]
    fn backtest_surfaces_undefined_sharpe() {
        let dir = tempdir().unwrap();
        // Two assets only, constant scores: every date ties -> same weights,
        // but returns vary, so sharpe exists; instead use a 1-date panel to
        // force insufficient series. Simpler: constant returns panel.
        let panel_path = dir.path().join("p.csv");
        let mut csv = String::from("date,symbol,close\n");
        for (i, d) in ["2024-01-01", "2024-01-02", "2024-01-03", "2024-01-04"]
            .iter()
            .enumerate()
        {
            // closes grow by exactly 1% everywhere: portfolio returns are
            // identical across dates -> zero variance -> undefined sharpe
            let c = 1.0_f64 * 1.01_f64.powi(i as i32);
            csv.push_str(&format!("{d},AAA,{c}\n"));
            csv.push_str(&format!("{d},BBB,{}\n", c * 2.0));
        }
        std::fs::write(&panel_path, csv).unwrap();
        let alphas_path = dir.path().join("a.txt");
        std::fs::write(&alphas_path, "close\n").unwrap();
        let args = BacktestArgs {
            panel_path,
            alphas_path,
            k: 1,
            ..BacktestArgs::default()
        };
        let (report, status) = run_backtest(&args).unwrap();
        assert!(report.alphas[0].sharpe.is_none());
        assert!(report.alphas[0]
            .diagnostics
            .iter()
            .any(|d| d.contains("sharpe")));
        assert_eq!(status, RunStatus::Partial);
    }

    #[test]
    fn random_alphas_file_is_deterministic_and_parseable() {
        let dir = tempdir().unwrap();
        let out1 = dir.path().join("a1.txt");
        let out2 = dir.path().join("a2.txt");
        for out in [&out1, &out2] {
            run_random_alphas(&RandomAlphasArgs {
                out_path: out.clone(),
                count: 50,
                max_depth: 3,
                max_window: 10,
                seed: 1234,
                dense: false,
            })
            .unwrap();
        }
        let (a, b) = (
            std::fs::read_to_string(&out1).unwrap(),
            std::fs::read_to_string(&out2).unwrap(),
        );
        assert_eq!(a, b);
        let lines = expr::alpha_list_lines(&a);
        assert_eq!(lines.len(), 50);
        for (_, text) in lines {
            expr::parse(&text).unwrap();
        }
    }
}
