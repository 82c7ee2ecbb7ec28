//! Command-line interface. The binary is a thin wrapper over
//! [`crate::run`]; exit code 0 means every alpha was fully scored, 2 means
//! the report was written but some alphas failed partially, 1 is fatal.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::logic::LlmConfig;
use crate::report::{DimensionWeights, SelectBy};
use crate::run::{
    self, BacktestArgs, CombineSpec, EvalArgs, RandomAlphasArgs, RunStatus, SigmaSpec, SynthArgs,
};

#[derive(Debug, Parser)]
#[command(
    name = "alphaeval",
    about = "Backtest-free evaluation of formulaic alphas over panel data",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score an alpha list along the five evaluation dimensions.
    Eval(EvalCmd),
    /// Run long-short top/bottom-K backtest diagnostics.
    Backtest(BacktestCmd),
    /// Generate a synthetic OHLCV panel CSV.
    Synth(SynthCmd),
    /// Sample random alpha expressions from the operator grammar.
    RandomAlphas(RandomAlphasCmd),
}

#[derive(Debug, Args)]
struct EvalCmd {
    /// Panel CSV (long format: date,symbol,<features>).
    #[arg(long)]
    panel: PathBuf,
    /// Alpha list: one expression per line, `#` comments.
    #[arg(long)]
    alphas: PathBuf,
    /// Report JSON destination.
    #[arg(long)]
    out: PathBuf,
    /// IC weight in PPS = beta*IC + (1-beta)*RankIC.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Forward-return horizon in days.
    #[arg(long, default_value_t = 1)]
    dt: usize,
    /// Perturbation standard deviation: `auto` (index-volatility proxy) or a number.
    #[arg(long, default_value = "auto")]
    sigma: String,
    /// Student-t degrees of freedom for the heavy-tailed perturbation.
    #[arg(long, default_value_t = 3.0)]
    nu: f64,
    /// Perturbation seeds averaged per noise family.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Root seed; every random draw derives from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads for evaluation and per-alpha metrics.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Enable the LLM logic dimension.
    #[arg(long)]
    logic: bool,
    /// Chat-completion endpoint URL.
    #[arg(long, requires = "logic")]
    llm_endpoint: Option<String>,
    /// Model name sent in the request body.
    #[arg(long, requires = "logic")]
    llm_model: Option<String>,
    /// Offline mock verdict table (JSON object: expression -> {score, explanation}).
    #[arg(long, requires = "logic")]
    llm_mock: Option<PathBuf>,
    /// Log LLM request/response bodies to stderr (API key redacted).
    #[arg(long)]
    debug_llm: bool,
    /// Integrated-score weights `pps,rre,pfs,dh,logic` (must sum to 1).
    #[arg(long)]
    weights: Option<String>,
    /// Directory for per-alpha signal dumps (`<index>.csv`).
    #[arg(long)]
    dump_signals: Option<PathBuf>,
    /// Accept feature columns outside the standard set.
    #[arg(long)]
    allow_extra_features: bool,
}

#[derive(Debug, Args)]
struct BacktestCmd {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    alphas: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Assets held long and short each day.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Forward-return horizon in days.
    #[arg(long, default_value_t = 1)]
    dt: usize,
    /// Trading days per year for annualization.
    #[arg(long, default_value_t = 252.0)]
    days: f64,
    /// IC weight in PPS (used when ranking for --combine).
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Also backtest an equal-weight z-score combination of top alphas.
    #[arg(long)]
    combine: bool,
    /// How many alphas feed the combination.
    #[arg(long, default_value_t = 5, requires = "combine")]
    top: usize,
    /// Ranking key for --combine: pps|rre|pfs|logic|integrated.
    #[arg(long, default_value = "integrated", requires = "combine")]
    by: String,
    /// Directory for per-alpha NAV dumps (`<index>.csv`, `combined.csv`).
    #[arg(long)]
    dump_nav: Option<PathBuf>,
    #[arg(long)]
    allow_extra_features: bool,
}

#[derive(Debug, Args)]
struct SynthCmd {
    /// Destination CSV.
    #[arg(long)]
    out: PathBuf,
    /// Trading dates to generate.
    #[arg(long, default_value_t = 300)]
    dates: usize,
    /// Assets to generate.
    #[arg(long, default_value_t = 50)]
    assets: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fraction of next-day return std explained by the planted
    /// log-volume driver (0 = pure noise).
    #[arg(long, default_value_t = 0.0)]
    signal_strength: f64,
}

#[derive(Debug, Args)]
struct RandomAlphasCmd {
    /// Destination alpha-list file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Maximum call-nesting depth.
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 20)]
    max_window: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Restrict to operators that stay defined on dense windows.
    #[arg(long)]
    dense: bool,
}

/// Parse argv and dispatch; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(RunStatus::Complete) => 0,
        Ok(RunStatus::Partial) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> crate::error::Result<RunStatus> {
    match cli.command {
        Command::Eval(cmd) => {
            let sigma: SigmaSpec = cmd.sigma.parse()?;
            let weights = match &cmd.weights {
                Some(text) => parse_weights(text)?,
                None => DimensionWeights::default(),
            };
            let logic = if cmd.logic {
                let mut cfg = LlmConfig {
                    endpoint: cmd.llm_endpoint.clone().unwrap_or_default(),
                    model: cmd.llm_model.clone().unwrap_or_default(),
                    mock_path: cmd.llm_mock.clone(),
                    debug: cmd.debug_llm,
                    ..LlmConfig::default()
                };
                if cfg.mock_path.is_none() && cfg.endpoint.is_empty() {
                    return Err(crate::error::Error::InvalidParameter(
                        "--logic needs either --llm-endpoint or --llm-mock".into(),
                    ));
                }
                cfg.in_flight = cmd.workers.max(1);
                Some(cfg)
            } else {
                None
            };
            let (report, status) = run::run_eval(&EvalArgs {
                panel_path: cmd.panel,
                alphas_path: cmd.alphas,
                out_path: Some(cmd.out.clone()),
                beta: cmd.beta,
                dt: cmd.dt,
                sigma,
                nu: cmd.nu,
                trials: cmd.trials,
                seed: cmd.seed,
                workers: cmd.workers,
                weights,
                logic,
                dump_signals: cmd.dump_signals,
                allow_extra_features: cmd.allow_extra_features,
            })?;
            eprintln!(
                "scored {}/{} alphas -> {}",
                report.set.alphas_scored,
                report.set.alphas_submitted,
                cmd.out.display()
            );
            Ok(status)
        }
        Command::Backtest(cmd) => {
            let combine = if cmd.combine {
                Some(CombineSpec {
                    top: cmd.top,
                    by: cmd.by.parse::<SelectBy>()?,
                })
            } else {
                None
            };
            let (report, status) = run::run_backtest(&BacktestArgs {
                panel_path: cmd.panel,
                alphas_path: cmd.alphas,
                out_path: Some(cmd.out.clone()),
                k: cmd.k,
                dt: cmd.dt,
                trading_days: cmd.days,
                beta: cmd.beta,
                workers: cmd.workers,
                combine,
                dump_nav: cmd.dump_nav,
                allow_extra_features: cmd.allow_extra_features,
            })?;
            eprintln!(
                "backtested {} alphas -> {}",
                report.alphas.len(),
                cmd.out.display()
            );
            Ok(status)
        }
        Command::Synth(cmd) => {
            run::run_synth(&SynthArgs {
                out_path: cmd.out.clone(),
                num_dates: cmd.dates,
                num_assets: cmd.assets,
                seed: cmd.seed,
                signal_strength: cmd.signal_strength,
            })?;
            eprintln!(
                "wrote {} dates x {} assets -> {}",
                cmd.dates,
                cmd.assets,
                cmd.out.display()
            );
            Ok(RunStatus::Complete)
        }
        Command::RandomAlphas(cmd) => {
            run::run_random_alphas(&RandomAlphasArgs {
                out_path: cmd.out.clone(),
                count: cmd.count,
                max_depth: cmd.max_depth,
                max_window: cmd.max_window,
                seed: cmd.seed,
                dense: cmd.dense,
            })?;
            eprintln!("wrote {} expressions -> {}", cmd.count, cmd.out.display());
            Ok(RunStatus::Complete)
        }
    }
}

fn parse_weights(text: &str) -> crate::error::Result<DimensionWeights> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            crate::error::Error::InvalidParameter(format!(
                "--weights expects 5 comma-separated numbers, got `{text}`"
            ))
        })?;
    if parts.len() != 5 {
        return Err(crate::error::Error::InvalidParameter(format!(
            "--weights expects 5 values (pps,rre,pfs,dh,logic), got {}",
            parts.len()
        )));
    }
    let weights = DimensionWeights {
        pps: parts[0],
        rre: parts[1],
        pfs: parts[2],
        dh: parts[3],
        logic: parts[4],
    };
    weights.validate()?;
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_parse_and_validate() {
        let w = parse_weights("0.4,0.2,0.2,0.1,0.1").unwrap();
        assert_eq!(w.pps, 0.4);
        assert!(parse_weights("0.5,0.5").is_err());
        assert!(parse_weights("1,1,1,1,1").is_err());
        assert!(parse_weights("a,b,c,d,e").is_err());
    }

    #[test]
    fn cli_parses_the_documented_flags() {
        let cli = Cli::try_parse_from([
            "alphaeval",
            "eval",
            "--panel",
            "p.csv",
            "--alphas",
            "a.txt",
            "--out",
            "r.json",
            "--beta",
            "0.5",
            "--dt",
            "1",
            "--sigma",
            "auto",
            "--nu",
            "3",
            "--trials",
            "5",
            "--seed",
            "7",
            "--workers",
            "4",
            "--logic",
            "--llm-mock",
            "mock.json",
            "--debug-llm",
            "--weights",
            "0.2,0.2,0.2,0.2,0.2",
            "--dump-signals",
            "sigs/",
        ]);
        assert!(cli.is_ok(), "{cli:?}");

        let bt = Cli::try_parse_from([
            "alphaeval",
            "backtest",
            "--panel",
            "p.csv",
            "--alphas",
            "a.txt",
            "--out",
            "bt.json",
            "--k",
            "3",
            "--combine",
            "--top",
            "5",
            "--by",
            "integrated",
            "--dump-nav",
            "nav/",
        ]);
        assert!(bt.is_ok(), "{bt:?}");
    }
}
