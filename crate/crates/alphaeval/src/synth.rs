//! Synthetic OHLCV panel generation: geometric random-walk closes with
//! consistent open/high/low/vwap/volume/amount columns and an optional
//! planted return driver for power studies.
//!
//! Prices are O(1) (normalized-price convention) so return-unit feature
//! noise is material. Per-asset volatilities are heterogeneous and volume
//! anomalies are persistent, which gives downstream rank-based diagnostics
//! realistic spread.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::panel::{Panel, MISSING};

/// The expression whose information coefficient reflects the planted
/// signal strength.
pub const PLANTED_ALPHA: &str = "Log(volume)";

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_dates: usize,
    pub num_assets: usize,
    pub seed: u64,
    /// Fraction of next-day return standard deviation explained by the
    /// standardized log-volume anomaly. 0 = pure noise panel.
    pub signal_strength: f64,
    pub start_date: NaiveDate,
}

impl SynthConfig {
    pub fn new(num_dates: usize, num_assets: usize, seed: u64) -> Self {
        SynthConfig {
            num_dates,
            num_assets,
            seed,
            signal_strength: 0.0,
            start_date: NaiveDate::from_ymd_opt(2018, 1, 2).expect("valid date"),
        }
    }

    pub fn with_signal_strength(mut self, s: f64) -> Self {
        self.signal_strength = s;
        self
    }
}

/// Generate a fully populated panel with the standard feature columns.
///
/// Row invariants: `high >= max(open, close)`, `low <= min(open, close)`,
/// `low <= vwap <= high`, `amount = volume * vwap`, `factor = 1`,
/// `adjclose = close`. The first date's `change` is missing (no previous
/// close). Deterministic for a given config.
pub fn generate_panel(cfg: &SynthConfig) -> Result<Panel> {
    assert!(cfg.num_dates >= 2, "synthetic panel needs at least 2 dates");
    assert!(cfg.num_assets >= 1, "synthetic panel needs at least 1 asset");
    assert!(
        (0.0..=1.0).contains(&cfg.signal_strength),
        "signal strength must lie in [0, 1]"
    );

    let (t_len, n_len) = (cfg.num_dates, cfg.num_assets);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Per-asset parameters: daily volatility (log-normal spread) and mean
    // log-volume level.
    let vols: Vec<f64> = (0..n_len)
        .map(|_| {
            let v = (0.02_f64.ln() + 0.5 * std_normal.sample(&mut rng)).exp();
            v.clamp(0.005, 0.08)
        })
        .collect();
    let vol_levels: Vec<f64> = (0..n_len).map(|_| 0.3 * std_normal.sample(&mut rng)).collect();

    // Log-volume anomalies: AR(1) with high persistence.
    let rho = 0.97_f64;
    let innov = (1.0 - rho * rho).sqrt();
    let mut log_volume = vec![0.0; t_len * n_len];
    for n in 0..n_len {
        let mut a = 0.5 * std_normal.sample(&mut rng);
        for t in 0..t_len {
            if t > 0 {
                a = rho * a + innov * 0.5 * std_normal.sample(&mut rng);
            }
            log_volume[t * n_len + n] = vol_levels[n] + a;
        }
    }

    // Close paths: r_{t+1} = vol * (s * z_t + sqrt(1-s^2) * eps), where z is
    // the cross-sectionally standardized log-volume anomaly at t.
    let s = cfg.signal_strength;
    let noise_mix = (1.0 - s * s).sqrt();
    let mut closes = vec![0.0; t_len * n_len];
    let mut rets = vec![0.0; t_len * n_len]; // rets[t] = return from t-1 to t
    for n in 0..n_len {
        closes[n] = (0.4 * std_normal.sample(&mut rng)).exp();
    }
    for t in 1..t_len {
        let prev_lv = &log_volume[(t - 1) * n_len..t * n_len];
        let z = standardize(prev_lv);
        for n in 0..n_len {
            let shock = s * z[n] + noise_mix * std_normal.sample(&mut rng);
            let r = (vols[n] * shock).max(-0.5);
            rets[t * n_len + n] = r;
            closes[t * n_len + n] = closes[(t - 1) * n_len + n] * (1.0 + r);
        }
    }

    // Intraday structure around the close path.
    let feature_names: Vec<String> = crate::panel::KNOWN_FEATURES
        .iter()
        .map(|s| s.to_string())
        .collect();
    let f_idx = |name: &str| -> usize {
        feature_names
            .iter()
            .position(|f| f == name)
            .expect("known feature")
    };
    let mut values = vec![MISSING; feature_names.len() * n_len * t_len];
    let mut put = |f: usize, n: usize, t: usize, v: f64, values: &mut Vec<f64>| {
        values[(f * n_len + n) * t_len + t] = v;
    };

    let (f_open, f_high, f_low, f_close) =
        (f_idx("open"), f_idx("high"), f_idx("low"), f_idx("close"));
    let (f_adj, f_volume, f_amount, f_vwap, f_change, f_factor) = (
        f_idx("adjclose"),
        f_idx("volume"),
        f_idx("amount"),
        f_idx("vwap"),
        f_idx("change"),
        f_idx("factor"),
    );

    for t in 0..t_len {
        for n in 0..n_len {
            let close = closes[t * n_len + n];
            let prev_close = if t > 0 { closes[(t - 1) * n_len + n] } else { close };
            let gap: f64 = 0.3 * vols[n] * std_normal.sample(&mut rng);
            let open = prev_close * (1.0 + gap);
            let span_hi: f64 = (0.5 * vols[n] * std_normal.sample(&mut rng)).abs();
            let span_lo: f64 = (0.5 * vols[n] * std_normal.sample(&mut rng)).abs();
            let high = open.max(close) * (1.0 + span_hi);
            let low = open.min(close) * (1.0 - span_lo);
            let mix: f64 = rng.gen_range(0.25..0.75);
            let vwap = low + mix * (high - low);
            let volume = log_volume[t * n_len + n].exp();

            put(f_open, n, t, open, &mut values);
            put(f_high, n, t, high, &mut values);
            put(f_low, n, t, low, &mut values);
            put(f_close, n, t, close, &mut values);
            put(f_adj, n, t, close, &mut values);
            put(f_volume, n, t, volume, &mut values);
            put(f_amount, n, t, volume * vwap, &mut values);
            put(f_vwap, n, t, vwap, &mut values);
            put(f_factor, n, t, 1.0, &mut values);
            if t > 0 {
                put(f_change, n, t, rets[t * n_len + n], &mut values);
            }
        }
    }

    let dates: Vec<NaiveDate> = (0..t_len)
        .map(|i| cfg.start_date + chrono::Days::new(i as u64))
        .collect();
    let assets: Vec<String> = (0..n_len).map(|i| format!("S{i:04}")).collect();
    Panel::new(dates, assets, feature_names, values)
}

fn standardize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::metrics::ic;
    use crate::panel::{compute_returns, is_missing};

    #[test]
    fn ohlc_invariants_hold_everywhere() {
        let p = generate_panel(&SynthConfig::new(120, 12, 7)).unwrap();
        let (open, high, low, close, vwap) = (
            p.feature_index("open").unwrap(),
            p.feature_index("high").unwrap(),
            p.feature_index("low").unwrap(),
            p.feature_index("close").unwrap(),
            p.feature_index("vwap").unwrap(),
        );
        for t in 0..p.num_dates() {
            for n in 0..p.num_assets() {
                let (o, h, l, c, v) = (
                    p.get(t, n, open),
                    p.get(t, n, high),
                    p.get(t, n, low),
                    p.get(t, n, close),
                    p.get(t, n, vwap),
                );
                assert!(h >= o.max(c), "high below body at ({t},{n})");
                assert!(l <= o.min(c), "low above body at ({t},{n})");
                assert!(l <= v && v <= h, "vwap outside range at ({t},{n})");
                assert!(l > 0.0, "non-positive low at ({t},{n})");
            }
        }
    }

    #[test]
    fn first_change_row_is_missing_rest_defined() {
        let p = generate_panel(&SynthConfig::new(30, 4, 3)).unwrap();
        let change = p.feature_index("change").unwrap();
        for n in 0..p.num_assets() {
            assert!(is_missing(p.get(0, n, change)));
            for t in 1..p.num_dates() {
                assert!(!is_missing(p.get(t, n, change)));
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let cfg = SynthConfig::new(40, 6, 11).with_signal_strength(0.2);
        let a = generate_panel(&cfg).unwrap();
        let b = generate_panel(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let reloaded = Panel::parse_csv(&a.to_csv(), false).unwrap();
        assert_eq!(reloaded.num_dates(), 40);
        assert_eq!(reloaded.num_assets(), 6);
        for t in 0..40 {
            for n in 0..6 {
                for f in 0..a.num_features() {
                    let (x, y) = (a.get(t, n, f), reloaded.get(t, n, f));
                    assert!((is_missing(x) && is_missing(y)) || x == y);
                }
            }
        }
    }

    #[test]
    fn planted_signal_null_and_power() {
        let expr = parse(PLANTED_ALPHA).unwrap();
        let mut null_ics = Vec::new();
        let mut planted_ics = Vec::new();
        for seed in 0..5 {
            let null_panel =
                generate_panel(&SynthConfig::new(200, 30, 100 + seed)).unwrap();
            let rets = compute_returns(&null_panel, 1).unwrap();
            let sig = crate::engine::evaluate(&expr, &null_panel).unwrap();
            null_ics.push(ic(&sig, &rets).unwrap());

            let planted_panel = generate_panel(
                &SynthConfig::new(200, 30, 100 + seed).with_signal_strength(0.3),
            )
            .unwrap();
            let rets = compute_returns(&planted_panel, 1).unwrap();
            let sig = crate::engine::evaluate(&expr, &planted_panel).unwrap();
            planted_ics.push(ic(&sig, &rets).unwrap());
        }
        let null_mean = null_ics.iter().sum::<f64>() / null_ics.len() as f64;
        let planted_mean = planted_ics.iter().sum::<f64>() / planted_ics.len() as f64;
        assert!(
            null_mean.abs() < 0.02,
            "null IC should be near zero, got {null_mean}"
        );
        assert!(
            planted_mean > 0.1,
            "planted IC should exceed 0.1, got {planted_mean}"
        );
    }
}
