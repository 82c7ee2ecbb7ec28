//! Panel data: the date × asset × feature tensor, forward returns, the
//! volatility proxy used to calibrate noise, and feature-level perturbations.
//!
//! Missing cells are encoded as NaN and propagate through every computation;
//! any operation that touches a missing input yields a missing output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::error::{Error, Result};

/// Feature columns accepted by the loader without `--allow-extra-features`.
pub const KNOWN_FEATURES: [&str; 10] = [
    "open", "high", "low", "close", "adjclose", "volume", "amount", "vwap", "change", "factor",
];

/// Missing-value marker. All arithmetic propagates it.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// T × N × F feature tensor with aligned date and asset axes.
///
/// Immutable after construction; evaluation workers share it read-only.
#[derive(Debug, Clone)]
pub struct Panel {
    dates: Arc<Vec<NaiveDate>>,
    assets: Arc<Vec<String>>,
    features: Vec<String>,
    /// Layout `(feature, asset, time)`: `values[(f * N + n) * T + t]`,
    /// so each per-asset feature series is a contiguous slice.
    values: Vec<f64>,
}

impl Panel {
    /// Build a panel from parts. Dates must be strictly increasing and
    /// assets / feature names unique.
    pub fn new(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        features: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "panel dates must be strictly increasing".into(),
            ));
        }
        for (name, list) in [("assets", &assets), ("features", &features)] {
            let mut seen = std::collections::HashSet::new();
            if !list.iter().all(|x| seen.insert(x)) {
                return Err(Error::InvalidInput(format!("panel {name} must be unique")));
            }
        }
        let expected = dates.len() * assets.len() * features.len();
        if values.len() != expected {
            return Err(Error::InvalidInput(format!(
                "panel tensor has {} cells, expected {}",
                values.len(),
                expected
            )));
        }
        Ok(Panel {
            dates: Arc::new(dates),
            assets: Arc::new(assets),
            features,
            values,
        })
    }

    pub fn num_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn num_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub(crate) fn dates_arc(&self) -> Arc<Vec<NaiveDate>> {
        Arc::clone(&self.dates)
    }

    pub(crate) fn assets_arc(&self) -> Arc<Vec<String>> {
        Arc::clone(&self.assets)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f == name)
    }

    /// Per-asset time series of one feature, length T.
    pub fn series(&self, feature: usize, asset: usize) -> &[f64] {
        let t = self.num_dates();
        let start = (feature * self.num_assets() + asset) * t;
        &self.values[start..start + t]
    }

    pub fn get(&self, t: usize, asset: usize, feature: usize) -> f64 {
        self.values[(feature * self.num_assets() + asset) * self.num_dates() + t]
    }

    /// Load a panel from a long-format CSV (`date,symbol,<feature>...`).
    ///
    /// Absent (date, symbol) rows become missing cells; empty fields are
    /// missing. Unknown feature columns are rejected unless `allow_extra`.
    pub fn load_csv(path: impl AsRef<Path>, allow_extra: bool) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&raw, allow_extra)
    }

    pub fn parse_csv(text: &str, allow_extra: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());

        let headers = reader
            .headers()
            .map_err(|e| Error::CsvParse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let cols: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
        if cols.len() < 3 || cols[0] != "date" || cols[1] != "symbol" {
            return Err(Error::CsvParse {
                line: 1,
                message: format!(
                    "header must start with `date,symbol` and carry at least one feature, got `{}`",
                    cols.join(",")
                ),
            });
        }
        let features: Vec<String> = cols[2..].to_vec();
        for name in &features {
            if !allow_extra && !KNOWN_FEATURES.contains(&name.as_str()) {
                return Err(Error::UnknownFeatureColumn { name: name.clone() });
            }
        }
        {
            let mut seen = std::collections::HashSet::new();
            if !features.iter().all(|f| seen.insert(f)) {
                return Err(Error::CsvParse {
                    line: 1,
                    message: "duplicate feature column in header".into(),
                });
            }
        }

        struct Row {
            line: u64,
            date: NaiveDate,
            symbol: String,
            cells: Vec<f64>,
        }
        let mut rows: Vec<Row> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::CsvParse {
                line: e
                    .position()
                    .map(|p| p.line())
                    .unwrap_or_default(),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or_default();
            if record.len() != cols.len() {
                return Err(Error::CsvParse {
                    line,
                    message: format!("expected {} fields, got {}", cols.len(), record.len()),
                });
            }
            let date_raw = record.get(0).unwrap_or("").trim();
            let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d").map_err(|_| {
                Error::CsvParse {
                    line,
                    message: format!("invalid date `{date_raw}`, expected YYYY-MM-DD"),
                }
            })?;
            let symbol = record.get(1).unwrap_or("").trim().to_string();
            if symbol.is_empty() {
                return Err(Error::CsvParse {
                    line,
                    message: "empty symbol".into(),
                });
            }
            let mut cells = Vec::with_capacity(features.len());
            for (i, field) in record.iter().skip(2).enumerate() {
                let field = field.trim();
                if field.is_empty() {
                    cells.push(MISSING);
                } else {
                    let v: f64 = field.parse().map_err(|_| Error::CsvParse {
                        line,
                        message: format!(
                            "invalid number `{field}` in column `{}`",
                            features[i]
                        ),
                    })?;
                    cells.push(v);
                }
            }
            rows.push(Row {
                line,
                date,
                symbol,
                cells,
            });
        }
        if rows.is_empty() {
            return Err(Error::CsvParse {
                line: 1,
                message: "no data rows".into(),
            });
        }

        let mut date_set: Vec<NaiveDate> = rows.iter().map(|r| r.date).collect();
        date_set.sort_unstable();
        date_set.dedup();
        let mut asset_set: Vec<String> = rows.iter().map(|r| r.symbol.clone()).collect();
        asset_set.sort_unstable();
        asset_set.dedup();
        let date_idx: BTreeMap<NaiveDate, usize> =
            date_set.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let asset_idx: BTreeMap<&str, usize> = asset_set
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();

        let (t_len, n_len, f_len) = (date_set.len(), asset_set.len(), features.len());
        let mut values = vec![MISSING; t_len * n_len * f_len];
        let mut filled = vec![false; t_len * n_len];
        for row in &rows {
            let t = date_idx[&row.date];
            let n = asset_idx[row.symbol.as_str()];
            if filled[t * n_len + n] {
                return Err(Error::DuplicateKey {
                    line: row.line,
                    date: row.date.to_string(),
                    symbol: row.symbol.clone(),
                });
            }
            filled[t * n_len + n] = true;
            for (f, v) in row.cells.iter().enumerate() {
                values[(f * n_len + n) * t_len + t] = *v;
            }
        }

        Panel::new(date_set, asset_set, features, values)
    }

    /// Serialize back to the long CSV format. Non-missing values round-trip
    /// exactly (shortest-exact float formatting).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("date,symbol");
        for f in &self.features {
            out.push(',');
            out.push_str(f);
        }
        out.push('\n');
        for t in 0..self.num_dates() {
            for n in 0..self.num_assets() {
                let _ = write!(out, "{},{}", self.dates[t], self.assets[n]);
                for f in 0..self.num_features() {
                    let v = self.get(t, n, f);
                    if is_missing(v) {
                        out.push(',');
                    } else {
                        let _ = write!(out, ",{v}");
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Return a copy with i.i.d. noise added to every non-missing cell.
    ///
    /// Deterministic for a given (panel, spec).
    pub fn perturb(&self, spec: &NoiseSpec) -> Result<Panel> {
        spec.validate()?;
        let mut out = self.clone();
        if spec.sigma == 0.0 {
            return Ok(out);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        match spec.family {
            NoiseFamily::Gaussian => {
                let dist = Normal::new(0.0, spec.sigma)
                    .map_err(|e| Error::InvalidNoiseSpec(e.to_string()))?;
                for v in out.values.iter_mut() {
                    if !is_missing(*v) {
                        *v += dist.sample(&mut rng);
                    }
                }
            }
            NoiseFamily::StudentT { nu } => {
                let dist =
                    StudentT::new(nu).map_err(|e| Error::InvalidNoiseSpec(e.to_string()))?;
                // t(nu) has variance nu/(nu-2); rescale so the output
                // standard deviation equals sigma.
                let scale = spec.sigma * ((nu - 2.0) / nu).sqrt();
                for v in out.values.iter_mut() {
                    if !is_missing(*v) {
                        *v += scale * dist.sample(&mut rng);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Perturbation family for robustness scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFamily {
    Gaussian,
    StudentT { nu: f64 },
}

/// One perturbation configuration: family, target standard deviation
/// (in return units), and RNG seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            family: NoiseFamily::Gaussian,
            sigma,
            seed,
        }
    }

    pub fn student_t(sigma: f64, nu: f64, seed: u64) -> Self {
        NoiseSpec {
            family: NoiseFamily::StudentT { nu },
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidNoiseSpec(format!(
                "sigma must be a nonnegative finite number, got {}",
                self.sigma
            )));
        }
        if let NoiseFamily::StudentT { nu } = self.family {
            if !(nu > 2.0) {
                return Err(Error::InvalidNoiseSpec(format!(
                    "student-t requires nu > 2 so the variance rescaling is defined, got {nu}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// T × N forward returns at a fixed horizon. Missing where undefined.
#[derive(Debug, Clone)]
pub struct ReturnMatrix {
    pub horizon: usize,
    dates: Arc<Vec<NaiveDate>>,
    assets: Arc<Vec<String>>,
    /// Row-major (time, asset): `values[t * N + n]`.
    values: Vec<f64>,
}

impl ReturnMatrix {
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

    #[cfg(test)]
    pub(crate) fn from_raw(
        horizon: usize,
        dates: Arc<Vec<NaiveDate>>,
        assets: Arc<Vec<String>>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(values.len(), dates.len() * assets.len());
        ReturnMatrix {
            horizon,
            dates,
            assets,
            values,
        }
    }
}

/// Forward returns `(close[t+dt] - close[t]) / close[t]` per asset.
///
/// The last `dt` rows are missing, as is any cell whose endpoints are
/// missing or whose base close is zero.
pub fn compute_returns(panel: &Panel, dt: usize) -> Result<ReturnMatrix> {
    if dt == 0 {
        return Err(Error::InvalidParameter("return horizon must be >= 1".into()));
    }
    let close = panel
        .feature_index("close")
        .ok_or(Error::MissingFeature {
            name: "close".into(),
        })?;
    let (t_len, n_len) = (panel.num_dates(), panel.num_assets());
    let mut values = vec![MISSING; t_len * n_len];
    for n in 0..n_len {
        let series = panel.series(close, n);
        for t in 0..t_len.saturating_sub(dt) {
            let (c0, c1) = (series[t], series[t + dt]);
            if is_missing(c0) || is_missing(c1) || c0 == 0.0 {
                continue;
            }
            values[t * n_len + n] = (c1 - c0) / c0;
        }
    }
    Ok(ReturnMatrix {
        horizon: dt,
        dates: panel.dates_arc(),
        assets: panel.assets_arc(),
        values,
    })
}

/// Volatility proxy: sample standard deviation of the equal-weight
/// cross-sectional mean return series.
pub fn index_volatility(returns: &ReturnMatrix) -> Result<f64> {
    let mut index_returns = Vec::new();
    for t in 0..returns.num_dates() {
        let row = returns.row(t);
        let valid: Vec<f64> = row.iter().copied().filter(|v| !is_missing(*v)).collect();
        if !valid.is_empty() {
            index_returns.push(valid.iter().sum::<f64>() / valid.len() as f64);
        }
    }
    if index_returns.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "index volatility needs at least 2 dates with a defined return, got {}",
            index_returns.len()
        )));
    }
    let n = index_returns.len() as f64;
    let mean = index_returns.iter().sum::<f64>() / n;
    let var = index_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt())
}
