//! Rolling-window and elementwise operator kernels.
//!
//! Conventions:
//! - a window containing any missing value emits missing (no partial windows);
//! - non-finite results are coerced to missing;
//! - variance-family statistics use the sample convention (d-1 divisor),
//!   skewness and kurtosis carry the usual small-sample bias correction,
//!   and kurtosis is excess kurtosis;
//! - ranks average ties; IdxMax/IdxMin break ties toward the most recent day;
//! - regression statistics fit the window values against the time index
//!   0..d-1 (oldest first) and go missing on zero-variance windows.

use crate::expr::{RollingBinaryOp, RollingOp};
use crate::panel::{is_missing, MISSING};

#[inline]
fn coerce(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        MISSING
    }
}

fn window_mean(w: &[f64]) -> f64 {
    w.iter().sum::<f64>() / w.len() as f64
}

/// Centered sum of squares; exactly zero for constant windows.
fn centered_m2(w: &[f64], mean: f64) -> f64 {
    w.iter().map(|x| (x - mean) * (x - mean)).sum()
}

fn wma(w: &[f64]) -> f64 {
    let d = w.len();
    let denom = (d * (d + 1)) as f64 / 2.0;
    let num: f64 = w
        .iter()
        .enumerate()
        .map(|(i, x)| (i + 1) as f64 * x)
        .sum();
    num / denom
}

fn ema(w: &[f64]) -> f64 {
    let alpha = 2.0 / (w.len() as f64 + 1.0);
    let mut e = w[0];
    for x in &w[1..] {
        e = alpha * x + (1.0 - alpha) * e;
    }
    e
}

fn median_of(mut sorted: Vec<f64>) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in window"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn rank_of_last(w: &[f64]) -> f64 {
    let today = w[w.len() - 1];
    let mut less = 0usize;
    let mut equal = 0usize;
    for x in w {
        if *x < today {
            less += 1;
        } else if *x == today {
            equal += 1;
        }
    }
    less as f64 + (equal as f64 + 1.0) / 2.0
}

fn idx_extreme(w: &[f64], want_max: bool) -> f64 {
    // i counts days ago: 0 = today. Strict comparison keeps the most
    // recent occurrence on ties.
    let mut best_idx = 0usize;
    let mut best = w[w.len() - 1];
    for i in 1..w.len() {
        let v = w[w.len() - 1 - i];
        if (want_max && v > best) || (!want_max && v < best) {
            best = v;
            best_idx = i;
        }
    }
    best_idx as f64
}

fn skew(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    if w.len() < 3 {
        return MISSING;
    }
    let mean = window_mean(w);
    let m2 = centered_m2(w, mean);
    let s = (m2 / (n - 1.0)).sqrt();
    if s == 0.0 {
        return MISSING;
    }
    let sum3: f64 = w.iter().map(|x| ((x - mean) / s).powi(3)).sum();
    n / ((n - 1.0) * (n - 2.0)) * sum3
}

fn kurt(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    if w.len() < 4 {
        return MISSING;
    }
    let mean = window_mean(w);
    let m2 = centered_m2(w, mean);
    let s = (m2 / (n - 1.0)).sqrt();
    if s == 0.0 {
        return MISSING;
    }
    let sum4: f64 = w.iter().map(|x| ((x - mean) / s).powi(4)).sum();
    n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0)) * sum4
        - 3.0 * (n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0))
}

/// OLS of window values against the time index 0..d-1.
/// Returns (slope, rsquare, today's residual); missing on zero x-variance.
fn regression(w: &[f64]) -> (f64, f64, f64) {
    let d = w.len();
    if d < 2 {
        return (MISSING, MISSING, MISSING);
    }
    let n = d as f64;
    let idx_mean = (n - 1.0) / 2.0;
    let x_mean = window_mean(w);
    let sxx = centered_m2(w, x_mean);
    if sxx == 0.0 {
        return (MISSING, MISSING, MISSING);
    }
    // Sum of (i - idx_mean)^2 has the closed form d(d^2-1)/12.
    let sii = n * (n * n - 1.0) / 12.0;
    let six: f64 = w
        .iter()
        .enumerate()
        .map(|(i, x)| (i as f64 - idx_mean) * (x - x_mean))
        .sum();
    let slope = six / sii;
    let rsquare = six * six / (sii * sxx);
    let resi = (w[d - 1] - x_mean) - slope * (n - 1.0 - idx_mean);
    (slope, rsquare, resi)
}

fn apply_rolling(op: RollingOp, w: &[f64]) -> f64 {
    let n = w.len() as f64;
    match op {
        RollingOp::Sum => w.iter().sum(),
        RollingOp::Mean => window_mean(w),
        RollingOp::Min => w.iter().copied().fold(f64::INFINITY, f64::min),
        RollingOp::Max => w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        RollingOp::IdxMax => idx_extreme(w, true),
        RollingOp::IdxMin => idx_extreme(w, false),
        RollingOp::Rank => rank_of_last(w),
        RollingOp::Wma => wma(w),
        RollingOp::Ema => ema(w),
        RollingOp::Var => {
            if w.len() < 2 {
                MISSING
            } else {
                centered_m2(w, window_mean(w)) / (n - 1.0)
            }
        }
        RollingOp::Std => {
            if w.len() < 2 {
                MISSING
            } else {
                (centered_m2(w, window_mean(w)) / (n - 1.0)).sqrt()
            }
        }
        RollingOp::Skew => skew(w),
        RollingOp::Kurt => kurt(w),
        RollingOp::Med => median_of(w.to_vec()),
        RollingOp::Mad => {
            let med = median_of(w.to_vec());
            median_of(w.iter().map(|x| (x - med).abs()).collect())
        }
        RollingOp::Slope => regression(w).0,
        RollingOp::Rsquare => regression(w).1,
        RollingOp::Resi => regression(w).2,
    }
}

fn apply_rolling_binary(op: RollingBinaryOp, wx: &[f64], wy: &[f64]) -> f64 {
    let n = wx.len() as f64;
    if wx.len() < 2 {
        return MISSING;
    }
    let (mx, my) = (window_mean(wx), window_mean(wy));
    let sxy: f64 = wx
        .iter()
        .zip(wy)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    match op {
        RollingBinaryOp::Cov => sxy / (n - 1.0),
        RollingBinaryOp::Corr => {
            let sxx = centered_m2(wx, mx);
            let syy = centered_m2(wy, my);
            if sxx == 0.0 || syy == 0.0 {
                MISSING
            } else {
                sxy / (sxx.sqrt() * syy.sqrt())
            }
        }
    }
}

/// Rolling operator over one series; `out[t]` is missing until the window
/// at `t` is fully populated.
pub fn rolling_unary(op: RollingOp, xs: &[f64], window: usize, out: &mut [f64]) {
    debug_assert_eq!(xs.len(), out.len());
    out.fill(MISSING);
    if window == 0 || window > xs.len() {
        return;
    }
    for t in (window - 1)..xs.len() {
        let w = &xs[t + 1 - window..=t];
        if w.iter().any(|v| is_missing(*v)) {
            continue;
        }
        out[t] = coerce(apply_rolling(op, w));
    }
}

/// Rolling operator over two aligned series.
pub fn rolling_binary(
    op: RollingBinaryOp,
    xs: &[f64],
    ys: &[f64],
    window: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert_eq!(xs.len(), out.len());
    out.fill(MISSING);
    if window == 0 || window > xs.len() {
        return;
    }
    for t in (window - 1)..xs.len() {
        let wx = &xs[t + 1 - window..=t];
        let wy = &ys[t + 1 - window..=t];
        if wx.iter().any(|v| is_missing(*v)) || wy.iter().any(|v| is_missing(*v)) {
            continue;
        }
        out[t] = coerce(apply_rolling_binary(op, wx, wy));
    }
}

pub fn elementwise_unary(op: crate::expr::UnaryOp, x: f64) -> f64 {
    use crate::expr::UnaryOp;
    if is_missing(x) {
        return MISSING;
    }
    coerce(match op {
        UnaryOp::Abs => x.abs(),
        UnaryOp::Sign => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        UnaryOp::Log => x.ln(),
    })
}

pub fn elementwise_binary(op: crate::expr::BinaryOp, x: f64, y: f64) -> f64 {
    use crate::expr::BinaryOp;
    if is_missing(x) || is_missing(y) {
        return MISSING;
    }
    coerce(match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => x / y,
        BinaryOp::Power => x.powf(y),
        BinaryOp::Greater => {
            if x > y {
                1.0
            } else {
                0.0
            }
        }
        BinaryOp::Less => {
            if x < y {
                1.0
            } else {
                0.0
            }
        }
    })
}
