//! Grammar-driven random expression sampling, used for baseline alpha sets
//! and for property tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AlphaExpr, BinaryOp, RollingBinaryOp, RollingOp, ShiftOp, UnaryOp};

/// Which slice of the operator table to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpProfile {
    /// The full 32-operator table.
    Full,
    /// Operators guaranteed to produce a value on any fully populated,
    /// continuously distributed window: excludes Log, Sign, Greater and
    /// Less, restricts Power to small integer exponents, and skips
    /// constant leaves. Useful when downstream analysis needs dense
    /// signal matrices.
    Dense,
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub features: Vec<String>,
    pub max_depth: usize,
    pub max_window: usize,
    pub profile: OpProfile,
}

impl GeneratorConfig {
    pub fn new(features: Vec<String>) -> Self {
        GeneratorConfig {
            features,
            max_depth: 4,
            max_window: 20,
            profile: OpProfile::Full,
        }
    }
}

const UNARY_FULL: [UnaryOp; 3] = [UnaryOp::Abs, UnaryOp::Sign, UnaryOp::Log];
const UNARY_DENSE: [UnaryOp; 1] = [UnaryOp::Abs];
const BINARY_FULL: [BinaryOp; 7] = [
    BinaryOp::Add,
    BinaryOp::Sub,
    BinaryOp::Mul,
    BinaryOp::Div,
    BinaryOp::Power,
    BinaryOp::Greater,
    BinaryOp::Less,
];
const BINARY_DENSE: [BinaryOp; 5] = [
    BinaryOp::Add,
    BinaryOp::Sub,
    BinaryOp::Mul,
    BinaryOp::Div,
    BinaryOp::Power,
];
const SHIFTS: [ShiftOp; 2] = [ShiftOp::Ref, ShiftOp::Delta];
const ROLLING: [RollingOp; 18] = [
    RollingOp::Wma,
    RollingOp::Ema,
    RollingOp::Min,
    RollingOp::Max,
    RollingOp::IdxMax,
    RollingOp::IdxMin,
    RollingOp::Rank,
    RollingOp::Sum,
    RollingOp::Mean,
    RollingOp::Std,
    RollingOp::Var,
    RollingOp::Skew,
    RollingOp::Kurt,
    RollingOp::Med,
    RollingOp::Mad,
    RollingOp::Slope,
    RollingOp::Rsquare,
    RollingOp::Resi,
];
const ROLLING_BINARY: [RollingBinaryOp; 2] = [RollingBinaryOp::Corr, RollingBinaryOp::Cov];

/// Smallest window at which the operator is defined (sample statistics need
/// d-1, d-2, d-3 denominators).
fn min_window(op: RollingOp) -> usize {
    match op {
        RollingOp::Std | RollingOp::Var | RollingOp::Slope | RollingOp::Rsquare
        | RollingOp::Resi => 2,
        RollingOp::Skew => 3,
        RollingOp::Kurt => 4,
        _ => 1,
    }
}

fn sample_window(rng: &mut impl Rng, floor: usize, max_window: usize) -> usize {
    rng.gen_range(floor..=max_window.max(floor))
}

fn leaf(cfg: &GeneratorConfig, rng: &mut impl Rng) -> AlphaExpr {
    if cfg.profile == OpProfile::Full && rng.gen_bool(0.12) {
        // Small constants; quantized so printing stays tidy.
        let c = (rng.gen_range(-30i32..=30) as f64) / 10.0;
        AlphaExpr::Constant(c)
    } else {
        let name = cfg
            .features
            .choose(rng)
            .expect("generator needs at least one feature")
            .clone();
        AlphaExpr::Feature(name)
    }
}

fn node(cfg: &GeneratorConfig, rng: &mut impl Rng, depth_left: usize) -> AlphaExpr {
    if depth_left == 0 || rng.gen_bool(0.18) {
        return leaf(cfg, rng);
    }
    let dense = cfg.profile == OpProfile::Dense;
    // Weighted pick over the five shapes.
    let roll = rng.gen_range(0..100);
    if roll < 12 {
        let ops: &[UnaryOp] = if dense { &UNARY_DENSE } else { &UNARY_FULL };
        AlphaExpr::Unary {
            op: *ops.choose(rng).unwrap(),
            child: Box::new(node(cfg, rng, depth_left - 1)),
        }
    } else if roll < 32 {
        let ops: &[BinaryOp] = if dense { &BINARY_DENSE } else { &BINARY_FULL };
        let op = *ops.choose(rng).unwrap();
        if op == BinaryOp::Power {
            let exponent = if dense {
                AlphaExpr::Constant(rng.gen_range(1i32..=3) as f64)
            } else {
                AlphaExpr::Constant((rng.gen_range(2i32..=6) as f64) / 2.0)
            };
            AlphaExpr::Binary {
                op,
                left: Box::new(node(cfg, rng, depth_left - 1)),
                right: Box::new(exponent),
            }
        } else {
            AlphaExpr::Binary {
                op,
                left: Box::new(node(cfg, rng, depth_left - 1)),
                right: Box::new(node(cfg, rng, depth_left - 1)),
            }
        }
    } else if roll < 44 {
        AlphaExpr::Shift {
            op: *SHIFTS.choose(rng).unwrap(),
            child: Box::new(node(cfg, rng, depth_left - 1)),
            days: sample_window(rng, 1, cfg.max_window.min(10)),
        }
    } else if roll < 86 {
        let op = *ROLLING.choose(rng).unwrap();
        let floor = if dense { min_window(op).max(2) } else { min_window(op) };
        AlphaExpr::Rolling {
            op,
            child: Box::new(node(cfg, rng, depth_left - 1)),
            window: sample_window(rng, floor, cfg.max_window),
        }
    } else {
        let op = *ROLLING_BINARY.choose(rng).unwrap();
        let (mut left, mut right) = (
            node(cfg, rng, depth_left - 1),
            node(cfg, rng, depth_left - 1),
        );
        if dense {
            // Correlation against a constant is missing everywhere.
            if matches!(left, AlphaExpr::Constant(_)) {
                left = leaf(cfg, rng);
            }
            if matches!(right, AlphaExpr::Constant(_)) {
                right = leaf(cfg, rng);
            }
        }
        AlphaExpr::RollingBinary {
            op,
            left: Box::new(left),
            right: Box::new(right),
            window: sample_window(rng, 2, cfg.max_window),
        }
    }
}

/// Sample a single expression with nesting depth at most `cfg.max_depth`.
pub fn random_expr(cfg: &GeneratorConfig, rng: &mut impl Rng) -> AlphaExpr {
    // Always produce at least one operator application.
    let expr = node(cfg, rng, cfg.max_depth);
    if matches!(expr, AlphaExpr::Feature(_) | AlphaExpr::Constant(_)) && cfg.max_depth > 0 {
        AlphaExpr::Rolling {
            op: RollingOp::Mean,
            child: Box::new(leaf(cfg, rng)),
            window: sample_window(rng, 2, cfg.max_window),
        }
    } else {
        expr
    }
}

/// Deterministically sample `count` distinct expressions.
pub fn random_exprs(cfg: &GeneratorConfig, count: usize, seed: u64) -> Vec<AlphaExpr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut stale = 0usize;
    while out.len() < count {
        let e = random_expr(cfg, &mut rng);
        let text = e.to_string();
        if seen.insert(text) {
            out.push(e);
            stale = 0;
        } else {
            stale += 1;
            // The grammar space at small depth can be exhausted.
            if stale > 10_000 {
                out.push(e);
                stale = 0;
            }
        }
    }
    out
}
