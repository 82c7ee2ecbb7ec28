//! The alpha expression language: AST, operator table, canonical printing,
//! lookback analysis, and schema validation.
//!
//! Expressions are prefix function calls over feature identifiers and real
//! constants, e.g. `Div(Sub(close, open), open)` or `Corr(close, volume, 10)`.

mod parser;
pub mod random;

pub use parser::{parse, ParseError, ParseErrorKind};

use std::fmt;

use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Abs,
    Sign,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Power,
    Greater,
    Less,
}

/// Time-shift operators taking a day count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftOp {
    /// Value d days ago.
    Ref,
    /// Today's value minus the value d days ago.
    Delta,
}

/// Rolling-window operators over one series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RollingOp {
    Wma,
    Ema,
    Min,
    Max,
    IdxMax,
    IdxMin,
    Rank,
    Sum,
    Mean,
    Std,
    Var,
    Skew,
    Kurt,
    Med,
    Mad,
    Slope,
    Rsquare,
    Resi,
}

/// Rolling-window operators over two series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RollingBinaryOp {
    Corr,
    Cov,
}

/// Parsed alpha expression.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaExpr {
    Feature(String),
    Constant(f64),
    Unary {
        op: UnaryOp,
        child: Box<AlphaExpr>,
    },
    Binary {
        op: BinaryOp,
        left: Box<AlphaExpr>,
        right: Box<AlphaExpr>,
    },
    Shift {
        op: ShiftOp,
        child: Box<AlphaExpr>,
        days: usize,
    },
    Rolling {
        op: RollingOp,
        child: Box<AlphaExpr>,
        window: usize,
    },
    RollingBinary {
        op: RollingBinaryOp,
        left: Box<AlphaExpr>,
        right: Box<AlphaExpr>,
        window: usize,
    },
}

/// Operator kind, used by the parser, the exhaustive table test, and the
/// random generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    Unary(UnaryOp),
    Binary(BinaryOp),
    Shift(ShiftOp),
    Rolling(RollingOp),
    RollingBinary(RollingBinaryOp),
}

impl OpKind {
    /// Total argument count as written in source, including the day/window slot.
    pub fn arity(self) -> usize {
        match self {
            OpKind::Unary(_) => 1,
            OpKind::Binary(_) | OpKind::Shift(_) | OpKind::Rolling(_) => 2,
            OpKind::RollingBinary(_) => 3,
        }
    }
}

/// The full operator table: 32 operators, case-sensitive names.
pub const OPERATOR_TABLE: [(&str, OpKind); 32] = [
    ("Abs", OpKind::Unary(UnaryOp::Abs)),
    ("Sign", OpKind::Unary(UnaryOp::Sign)),
    ("Log", OpKind::Unary(UnaryOp::Log)),
    ("Power", OpKind::Binary(BinaryOp::Power)),
    ("Add", OpKind::Binary(BinaryOp::Add)),
    ("Sub", OpKind::Binary(BinaryOp::Sub)),
    ("Mul", OpKind::Binary(BinaryOp::Mul)),
    ("Div", OpKind::Binary(BinaryOp::Div)),
    ("Greater", OpKind::Binary(BinaryOp::Greater)),
    ("Less", OpKind::Binary(BinaryOp::Less)),
    ("Ref", OpKind::Shift(ShiftOp::Ref)),
    ("Delta", OpKind::Shift(ShiftOp::Delta)),
    ("WMA", OpKind::Rolling(RollingOp::Wma)),
    ("EMA", OpKind::Rolling(RollingOp::Ema)),
    ("Min", OpKind::Rolling(RollingOp::Min)),
    ("Max", OpKind::Rolling(RollingOp::Max)),
    ("IdxMax", OpKind::Rolling(RollingOp::IdxMax)),
    ("IdxMin", OpKind::Rolling(RollingOp::IdxMin)),
    ("Rank", OpKind::Rolling(RollingOp::Rank)),
    ("Sum", OpKind::Rolling(RollingOp::Sum)),
    ("Mean", OpKind::Rolling(RollingOp::Mean)),
    ("Std", OpKind::Rolling(RollingOp::Std)),
    ("Var", OpKind::Rolling(RollingOp::Var)),
    ("Skew", OpKind::Rolling(RollingOp::Skew)),
    ("Kurt", OpKind::Rolling(RollingOp::Kurt)),
    ("Med", OpKind::Rolling(RollingOp::Med)),
    ("Mad", OpKind::Rolling(RollingOp::Mad)),
    ("Slope", OpKind::Rolling(RollingOp::Slope)),
    ("Rsquare", OpKind::Rolling(RollingOp::Rsquare)),
    ("Resi", OpKind::Rolling(RollingOp::Resi)),
    ("Corr", OpKind::RollingBinary(RollingBinaryOp::Corr)),
    ("Cov", OpKind::RollingBinary(RollingBinaryOp::Cov)),
];

pub fn lookup_operator(name: &str) -> Option<OpKind> {
    OPERATOR_TABLE
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, k)| *k)
}

pub fn operator_name(kind: OpKind) -> &'static str {
    OPERATOR_TABLE
        .iter()
        .find(|(_, k)| *k == kind)
        .map(|(n, _)| *n)
        .expect("operator kind present in table")
}

impl fmt::Display for AlphaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaExpr::Feature(name) => write!(f, "{name}"),
            AlphaExpr::Constant(c) => write!(f, "{c}"),
            AlphaExpr::Unary { op, child } => {
                write!(f, "{}({child})", operator_name(OpKind::Unary(*op)))
            }
            AlphaExpr::Binary { op, left, right } => {
                write!(f, "{}({left}, {right})", operator_name(OpKind::Binary(*op)))
            }
            AlphaExpr::Shift { op, child, days } => {
                write!(f, "{}({child}, {days})", operator_name(OpKind::Shift(*op)))
            }
            AlphaExpr::Rolling { op, child, window } => write!(
                f,
                "{}({child}, {window})",
                operator_name(OpKind::Rolling(*op))
            ),
            AlphaExpr::RollingBinary {
                op,
                left,
                right,
                window,
            } => write!(
                f,
                "{}({left}, {right}, {window})",
                operator_name(OpKind::RollingBinary(*op))
            ),
        }
    }
}

impl AlphaExpr {
    /// Minimum history length L such that the value at time t depends only
    /// on inputs from t-L+1..=t.
    pub fn lookback(&self) -> usize {
        match self {
            AlphaExpr::Feature(_) | AlphaExpr::Constant(_) => 1,
            AlphaExpr::Unary { child, .. } => child.lookback(),
            AlphaExpr::Binary { left, right, .. } => left.lookback().max(right.lookback()),
            AlphaExpr::Shift { child, days, .. } => child.lookback() + days,
            AlphaExpr::Rolling { child, window, .. } => child.lookback() + window - 1,
            AlphaExpr::RollingBinary {
                left,
                right,
                window,
                ..
            } => left.lookback().max(right.lookback()) + window - 1,
        }
    }

    /// Nesting depth: leaves are 0, each call adds 1.
    pub fn depth(&self) -> usize {
        match self {
            AlphaExpr::Feature(_) | AlphaExpr::Constant(_) => 0,
            AlphaExpr::Unary { child, .. }
            | AlphaExpr::Shift { child, .. }
            | AlphaExpr::Rolling { child, .. } => 1 + child.depth(),
            AlphaExpr::Binary { left, right, .. }
            | AlphaExpr::RollingBinary { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Iterate over all feature names referenced by the expression.
    pub fn features(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_features(&mut out);
        out
    }

    fn collect_features<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            AlphaExpr::Feature(name) => out.push(name),
            AlphaExpr::Constant(_) => {}
            AlphaExpr::Unary { child, .. }
            | AlphaExpr::Shift { child, .. }
            | AlphaExpr::Rolling { child, .. } => child.collect_features(out),
            AlphaExpr::Binary { left, right, .. }
            | AlphaExpr::RollingBinary { left, right, .. } => {
                left.collect_features(out);
                right.collect_features(out);
            }
        }
    }
}

/// An expression together with its source text, as evaluated and reported.
#[derive(Debug, Clone)]
pub struct Alpha {
    pub source: String,
    pub expr: AlphaExpr,
}

impl Alpha {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Ok(Alpha {
            source: text.trim().to_string(),
            expr: parse(text)?,
        })
    }
}

/// Panel schema seen by validation: available features plus history length.
#[derive(Debug, Clone)]
pub struct Schema {
    pub features: Vec<String>,
    pub num_dates: usize,
}

impl Schema {
    pub fn from_panel(panel: &Panel) -> Self {
        Schema {
            features: panel.features().to_vec(),
            num_dates: panel.num_dates(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    UnknownFeature,
    WindowTooLarge,
    NonConstantExponent,
    FractionalExponent,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub severity: Severity,
    pub message: String,
}

/// Static checks against a panel schema. Never aborts; returns all findings.
///
/// An expression is usable when no `Error`-severity diagnostics come back.
pub fn validate(expr: &AlphaExpr, schema: &Schema) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    walk(expr, schema, &mut out);
    out
}

pub fn is_valid(diags: &[Diagnostic]) -> bool {
    diags.iter().all(|d| d.severity != Severity::Error)
}

fn walk(expr: &AlphaExpr, schema: &Schema, out: &mut Vec<Diagnostic>) {
    match expr {
        AlphaExpr::Feature(name) => {
            if !schema.features.iter().any(|f| f == name) {
                out.push(Diagnostic {
                    kind: DiagnosticKind::UnknownFeature,
                    severity: Severity::Error,
                    message: format!("unknown feature `{name}`"),
                });
            }
        }
        AlphaExpr::Constant(_) => {}
        AlphaExpr::Unary { child, .. } => walk(child, schema, out),
        AlphaExpr::Binary { op, left, right } => {
            if *op == BinaryOp::Power {
                match right.as_ref() {
                    AlphaExpr::Constant(c) => {
                        if c.fract() != 0.0 {
                            out.push(Diagnostic {
                                kind: DiagnosticKind::FractionalExponent,
                                severity: Severity::Warning,
                                message: format!(
                                    "Power exponent {c} is fractional; negative bases evaluate to missing"
                                ),
                            });
                        }
                    }
                    _ => out.push(Diagnostic {
                        kind: DiagnosticKind::NonConstantExponent,
                        severity: Severity::Error,
                        message: "Power exponent must be a constant".into(),
                    }),
                }
            }
            walk(left, schema, out);
            walk(right, schema, out);
        }
        AlphaExpr::Shift { child, days, .. } => {
            check_window(*days, schema, out);
            walk(child, schema, out);
        }
        AlphaExpr::Rolling { child, window, .. } => {
            check_window(*window, schema, out);
            walk(child, schema, out);
        }
        AlphaExpr::RollingBinary {
            left,
            right,
            window,
            ..
        } => {
            check_window(*window, schema, out);
            walk(left, schema, out);
            walk(right, schema, out);
        }
    }
}

fn check_window(window: usize, schema: &Schema, out: &mut Vec<Diagnostic>) {
    if window > schema.num_dates {
        out.push(Diagnostic {
            kind: DiagnosticKind::WindowTooLarge,
            severity: Severity::Error,
            message: format!(
                "window {window} exceeds panel length {}",
                schema.num_dates
            ),
        });
    }
}

/// Parse an alpha-list text: one expression per line, `#` comments and blank
/// lines ignored. Returns (1-based line number, text) pairs.
pub fn alpha_list_lines(text: &str) -> Vec<(usize, String)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let stripped = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if stripped.is_empty() {
                None
            } else {
                Some((i + 1, stripped.to_string()))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema {
            features: crate::panel::KNOWN_FEATURES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            num_dates: 500,
        }
    }

    #[test]
    fn lookback_leaf() {
        assert_eq!(parse("close").unwrap().lookback(), 1);
        assert_eq!(parse("3.5").unwrap().lookback(), 1);
    }

    #[test]
    fn lookback_shift_and_rolling() {
        assert_eq!(parse("Ref(close, 2)").unwrap().lookback(), 3);
        assert_eq!(parse("Mean(Ref(close, 2), 3)").unwrap().lookback(), 5);
        assert_eq!(parse("Delta(close, 5)").unwrap().lookback(), 6);
        assert_eq!(parse("Corr(close, Ref(open, 1), 10)").unwrap().lookback(), 11);
    }

    #[test]
    fn lookback_elementwise_is_max() {
        assert_eq!(
            parse("Add(Ref(close, 4), Mean(open, 3))").unwrap().lookback(),
            5
        );
    }

    #[test]
    fn lookback_monotone_under_wrapping() {
        let inner = parse("Div(Sub(close, open), open)").unwrap();
        let base = inner.lookback();
        for d in [1usize, 2, 7] {
            let rolled = AlphaExpr::Rolling {
                op: RollingOp::Mean,
                child: Box::new(inner.clone()),
                window: d,
            };
            assert_eq!(rolled.lookback(), base + d - 1);
            let shifted = AlphaExpr::Shift {
                op: ShiftOp::Ref,
                child: Box::new(inner.clone()),
                days: d,
            };
            assert_eq!(shifted.lookback(), base + d);
        }
    }

    #[test]
    fn validate_accepts_known_features() {
        let e = parse("Mean(vwap, 5)").unwrap();
        assert!(is_valid(&validate(&e, &schema())));
    }

    #[test]
    fn validate_flags_unknown_feature() {
        let e = parse("Mean(pe_ratio, 5)").unwrap();
        let diags = validate(&e, &schema());
        assert!(!is_valid(&diags));
        assert!(diags
            .iter()
            .any(|d| d.kind == DiagnosticKind::UnknownFeature));
    }

    #[test]
    fn validate_flags_oversized_window() {
        let e = parse("Mean(close, 10000)").unwrap();
        let diags = validate(&e, &schema());
        assert!(diags
            .iter()
            .any(|d| d.kind == DiagnosticKind::WindowTooLarge));
    }

    #[test]
    fn validate_flags_non_constant_exponent() {
        let e = parse("Power(close, open)").unwrap();
        let diags = validate(&e, &schema());
        assert!(diags
            .iter()
            .any(|d| d.kind == DiagnosticKind::NonConstantExponent));
        let ok = parse("Power(close, 2)").unwrap();
        assert!(is_valid(&validate(&ok, &schema())));
    }

    #[test]
    fn alpha_list_skips_comments_and_blanks() {
        let text = "# header\nMean(close, 5)\n\nRef(open, 1) # trailing\n";
        let lines = alpha_list_lines(text);
        assert_eq!(
            lines,
            vec![(2, "Mean(close, 5)".to_string()), (4, "Ref(open, 1)".to_string())]
        );
    }
}
