//! Recursive-descent parser for the prefix function-call grammar.
//!
//! ```text
//! expr   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')'
//! ```
//!
//! Operator names are case-sensitive; day/window arguments must be positive
//! integer literals. Whitespace is insignificant.

use std::fmt;

use super::{lookup_operator, AlphaExpr, OpKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownOperator,
    Arity,
    Window,
}

#[derive(Debug, Clone)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte span in the source text.
    pub span: (usize, usize),
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at bytes {}..{}",
            self.message, self.span.0, self.span.1
        )
    }
}

impl std::error::Error for ParseError {}

fn err(kind: ParseErrorKind, span: (usize, usize), message: impl Into<String>) -> ParseError {
    ParseError {
        kind,
        span,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number { value: f64, integer: bool },
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    span: (usize, usize),
}

fn tokenize(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                tokens.push(Spanned {
                    token: Token::LParen,
                    span: (i, i + 1),
                });
                i += 1;
            }
            b')' => {
                tokens.push(Spanned {
                    token: Token::RParen,
                    span: (i, i + 1),
                });
                i += 1;
            }
            b',' => {
                tokens.push(Spanned {
                    token: Token::Comma,
                    span: (i, i + 1),
                });
                i += 1;
            }
            b'-' | b'+' | b'0'..=b'9' | b'.' => {
                let start = i;
                if b == b'-' || b == b'+' {
                    i += 1;
                    if i >= bytes.len() || !(bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                        return Err(err(
                            ParseErrorKind::Syntax,
                            (start, i),
                            "dangling sign; expected a numeric literal",
                        ));
                    }
                }
                let mut has_dot = false;
                let mut has_exp = false;
                while i < bytes.len() {
                    let c = bytes[i];
                    if c.is_ascii_digit() {
                        i += 1;
                    } else if c == b'.' && !has_dot && !has_exp {
                        has_dot = true;
                        i += 1;
                    } else if (c == b'e' || c == b'E') && !has_exp {
                        has_exp = true;
                        i += 1;
                        if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
                            i += 1;
                        }
                    } else {
                        break;
                    }
                }
                let raw = &text[start..i];
                let value: f64 = raw.parse().map_err(|_| {
                    err(
                        ParseErrorKind::Syntax,
                        (start, i),
                        format!("invalid numeric literal `{raw}`"),
                    )
                })?;
                let integer = !has_dot && !has_exp && bytes[start] != b'-' && bytes[start] != b'+';
                tokens.push(Spanned {
                    token: Token::Number { value, integer },
                    span: (start, i),
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Spanned {
                    token: Token::Ident(text[start..i].to_string()),
                    span: (start, i),
                });
            }
            _ => {
                return Err(err(
                    ParseErrorKind::Syntax,
                    (i, i + 1),
                    format!("unexpected character `{}`", &text[i..i + 1]),
                ));
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(s) if s.token == want => Ok(()),
            Some(s) => Err(err(
                ParseErrorKind::Syntax,
                s.span,
                format!("expected {what}"),
            )),
            None => Err(err(
                ParseErrorKind::Syntax,
                (self.end, self.end),
                format!("expected {what}, found end of input"),
            )),
        }
    }

    fn parse_expr(&mut self) -> Result<AlphaExpr, ParseError> {
        match self.next() {
            Some(Spanned {
                token: Token::Number { value, .. },
                ..
            }) => Ok(AlphaExpr::Constant(value)),
            Some(Spanned {
                token: Token::Ident(name),
                span,
            }) => {
                if matches!(
                    self.peek(),
                    Some(Spanned {
                        token: Token::LParen,
                        ..
                    })
                ) {
                    self.parse_call(&name, span)
                } else {
                    Ok(AlphaExpr::Feature(name))
                }
            }
            Some(s) => Err(err(ParseErrorKind::Syntax, s.span, "expected an expression")),
            None => Err(err(
                ParseErrorKind::Syntax,
                (self.end, self.end),
                "expected an expression, found end of input",
            )),
        }
    }

    fn parse_call(&mut self, name: &str, name_span: (usize, usize)) -> Result<AlphaExpr, ParseError> {
        let kind = lookup_operator(name).ok_or_else(|| {
            err(
                ParseErrorKind::UnknownOperator,
                name_span,
                format!("unknown operator `{name}`"),
            )
        })?;
        self.expect(Token::LParen, "`(`")?;

        let mut args: Vec<(AlphaExpr, (usize, usize), bool)> = Vec::new();
        if matches!(
            self.peek(),
            Some(Spanned {
                token: Token::RParen,
                ..
            })
        ) {
            // fall through to the arity error below with zero args
        } else {
            loop {
                let start = self.peek().map(|s| s.span.0).unwrap_or(self.end);
                let integer = matches!(
                    self.peek(),
                    Some(Spanned {
                        token: Token::Number { integer: true, .. },
                        ..
                    })
                );
                let expr = self.parse_expr()?;
                let stop = self
                    .tokens
                    .get(self.pos.saturating_sub(1))
                    .map(|s| s.span.1)
                    .unwrap_or(self.end);
                args.push((expr, (start, stop), integer));
                match self.peek() {
                    Some(Spanned {
                        token: Token::Comma,
                        ..
                    }) => {
                        self.pos += 1;
                    }
                    _ => break,
                }
            }
        }
        self.expect(Token::RParen, "`)`")?;

        if args.len() != kind.arity() {
            return Err(err(
                ParseErrorKind::Arity,
                name_span,
                format!(
                    "operator `{name}` takes {} argument{}, got {}",
                    kind.arity(),
                    if kind.arity() == 1 { "" } else { "s" },
                    args.len()
                ),
            ));
        }

        let window_of = |arg: &(AlphaExpr, (usize, usize), bool)| -> Result<usize, ParseError> {
            let (expr, span, integer) = arg;
            match expr {
                AlphaExpr::Constant(v)
                    if *integer && v.fract() == 0.0 && *v >= 1.0 && *v <= usize::MAX as f64 =>
                {
                    Ok(*v as usize)
                }
                _ => Err(err(
                    ParseErrorKind::Window,
                    *span,
                    format!("operator `{name}` requires a positive integer day count"),
                )),
            }
        };

        let mut args = args;
        Ok(match kind {
            OpKind::Unary(op) => AlphaExpr::Unary {
                op,
                child: Box::new(args.remove(0).0),
            },
            OpKind::Binary(op) => {
                let right = args.pop().expect("arity checked").0;
                let left = args.pop().expect("arity checked").0;
                AlphaExpr::Binary {
                    op,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
            OpKind::Shift(op) => {
                let days = window_of(&args[1])?;
                AlphaExpr::Shift {
                    op,
                    child: Box::new(args.remove(0).0),
                    days,
                }
            }
            OpKind::Rolling(op) => {
                let window = window_of(&args[1])?;
                AlphaExpr::Rolling {
                    op,
                    child: Box::new(args.remove(0).0),
                    window,
                }
            }
            OpKind::RollingBinary(op) => {
                let window = window_of(&args[2])?;
                let right = args.remove(1).0;
                let left = args.remove(0).0;
                AlphaExpr::RollingBinary {
                    op,
                    left: Box::new(left),
                    right: Box::new(right),
                    window,
                }
            }
        })
    }
}

/// Parse one expression. The whole input must be consumed.
pub fn parse(text: &str) -> Result<AlphaExpr, ParseError> {
    let tokens = tokenize(text)?;
    let end = text.len();
    let mut parser = Parser { tokens, pos: 0, end };
    let expr = parser.parse_expr()?;
    if let Some(extra) = parser.peek() {
        return Err(err(
            ParseErrorKind::Syntax,
            extra.span,
            "unexpected trailing input",
        ));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::super::{BinaryOp, RollingBinaryOp};
    use super::*;

    #[test]
    fn parses_nested_binary() {
        let e = parse("Div(Sub(close, open), open)").unwrap();
        match &e {
            AlphaExpr::Binary {
                op: BinaryOp::Div,
                left,
                right,
            } => {
                assert!(matches!(
                    left.as_ref(),
                    AlphaExpr::Binary {
                        op: BinaryOp::Sub,
                        ..
                    }
                ));
                assert_eq!(right.as_ref(), &AlphaExpr::Feature("open".into()));
            }
            other => panic!("unexpected ast {other:?}"),
        }
    }

    #[test]
    fn parses_rolling_binary_arity() {
        let e = parse("Corr(close, volume, 10)").unwrap();
        assert!(matches!(
            e,
            AlphaExpr::RollingBinary {
                op: RollingBinaryOp::Corr,
                window: 10,
                ..
            }
        ));
    }

    #[test]
    fn arity_error_for_missing_window() {
        let e = parse("Mean(close)");
        assert!(matches!(
            e,
            Err(ParseError {
                kind: ParseErrorKind::Arity,
                ..
            })
        ));
    }

    #[test]
    fn unknown_operator_has_span() {
        let e = parse("Frob(close, 3)");
        match e {
            Err(ParseError {
                kind: ParseErrorKind::UnknownOperator,
                span,
                ..
            }) => assert_eq!(span, (0, 4)),
            other => panic!("expected unknown-operator, got {other:?}"),
        }
    }

    #[test]
    fn window_must_be_positive_integer_literal() {
        for bad in ["Mean(close, 0)", "Mean(close, -3)", "Mean(close, 2.5)", "Mean(close, open)"] {
            let e = parse(bad);
            assert!(
                matches!(
                    e,
                    Err(ParseError {
                        kind: ParseErrorKind::Window,
                        ..
                    })
                ),
                "`{bad}` should be a window error, got {e:?}"
            );
        }
    }

    #[test]
    fn unbalanced_parens_are_syntax_errors() {
        for bad in ["Mean(close, 5", "Mean close, 5)", "Abs(close))"] {
            assert!(
                matches!(
                    parse(bad),
                    Err(ParseError {
                        kind: ParseErrorKind::Syntax,
                        ..
                    })
                ),
                "`{bad}` should be a syntax error"
            );
        }
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse("Corr( close ,\tvolume ,  10 )").unwrap();
        let b = parse("Corr(close,volume,10)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constants_parse_including_negative_and_scientific() {
        assert_eq!(parse("-1.5").unwrap(), AlphaExpr::Constant(-1.5));
        assert_eq!(parse("2e-3").unwrap(), AlphaExpr::Constant(0.002));
        assert_eq!(
            parse("Greater(close, 0)").unwrap(),
            AlphaExpr::Binary {
                op: BinaryOp::Greater,
                left: Box::new(AlphaExpr::Feature("close".into())),
                right: Box::new(AlphaExpr::Constant(0.0)),
            }
        );
    }

    #[test]
    fn print_parse_round_trip() {
        for text in [
            "Rank(close, 5)",
            "Div(Sub(close, open), open)",
            "Corr(Mean(close, 3), Ref(volume, 2), 10)",
            "Power(Sub(high, low), 1.5)",
            "Add(close, -2.5)",
        ] {
            let e = parse(text).unwrap();
            let printed = e.to_string();
            let reparsed = parse(&printed).unwrap();
            assert_eq!(e, reparsed, "round trip failed for `{text}` -> `{printed}`");
        }
        assert_eq!(parse("Rank(close, 5)").unwrap().to_string(), "Rank(close, 5)");
        assert_eq!(parse("Add(close, 1.50)").unwrap().to_string(), "Add(close, 1.5)");
    }

    #[test]
    fn all_table_operators_parse_with_stated_arity() {
        use super::super::OPERATOR_TABLE;
        for (name, kind) in OPERATOR_TABLE {
            let text = match kind.arity() {
                1 => format!("{name}(close)"),
                2 => match kind {
                    OpKind::Binary(_) => format!("{name}(close, open)"),
                    _ => format!("{name}(close, 5)"),
                },
                3 => format!("{name}(close, open, 5)"),
                n => panic!("unexpected arity {n}"),
            };
            let parsed = parse(&text);
            assert!(parsed.is_ok(), "`{text}` failed: {parsed:?}");
        }
        assert_eq!(OPERATOR_TABLE.len(), 32);
    }
}
