//! LLM-rated financial-logic scores: prompt construction, chat-completion
//! transport with retries, verdict parsing, and a deterministic file-backed
//! mock for offline runs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::parallel;

/// Scoring prompt. `{factor_expressions}` is replaced by a numbered list of
/// the expressions under review; everything else is sent byte-exact.
pub const PROMPT_TEMPLATE: &str = "Below is a set of quantitative factor expressions designed using qlib syntax.

Please score each factor from 50 to 100 based on the rationality of financial market logic (full score), and provide the corresponding logical explanation.

When scoring, differences in scores can be larger: logical factors can receive very high scores, and vice versa.

We also prefer longer factors, as this aligns with the goal of automated search.

Factor list: {factor_expressions}

Please return a pure JSON array only, without any Markdown code blocks.

The array length should match the factor list, and each element should be an object containing:
- factor: the factor expression
- score: numeric score (0\u{2013}100)
- explanation: a brief logical explanation";

/// One scored expression as returned by the model (or the mock).
#[derive(Debug, Clone, PartialEq)]
pub struct LogicVerdict {
    pub factor: String,
    pub score: f64,
    pub explanation: String,
    /// True when the raw score fell outside [0, 100] and was clamped.
    pub clamped: bool,
}

/// Retry policy for transport and 5xx failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Chat-completion client configuration.
#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Expressions per request.
    pub batch_size: usize,
    pub retry: RetryPolicy,
    /// Concurrent in-flight requests.
    pub in_flight: usize,
    /// When set, no network calls happen: verdicts come from this JSON table.
    pub mock_path: Option<PathBuf>,
    /// Log request/response bodies to stderr (API key redacted).
    pub debug: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: String::new(),
            model: String::new(),
            max_tokens: 1000,
            temperature: 0.2,
            api_key_env: "ALPHAEVAL_LLM_KEY".into(),
            batch_size: 20,
            retry: RetryPolicy::default(),
            in_flight: 2,
            mock_path: None,
            debug: false,
        }
    }
}

/// Substitute the numbered expression list into the prompt template.
pub fn build_prompt(expressions: &[String]) -> Result<String> {
    if expressions.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build a prompt for an empty expression list".into(),
        ));
    }
    let listing = expressions
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}. {}", i + 1, e))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(PROMPT_TEMPLATE.replace("{factor_expressions}", &format!("\n{listing}")))
}

#[derive(Debug, Deserialize)]
struct RawVerdict {
    factor: String,
    score: f64,
    #[serde(default)]
    explanation: String,
}

/// Parse a chat-completion reply into verdicts for the expected expressions.
///
/// Code fences and surrounding prose are stripped before parsing. Verdicts
/// pair to expressions by the `factor` field, falling back to list order;
/// scores outside [0, 100] are clamped and flagged.
pub fn parse_llm_json(raw: &str, expected: &[String]) -> Result<Vec<LogicVerdict>> {
    let parsed = parse_json_array(raw)?;
    if parsed.len() != expected.len() {
        let matched: Vec<&str> = parsed.iter().map(|v| v.factor.as_str()).collect();
        let missing: Vec<&String> = expected
            .iter()
            .filter(|e| !matched.contains(&e.as_str()))
            .collect();
        return Err(Error::VerdictMismatch(format!(
            "got {} verdicts for {} factors; unmatched: {}",
            parsed.len(),
            expected.len(),
            missing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }

    // Pair by factor text when the response covers every expression exactly
    // once; otherwise trust the order.
    let by_factor: BTreeMap<&str, usize> = parsed
        .iter()
        .enumerate()
        .map(|(i, v)| (v.factor.as_str(), i))
        .collect();
    let exact = by_factor.len() == parsed.len()
        && expected.iter().all(|e| by_factor.contains_key(e.as_str()));

    let mut out = Vec::with_capacity(expected.len());
    for (slot, expr) in expected.iter().enumerate() {
        let v = if exact {
            &parsed[by_factor[expr.as_str()]]
        } else {
            &parsed[slot]
        };
        let clamped = !(0.0..=100.0).contains(&v.score) || !v.score.is_finite();
        let score = if v.score.is_finite() {
            v.score.clamp(0.0, 100.0)
        } else {
            0.0
        };
        out.push(LogicVerdict {
            factor: expr.clone(),
            score,
            explanation: v.explanation.clone(),
            clamped,
        });
    }
    Ok(out)
}

fn parse_json_array(raw: &str) -> Result<Vec<RawVerdict>> {
    let trimmed = raw.trim();
    let candidates = [
        trimmed.to_string(),
        strip_fences(trimmed),
        slice_brackets(trimmed).unwrap_or_default(),
    ];
    let mut last_err = String::new();
    for cand in candidates.iter().filter(|c| !c.is_empty()) {
        match serde_json::from_str::<serde_json::Value>(cand) {
            Ok(serde_json::Value::Array(_)) => {
                return serde_json::from_str::<Vec<RawVerdict>>(cand).map_err(|e| {
                    Error::LlmParse {
                        message: e.to_string(),
                        raw: raw.to_string(),
                    }
                });
            }
            Ok(other) => {
                last_err = format!("expected a JSON array, got {}", kind_of(&other));
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(Error::LlmParse {
        message: last_err,
        raw: raw.to_string(),
    })
}

fn kind_of(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "a boolean",
        serde_json::Value::Number(_) => "a number",
        serde_json::Value::String(_) => "a string",
        serde_json::Value::Array(_) => "an array",
        serde_json::Value::Object(_) => "an object",
    }
}

fn strip_fences(text: &str) -> String {
    let t = text.trim();
    if !t.starts_with("```") {
        return String::new();
    }
    let body = match t.find('\n') {
        Some(i) => &t[i + 1..],
        None => return String::new(),
    };
    match body.rfind("```") {
        Some(i) => body[..i].trim().to_string(),
        None => body.trim().to_string(),
    }
}

fn slice_brackets(text: &str) -> Option<String> {
    let start = text.find('[')?;
    let end = text.rfind(']')?;
    if end > start {
        Some(text[start..=end].to_string())
    } else {
        None
    }
}

/// Mean of verdict scores.
pub fn logic_score(verdicts: &[LogicVerdict]) -> Result<f64> {
    if verdicts.is_empty() {
        return Err(Error::InvalidInput("no verdicts to average".into()));
    }
    Ok(verdicts.iter().map(|v| v.score).sum::<f64>() / verdicts.len() as f64)
}

/// Score expressions in batches, via HTTP or the mock table.
pub fn score_alphas(expressions: &[String], cfg: &LlmConfig) -> Result<Vec<LogicVerdict>> {
    if expressions.is_empty() {
        return Err(Error::InvalidInput(
            "cannot score an empty expression list".into(),
        ));
    }
    if let Some(path) = &cfg.mock_path {
        let table = MockTable::load(path)?;
        return expressions.iter().map(|e| table.verdict(e)).collect();
    }

    let batches: Vec<Vec<String>> = expressions
        .chunks(cfg.batch_size.max(1))
        .map(|c| c.to_vec())
        .collect();
    let results = parallel::map_indexed(&batches, cfg.in_flight.max(1), |_, batch| {
        score_batch(batch, cfg)
    });
    let mut out = Vec::with_capacity(expressions.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn score_batch(batch: &[String], cfg: &LlmConfig) -> Result<Vec<LogicVerdict>> {
    let prompt = build_prompt(batch)?;
    let body = serde_json::json!({
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "max_tokens": cfg.max_tokens,
        "temperature": cfg.temperature,
    });
    let key = std::env::var(&cfg.api_key_env).unwrap_or_default();
    if cfg.debug {
        eprintln!(
            "[llm] POST {} (key from ${}, redacted)\n{}",
            cfg.endpoint,
            cfg.api_key_env,
            serde_json::to_string_pretty(&body).unwrap_or_default()
        );
    }

    let mut last = String::new();
    for attempt in 0..cfg.retry.max_attempts {
        if attempt > 0 {
            std::thread::sleep(cfg.retry.backoff * 2u32.pow(attempt - 1));
        }
        let response = ureq::post(&cfg.endpoint)
            .set("Authorization", &format!("Bearer {key}"))
            .set("Content-Type", "application/json")
            .send_string(&body.to_string());
        match response {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| Error::Transport {
                    attempts: attempt + 1,
                    message: e.to_string(),
                })?;
                if cfg.debug {
                    eprintln!("[llm] response:\n{text}");
                }
                let content = extract_content(&text)?;
                return parse_llm_json(&content, batch);
            }
            Err(ureq::Error::Status(code, resp)) if code >= 500 => {
                last = format!(
                    "server error {code}: {}",
                    resp.into_string().unwrap_or_default()
                );
            }
            Err(ureq::Error::Status(code, resp)) => {
                return Err(Error::Transport {
                    attempts: attempt + 1,
                    message: format!(
                        "request rejected with status {code}: {}",
                        resp.into_string().unwrap_or_default()
                    ),
                });
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Transport {
        attempts: cfg.retry.max_attempts,
        message: last,
    })
}

fn extract_content(response_body: &str) -> Result<String> {
    #[derive(Deserialize)]
    struct Resp {
        choices: Vec<Choice>,
    }
    #[derive(Deserialize)]
    struct Choice {
        message: Message,
    }
    #[derive(Deserialize)]
    struct Message {
        content: String,
    }
    let resp: Resp = serde_json::from_str(response_body).map_err(|e| Error::LlmParse {
        message: format!("chat-completion envelope: {e}"),
        raw: response_body.to_string(),
    })?;
    resp.choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| Error::LlmParse {
            message: "chat-completion response has no choices".into(),
            raw: response_body.to_string(),
        })
}

#[derive(Debug, Deserialize)]
struct MockEntry {
    score: f64,
    #[serde(default)]
    explanation: String,
}

/// Mock verdict table: a JSON object mapping expression text to
/// `{"score": .., "explanation": ".."}`. A `"*"` entry, when present,
/// covers expressions without their own entry.
struct MockTable {
    entries: BTreeMap<String, MockEntry>,
}

impl MockTable {
    fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: BTreeMap<String, MockEntry> =
            serde_json::from_str(&text).map_err(|e| Error::LlmParse {
                message: format!("mock table {}: {e}", path.display()),
                raw: text.clone(),
            })?;
        Ok(MockTable { entries })
    }

    fn verdict(&self, expr: &str) -> Result<LogicVerdict> {
        let entry = self
            .entries
            .get(expr)
            .or_else(|| self.entries.get("*"))
            .ok_or_else(|| {
                Error::VerdictMismatch(format!(
                    "mock table has no entry for `{expr}` and no \"*\" default"
                ))
            })?;
        let clamped = !(0.0..=100.0).contains(&entry.score);
        Ok(LogicVerdict {
            factor: expr.to_string(),
            score: entry.score.clamp(0.0, 100.0),
            explanation: entry.explanation.clone(),
            clamped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exprs(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prompt_contains_each_expression_once_numbered() {
        let p = build_prompt(&exprs(&["Mean(close, 5)"])).unwrap();
        assert_eq!(p.matches("Mean(close, 5)").count(), 1);
        assert!(p.contains("1. Mean(close, 5)"));
        assert!(p.contains("a pure JSON array only"));

        let p3 = build_prompt(&exprs(&["a", "b", "c"])).unwrap();
        for line in ["1. a", "2. b", "3. c"] {
            assert!(p3.contains(line));
        }
    }

    #[test]
    fn prompt_rejects_empty_list() {
        assert!(build_prompt(&[]).is_err());
    }

    #[test]
    fn prompt_is_injective_outside_the_slot() {
        let a = build_prompt(&exprs(&["x"])).unwrap();
        let b = build_prompt(&exprs(&["y"])).unwrap();
        let slot_a = a.find("1. x").unwrap();
        let slot_b = b.find("1. y").unwrap();
        assert_eq!(&a[..slot_a], &b[..slot_b]);
        assert_eq!(&a[slot_a + 4..], &b[slot_b + 4..]);
    }

    #[test]
    fn parses_plain_json_array() {
        let raw = r#"[{"factor":"Mean(close,5)","score":72,"explanation":"momentum"}]"#;
        let v = parse_llm_json(raw, &exprs(&["Mean(close,5)"])).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].score, 72.0);
        assert_eq!(v[0].explanation, "momentum");
        assert!(!v[0].clamped);
    }

    #[test]
    fn parses_fenced_json_array() {
        let raw = "```json\n[{\"factor\":\"Mean(close,5)\",\"score\":72,\"explanation\":\"momentum\"}]\n```";
        let fenced = parse_llm_json(raw, &exprs(&["Mean(close,5)"])).unwrap();
        let plain = parse_llm_json(
            r#"[{"factor":"Mean(close,5)","score":72,"explanation":"momentum"}]"#,
            &exprs(&["Mean(close,5)"]),
        )
        .unwrap();
        assert_eq!(fenced, plain);
    }

    #[test]
    fn parses_array_with_leading_prose() {
        let raw = "Here are the scores:\n[{\"factor\":\"x\",\"score\":60,\"explanation\":\"\"}]\nHope this helps!";
        let v = parse_llm_json(raw, &exprs(&["x"])).unwrap();
        assert_eq!(v[0].score, 60.0);
    }

    #[test]
    fn object_instead_of_array_is_a_parse_error() {
        let raw = r#"{"score":72}"#;
        assert!(matches!(
            parse_llm_json(raw, &exprs(&["x"])),
            Err(Error::LlmParse { .. })
        ));
    }

    #[test]
    fn verdict_count_mismatch_lists_unmatched() {
        let raw = r#"[{"factor":"a","score":60,"explanation":""},{"factor":"b","score":70,"explanation":""}]"#;
        match parse_llm_json(raw, &exprs(&["a", "b", "c"])) {
            Err(Error::VerdictMismatch(msg)) => assert!(msg.contains('c'), "{msg}"),
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn scores_outside_bounds_are_clamped_and_flagged() {
        let raw = r#"[{"factor":"a","score":140,"explanation":""},{"factor":"b","score":-5,"explanation":""}]"#;
        let v = parse_llm_json(raw, &exprs(&["a", "b"])).unwrap();
        assert_eq!(v[0].score, 100.0);
        assert!(v[0].clamped);
        assert_eq!(v[1].score, 0.0);
        assert!(v[1].clamped);
    }

    #[test]
    fn pairs_by_factor_before_order() {
        let raw = r#"[{"factor":"b","score":70,"explanation":"B"},{"factor":"a","score":60,"explanation":"A"}]"#;
        let v = parse_llm_json(raw, &exprs(&["a", "b"])).unwrap();
        assert_eq!(v[0].factor, "a");
        assert_eq!(v[0].score, 60.0);
        assert_eq!(v[1].score, 70.0);
    }

    #[test]
    fn logic_score_cases() {
        let mk = |score: f64| LogicVerdict {
            factor: "x".into(),
            score,
            explanation: String::new(),
            clamped: false,
        };
        assert_eq!(logic_score(&[mk(60.0), mk(80.0)]).unwrap(), 70.0);
        assert_eq!(logic_score(&[mk(63.5)]).unwrap(), 63.5);
        assert!(logic_score(&[]).is_err());
        // permutation invariance
        let a = logic_score(&[mk(10.0), mk(50.0), mk(90.0)]).unwrap();
        let b = logic_score(&[mk(90.0), mk(10.0), mk(50.0)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mock_mode_is_deterministic_and_offline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mock.json");
        std::fs::write(
            &path,
            r#"{"Mean(close, 5)": {"score": 72, "explanation": "momentum"},
                "*": {"score": 55, "explanation": "default"}}"#,
        )
        .unwrap();
        let cfg = LlmConfig {
            mock_path: Some(path),
            ..LlmConfig::default()
        };
        let list = exprs(&["Mean(close, 5)", "Ref(open, 1)"]);
        let a = score_alphas(&list, &cfg).unwrap();
        let b = score_alphas(&list, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].score, 72.0);
        assert_eq!(a[1].score, 55.0);
    }

    #[test]
    fn mock_without_entry_or_default_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mock.json");
        std::fs::write(&path, r#"{"other": {"score": 60}}"#).unwrap();
        let cfg = LlmConfig {
            mock_path: Some(path),
            ..LlmConfig::default()
        };
        assert!(matches!(
            score_alphas(&exprs(&["x"]), &cfg),
            Err(Error::VerdictMismatch(_))
        ));
    }
}
