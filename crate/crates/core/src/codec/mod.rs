//! Parse heterogeneous agent output into canonical actions and render
//! canonical actions back into dialect text. Parsing is total: any byte
//! string yields either an action or a typed failure, never a panic — parse
//! failures are data that the metric layer scores as incorrect.

pub mod grammar;

pub use grammar::{compile, CoordSpace, Dialect, Grammar, GrammarError, Registry, TextEscape};

use serde::Serialize;

use crate::model::{normalize_point, denormalize_point, Action, ActionKind, Point, Screen, ScrollDirection, SCALE};

/// Why a response failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    NoActionFound,
    UnknownActionKind,
    MalformedArguments,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseFailure {
    pub reason: FailReason,
    pub raw_excerpt: String,
}

/// Result of parsing one raw response: exactly one of `action`/`failure`,
/// with optional extracted rationale text either way.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseOutcome {
    pub action: Option<Action>,
    pub rationale: Option<String>,
    pub failure: Option<ParseFailure>,
}

impl ParseOutcome {
    pub fn ok(action: Action, rationale: Option<String>) -> Self {
        ParseOutcome { action: Some(action), rationale, failure: None }
    }

    pub fn fail(reason: FailReason, raw_excerpt: String, rationale: Option<String>) -> Self {
        ParseOutcome { action: None, rationale, failure: Some(ParseFailure { reason, raw_excerpt }) }
    }

    pub fn is_parsed(&self) -> bool {
        self.action.is_some()
    }
}

const EXCERPT_CHARS: usize = 120;

fn excerpt(s: &str) -> String {
    s.trim().chars().take(EXCERPT_CHARS).collect()
}

fn rationale_before(raw: &str, start: usize) -> Option<String> {
    let prefix = raw[..start].trim();
    if prefix.is_empty() {
        None
    } else {
        Some(prefix.to_string())
    }
}

/// Parse one raw agent response under `grammar`. Scans every candidate action
/// block and takes the LAST well-formed one (reasoning-then-answer outputs put
/// the final action at the end); text before it becomes the rationale. When no
/// candidate parses, the failure describes the last candidate.
pub fn parse_action(raw: &str, grammar: &Grammar, screen: &Screen) -> ParseOutcome {
    let candidates: Vec<(usize, usize)> =
        grammar.candidate.find_iter(raw).map(|m| (m.start(), m.end())).collect();
    let mut last_failure: Option<(usize, FailReason, String)> = None;
    for &(start, end) in candidates.iter().rev() {
        let block = &raw[start..end];
        let Some(tok_caps) = grammar.kind_pattern.captures(block) else {
            continue; // not an action block at all
        };
        let token = tok_caps.name("v").map(|m| m.as_str()).unwrap_or("");
        match parse_block(grammar, block, token, screen) {
            Ok(action) => return ParseOutcome::ok(action, rationale_before(raw, start)),
            Err(reason) => {
                if last_failure.is_none() {
                    last_failure = Some((start, reason, excerpt(block)));
                }
            }
        }
    }
    match last_failure {
        Some((start, reason, block)) => ParseOutcome::fail(reason, block, rationale_before(raw, start)),
        None => ParseOutcome::fail(FailReason::NoActionFound, excerpt(raw), None),
    }
}

fn parse_block(grammar: &Grammar, block: &str, token: &str, screen: &Screen) -> Result<Action, FailReason> {
    let rule = grammar.rule_for_token(token).ok_or(FailReason::UnknownActionKind)?;
    let field = |name: &str| -> Result<String, FailReason> {
        let re = rule.fields.get(name).ok_or(FailReason::MalformedArguments)?;
        let caps = re.captures(block).ok_or(FailReason::MalformedArguments)?;
        Ok(caps.name("v").ok_or(FailReason::MalformedArguments)?.as_str().to_string())
    };
    match rule.kind {
        ActionKind::Click => {
            let x = parse_number(&field("x")?)?;
            let y = parse_number(&field("y")?)?;
            let point = match grammar.coords {
                CoordSpace::Normalized => {
                    if !(0..=SCALE).contains(&x) || !(0..=SCALE).contains(&y) {
                        return Err(FailReason::MalformedArguments);
                    }
                    Point::new(x, y)
                }
                CoordSpace::RawPixels => {
                    normalize_point(Point::new(x, y), screen).map_err(|_| FailReason::MalformedArguments)?
                }
            };
            Ok(Action::Click(point))
        }
        ActionKind::Scroll => {
            let d = ScrollDirection::parse(&field("direction")?).ok_or(FailReason::MalformedArguments)?;
            Ok(Action::Scroll(d))
        }
        ActionKind::Type | ActionKind::OpenApp => {
            let text = grammar.escape.strip(&field("text")?);
            if text.trim().is_empty() {
                return Err(FailReason::MalformedArguments);
            }
            Ok(if rule.kind == ActionKind::Type { Action::Type(text) } else { Action::OpenApp(text) })
        }
        ActionKind::PressBack => Ok(Action::PressBack),
        ActionKind::PressHome => Ok(Action::PressHome),
        ActionKind::Enter => Ok(Action::Enter),
        ActionKind::Complete => Ok(Action::Complete),
        ActionKind::Wait => Ok(Action::Wait),
    }
}

/// Plain decimal (optionally fractional) to integer, rounding half-up.
fn parse_number(s: &str) -> Result<i64, FailReason> {
    let v: f64 = s.parse().map_err(|_| FailReason::MalformedArguments)?;
    if !v.is_finite() || v.abs() > 1e12 {
        return Err(FailReason::MalformedArguments);
    }
    Ok((v + 0.5).floor() as i64)
}

/// Render a canonical action as dialect text. The inverse of [`parse_action`]
/// for every dialect; raw-pixel dialects use `screen` to de-normalize.
pub fn serialize_action(action: &Action, grammar: &Grammar, screen: &Screen) -> String {
    let rule = grammar.rule_for_kind(action.kind());
    let mut out = rule.render.clone();
    match action {
        Action::Click(p) => {
            let p = match grammar.coords {
                CoordSpace::Normalized => *p,
                CoordSpace::RawPixels => {
                    let clamped = Point::new(p.x.clamp(0, SCALE), p.y.clamp(0, SCALE));
                    denormalize_point(clamped, screen).expect("clamped point is in range")
                }
            };
            out = out.replace("{x}", &p.x.to_string());
            out = out.replace("{y}", &p.y.to_string());
        }
        Action::Scroll(d) => {
            out = out.replace("{direction}", d.as_str());
        }
        Action::Type(t) | Action::OpenApp(t) => {
            out = out.replace("{text}", &grammar.escape.apply(t));
        }
        _ => {}
    }
    out
}
