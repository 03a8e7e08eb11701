//! Declarative dialect grammars. A dialect is described entirely by data —
//! regex patterns plus render templates — so new agent output formats can be
//! registered from a TOML file without touching the engine. The three
//! built-ins are compiled from the same schema.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use crate::model::ActionKind;

/// Which numeric frame a dialect's coordinates are written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordSpace {
    /// Already `[0, 1000]` milli-units.
    Normalized,
    /// Screen pixels; the parser converts via the screen dimensions.
    RawPixels,
}

/// Escape style for text arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextEscape {
    /// JSON-style: `\" \\ \n \r \t`.
    Json,
    /// Backslash escapes inside single quotes: `\' \\ \n \r \t`.
    BackslashSingle,
    /// Backslash escapes inside double quotes: `\" \\ \n \r \t`.
    BackslashDouble,
    #[default]
    None,
}

impl TextEscape {
    fn quote(self) -> Option<char> {
        match self {
            TextEscape::Json | TextEscape::BackslashDouble => Some('"'),
            TextEscape::BackslashSingle => Some('\''),
            TextEscape::None => None,
        }
    }

    pub fn apply(self, s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '\\' if self != TextEscape::None => out.push_str("\\\\"),
                '\n' if self != TextEscape::None => out.push_str("\\n"),
                '\r' if self != TextEscape::None => out.push_str("\\r"),
                '\t' if self != TextEscape::None => out.push_str("\\t"),
                c if Some(c) == self.quote() => {
                    out.push('\\');
                    out.push(c);
                }
                c => out.push(c),
            }
        }
        out
    }

    pub fn strip(self, s: &str) -> String {
        if self == TextEscape::None {
            return s.to_string();
        }
        let mut out = String::with_capacity(s.len());
        let mut chars = s.chars();
        while let Some(ch) = chars.next() {
            if ch != '\\' {
                out.push(ch);
                continue;
            }
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some('t') => out.push('\t'),
                Some(c) => out.push(c),
                None => out.push('\\'),
            }
        }
        out
    }
}

/// Per-action-kind parsing and rendering rules.
#[derive(Debug)]
pub struct KindRule {
    pub kind: ActionKind,
    /// Kind tokens that select this rule, compared case-insensitively.
    pub aliases: Vec<String>,
    /// Field name -> extraction regex with a `v` capture group.
    pub fields: BTreeMap<String, Regex>,
    /// Render template with `{x} {y} {direction} {text}` placeholders.
    pub render: String,
}

/// A compiled dialect grammar.
#[derive(Debug)]
pub struct Grammar {
    pub id: String,
    pub description: String,
    pub coords: CoordSpace,
    pub escape: TextEscape,
    /// Finds candidate action blocks in raw output.
    pub candidate: Regex,
    /// Extracts the kind token (group `v`) from a candidate block; blocks
    /// without one are not action blocks at all.
    pub kind_pattern: Regex,
    pub kinds: Vec<KindRule>,
}

impl Grammar {
    pub fn rule_for_kind(&self, kind: ActionKind) -> &KindRule {
        self.kinds
            .iter()
            .find(|r| r.kind == kind)
            .expect("compile() guarantees all nine kinds")
    }

    pub fn rule_for_token(&self, token: &str) -> Option<&KindRule> {
        self.kinds
            .iter()
            .find(|r| r.aliases.iter().any(|a| a.eq_ignore_ascii_case(token)))
    }
}

/// Dialect metadata, as listed by the registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialect {
    pub id: String,
    pub description: String,
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("cannot read grammar file: {0}")]
    Io(#[from] std::io::Error),
    #[error("grammar file is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid regex {pattern:?}: {source}")]
    BadRegex { pattern: String, source: regex::Error },
    #[error("pattern {pattern:?} lacks the required (?P<v>...) capture group")]
    MissingCaptureGroup { pattern: String },
    #[error("grammar {id:?} does not define action kind {kind:?}")]
    MissingKind { id: String, kind: &'static str },
    #[error("grammar {id:?} kind {kind:?} lacks required field {field:?}")]
    MissingField { id: String, kind: &'static str, field: &'static str },
    #[error("unknown action kind {kind:?} in grammar {id:?}")]
    UnknownKind { id: String, kind: String },
    #[error("duplicate dialect id {0:?}")]
    DuplicateId(String),
}

/// Fields each action kind must be able to extract.
pub fn required_fields(kind: ActionKind) -> &'static [&'static str] {
    match kind {
        ActionKind::Click => &["x", "y"],
        ActionKind::Scroll => &["direction"],
        ActionKind::Type | ActionKind::OpenApp => &["text"],
        _ => &[],
    }
}

// ---- declarative schema -----------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GrammarDef {
    id: String,
    description: String,
    coordinates: CoordSpace,
    #[serde(default)]
    escape: TextEscape,
    candidate: String,
    kind_pattern: String,
    kinds: BTreeMap<String, KindDef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KindDef {
    #[serde(default)]
    aliases: Vec<String>,
    render: String,
    #[serde(default)]
    fields: BTreeMap<String, String>,
}

fn compile_regex(pattern: &str) -> Result<Regex, GrammarError> {
    Regex::new(pattern).map_err(|source| GrammarError::BadRegex { pattern: pattern.to_string(), source })
}

fn compile_capturing(pattern: &str) -> Result<Regex, GrammarError> {
    let re = compile_regex(pattern)?;
    if !re.capture_names().flatten().any(|n| n == "v") {
        return Err(GrammarError::MissingCaptureGroup { pattern: pattern.to_string() });
    }
    Ok(re)
}

/// Compile a TOML grammar description into a usable dialect.
pub fn compile(toml_text: &str) -> Result<Grammar, GrammarError> {
    let def: GrammarDef = toml::from_str(toml_text)?;
    let candidate = compile_regex(&def.candidate)?;
    let kind_pattern = compile_capturing(&def.kind_pattern)?;
    let mut kinds = Vec::new();
    for (kind_name, kd) in &def.kinds {
        let kind = ActionKind::parse(kind_name).ok_or_else(|| GrammarError::UnknownKind {
            id: def.id.clone(),
            kind: kind_name.clone(),
        })?;
        let mut fields = BTreeMap::new();
        for (fname, fpat) in &kd.fields {
            fields.insert(fname.clone(), compile_capturing(fpat)?);
        }
        for need in required_fields(kind) {
            if !fields.contains_key(*need) {
                return Err(GrammarError::MissingField { id: def.id.clone(), kind: kind.as_str(), field: need });
            }
        }
        let aliases = if kd.aliases.is_empty() { vec![kind.as_str().to_string()] } else { kd.aliases.clone() };
        kinds.push(KindRule { kind, aliases, fields, render: kd.render.clone() });
    }
    for kind in ActionKind::ALL {
        if !kinds.iter().any(|r| r.kind == kind) {
            return Err(GrammarError::MissingKind { id: def.id.clone(), kind: kind.as_str() });
        }
    }
    Ok(Grammar {
        id: def.id,
        description: def.description,
        coords: def.coordinates,
        escape: def.escape,
        candidate,
        kind_pattern,
        kinds,
    })
}

// ---- built-in dialects -------------------------------------------------------

/// Structured-JSON style, e.g. `{"action":"click","x":500,"y":500}`.
pub const JSON_DIALECT: &str = r#"
id = "json"
description = "Structured JSON objects with normalized 0-1000 coordinates"
coordinates = "normalized"
escape = "json"
candidate = '\{(?:[^{}"]|"(?:[^"\\]|\\.)*")*\}'
kind_pattern = '"action"\s*:\s*"(?P<v>[A-Za-z_0-9]+)"'

[kinds.click]
aliases = ["click", "tap"]
render = '{"action":"click","x":{x},"y":{y}}'
[kinds.click.fields]
x = '"x"\s*:\s*(?P<v>-?\d+(?:\.\d+)?)'
y = '"y"\s*:\s*(?P<v>-?\d+(?:\.\d+)?)'

[kinds.scroll]
aliases = ["scroll", "swipe"]
render = '{"action":"scroll","direction":"{direction}"}'
[kinds.scroll.fields]
direction = '"direction"\s*:\s*"(?P<v>[A-Za-z]+)"'

[kinds.type]
aliases = ["type", "input_text"]
render = '{"action":"type","text":"{text}"}'
[kinds.type.fields]
text = '"(?:text|app_name)"\s*:\s*"(?P<v>(?:[^"\\]|\\.)*)"'

[kinds.press_back]
aliases = ["press_back", "back"]
render = '{"action":"press_back"}'

[kinds.press_home]
aliases = ["press_home", "home"]
render = '{"action":"press_home"}'

[kinds.enter]
aliases = ["enter", "press_enter"]
render = '{"action":"enter"}'

[kinds.complete]
aliases = ["complete", "done", "finished"]
render = '{"action":"complete"}'

[kinds.open_app]
aliases = ["open_app", "launch_app"]
render = '{"action":"open_app","text":"{text}"}'
[kinds.open_app.fields]
text = '"(?:text|app_name)"\s*:\s*"(?P<v>(?:[^"\\]|\\.)*)"'

[kinds.wait]
aliases = ["wait"]
render = '{"action":"wait"}'
"#;

/// Function-call style with raw pixel coordinates, e.g. `click(x=540, y=1200)`.
pub const FUNC_DIALECT: &str = r#"
id = "func"
description = "Function-call style with raw pixel coordinates"
coordinates = "raw_pixels"
escape = "backslash_single"
candidate = '''\b[A-Za-z_][A-Za-z_0-9]*\s*\((?:[^()']|'(?:[^'\\]|\\.)*')*\)'''
kind_pattern = '^(?P<v>[A-Za-z_][A-Za-z_0-9]*)'

[kinds.click]
aliases = ["click", "tap"]
render = 'click(x={x}, y={y})'
[kinds.click.fields]
x = '\bx\s*=\s*(?P<v>-?\d+(?:\.\d+)?)'
y = '\by\s*=\s*(?P<v>-?\d+(?:\.\d+)?)'

[kinds.scroll]
aliases = ["scroll", "swipe"]
render = '''scroll(direction='{direction}')'''
[kinds.scroll.fields]
direction = '''direction\s*=\s*['"](?P<v>[A-Za-z]+)['"]'''

[kinds.type]
aliases = ["type", "input_text", "type_text"]
render = '''type(text='{text}')'''
[kinds.type.fields]
text = '''(?:text|app_name)\s*=\s*'(?P<v>(?:[^'\\]|\\.)*)[']'''

[kinds.press_back]
aliases = ["press_back", "back"]
render = 'press_back()'

[kinds.press_home]
aliases = ["press_home", "home"]
render = 'press_home()'

[kinds.enter]
aliases = ["enter", "press_enter"]
render = 'enter()'

[kinds.complete]
aliases = ["complete", "done", "finish", "terminate"]
render = 'complete()'

[kinds.open_app]
aliases = ["open_app", "launch", "launch_app"]
render = '''open_app(app_name='{text}')'''
[kinds.open_app.fields]
text = '''(?:text|app_name)\s*=\s*'(?P<v>(?:[^'\\]|\\.)*)[']'''

[kinds.wait]
aliases = ["wait"]
render = 'wait()'
"#;

/// Keyword-line style with normalized coordinates, e.g. `CLICK 500 500`.
pub const TAG_DIALECT: &str = r#"
id = "tag"
description = "Uppercase keyword lines with normalized 0-1000 coordinates"
coordinates = "normalized"
escape = "backslash_double"
candidate = '(?m)^[ \t]*[A-Z_]{2,}\b[^\r\n]*\r?$'
kind_pattern = '^[ \t]*(?P<v>[A-Z_]{2,})\b'

[kinds.click]
aliases = ["CLICK", "TAP"]
render = 'CLICK {x} {y}'
[kinds.click.fields]
x = '(?P<v>-?\d+(?:\.\d+)?)\s+-?\d+(?:\.\d+)?\s*$'
y = '(?P<v>-?\d+(?:\.\d+)?)\s*$'

[kinds.scroll]
aliases = ["SCROLL", "SWIPE"]
render = 'SCROLL {direction}'
[kinds.scroll.fields]
direction = '(?i)\b(?P<v>up|down|left|right)\b'

[kinds.type]
aliases = ["TYPE", "INPUT"]
render = 'TYPE "{text}"'
[kinds.type.fields]
text = '"(?P<v>(?:[^"\\]|\\.)*)"'

[kinds.press_back]
aliases = ["PRESS_BACK", "BACK"]
render = 'PRESS_BACK'

[kinds.press_home]
aliases = ["PRESS_HOME", "HOME"]
render = 'PRESS_HOME'

[kinds.enter]
aliases = ["ENTER"]
render = 'ENTER'

[kinds.complete]
aliases = ["COMPLETE", "DONE", "STOP"]
render = 'COMPLETE'

[kinds.open_app]
aliases = ["OPEN_APP", "OPEN"]
render = 'OPEN_APP "{text}"'
[kinds.open_app.fields]
text = '"(?P<v>(?:[^"\\]|\\.)*)"'

[kinds.wait]
aliases = ["WAIT"]
render = 'WAIT'
"#;

/// Dialect registry: the three built-ins plus anything loaded from grammar
/// files. Lookups are by dialect id.
#[derive(Debug)]
pub struct Registry {
    grammars: BTreeMap<String, Arc<Grammar>>,
}

impl Registry {
    /// Registry with the built-in dialects: `json`, `func`, `tag`.
    pub fn builtin() -> Self {
        let mut reg = Registry { grammars: BTreeMap::new() };
        for src in [JSON_DIALECT, FUNC_DIALECT, TAG_DIALECT] {
            let g = compile(src).expect("built-in grammar must compile");
            reg.grammars.insert(g.id.clone(), Arc::new(g));
        }
        reg
    }

    pub fn register(&mut self, g: Grammar) -> Result<(), GrammarError> {
        if self.grammars.contains_key(&g.id) {
            return Err(GrammarError::DuplicateId(g.id));
        }
        self.grammars.insert(g.id.clone(), Arc::new(g));
        Ok(())
    }

    /// Load one grammar TOML file and register it; returns the new id.
    pub fn load_grammar_file(&mut self, path: &Path) -> Result<String, GrammarError> {
        let text = std::fs::read_to_string(path)?;
        let g = compile(&text)?;
        let id = g.id.clone();
        self.register(g)?;
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<Arc<Grammar>> {
        self.grammars.get(id).cloned()
    }

    pub fn dialects(&self) -> Vec<Dialect> {
        self.grammars
            .values()
            .map(|g| Dialect { id: g.id.clone(), description: g.description.clone() })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_compile_and_cover_all_kinds() {
        let reg = Registry::builtin();
        let ids: Vec<_> = reg.dialects().into_iter().map(|d| d.id).collect();
        assert_eq!(ids, ["func", "json", "tag"]);
        for id in ["json", "func", "tag"] {
            let g = reg.get(id).unwrap();
            for kind in ActionKind::ALL {
                let _ = g.rule_for_kind(kind);
            }
        }
    }

    #[test]
    fn compile_rejects_missing_kind() {
        let toml = r#"
id = "tiny"
description = "incomplete"
coordinates = "normalized"
candidate = 'x'
kind_pattern = '(?P<v>x)'
[kinds.click]
render = 'c'
[kinds.click.fields]
x = '(?P<v>\d+)'
y = '(?P<v>\d+)'
"#;
        assert!(matches!(compile(toml), Err(GrammarError::MissingKind { .. })));
    }

    #[test]
    fn compile_rejects_missing_capture_group() {
        let toml = r#"
id = "g"
description = "bad"
coordinates = "normalized"
candidate = 'x'
kind_pattern = 'no_group'
kinds = {}
"#;
        assert!(matches!(compile(toml), Err(GrammarError::MissingCaptureGroup { .. })));
    }

    #[test]
    fn escape_round_trips() {
        for esc in [TextEscape::Json, TextEscape::BackslashSingle, TextEscape::BackslashDouble] {
            for s in ["plain", "a\"b", "a'b", "back\\slash", "line\nbreak", "tab\there", ""] {
                assert_eq!(esc.strip(&esc.apply(s)), s, "{esc:?} {s:?}");
            }
        }
    }
}
