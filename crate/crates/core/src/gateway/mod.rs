//! Obtain an `AgentResponse` for every (possibly perturbed) step — from a
//! remote chat-completion service over HTTP, or from the built-in
//! deterministic reference agents used for self-validation.

pub mod mock;
pub mod reference;

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{parse_action, Grammar, ParseOutcome};
use crate::model::{Action, Screen};
use crate::perturb::PerturbationSpec;

/// Prompting regime: `low` hands the agent the step's atomic instruction,
/// `high` only the episode goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    High,
    Low,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::High => "high",
            Setting::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "high" => Some(Setting::High),
            "low" => Some(Setting::Low),
            _ => None,
        }
    }
}

/// Where and how to reach one agent service.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentEndpoint {
    pub base_url: String,
    pub model_name: String,
    pub dialect_id: String,
    /// Whole-request timeout, seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// First retry delay; doubles per attempt. Milliseconds.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Decoding parameters forwarded opaquely into the request body
    /// (temperature, top_p, ...).
    #[serde(default)]
    pub extra_params: BTreeMap<String, serde_json::Value>,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_parallel() -> usize {
    4
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    250
}

impl AgentEndpoint {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_parallel < 1 {
            return Err(GatewayError::BadEndpoint("max_parallel must be ≥ 1".into()));
        }
        if !(self.timeout > 0.0) {
            return Err(GatewayError::BadEndpoint("timeout must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything that goes into one prompt.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub setting: Setting,
    pub goal: String,
    pub instruction: Option<String>,
    pub screen: Arc<Screen>,
    pub history: Vec<Action>,
}

/// What one query produced.
#[derive(Debug, Clone)]
pub struct AgentResponse {
    pub raw: String,
    pub parsed: ParseOutcome,
    /// Seconds.
    pub latency: f64,
    /// 1 for a first-try success; never exceeds max_retries + 1.
    pub attempt_count: u32,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("low-setting prompt requires an instruction")]
    MissingInstruction,
    #[error("screen could not be encoded: {0}")]
    Encode(String),
    #[error("bad endpoint: {0}")]
    BadEndpoint(String),
    #[error("unknown dialect {0:?}")]
    UnknownDialect(String),
}

/// Per-query failure. Every variant is scored as unanswered by the caller.
#[derive(Debug, Error)]
pub enum QueryError {
    #[error("sample {sample_id}: transport failed after {attempts} attempt(s): {message}")]
    Transport { sample_id: String, attempts: u32, message: String },
    #[error("sample {sample_id}: endpoint answered HTTP {status}")]
    Status { sample_id: String, status: u16 },
    #[error("sample {sample_id}: response body unusable: {message}")]
    BadResponse { sample_id: String, message: String },
}

impl QueryError {
    pub fn sample_id(&self) -> &str {
        match self {
            QueryError::Transport { sample_id, .. }
            | QueryError::Status { sample_id, .. }
            | QueryError::BadResponse { sample_id, .. } => sample_id,
        }
    }
}

// ---- prompt templates -----------------------------------------------------------

/// Plain-text template. Placeholders: `{goal}`, `{instruction}`, `{history}`.
/// A line whose placeholder has nothing to say is dropped whole: the
/// instruction line disappears in the high setting (or when no instruction is
/// recorded) and the history line disappears when the history is empty.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub body: String,
}

pub const DEFAULT_TEMPLATE: &str = "\
You operate a device through its screen. Overall goal: {goal}
Instruction for this step: {instruction}
Previous actions: {history}
Look at the attached screenshot and reply with exactly one action.";

impl PromptTemplate {
    pub fn render(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        if bundle.setting == Setting::Low && bundle.instruction.is_none() {
            return Err(GatewayError::MissingInstruction);
        }
        let mut lines = Vec::new();
        for line in self.body.lines() {
            let mut line = line.to_string();
            if line.contains("{instruction}") {
                match (&bundle.setting, &bundle.instruction) {
                    (Setting::Low, Some(i)) => line = line.replace("{instruction}", i),
                    _ => continue,
                }
            }
            if line.contains("{history}") {
                if bundle.history.is_empty() {
                    continue;
                }
                let rendered = bundle.history.iter().map(history_atom).collect::<Vec<_>>().join("; ");
                line = line.replace("{history}", &rendered);
            }
            lines.push(line.replace("{goal}", &bundle.goal));
        }
        Ok(lines.join("\n"))
    }
}

fn history_atom(a: &Action) -> String {
    match a {
        Action::Click(p) => format!("click({},{})", p.x, p.y),
        Action::Scroll(d) => format!("scroll({})", d.as_str()),
        Action::Type(t) => format!("type({t:?})"),
        Action::OpenApp(t) => format!("open_app({t:?})"),
        other => other.kind().as_str().to_string(),
    }
}

/// Named templates; ships with "default", callers may override or add.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert("default".to_string(), PromptTemplate { body: DEFAULT_TEMPLATE.to_string() });
        TemplateRegistry { templates }
    }
}

impl TemplateRegistry {
    pub fn register(&mut self, id: impl Into<String>, body: impl Into<String>) {
        self.templates.insert(id.into(), PromptTemplate { body: body.into() });
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.get(id)
    }
}

/// Rendered request: prompt text plus the screen as a lossless PNG.
#[derive(Debug, Clone)]
pub struct RequestPayload {
    pub text: String,
    pub image_png_b64: String,
}

impl RequestPayload {
    /// Chat-completion body: one user message with an image part and a text
    /// part; `extra` is merged in at the top level.
    pub fn chat_body(&self, model: &str, extra: &BTreeMap<String, serde_json::Value>) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "image_url",
                     "image_url": {"url": format!("data:image/png;base64,{}", self.image_png_b64)}},
                    {"type": "text", "text": self.text},
                ],
            }],
        });
        let obj = body.as_object_mut().expect("body is an object");
        for (k, v) in extra {
            obj.insert(k.clone(), v.clone());
        }
        body
    }
}

pub fn encode_screen_png(screen: &Screen) -> Result<Vec<u8>, GatewayError> {
    let img = image::RgbImage::from_raw(screen.width, screen.height, screen.as_bytes().to_vec())
        .ok_or_else(|| GatewayError::Encode("buffer/dimension mismatch".into()))?;
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).map_err(|e| GatewayError::Encode(e.to_string()))?;
    Ok(buf.into_inner())
}

/// Render a template into a sendable payload. The screenshot is embedded
/// losslessly; the low setting carries the instruction verbatim, the high
/// setting only the goal.
pub fn build_prompt(
    registry: &TemplateRegistry,
    template_id: &str,
    bundle: &PromptBundle,
) -> Result<RequestPayload, GatewayError> {
    let template = registry.get(template_id).ok_or_else(|| GatewayError::UnknownTemplate(template_id.to_string()))?;
    let text = template.render(bundle)?;
    let png = encode_screen_png(&bundle.screen)?;
    Ok(RequestPayload { text, image_png_b64: base64::engine::general_purpose::STANDARD.encode(png) })
}

// ---- jobs and backends ----------------------------------------------------------

/// Ground-truth context a reference agent may consult. Coordinates are raw
/// pixels, exactly as recorded.
#[derive(Debug, Clone)]
pub struct OracleInputs {
    pub original_gt: Action,
    /// Equals `original_gt` except under zooming.
    pub remapped_gt: Action,
    /// None for the unperturbed baseline pass.
    pub perturb: Option<PerturbationSpec>,
}

/// One unit of querying work.
#[derive(Debug, Clone)]
pub struct StepJob {
    pub sample_id: String,
    pub payload: RequestPayload,
    /// The screen the prompt shows; also the parse context for raw-pixel
    /// dialects.
    pub screen: Arc<Screen>,
    pub oracle: OracleInputs,
}

pub trait AgentBackend: Sync {
    fn query(&self, job: &StepJob) -> Result<AgentResponse, QueryError>;
}

/// Remote chat-completion service speaking one dialect.
pub struct HttpBackend {
    pub endpoint: AgentEndpoint,
    grammar: Arc<Grammar>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: AgentEndpoint, grammar: Arc<Grammar>) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend { endpoint, grammar, agent })
    }

    fn url(&self) -> String {
        format!("{}/v1/chat/completions", self.endpoint.base_url.trim_end_matches('/'))
    }

    fn bearer(&self) -> Option<String> {
        let var = self.endpoint.api_key_env.as_deref()?;
        std::env::var(var).ok().map(|k| format!("Bearer {k}"))
    }
}

/// Pull the completion text out of the common response shapes.
fn extract_text(v: &serde_json::Value) -> Option<String> {
    if let Some(s) = v["choices"][0]["message"]["content"].as_str() {
        return Some(s.to_string());
    }
    if let Some(s) = v["content"][0]["text"].as_str() {
        return Some(s.to_string());
    }
    if let Some(s) = v["output_text"].as_str() {
        return Some(s.to_string());
    }
    v["text"].as_str().map(|s| s.to_string())
}

impl AgentBackend for HttpBackend {
    fn query(&self, job: &StepJob) -> Result<AgentResponse, QueryError> {
        let body = job.payload.chat_body(&self.endpoint.model_name, &self.endpoint.extra_params);
        let url = self.url();
        let started = Instant::now();
        let mut attempt: u32 = 0;
        loop {
            attempt += 1;
            let mut req = self.agent.post(&url);
            if let Some(auth) = self.bearer() {
                req = req.header("authorization", auth);
            }
            let failure: String = match req.send_json(&body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        let parsed_body: serde_json::Value =
                            resp.body_mut().read_json().map_err(|e| QueryError::BadResponse {
                                sample_id: job.sample_id.clone(),
                                message: e.to_string(),
                            })?;
                        let raw = extract_text(&parsed_body).ok_or_else(|| QueryError::BadResponse {
                            sample_id: job.sample_id.clone(),
                            message: "no completion text found".into(),
                        })?;
                        let parsed = parse_action(&raw, &self.grammar, &job.screen);
                        return Ok(AgentResponse {
                            raw,
                            parsed,
                            latency: started.elapsed().as_secs_f64(),
                            attempt_count: attempt,
                        });
                    }
                    if (500..600).contains(&status) {
                        format!("HTTP {status}")
                    } else {
                        // Client errors will not improve on retry.
                        return Err(QueryError::Status { sample_id: job.sample_id.clone(), status });
                    }
                }
                Err(e) => e.to_string(),
            };
            if attempt > self.endpoint.max_retries {
                return Err(QueryError::Transport {
                    sample_id: job.sample_id.clone(),
                    attempts: attempt,
                    message: failure,
                });
            }
            let delay = self.endpoint.backoff_ms.saturating_mul(1u64 << (attempt - 1).min(10));
            std::thread::sleep(Duration::from_millis(delay));
        }
    }
}

/// Result row for one job; errors stay attached to their sample.
#[derive(Debug)]
pub struct JobResult {
    pub sample_id: String,
    pub response: Result<AgentResponse, QueryError>,
}

/// Run all jobs against a backend with at most `max_parallel` in flight.
/// Results come back sorted by sample_id regardless of completion order.
pub fn run_jobs(backend: &dyn AgentBackend, jobs: Vec<StepJob>, max_parallel: usize) -> Vec<JobResult> {
    let workers = max_parallel.max(1).min(jobs.len().max(1));
    let queue = Mutex::new(VecDeque::from(jobs));
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some(job) = job else { break };
                let sample_id = job.sample_id.clone();
                let response = backend.query(&job);
                results.lock().expect("results lock").push(JobResult { sample_id, response });
            });
        }
    });
    let mut out = results.into_inner().expect("pool finished");
    out.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    out
}
