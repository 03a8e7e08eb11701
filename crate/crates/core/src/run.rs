//! End-to-end orchestration: declarative config in, reports out. One run =
//! subset selection → baseline pass → perturbed passes → metric aggregation →
//! report, summary CSV, and manifest emission.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{GrammarError, Registry};
use crate::gateway::reference::{ReferenceBackend, ReferenceKind};
use crate::gateway::{
    build_prompt, run_jobs, AgentBackend, AgentEndpoint, GatewayError, HttpBackend, OracleInputs, PromptBundle,
    Setting, StepJob, TemplateRegistry,
};
use crate::ingest::adapters::{adapt, SourceFormat};
use crate::ingest::{select_probe_subset, BaselineIndex, EpisodeCorpus, GtActionRecord, IngestError};
use crate::metrics::{
    aggregate_tsr, delta_p, match_action, reflection_score, task_success, vmc, Aggregate, MetricBlock, MetricError,
    ProbeReport, StepOutcome, CSV_HEADER, VMC_GAMMA_PX,
};
use crate::model::{denormalize_point, normalize_action, Action, ModelError, Point, Step};
use crate::perturb::{apply, PerturbationSpec, PerturbedStep, ProbeFamily};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config does not parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Coordinates(#[from] ModelError),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("runs were made against different corpora ({a} vs {b})")]
    CorpusMismatch { a: String, b: String },
    #[error("manifest {0} is unusable: {1}")]
    BadManifest(PathBuf, String),
}

// ---- configuration -------------------------------------------------------------

fn default_format() -> String {
    "canonical".into()
}
fn default_setting() -> Setting {
    Setting::Low
}
fn default_true() -> bool {
    true
}
fn default_template() -> String {
    "default".into()
}

/// One agent entry in the config. `backend` picks the implementation:
/// "reference" runs a built-in deterministic agent in-process, "http" talks
/// to a chat-completion endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: String,
    pub backend: String,
    /// reference backend: which built-in agent.
    #[serde(default)]
    pub reference_kind: Option<String>,
    /// reference backend: which dialect it speaks (default "json").
    #[serde(default)]
    pub dialect_id: Option<String>,
    #[serde(default = "default_template")]
    pub template_id: String,
    /// http backend: where to send requests. Carries its own dialect_id.
    #[serde(default)]
    pub endpoint: Option<AgentEndpoint>,
}

/// A whole run, declaratively.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: String,
    #[serde(default = "default_format")]
    pub format_id: String,
    pub agents: Vec<AgentConfig>,
    pub probes: Vec<PerturbationSpec>,
    #[serde(default = "default_setting")]
    pub setting: Setting,
    /// Keep only steps the agent already solves unperturbed (per agent).
    #[serde(default = "default_true")]
    pub baseline_filter: bool,
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
    /// Overrides every endpoint's own parallelism when set.
    #[serde(default)]
    pub max_parallel: Option<usize>,
    /// Extra dialect grammar files to register (TOML, see codec docs).
    #[serde(default)]
    pub grammar_files: Vec<String>,
    /// Persist perturbed screenshots under output/perturbed/ for audit.
    #[serde(default)]
    pub persist_perturbed: bool,
    /// How many prior episode actions the prompt mentions (0 = none).
    #[serde(default)]
    pub history_window: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.agents.is_empty() {
            return Err(RunError::Config("at least one agent is required".into()));
        }
        if self.probes.is_empty() {
            return Err(RunError::Config("at least one probe is required".into()));
        }
        let mut agent_ids = BTreeSet::new();
        for a in &self.agents {
            if !agent_ids.insert(a.id.as_str()) {
                return Err(RunError::Config(format!("duplicate agent id {:?}", a.id)));
            }
            match a.backend.as_str() {
                "reference" => {
                    let kind = a.reference_kind.as_deref().unwrap_or_default();
                    if ReferenceKind::parse(kind).is_none() {
                        return Err(RunError::Config(format!(
                            "agent {:?}: reference_kind must be one of memory_oracle/reasoner_oracle/random_agent",
                            a.id
                        )));
                    }
                }
                "http" => {
                    if a.endpoint.is_none() {
                        return Err(RunError::Config(format!("agent {:?}: http backend needs an endpoint", a.id)));
                    }
                }
                other => {
                    return Err(RunError::Config(format!("agent {:?}: unknown backend {other:?}", a.id)));
                }
            }
        }
        let mut labels = BTreeSet::new();
        for p in &self.probes {
            p.validate().map_err(|e| RunError::Config(e.to_string()))?;
            if !labels.insert(p.label()) {
                return Err(RunError::Config(format!("probes are not distinguishable: duplicate label {:?}", p.label())));
            }
        }
        if SourceFormat::parse(&self.format_id).is_none() {
            return Err(RunError::Config(format!("unknown format_id {:?}", self.format_id)));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_path_buf(), source })?;
    let config: RunConfig = toml::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the parsed config (canonical typed serialization, so key order in
/// the file cannot matter).
pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    let mut h = Sha256::new();
    h.update(&canonical);
    hex(&h.finalize())
}

/// Content hash of a corpus: every record in canonical form plus every
/// screen's raw pixels, in corpus order. Independent of where it came from.
pub fn corpus_hash(corpus: &EpisodeCorpus) -> String {
    let mut h = Sha256::new();
    for e in &corpus.episodes {
        for s in &e.steps {
            let record = serde_json::json!({
                "sample_id": s.sample_id,
                "episode_id": e.id,
                "step_index": s.step_index,
                "goal": s.goal,
                "instruction": s.instruction,
                "screen_w": s.screen.width,
                "screen_h": s.screen.height,
                "gt_action": GtActionRecord::from_action(&s.gt_action),
                "gt_region": s.gt_region,
            });
            h.update(record.to_string().as_bytes());
            h.update(s.screen.as_bytes());
        }
    }
    hex(&h.finalize())
}

/// Reproducibility ledger written next to the reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub corpus_hash: String,
    /// "agent__probe" → report path, relative to this manifest's directory.
    pub reports: BTreeMap<String, String>,
    /// "agent__probe" → why no report exists. Empty on a fully clean run.
    pub failures: BTreeMap<String, String>,
    pub csv_path: String,
    /// Wall-clock seconds per (agent, probe) plus "total".
    pub timings_s: BTreeMap<String, String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

// ---- the run --------------------------------------------------------------------

struct PreppedProbe {
    label: String,
    family: ProbeFamily,
    /// (original step, its perturbed form), in subset order.
    items: Vec<(Step, PerturbedStep)>,
    /// (episode id, original episode length, member sample ids) for TSR.
    episodes: Vec<(String, usize, Vec<String>)>,
}

/// Apply every probe once, up front: perturbation is agent-independent, so
/// its cost is shared across agents.
fn prep_probes(
    config: &RunConfig,
    corpus: &EpisodeCorpus,
) -> Vec<Result<PreppedProbe, String>> {
    let mut family_subsets: BTreeMap<ProbeFamily, Result<EpisodeCorpus, String>> = BTreeMap::new();
    config
        .probes
        .iter()
        .map(|spec| {
            let family = spec.kind.family();
            let subset = family_subsets
                .entry(family)
                .or_insert_with(|| select_probe_subset(corpus, family, None).map_err(|e| e.to_string()));
            let subset = subset.as_ref().map_err(|e| e.clone())?;
            let mut items = Vec::new();
            let mut episodes = Vec::new();
            for e in &subset.episodes {
                let mut ids = Vec::new();
                for step in &e.steps {
                    let perturbed = apply(step, spec)
                        .map_err(|err| format!("probe {} on {}: {err}", spec.label(), step.sample_id))?;
                    ids.push(step.sample_id.clone());
                    items.push((step.clone(), perturbed));
                }
                episodes.push((e.id.clone(), e.max_steps, ids));
            }
            Ok(PreppedProbe { label: spec.label(), family, items, episodes })
        })
        .collect()
}

fn build_backend(
    agent: &AgentConfig,
    registry: &Registry,
    run_seed: u64,
) -> Result<(Box<dyn AgentBackend>, String, usize), String> {
    match agent.backend.as_str() {
        "reference" => {
            let kind = ReferenceKind::parse(agent.reference_kind.as_deref().unwrap_or_default())
                .ok_or_else(|| format!("unknown reference kind {:?}", agent.reference_kind))?;
            let dialect_id = agent.dialect_id.clone().unwrap_or_else(|| "json".to_string());
            let grammar =
                registry.get(&dialect_id).ok_or_else(|| format!("unknown dialect {dialect_id:?}"))?;
            Ok((Box::new(ReferenceBackend::new(kind, grammar, run_seed)), dialect_id, 4))
        }
        "http" => {
            let endpoint = agent.endpoint.clone().ok_or("http backend needs an endpoint")?;
            let dialect_id = endpoint.dialect_id.clone();
            let grammar =
                registry.get(&dialect_id).ok_or_else(|| format!("unknown dialect {dialect_id:?}"))?;
            let parallel = endpoint.max_parallel;
            let backend = HttpBackend::new(endpoint, grammar).map_err(|e| e.to_string())?;
            Ok((Box::new(backend), dialect_id, parallel))
        }
        other => Err(format!("unknown backend {other:?}")),
    }
}

/// Prior ground-truth actions of the same episode, for the prompt's history
/// section. Uses the full corpus so filtered-out steps still appear.
fn history_for(corpus: &EpisodeCorpus, episode_id: &str, step_index: usize, window: usize) -> Vec<Action> {
    if window == 0 {
        return Vec::new();
    }
    let Some(e) = corpus.episodes.iter().find(|e| e.id == episode_id) else {
        return Vec::new();
    };
    let upto = step_index.min(e.steps.len());
    e.steps[upto.saturating_sub(window)..upto].iter().map(|s| s.gt_action.clone()).collect()
}

struct JobInputs<'a> {
    templates: &'a TemplateRegistry,
    template_id: &'a str,
    setting: Setting,
    corpus: &'a EpisodeCorpus,
    history_window: usize,
}

fn baseline_job(inputs: &JobInputs, episode_id: &str, step: &Step) -> Result<StepJob, GatewayError> {
    let instruction = match (inputs.setting, &step.instruction) {
        // A step with no recorded instruction: in the low setting the goal
        // doubles as the atomic instruction.
        (Setting::Low, None) => Some(step.goal.clone()),
        (_, i) => i.clone(),
    };
    let bundle = PromptBundle {
        setting: inputs.setting,
        goal: step.goal.clone(),
        instruction,
        screen: Arc::clone(&step.screen),
        history: history_for(inputs.corpus, episode_id, step.step_index, inputs.history_window),
    };
    Ok(StepJob {
        sample_id: step.sample_id.clone(),
        payload: build_prompt(inputs.templates, inputs.template_id, &bundle)?,
        screen: Arc::clone(&step.screen),
        oracle: OracleInputs {
            original_gt: step.gt_action.clone(),
            remapped_gt: step.gt_action.clone(),
            perturb: None,
        },
    })
}

fn probe_job(
    inputs: &JobInputs,
    episode_id: &str,
    step: &Step,
    perturbed: &PerturbedStep,
) -> Result<StepJob, GatewayError> {
    let instruction = match (inputs.setting, &perturbed.instruction) {
        (Setting::Low, None) => Some(perturbed.goal.clone()),
        (_, i) => i.clone(),
    };
    let bundle = PromptBundle {
        setting: inputs.setting,
        goal: perturbed.goal.clone(),
        instruction,
        screen: Arc::clone(&perturbed.screen),
        history: history_for(inputs.corpus, episode_id, step.step_index, inputs.history_window),
    };
    Ok(StepJob {
        sample_id: step.sample_id.clone(),
        payload: build_prompt(inputs.templates, inputs.template_id, &bundle)?,
        screen: Arc::clone(&perturbed.screen),
        oracle: OracleInputs {
            original_gt: step.gt_action.clone(),
            remapped_gt: perturbed.remapped_gt.clone(),
            perturb: Some(perturbed.spec.clone()),
        },
    })
}

fn score_results(
    results: Vec<crate::gateway::JobResult>,
    gts: &BTreeMap<String, Action>,
) -> Vec<StepOutcome> {
    results
        .into_iter()
        .map(|r| {
            let gt = gts.get(&r.sample_id).expect("every job has a ground truth");
            match r.response {
                Ok(resp) => match_action(&r.sample_id, Some(&resp.parsed), gt),
                Err(err) => {
                    log::warn!("unanswered: {err}");
                    match_action(&r.sample_id, None, gt)
                }
            }
        })
        .collect()
}

/// Execute a full run. Every configured (agent, probe) pair ends up either in
/// `reports` or in `failures` — never silently missing.
pub fn run_experiment(config: &RunConfig, base_dir: &Path) -> Result<RunManifest, RunError> {
    let t_total = Instant::now();
    config.validate()?;

    let mut registry = Registry::builtin();
    for f in &config.grammar_files {
        registry.load_grammar_file(&resolve(base_dir, f))?;
    }

    let format = SourceFormat::parse(&config.format_id)
        .ok_or_else(|| RunError::Config(format!("unknown format_id {:?}", config.format_id)))?;
    let corpus_dir = resolve(base_dir, &config.corpus_path);
    let adapted = adapt(format, &corpus_dir)?;
    if adapted.dropped > 0 {
        log::warn!("{} native step(s) had no canonical equivalent and were dropped", adapted.dropped);
    }
    let corpus = adapted.corpus;
    let corpus_digest = corpus_hash(&corpus);

    let out_dir = resolve(base_dir, &config.output_dir);
    let reports_dir = out_dir.join("reports");
    std::fs::create_dir_all(&reports_dir).map_err(|source| RunError::Io { path: reports_dir.clone(), source })?;

    let preps = prep_probes(config, &corpus);

    if config.persist_perturbed {
        for prep in preps.iter().flatten() {
            let dir = out_dir.join("perturbed").join(&prep.label);
            std::fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
            for (_, p) in &prep.items {
                let img = image::RgbImage::from_raw(p.screen.width, p.screen.height, p.screen.as_bytes().to_vec())
                    .expect("screen buffers are consistent");
                let path = dir.join(format!("{}.png", p.base_sample_id));
                img.save(&path).map_err(|e| RunError::Config(format!("cannot persist {path:?}: {e}")))?;
            }
        }
    }

    let templates = TemplateRegistry::default();
    let mut reports: BTreeMap<String, String> = BTreeMap::new();
    let mut failures: BTreeMap<String, String> = BTreeMap::new();
    let mut timings: BTreeMap<String, String> = BTreeMap::new();
    let mut csv_rows: Vec<String> = Vec::new();

    for agent in &config.agents {
        let built = build_backend(agent, &registry, config.seed);
        let (backend, _dialect, endpoint_parallel) = match built {
            Ok(b) => b,
            Err(why) => {
                for spec in &config.probes {
                    failures.insert(format!("{}__{}", agent.id, spec.label()), format!("backend: {why}"));
                }
                continue;
            }
        };
        let parallel = config.max_parallel.unwrap_or(endpoint_parallel);
        let inputs = JobInputs {
            templates: &templates,
            template_id: &agent.template_id,
            setting: config.setting,
            corpus: &corpus,
            history_window: config.history_window,
        };

        // One baseline pass per family, shared by that family's probes.
        let mut family_baseline: BTreeMap<ProbeFamily, BTreeMap<String, StepOutcome>> = BTreeMap::new();

        for (i, prep) in preps.iter().enumerate() {
            let t_probe = Instant::now();
            let prep = match prep {
                Ok(p) => p,
                Err(why) => {
                    failures.insert(format!("{}__{}", agent.id, config.probes[i].label()), why.clone());
                    continue;
                }
            };
            let key = format!("{}__{}", agent.id, prep.label);

            let outcome: Result<ProbeReport, String> = (|| {
                // Baseline for this probe's family (cached per agent).
                if !family_baseline.contains_key(&prep.family) {
                    let mut jobs = Vec::new();
                    let mut gts = BTreeMap::new();
                    for (step, _) in &prep.items {
                        let episode_id = prep
                            .episodes
                            .iter()
                            .find(|(_, _, ids)| ids.contains(&step.sample_id))
                            .map(|(id, _, _)| id.clone())
                            .unwrap_or_default();
                        jobs.push(baseline_job(&inputs, &episode_id, step).map_err(|e| e.to_string())?);
                        gts.insert(
                            step.sample_id.clone(),
                            normalize_action(&step.gt_action, &step.screen).map_err(|e| e.to_string())?,
                        );
                    }
                    let results = run_jobs(backend.as_ref(), jobs, parallel);
                    let outcomes = score_results(results, &gts);
                    family_baseline
                        .insert(prep.family, outcomes.into_iter().map(|o| (o.sample_id.clone(), o)).collect());
                }
                let baseline = &family_baseline[&prep.family];

                // The probe's working set, optionally baseline-filtered.
                let keep: Box<dyn Fn(&str) -> bool> = if config.baseline_filter {
                    let index = BaselineIndex::from_outcomes(
                        &agent.id,
                        &baseline.values().cloned().collect::<Vec<_>>(),
                    );
                    Box::new(move |id: &str| index.sr_ok(id))
                } else {
                    Box::new(|_| true)
                };

                let mut jobs = Vec::new();
                let mut gts = BTreeMap::new();
                for (step, perturbed) in &prep.items {
                    if !keep(&step.sample_id) {
                        continue;
                    }
                    let episode_id = prep
                        .episodes
                        .iter()
                        .find(|(_, _, ids)| ids.contains(&step.sample_id))
                        .map(|(id, _, _)| id.clone())
                        .unwrap_or_default();
                    jobs.push(probe_job(&inputs, &episode_id, step, perturbed).map_err(|e| e.to_string())?);
                    gts.insert(
                        step.sample_id.clone(),
                        normalize_action(&perturbed.remapped_gt, &perturbed.screen).map_err(|e| e.to_string())?,
                    );
                }
                if jobs.is_empty() {
                    return Err("probe subset is empty after the baseline filter".to_string());
                }
                let results = run_jobs(backend.as_ref(), jobs, parallel);
                let perturbed_outcomes = score_results(results, &gts);

                // Baseline restricted to exactly the probed ids.
                let base_outcomes: Vec<StepOutcome> = perturbed_outcomes
                    .iter()
                    .map(|o| baseline.get(&o.sample_id).cloned().ok_or("baseline missing a probed sample"))
                    .collect::<Result<_, _>>()?;

                let agg = Aggregate::from_outcomes(&perturbed_outcomes).map_err(|e| e.to_string())?;
                let deltas = delta_p(&base_outcomes, &perturbed_outcomes).map_err(|e| e.to_string())?;

                // VMC pairs: both predictions parsed to coordinates. Raw
                // pixel space; dimensions are operator-invariant.
                let screen_of: BTreeMap<&str, &Step> =
                    prep.items.iter().map(|(s, _)| (s.sample_id.as_str(), s)).collect();
                let mut pairs: Vec<(Point, Point)> = Vec::new();
                for (b, p) in base_outcomes.iter().zip(&perturbed_outcomes) {
                    if let (Some(bp), Some(pp)) = (b.pred_point, p.pred_point) {
                        let screen = &screen_of[b.sample_id.as_str()].screen;
                        pairs.push((
                            denormalize_point(bp, screen).map_err(|e| e.to_string())?,
                            denormalize_point(pp, screen).map_err(|e| e.to_string())?,
                        ));
                    }
                }
                let vmc_value = vmc(&pairs, VMC_GAMMA_PX);

                let rs = reflection_score(&perturbed_outcomes.iter().map(|o| o.pred_kind).collect::<Vec<_>>())
                    .map_err(|e| e.to_string())?;

                // TSR only over episodes the probe (and filter) fully covers.
                let by_id: BTreeMap<&str, &StepOutcome> =
                    perturbed_outcomes.iter().map(|o| (o.sample_id.as_str(), o)).collect();
                let mut successes = Vec::new();
                for (_, max_steps, ids) in &prep.episodes {
                    let members: Vec<StepOutcome> =
                        ids.iter().filter_map(|id| by_id.get(id.as_str()).cloned().cloned()).collect();
                    if members.len() == *max_steps {
                        successes.push(task_success(&members, *max_steps).map_err(|e| e.to_string())?);
                    }
                }
                let tsr = if successes.is_empty() {
                    None
                } else {
                    Some(aggregate_tsr(&successes).map_err(|e| e.to_string())?)
                };

                Ok(ProbeReport {
                    agent_id: agent.id.clone(),
                    probe: prep.label.clone(),
                    n_samples: agg.n,
                    metrics: MetricBlock {
                        type_acc: agg.type_acc(),
                        grounding_acc: agg.grounding_acc(),
                        sr: agg.sr(),
                        tsr,
                        delta_p_type: deltas.delta_p_type,
                        delta_p_sr: deltas.delta_p_sr,
                        vmc: vmc_value,
                        rs,
                    },
                    vmc_pairs: pairs.len(),
                    unanswered_count: agg.unanswered,
                    outcomes: perturbed_outcomes,
                })
            })();

            match outcome {
                Ok(report) => {
                    let file = format!("reports/{key}.json");
                    let path = out_dir.join(&file);
                    let body = serde_json::to_string_pretty(&report)?;
                    std::fs::write(&path, body + "\n").map_err(|source| RunError::Io { path, source })?;
                    csv_rows.push(report.csv_row());
                    reports.insert(key.clone(), file);
                }
                Err(why) => {
                    failures.insert(key.clone(), why);
                }
            }
            timings.insert(key, format!("{:.3}", t_probe.elapsed().as_secs_f64()));
        }
    }

    let csv_path = out_dir.join("summary.csv");
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &csv_rows {
        csv.push_str(row);
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv).map_err(|source| RunError::Io { path: csv_path.clone(), source })?;

    timings.insert("total".into(), format!("{:.3}", t_total.elapsed().as_secs_f64()));
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(config),
        corpus_hash: corpus_digest,
        reports,
        failures,
        csv_path: "summary.csv".into(),
        timings_s: timings,
    };
    let manifest_path = out_dir.join(MANIFEST_NAME);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|source| RunError::Io { path: manifest_path, source })?;
    Ok(manifest)
}

// ---- post-run tooling ------------------------------------------------------------

fn load_manifest(path: &Path) -> Result<(RunManifest, PathBuf), RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_path_buf(), source })?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| RunError::BadManifest(path.to_path_buf(), e.to_string()))?;
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok((manifest, dir))
}

fn load_report(dir: &Path, rel: &str) -> Result<ProbeReport, RunError> {
    let path = dir.join(rel);
    let text = std::fs::read_to_string(&path).map_err(|source| RunError::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| RunError::BadManifest(path, e.to_string()))
}

fn metric_values(m: &MetricBlock) -> Vec<(&'static str, Option<f64>)> {
    vec![
        ("type_acc", Some(m.type_acc.as_f64())),
        ("grounding_acc", m.grounding_acc.map(|p| p.as_f64())),
        ("sr", Some(m.sr.as_f64())),
        ("tsr", m.tsr.map(|p| p.as_f64())),
        ("delta_p_type", Some(m.delta_p_type.as_f64())),
        ("delta_p_sr", Some(m.delta_p_sr.as_f64())),
        ("vmc", m.vmc.map(|p| p.as_f64())),
        ("rs", Some(m.rs.as_f64())),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub key: String,
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Set whenever the two sides differ (value or presence).
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
}

impl Comparison {
    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }

    pub fn render(&self) -> String {
        let mut out = String::from("key,metric,a,b,flag\n");
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.key,
                r.metric,
                fmt(r.a),
                fmt(r.b),
                if r.flagged { "DIFF" } else { "" }
            ));
        }
        out
    }
}

/// Per-(agent, probe, metric) differences between two runs over the same
/// corpus. Nonzero differences (and one-sided reports) are flagged.
pub fn compare_runs(manifest_a: &Path, manifest_b: &Path) -> Result<Comparison, RunError> {
    let (a, dir_a) = load_manifest(manifest_a)?;
    let (b, dir_b) = load_manifest(manifest_b)?;
    if a.corpus_hash != b.corpus_hash {
        return Err(RunError::CorpusMismatch { a: a.corpus_hash, b: b.corpus_hash });
    }
    let keys: BTreeSet<&String> = a.reports.keys().chain(b.reports.keys()).collect();
    let mut rows = Vec::new();
    for key in keys {
        match (a.reports.get(key), b.reports.get(key)) {
            (Some(ra), Some(rb)) => {
                let ra = load_report(&dir_a, ra)?;
                let rb = load_report(&dir_b, rb)?;
                let va = metric_values(&ra.metrics);
                let vb = metric_values(&rb.metrics);
                for ((name, x), (_, y)) in va.into_iter().zip(vb) {
                    rows.push(CompareRow {
                        key: key.clone(),
                        metric: name.to_string(),
                        a: x,
                        b: y,
                        flagged: x != y,
                    });
                }
            }
            (one, _) => {
                rows.push(CompareRow {
                    key: key.clone(),
                    metric: "report".into(),
                    a: one.map(|_| 1.0),
                    b: if one.is_some() { None } else { Some(1.0) },
                    flagged: true,
                });
            }
        }
    }
    Ok(Comparison { rows })
}

#[derive(Debug)]
pub struct PlotPaths {
    pub scatter: PathBuf,
    pub vmc_rs: PathBuf,
}

/// Plot-ready tables. `scatter.csv` holds one point per (agent, probe): the
/// reasoning coordinate 1 − ΔP_SR/100 as a fraction. `vmc_rs.csv` carries the
/// VMC/RS distributions (VMC blank where undefined).
pub fn emit_plot_data(manifest_path: &Path) -> Result<PlotPaths, RunError> {
    let (manifest, dir) = load_manifest(manifest_path)?;
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|source| RunError::Io { path: plots.clone(), source })?;

    let mut scatter = String::from("agent_id,probe,reasoning_coordinate\n");
    let mut vmc_rs = String::from("agent_id,probe,vmc,rs\n");
    for rel in manifest.reports.values() {
        let report = load_report(&dir, rel)?;
        let coord = (1000 - report.metrics.delta_p_sr.tenths()) as f64 / 1000.0;
        scatter.push_str(&format!("{},{},{:.3}\n", report.agent_id, report.probe, coord));
        vmc_rs.push_str(&format!(
            "{},{},{},{}\n",
            report.agent_id,
            report.probe,
            report.metrics.vmc.map(|p| p.to_string()).unwrap_or_default(),
            report.metrics.rs
        ));
    }
    let scatter_path = plots.join("scatter.csv");
    std::fs::write(&scatter_path, scatter).map_err(|source| RunError::Io { path: scatter_path.clone(), source })?;
    let vmc_rs_path = plots.join("vmc_rs.csv");
    std::fs::write(&vmc_rs_path, vmc_rs).map_err(|source| RunError::Io { path: vmc_rs_path.clone(), source })?;
    Ok(PlotPaths { scatter: scatter_path, vmc_rs: vmc_rs_path })
}
