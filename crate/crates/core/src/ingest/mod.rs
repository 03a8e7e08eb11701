//! Corpus loading: a canonical directory format (one JSONL manifest plus one
//! lossless image per step), adapters for third-party benchmark layouts, and
//! probe-subset selection.

pub mod adapters;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::StepOutcome;
use crate::model::{validate_episode, Action, ActionKind, Episode, Point, Region, Screen, ScrollDirection, Step, Violation};
use crate::perturb::ProbeFamily;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// A named set of episodes, the unit everything downstream consumes.
#[derive(Debug, Clone)]
pub struct EpisodeCorpus {
    pub name: String,
    /// Free-form platform hint (mobile/web/desktop/...).
    pub platform_tag: String,
    pub episodes: Vec<Episode>,
}

impl EpisodeCorpus {
    pub fn step_count(&self) -> usize {
        self.episodes.iter().map(|e| e.steps.len()).sum()
    }

    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.episodes.iter().flat_map(|e| e.steps.iter())
    }

    /// Every structural invariant, per episode plus corpus-level uniqueness.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.episodes.is_empty() {
            out.push(Violation {
                sample_id: "<corpus>".into(),
                rule: "empty-corpus".into(),
                message: format!("corpus {:?} has no episodes", self.name),
            });
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for e in &self.episodes {
            out.extend(validate_episode(e));
            for s in &e.steps {
                if !seen.insert(&s.sample_id) {
                    out.push(Violation {
                        sample_id: s.sample_id.clone(),
                        rule: "duplicate-sample-id".into(),
                        message: "sample_id repeats across the corpus".into(),
                    });
                }
            }
        }
        out
    }
}

/// Per-agent record of how the UNPERTURBED steps scored; the source for the
/// baseline filter (each agent is filtered on its own correct steps).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineIndex {
    pub agent_id: String,
    pub records: BTreeMap<String, BaselineRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub type_ok: bool,
    pub grounding_ok: Option<bool>,
    pub sr_ok: bool,
}

impl BaselineIndex {
    pub fn from_outcomes(agent_id: &str, outcomes: &[StepOutcome]) -> Self {
        let records = outcomes
            .iter()
            .map(|o| {
                (o.sample_id.clone(), BaselineRecord { type_ok: o.type_ok, grounding_ok: o.grounding_ok, sr_ok: o.sr_ok })
            })
            .collect();
        BaselineIndex { agent_id: agent_id.to_string(), records }
    }

    pub fn sr_ok(&self, sample_id: &str) -> bool {
        self.records.get(sample_id).map(|r| r.sr_ok).unwrap_or(false)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest not found at {0}")]
    MissingManifest(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest line {line} ({sample_id}): {message}")]
    BadRecord { line: usize, sample_id: String, message: String },
    #[error("duplicate sample_id {0:?}")]
    DuplicateSampleId(String),
    #[error("image file {file:?} for sample {sample_id:?}: {message}")]
    BadImage { file: String, sample_id: String, message: String },
    #[error("sample {sample_id:?}: manifest says {manifest_w}x{manifest_h} but image is {image_w}x{image_h}")]
    DimensionMismatch { sample_id: String, manifest_w: u32, manifest_h: u32, image_w: u32, image_h: u32 },
    #[error("episode {episode_id:?} mixes goals ({a:?} vs {b:?})")]
    GoalMismatch { episode_id: String, a: String, b: String },
    #[error("corpus failed validation: {0}")]
    Invalid(ViolationList),
    #[error("probe subset for family {family:?} is empty — probing a vacuous set is a configuration bug")]
    EmptySubset { family: ProbeFamily },
    #[error("corpus has no episodes after adaptation")]
    EmptyCorpus,
    #[error("unknown source format {0:?}")]
    UnknownFormat(String),
}

/// Violations wrapped for error display.
#[derive(Debug)]
pub struct ViolationList(pub Vec<Violation>);

impl fmt::Display for ViolationList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.0.len())?;
        for v in self.0.iter().take(5) {
            write!(f, "; [{}] {}: {}", v.rule, v.sample_id, v.message)?;
        }
        if self.0.len() > 5 {
            write!(f, "; ...")?;
        }
        Ok(())
    }
}

// ---- canonical on-disk schema --------------------------------------------------

/// One manifest line. Field names are normative for the format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub episode_id: String,
    pub step_index: usize,
    pub goal: String,
    #[serde(default)]
    pub instruction: Option<String>,
    pub image_file: String,
    pub screen_w: u32,
    pub screen_h: u32,
    pub gt_action: GtActionRecord,
    #[serde(default)]
    pub gt_region: Option<Region>,
}

/// Serialized action: `kind` plus whichever arguments that kind uses.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GtActionRecord {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl GtActionRecord {
    pub fn from_action(a: &Action) -> Self {
        let mut rec = GtActionRecord { kind: a.kind().as_str().to_string(), ..Default::default() };
        match a {
            Action::Click(p) => {
                rec.x = Some(p.x);
                rec.y = Some(p.y);
            }
            Action::Scroll(d) => rec.direction = Some(d.as_str().to_string()),
            Action::Type(t) | Action::OpenApp(t) => rec.text = Some(t.clone()),
            _ => {}
        }
        rec
    }

    pub fn to_action(&self) -> Result<Action, String> {
        let kind = ActionKind::parse(&self.kind).ok_or_else(|| format!("unknown action kind {:?}", self.kind))?;
        match kind {
            ActionKind::Click => {
                let x = self.x.ok_or("click without x")?;
                let y = self.y.ok_or("click without y")?;
                Ok(Action::Click(Point::new(x, y)))
            }
            ActionKind::Scroll => {
                let d = self.direction.as_deref().ok_or("scroll without direction")?;
                let d = ScrollDirection::parse(d).ok_or_else(|| format!("bad scroll direction {d:?}"))?;
                Ok(Action::Scroll(d))
            }
            ActionKind::Type => Ok(Action::Type(self.text.clone().ok_or("type without text")?)),
            ActionKind::OpenApp => Ok(Action::OpenApp(self.text.clone().ok_or("open_app without text")?)),
            ActionKind::PressBack => Ok(Action::PressBack),
            ActionKind::PressHome => Ok(Action::PressHome),
            ActionKind::Enter => Ok(Action::Enter),
            ActionKind::Complete => Ok(Action::Complete),
            ActionKind::Wait => Ok(Action::Wait),
        }
    }
}

/// Shared PNG loader with a per-load cache (steps may share screenshots).
struct ImageLoader {
    root: PathBuf,
    cache: HashMap<String, Arc<Screen>>,
}

impl ImageLoader {
    fn new(root: &Path) -> Self {
        ImageLoader { root: root.to_path_buf(), cache: HashMap::new() }
    }

    fn load(&mut self, file: &str, sample_id: &str) -> Result<Arc<Screen>, IngestError> {
        if let Some(s) = self.cache.get(file) {
            return Ok(Arc::clone(s));
        }
        let path = self.root.join(file);
        let img = image::open(&path)
            .map_err(|e| IngestError::BadImage { file: file.to_string(), sample_id: sample_id.to_string(), message: e.to_string() })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let screen = Screen::new(w, h, img.into_raw())
            .map_err(|e| IngestError::BadImage { file: file.to_string(), sample_id: sample_id.to_string(), message: e.to_string() })?;
        let screen = Arc::new(screen);
        self.cache.insert(file.to_string(), Arc::clone(&screen));
        Ok(screen)
    }
}

/// Load a canonical corpus directory. The corpus comes back fully validated;
/// any violation aborts the load.
pub fn load_canonical(dir: &Path) -> Result<EpisodeCorpus, IngestError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(IngestError::MissingManifest(manifest_path));
    }
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|source| IngestError::Io { path: manifest_path.clone(), source })?;

    let mut loader = ImageLoader::new(dir);
    let mut seen_ids: HashSet<String> = HashSet::new();
    // Episode order = first appearance in the manifest.
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, (String, Vec<Step>)> = HashMap::new();

    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| IngestError::BadRecord {
            line: lineno + 1,
            sample_id: "<unparsed>".into(),
            message: e.to_string(),
        })?;
        if !seen_ids.insert(rec.sample_id.clone()) {
            return Err(IngestError::DuplicateSampleId(rec.sample_id));
        }
        let gt_action = rec.gt_action.to_action().map_err(|message| IngestError::BadRecord {
            line: lineno + 1,
            sample_id: rec.sample_id.clone(),
            message,
        })?;
        let screen = loader.load(&rec.image_file, &rec.sample_id)?;
        if screen.width != rec.screen_w || screen.height != rec.screen_h {
            return Err(IngestError::DimensionMismatch {
                sample_id: rec.sample_id,
                manifest_w: rec.screen_w,
                manifest_h: rec.screen_h,
                image_w: screen.width,
                image_h: screen.height,
            });
        }
        let step = Step {
            sample_id: rec.sample_id,
            step_index: rec.step_index,
            screen,
            goal: rec.goal.clone(),
            instruction: rec.instruction,
            gt_action,
            gt_region: rec.gt_region,
        };
        match grouped.get_mut(&rec.episode_id) {
            Some((goal, steps)) => {
                if *goal != rec.goal {
                    return Err(IngestError::GoalMismatch {
                        episode_id: rec.episode_id,
                        a: goal.clone(),
                        b: rec.goal,
                    });
                }
                steps.push(step);
            }
            None => {
                order.push(rec.episode_id.clone());
                grouped.insert(rec.episode_id, (rec.goal, vec![step]));
            }
        }
    }

    let episodes: Vec<Episode> = order
        .into_iter()
        .map(|id| {
            let (goal, steps) = grouped.remove(&id).expect("grouped by construction");
            let mut e = Episode::new(goal, steps);
            e.id = id;
            e
        })
        .collect();

    let corpus = EpisodeCorpus {
        name: dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "corpus".into()),
        platform_tag: "unspecified".into(),
        episodes,
    };
    let violations = corpus.validate();
    if !violations.is_empty() {
        return Err(IngestError::Invalid(ViolationList(violations)));
    }
    Ok(corpus)
}

/// Write a corpus in the canonical layout (manifest + one PNG per step).
pub fn save_canonical(corpus: &EpisodeCorpus, dir: &Path) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io { path: dir.to_path_buf(), source })?;
    let mut manifest = String::new();
    let mut written: HashSet<String> = HashSet::new();
    for episode in &corpus.episodes {
        for step in &episode.steps {
            let image_file = format!("{}.png", step.sample_id);
            if written.insert(image_file.clone()) {
                let img = image::RgbImage::from_raw(step.screen.width, step.screen.height, step.screen.as_bytes().to_vec())
                    .expect("screen buffer is consistent by construction");
                img.save(dir.join(&image_file)).map_err(|e| IngestError::BadImage {
                    file: image_file.clone(),
                    sample_id: step.sample_id.clone(),
                    message: e.to_string(),
                })?;
            }
            let rec = ManifestRecord {
                sample_id: step.sample_id.clone(),
                episode_id: episode.id.clone(),
                step_index: step.step_index,
                goal: step.goal.clone(),
                instruction: step.instruction.clone(),
                image_file,
                screen_w: step.screen.width,
                screen_h: step.screen.height,
                gt_action: GtActionRecord::from_action(&step.gt_action),
                gt_region: step.gt_region,
            };
            manifest.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            manifest.push('\n');
        }
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest).map_err(|source| IngestError::Io { path, source })?;
    Ok(())
}

/// Does a step belong to a probe family's eligible set?
pub fn step_in_family(step: &Step, family: ProbeFamily) -> bool {
    match family {
        ProbeFamily::Visual => step.gt_action.kind() == ActionKind::Click,
        ProbeFamily::Text => matches!(step.gt_action.kind(), ActionKind::Type | ActionKind::OpenApp),
        ProbeFamily::Structure => matches!(
            step.gt_action.kind(),
            ActionKind::PressBack | ActionKind::PressHome | ActionKind::Wait | ActionKind::Complete | ActionKind::Scroll
        ),
    }
}

/// Select the steps a probe family applies to, optionally keeping only steps
/// the agent already solved (the 100%-baseline filter). Steps keep their
/// original `step_index`; subset episodes are views, not re-indexed episodes.
pub fn select_probe_subset(
    corpus: &EpisodeCorpus,
    family: ProbeFamily,
    baseline: Option<&BaselineIndex>,
) -> Result<EpisodeCorpus, IngestError> {
    let mut episodes = Vec::new();
    let mut skipped_ungroundable = 0usize;
    for e in &corpus.episodes {
        let steps: Vec<Step> = e
            .steps
            .iter()
            .filter(|s| step_in_family(s, family))
            .filter(|s| {
                // Visual probes need a derivable target region.
                if family == ProbeFamily::Visual
                    && s.gt_region.is_none()
                    && !s.screen.in_bounds_point(s.gt_action.click_point().unwrap_or(Point::new(-1, -1)))
                {
                    skipped_ungroundable += 1;
                    return false;
                }
                true
            })
            .filter(|s| baseline.map(|b| b.sr_ok(&s.sample_id)).unwrap_or(true))
            .cloned()
            .collect();
        if !steps.is_empty() {
            episodes.push(Episode { id: e.id.clone(), goal: e.goal.clone(), steps, max_steps: e.max_steps });
        }
    }
    if skipped_ungroundable > 0 {
        log::warn!("{skipped_ungroundable} ungroundable click step(s) excluded from visual probing");
    }
    if episodes.iter().map(|e| e.steps.len()).sum::<usize>() == 0 {
        return Err(IngestError::EmptySubset { family });
    }
    Ok(EpisodeCorpus { name: corpus.name.clone(), platform_tag: corpus.platform_tag.clone(), episodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn screen() -> Arc<Screen> {
        Arc::new(Screen::filled(100, 100, [200, 200, 200]).unwrap())
    }

    fn step(id: &str, idx: usize, action: Action) -> Step {
        Step {
            sample_id: id.into(),
            step_index: idx,
            screen: screen(),
            goal: "g".into(),
            instruction: Some("do it".into()),
            gt_action: action,
            gt_region: None,
        }
    }

    fn corpus() -> EpisodeCorpus {
        let steps = vec![
            step("s0", 0, Action::Click(Point::new(50, 50))),
            step("s1", 1, Action::Type("hello".into())),
            step("s2", 2, Action::Wait),
        ];
        let mut e = Episode::new("g", steps);
        e.id = "e0".into();
        EpisodeCorpus { name: "t".into(), platform_tag: "test".into(), episodes: vec![e] }
    }

    #[test]
    fn family_selection() {
        let c = corpus();
        let v = select_probe_subset(&c, ProbeFamily::Visual, None).unwrap();
        assert_eq!(v.step_count(), 1);
        assert_eq!(v.steps().next().unwrap().sample_id, "s0");
        let t = select_probe_subset(&c, ProbeFamily::Text, None).unwrap();
        assert_eq!(t.step_count(), 1);
        assert_eq!(t.steps().next().unwrap().sample_id, "s1");
        let s = select_probe_subset(&c, ProbeFamily::Structure, None).unwrap();
        assert_eq!(s.steps().next().unwrap().sample_id, "s2");
    }

    #[test]
    fn subset_members_stay_in_family() {
        let c = corpus();
        for family in [ProbeFamily::Visual, ProbeFamily::Text, ProbeFamily::Structure] {
            let sub = select_probe_subset(&c, family, None).unwrap();
            assert!(sub.steps().all(|s| step_in_family(s, family)));
            // Subset ⊆ corpus.
            let ids: HashSet<_> = c.steps().map(|s| s.sample_id.clone()).collect();
            assert!(sub.steps().all(|s| ids.contains(&s.sample_id)));
        }
    }

    #[test]
    fn baseline_filter_can_empty_the_subset() {
        let c = corpus();
        let idx = BaselineIndex {
            agent_id: "a".into(),
            records: [(
                "s0".to_string(),
                BaselineRecord { type_ok: true, grounding_ok: Some(false), sr_ok: false },
            )]
            .into_iter()
            .collect(),
        };
        let err = select_probe_subset(&c, ProbeFamily::Visual, Some(&idx)).unwrap_err();
        assert!(matches!(err, IngestError::EmptySubset { family: ProbeFamily::Visual }));
    }

    #[test]
    fn corpus_validate_catches_cross_episode_duplicates() {
        let mut c = corpus();
        let mut e2 = Episode::new("g2", vec![step("s0", 0, Action::Wait)]);
        e2.id = "e1".into();
        c.episodes.push(e2);
        let v = c.validate();
        assert!(v.iter().any(|v| v.rule == "duplicate-sample-id"));
    }

    #[test]
    fn action_record_round_trip() {
        let actions = [
            Action::Click(Point::new(5, 7)),
            Action::Scroll(ScrollDirection::Left),
            Action::Type("t".into()),
            Action::OpenApp("a".into()),
            Action::PressBack,
            Action::PressHome,
            Action::Enter,
            Action::Complete,
            Action::Wait,
        ];
        for a in actions {
            assert_eq!(GtActionRecord::from_action(&a).to_action().unwrap(), a);
        }
    }

    #[test]
    fn click_record_without_point_is_schema_error() {
        let rec = GtActionRecord { kind: "click".into(), ..Default::default() };
        assert!(rec.to_action().is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus();
        save_canonical(&c, dir.path()).unwrap();
        let loaded = load_canonical(dir.path()).unwrap();
        assert_eq!(loaded.step_count(), c.step_count());
        assert_eq!(loaded.episodes.len(), 1);
        let (a, b) = (&c.episodes[0], &loaded.episodes[0]);
        assert_eq!(a.id, b.id);
        assert_eq!(a.goal, b.goal);
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.sample_id, y.sample_id);
            assert_eq!(x.gt_action, y.gt_action);
            assert_eq!(x.instruction, y.instruction);
            assert_eq!(*x.screen, *y.screen, "PNG round-trip is lossless");
        }
    }

    #[test]
    fn load_errors_name_the_offender() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus();
        save_canonical(&c, dir.path()).unwrap();
        // Break one image reference.
        std::fs::remove_file(dir.path().join("s1.png")).unwrap();
        let err = load_canonical(dir.path()).unwrap_err();
        assert!(err.to_string().contains("s1.png"), "{err}");

        // Duplicate id.
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let first = manifest.lines().next().unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), format!("{first}\n{first}\n")).unwrap();
        let err = load_canonical(dir.path()).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateSampleId(id) if id == "s0"));
    }

    #[test]
    fn missing_manifest_is_its_own_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_canonical(dir.path()), Err(IngestError::MissingManifest(_))));
    }
}
