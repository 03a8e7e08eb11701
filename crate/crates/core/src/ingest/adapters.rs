//! Best-effort converters from third-party benchmark layouts into the
//! canonical corpus. Steps whose native action has no canonical equivalent
//! are dropped and counted, never silently skipped: for every adapter,
//! `dropped + corpus.step_count() == native_steps`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::{EpisodeCorpus, ImageLoader, IngestError, ViolationList};
use crate::model::{Action, Episode, Point, Region, Screen, ScrollDirection, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    /// Already in the canonical layout; adaptation is the identity.
    Canonical,
    AndroidControl,
    Aitz,
    GuiOdyssey,
    GuiAct,
    OmniAct,
}

impl SourceFormat {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "canonical" => SourceFormat::Canonical,
            "androidcontrol" => SourceFormat::AndroidControl,
            "aitz" => SourceFormat::Aitz,
            "gui_odyssey" => SourceFormat::GuiOdyssey,
            "gui_act" => SourceFormat::GuiAct,
            "omniact" => SourceFormat::OmniAct,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceFormat::Canonical => "canonical",
            SourceFormat::AndroidControl => "androidcontrol",
            SourceFormat::Aitz => "aitz",
            SourceFormat::GuiOdyssey => "gui_odyssey",
            SourceFormat::GuiAct => "gui_act",
            SourceFormat::OmniAct => "omniact",
        }
    }

    fn platform_tag(self) -> &'static str {
        match self {
            SourceFormat::Canonical => "unspecified",
            SourceFormat::AndroidControl | SourceFormat::Aitz | SourceFormat::GuiOdyssey => "mobile",
            SourceFormat::GuiAct => "web",
            SourceFormat::OmniAct => "desktop",
        }
    }
}

#[derive(Debug)]
pub struct AdaptOutcome {
    pub corpus: EpisodeCorpus,
    /// Steps present in the native data that could not be mapped.
    pub dropped: usize,
    /// Steps present in the native data, mapped or not.
    pub native_steps: usize,
}

pub fn adapt(format: SourceFormat, dir: &Path) -> Result<AdaptOutcome, IngestError> {
    match format {
        SourceFormat::Canonical => {
            let corpus = super::load_canonical(dir)?;
            let native_steps = corpus.step_count();
            Ok(AdaptOutcome { corpus, dropped: 0, native_steps })
        }
        SourceFormat::AndroidControl => adapt_androidcontrol(dir),
        SourceFormat::Aitz => adapt_aitz(dir),
        SourceFormat::GuiOdyssey => adapt_gui_odyssey(dir),
        SourceFormat::GuiAct => adapt_gui_act(dir),
        SourceFormat::OmniAct => adapt_omniact(dir),
    }
}

/// Shared accumulator: buffers mapped steps per episode, assigns consecutive
/// `step_index` values after drops, and tallies the bookkeeping.
struct Collector {
    format: SourceFormat,
    name: String,
    episodes: Vec<Episode>,
    dropped: usize,
    native_steps: usize,
}

impl Collector {
    fn new(format: SourceFormat, dir: &Path) -> Self {
        let name = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format.as_str().into());
        Collector { format, name, episodes: Vec::new(), dropped: 0, native_steps: 0 }
    }

    fn drop_step(&mut self, sample_id: &str, why: &str) {
        self.dropped += 1;
        log::warn!("[{}] dropping step {sample_id}: {why}", self.format.as_str());
    }

    fn push_episode(&mut self, id: String, goal: String, steps: Vec<MappedStep>) {
        if steps.is_empty() {
            return;
        }
        let steps: Vec<Step> = steps
            .into_iter()
            .enumerate()
            .map(|(i, m)| Step {
                sample_id: m.sample_id,
                step_index: i,
                screen: m.screen,
                goal: goal.clone(),
                instruction: m.instruction,
                gt_action: m.action,
                gt_region: m.region,
            })
            .collect();
        let mut e = Episode::new(goal, steps);
        e.id = id;
        self.episodes.push(e);
    }

    fn finish(self) -> Result<AdaptOutcome, IngestError> {
        if self.episodes.is_empty() {
            return Err(IngestError::EmptyCorpus);
        }
        let corpus = EpisodeCorpus {
            name: self.name,
            platform_tag: self.format.platform_tag().into(),
            episodes: self.episodes,
        };
        let violations = corpus.validate();
        if !violations.is_empty() {
            return Err(IngestError::Invalid(ViolationList(violations)));
        }
        Ok(AdaptOutcome { dropped: self.dropped, native_steps: self.native_steps, corpus })
    }
}

struct MappedStep {
    sample_id: String,
    screen: Arc<Screen>,
    instruction: Option<String>,
    action: Action,
    region: Option<Region>,
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

fn parse_json<'a, T: Deserialize<'a>>(text: &'a str, what: &str) -> Result<T, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::BadRecord {
        line: e.line(),
        sample_id: format!("<{what}>"),
        message: e.to_string(),
    })
}

/// A click is usable when its point lands on the screen or an explicit
/// target box exists; anything else has no groundable truth.
fn click_usable(p: Point, region: Option<&Region>, screen: &Screen) -> bool {
    screen.in_bounds_point(p) || region.is_some()
}

fn scaled(v: f64, extent: u32) -> i64 {
    (v * extent as f64).round().clamp(0.0, extent as f64) as i64
}

// ---- androidcontrol -------------------------------------------------------------
//
// `episodes.jsonl`: one episode per line with raw-pixel actions.

#[derive(Deserialize)]
struct AcEpisode {
    episode_id: String,
    goal: String,
    steps: Vec<AcStep>,
}

#[derive(Deserialize)]
struct AcStep {
    screenshot: String,
    #[serde(default)]
    instruction: Option<String>,
    action: AcAction,
    #[serde(default)]
    bbox: Option<[u32; 4]>,
}

#[derive(Deserialize)]
struct AcAction {
    action_type: String,
    #[serde(default)]
    x: Option<i64>,
    #[serde(default)]
    y: Option<i64>,
    #[serde(default)]
    direction: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    app_name: Option<String>,
}

fn adapt_androidcontrol(dir: &Path) -> Result<AdaptOutcome, IngestError> {
    let text = read_text(&dir.join("episodes.jsonl"))?;
    let mut loader = ImageLoader::new(dir);
    let mut out = Collector::new(SourceFormat::AndroidControl, dir);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let ep: AcEpisode = parse_json(line, "androidcontrol episode")?;
        let mut steps = Vec::new();
        for (i, s) in ep.steps.iter().enumerate() {
            out.native_steps += 1;
            let sample_id = format!("{}:{}", ep.episode_id, i);
            let screen = loader.load(&s.screenshot, &sample_id)?;
            let region = s.bbox.map(|[x0, y0, x1, y1]| Region { x0, y0, x1, y1 });
            let a = &s.action;
            let action = match a.action_type.as_str() {
                "click" => match (a.x, a.y) {
                    (Some(x), Some(y)) if click_usable(Point::new(x, y), region.as_ref(), &screen) => {
                        Action::Click(Point::new(x, y))
                    }
                    _ => {
                        out.drop_step(&sample_id, "click without a usable target");
                        continue;
                    }
                },
                "scroll" => match a.direction.as_deref().and_then(ScrollDirection::parse) {
                    Some(d) => Action::Scroll(d),
                    None => {
                        out.drop_step(&sample_id, "scroll without direction");
                        continue;
                    }
                },
                "input_text" => match a.text.as_deref().map(str::trim) {
                    Some(t) if !t.is_empty() => Action::Type(a.text.clone().unwrap()),
                    _ => {
                        out.drop_step(&sample_id, "input_text without text");
                        continue;
                    }
                },
                "open_app" => match a.app_name.as_deref().map(str::trim) {
                    Some(t) if !t.is_empty() => Action::OpenApp(a.app_name.clone().unwrap()),
                    _ => {
                        out.drop_step(&sample_id, "open_app without app_name");
                        continue;
                    }
                },
                "navigate_back" => Action::PressBack,
                "navigate_home" => Action::PressHome,
                "keyboard_enter" => Action::Enter,
                "status_complete" => Action::Complete,
                "wait" => Action::Wait,
                other => {
                    out.drop_step(&sample_id, &format!("no canonical equivalent for {other:?}"));
                    continue;
                }
            };
            steps.push(MappedStep { sample_id, screen, instruction: s.instruction.clone(), action, region });
        }
        out.push_episode(ep.episode_id, ep.goal, steps);
    }
    out.finish()
}

// ---- aitz -----------------------------------------------------------------------
//
// `trajectories.json`: an array of annotated episodes. Points are normalized
// [y, x] in [0, 1]; a DUAL_POINT with equal touch/lift is a tap, otherwise a
// swipe whose direction follows the dominant delta.

#[derive(Deserialize)]
struct AitzEpisode {
    episode_id: String,
    instruction: String,
    steps: Vec<AitzStep>,
}

#[derive(Deserialize)]
struct AitzStep {
    image_path: String,
    #[serde(default)]
    coat_action_think: Option<String>,
    result_action_type: String,
    #[serde(default)]
    result_touch_yx: Option<[f64; 2]>,
    #[serde(default)]
    result_lift_yx: Option<[f64; 2]>,
    #[serde(default)]
    result_action_text: Option<String>,
}

fn adapt_aitz(dir: &Path) -> Result<AdaptOutcome, IngestError> {
    let text = read_text(&dir.join("trajectories.json"))?;
    let episodes: Vec<AitzEpisode> = parse_json(&text, "aitz trajectories")?;
    let mut loader = ImageLoader::new(dir);
    let mut out = Collector::new(SourceFormat::Aitz, dir);
    for ep in &episodes {
        let mut steps = Vec::new();
        for (i, s) in ep.steps.iter().enumerate() {
            out.native_steps += 1;
            let sample_id = format!("{}:{}", ep.episode_id, i);
            let screen = loader.load(&s.image_path, &sample_id)?;
            let action = match s.result_action_type.as_str() {
                "DUAL_POINT" => {
                    let (Some(touch), Some(lift)) = (s.result_touch_yx, s.result_lift_yx) else {
                        out.drop_step(&sample_id, "DUAL_POINT without touch/lift");
                        continue;
                    };
                    let (dy, dx) = (lift[0] - touch[0], lift[1] - touch[1]);
                    if dx.abs() < 0.04 && dy.abs() < 0.04 {
                        let p = Point::new(scaled(touch[1], screen.width), scaled(touch[0], screen.height));
                        if !click_usable(p, None, &screen) {
                            out.drop_step(&sample_id, "tap lands off-screen");
                            continue;
                        }
                        Action::Click(p)
                    } else if dy.abs() >= dx.abs() {
                        // Swipe up moves content down on screen: direction names
                        // the scroll intent, i.e. the finger delta inverted.
                        Action::Scroll(if dy < 0.0 { ScrollDirection::Down } else { ScrollDirection::Up })
                    } else {
                        Action::Scroll(if dx < 0.0 { ScrollDirection::Right } else { ScrollDirection::Left })
                    }
                }
                "TYPE" => match s.result_action_text.as_deref().map(str::trim) {
                    Some(t) if !t.is_empty() => Action::Type(s.result_action_text.clone().unwrap()),
                    _ => {
                        out.drop_step(&sample_id, "TYPE without text");
                        continue;
                    }
                },
                "PRESS_BACK" => Action::PressBack,
                "PRESS_HOME" => Action::PressHome,
                "PRESS_ENTER" => Action::Enter,
                "STATUS_TASK_COMPLETE" => Action::Complete,
                "NO_ACTION" => Action::Wait,
                other => {
                    out.drop_step(&sample_id, &format!("no canonical equivalent for {other:?}"));
                    continue;
                }
            };
            steps.push(MappedStep {
                sample_id,
                screen,
                instruction: s.coat_action_think.clone(),
                action,
                region: None,
            });
        }
        out.push_episode(ep.episode_id.clone(), ep.instruction.clone(), steps);
    }
    out.finish()
}

// ---- gui_odyssey ----------------------------------------------------------------
//
// `annotations/`: one JSON per episode; CLICK carries raw-pixel [x, y].

#[derive(Deserialize)]
struct OdEpisode {
    episode_id: String,
    task_info: OdTaskInfo,
    steps: Vec<OdStep>,
}

#[derive(Deserialize)]
struct OdTaskInfo {
    task: String,
}

#[derive(Deserialize)]
struct OdStep {
    screenshot: String,
    action: String,
    #[serde(default)]
    info: serde_json::Value,
    #[serde(default)]
    low_level_instruction: Option<String>,
}

fn adapt_gui_odyssey(dir: &Path) -> Result<AdaptOutcome, IngestError> {
    let ann = dir.join("annotations");
    let mut files: Vec<_> = std::fs::read_dir(&ann)
        .map_err(|source| IngestError::Io { path: ann.clone(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut loader = ImageLoader::new(dir);
    let mut out = Collector::new(SourceFormat::GuiOdyssey, dir);
    for file in files {
        let ep: OdEpisode = parse_json(&read_text(&file)?, "gui_odyssey episode")?;
        let mut steps = Vec::new();
        for (i, s) in ep.steps.iter().enumerate() {
            out.native_steps += 1;
            let sample_id = format!("{}:{}", ep.episode_id, i);
            let screen = loader.load(&s.screenshot, &sample_id)?;
            let action = match s.action.as_str() {
                "CLICK" => {
                    let coords: Option<[i64; 2]> = serde_json::from_value(s.info.clone()).ok();
                    match coords {
                        Some([x, y]) if click_usable(Point::new(x, y), None, &screen) => {
                            Action::Click(Point::new(x, y))
                        }
                        _ => {
                            out.drop_step(&sample_id, "CLICK without usable coordinates");
                            continue;
                        }
                    }
                }
                "SCROLL" => {
                    let dir_s: Option<String> = serde_json::from_value(s.info.clone()).ok();
                    match dir_s.as_deref().map(str::to_ascii_lowercase).as_deref().and_then(ScrollDirection::parse) {
                        Some(d) => Action::Scroll(d),
                        None => {
                            out.drop_step(&sample_id, "SCROLL without direction");
                            continue;
                        }
                    }
                }
                "TEXT" => {
                    let t: Option<String> = serde_json::from_value(s.info.clone()).ok();
                    match t.as_deref().map(str::trim) {
                        Some(x) if !x.is_empty() => Action::Type(t.unwrap()),
                        _ => {
                            out.drop_step(&sample_id, "TEXT without content");
                            continue;
                        }
                    }
                }
                "OPEN_APP" => {
                    let t: Option<String> = serde_json::from_value(s.info.clone()).ok();
                    match t.as_deref().map(str::trim) {
                        Some(x) if !x.is_empty() => Action::OpenApp(t.unwrap()),
                        _ => {
                            out.drop_step(&sample_id, "OPEN_APP without app name");
                            continue;
                        }
                    }
                }
                "KEY_BACK" => Action::PressBack,
                "KEY_HOME" => Action::PressHome,
                "KEY_ENTER" => Action::Enter,
                "COMPLETE" => Action::Complete,
                "WAIT" => Action::Wait,
                other => {
                    out.drop_step(&sample_id, &format!("no canonical equivalent for {other:?}"));
                    continue;
                }
            };
            steps.push(MappedStep {
                sample_id,
                screen,
                instruction: s.low_level_instruction.clone(),
                action,
                region: None,
            });
        }
        out.push_episode(ep.episode_id.clone(), ep.task_info.task.clone(), steps);
    }
    out.finish()
}

// ---- gui_act --------------------------------------------------------------------
//
// `steps.jsonl`: flat step records grouped by an `episode` key, ordered by
// `pos`; click targets are unit-normalized floats.

#[derive(Deserialize)]
struct GaStep {
    uid: String,
    task: String,
    image: String,
    episode: String,
    pos: usize,
    op: String,
    #[serde(default)]
    value: serde_json::Value,
}

fn adapt_gui_act(dir: &Path) -> Result<AdaptOutcome, IngestError> {
    let text = read_text(&dir.join("steps.jsonl"))?;
    let mut loader = ImageLoader::new(dir);
    let mut out = Collector::new(SourceFormat::GuiAct, dir);
    let mut records: Vec<GaStep> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(parse_json(line, "gui_act step")?);
    }
    records.sort_by(|a, b| a.episode.cmp(&b.episode).then(a.pos.cmp(&b.pos)));

    let mut grouped: BTreeMap<String, (String, Vec<MappedStep>)> = BTreeMap::new();
    for r in &records {
        out.native_steps += 1;
        let screen = loader.load(&r.image, &r.uid)?;
        #[derive(Deserialize, Default)]
        struct GaValue {
            #[serde(default)]
            x: Option<f64>,
            #[serde(default)]
            y: Option<f64>,
            #[serde(default)]
            direction: Option<String>,
            #[serde(default)]
            text: Option<String>,
        }
        let v: GaValue = serde_json::from_value(r.value.clone()).unwrap_or_default();
        let action = match r.op.as_str() {
            "click" | "tap" => match (v.x, v.y) {
                (Some(x), Some(y)) => {
                    let p = Point::new(scaled(x, screen.width), scaled(y, screen.height));
                    if !click_usable(p, None, &screen) {
                        out.drop_step(&r.uid, "click lands off-screen");
                        continue;
                    }
                    Action::Click(p)
                }
                _ => {
                    out.drop_step(&r.uid, "click without coordinates");
                    continue;
                }
            },
            "input" => match v.text.as_deref().map(str::trim) {
                Some(t) if !t.is_empty() => Action::Type(v.text.clone().unwrap()),
                _ => {
                    out.drop_step(&r.uid, "input without text");
                    continue;
                }
            },
            "scroll" | "swipe" => match v.direction.as_deref().and_then(ScrollDirection::parse) {
                Some(d) => Action::Scroll(d),
                None => {
                    out.drop_step(&r.uid, "scroll without direction");
                    continue;
                }
            },
            "enter" => Action::Enter,
            "back" => Action::PressBack,
            "home" => Action::PressHome,
            "stop" => Action::Complete,
            "wait" => Action::Wait,
            other => {
                out.drop_step(&r.uid, &format!("no canonical equivalent for {other:?}"));
                continue;
            }
        };
        let entry = grouped.entry(r.episode.clone()).or_insert_with(|| (r.task.clone(), Vec::new()));
        entry.1.push(MappedStep { sample_id: r.uid.clone(), screen, instruction: None, action, region: None });
    }
    for (episode_id, (goal, steps)) in grouped {
        out.push_episode(episode_id, goal, steps);
    }
    out.finish()
}

// ---- omniact --------------------------------------------------------------------
//
// `tasks.json`: single-step desktop samples whose ground truth is a pyautogui
// call rendered as text.

#[derive(Deserialize)]
struct OmniTask {
    id: String,
    task: String,
    image: String,
    output: String,
    #[serde(default)]
    bbox: Option<[u32; 4]>,
}

fn parse_pyautogui(output: &str) -> Option<Action> {
    let call = output.trim();
    let open = call.find('(')?;
    let close = call.rfind(')')?;
    let func = call[..open].trim().strip_prefix("pyautogui.")?;
    let args = &call[open + 1..close];
    match func {
        "click" => {
            let mut nums = args.split(',').map(|a| a.trim().parse::<f64>());
            let x = nums.next()?.ok()?;
            let y = nums.next()?.ok()?;
            Some(Action::Click(Point::new((x + 0.5).floor() as i64, (y + 0.5).floor() as i64)))
        }
        "write" | "typewrite" => {
            let t = args.trim().trim_matches(|c| c == '"' || c == '\'');
            if t.trim().is_empty() {
                None
            } else {
                Some(Action::Type(t.to_string()))
            }
        }
        "press" => {
            let key = args.trim().trim_matches(|c| c == '"' || c == '\'');
            if key.eq_ignore_ascii_case("enter") {
                Some(Action::Enter)
            } else {
                None
            }
        }
        "scroll" => {
            let amount: f64 = args.trim().parse().ok()?;
            Some(Action::Scroll(if amount < 0.0 { ScrollDirection::Down } else { ScrollDirection::Up }))
        }
        _ => None,
    }
}

fn adapt_omniact(dir: &Path) -> Result<AdaptOutcome, IngestError> {
    let text = read_text(&dir.join("tasks.json"))?;
    let tasks: Vec<OmniTask> = parse_json(&text, "omniact tasks")?;
    let mut loader = ImageLoader::new(dir);
    let mut out = Collector::new(SourceFormat::OmniAct, dir);
    for t in &tasks {
        out.native_steps += 1;
        let screen = loader.load(&t.image, &t.id)?;
        let region = t.bbox.map(|[x0, y0, x1, y1]| Region { x0, y0, x1, y1 });
        let Some(action) = parse_pyautogui(&t.output) else {
            out.drop_step(&t.id, &format!("no canonical equivalent for {:?}", t.output));
            continue;
        };
        if let Action::Click(p) = &action {
            if !click_usable(*p, region.as_ref(), &screen) {
                out.drop_step(&t.id, "click lands off-screen");
                continue;
            }
        }
        let steps = vec![MappedStep { sample_id: t.id.clone(), screen, instruction: None, action, region }];
        out.push_episode(t.id.clone(), t.task.clone(), steps);
    }
    out.finish()
}
