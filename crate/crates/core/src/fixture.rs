//! Deterministic synthetic corpus: 20 episodes over 144×256 screens with a
//! known composition, engineered so the reference agents produce exact,
//! hand-checkable metric signatures. Also writes a ready-to-run config.

use std::path::{Path, PathBuf};

use crate::ingest::{save_canonical, EpisodeCorpus, IngestError};
use crate::model::{normalize_point, Action, Episode, Point, Region, Screen, ScrollDirection, Step};
use crate::perturb::{zoom_remap, DEFAULT_DECOY};

use std::sync::Arc;

pub const CORPUS_NAME: &str = "synthetic-20";
pub const SCREEN_W: u32 = 144;
pub const SCREEN_H: u32 = 256;

/// Zoom displacement floor, milli-units: every click is placed so its
/// zoom-remapped position moves strictly farther than the click-match radius
/// (140) plus margin. This is what makes a coordinate-replaying agent score
/// exactly zero under zooming.
pub const ZOOM_MARGIN_MILLI: i64 = 150;

/// Step blueprint, expanded into concrete actions by the builder.
#[derive(Clone, Copy)]
enum K {
    Click,
    Type,
    Open,
    Scroll,
    Wait,
    Back,
    Home,
    Enter,
    Done,
}

fn plans() -> Vec<Vec<K>> {
    use K::*;
    let structure = [Scroll, Wait, Back, Scroll, Wait, Back, Home, Scroll, Back, Wait];
    let mut plans: Vec<Vec<K>> = structure.iter().map(|&s| vec![Click, Type, Click, Open, s, Click]).collect();
    plans.push(vec![Type, Enter, Done]); // e10
    plans.push(vec![Open, Enter, Done]); // e11
    plans.push(vec![Scroll, Wait, Done]); // e12: pure structure
    plans.push(vec![Scroll, Back, Done]); // e13: pure structure
    plans.push(vec![Scroll, Home]); // e14: pure structure
    for _ in 0..4 {
        plans.push(vec![Type, Open]); // e15..e18: pure text
    }
    plans.push(vec![Click, Click]); // e19: pure visual
    plans
}

const APPS: [&str; 6] = ["Maps", "Mail", "Camera", "Clock", "Notes", "Music"];
const SCROLLS: [ScrollDirection; 4] =
    [ScrollDirection::Up, ScrollDirection::Down, ScrollDirection::Left, ScrollDirection::Right];

/// Deterministic click placement keeping every target well inside the frame,
/// far enough from all edges that zooming displaces it beyond the match radius.
fn click_geometry(k: usize) -> (Point, Option<Region>) {
    let cx = 30 + (k as i64 * 17) % 85; // [30, 114] on a 144-wide screen
    let cy = 50 + (k as i64 * 29) % 157; // [50, 206] on a 256-tall screen
    let p = Point::new(cx, cy);
    if k % 3 == 2 {
        return (p, None); // some clicks ship without a target box
    }
    let ex = 8 + (k as i64 % 3) * 2;
    let ey = 7 + (k as i64 % 2) * 3;
    let region = Region {
        x0: (cx - ex) as u32,
        y0: (cy - ey) as u32,
        x1: (cx + ex) as u32,
        y1: (cy + ey) as u32,
    };
    (p, Some(region))
}

fn paint_screen(ep: usize, st: usize, button: Option<Region>) -> Screen {
    let mut s = Screen::filled(SCREEN_W, SCREEN_H, [0, 0, 0]).expect("fixed dims are valid");
    let tint = ((ep * 37 + st * 11) % 200) as u8;
    for y in 0..SCREEN_H {
        for x in 0..SCREEN_W {
            let r = (x * 255 / (SCREEN_W - 1)) as u8;
            let g = (y * 255 / (SCREEN_H - 1)) as u8;
            s.set(x, y, [r, g, tint]);
        }
    }
    // A light "toolbar" so masked/edited areas sit in structured surroundings.
    for y in 8..16 {
        for x in 8..SCREEN_W - 8 {
            s.set(x, y, [235, 235, 235]);
        }
    }
    if let Some(rg) = button {
        for y in rg.y0..rg.y1 {
            for x in rg.x0..rg.x1 {
                let edge = x == rg.x0 || x + 1 == rg.x1 || y == rg.y0 || y + 1 == rg.y1;
                s.set(x, y, if edge { [25, 25, 25] } else { [250, 210, 60] });
            }
        }
    }
    s
}

/// Build the corpus in memory. Same output every call.
pub fn build_corpus() -> EpisodeCorpus {
    let mut episodes = Vec::new();
    let mut clicks = 0usize;
    let mut types = 0usize;
    let mut opens = 0usize;
    let mut scrolls = 0usize;

    for (ep, plan) in plans().into_iter().enumerate() {
        let goal = format!("Complete synthetic task {ep:02}");
        let mut steps = Vec::new();
        for (st, kind) in plan.into_iter().enumerate() {
            let sample_id = format!("e{ep:02}-s{st:02}");
            let (action, instruction, region) = match kind {
                K::Click => {
                    let (p, region) = click_geometry(clicks);
                    clicks += 1;
                    assert_zoom_margin(p);
                    (Action::Click(p), format!("Tap the highlighted button {sample_id}"), region)
                }
                K::Type => {
                    types += 1;
                    let text = format!("note {types}");
                    (Action::Type(text.clone()), format!("Type '{text}' into the field"), None)
                }
                K::Open => {
                    let name = format!("{} {}", APPS[opens % APPS.len()], opens / APPS.len());
                    opens += 1;
                    (Action::OpenApp(name.clone()), format!("Open the {name} app"), None)
                }
                K::Scroll => {
                    let d = SCROLLS[scrolls % SCROLLS.len()];
                    scrolls += 1;
                    (Action::Scroll(d), format!("Scroll {} to reveal more content", d.as_str()), None)
                }
                K::Wait => (Action::Wait, "Wait for the page to finish loading".to_string(), None),
                K::Back => (Action::PressBack, "Go back to the previous screen".to_string(), None),
                K::Home => (Action::PressHome, "Return to the home screen".to_string(), None),
                K::Enter => (Action::Enter, "Press enter to submit".to_string(), None),
                K::Done => (Action::Complete, "The task is finished; mark it complete".to_string(), None),
            };
            debug_assert_ne!(instruction, DEFAULT_DECOY);
            let button = if let Action::Click(p) = &action {
                Some(region.unwrap_or(Region {
                    x0: p.x as u32 - 8,
                    y0: p.y as u32 - 7,
                    x1: p.x as u32 + 8,
                    y1: p.y as u32 + 7,
                }))
            } else {
                None
            };
            steps.push(Step {
                sample_id,
                step_index: st,
                screen: Arc::new(paint_screen(ep, st, button)),
                goal: goal.clone(),
                instruction: Some(instruction),
                gt_action: action,
                gt_region: region,
            });
        }
        let mut e = Episode::new(goal, steps);
        e.id = format!("e{ep:02}");
        episodes.push(e);
    }

    EpisodeCorpus { name: CORPUS_NAME.into(), platform_tag: "synthetic".into(), episodes }
}

/// Every click must move farther than the click-match radius under zooming,
/// measured in normalized milli-units — checked with the real remap.
fn assert_zoom_margin(p: Point) {
    let probe_screen = Screen::filled(SCREEN_W, SCREEN_H, [0, 0, 0]).expect("valid dims");
    let remapped = zoom_remap(p, &probe_screen);
    let a = normalize_point(p, &probe_screen).expect("in bounds");
    let b = normalize_point(remapped, &probe_screen).expect("in bounds");
    let d2 = a.dist2(b);
    assert!(
        d2 > ZOOM_MARGIN_MILLI * ZOOM_MARGIN_MILLI,
        "click {p:?} moves only {d2} (squared milli) under zooming"
    );
}

/// The bundled run configuration: three reference agents × six probes.
/// The baseline filter stays off so the random agent keeps a non-empty
/// probe set.
pub const RUN_CONFIG: &str = r#"# Synthetic self-validation run: three reference agents, six probes.
corpus_path = "corpus"
format_id = "canonical"
setting = "low"
baseline_filter = false
output_dir = "out"
seed = 7

[[agents]]
id = "memory_oracle"
backend = "reference"
reference_kind = "memory_oracle"
dialect_id = "json"

[[agents]]
id = "reasoner_oracle"
backend = "reference"
reference_kind = "reasoner_oracle"
dialect_id = "json"

[[agents]]
id = "random_agent"
backend = "reference"
reference_kind = "random_agent"
dialect_id = "func"

[[probes]]
kind = "mask"

[[probes]]
kind = "edit"

[[probes]]
kind = "zoom"

[[probes]]
kind = "token_drop"

[[probes]]
kind = "sentence_sub"

[[probes]]
kind = "ablate"
ablate_keep_visual = false
ablate_keep_instruction = false
"#;

#[derive(Debug)]
pub struct FixturePaths {
    pub corpus_dir: PathBuf,
    pub config_path: PathBuf,
}

/// Materialize the corpus and its run config under `dir`.
pub fn write_fixture(dir: &Path) -> Result<FixturePaths, IngestError> {
    let corpus_dir = dir.join("corpus");
    save_canonical(&build_corpus(), &corpus_dir)?;
    let config_path = dir.join("run.toml");
    std::fs::write(&config_path, RUN_CONFIG)
        .map_err(|source| IngestError::Io { path: config_path.clone(), source })?;
    Ok(FixturePaths { corpus_dir, config_path })
}
