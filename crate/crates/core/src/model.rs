//! Canonical data types: screens, steps, episodes, the nine-action space, and
//! the coordinate conventions every other module leans on.
//!
//! Coordinates live in two frames. Raw pixels inside [`Step`]/[`Region`]
//! (perturbation operators are pixel-space transforms) and width/height
//! normalized milli-units in `[0, 1000]` everywhere scoring happens. The only
//! sanctioned bridges are [`normalize_point`] / [`denormalize_point`], both
//! deterministic half-up integer rounding so reports are bit-reproducible.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milli-unit scale: normalized coordinates span `[0, SCALE]`.
pub const SCALE: i64 = 1000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("coordinate out of range on {axis} axis: {value} not in [0, {max}]")]
    CoordinateRange { axis: char, value: i64, max: i64 },
    #[error("screen too small: {width}x{height} (both sides must be >= 2)")]
    ScreenTooSmall { width: u32, height: u32 },
    #[error("pixel buffer length {got} does not match {width}x{height}x3 = {want}")]
    PixelBufferMismatch { width: u32, height: u32, got: usize, want: usize },
}

/// A 2-D point. Interpretation (raw pixels vs. milli-units) is positional:
/// points inside a `Step`'s ground truth are raw, points produced by
/// [`normalize_point`] or the action codec are milli-units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub fn new(x: i64, y: i64) -> Self {
        Point { x, y }
    }

    /// Squared Euclidean distance, exact in integers.
    pub fn dist2(self, other: Point) -> i64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Raw-pixel rectangle, half-open on the high side: `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Region {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Region { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Well-formed and inside the screen: `0 <= x0 < x1 <= w`, same for y.
    pub fn fits(&self, screen: &Screen) -> bool {
        self.x0 < self.x1
            && self.y0 < self.y1
            && self.x1 <= screen.width
            && self.y1 <= screen.height
    }
}

/// Discrete scroll direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollDirection {
    Up,
    Down,
    Left,
    Right,
}

impl ScrollDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
            ScrollDirection::Left => "left",
            ScrollDirection::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Some(ScrollDirection::Up),
            "down" => Some(ScrollDirection::Down),
            "left" => Some(ScrollDirection::Left),
            "right" => Some(ScrollDirection::Right),
            _ => None,
        }
    }
}

/// The canonical GUI action space: nine variants, typed arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Click(Point),
    Scroll(ScrollDirection),
    Type(String),
    PressBack,
    PressHome,
    Enter,
    Complete,
    OpenApp(String),
    Wait,
}

/// Bare action discriminant, used for type-accuracy and reflection scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Scroll,
    Type,
    PressBack,
    PressHome,
    Enter,
    Complete,
    OpenApp,
    Wait,
}

impl ActionKind {
    pub const ALL: [ActionKind; 9] = [
        ActionKind::Click,
        ActionKind::Scroll,
        ActionKind::Type,
        ActionKind::PressBack,
        ActionKind::PressHome,
        ActionKind::Enter,
        ActionKind::Complete,
        ActionKind::OpenApp,
        ActionKind::Wait,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Scroll => "scroll",
            ActionKind::Type => "type",
            ActionKind::PressBack => "press_back",
            ActionKind::PressHome => "press_home",
            ActionKind::Enter => "enter",
            ActionKind::Complete => "complete",
            ActionKind::OpenApp => "open_app",
            ActionKind::Wait => "wait",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "click" => Some(ActionKind::Click),
            "scroll" => Some(ActionKind::Scroll),
            "type" => Some(ActionKind::Type),
            "press_back" => Some(ActionKind::PressBack),
            "press_home" => Some(ActionKind::PressHome),
            "enter" => Some(ActionKind::Enter),
            "complete" => Some(ActionKind::Complete),
            "open_app" => Some(ActionKind::OpenApp),
            "wait" => Some(ActionKind::Wait),
            _ => None,
        }
    }

    /// Reflective (back/home) or status (complete/wait) — the set counted by
    /// the reflection score.
    pub fn is_reflective_or_status(self) -> bool {
        matches!(
            self,
            ActionKind::PressBack | ActionKind::PressHome | ActionKind::Complete | ActionKind::Wait
        )
    }
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click(_) => ActionKind::Click,
            Action::Scroll(_) => ActionKind::Scroll,
            Action::Type(_) => ActionKind::Type,
            Action::PressBack => ActionKind::PressBack,
            Action::PressHome => ActionKind::PressHome,
            Action::Enter => ActionKind::Enter,
            Action::Complete => ActionKind::Complete,
            Action::OpenApp(_) => ActionKind::OpenApp,
            Action::Wait => ActionKind::Wait,
        }
    }

    pub fn click_point(&self) -> Option<Point> {
        match self {
            Action::Click(p) => Some(*p),
            _ => None,
        }
    }

    /// Argument well-formedness: text arguments non-empty after trimming.
    pub fn args_valid(&self) -> bool {
        match self {
            Action::Type(t) | Action::OpenApp(t) => !t.trim().is_empty(),
            _ => true,
        }
    }
}

/// An RGB screenshot: 8-bit channels, row-major, 3 bytes per pixel.
/// Immutable after construction; share via `Arc`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screen {
    pub width: u32,
    pub height: u32,
    pixels: Vec<u8>,
}

impl Screen {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ModelError> {
        if width < 2 || height < 2 {
            return Err(ModelError::ScreenTooSmall { width, height });
        }
        let want = width as usize * height as usize * 3;
        if pixels.len() != want {
            return Err(ModelError::PixelBufferMismatch { width, height, got: pixels.len(), want });
        }
        Ok(Screen { width, height, pixels })
    }

    /// Uniform-fill screen.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ModelError> {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Screen::new(width, height, pixels)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn in_bounds_point(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && p.x <= self.width as i64 && p.y <= self.height as i64
    }
}

/// One recorded interaction step: screenshot, language context, ground truth.
/// Click ground truth and `gt_region` are in raw pixels.
#[derive(Debug, Clone)]
pub struct Step {
    /// Globally unique within a corpus.
    pub sample_id: String,
    /// 0-based position within the episode.
    pub step_index: usize,
    pub screen: Arc<Screen>,
    /// High-level query the whole episode pursues.
    pub goal: String,
    /// Low-level atomic instruction for this step, when recorded.
    pub instruction: Option<String>,
    pub gt_action: Action,
    /// Target element footprint, when the source dataset recorded one.
    pub gt_region: Option<Region>,
}

/// An ordered trajectory toward one goal.
#[derive(Debug, Clone)]
pub struct Episode {
    /// Stable identifier, carried through subset selection so results can be
    /// traced back to the source trajectory.
    pub id: String,
    pub goal: String,
    pub steps: Vec<Step>,
    /// Horizon cap; defaults to the recorded length (offline replay never
    /// extends a trajectory).
    pub max_steps: usize,
}

impl Episode {
    pub fn new(goal: impl Into<String>, steps: Vec<Step>) -> Self {
        let max_steps = steps.len();
        let id = steps.first().map(|s| s.sample_id.clone()).unwrap_or_default();
        Episode { id, goal: goal.into(), steps, max_steps }
    }
}

/// One validation finding. Violations are data, not faults: callers decide
/// whether to abort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub sample_id: String,
    pub rule: String,
    pub message: String,
}

impl Violation {
    fn new(sample_id: &str, rule: &str, message: String) -> Self {
        Violation { sample_id: sample_id.to_string(), rule: rule.to_string(), message }
    }
}

/// Convert a raw-pixel point to `[0, 1000]` milli-units, rounding half-up.
pub fn normalize_point(p_raw: Point, screen: &Screen) -> Result<Point, ModelError> {
    let w = screen.width as i64;
    let h = screen.height as i64;
    if p_raw.x < 0 || p_raw.x > w {
        return Err(ModelError::CoordinateRange { axis: 'x', value: p_raw.x, max: w });
    }
    if p_raw.y < 0 || p_raw.y > h {
        return Err(ModelError::CoordinateRange { axis: 'y', value: p_raw.y, max: h });
    }
    Ok(Point::new(div_round_half_up(p_raw.x * SCALE, w).clamp(0, SCALE), div_round_half_up(p_raw.y * SCALE, h).clamp(0, SCALE)))
}

/// Inverse bridge: milli-units back to raw pixels on `screen`, half-up.
pub fn denormalize_point(p_norm: Point, screen: &Screen) -> Result<Point, ModelError> {
    if p_norm.x < 0 || p_norm.x > SCALE {
        return Err(ModelError::CoordinateRange { axis: 'x', value: p_norm.x, max: SCALE });
    }
    if p_norm.y < 0 || p_norm.y > SCALE {
        return Err(ModelError::CoordinateRange { axis: 'y', value: p_norm.y, max: SCALE });
    }
    Ok(Point::new(
        div_round_half_up(p_norm.x * screen.width as i64, SCALE),
        div_round_half_up(p_norm.y * screen.height as i64, SCALE),
    ))
}

/// Lift point normalization to whole actions: Click points move to
/// milli-units, everything else passes through unchanged.
pub fn normalize_action(a: &Action, screen: &Screen) -> Result<Action, ModelError> {
    match a {
        Action::Click(p) => Ok(Action::Click(normalize_point(*p, screen)?)),
        other => Ok(other.clone()),
    }
}

/// `round(n / d)` with ties away from zero, for non-negative `n`, `d > 0`.
pub fn div_round_half_up(n: i64, d: i64) -> i64 {
    debug_assert!(d > 0);
    if n >= 0 {
        (2 * n + d) / (2 * d)
    } else {
        -((2 * -n + d) / (2 * d))
    }
}

/// Check every structural invariant of an episode. Empty report = valid.
pub fn validate_episode(e: &Episode) -> Vec<Violation> {
    let mut out = Vec::new();
    let episode_id = e.steps.first().map(|s| s.sample_id.as_str()).unwrap_or("<empty episode>");
    if e.steps.is_empty() {
        out.push(Violation::new(episode_id, "empty-episode", format!("episode {:?} has no steps", e.goal)));
        return out;
    }
    if e.steps.len() > e.max_steps {
        out.push(Violation::new(
            episode_id,
            "horizon-exceeded",
            format!("{} steps exceed max_steps {}", e.steps.len(), e.max_steps),
        ));
    }
    let mut seen = HashSet::new();
    for (i, step) in e.steps.iter().enumerate() {
        let id = step.sample_id.as_str();
        if step.step_index != i {
            out.push(Violation::new(
                id,
                "non-consecutive-index",
                format!("step_index {} at position {}", step.step_index, i),
            ));
        }
        if !seen.insert(id.to_string()) {
            out.push(Violation::new(id, "duplicate-sample-id", "sample_id repeats within episode".into()));
        }
        if step.screen.width < 2 || step.screen.height < 2 {
            out.push(Violation::new(
                id,
                "degenerate-screen",
                format!("screen {}x{} too small for quadrant partition", step.screen.width, step.screen.height),
            ));
        }
        if let Some(r) = &step.gt_region {
            if !r.fits(&step.screen) {
                out.push(Violation::new(
                    id,
                    "region-out-of-bounds",
                    format!("region ({},{})..({},{}) on {}x{} screen", r.x0, r.y0, r.x1, r.y1, step.screen.width, step.screen.height),
                ));
            }
        }
        if let Action::Click(p) = &step.gt_action {
            if !step.screen.in_bounds_point(*p) {
                if step.gt_region.is_none() {
                    out.push(Violation::new(
                        id,
                        "ungroundable-click",
                        format!("click at ({},{}) outside {}x{} screen and no region to fall back on", p.x, p.y, step.screen.width, step.screen.height),
                    ));
                } else {
                    out.push(Violation::new(
                        id,
                        "click-out-of-bounds",
                        format!("click point ({},{}) outside {}x{} screen", p.x, p.y, step.screen.width, step.screen.height),
                    ));
                }
            }
        }
        if !step.gt_action.args_valid() {
            out.push(Violation::new(id, "empty-text-argument", "text argument empty after trimming".into()));
        }
    }
    out
}
