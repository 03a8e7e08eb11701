//! The probe operators: pure, deterministic transforms from a recorded step
//! to a perturbed step plus a ground-truth remapping. Visual operators work
//! in raw pixel space; text operators never touch the screen.

pub mod inpaint;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{div_round_half_up, Action, Point, Region, Screen, Step};

/// Which probe a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    Mask,
    Edit,
    Zoom,
    TokenDrop,
    SentenceSub,
    Ablate,
}

impl PerturbKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbKind::Mask => "mask",
            PerturbKind::Edit => "edit",
            PerturbKind::Zoom => "zoom",
            PerturbKind::TokenDrop => "token_drop",
            PerturbKind::SentenceSub => "sentence_sub",
            PerturbKind::Ablate => "ablate",
        }
    }

    /// Step family a probe draws its subset from: visual probes need grounded
    /// clicks, text probes need typed input, the modality ablation targets
    /// navigation/status steps.
    pub fn family(self) -> ProbeFamily {
        match self {
            PerturbKind::Mask | PerturbKind::Edit | PerturbKind::Zoom => ProbeFamily::Visual,
            PerturbKind::TokenDrop | PerturbKind::SentenceSub => ProbeFamily::Text,
            PerturbKind::Ablate => ProbeFamily::Structure,
        }
    }
}

/// Step families probes are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeFamily {
    Visual,
    Text,
    Structure,
}

fn default_mask_block_px() -> u32 {
    50
}

fn default_fill_rgb() -> [u8; 3] {
    [0, 0, 0]
}

/// Stock decoy line for instruction substitution.
pub const DEFAULT_DECOY: &str = "Click the Amazon APP";

fn default_decoy() -> String {
    DEFAULT_DECOY.to_string()
}

fn default_placeholder() -> String {
    "[]".to_string()
}

/// Declarative description of one probe. Only the parameter group selected by
/// `kind` is read; the rest keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbKind,
    #[serde(default = "default_mask_block_px")]
    pub mask_block_px: u32,
    #[serde(default = "default_fill_rgb")]
    pub fill_rgb: [u8; 3],
    #[serde(default = "default_decoy")]
    pub decoy_instruction: String,
    #[serde(default = "default_placeholder")]
    pub token_placeholder: String,
    #[serde(default)]
    pub ablate_keep_visual: bool,
    #[serde(default)]
    pub ablate_keep_instruction: bool,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbKind) -> Self {
        PerturbationSpec {
            kind,
            mask_block_px: default_mask_block_px(),
            fill_rgb: default_fill_rgb(),
            decoy_instruction: default_decoy(),
            token_placeholder: default_placeholder(),
            ablate_keep_visual: false,
            ablate_keep_instruction: false,
        }
    }

    pub fn ablate(keep_visual: bool, keep_instruction: bool) -> Self {
        let mut s = PerturbationSpec::new(PerturbKind::Ablate);
        s.ablate_keep_visual = keep_visual;
        s.ablate_keep_instruction = keep_instruction;
        s
    }

    /// Report label; the ablation encodes its condition so the four
    /// combinations stay distinguishable.
    pub fn label(&self) -> String {
        match self.kind {
            PerturbKind::Ablate => format!(
                "ablate_v{}i{}",
                self.ablate_keep_visual as u8, self.ablate_keep_instruction as u8
            ),
            k => k.as_str().to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), PerturbError> {
        if self.mask_block_px < 1 {
            return Err(PerturbError::BadSpec("mask_block_px must be >= 1".into()));
        }
        if self.kind == PerturbKind::SentenceSub && self.decoy_instruction.trim().is_empty() {
            return Err(PerturbError::EmptyDecoy);
        }
        Ok(())
    }
}

/// How the ground truth relates to the original after perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemapNote {
    /// Ground truth unchanged.
    Identity,
    /// Click point moved into the zoomed frame.
    ZoomRemapped,
    /// The target element was masked or painted over; ground truth kept as-is.
    TargetRemoved,
}

/// A step after one probe was applied. Screens stay at the original
/// dimensions for every operator, so normalized scoring is frame-compatible.
#[derive(Debug, Clone)]
pub struct PerturbedStep {
    pub base_sample_id: String,
    pub spec: PerturbationSpec,
    pub screen: Arc<Screen>,
    pub goal: String,
    pub instruction: Option<String>,
    /// Ground truth in the perturbed frame (raw pixels for clicks).
    pub remapped_gt: Action,
    pub remap_note: RemapNote,
}

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("step {0}: operator needs a click ground truth")]
    NotAClick(String),
    #[error("step {0}: click is ungroundable (no region and no usable point)")]
    UngroundableClick(String),
    #[error("step {0}: click point lies outside the screen")]
    OutOfBoundsClick(String),
    #[error("step {0}: instruction missing or empty")]
    MissingInstruction(String),
    #[error("decoy instruction equals the original; substitution must change it")]
    DecoyEqualsOriginal,
    #[error("decoy instruction is empty")]
    EmptyDecoy,
    #[error("step {0}: edit region has no boundary pixels")]
    DegenerateEditRegion(String),
    #[error("invalid perturbation spec: {0}")]
    BadSpec(String),
}

/// Apply one probe to one step.
pub fn apply(step: &Step, spec: &PerturbationSpec) -> Result<PerturbedStep, PerturbError> {
    spec.validate()?;
    match spec.kind {
        PerturbKind::Mask => mask_object(step, spec),
        PerturbKind::Edit => edit_object(step, spec),
        PerturbKind::Zoom => zoom_in(step, spec),
        PerturbKind::TokenDrop => drop_leading_token(step, spec),
        PerturbKind::SentenceSub => substitute_instruction(step, spec),
        PerturbKind::Ablate => Ok(ablate_modalities(step, spec)),
    }
}

/// Target region for mask/edit: the recorded element box when present,
/// otherwise a `block x block` square centered on the click point; either way
/// clipped to the screen.
pub fn derive_region(step: &Step, block: u32) -> Result<Region, PerturbError> {
    let screen = &step.screen;
    if let Some(r) = step.gt_region {
        let clipped = Region::new(r.x0.min(screen.width), r.y0.min(screen.height), r.x1.min(screen.width), r.y1.min(screen.height));
        if clipped.x0 < clipped.x1 && clipped.y0 < clipped.y1 {
            return Ok(clipped);
        }
        return Err(PerturbError::UngroundableClick(step.sample_id.clone()));
    }
    let p = step
        .gt_action
        .click_point()
        .ok_or_else(|| PerturbError::NotAClick(step.sample_id.clone()))?;
    if !screen.in_bounds_point(p) {
        return Err(PerturbError::UngroundableClick(step.sample_id.clone()));
    }
    // A click at x == width belongs to the last pixel column.
    let cx = (p.x as u32).min(screen.width - 1) as i64;
    let cy = (p.y as u32).min(screen.height - 1) as i64;
    let b = block as i64;
    let x0 = (cx - b / 2).max(0) as u32;
    let y0 = (cy - b / 2).max(0) as u32;
    let x1 = ((cx + (b - b / 2)) as u64).min(screen.width as u64) as u32;
    let y1 = ((cy + (b - b / 2)) as u64).min(screen.height as u64) as u32;
    Ok(Region::new(x0, y0, x1, y1))
}

fn require_click(step: &Step) -> Result<(), PerturbError> {
    if step.gt_action.kind() != crate::model::ActionKind::Click {
        return Err(PerturbError::NotAClick(step.sample_id.clone()));
    }
    Ok(())
}

/// Zero out (well, `fill_rgb` out) the target region; everything else is
/// bit-identical to the input.
pub fn mask_object(step: &Step, spec: &PerturbationSpec) -> Result<PerturbedStep, PerturbError> {
    require_click(step)?;
    let region = derive_region(step, spec.mask_block_px)?;
    let mut screen = (*step.screen).clone();
    for y in region.y0..region.y1 {
        for x in region.x0..region.x1 {
            screen.set(x, y, spec.fill_rgb);
        }
    }
    Ok(PerturbedStep {
        base_sample_id: step.sample_id.clone(),
        spec: spec.clone(),
        screen: Arc::new(screen),
        goal: step.goal.clone(),
        instruction: step.instruction.clone(),
        remapped_gt: step.gt_action.clone(),
        remap_note: RemapNote::TargetRemoved,
    })
}

/// Paint the target region over with the Laplace interpolation of its
/// surroundings, erasing the element while keeping the scene plausible.
pub fn edit_object(step: &Step, spec: &PerturbationSpec) -> Result<PerturbedStep, PerturbError> {
    require_click(step)?;
    let region = derive_region(step, spec.mask_block_px)?;
    let screen = inpaint::laplace_fill(&step.screen, region).map_err(|e| match e {
        inpaint::InpaintError::NoBoundary => PerturbError::DegenerateEditRegion(step.sample_id.clone()),
        inpaint::InpaintError::BadRegion => PerturbError::UngroundableClick(step.sample_id.clone()),
    })?;
    Ok(PerturbedStep {
        base_sample_id: step.sample_id.clone(),
        spec: spec.clone(),
        screen: Arc::new(screen),
        goal: step.goal.clone(),
        instruction: step.instruction.clone(),
        remapped_gt: step.gt_action.clone(),
        remap_note: RemapNote::TargetRemoved,
    })
}

/// Quadrant partition of a screen, half-open at the midlines: points on a
/// midline belong to the higher (right/bottom) quadrant.
pub fn quadrant_of(p: Point, screen: &Screen) -> (u32, u32, u32, u32) {
    let mx = screen.width / 2;
    let my = screen.height / 2;
    let (ox, qw) = if p.x >= mx as i64 { (mx, screen.width - mx) } else { (0, mx) };
    let (oy, qh) = if p.y >= my as i64 { (my, screen.height - my) } else { (0, my) };
    (ox, oy, qw, qh)
}

/// Affine remap of a raw point from quadrant coordinates back to the full
/// frame, rounding half-up.
pub fn zoom_remap(p: Point, screen: &Screen) -> Point {
    let (ox, oy, qw, qh) = quadrant_of(p, screen);
    Point::new(
        div_round_half_up((p.x - ox as i64) * screen.width as i64, qw as i64),
        div_round_half_up((p.y - oy as i64) * screen.height as i64, qh as i64),
    )
}

/// Crop the quadrant containing the target and magnify it back to the
/// original scale; the click ground truth moves with it.
pub fn zoom_in(step: &Step, spec: &PerturbationSpec) -> Result<PerturbedStep, PerturbError> {
    let p = step
        .gt_action
        .click_point()
        .ok_or_else(|| PerturbError::NotAClick(step.sample_id.clone()))?;
    if !step.screen.in_bounds_point(p) {
        return Err(PerturbError::OutOfBoundsClick(step.sample_id.clone()));
    }
    let (ox, oy, qw, qh) = quadrant_of(p, &step.screen);
    let screen = rescale_quadrant(&step.screen, ox, oy, qw, qh);
    Ok(PerturbedStep {
        base_sample_id: step.sample_id.clone(),
        spec: spec.clone(),
        screen: Arc::new(screen),
        goal: step.goal.clone(),
        instruction: step.instruction.clone(),
        remapped_gt: Action::Click(zoom_remap(p, &step.screen)),
        remap_note: RemapNote::ZoomRemapped,
    })
}

/// Bilinear upscale of the `qw x qh` window at `(ox, oy)` to the full screen
/// size. Half-pixel-centered sampling with edge clamping; channels rounded
/// half-up. Entirely fixed-order f64 arithmetic, so output is deterministic.
fn rescale_quadrant(screen: &Screen, ox: u32, oy: u32, qw: u32, qh: u32) -> Screen {
    let (w, h) = (screen.width, screen.height);
    let mut out = vec![0u8; w as usize * h as usize * 3];
    let sample = |qx: i64, qy: i64| -> [u8; 3] {
        let qx = qx.clamp(0, qw as i64 - 1) as u32;
        let qy = qy.clamp(0, qh as i64 - 1) as u32;
        screen.get(ox + qx, oy + qy)
    };
    for dy in 0..h {
        let sy = (dy as f64 + 0.5) * qh as f64 / h as f64 - 0.5;
        let y0 = sy.floor();
        let fy = sy - y0;
        for dx in 0..w {
            let sx = (dx as f64 + 0.5) * qw as f64 / w as f64 - 0.5;
            let x0 = sx.floor();
            let fx = sx - x0;
            let (x0i, y0i) = (x0 as i64, y0 as i64);
            let c00 = sample(x0i, y0i);
            let c10 = sample(x0i + 1, y0i);
            let c01 = sample(x0i, y0i + 1);
            let c11 = sample(x0i + 1, y0i + 1);
            let i = (dy as usize * w as usize + dx as usize) * 3;
            for c in 0..3 {
                let top = c00[c] as f64 * (1.0 - fx) + c10[c] as f64 * fx;
                let bot = c01[c] as f64 * (1.0 - fx) + c11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                out[i + c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Screen::new(w, h, out).expect("same dimensions as validated input")
}

/// Replace the first whitespace-delimited token of the instruction with the
/// placeholder; tokens are defined after trimming, and the result is
/// single-space joined.
pub fn drop_leading_token(step: &Step, spec: &PerturbationSpec) -> Result<PerturbedStep, PerturbError> {
    let instruction = step
        .instruction
        .as_deref()
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| PerturbError::MissingInstruction(step.sample_id.clone()))?;
    let mut tokens: Vec<&str> = instruction.split_whitespace().collect();
    tokens[0] = &spec.token_placeholder;
    Ok(PerturbedStep {
        base_sample_id: step.sample_id.clone(),
        spec: spec.clone(),
        screen: Arc::clone(&step.screen),
        goal: step.goal.clone(),
        instruction: Some(tokens.join(" ")),
        remapped_gt: step.gt_action.clone(),
        remap_note: RemapNote::Identity,
    })
}

/// Swap the instruction for a decoy that demands something else entirely.
/// Scoring keeps the ORIGINAL ground truth: the probe measures whether the
/// agent abandons it in favor of the new instruction.
pub fn substitute_instruction(step: &Step, spec: &PerturbationSpec) -> Result<PerturbedStep, PerturbError> {
    let instruction = step
        .instruction
        .as_deref()
        .ok_or_else(|| PerturbError::MissingInstruction(step.sample_id.clone()))?;
    if spec.decoy_instruction.trim().is_empty() {
        return Err(PerturbError::EmptyDecoy);
    }
    if spec.decoy_instruction == instruction {
        return Err(PerturbError::DecoyEqualsOriginal);
    }
    Ok(PerturbedStep {
        base_sample_id: step.sample_id.clone(),
        spec: spec.clone(),
        screen: Arc::clone(&step.screen),
        goal: step.goal.clone(),
        instruction: Some(spec.decoy_instruction.clone()),
        remapped_gt: step.gt_action.clone(),
        remap_note: RemapNote::Identity,
    })
}

/// Mid-gray used when the visual modality is ablated — deliberately distinct
/// from the mask fill so the two probes are different stimuli.
pub const ABLATE_GRAY: [u8; 3] = [128, 128, 128];

/// Blank out either modality: a gray canvas for the screen, the empty string
/// for the instruction. All four keep/drop combinations are valid conditions.
pub fn ablate_modalities(step: &Step, spec: &PerturbationSpec) -> PerturbedStep {
    let screen = if spec.ablate_keep_visual {
        Arc::clone(&step.screen)
    } else {
        Arc::new(Screen::filled(step.screen.width, step.screen.height, ABLATE_GRAY).expect("input screen already validated"))
    };
    let instruction = if spec.ablate_keep_instruction {
        step.instruction.clone()
    } else {
        Some(String::new())
    };
    PerturbedStep {
        base_sample_id: step.sample_id.clone(),
        spec: spec.clone(),
        screen,
        goal: step.goal.clone(),
        instruction,
        remapped_gt: step.gt_action.clone(),
        remap_note: RemapNote::Identity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActionKind;

    fn click_step(screen: Screen, x: i64, y: i64) -> Step {
        Step {
            sample_id: "s0".into(),
            step_index: 0,
            screen: Arc::new(screen),
            goal: "goal".into(),
            instruction: Some("Tap the icon".into()),
            gt_action: Action::Click(Point::new(x, y)),
            gt_region: None,
        }
    }

    fn spec(kind: PerturbKind) -> PerturbationSpec {
        PerturbationSpec::new(kind)
    }

    #[test]
    fn mask_centered_block() {
        let s = click_step(Screen::filled(100, 100, [255; 3]).unwrap(), 50, 50);
        let p = mask_object(&s, &spec(PerturbKind::Mask)).unwrap();
        for y in 0..100u32 {
            for x in 0..100u32 {
                let want = if (25..75).contains(&x) && (25..75).contains(&y) { [0, 0, 0] } else { [255, 255, 255] };
                assert_eq!(p.screen.get(x, y), want, "({x},{y})");
            }
        }
        assert_eq!(p.remapped_gt, s.gt_action);
        assert_eq!(p.remap_note, RemapNote::TargetRemoved);
        assert_eq!(p.base_sample_id, "s0");
    }

    #[test]
    fn mask_clips_at_origin() {
        let s = click_step(Screen::filled(100, 100, [255; 3]).unwrap(), 0, 0);
        let p = mask_object(&s, &spec(PerturbKind::Mask)).unwrap();
        for y in 0..100u32 {
            for x in 0..100u32 {
                let want = if x < 25 && y < 25 { [0, 0, 0] } else { [255, 255, 255] };
                assert_eq!(p.screen.get(x, y), want, "({x},{y})");
            }
        }
    }

    #[test]
    fn mask_full_screen_region() {
        let mut s = click_step(Screen::filled(60, 40, [9, 8, 7]).unwrap(), 30, 20);
        s.gt_region = Some(Region::new(0, 0, 60, 40));
        let p = mask_object(&s, &spec(PerturbKind::Mask)).unwrap();
        for y in 0..40u32 {
            for x in 0..60u32 {
                assert_eq!(p.screen.get(x, y), [0, 0, 0]);
            }
        }
    }

    #[test]
    fn mask_prefers_recorded_region() {
        let mut s = click_step(Screen::filled(100, 100, [255; 3]).unwrap(), 90, 90);
        s.gt_region = Some(Region::new(10, 10, 20, 20));
        let p = mask_object(&s, &spec(PerturbKind::Mask)).unwrap();
        assert_eq!(p.screen.get(15, 15), [0, 0, 0]);
        assert_eq!(p.screen.get(90, 90), [255, 255, 255]);
    }

    #[test]
    fn mask_rejects_non_click() {
        let mut s = click_step(Screen::filled(100, 100, [255; 3]).unwrap(), 50, 50);
        s.gt_action = Action::Wait;
        assert!(matches!(mask_object(&s, &spec(PerturbKind::Mask)), Err(PerturbError::NotAClick(_))));
    }

    #[test]
    fn edit_rejects_full_screen_region() {
        let mut s = click_step(Screen::filled(30, 30, [1, 2, 3]).unwrap(), 15, 15);
        s.gt_region = Some(Region::new(0, 0, 30, 30));
        assert!(matches!(edit_object(&s, &spec(PerturbKind::Edit)), Err(PerturbError::DegenerateEditRegion(_))));
    }

    #[test]
    fn edit_changes_only_the_region() {
        let mut scr = Screen::filled(64, 64, [10, 10, 10]).unwrap();
        for y in 20..30 {
            for x in 20..30 {
                scr.set(x, y, [250, 0, 0]);
            }
        }
        let mut s = click_step(scr, 25, 25);
        s.gt_region = Some(Region::new(20, 20, 30, 30));
        let p = edit_object(&s, &spec(PerturbKind::Edit)).unwrap();
        for y in 0..64u32 {
            for x in 0..64u32 {
                if s.gt_region.unwrap().contains(x, y) {
                    assert_eq!(p.screen.get(x, y), [10, 10, 10], "interpolated ({x},{y})");
                } else {
                    assert_eq!(p.screen.get(x, y), s.screen.get(x, y), "untouched ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn zoom_remap_matches_worked_example() {
        let scr = Screen::filled(1000, 1000, [0; 3]).unwrap();
        assert_eq!(zoom_remap(Point::new(700, 300), &scr), Point::new(400, 600));
        assert_eq!(zoom_remap(Point::new(0, 0), &scr), Point::new(0, 0));
        // Exactly on both midlines: bottom-right quadrant, origin of the crop.
        assert_eq!(zoom_remap(Point::new(500, 500), &scr), Point::new(0, 0));
    }

    #[test]
    fn zoom_reports_note_and_remaps_gt() {
        let s = click_step(Screen::filled(100, 100, [40; 3]).unwrap(), 80, 20);
        let p = zoom_in(&s, &spec(PerturbKind::Zoom)).unwrap();
        assert_eq!(p.remap_note, RemapNote::ZoomRemapped);
        assert_eq!(p.remapped_gt, Action::Click(Point::new(60, 40)));
        assert_eq!(p.screen.width, 100);
        assert_eq!(p.screen.height, 100);
    }

    #[test]
    fn zoom_of_uniform_quadrant_is_uniform() {
        // Quadrants colored differently; zoom into top-right must come out
        // uniformly that color.
        let mut scr = Screen::filled(40, 40, [0; 3]).unwrap();
        for y in 0..20 {
            for x in 20..40 {
                scr.set(x, y, [200, 100, 50]);
            }
        }
        let s = click_step(scr, 30, 10);
        let p = zoom_in(&s, &spec(PerturbKind::Zoom)).unwrap();
        for y in 0..40u32 {
            for x in 0..40u32 {
                assert_eq!(p.screen.get(x, y), [200, 100, 50], "({x},{y})");
            }
        }
    }

    #[test]
    fn zoom_rejects_out_of_bounds_point() {
        let s = click_step(Screen::filled(100, 100, [0; 3]).unwrap(), 101, 5);
        assert!(matches!(zoom_in(&s, &spec(PerturbKind::Zoom)), Err(PerturbError::OutOfBoundsClick(_))));
    }

    #[test]
    fn token_drop_examples() {
        let mut s = click_step(Screen::filled(10, 10, [0; 3]).unwrap(), 5, 5);
        s.instruction = Some("Type hello in the box".into());
        let p = drop_leading_token(&s, &spec(PerturbKind::TokenDrop)).unwrap();
        assert_eq!(p.instruction.as_deref(), Some("[] hello in the box"));

        s.instruction = Some("Search".into());
        let p = drop_leading_token(&s, &spec(PerturbKind::TokenDrop)).unwrap();
        assert_eq!(p.instruction.as_deref(), Some("[]"));

        s.instruction = Some("  Open settings".into());
        let p = drop_leading_token(&s, &spec(PerturbKind::TokenDrop)).unwrap();
        assert_eq!(p.instruction.as_deref(), Some("[] settings"));

        s.instruction = None;
        assert!(matches!(drop_leading_token(&s, &spec(PerturbKind::TokenDrop)), Err(PerturbError::MissingInstruction(_))));
    }

    #[test]
    fn token_drop_leaves_screen_and_gt_alone() {
        let s = click_step(Screen::filled(10, 10, [3; 3]).unwrap(), 5, 5);
        let p = drop_leading_token(&s, &spec(PerturbKind::TokenDrop)).unwrap();
        assert!(Arc::ptr_eq(&p.screen, &s.screen));
        assert_eq!(p.remapped_gt, s.gt_action);
        assert_eq!(p.remap_note, RemapNote::Identity);
    }

    #[test]
    fn sentence_sub_swaps_and_guards() {
        let mut s = click_step(Screen::filled(10, 10, [0; 3]).unwrap(), 5, 5);
        s.instruction = Some("Type hello".into());
        let p = substitute_instruction(&s, &spec(PerturbKind::SentenceSub)).unwrap();
        assert_eq!(p.instruction.as_deref(), Some("Click the Amazon APP"));
        assert_eq!(p.remapped_gt, s.gt_action, "scoring keeps the original gt");

        s.instruction = Some("Click the Amazon APP".into());
        assert!(matches!(substitute_instruction(&s, &spec(PerturbKind::SentenceSub)), Err(PerturbError::DecoyEqualsOriginal)));

        s.instruction = Some("Type hello".into());
        let mut bad = spec(PerturbKind::SentenceSub);
        bad.decoy_instruction = "   ".into();
        assert!(matches!(substitute_instruction(&s, &bad), Err(PerturbError::EmptyDecoy)));
    }

    #[test]
    fn ablate_matrix() {
        let s = click_step(Screen::filled(12, 12, [7, 7, 7]).unwrap(), 5, 5);
        let keep_both = ablate_modalities(&s, &PerturbationSpec::ablate(true, true));
        assert!(Arc::ptr_eq(&keep_both.screen, &s.screen));
        assert_eq!(keep_both.instruction, s.instruction);

        let no_visual = ablate_modalities(&s, &PerturbationSpec::ablate(false, true));
        assert_eq!(no_visual.screen.get(3, 3), ABLATE_GRAY);
        assert_eq!(no_visual.instruction, s.instruction);

        let no_text = ablate_modalities(&s, &PerturbationSpec::ablate(true, false));
        assert!(Arc::ptr_eq(&no_text.screen, &s.screen));
        assert_eq!(no_text.instruction.as_deref(), Some(""));

        let neither = ablate_modalities(&s, &PerturbationSpec::ablate(false, false));
        assert_eq!(neither.screen.get(0, 0), ABLATE_GRAY);
        assert_eq!(neither.instruction.as_deref(), Some(""));
        assert_eq!(neither.remapped_gt, s.gt_action);
    }

    #[test]
    fn operators_are_pure() {
        let mut scr = Screen::filled(48, 48, [0; 3]).unwrap();
        for y in 0..48 {
            for x in 0..48 {
                scr.set(x, y, [(x * 5) as u8, (y * 5) as u8, 77]);
            }
        }
        let s = click_step(scr, 24, 24);
        for kind in [PerturbKind::Mask, PerturbKind::Edit, PerturbKind::Zoom, PerturbKind::Ablate] {
            let mut sp = spec(kind);
            sp.mask_block_px = 10;
            let a = apply(&s, &sp).unwrap();
            let b = apply(&s, &sp).unwrap();
            assert_eq!(a.screen, b.screen, "{kind:?}");
            assert_eq!(a.remapped_gt, b.remapped_gt, "{kind:?}");
        }
    }

    #[test]
    fn labels_distinguish_ablation_conditions() {
        assert_eq!(spec(PerturbKind::Mask).label(), "mask");
        assert_eq!(PerturbationSpec::ablate(false, true).label(), "ablate_v0i1");
        assert_eq!(PerturbationSpec::ablate(true, false).label(), "ablate_v1i0");
    }

    #[test]
    fn family_mapping_is_total() {
        for k in [PerturbKind::Mask, PerturbKind::Edit, PerturbKind::Zoom] {
            assert_eq!(k.family(), ProbeFamily::Visual);
        }
        for k in [PerturbKind::TokenDrop, PerturbKind::SentenceSub] {
            assert_eq!(k.family(), ProbeFamily::Text);
        }
        assert_eq!(PerturbKind::Ablate.family(), ProbeFamily::Structure);
        let _ = ActionKind::ALL;
    }
}
