//! Scoring and aggregation. All rates are carried as integer tenths of a
//! percent (half-up), so report values are exact and byte-reproducible; raw
//! true/total counts stay alongside as the source of truth.
//!
//! Two distance conventions coexist on purpose and must not be conflated:
//! click correctness uses a 140 milli-unit radius in the `[0,1000]`
//! normalized frame (14% of the frame), while visual-memory consistency
//! compares two predictions in raw pixels with a 50 px radius.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::ParseOutcome;
use crate::model::{div_round_half_up, Action, ActionKind, Point};

/// Click correctness radius in normalized milli-units (14% of the frame).
pub const CLICK_TOLERANCE_MILLI: i64 = 140;
/// Default visual-memory consistency radius in raw pixels.
pub const VMC_GAMMA_PX: i64 = 50;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("cannot aggregate an empty outcome set")]
    EmptyOutcomes,
    #[error("reflection score needs a non-empty probe set")]
    EmptyReflection,
    #[error("task success rate needs at least one episode")]
    EmptyEpisodes,
    #[error("baseline and perturbed cover different sample sets ({only_base} only in base, {only_pert} only in perturbed)")]
    SampleSetMismatch { only_base: usize, only_pert: usize },
    #[error("episode of {expected} steps has {got} outcomes")]
    MissingStepOutcome { expected: usize, got: usize },
}

// ---- exact one-decimal percentages -------------------------------------------

/// A percentage held as integer tenths (e.g. `44.8%` is `448`). Subtraction
/// of two rates gives an exact percentage-point delta, which may be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Percent(i64);

impl Percent {
    pub const ZERO: Percent = Percent(0);
    pub const HUNDRED: Percent = Percent(1000);

    pub fn from_tenths(tenths: i64) -> Self {
        Percent(tenths)
    }

    /// `100 * num / den` rounded half-up to one decimal. `den` must be > 0.
    pub fn from_count(num: usize, den: usize) -> Self {
        assert!(den > 0, "percentage over an empty denominator");
        Percent(div_round_half_up(num as i64 * 1000, den as i64))
    }

    pub fn tenths(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl std::ops::Sub for Percent {
    type Output = Percent;
    fn sub(self, rhs: Percent) -> Percent {
        Percent(self.0 - rhs.0)
    }
}

impl std::fmt::Display for Percent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.abs();
        write!(f, "{sign}{}.{}", a / 10, a % 10)
    }
}

impl Serialize for Percent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Percent((v * 10.0).round() as i64))
    }
}

// ---- step scoring --------------------------------------------------------------

/// Click rule: Euclidean distance at most 140 milli-units, inclusive, in the
/// normalized frame. Integer-exact (compares squared distances).
pub fn match_click(pred: Point, gt: Point) -> bool {
    pred.dist2(gt) <= CLICK_TOLERANCE_MILLI * CLICK_TOLERANCE_MILLI
}

/// Scored result of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub sample_id: String,
    /// Predicted action kind equals the ground-truth kind.
    pub type_ok: bool,
    /// Click-rule result; present only when the ground truth is a click AND
    /// the prediction parsed to a coordinate action.
    pub grounding_ok: Option<bool>,
    /// Full step correctness (type + arguments).
    pub sr_ok: bool,
    /// Predicted click point (normalized), when the prediction has one.
    pub pred_point: Option<Point>,
    /// Predicted action kind, when the response parsed at all.
    pub pred_kind: Option<ActionKind>,
    /// False when the agent never answered (transport exhaustion); such steps
    /// count as incorrect everywhere but are tallied separately.
    pub answered: bool,
}

/// Score one parsed response against a ground-truth action. Click points in
/// `gt` must already be normalized. `parsed = None` means the agent never
/// answered. Parse failures score as incorrect but answered.
pub fn match_action(sample_id: &str, parsed: Option<&ParseOutcome>, gt: &Action) -> StepOutcome {
    let unanswered = StepOutcome {
        sample_id: sample_id.to_string(),
        type_ok: false,
        grounding_ok: None,
        sr_ok: false,
        pred_point: None,
        pred_kind: None,
        answered: false,
    };
    let Some(outcome) = parsed else {
        return unanswered;
    };
    let Some(action) = &outcome.action else {
        return StepOutcome { answered: true, ..unanswered };
    };
    let type_ok = action.kind() == gt.kind();
    let pred_point = action.click_point();
    let grounding_ok = match (gt, pred_point) {
        (Action::Click(gt_p), Some(p)) => Some(match_click(p, *gt_p)),
        _ => None,
    };
    let sr_ok = match (action, gt) {
        (Action::Click(p), Action::Click(gt_p)) => match_click(*p, *gt_p),
        (Action::Scroll(d), Action::Scroll(gt_d)) => d == gt_d,
        (Action::Type(t), Action::Type(gt_t)) => t.trim() == gt_t.trim(),
        (Action::OpenApp(t), Action::OpenApp(gt_t)) => t.trim() == gt_t.trim(),
        _ => type_ok, // argument-free kinds: exact kind match is full credit
    };
    StepOutcome {
        sample_id: sample_id.to_string(),
        type_ok,
        grounding_ok,
        sr_ok: sr_ok && type_ok,
        pred_point,
        pred_kind: Some(action.kind()),
        answered: true,
    }
}

// ---- aggregation ----------------------------------------------------------------

/// Count-level aggregate of step outcomes. Unanswered steps are false in
/// every numerator and stay in every denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub type_true: usize,
    pub grounding_true: usize,
    pub grounding_n: usize,
    pub sr_true: usize,
    pub unanswered: usize,
}

impl Aggregate {
    pub fn from_outcomes(outcomes: &[StepOutcome]) -> Result<Self, MetricError> {
        if outcomes.is_empty() {
            return Err(MetricError::EmptyOutcomes);
        }
        let mut a = Aggregate { n: 0, type_true: 0, grounding_true: 0, grounding_n: 0, sr_true: 0, unanswered: 0 };
        for o in outcomes {
            a.n += 1;
            a.type_true += o.type_ok as usize;
            a.sr_true += o.sr_ok as usize;
            if let Some(g) = o.grounding_ok {
                a.grounding_n += 1;
                a.grounding_true += g as usize;
            }
            a.unanswered += !o.answered as usize;
        }
        Ok(a)
    }

    pub fn merge(self, other: Aggregate) -> Aggregate {
        Aggregate {
            n: self.n + other.n,
            type_true: self.type_true + other.type_true,
            grounding_true: self.grounding_true + other.grounding_true,
            grounding_n: self.grounding_n + other.grounding_n,
            sr_true: self.sr_true + other.sr_true,
            unanswered: self.unanswered + other.unanswered,
        }
    }

    pub fn type_acc(&self) -> Percent {
        Percent::from_count(self.type_true, self.n)
    }

    /// Absent (not zero) when no step had a gradable coordinate prediction.
    pub fn grounding_acc(&self) -> Option<Percent> {
        (self.grounding_n > 0).then(|| Percent::from_count(self.grounding_true, self.grounding_n))
    }

    pub fn sr(&self) -> Percent {
        Percent::from_count(self.sr_true, self.n)
    }
}

/// Perturbation sensitivity: base minus perturbed, in percentage points, for
/// type accuracy and SR. Requires identical sample sets — comparing different
/// steps would measure selection, not sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaP {
    pub delta_p_type: Percent,
    pub delta_p_sr: Percent,
}

pub fn delta_p(base: &[StepOutcome], perturbed: &[StepOutcome]) -> Result<DeltaP, MetricError> {
    let base_ids: BTreeSet<&str> = base.iter().map(|o| o.sample_id.as_str()).collect();
    let pert_ids: BTreeSet<&str> = perturbed.iter().map(|o| o.sample_id.as_str()).collect();
    if base_ids != pert_ids {
        return Err(MetricError::SampleSetMismatch {
            only_base: base_ids.difference(&pert_ids).count(),
            only_pert: pert_ids.difference(&base_ids).count(),
        });
    }
    let b = Aggregate::from_outcomes(base)?;
    let p = Aggregate::from_outcomes(perturbed)?;
    Ok(DeltaP { delta_p_type: b.type_acc() - p.type_acc(), delta_p_sr: b.sr() - p.sr() })
}

/// Visual memory consistency: the share of (original, perturbed) prediction
/// pairs within `gamma` RAW pixels of each other, boundary inclusive. Absent
/// when no pair exists (both predictions must be coordinate actions).
pub fn vmc(pairs: &[(Point, Point)], gamma: i64) -> Option<Percent> {
    if pairs.is_empty() {
        return None;
    }
    let within = pairs.iter().filter(|(a, b)| a.dist2(*b) <= gamma * gamma).count();
    Some(Percent::from_count(within, pairs.len()))
}

/// Reflection score: the share of probed steps whose perturbed prediction is
/// a reflective (back/home) or status (complete/wait) action. Unparsed and
/// unanswered predictions stay in the denominator.
pub fn reflection_score(pred_kinds: &[Option<ActionKind>]) -> Result<Percent, MetricError> {
    if pred_kinds.is_empty() {
        return Err(MetricError::EmptyReflection);
    }
    let hits = pred_kinds
        .iter()
        .filter(|k| k.map(ActionKind::is_reflective_or_status).unwrap_or(false))
        .count();
    Ok(Percent::from_count(hits, pred_kinds.len()))
}

/// An episode succeeds only when every one of its steps succeeded; the
/// outcome list must cover the whole episode.
pub fn task_success(outcomes: &[StepOutcome], episode_len: usize) -> Result<bool, MetricError> {
    if outcomes.len() != episode_len {
        return Err(MetricError::MissingStepOutcome { expected: episode_len, got: outcomes.len() });
    }
    Ok(outcomes.iter().all(|o| o.sr_ok))
}

pub fn aggregate_tsr(episode_successes: &[bool]) -> Result<Percent, MetricError> {
    if episode_successes.is_empty() {
        return Err(MetricError::EmptyEpisodes);
    }
    Ok(Percent::from_count(episode_successes.iter().filter(|s| **s).count(), episode_successes.len()))
}

// ---- reports ----------------------------------------------------------------------

/// Aggregated metrics for one (agent, probe) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub type_acc: Percent,
    pub grounding_acc: Option<Percent>,
    pub sr: Percent,
    /// Present only when the probe subset covers whole episodes.
    pub tsr: Option<Percent>,
    pub delta_p_type: Percent,
    pub delta_p_sr: Percent,
    pub vmc: Option<Percent>,
    pub rs: Percent,
}

/// Full per-(agent, probe) report: aggregate metrics plus per-step outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub agent_id: String,
    pub probe: String,
    pub n_samples: usize,
    pub metrics: MetricBlock,
    /// Pairs that entered the VMC denominator (both predictions coordinate).
    pub vmc_pairs: usize,
    pub unanswered_count: usize,
    pub outcomes: Vec<StepOutcome>,
}

pub const CSV_HEADER: &str =
    "agent_id,probe,n,type_acc,grounding_acc,sr,tsr,delta_p_type,delta_p_sr,vmc,rs,unanswered";

fn csv_opt(p: Option<Percent>) -> String {
    p.map(|v| v.to_string()).unwrap_or_default()
}

impl ProbeReport {
    /// One flat summary row, columns per [`CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.agent_id,
            self.probe,
            self.n_samples,
            self.metrics.type_acc,
            csv_opt(self.metrics.grounding_acc),
            self.metrics.sr,
            csv_opt(self.metrics.tsr),
            self.metrics.delta_p_type,
            self.metrics.delta_p_sr,
            csv_opt(self.metrics.vmc),
            self.metrics.rs,
            self.unanswered_count
        )
    }
}
