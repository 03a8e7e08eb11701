//! Deterministic in-process agents with known behavioral signatures. The
//! memory agent replays recorded coordinates no matter what the screen shows;
//! the reasoner reacts to what is actually visible; the random agent is noise
//! with a per-sample seed. Their separation under probing validates the whole
//! pipeline end to end.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{AgentBackend, AgentResponse, QueryError, StepJob};
use crate::codec::{parse_action, serialize_action, Grammar};
use crate::model::{normalize_action, Action, ActionKind, Point, ScrollDirection};
use crate::perturb::PerturbKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    MemoryOracle,
    ReasonerOracle,
    RandomAgent,
}

impl ReferenceKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "memory_oracle" => ReferenceKind::MemoryOracle,
            "reasoner_oracle" => ReferenceKind::ReasonerOracle,
            "random_agent" => ReferenceKind::RandomAgent,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceKind::MemoryOracle => "memory_oracle",
            ReferenceKind::ReasonerOracle => "reasoner_oracle",
            ReferenceKind::RandomAgent => "random_agent",
        }
    }
}

/// Decide the action a reference agent takes on one job. Coordinates in and
/// out are raw pixels.
pub fn reference_agent_step(kind: ReferenceKind, job: &StepJob, run_seed: u64) -> Action {
    match kind {
        // Pure spatial memory: the recorded action, perturbed or not.
        ReferenceKind::MemoryOracle => job.oracle.original_gt.clone(),
        ReferenceKind::ReasonerOracle => reasoner_step(job),
        ReferenceKind::RandomAgent => random_step(job, run_seed),
    }
}

fn reasoner_step(job: &StepJob) -> Action {
    let Some(spec) = &job.oracle.perturb else {
        // Unperturbed: a perfect reasoner reproduces the ground truth.
        return job.oracle.original_gt.clone();
    };
    let gt = &job.oracle.original_gt;
    match spec.kind {
        // The target is gone; reflect instead of acting.
        PerturbKind::Mask | PerturbKind::Edit => Action::PressBack,
        // The target is still visible, at its new location.
        PerturbKind::Zoom => job.oracle.remapped_gt.clone(),
        // Instruction semantics unchanged; act as recorded.
        PerturbKind::TokenDrop => gt.clone(),
        // Follows the decoy text, which asks for a click.
        PerturbKind::SentenceSub => {
            let s = &job.screen;
            Action::Click(Point::new(s.width as i64 / 2, s.height as i64 / 2))
        }
        PerturbKind::Ablate => {
            match (spec.ablate_keep_visual, spec.ablate_keep_instruction) {
                // Both modalities intact: nothing to react to.
                (true, true) => gt.clone(),
                // Screen only: visible work proceeds, but without the
                // instruction there is no way to know text content or that
                // the task is finished.
                (true, false) => match gt.kind() {
                    ActionKind::Complete | ActionKind::Type | ActionKind::OpenApp => Action::Wait,
                    _ => gt.clone(),
                },
                // Instruction only: blind-executable actions go through;
                // anything needing eyes on the screen backs out.
                (false, true) => match gt.kind() {
                    ActionKind::Scroll
                    | ActionKind::PressBack
                    | ActionKind::PressHome
                    | ActionKind::Type
                    | ActionKind::OpenApp
                    | ActionKind::Enter => gt.clone(),
                    _ => Action::PressBack,
                },
                // Nothing to go on at all.
                (false, false) => Action::Wait,
            }
        }
    }
}

fn random_step(job: &StepJob, run_seed: u64) -> Action {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(job.sample_id.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha20Rng::from_seed(seed);

    let kind = ActionKind::ALL[rng.random_range(0..ActionKind::ALL.len())];
    match kind {
        ActionKind::Click => {
            let x = rng.random_range(0..=job.screen.width as i64);
            let y = rng.random_range(0..=job.screen.height as i64);
            Action::Click(Point::new(x, y))
        }
        ActionKind::Scroll => {
            let dirs = [ScrollDirection::Up, ScrollDirection::Down, ScrollDirection::Left, ScrollDirection::Right];
            Action::Scroll(dirs[rng.random_range(0..4)])
        }
        ActionKind::Type => Action::Type(format!("word{}", rng.random_range(0..1000))),
        ActionKind::OpenApp => Action::OpenApp(format!("app{}", rng.random_range(0..100))),
        ActionKind::PressBack => Action::PressBack,
        ActionKind::PressHome => Action::PressHome,
        ActionKind::Enter => Action::Enter,
        ActionKind::Complete => Action::Complete,
        ActionKind::Wait => Action::Wait,
    }
}

/// In-process backend that speaks a real dialect: the chosen action is
/// serialized to text and re-parsed, so every reference run also exercises
/// the codec end to end.
pub struct ReferenceBackend {
    pub kind: ReferenceKind,
    pub grammar: Arc<Grammar>,
    pub run_seed: u64,
    /// Prefix the action with a line of prose, exercising rationale capture.
    pub with_rationale: bool,
}

impl ReferenceBackend {
    pub fn new(kind: ReferenceKind, grammar: Arc<Grammar>, run_seed: u64) -> Self {
        ReferenceBackend { kind, grammar, run_seed, with_rationale: true }
    }
}

impl AgentBackend for ReferenceBackend {
    fn query(&self, job: &StepJob) -> Result<AgentResponse, QueryError> {
        let action = reference_agent_step(self.kind, job, self.run_seed);
        let action = normalize_action(&action, &job.screen)
            .expect("reference agents only produce on-screen coordinates");
        let text = serialize_action(&action, &self.grammar, &job.screen);
        let raw = if self.with_rationale {
            format!("Considering the screen and the request, the next move follows.\n{text}")
        } else {
            text
        };
        let parsed = parse_action(&raw, &self.grammar, &job.screen);
        Ok(AgentResponse { raw, parsed, latency: 0.0, attempt_count: 1 })
    }
}
