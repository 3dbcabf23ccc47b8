//! Simulated learner with a heuristic per-concept mastery update and simple
//! engagement/confusion dynamics.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::{ConceptGraph, KnowledgeState};
use crate::pedagogy::{Action, ActionTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProfileKind {
    Struggling,
    Average,
    Advanced,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 3] = [
        ProfileKind::Struggling,
        ProfileKind::Average,
        ProfileKind::Advanced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Struggling => "Struggling",
            ProfileKind::Average => "Average",
            ProfileKind::Advanced => "Advanced",
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ProfileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProfileKind::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown profile `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerProfile {
    pub name: ProfileKind,
    pub initial_knowledge: f64,
    pub gain_multiplier: f64,
    pub confusion_threshold: f64,
    #[serde(default = "one")]
    pub engagement_sensitivity: f64,
}

fn one() -> f64 {
    1.0
}

impl LearnerProfile {
    pub fn bundled(kind: ProfileKind) -> Self {
        let (initial_knowledge, gain_multiplier, confusion_threshold) = match kind {
            ProfileKind::Struggling => (0.05, 0.8, 0.30),
            ProfileKind::Average => (0.15, 1.0, 0.50),
            ProfileKind::Advanced => (0.30, 1.2, 0.70),
        };
        Self {
            name: kind,
            initial_knowledge,
            gain_multiplier,
            confusion_threshold,
            engagement_sensitivity: 1.0,
        }
    }
}

/// Knobs of the heuristic learner model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dynamics {
    /// Half-width of the uniform noise around the profile's initial mastery.
    pub init_noise: f64,
    pub initial_engagement: f64,
    /// Gain multiplier applied while confusion exceeds the profile threshold.
    pub confusion_suppression: f64,
    /// Confusion added by Challenge/Assign_Exercise on a weak target.
    pub confusion_spike: f64,
    /// Target mastery below which hard actions confuse.
    pub spike_below_mastery: f64,
    /// Confusion removed by Explain_Simple and Provide_Hint.
    pub confusion_relief: f64,
    /// Confusion removed by every other action.
    pub confusion_decay: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            init_noise: 0.05,
            initial_engagement: 0.5,
            confusion_suppression: 0.3,
            confusion_spike: 0.15,
            spike_below_mastery: 0.3,
            confusion_relief: 0.10,
            confusion_decay: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentState {
    pub knowledge: KnowledgeState,
    pub engagement: f64,
    pub confusion: f64,
    pub profile: LearnerProfile,
    rng: ChaCha8Rng,
}

/// Changes produced by one tutoring action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub mastery_delta: f64,
    pub engagement_delta: f64,
    pub confusion_delta: f64,
    pub mastery_after: f64,
}

impl StudentState {
    pub fn new(profile: LearnerProfile, graph: &ConceptGraph, seed: u64, dynamics: &Dynamics) -> Self {
        Self::from_rng(profile, graph, ChaCha8Rng::seed_from_u64(seed), dynamics)
    }

    pub fn from_rng(
        profile: LearnerProfile,
        graph: &ConceptGraph,
        mut rng: ChaCha8Rng,
        dynamics: &Dynamics,
    ) -> Self {
        let half = dynamics.init_noise;
        let mastery = (0..graph.len())
            .map(|_| {
                let noise = if half > 0.0 { rng.gen_range(-half..=half) } else { 0.0 };
                (profile.initial_knowledge + noise).clamp(0.0, 1.0)
            })
            .collect();
        Self {
            knowledge: KnowledgeState { mastery },
            engagement: dynamics.initial_engagement,
            confusion: 0.0,
            profile,
            rng,
        }
    }

    /// The learner's private random stream (not consumed by the update rule).
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn mastery(&self, concept: usize) -> f64 {
        self.knowledge.mastery[concept]
    }

    /// Applies one action aimed at `concept` and mutates the state in place.
    pub fn apply_action(
        &mut self,
        action: Action,
        concept: usize,
        table: &ActionTable,
        dynamics: &Dynamics,
    ) -> Result<StepOutcome, GraphError> {
        if concept >= self.knowledge.len() {
            return Err(GraphError::UnknownConcept(format!("#{concept}")));
        }
        let before = self.knowledge.mastery[concept];

        let mut gain = table.get(action).base_mastery_gain * self.profile.gain_multiplier;
        if self.confusion > self.profile.confusion_threshold {
            gain *= dynamics.confusion_suppression;
        }
        let after = (before + gain).clamp(0.0, 1.0);
        self.knowledge.mastery[concept] = after;

        let engagement_delta =
            (table.engagement_delta(action, before) * self.profile.engagement_sensitivity)
                .clamp(crate::pedagogy::ENGAGEMENT_MIN, crate::pedagogy::ENGAGEMENT_MAX);
        self.engagement = (self.engagement + engagement_delta).clamp(0.0, 1.0);

        let step = match action {
            Action::Challenge | Action::AssignExercise if before < dynamics.spike_below_mastery => {
                dynamics.confusion_spike
            }
            Action::ExplainSimple | Action::ProvideHint => -dynamics.confusion_relief,
            _ => -dynamics.confusion_decay,
        };
        let confusion = (self.confusion + step).clamp(0.0, 1.0);
        let confusion_delta = confusion - self.confusion;
        self.confusion = confusion;

        Ok(StepOutcome {
            mastery_delta: after - before,
            engagement_delta,
            confusion_delta,
            mastery_after: after,
        })
    }

    pub fn count_mastered(&self, theta_mastered: f64) -> usize {
        count_mastered(&self.knowledge, theta_mastered)
    }
}

/// Concepts with mastery at or above `theta_mastered`.
pub fn count_mastered(k: &KnowledgeState, theta_mastered: f64) -> usize {
    k.mastery.iter().filter(|&&m| m >= theta_mastered).count()
}
