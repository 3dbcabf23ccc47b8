//! Tutoring action catalog, cognitive demand, engagement response,
//! appropriateness judgment and reward composition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::{ConceptGraph, KnowledgeState};

pub const NUM_ACTIONS: usize = 8;

/// Tutor action types, in the fixed order used for tie-breaking and
/// featurization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Encourage,
    #[serde(rename = "Explain_Simple")]
    ExplainSimple,
    #[serde(rename = "Provide_Hint")]
    ProvideHint,
    #[serde(rename = "Explain_Detailed")]
    ExplainDetailed,
    #[serde(rename = "Provide_Example")]
    ProvideExample,
    #[serde(rename = "Assess_Knowledge")]
    AssessKnowledge,
    #[serde(rename = "Assign_Exercise")]
    AssignExercise,
    Challenge,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Encourage,
        Action::ExplainSimple,
        Action::ProvideHint,
        Action::ExplainDetailed,
        Action::ProvideExample,
        Action::AssessKnowledge,
        Action::AssignExercise,
        Action::Challenge,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Encourage => "Encourage",
            Action::ExplainSimple => "Explain_Simple",
            Action::ProvideHint => "Provide_Hint",
            Action::ExplainDetailed => "Explain_Detailed",
            Action::ProvideExample => "Provide_Example",
            Action::AssessKnowledge => "Assess_Knowledge",
            Action::AssignExercise => "Assign_Exercise",
            Action::Challenge => "Challenge",
        }
    }

    /// Demand anchors stay fixed when the demand scale is perturbed.
    pub fn is_demand_anchor(self) -> bool {
        matches!(self, Action::Encourage | Action::Challenge)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// Per-action parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub demand: f64,
    pub base_mastery_gain: f64,
    pub base_engagement_delta: f64,
    /// Replaces the base delta when target mastery is below
    /// [`ActionTable::low_mastery`].
    #[serde(default)]
    pub engagement_low_mastery: Option<f64>,
    /// Replaces the base delta when target mastery is at least
    /// [`ActionTable::high_mastery`].
    #[serde(default)]
    pub engagement_high_mastery: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionTable {
    pub encourage: ActionSpec,
    pub explain_simple: ActionSpec,
    pub provide_hint: ActionSpec,
    pub explain_detailed: ActionSpec,
    pub provide_example: ActionSpec,
    pub assess_knowledge: ActionSpec,
    pub assign_exercise: ActionSpec,
    pub challenge: ActionSpec,
    pub low_mastery: f64,
    pub high_mastery: f64,
    /// Appropriate iff demand <= band_offset + target mastery.
    pub band_offset: f64,
}

const fn spec(demand: f64, gain: f64, eng: f64) -> ActionSpec {
    ActionSpec {
        demand,
        base_mastery_gain: gain,
        base_engagement_delta: eng,
        engagement_low_mastery: None,
        engagement_high_mastery: None,
    }
}

impl Default for ActionTable {
    fn default() -> Self {
        Self {
            encourage: spec(0.0, 0.000, 0.8),
            explain_simple: spec(0.2, 0.008, 0.3),
            provide_hint: spec(0.3, 0.009, 0.4),
            explain_detailed: spec(0.4, 0.012, 0.1),
            provide_example: spec(0.5, 0.011, 0.3),
            assess_knowledge: spec(0.5, 0.007, -0.1),
            assign_exercise: ActionSpec {
                engagement_high_mastery: Some(0.2),
                ..spec(0.8, 0.014, -0.2)
            },
            challenge: ActionSpec {
                engagement_low_mastery: Some(-0.4),
                engagement_high_mastery: Some(0.3),
                ..spec(1.0, 0.015, -0.1)
            },
            low_mastery: 0.3,
            high_mastery: 0.5,
            band_offset: 0.5,
        }
    }
}

impl ActionTable {
    pub fn get(&self, action: Action) -> &ActionSpec {
        match action {
            Action::Encourage => &self.encourage,
            Action::ExplainSimple => &self.explain_simple,
            Action::ProvideHint => &self.provide_hint,
            Action::ExplainDetailed => &self.explain_detailed,
            Action::ProvideExample => &self.provide_example,
            Action::AssessKnowledge => &self.assess_knowledge,
            Action::AssignExercise => &self.assign_exercise,
            Action::Challenge => &self.challenge,
        }
    }

    pub fn demand_map(&self) -> DemandMap {
        DemandMap {
            values: Action::ALL.map(|a| self.get(a).demand),
        }
    }

    pub fn demand(&self, action: Action) -> f64 {
        self.get(action).demand
    }

    /// Engagement delta for `action` given the target concept's mastery,
    /// clamped to `[-1.0, 0.8]`.
    pub fn engagement_delta(&self, action: Action, target_mastery: f64) -> f64 {
        let s = self.get(action);
        let raw = match (s.engagement_low_mastery, s.engagement_high_mastery) {
            (Some(low), _) if target_mastery < self.low_mastery => low,
            (_, Some(high)) if target_mastery >= self.high_mastery => high,
            _ => s.base_engagement_delta,
        };
        raw.clamp(ENGAGEMENT_MIN, ENGAGEMENT_MAX)
    }

    /// Returns `+0.5` when the target is accessible and the action's demand
    /// sits inside the mastery band, `-1.0` otherwise.
    pub fn appropriateness(
        &self,
        action: Action,
        concept: usize,
        knowledge: &KnowledgeState,
        graph: &ConceptGraph,
        theta_min: f64,
    ) -> Result<f64, GraphError> {
        graph.check_dimension(knowledge)?;
        if concept >= graph.len() {
            return Err(GraphError::UnknownConcept(format!("#{concept}")));
        }
        let accessible = graph.is_accessible(concept, knowledge, theta_min);
        let in_band = self.demand(action) <= self.band_offset + knowledge.mastery[concept];
        Ok(if accessible && in_band {
            APPROPRIATE
        } else {
            INAPPROPRIATE
        })
    }
}

pub const ENGAGEMENT_MIN: f64 = -1.0;
pub const ENGAGEMENT_MAX: f64 = 0.8;
pub const APPROPRIATE: f64 = 0.5;
pub const INAPPROPRIATE: f64 = -1.0;

/// Demand lookup that can carry a perturbed scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandMap {
    pub values: [f64; NUM_ACTIONS],
}

impl DemandMap {
    pub fn get(&self, action: Action) -> f64 {
        self.values[action.index()]
    }

    /// Scales every non-anchor demand by `scale`, clamped to `[0, 1]`.
    pub fn scaled(&self, scale: f64) -> DemandMap {
        let mut values = self.values;
        for a in Action::ALL {
            if !a.is_demand_anchor() {
                values[a.index()] = (values[a.index()] * scale).clamp(0.0, 1.0);
            }
        }
        DemandMap { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_eng: f64,
    pub w_mas: f64,
    pub w_ped: f64,
}

impl RewardWeights {
    pub const ENGAGEMENT_ONLY: RewardWeights = RewardWeights {
        w_eng: 1.0,
        w_mas: 0.0,
        w_ped: 0.0,
    };
    pub const MASTERY_ONLY: RewardWeights = RewardWeights {
        w_eng: 0.0,
        w_mas: 1.0,
        w_ped: 0.0,
    };
    pub const MULTI_OBJECTIVE: RewardWeights = RewardWeights {
        w_eng: 0.3,
        w_mas: 0.5,
        w_ped: 0.2,
    };
}

/// Linear scales applied to raw deltas before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScales {
    pub engagement: f64,
    pub mastery: f64,
}

impl Default for RewardScales {
    fn default() -> Self {
        Self {
            engagement: 3.0,
            mastery: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub r_eng: f64,
    pub r_mas: f64,
    pub r_ped: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawOutcome {
    pub eng_delta: f64,
    pub mastery_delta: f64,
    pub appropriateness: f64,
}

pub fn compose_reward(
    weights: &RewardWeights,
    scales: &RewardScales,
    raw: RawOutcome,
) -> (f64, RewardComponents) {
    let c = RewardComponents {
        r_eng: scales.engagement * raw.eng_delta,
        r_mas: scales.mastery * raw.mastery_delta,
        r_ped: raw.appropriateness,
    };
    let reward = weights.w_eng * c.r_eng + weights.w_mas * c.r_mas + weights.w_ped * c.r_ped;
    (reward, c)
}
