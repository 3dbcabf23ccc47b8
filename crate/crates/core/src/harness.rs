//! Session runner and experiment matrix.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    candidate_pairs, feature_dim, featurize, BanditModel, ConstraintToggles, FeatureContext,
    History,
};
use crate::error::HarnessError;
use crate::graph::ConceptGraph;
use crate::log::{
    ConditionName, LogSet, SessionHeader, SessionLog, SessionSummary, StepRecord,
};
use crate::pedagogy::{
    compose_reward, Action, ActionTable, RawOutcome, RewardScales, RewardWeights, APPROPRIATE,
    NUM_ACTIONS,
};
use crate::safety::ConstraintParams;
use crate::student::{count_mastered, Dynamics, LearnerProfile, ProfileKind, StudentState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    pub name: ConditionName,
    pub weights: RewardWeights,
    pub toggles: ConstraintToggles,
}

impl ConditionConfig {
    pub fn new(name: ConditionName, params: &ConstraintParams) -> Self {
        let (weights, c1, c3) = match name {
            ConditionName::EO => (RewardWeights::ENGAGEMENT_ONLY, false, false),
            ConditionName::MAS => (RewardWeights::MASTERY_ONLY, false, false),
            ConditionName::MO => (RewardWeights::MULTI_OBJECTIVE, false, false),
            ConditionName::ST => (RewardWeights::MULTI_OBJECTIVE, true, true),
            ConditionName::NoC1 => (RewardWeights::MULTI_OBJECTIVE, false, true),
            ConditionName::NoC3 => (RewardWeights::MULTI_OBJECTIVE, true, false),
        };
        Self {
            name,
            weights,
            toggles: ConstraintToggles {
                c1_enabled: c1,
                c3_enabled: c3,
                delta_min: params.delta_min,
                window: params.window_w.max(1),
            },
        }
    }
}

/// Simulator settings shared by every session of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub session_length: usize,
    pub actions: ActionTable,
    pub dynamics: Dynamics,
    pub scales: RewardScales,
    pub alpha: f64,
    pub lambda: f64,
    pub profiles: BTreeMap<ProfileKind, LearnerProfile>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            session_length: 150,
            actions: ActionTable::default(),
            dynamics: Dynamics::default(),
            scales: RewardScales::default(),
            alpha: 1.0,
            lambda: 1.0,
            profiles: ProfileKind::ALL
                .into_iter()
                .map(|k| (k, LearnerProfile::bundled(k)))
                .collect(),
        }
    }
}

impl SimSettings {
    pub fn profile(&self, kind: ProfileKind) -> LearnerProfile {
        self.profiles
            .get(&kind)
            .copied()
            .unwrap_or_else(|| LearnerProfile::bundled(kind))
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the learner stream for (profile, seed). Conditions share it so
/// every condition meets the same simulated learners.
pub fn student_seed(profile: ProfileKind, seed: u64) -> u64 {
    mix(mix(0x5354_5544_454e_5400 ^ profile as u64).wrapping_add(seed))
}

pub fn run_session(
    condition: &ConditionConfig,
    profile: &LearnerProfile,
    seed: u64,
    graph: &ConceptGraph,
    params: &ConstraintParams,
    sim: &SimSettings,
) -> Result<SessionLog, HarnessError> {
    let rng = ChaCha8Rng::seed_from_u64(student_seed(profile.name, seed));
    let mut state = StudentState::from_rng(*profile, graph, rng, &sim.dynamics);
    let initial_mastery = state.knowledge.mastery.clone();
    let mut history = History::new(graph.len());
    let mut model = BanditModel::new(feature_dim(graph.len()), sim.alpha, sim.lambda);
    let demand = sim.actions.demand_map();
    let ctx = FeatureContext {
        theta_min: params.theta_min,
        theta_mastered: params.theta_mastered,
        window: condition.toggles.window,
        session_length: sim.session_length,
    };

    let mut steps = Vec::with_capacity(sim.session_length);
    for t in 0..sim.session_length {
        let features = featurize(&state, graph, &history, &ctx)?;
        let cands = candidate_pairs(
            &state,
            graph,
            &condition.toggles,
            params.theta_min,
            params.theta_mastered,
            history.recent_demands(condition.toggles.window),
            &demand,
        )?;
        let (action, concept) = model.select(&features, &cands)?;

        let accessible = graph.is_accessible(concept, &state.knowledge, params.theta_min);
        let appropriateness = sim.actions.appropriateness(
            action,
            concept,
            &state.knowledge,
            graph,
            params.theta_min,
        )?;
        let outcome = state.apply_action(action, concept, &sim.actions, &sim.dynamics)?;
        let (reward, comps) = compose_reward(
            &condition.weights,
            &sim.scales,
            RawOutcome {
                eng_delta: outcome.engagement_delta,
                mastery_delta: outcome.mastery_delta,
                appropriateness,
            },
        );
        model.update(&features, action, reward)?;
        let d = demand.get(action);
        history.record(action, concept, d);

        steps.push(StepRecord {
            t,
            concept: graph.concept(concept).id.clone(),
            action,
            demand: d,
            mastery_delta: outcome.mastery_delta,
            mastery_after: outcome.mastery_after,
            engagement_delta: outcome.engagement_delta,
            r_eng: comps.r_eng,
            r_mas: comps.r_mas,
            r_ped: comps.r_ped,
            reward,
            accessible,
            appropriate: appropriateness == APPROPRIATE,
        });
    }

    let n = initial_mastery.len().max(1) as f64;
    let delta_k = state
        .knowledge
        .mastery
        .iter()
        .zip(&initial_mastery)
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / n;
    let summary = SessionSummary {
        delta_k,
        n_mastered: count_mastered(&state.knowledge, params.theta_mastered),
        cum_r_eng: steps.iter().map(|s| s.r_eng).sum(),
        cum_r_mas: steps.iter().map(|s| s.r_mas).sum(),
        cum_r_ped: steps.iter().map(|s| s.r_ped).sum(),
        cum_reward: steps.iter().map(|s| s.reward).sum(),
    };
    Ok(SessionLog {
        header: SessionHeader {
            condition: condition.name,
            profile: profile.name,
            seed,
            session_length: sim.session_length,
            weights: condition.weights,
            toggles: condition.toggles,
            params: *params,
            concept_ids: graph.concepts().iter().map(|c| c.id.clone()).collect(),
            initial_mastery,
        },
        steps,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentMatrix {
    pub conditions: Vec<ConditionName>,
    pub profiles: Vec<ProfileKind>,
    pub seeds: Vec<u64>,
    pub session_length: usize,
}

impl Default for ExperimentMatrix {
    fn default() -> Self {
        Self {
            conditions: ConditionName::ALL.to_vec(),
            profiles: ProfileKind::ALL.to_vec(),
            seeds: (0..10).collect(),
            session_length: 150,
        }
    }
}

impl ExperimentMatrix {
    pub fn coordinates(&self) -> Vec<(ConditionName, ProfileKind, u64)> {
        let mut out = Vec::new();
        for &c in &self.conditions {
            for &p in &self.profiles {
                for &s in &self.seeds {
                    out.push((c, p, s));
                }
            }
        }
        out
    }
}

/// Runs every (condition, profile, seed) cell on up to `parallelism` threads.
/// Output does not depend on the thread count.
pub fn run_matrix(
    matrix: &ExperimentMatrix,
    graph: &ConceptGraph,
    params: &ConstraintParams,
    sim: &SimSettings,
    parallelism: usize,
) -> Result<LogSet, HarnessError> {
    let sim = SimSettings {
        session_length: matrix.session_length,
        ..sim.clone()
    };
    let coords = matrix.coordinates();
    let run = |&(c, p, s): &(ConditionName, ProfileKind, u64)| {
        let cfg = ConditionConfig::new(c, params);
        run_session(&cfg, &sim.profile(p), s, graph, params, &sim).map_err(|e| {
            HarnessError::Session {
                condition: c.to_string(),
                profile: p.to_string(),
                seed: s,
                source: Box::new(e),
            }
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let logs: Vec<SessionLog> =
        pool.install(|| coords.par_iter().map(run).collect::<Result<_, _>>())?;
    Ok(logs.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub profile: ProfileKind,
    pub sessions: usize,
    pub mean_demand: f64,
    pub delta_k: f64,
    pub n_mastered: f64,
    pub cum_reward: f64,
    pub inappropriate: f64,
    pub action_pct: [f64; NUM_ACTIONS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Option<ConditionName>,
    pub sessions: usize,
    /// Percentage of all steps per action, in enum order.
    pub action_pct: [f64; NUM_ACTIONS],
    pub mean_demand: f64,
    pub per_profile: Vec<ProfileSummary>,
    /// Cumulative scaled engagement over cumulative scaled mastery reward;
    /// `+inf` when the mastery total is not positive.
    pub eng_mastery_ratio: f64,
    /// Mean cumulative reward per session.
    pub cum_reward: f64,
}

fn profile_summary(profile: ProfileKind, logs: &[&SessionLog]) -> ProfileSummary {
    let n = logs.len() as f64;
    let steps: usize = logs.iter().map(|l| l.len()).sum();
    let mut counts = [0usize; NUM_ACTIONS];
    let mut demand = 0.0;
    for s in logs.iter().flat_map(|l| &l.steps) {
        counts[s.action.index()] += 1;
        demand += s.demand;
    }
    ProfileSummary {
        profile,
        sessions: logs.len(),
        mean_demand: demand / steps.max(1) as f64,
        delta_k: logs.iter().map(|l| l.summary.delta_k).sum::<f64>() / n,
        n_mastered: logs.iter().map(|l| l.summary.n_mastered as f64).sum::<f64>() / n,
        cum_reward: logs.iter().map(|l| l.summary.cum_reward).sum::<f64>() / n,
        inappropriate: logs
            .iter()
            .map(|l| l.steps.iter().filter(|s| !s.appropriate).count() as f64)
            .sum::<f64>()
            / n,
        action_pct: counts.map(|c| 100.0 * c as f64 / steps.max(1) as f64),
    }
}

pub fn summarize_condition<'a>(
    logs: impl IntoIterator<Item = &'a SessionLog>,
) -> Result<ConditionSummary, HarnessError> {
    let logs: Vec<&SessionLog> = logs.into_iter().collect();
    if logs.is_empty() {
        return Err(HarnessError::EmptyLogSet);
    }
    let condition = logs[0].header.condition;
    let condition = logs
        .iter()
        .all(|l| l.header.condition == condition)
        .then_some(condition);

    let all = profile_summary(logs[0].header.profile, &logs);
    let mut by_profile: BTreeMap<ProfileKind, Vec<&SessionLog>> = BTreeMap::new();
    for l in &logs {
        by_profile.entry(l.header.profile).or_default().push(l);
    }
    let e_cum: f64 = logs.iter().map(|l| l.summary.cum_r_eng).sum();
    let m_cum: f64 = logs.iter().map(|l| l.summary.cum_r_mas).sum();
    Ok(ConditionSummary {
        condition,
        sessions: logs.len(),
        action_pct: all.action_pct,
        mean_demand: all.mean_demand,
        per_profile: by_profile
            .into_iter()
            .map(|(p, ls)| profile_summary(p, &ls))
            .collect(),
        eng_mastery_ratio: if m_cum > 0.0 { e_cum / m_cum } else { f64::INFINITY },
        cum_reward: all.cum_reward,
    })
}

impl ConditionSummary {
    pub fn share(&self, action: Action) -> f64 {
        self.action_pct[action.index()]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "profile,sessions,mean_demand,delta_k,n_mastered,cum_reward,inappropriate,eng_mastery_ratio",
        );
        for a in Action::ALL {
            out.push_str(&format!(",pct_{}", a.name()));
        }
        out.push('\n');
        let row = |out: &mut String, label: &str, p: &ProfileSummary, ratio: String| {
            out.push_str(&format!(
                "{label},{},{:.6},{:.6},{:.4},{:.4},{:.4},{ratio}",
                p.sessions, p.mean_demand, p.delta_k, p.n_mastered, p.cum_reward, p.inappropriate
            ));
            for v in p.action_pct {
                out.push_str(&format!(",{v:.4}"));
            }
            out.push('\n');
        };
        for p in &self.per_profile {
            row(&mut out, p.profile.name(), p, String::new());
        }
        let total = ProfileSummary {
            profile: ProfileKind::Average,
            sessions: self.sessions,
            mean_demand: self.mean_demand,
            delta_k: mean(self.per_profile.iter().map(|p| (p.delta_k, p.sessions))),
            n_mastered: mean(self.per_profile.iter().map(|p| (p.n_mastered, p.sessions))),
            cum_reward: self.cum_reward,
            inappropriate: mean(self.per_profile.iter().map(|p| (p.inappropriate, p.sessions))),
            action_pct: self.action_pct,
        };
        let ratio = if self.eng_mastery_ratio.is_finite() {
            format!("{:.4}", self.eng_mastery_ratio)
        } else {
            "inf".to_string()
        };
        row(&mut out, "All", &total, ratio);
        out
    }
}

fn mean(items: impl Iterator<Item = (f64, usize)>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (v, k) in items {
        s += v * k as f64;
        n += k;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
