//! Contextual-bandit tutor: state featurization, online constraint
//! filtering (prerequisite masking and demand floor) and per-arm ridge UCB.

use serde::{Deserialize, Serialize};

use crate::error::{AgentError, GraphError};
use crate::graph::ConceptGraph;
use crate::pedagogy::{Action, DemandMap, NUM_ACTIONS};
use crate::student::StudentState;

/// Feature dimension for a graph with `n` concepts: four per-concept blocks
/// plus recent-action shares and a last-action one-hot.
pub const fn feature_dim(n: usize) -> usize {
    4 * n + 2 * NUM_ACTIONS
}

/// Feature dimension on the bundled 27-concept curriculum.
pub const FEATURE_DIM: usize = feature_dim(27);

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Everything the agent remembers about the session so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub actions: Vec<Action>,
    pub demands: Vec<f64>,
    pub attempts: Vec<u32>,
}

impl History {
    pub fn new(num_concepts: usize) -> Self {
        Self {
            actions: Vec::new(),
            demands: Vec::new(),
            attempts: vec![0; num_concepts],
        }
    }

    pub fn record(&mut self, action: Action, concept: usize, demand: f64) {
        self.actions.push(action);
        self.demands.push(demand);
        self.attempts[concept] += 1;
    }

    pub fn recent_actions(&self, window: usize) -> &[Action] {
        &self.actions[self.actions.len().saturating_sub(window)..]
    }

    /// The last `window - 1` demands, i.e. the part of the next trailing
    /// window that is already fixed.
    pub fn recent_demands(&self, window: usize) -> &[f64] {
        let keep = window.saturating_sub(1);
        &self.demands[self.demands.len().saturating_sub(keep)..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureContext {
    pub theta_min: f64,
    pub theta_mastered: f64,
    pub window: usize,
    pub session_length: usize,
}

pub fn featurize(
    state: &StudentState,
    graph: &ConceptGraph,
    history: &History,
    ctx: &FeatureContext,
) -> Result<FeatureVector, GraphError> {
    let n = graph.len();
    let k = &state.knowledge;
    let accessible = graph.accessible_mask(k, ctx.theta_min)?;
    let mut values = Vec::with_capacity(feature_dim(n));

    values.extend_from_slice(&k.mastery);
    values.extend(accessible.iter().map(|&a| f64::from(u8::from(a))));
    values.extend(
        k.mastery
            .iter()
            .map(|&m| f64::from(u8::from(m >= ctx.theta_mastered))),
    );
    let norm = ctx.session_length.max(1) as f64;
    values.extend(history.attempts.iter().map(|&c| f64::from(c) / norm));

    let recent = history.recent_actions(ctx.window);
    let mut shares = [0.0; NUM_ACTIONS];
    for a in recent {
        shares[a.index()] += 1.0;
    }
    if !recent.is_empty() {
        for s in &mut shares {
            *s /= recent.len() as f64;
        }
    }
    values.extend_from_slice(&shares);

    let mut last = [0.0; NUM_ACTIONS];
    if let Some(a) = history.actions.last() {
        last[a.index()] = 1.0;
    }
    values.extend_from_slice(&last);

    debug_assert_eq!(values.len(), feature_dim(n));
    Ok(FeatureVector { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintToggles {
    pub c1_enabled: bool,
    pub c3_enabled: bool,
    pub delta_min: f64,
    pub window: usize,
}

impl ConstraintToggles {
    pub fn none(delta_min: f64, window: usize) -> Self {
        Self {
            c1_enabled: false,
            c3_enabled: false,
            delta_min,
            window: window.max(1),
        }
    }
}

/// Admissible actions, plus candidate concepts ordered by the frontier rule
/// (depth, then id order). Neither list is ever empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub actions: Vec<Action>,
    pub concepts: Vec<usize>,
}

pub fn candidate_pairs(
    state: &StudentState,
    graph: &ConceptGraph,
    toggles: &ConstraintToggles,
    theta_min: f64,
    theta_mastered: f64,
    recent_demands: &[f64],
    demand: &DemandMap,
) -> Result<Candidates, GraphError> {
    let k = &state.knowledge;
    let pool: Vec<usize> = if toggles.c1_enabled {
        graph.accessible_set(k, theta_min)?
    } else {
        graph.check_dimension(k)?;
        (0..graph.len()).collect()
    };
    let unmastered: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&c| k.mastery[c] < theta_mastered)
        .collect();
    let mut concepts = if unmastered.is_empty() { pool } else { unmastered };
    if concepts.is_empty() {
        // only reachable on an empty graph
        concepts = (0..graph.len()).collect();
    }
    concepts.sort_by_key(|&c| (graph.concept(c).depth, c));

    let actions = if toggles.c3_enabled {
        demand_floor_filter(recent_demands, toggles.delta_min, demand)
    } else {
        Action::ALL.to_vec()
    };
    Ok(Candidates { actions, concepts })
}

/// Actions whose demand keeps the projected trailing-window mean at or
/// above `delta_min`; falls back to the maximal-demand actions when none do.
pub fn demand_floor_filter(recent: &[f64], delta_min: f64, demand: &DemandMap) -> Vec<Action> {
    let len = (recent.len() + 1) as f64;
    let passing: Vec<Action> = Action::ALL
        .into_iter()
        .filter(|&a| {
            let sum: f64 = recent.iter().copied().chain([demand.get(a)]).sum();
            sum / len >= delta_min
        })
        .collect();
    if !passing.is_empty() {
        return passing;
    }
    let top = Action::ALL
        .into_iter()
        .map(|a| demand.get(a))
        .fold(f64::NEG_INFINITY, f64::max);
    Action::ALL
        .into_iter()
        .filter(|&a| demand.get(a) == top)
        .collect()
}

/// Ridge-regression sufficient statistics for one arm. `a_inv` tracks the
/// inverse of `a` through Sherman-Morrison updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeArm {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_inv: Vec<f64>,
    pub pulls: u64,
}

impl RidgeArm {
    fn new(dim: usize, lambda: f64) -> Self {
        let mut a = vec![0.0; dim * dim];
        let mut a_inv = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = lambda;
            a_inv[i * dim + i] = 1.0 / lambda;
        }
        Self {
            a,
            b: vec![0.0; dim],
            a_inv,
            pulls: 0,
        }
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn inv_times(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                let row = &self.a_inv[i * d..(i + 1) * d];
                row.iter().zip(x).map(|(r, v)| r * v).sum()
            })
            .collect()
    }

    /// Point estimate and confidence width at `x`.
    pub fn estimate(&self, x: &[f64]) -> (f64, f64) {
        let ax = self.inv_times(x);
        let mean = ax.iter().zip(&self.b).map(|(p, q)| p * q).sum();
        let var: f64 = ax.iter().zip(x).map(|(p, q)| p * q).sum();
        (mean, var.max(0.0).sqrt())
    }

    fn add(&mut self, x: &[f64], reward: f64, weight: f64) {
        let d = self.dim();
        for i in 0..d {
            let wx = weight * x[i];
            if wx != 0.0 {
                let row = &mut self.a[i * d..(i + 1) * d];
                for (cell, xj) in row.iter_mut().zip(x) {
                    *cell += wx * xj;
                }
            }
            self.b[i] += weight * reward * x[i];
        }
        let ax = self.inv_times(x);
        let denom = 1.0 + weight * ax.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let scale = weight / denom;
        for i in 0..d {
            let si = scale * ax[i];
            if si != 0.0 {
                let row = &mut self.a_inv[i * d..(i + 1) * d];
                for (cell, aj) in row.iter_mut().zip(&ax) {
                    *cell -= si * aj;
                }
            }
        }
        self.pulls += 1;
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Linear UCB over the eight action types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditModel {
    pub version: u32,
    pub alpha: f64,
    pub lambda: f64,
    pub arms: Vec<RidgeArm>,
}

impl BanditModel {
    pub fn new(dim: usize, alpha: f64, lambda: f64) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            alpha,
            lambda,
            arms: (0..NUM_ACTIONS).map(|_| RidgeArm::new(dim, lambda)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.arms[0].dim()
    }

    pub fn arm(&self, action: Action) -> &RidgeArm {
        &self.arms[action.index()]
    }

    fn check_dim(&self, features: &FeatureVector) -> Result<(), AgentError> {
        if features.len() != self.dim() {
            return Err(AgentError::FeatureDimension {
                expected: self.dim(),
                got: features.len(),
            });
        }
        Ok(())
    }

    pub fn ucb(&self, action: Action, features: &FeatureVector) -> f64 {
        let (mean, width) = self.arm(action).estimate(&features.values);
        mean + self.alpha * width
    }

    /// Picks the action with the highest upper confidence bound among the
    /// candidates, and the frontier concept. Untried arms go first; ties
    /// resolve to the earliest action in enum order.
    pub fn select(
        &self,
        features: &FeatureVector,
        candidates: &Candidates,
    ) -> Result<(Action, usize), AgentError> {
        self.check_dim(features)?;
        let concept = *candidates
            .concepts
            .first()
            .ok_or(AgentError::EmptyCandidates)?;
        let mut actions = candidates.actions.clone();
        actions.sort();
        actions.dedup();
        if actions.is_empty() {
            return Err(AgentError::EmptyCandidates);
        }
        if let Some(&fresh) = actions.iter().find(|&&a| self.arm(a).pulls == 0) {
            return Ok((fresh, concept));
        }
        let mut best = actions[0];
        let mut best_score = self.ucb(best, features);
        for &a in &actions[1..] {
            let score = self.ucb(a, features);
            if score > best_score {
                best = a;
                best_score = score;
            }
        }
        Ok((best, concept))
    }

    pub fn update(
        &mut self,
        features: &FeatureVector,
        action: Action,
        reward: f64,
    ) -> Result<(), AgentError> {
        self.update_weighted(features, action, reward, 1.0)
    }

    /// Adds `weight` copies of the observation to the action's statistics.
    pub fn update_weighted(
        &mut self,
        features: &FeatureVector,
        action: Action,
        reward: f64,
        weight: f64,
    ) -> Result<(), AgentError> {
        if !reward.is_finite() {
            return Err(AgentError::NonFiniteReward(reward));
        }
        self.check_dim(features)?;
        self.arms[action.index()].add(&features.values, reward, weight);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pedagogy::ActionTable;
    use crate::student::{Dynamics, LearnerProfile, ProfileKind};

    fn ctx() -> FeatureContext {
        FeatureContext {
            theta_min: 0.5,
            theta_mastered: 0.7,
            window: 10,
            session_length: 150,
        }
    }

    fn student(kind: ProfileKind) -> (ConceptGraph, StudentState) {
        let g = ConceptGraph::python27();
        let s = StudentState::new(LearnerProfile::bundled(kind), &g, 3, &Dynamics::default());
        (g, s)
    }

    #[test]
    fn fresh_features() {
        let (g, s) = student(ProfileKind::Average);
        let f = featurize(&s, &g, &History::new(27), &ctx()).unwrap();
        assert_eq!(f.len(), FEATURE_DIM);
        assert_eq!(FEATURE_DIM, 124);
        for &m in &f.values[..27] {
            assert!((m - 0.15).abs() <= 0.05);
        }
        let c01 = g.index_of("c01").unwrap();
        for i in 0..27 {
            assert_eq!(f.values[27 + i], if i == c01 { 1.0 } else { 0.0 });
        }
        assert!(f.values[108..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_history_features() {
        let (g, s) = student(ProfileKind::Average);
        let mut h = History::new(27);
        for _ in 0..10 {
            h.record(Action::Encourage, 0, 0.0);
        }
        let f = featurize(&s, &g, &h, &ctx()).unwrap();
        assert_eq!(&f.values[108..116], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.values[116], 1.0);
        assert!((f.values[81] - 10.0 / 150.0).abs() < 1e-15);
        assert!(f.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn prerequisite_mask_on_novice() {
        let (g, mut s) = student(ProfileKind::Struggling);
        s.knowledge.mastery.iter_mut().for_each(|m| *m = 0.0);
        let toggles = ConstraintToggles {
            c1_enabled: true,
            c3_enabled: false,
            delta_min: 0.4,
            window: 10,
        };
        let dm = ActionTable::default().demand_map();
        let c = candidate_pairs(&s, &g, &toggles, 0.5, 0.7, &[], &dm).unwrap();
        assert_eq!(c.concepts, vec![g.index_of("c01").unwrap()]);
        assert_eq!(c.actions.len(), 8);

        let open = ConstraintToggles { c1_enabled: false, ..toggles };
        let c = candidate_pairs(&s, &g, &open, 0.5, 0.7, &[], &dm).unwrap();
        assert_eq!(c.concepts.len(), 27);
        assert_eq!(c.concepts[0], g.index_of("c01").unwrap());
    }

    #[test]
    fn demand_floor_examples() {
        let dm = ActionTable::default().demand_map();
        assert_eq!(demand_floor_filter(&[1.0; 9], 0.4, &dm), Action::ALL.to_vec());
        assert_eq!(demand_floor_filter(&[0.0; 9], 0.4, &dm), vec![Action::Challenge]);
        // 9 x 0.4 history: anything with d >= 0.4 keeps the mean at 0.4
        let got = demand_floor_filter(&[0.4; 9], 0.4, &dm);
        assert!(got.iter().all(|&a| dm.get(a) >= 0.4));
        // empty history: the action alone must reach the floor
        assert_eq!(
            demand_floor_filter(&[], 0.4, &dm),
            vec![
                Action::ExplainDetailed,
                Action::ProvideExample,
                Action::AssessKnowledge,
                Action::AssignExercise,
                Action::Challenge
            ]
        );
    }

    #[test]
    fn untrained_ties_break_by_enum_order() {
        let m = BanditModel::new(4, 1.0, 1.0);
        let x = FeatureVector { values: vec![1.0, 0.0, 0.5, 0.0] };
        let c = Candidates {
            actions: vec![Action::Challenge, Action::ProvideHint, Action::ExplainSimple],
            concepts: vec![2, 0],
        };
        assert_eq!(m.select(&x, &c).unwrap(), (Action::ExplainSimple, 2));
    }

    #[test]
    fn singleton_candidates() {
        let m = BanditModel::new(3, 1.0, 1.0);
        let x = FeatureVector { values: vec![1.0, 0.0, 0.0] };
        let c = Candidates {
            actions: vec![Action::AssessKnowledge],
            concepts: vec![5],
        };
        assert_eq!(m.select(&x, &c).unwrap(), (Action::AssessKnowledge, 5));
        let empty = Candidates { actions: vec![], concepts: vec![5] };
        assert!(matches!(m.select(&x, &empty), Err(AgentError::EmptyCandidates)));
    }

    #[test]
    fn greedy_dominance_after_training() {
        let (g, s) = student(ProfileKind::Average);
        let f = featurize(&s, &g, &History::new(27), &ctx()).unwrap();
        let mut m = BanditModel::new(FEATURE_DIM, 1.0, 1.0);
        for i in 0..1000 {
            let a = Action::ALL[i % NUM_ACTIONS];
            let r = if a == Action::Encourage { 2.4 } else { 0.0 };
            m.update(&f, a, r).unwrap();
        }
        let all = Candidates { actions: Action::ALL.to_vec(), concepts: vec![0] };
        assert_eq!(m.select(&f, &all).unwrap().0, Action::Encourage);
        let some = Candidates {
            actions: vec![Action::Challenge, Action::Encourage],
            concepts: vec![0],
        };
        assert_eq!(m.select(&f, &some).unwrap().0, Action::Encourage);
    }

    #[test]
    fn update_moves_estimate_toward_reward() {
        let mut m = BanditModel::new(3, 1.0, 1.0);
        let x = FeatureVector { values: vec![1.0, 0.5, 0.0] };
        let (before, _) = m.arm(Action::ProvideHint).estimate(&x.values);
        m.update(&x, Action::ProvideHint, 2.0).unwrap();
        let (after, _) = m.arm(Action::ProvideHint).estimate(&x.values);
        assert!(after > before && after < 2.0);
        assert_eq!(m.arm(Action::Encourage), &RidgeArm::new(3, 1.0));
    }

    #[test]
    fn sufficient_statistics_are_additive() {
        let x = FeatureVector { values: vec![0.3, 1.0, 0.25, 0.0, 0.7] };
        let mut twice = BanditModel::new(5, 1.0, 1.0);
        twice.update(&x, Action::Challenge, 1.5).unwrap();
        twice.update(&x, Action::Challenge, 1.5).unwrap();
        let mut doubled = BanditModel::new(5, 1.0, 1.0);
        doubled.update_weighted(&x, Action::Challenge, 1.5, 2.0).unwrap();
        let (p, q) = (twice.arm(Action::Challenge), doubled.arm(Action::Challenge));
        for (u, v) in p.a.iter().zip(&q.a).chain(p.b.iter().zip(&q.b)).chain(p.a_inv.iter().zip(&q.a_inv)) {
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
    }

    #[test]
    fn inverse_tracks_accumulator() {
        let mut m = BanditModel::new(4, 1.0, 1.0);
        let xs = [[1.0, 0.2, 0.0, 0.5], [0.0, 1.0, 0.3, 0.1], [1.0, 1.0, 1.0, 0.0]];
        for (i, x) in xs.iter().cycle().take(30).enumerate() {
            m.update(&FeatureVector { values: x.to_vec() }, Action::Encourage, i as f64).unwrap();
        }
        let arm = m.arm(Action::Encourage);
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| arm.a[i * 4 + k] * arm.a_inv[k * 4 + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_nan_reward() {
        let mut m = BanditModel::new(2, 1.0, 1.0);
        let x = FeatureVector { values: vec![1.0, 0.0] };
        assert!(matches!(
            m.update(&x, Action::Encourage, f64::NAN),
            Err(AgentError::NonFiniteReward(_))
        ));
        assert_eq!(m.arm(Action::Encourage).pulls, 0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = BanditModel::new(3, 0.5, 2.0);
        m.update(&FeatureVector { values: vec![1.0, 0.25, 0.5] }, Action::Challenge, 0.75).unwrap();
        assert_eq!(BanditModel::from_json(&m.to_json()).unwrap(), m);
    }
}
