//! Shared fixtures and naive reference implementations for the
//! integration tests. Nothing here calls into the evaluators under test.

#![allow(dead_code)]

use std::collections::HashMap;

use pedsafe::agent::ConstraintToggles;
use pedsafe::graph::{ConceptRecord, CurriculumDoc, Difficulty};
use pedsafe::log::{SessionHeader, SessionSummary, StepRecord};
use pedsafe::pedagogy::{ActionTable, RewardWeights};
use pedsafe::{Action, ConceptGraph, ConditionName, ConstraintParams, ProfileKind, SessionLog};
use rand::Rng;

/// A DAG whose node `j` may only depend on nodes `< j`.
pub fn dag_doc(edges: &[Vec<usize>]) -> CurriculumDoc {
    CurriculumDoc {
        name: "random".into(),
        description: String::new(),
        theta_min: None,
        concepts: edges
            .iter()
            .enumerate()
            .map(|(j, pre)| ConceptRecord {
                id: format!("n{j:02}"),
                name: format!("node {j}"),
                prerequisites: pre.iter().map(|i| format!("n{i:02}")).collect(),
                difficulty: Difficulty::Beginner,
                declared_depth: None,
            })
            .collect(),
    }
}

/// Accessible ids by scanning each record's prerequisite list.
pub fn naive_accessible(doc: &CurriculumDoc, mastery: &HashMap<String, f64>, theta: f64) -> Vec<String> {
    let mut out: Vec<String> = doc
        .concepts
        .iter()
        .filter(|c| c.prerequisites.iter().all(|p| mastery[p] >= theta))
        .map(|c| c.id.clone())
        .collect();
    out.sort();
    out
}

pub fn header(graph: &ConceptGraph, initial: Vec<f64>, params: ConstraintParams) -> SessionHeader {
    SessionHeader {
        condition: ConditionName::MAS,
        profile: ProfileKind::Average,
        seed: 0,
        session_length: 0,
        weights: RewardWeights::MASTERY_ONLY,
        toggles: ConstraintToggles::none(params.delta_min, params.window_w),
        params,
        concept_ids: graph.concepts().iter().map(|c| c.id.clone()).collect(),
        initial_mastery: initial,
    }
}

pub fn step(t: usize, concept: &str, action: Action, mastery_after: f64, r_eng: f64, r_mas: f64) -> StepRecord {
    StepRecord {
        t,
        concept: concept.to_string(),
        action,
        demand: ActionTable::default().demand(action),
        mastery_delta: 0.0,
        mastery_after,
        engagement_delta: 0.0,
        r_eng,
        r_mas,
        r_ped: 0.0,
        reward: r_eng + r_mas,
        accessible: true,
        appropriate: true,
    }
}

pub fn assemble(mut header: SessionHeader, steps: Vec<StepRecord>) -> SessionLog {
    header.session_length = steps.len();
    let summary = SessionSummary {
        delta_k: 0.0,
        n_mastered: 0,
        cum_r_eng: steps.iter().map(|s| s.r_eng).sum(),
        cum_r_mas: steps.iter().map(|s| s.r_mas).sum(),
        cum_r_ped: 0.0,
        cum_reward: steps.iter().map(|s| s.reward).sum(),
    };
    SessionLog {
        header,
        steps,
        summary,
    }
}

/// Random log over the bundled graph. Initial mastery straddles the
/// accessibility and mastery thresholds so active sets vary; steps touch
/// low-index concepts often so windows see real gains.
pub fn synthetic_log<R: Rng>(rng: &mut R, graph: &ConceptGraph, n: usize, params: ConstraintParams) -> SessionLog {
    let levels = [0.0, 0.2, 0.45, 0.5, 0.55, 0.69, 0.7, 0.9];
    let initial: Vec<f64> = (0..graph.len())
        .map(|_| {
            if rng.gen_bool(0.5) {
                levels[rng.gen_range(0..levels.len())]
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
        .collect();
    let mut k = initial.clone();
    let mut steps = Vec::with_capacity(n);
    for t in 0..n {
        let c = if rng.gen_bool(0.6) {
            rng.gen_range(0..6)
        } else {
            rng.gen_range(0..graph.len())
        };
        let action = Action::ALL[rng.gen_range(0..8)];
        let gain = match rng.gen_range(0..4) {
            0 => 0.0,
            1 => rng.gen_range(0.0..0.005),
            2 => rng.gen_range(0.0..0.05),
            _ => 0.003,
        };
        k[c] = (k[c] + gain).min(1.0);
        let r_eng = match rng.gen_range(0..3) {
            0 => 0.0,
            1 => 2.4,
            _ => rng.gen_range(-3.0..2.4),
        };
        let r_mas = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..1.5) };
        steps.push(step(t, &graph.concept(c).id, action, k[c], r_eng, r_mas));
    }
    assemble(header(graph, initial, params), steps)
}

/// (violations, counted windows) for the progress constraint, replaying
/// mastery from scratch for every window.
pub fn naive_c2(log: &SessionLog, graph: &ConceptGraph, p: &ConstraintParams) -> (usize, usize) {
    let ids: Vec<&str> = graph.concepts().iter().map(|c| c.id.as_str()).collect();
    let at = |t: usize| -> HashMap<&str, f64> {
        let mut m: HashMap<&str, f64> = ids
            .iter()
            .copied()
            .zip(log.header.initial_mastery.iter().copied())
            .collect();
        for s in &log.steps[..t] {
            m.insert(s.concept.as_str(), s.mastery_after);
        }
        m
    };
    let w = p.window_w;
    let (mut viol, mut total) = (0, 0);
    let mut start = 0;
    while start + w <= log.steps.len() {
        let k0 = at(start);
        let k1 = at(start + w);
        let mut gain = 0.0;
        let mut n = 0usize;
        for node in graph.concepts() {
            let open = node.prereq_ids.iter().all(|q| k0[q.as_str()] >= p.theta_min);
            if open && k0[node.id.as_str()] < p.theta_mastered {
                gain += k1[node.id.as_str()] - k0[node.id.as_str()];
                n += 1;
            }
        }
        if n > 0 {
            total += 1;
            if gain / (n as f64) < p.eps_prog {
                viol += 1;
            }
        }
        start += w;
    }
    (viol, total)
}

pub fn naive_c3(demands: &[f64], w: usize, delta: f64) -> (usize, usize) {
    let (mut viol, mut total) = (0, 0);
    for chunk in demands.chunks_exact(w) {
        total += 1;
        let mut s = 0.0;
        for d in chunk {
            s += d;
        }
        if s / (w as f64) < delta {
            viol += 1;
        }
    }
    (viol, total)
}

pub fn naive_c4(eng: &[f64], mas: &[f64], rho: f64, c0: f64, w0: usize) -> (usize, usize) {
    fn norm(xs: &[f64]) -> Vec<f64> {
        let mut lo = xs[0];
        let mut hi = xs[0];
        for &x in xs {
            if x < lo {
                lo = x;
            }
            if x > hi {
                hi = x;
            }
        }
        if hi == lo {
            return vec![0.0; xs.len()];
        }
        xs.iter().map(|x| (x - lo) / (hi - lo)).collect()
    }
    let (e, m) = (norm(eng), norm(mas));
    let (mut viol, mut total) = (0, 0);
    for t in w0..e.len() {
        let ec: f64 = e[..=t].iter().sum();
        let mc: f64 = m[..=t].iter().sum();
        total += 1;
        if ec > rho * mc + c0 {
            viol += 1;
        }
    }
    (viol, total)
}
