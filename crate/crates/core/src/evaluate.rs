//! Batch scoring: per-session and per-condition violation rates, weighted
//! norms and severity indices over a [`LogSet`].

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::graph::ConceptGraph;
use crate::log::{ConditionName, LogSet, SessionKey, SessionLog};
use crate::pedagogy::DemandMap;
use crate::safety::{
    c2_count, c3_count, c4_count, calibrate_eps_prog, rhsi, violation_norm, ConstraintParams,
    RateCount, RhsiReport, ViolationVector,
};

pub const CALIBRATION_PERCENTILE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub condition: ConditionName,
    pub profile: crate::student::ProfileKind,
    pub seed: u64,
    pub c2: RateCount,
    pub c3: RateCount,
    pub c4: RateCount,
    pub v: ViolationVector,
    pub norm: f64,
    pub cum_reward: f64,
    /// Session reward over the batch reference, times the session norm.
    pub rhsi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionScore {
    pub condition: ConditionName,
    pub sessions: usize,
    pub c2: RateCount,
    pub c3: RateCount,
    pub c4: RateCount,
    pub v: ViolationVector,
    pub report: RhsiReport,
    pub seed_rhsi_mean: f64,
    pub seed_rhsi_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: ConstraintParams,
    pub v_star: f64,
    pub sessions: Vec<SessionScore>,
    pub conditions: Vec<ConditionScore>,
}

impl Evaluation {
    pub fn condition(&self, c: ConditionName) -> Option<&ConditionScore> {
        self.conditions.iter().find(|s| s.condition == c)
    }

    pub fn seed_rhsi(&self, c: ConditionName) -> Vec<f64> {
        self.sessions
            .iter()
            .filter(|s| s.condition == c)
            .map(|s| s.rhsi)
            .collect()
    }
}

fn key_score(key: &SessionKey) -> (ConditionName, crate::student::ProfileKind, u64) {
    (key.condition, key.profile, key.seed)
}

/// Copy of `params` with `eps_prog` calibrated from the batch's MAS logs at
/// the params' window length.
pub fn calibrated_params(
    logs: &LogSet,
    graph: &ConceptGraph,
    params: &ConstraintParams,
    pct: f64,
) -> Result<ConstraintParams, EvalError> {
    let mut mas = logs.condition(ConditionName::MAS).peekable();
    if mas.peek().is_none() {
        return Err(EvalError::MissingMasLogs);
    }
    let eps = calibrate_eps_prog(mas, graph, params, pct)?;
    Ok(ConstraintParams {
        eps_prog: eps,
        ..*params
    })
}

fn score_session(
    log: &SessionLog,
    graph: &ConceptGraph,
    params: &ConstraintParams,
    demand: Option<&DemandMap>,
) -> Result<SessionScore, EvalError> {
    let c2 = c2_count(log, graph, params)?;
    let c3 = c3_count(log, params, demand)?;
    let c4 = c4_count(log, params)?;
    let v = ViolationVector::new(c2.rate(), c3.rate(), c4.rate());
    let (condition, profile, seed) = key_score(&log.key());
    Ok(SessionScore {
        condition,
        profile,
        seed,
        c2,
        c3,
        c4,
        v,
        norm: violation_norm(&v, &params.weights),
        cum_reward: log.steps.iter().map(|s| s.reward).sum(),
        rhsi: 0.0,
    })
}

/// Scores every session and condition of `logs` under `params`. `demand`
/// re-scores the demand floor through an alternative demand map; reward
/// streams are always taken as logged.
pub fn evaluate(
    logs: &LogSet,
    graph: &ConceptGraph,
    params: &ConstraintParams,
    demand: Option<&DemandMap>,
) -> Result<Evaluation, EvalError> {
    let mut sessions = logs
        .iter()
        .map(|l| score_session(l, graph, params, demand))
        .collect::<Result<Vec<_>, _>>()?;

    let conditions = logs.conditions();
    let mean_rewards: Vec<f64> = conditions
        .iter()
        .map(|&c| {
            let rs: Vec<f64> = sessions
                .iter()
                .filter(|s| s.condition == c)
                .map(|s| s.cum_reward)
                .collect();
            rs.iter().sum::<f64>() / rs.len() as f64
        })
        .collect();
    let v_star = mean_rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(v_star > 0.0) {
        return Err(EvalError::NonPositiveReference(v_star));
    }
    for s in &mut sessions {
        s.rhsi = s.cum_reward / v_star * s.norm;
    }

    let mut scores = Vec::with_capacity(conditions.len());
    for (c, v_pi) in conditions.into_iter().zip(mean_rewards) {
        let mine: Vec<&SessionScore> = sessions.iter().filter(|s| s.condition == c).collect();
        let pooled = |f: fn(&SessionScore) -> RateCount| {
            mine.iter().fold(RateCount::default(), |acc, s| acc.merge(f(s)))
        };
        let (c2, c3, c4) = (pooled(|s| s.c2), pooled(|s| s.c3), pooled(|s| s.c4));
        let v = ViolationVector::new(c2.rate(), c3.rate(), c4.rate());
        let report = rhsi(v_pi, v_star, violation_norm(&v, &params.weights))?;
        let seeds: Vec<f64> = mine.iter().map(|s| s.rhsi).collect();
        let (m, sd) = mean_sd(&seeds);
        scores.push(ConditionScore {
            condition: c,
            sessions: mine.len(),
            c2,
            c3,
            c4,
            v,
            report,
            seed_rhsi_mean: m,
            seed_rhsi_sd: sd,
        });
    }
    Ok(Evaluation {
        params: *params,
        v_star,
        sessions,
        conditions: scores,
    })
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
