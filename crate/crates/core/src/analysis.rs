//! Sensitivity grid, demand perturbation and the pairwise comparison
//! families built on per-seed scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, StatsError};
use crate::evaluate::{calibrated_params, evaluate, Evaluation, CALIBRATION_PERCENTILE};
use crate::graph::ConceptGraph;
use crate::log::{ConditionName, LogSet, SessionLog};
use crate::pedagogy::DemandMap;
use crate::safety::ConstraintParams;
use crate::stats::{verdict, welch_t, StatResult};
use crate::student::ProfileKind;

pub const GRID_W: [usize; 4] = [5, 10, 15, 20];
pub const GRID_DELTA: [f64; 5] = [0.30, 0.35, 0.40, 0.45, 0.50];
pub const PERTURBATION_SCALES: [f64; 3] = [0.8, 1.0, 1.2];

pub const ST_GRID_CAVEAT: &str =
    "re-scoring changes how the fixed ST trace is scored, not how the policy behaved";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub w: usize,
    pub delta_min: f64,
    pub eps_prog: f64,
    /// Mean per-seed RHSI, one entry per condition present in the logs.
    pub rhsi: Vec<(ConditionName, f64)>,
    pub best: ConditionName,
    pub second: ConditionName,
}

impl SensitivityCell {
    pub fn rhsi_of(&self, c: ConditionName) -> Option<f64> {
        self.rhsi.iter().find(|(k, _)| *k == c).map(|(_, v)| *v)
    }

    /// True when `c` beats every other condition in `among` strictly.
    pub fn strictly_highest(&self, c: ConditionName, among: &[ConditionName]) -> bool {
        let Some(mine) = self.rhsi_of(c) else {
            return false;
        };
        among
            .iter()
            .filter(|&&o| o != c)
            .all(|&o| self.rhsi_of(o).is_some_and(|v| mine > v))
    }
}

fn ranked(eval: &Evaluation, among: &[ConditionName]) -> Vec<(ConditionName, f64)> {
    eval.conditions
        .iter()
        .filter(|s| among.contains(&s.condition))
        .map(|s| (s.condition, s.seed_rhsi_mean))
        .collect()
}

fn best_two(rhsi: &[(ConditionName, f64)]) -> (ConditionName, ConditionName) {
    let mut order: Vec<_> = rhsi.to_vec();
    // highest RHSI first; enum order breaks ties
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let best = order[0].0;
    let second = order.get(1).map_or(best, |x| x.0);
    (best, second)
}

/// Re-scores every logged session at each (W, δ_min) cell, recalibrating
/// ε_prog from the MAS logs per W. Best/second rank the main conditions.
pub fn sensitivity_grid(
    logs: &LogSet,
    graph: &ConceptGraph,
    base: &ConstraintParams,
    w_values: &[usize],
    delta_values: &[f64],
) -> Result<Vec<SensitivityCell>, EvalError> {
    if logs.condition(ConditionName::MAS).next().is_none() {
        return Err(EvalError::MissingMasLogs);
    }
    let cells: Vec<(usize, f64)> = w_values
        .iter()
        .flat_map(|&w| delta_values.iter().map(move |&d| (w, d)))
        .collect();
    let present = logs.conditions();
    let main: Vec<ConditionName> = ConditionName::MAIN
        .into_iter()
        .filter(|c| present.contains(c))
        .collect();
    cells
        .par_iter()
        .map(|&(w, d)| {
            let at_w = ConstraintParams {
                window_w: w,
                delta_min: d,
                ..*base
            };
            let params = calibrated_params(logs, graph, &at_w, CALIBRATION_PERCENTILE)?;
            let eval = evaluate(logs, graph, &params, None)?;
            let (best, second) = best_two(&ranked(&eval, &main));
            Ok(SensitivityCell {
                w,
                delta_min: d,
                eps_prog: params.eps_prog,
                rhsi: ranked(&eval, &present),
                best,
                second,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub scale: f64,
    pub condition: ConditionName,
    pub rhsi: f64,
    pub c3_rate: f64,
}

/// Offline re-scoring with non-anchor demands multiplied by each scale.
pub fn perturb_and_rescore(
    logs: &LogSet,
    graph: &ConceptGraph,
    params: &ConstraintParams,
    base: &DemandMap,
    scales: &[f64],
) -> Result<Vec<PerturbationRow>, EvalError> {
    let evals: Vec<(f64, Evaluation)> = scales
        .par_iter()
        .map(|&s| {
            let map = base.scaled(s);
            evaluate(logs, graph, params, Some(&map)).map(|e| (s, e))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (scale, eval) in evals {
        for c in &eval.conditions {
            if ConditionName::MAIN.contains(&c.condition) {
                rows.push(PerturbationRow {
                    scale,
                    condition: c.condition,
                    rhsi: c.report.rhsi,
                    c3_rate: c.c3.rate(),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Rhsi,
    Ablation,
    Appropriateness,
    Inappropriate,
    MasteryGain,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Rhsi => "rhsi",
            Family::Ablation => "ablation",
            Family::Appropriateness => "appropriateness",
            Family::Inappropriate => "inappropriate_count",
            Family::MasteryGain => "delta_k",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Family::Rhsi => 6,
            Family::Ablation => 3,
            _ => 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub family: Family,
    pub left: ConditionName,
    pub right: ConditionName,
    pub profile: Option<ProfileKind>,
    /// `None` when both samples have zero variance.
    pub result: Option<StatResult>,
    /// Mean difference, also reported when the test is undefined.
    pub delta: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn compare(
    family: Family,
    left: ConditionName,
    right: ConditionName,
    profile: Option<ProfileKind>,
    xs: &[f64],
    ys: &[f64],
) -> Result<Comparison, StatsError> {
    let result = match welch_t(xs, ys) {
        Ok(mut r) => {
            r.verdict = verdict(r.p, family.size(), 0.05);
            Some(r)
        }
        Err(StatsError::ZeroVariance) => None,
        Err(e) => return Err(e),
    };
    Ok(Comparison {
        family,
        left,
        right,
        profile,
        result,
        delta: mean(xs) - mean(ys),
    })
}

pub fn appropriateness_rate(log: &SessionLog) -> f64 {
    let n = log.steps.len().max(1) as f64;
    log.steps.iter().filter(|s| s.appropriate).count() as f64 / n
}

pub fn inappropriate_count(log: &SessionLog) -> f64 {
    log.steps.iter().filter(|s| !s.appropriate).count() as f64
}

/// Every comparison family whose conditions are present. RHSI families use
/// per-seed RHSI pooled over profiles; behavioral families compare ST to
/// each other condition within a profile.
pub fn comparisons(logs: &LogSet, eval: &Evaluation) -> Result<Vec<Comparison>, StatsError> {
    use ConditionName::*;
    let present = logs.conditions();
    let has = |c: &ConditionName| present.contains(c);
    let mut out = Vec::new();

    let rhsi_pairs = [(ST, EO), (ST, MO), (ST, MAS), (MO, EO), (MAS, EO), (MO, MAS)];
    let ablation_pairs = [(ST, NoC1), (ST, NoC3), (NoC1, NoC3)];
    for (family, pairs) in [
        (Family::Rhsi, &rhsi_pairs[..]),
        (Family::Ablation, &ablation_pairs[..]),
    ] {
        for &(a, b) in pairs.iter().filter(|(a, b)| has(a) && has(b)) {
            out.push(compare(
                family,
                a,
                b,
                None,
                &eval.seed_rhsi(a),
                &eval.seed_rhsi(b),
            )?);
        }
    }

    let metrics: [(Family, fn(&SessionLog) -> f64); 3] = [
        (Family::Appropriateness, appropriateness_rate),
        (Family::Inappropriate, inappropriate_count),
        (Family::MasteryGain, |l| l.summary.delta_k),
    ];
    if has(&ST) {
        for (family, metric) in metrics {
            for other in [EO, MAS, MO, NoC1, NoC3].into_iter().filter(|c| has(c)) {
                for p in ProfileKind::ALL {
                    let sample = |c: ConditionName| -> Vec<f64> {
                        logs.condition(c)
                            .filter(|l| l.header.profile == p)
                            .map(metric)
                            .collect()
                    };
                    let (xs, ys) = (sample(ST), sample(other));
                    if xs.is_empty() || ys.is_empty() {
                        continue;
                    }
                    out.push(compare(family, ST, other, Some(p), &xs, &ys)?);
                }
            }
        }
    }
    Ok(out)
}
