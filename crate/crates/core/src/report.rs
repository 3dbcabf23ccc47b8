//! CSV tables and static SVG figures of an evaluated batch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{
    comparisons, perturb_and_rescore, sensitivity_grid, Comparison, PerturbationRow,
    SensitivityCell, GRID_DELTA, GRID_W, PERTURBATION_SCALES, ST_GRID_CAVEAT,
};
use crate::error::HarnessError;
use crate::evaluate::{calibrated_params, evaluate, Evaluation, CALIBRATION_PERCENTILE};
use crate::graph::ConceptGraph;
use crate::io::atomic_write;
use crate::log::{ConditionName, LogSet};
use crate::pedagogy::DemandMap;
use crate::safety::ConstraintParams;

pub fn violations_csv(eval: &Evaluation) -> String {
    let mut out = String::from("condition,sessions,c2_windows,c3_windows,c4_steps,v2,v3,v4,norm\n");
    for c in &eval.conditions {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            c.condition,
            c.sessions,
            c.c2.total,
            c.c3.total,
            c.c4.total,
            c.v.v2,
            c.v.v3,
            c.v.v4,
            c.report.violation_norm
        );
    }
    out
}

pub fn rhsi_csv(eval: &Evaluation) -> String {
    let mut out = String::from(
        "condition,v2,v3,v4,norm,v_pi,v_star,ratio,rhsi,seed_rhsi_mean,seed_rhsi_sd\n",
    );
    for c in &eval.conditions {
        let r = &c.report;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.6},{:.6},{:.6},{:.6}",
            c.condition,
            c.v.v2,
            c.v.v3,
            c.v.v4,
            r.violation_norm,
            r.v_pi,
            r.v_star,
            r.ratio,
            r.rhsi,
            c.seed_rhsi_mean,
            c.seed_rhsi_sd
        );
    }
    out
}

pub fn stats_csv(rows: &[Comparison]) -> String {
    let mut out = String::from(
        "family,family_size,comparison,profile,delta,ci_low,ci_high,t,df,p,cohens_d,verdict\n",
    );
    for c in rows {
        let profile = c.profile.map_or("All", |p| p.name());
        let name = format!("{} vs {}", c.left, c.right);
        let _ = write!(
            out,
            "{},{},{name},{profile},{:.6},",
            c.family.name(),
            c.family.size(),
            c.delta
        );
        match &c.result {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "{:.6},{:.6},{:.4},{:.2},{:.3e},{:.4},{:?}",
                    r.ci_low, r.ci_high, r.t, r.df, r.p, r.cohens_d, r.verdict
                );
            }
            None => out.push_str(",,,,,,ZeroVariance\n"),
        }
    }
    out
}

pub fn sensitivity_csv(cells: &[SensitivityCell]) -> String {
    let conds: Vec<ConditionName> = cells
        .first()
        .map(|c| c.rhsi.iter().map(|(k, _)| *k).collect())
        .unwrap_or_default();
    let mut out = String::from("w,delta_min,eps_prog");
    for c in &conds {
        let _ = write!(out, ",rhsi_{c}");
    }
    out.push_str(",best,second,note\n");
    for cell in cells {
        let _ = write!(out, "{},{:.2},{:.6}", cell.w, cell.delta_min, cell.eps_prog);
        for c in &conds {
            let _ = write!(out, ",{:.6}", cell.rhsi_of(*c).unwrap_or(f64::NAN));
        }
        let note = if conds.contains(&ConditionName::ST) {
            ST_GRID_CAVEAT
        } else {
            ""
        };
        let _ = writeln!(out, ",{},{},{note}", cell.best, cell.second);
    }
    out
}

pub fn perturbation_csv(rows: &[PerturbationRow]) -> String {
    let mut out = String::from("scale,condition,rhsi,c3_rate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.1},{},{:.6},{:.6}",
            r.scale, r.condition, r.rhsi, r.c3_rate
        );
    }
    out
}

// Sequential white-to-red ramp.
fn heat(v: f64, max: f64) -> String {
    let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
    let g = (255.0 * (1.0 - 0.8 * t)).round() as u8;
    let r = (255.0 - 40.0 * t).round() as u8;
    format!("#{r:02x}{g:02x}{g:02x}")
}

/// One heatmap panel per condition over the (W, δ_min) grid.
pub fn heatmap_svg(cells: &[SensitivityCell]) -> String {
    let conds: Vec<ConditionName> = cells
        .first()
        .map(|c| c.rhsi.iter().map(|(k, _)| *k).collect())
        .unwrap_or_default();
    let ws: Vec<usize> = GRID_W.iter().copied().filter(|w| cells.iter().any(|c| c.w == *w)).collect();
    let ds: Vec<f64> = GRID_DELTA
        .iter()
        .copied()
        .filter(|d| cells.iter().any(|c| c.delta_min == *d))
        .collect();
    let max = cells
        .iter()
        .flat_map(|c| c.rhsi.iter().map(|(_, v)| *v))
        .fold(0.0, f64::max);
    let (cw, ch) = (56.0, 28.0);
    let panel_w = 60.0 + cw * ds.len() as f64 + 20.0;
    let panel_h = 50.0 + ch * ws.len() as f64 + 40.0;
    let width = panel_w * conds.len().max(1) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{panel_h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (pi, cond) in conds.iter().enumerate() {
        let x0 = pi as f64 * panel_w + 60.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-weight=\"bold\">{cond}</text>",
            x0 + cw * ds.len() as f64 / 2.0
        );
        for (j, d) in ds.iter().enumerate() {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"42\" text-anchor=\"middle\">{d:.2}</text>",
                x0 + cw * (j as f64 + 0.5)
            );
        }
        for (i, w) in ws.iter().enumerate() {
            let y = 50.0 + ch * i as f64;
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">W={w}</text>",
                x0 - 6.0,
                y + ch / 2.0 + 4.0
            );
            for (j, d) in ds.iter().enumerate() {
                let v = cells
                    .iter()
                    .find(|c| c.w == *w && c.delta_min == *d)
                    .and_then(|c| c.rhsi_of(*cond))
                    .unwrap_or(0.0);
                let x = x0 + cw * j as f64;
                let _ = writeln!(
                    s,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"{}\" stroke=\"#888\"/>\
                     <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{v:.3}</text>",
                    heat(v, max),
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0
                );
            }
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">δ_min</text>",
            x0 + cw * ds.len() as f64 / 2.0,
            panel_h - 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let r = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (r.floor() as usize, r.ceil() as usize);
    sorted[lo] + (r - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box plot of per-seed RHSI per condition: IQR box, median line, whiskers
/// to the furthest point within 1.5 IQR, outliers as dots.
pub fn boxplot_svg(eval: &Evaluation) -> String {
    let groups: Vec<(ConditionName, Vec<f64>)> = eval
        .conditions
        .iter()
        .map(|c| {
            let mut xs = eval.seed_rhsi(c.condition);
            xs.sort_by(f64::total_cmp);
            (c.condition, xs)
        })
        .filter(|(_, xs)| !xs.is_empty())
        .collect();
    let max = groups
        .iter()
        .flat_map(|(_, xs)| xs.last().copied())
        .fold(0.0, f64::max)
        .max(1e-9);
    let (left, top, plot_h, slot) = (50.0, 20.0, 260.0, 70.0);
    let width = left + slot * groups.len() as f64 + 20.0;
    let y = |v: f64| top + plot_h * (1.0 - v / max);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h + 40.0,
        top + plot_h
    );
    for k in 0..=4 {
        let v = max * k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.2}</text>",
            left - 4.0,
            y(v) + 4.0
        );
    }
    for (i, (cond, xs)) in groups.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let (q1, med, q3) = (quantile(xs, 0.25), quantile(xs, 0.5), quantile(xs, 0.75));
        let iqr = q3 - q1;
        let lo = xs.iter().copied().find(|&v| v >= q1 - 1.5 * iqr).unwrap_or(q1);
        let hi = xs.iter().rev().copied().find(|&v| v <= q3 + 1.5 * iqr).unwrap_or(q3);
        let _ = writeln!(
            s,
            "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"black\"/>\n\
             <rect x=\"{}\" y=\"{}\" width=\"40\" height=\"{}\" fill=\"#9ecae1\" stroke=\"black\"/>\n\
             <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"white\" stroke-width=\"2\"/>",
            y(hi),
            y(lo),
            cx - 20.0,
            y(q3),
            (y(q1) - y(q3)).max(0.5),
            cx - 20.0,
            y(med),
            cx + 20.0,
            y(med)
        );
        for &v in xs.iter().filter(|&&v| v < lo || v > hi) {
            let _ = writeln!(s, "<circle cx=\"{cx}\" cy=\"{}\" r=\"2.5\"/>", y(v));
        }
        let _ = writeln!(
            s,
            "<text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\">{cond}</text>",
            top + plot_h + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Everything `write_report` computes, for callers that want the numbers.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub evaluation: Evaluation,
    pub comparisons: Vec<Comparison>,
    pub sensitivity: Vec<SensitivityCell>,
    pub perturbation: Vec<PerturbationRow>,
}

pub fn build_report(
    logs: &LogSet,
    graph: &ConceptGraph,
    params: &ConstraintParams,
    demand: &DemandMap,
    calibrate: bool,
) -> Result<ReportBundle, HarnessError> {
    let params = if calibrate {
        calibrated_params(logs, graph, params, CALIBRATION_PERCENTILE)?
    } else {
        *params
    };
    let evaluation = evaluate(logs, graph, &params, None)?;
    let comparisons = comparisons(logs, &evaluation)?;
    let sensitivity = sensitivity_grid(logs, graph, &params, &GRID_W, &GRID_DELTA)?;
    let perturbation = perturb_and_rescore(logs, graph, &params, demand, &PERTURBATION_SCALES)?;
    Ok(ReportBundle {
        evaluation,
        comparisons,
        sensitivity,
        perturbation,
    })
}

/// Writes the full analysis bundle below `out`; returns the written paths.
pub fn write_report(bundle: &ReportBundle, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let files = [
        ("violations.csv", violations_csv(&bundle.evaluation)),
        ("rhsi.csv", rhsi_csv(&bundle.evaluation)),
        ("stats.csv", stats_csv(&bundle.comparisons)),
        ("sensitivity.csv", sensitivity_csv(&bundle.sensitivity)),
        ("perturbation.csv", perturbation_csv(&bundle.perturbation)),
        ("sensitivity_heatmap.svg", heatmap_svg(&bundle.sensitivity)),
        ("rhsi_boxplot.svg", boxplot_svg(&bundle.evaluation)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out.join(name);
        atomic_write(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
