//! Welch two-sample tests, Cohen's d and Bonferroni families.

use serde::{Deserialize, Serialize};

use crate::error::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    BonferroniSig,
    UncorrectedSig,
    NotSig,
}

impl Verdict {
    pub fn marker(self) -> &'static str {
        match self {
            Verdict::BonferroniSig => "*",
            Verdict::UncorrectedSig => "†",
            Verdict::NotSig => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub cohens_d: f64,
    pub verdict: Verdict,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t test of `xs - ys`. The verdict is computed
/// for a family of one; use [`bonferroni`] to re-judge within a family.
pub fn welch_t(xs: &[f64], ys: &[f64]) -> Result<StatResult, StatsError> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(StatsError::TooFewObservations(xs.len(), ys.len()));
    }
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let (m1, v1) = mean_var(xs);
    let (m2, v2) = mean_var(ys);
    if v1 == 0.0 && v2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let (a, b) = (v1 / n1, v2 / n2);
    let se = (a + b).sqrt();
    let delta = m1 - m2;
    let t = delta / se;
    let df = (a + b) * (a + b) / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
    let p = two_tailed_p(t, df);
    let tcrit = t_quantile(0.975, df);
    let pooled = (((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0)).sqrt();
    Ok(StatResult {
        delta,
        ci_low: delta - tcrit * se,
        ci_high: delta + tcrit * se,
        t,
        df,
        p,
        cohens_d: delta / pooled,
        verdict: verdict(p, 1, 0.05),
    })
}

pub fn verdict(p: f64, family_size: usize, alpha: f64) -> Verdict {
    if p < alpha / family_size as f64 {
        Verdict::BonferroniSig
    } else if p < alpha {
        Verdict::UncorrectedSig
    } else {
        Verdict::NotSig
    }
}

pub fn bonferroni(
    p_values: &[f64],
    family_size: usize,
    alpha: f64,
) -> Result<Vec<Verdict>, StatsError> {
    if family_size == 0 {
        return Err(StatsError::EmptyFamily);
    }
    Ok(p_values
        .iter()
        .map(|&p| verdict(p, family_size, alpha))
        .collect())
}

pub fn bonferroni_threshold(family_size: usize, alpha: f64) -> f64 {
    alpha / family_size as f64
}

/// Two-tailed p-value of a t statistic with (possibly fractional) `df`.
pub fn two_tailed_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    reg_inc_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Student-t CDF.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * two_tailed_p(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse Student-t CDF by bisection; `q` in (0,1).
pub fn t_quantile(q: f64, df: f64) -> f64 {
    if q == 0.5 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while t_cdf(lo, df) > q {
        lo *= 2.0;
    }
    while t_cdf(hi, df) < q {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
