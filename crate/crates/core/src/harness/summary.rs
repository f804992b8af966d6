//! Per-baseline statistics over a set of trial ledgers.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::simulator::{Phase, RegretLedger};

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Pointwise median of the cumulative regret curves. Curves are truncated
/// to the shortest one.
pub fn median_regret_curve(ledgers: &[&RegretLedger]) -> Vec<f64> {
    let len = ledgers.iter().map(|l| l.records.len()).min().unwrap_or(0);
    (0..len)
        .map(|k| {
            let col: Vec<f64> = ledgers.iter().map(|l| l.records[k].cum_regret).collect();
            median(&col)
        })
        .collect()
}

/// Ordinary least squares slope of log y against log t.
pub fn loglog_slope(points: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(t, y)| t > 0.0 && y > 0.0 && y.is_finite())
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope of a curve indexed by t over t ∈ [from, to], skipping
/// nonpositive values.
pub fn curve_slope(curve: &[f64], from: usize, to: usize) -> Option<f64> {
    let to = to.min(curve.len().saturating_sub(1));
    loglog_slope((from.max(1)..=to).map(|t| (t as f64, curve[t])))
}

/// Bound on the number of policy updates, N₁ + N₂ + 1, from the logged log
/// determinants: N₁ = p₁·log₂(det V^{i*}_{T_c}/λ^{p₁}) on the exploration
/// estimator and N₂ = p₂·log₂(det V_T/det V_{T_c+1}) on the central one.
pub fn switch_bound(ledger: &RegretLedger, t_c: usize, p_explore: usize, p_central: usize, lambda: f64) -> Option<f64> {
    let at = |t: usize| ledger.records.iter().find(|r| r.t == t);
    let end = ledger.records.last()?;
    let ld_tc = at(t_c)?.log_det_v;
    let n1 = p_explore as f64 * (ld_tc - p_explore as f64 * lambda.ln()) / LN_2;
    let n2 = match at(t_c + 1) {
        Some(r) => p_central as f64 * (end.log_det_v - r.log_det_v) / LN_2,
        None => 0.0,
    };
    Some(n1.max(0.0) + n2.max(0.0) + 1.0)
}

pub fn max_state_norm(ledger: &RegretLedger, phase: Option<Phase>) -> f64 {
    ledger
        .records
        .iter()
        .filter(|r| phase.is_none_or(|p| r.phase == p))
        .map(|r| r.state_norm)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub failed: bool,
    pub error: Option<String>,
    pub steps: usize,
    pub max_state_norm_exploration: f64,
    pub max_state_norm: f64,
    pub final_regret: f64,
    pub switch_count: usize,
    pub switch_bound: Option<f64>,
    pub switch_bound_holds: bool,
    pub good_event_violations: usize,
    pub r0_empirical: f64,
    /// Θ* stayed inside the central confidence set at every step.
    pub central_containment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub baseline: String,
    pub mode_id: usize,
    pub mode: String,
    pub j_star: f64,
    pub trials: usize,
    pub failed_trials: usize,
    pub median_max_state_norm_exploration: f64,
    pub max_max_state_norm_exploration: f64,
    pub median_final_regret: f64,
    /// Log-log slope of the median regret curve over [T_c, horizon].
    pub regret_slope: Option<f64>,
    pub switch_counts: Vec<usize>,
    pub good_event_violations: Vec<usize>,
    pub r0_totals: Vec<f64>,
    pub per_trial: Vec<TrialSummary>,
    pub median_regret_curve: Vec<f64>,
}

/// One trial's outcome as seen by the summarizer.
pub struct TrialView<'a> {
    pub trial: usize,
    pub seed: u64,
    pub ledger: &'a RegretLedger,
    pub error: Option<&'a str>,
}

pub struct BaselineContext<'a> {
    pub baseline: &'a str,
    pub mode_id: usize,
    pub mode: String,
    pub exploration_steps: usize,
    pub horizon: usize,
    pub p_explore: usize,
    pub p_central: usize,
    pub lambda: f64,
}

pub fn summarize(ctx: &BaselineContext<'_>, trials: &[TrialView<'_>]) -> BaselineSummary {
    let per_trial: Vec<TrialSummary> = trials
        .iter()
        .map(|tv| {
            let l = tv.ledger;
            let bound = switch_bound(l, ctx.exploration_steps, ctx.p_explore, ctx.p_central, ctx.lambda);
            TrialSummary {
                trial: tv.trial,
                seed: tv.seed,
                failed: tv.error.is_some(),
                error: tv.error.map(str::to_owned),
                steps: l.records.len(),
                max_state_norm_exploration: max_state_norm(l, Some(Phase::Explore)),
                max_state_norm: max_state_norm(l, None),
                final_regret: l.final_regret(),
                switch_count: l.switch_count,
                switch_bound: bound,
                switch_bound_holds: bound.is_some_and(|b| l.switch_count as f64 <= b),
                good_event_violations: l.good_event_violations,
                r0_empirical: l.r0_empirical,
                central_containment: l.records.iter().all(|r| r.conf_ratio <= 1.0),
            }
        })
        .collect();
    let ok: Vec<&TrialView<'_>> = trials.iter().filter(|t| t.error.is_none()).collect();
    let ok_summaries: Vec<&TrialSummary> = per_trial.iter().filter(|t| !t.failed).collect();
    let explore_max: Vec<f64> = ok_summaries.iter().map(|t| t.max_state_norm_exploration).collect();
    let curve = median_regret_curve(&ok.iter().map(|t| t.ledger).collect::<Vec<_>>());
    BaselineSummary {
        baseline: ctx.baseline.to_owned(),
        mode_id: ctx.mode_id,
        mode: ctx.mode.clone(),
        j_star: trials.first().map_or(f64::NAN, |t| t.ledger.j_star),
        trials: trials.len(),
        failed_trials: trials.len() - ok.len(),
        median_max_state_norm_exploration: median(&explore_max),
        max_max_state_norm_exploration: explore_max.iter().copied().fold(f64::NAN, f64::max),
        median_final_regret: median(&ok_summaries.iter().map(|t| t.final_regret).collect::<Vec<_>>()),
        regret_slope: curve_slope(&curve, ctx.exploration_steps, ctx.horizon),
        switch_counts: per_trial.iter().map(|t| t.switch_count).collect(),
        good_event_violations: per_trial.iter().map(|t| t.good_event_violations).collect(),
        r0_totals: per_trial.iter().map(|t| t.r0_empirical).collect(),
        per_trial,
        median_regret_curve: curve,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_basics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn synthetic_slopes() {
        let sqrt = (1..=10_000).map(|t| (t as f64, 3.0 * (t as f64).sqrt()));
        assert!((loglog_slope(sqrt).unwrap() - 0.5).abs() < 1e-12);
        let lin = (1..=10_000).map(|t| (t as f64, 3.0 * t as f64));
        assert!((loglog_slope(lin).unwrap() - 1.0).abs() < 1e-12);
        let mut curve: Vec<f64> = (0..=100).map(|t| (t as f64).sqrt()).collect();
        curve[50] = -1.0;
        assert!((curve_slope(&curve, 10, 100).unwrap() - 0.5).abs() < 1e-12);
        assert!(loglog_slope([(1.0, 1.0)]).is_none());
    }
}
