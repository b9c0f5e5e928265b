use std::collections::HashMap;

use serde::Serialize;

use socnav::scenarios::ScenarioKind;

use crate::suite::Record;

/// Name of the quartile rule, echoed into the manifest.
pub const QUARTILE_METHOD: &str = "linear";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
}

/// Quantile of sorted data with linear interpolation between order
/// statistics at position (n − 1)·q.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

impl Stats {
    /// None for an empty sample.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Stats {
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q3: quantile(&v, 0.75),
        })
    }

    /// Table cell in "Q1 | Median | Mean | Q3" order. Quartiles get one
    /// decimal; the mean gets two unless it is large.
    pub fn format_row(&self) -> String {
        let mean = if self.mean.abs() < 100.0 {
            format!("{:.2}", self.mean)
        } else {
            format!("{:.1}", self.mean)
        };
        format!("{:.1} | {:.1} | {} | {:.1}", self.q1, self.median, mean, self.q3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub scenario: ScenarioKind,
    pub n_ped: usize,
    pub controller: String,
    pub episodes: usize,
    pub timeout_count: usize,
    /// Over episodes that reached the target; None if all timed out.
    pub steps: Option<Stats>,
    pub collisions: Stats,
    /// Per-episode 0/1 timeout indicator.
    pub timeouts: Stats,
    pub solver_failures: Stats,
}

/// Groups by (scenario, n_ped, controller) in order of first appearance.
pub fn aggregate(records: &[Record]) -> Vec<MetricsSummary> {
    let mut index: HashMap<(ScenarioKind, usize, &str), usize> = HashMap::new();
    let mut groups: Vec<Vec<&Record>> = Vec::new();
    for r in records {
        let i = *index.entry((r.scenario, r.n_ped, r.controller.as_str())).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[i].push(r);
    }
    groups
        .into_iter()
        .map(|g| {
            let col = |f: fn(&Record) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            let steps: Vec<f64> = g
                .iter()
                .filter(|r| !r.timeout)
                .filter_map(|r| r.steps_to_target.map(|s| s as f64))
                .collect();
            MetricsSummary {
                scenario: g[0].scenario,
                n_ped: g[0].n_ped,
                controller: g[0].controller.clone(),
                episodes: g.len(),
                timeout_count: g.iter().filter(|r| r.timeout).count(),
                steps: Stats::of(&steps),
                collisions: Stats::of(&col(|r| r.collisions as f64)).unwrap(),
                timeouts: Stats::of(&col(|r| r.timeout as u8 as f64)).unwrap(),
                solver_failures: Stats::of(&col(|r| r.solver_failures as f64)).unwrap(),
            }
        })
        .collect()
}
