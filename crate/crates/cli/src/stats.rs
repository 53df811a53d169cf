//! Per-(algorithm, N) aggregates over seeds.

use crate::harness::TrialRow;

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn population_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Fraction of paired comparisons `a` wins (lower cost), ties count half.
pub fn paired_win_rate(a: &[f64], others: &[&[f64]]) -> Option<f64> {
    let mut score = 0.0;
    let mut count = 0usize;
    for b in others {
        for (x, y) in a.iter().zip(b.iter()) {
            count += 1;
            if x < y {
                score += 1.0;
            } else if x == y {
                score += 0.5;
            }
        }
    }
    (count > 0).then(|| score / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub experiment: String,
    /// Position in the algorithm list; tells apart an algorithm listed twice.
    pub slot: usize,
    pub algorithm: String,
    pub n_samples: usize,
    pub trials: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub mean_reward: f64,
    pub faults: usize,
    /// Against every other listed algorithm at the same N, paired by seed.
    pub win_rate: Option<f64>,
}

/// One aggregate per (slot, N), in first-appearance order.
pub fn aggregate(rows: &[TrialRow]) -> Vec<Aggregate> {
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for r in rows {
        if !groups.contains(&(r.slot, r.n_samples)) {
            groups.push((r.slot, r.n_samples));
        }
    }
    let select = |slot: usize, n: usize| -> Vec<&TrialRow> {
        let mut g: Vec<&TrialRow> = rows.iter().filter(|r| r.slot == slot && r.n_samples == n).collect();
        g.sort_by_key(|r| r.seed);
        g
    };
    groups
        .iter()
        .map(|&(slot, n)| {
            let g = select(slot, n);
            let costs: Vec<f64> = g.iter().map(|r| r.final_cost).collect();
            let steps: Vec<f64> = g.iter().map(|r| r.steps as f64).collect();
            let success: Vec<f64> = g.iter().map(|r| if r.success { 1.0 } else { 0.0 }).collect();
            let rewards: Vec<f64> = g.iter().map(|r| r.mean_reward).collect();
            let seeds: Vec<u64> = g.iter().map(|r| r.seed).collect();
            let others: Vec<Vec<f64>> = groups
                .iter()
                .filter(|&&(s, m)| s != slot && m == n)
                .filter_map(|&(s, m)| {
                    let o = select(s, m);
                    let paired = o.iter().map(|r| r.seed).eq(seeds.iter().copied());
                    paired.then(|| o.iter().map(|r| r.final_cost).collect())
                })
                .collect();
            let other_refs: Vec<&[f64]> = others.iter().map(|v| v.as_slice()).collect();
            Aggregate {
                experiment: g[0].experiment.clone(),
                slot,
                algorithm: g[0].algorithm.clone(),
                n_samples: n,
                trials: g.len(),
                mean_cost: mean(&costs),
                std_cost: population_std(&costs),
                success_rate: mean(&success),
                mean_steps: mean(&steps),
                std_steps: population_std(&steps),
                mean_reward: mean(&rewards),
                faults: g.iter().filter(|r| r.fault).count(),
                win_rate: paired_win_rate(&costs, &other_refs),
            }
        })
        .collect()
}
