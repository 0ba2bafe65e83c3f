//! Rows and summaries written by the commands.

use std::collections::BTreeMap;

use pica_core::policy_opt::{Arm, CurvePoint, EvalReport};
use pica_core::reward_model::{step_rewards, RewardModelError, RewardModelParams, RewardScaling};
use pica_core::trajectory::Dataset;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub seed: u64,
    pub step: usize,
    pub arm: Arm,
    pub success_rate: f64,
    pub f1: f64,
    pub mean_turns: f64,
    pub mean_reward: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

impl CurveRow {
    pub fn new(seed: u64, p: &CurvePoint) -> Self {
        Self {
            seed,
            step: p.step,
            arm: p.arm,
            success_rate: p.success_rate,
            f1: p.f1,
            mean_turns: p.mean_turns,
            mean_reward: p.mean_reward,
            kl: p.kl,
            clip_fraction: p.clip_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub seed: u64,
    pub arm: Arm,
    pub step: usize,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopRow {
    pub seed: u64,
    pub arm: Arm,
    pub step: usize,
    pub hops: usize,
    pub episodes: usize,
    pub em: f64,
    pub f1: f64,
    pub mean_turns: f64,
}

pub fn hop_rows(records: &[EvalRecord]) -> Vec<HopRow> {
    records
        .iter()
        .flat_map(|r| {
            r.report.per_hop.iter().map(move |h| HopRow {
                seed: r.seed,
                arm: r.arm,
                step: r.step,
                hops: h.hops,
                episodes: h.episodes,
                em: h.em,
                f1: h.f1,
                mean_turns: h.mean_turns,
            })
        })
        .collect()
}

/// Curves joined on `(seed, step)`, one column group per arm.
pub fn wide_curves(rows: &[CurveRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let arms: Vec<Arm> = Arm::ALL.into_iter().filter(|a| rows.iter().any(|r| r.arm == *a)).collect();
    let metrics = ["success_rate", "f1", "mean_turns", "mean_reward"];
    let mut header = vec!["seed".to_string(), "step".to_string()];
    for m in metrics {
        header.extend(arms.iter().map(|a| format!("{a}_{m}")));
    }
    let mut grid: BTreeMap<(u64, usize), BTreeMap<Arm, &CurveRow>> = BTreeMap::new();
    for r in rows {
        grid.entry((r.seed, r.step)).or_default().insert(r.arm, r);
    }
    let body = grid
        .into_iter()
        .map(|((seed, step), by_arm)| {
            let mut row = vec![seed.to_string(), step.to_string()];
            for m in metrics {
                for a in &arms {
                    row.push(by_arm.get(a).map_or(String::new(), |r| {
                        let v = match m {
                            "success_rate" => r.success_rate,
                            "f1" => r.f1,
                            "mean_turns" => r.mean_turns,
                            _ => r.mean_reward,
                        };
                        v.to_string()
                    }));
                }
            }
            row
        })
        .collect();
    (header, body)
}

/// One PiCA step reward on a labelled corpus turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub trajectory: usize,
    pub turn: usize,
    pub kind: String,
    pub pivot: Option<bool>,
    pub raw: f64,
    pub normalized: f64,
    pub deployed: f64,
}

pub fn step_rows(params: &RewardModelParams, dataset: &Dataset, scaling: &RewardScaling) -> Result<Vec<StepRow>, RewardModelError> {
    let mut rows = Vec::new();
    for (i, t) in dataset.trajectories.iter().enumerate() {
        let rewards = step_rewards(params, t, scaling)?;
        for (k, (r, z)) in rewards.iter().zip(t.pivot_by_turn()).enumerate() {
            rows.push(StepRow {
                trajectory: i,
                turn: k + 1,
                kind: if t.turns[k].is_answer() { "answer" } else { "search" }.into(),
                pivot: z,
                raw: r.raw,
                normalized: r.normalized,
                deployed: r.deployed,
            });
        }
    }
    Ok(rows)
}

/// Separation of pivot and non-pivot search turns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotStats {
    pub pivot_turns: usize,
    pub non_pivot_turns: usize,
    pub mean_normalized_pivot: f64,
    pub mean_normalized_non_pivot: f64,
    pub gap: f64,
    pub pivot_positive_deployed_fraction: f64,
}

pub fn pivot_stats(rows: &[StepRow]) -> PivotStats {
    let piv: Vec<&StepRow> = rows.iter().filter(|r| r.pivot == Some(true)).collect();
    let non: Vec<&StepRow> = rows.iter().filter(|r| r.pivot == Some(false)).collect();
    let mean = |v: &[&StepRow]| if v.is_empty() { 0.0 } else { v.iter().map(|r| r.normalized).sum::<f64>() / v.len() as f64 };
    let (mp, mn) = (mean(&piv), mean(&non));
    PivotStats {
        pivot_turns: piv.len(),
        non_pivot_turns: non.len(),
        mean_normalized_pivot: mp,
        mean_normalized_non_pivot: mn,
        gap: mp - mn,
        pivot_positive_deployed_fraction: if piv.is_empty() {
            0.0
        } else {
            piv.iter().filter(|r| r.deployed > 0.0).count() as f64 / piv.len() as f64
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub pivot: usize,
    pub non_pivot: usize,
    pub pivot_density: f64,
    pub non_pivot_density: f64,
}

/// Histogram of normalized rewards on `[0, 1]` for pivot and non-pivot search turns.
pub fn histogram(rows: &[StepRow], bins: usize) -> Vec<HistogramRow> {
    let bins = bins.max(1);
    let mut piv = vec![0usize; bins];
    let mut non = vec![0usize; bins];
    for r in rows {
        let b = ((r.normalized * bins as f64) as usize).min(bins - 1);
        match r.pivot {
            Some(true) => piv[b] += 1,
            Some(false) => non[b] += 1,
            None => {}
        }
    }
    let (tp, tn) = (piv.iter().sum::<usize>().max(1) as f64, non.iter().sum::<usize>().max(1) as f64);
    let width = 1.0 / bins as f64;
    (0..bins)
        .map(|b| HistogramRow {
            bin_lo: b as f64 / bins as f64,
            bin_hi: (b + 1) as f64 / bins as f64,
            pivot: piv[b],
            non_pivot: non[b],
            pivot_density: piv[b] as f64 / tp / width,
            non_pivot_density: non[b] as f64 / tn / width,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pivot: Option<bool>, normalized: f64, deployed: f64) -> StepRow {
        StepRow { trajectory: 0, turn: 1, kind: "search".into(), pivot, raw: 0.0, normalized, deployed }
    }

    #[test]
    fn histogram_counts_and_densities() {
        let rows = vec![row(Some(true), 0.95, 0.1), row(Some(true), 1.0, 0.1), row(Some(false), 0.1, -0.1), row(None, 0.5, 0.0)];
        let h = histogram(&rows, 10);
        assert_eq!(h.len(), 10);
        assert_eq!(h[9].pivot, 2);
        assert_eq!(h[1].non_pivot, 1);
        assert_eq!(h.iter().map(|r| r.pivot + r.non_pivot).sum::<usize>(), 3);
        let area: f64 = h.iter().map(|r| r.pivot_density * (r.bin_hi - r.bin_lo)).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pivot_stats_ignore_answer_turns() {
        let rows = vec![row(Some(true), 0.8, 0.1), row(Some(true), 0.6, -0.01), row(Some(false), 0.4, -0.1), row(None, 0.0, -1.0)];
        let s = pivot_stats(&rows);
        assert_eq!((s.pivot_turns, s.non_pivot_turns), (2, 1));
        assert!((s.gap - 0.3).abs() < 1e-12);
        assert_eq!(s.pivot_positive_deployed_fraction, 0.5);
    }

    #[test]
    fn wide_curves_share_the_step_grid() {
        let p = |arm, step, s| CurveRow {
            seed: 1,
            step,
            arm,
            success_rate: s,
            f1: s,
            mean_turns: 2.0,
            mean_reward: 0.0,
            kl: 0.0,
            clip_fraction: 0.0,
        };
        let rows = vec![p(Arm::Pica, 10, 0.9), p(Arm::Outcome, 10, 0.1), p(Arm::Pica, 20, 0.95), p(Arm::Outcome, 20, 0.2)];
        let (header, body) = wide_curves(&rows);
        assert_eq!(&header[..4], ["seed", "step", "outcome_success_rate", "pica_success_rate"]);
        assert_eq!(body.len(), 2);
        assert_eq!(body[1][..4], ["1", "20", "0.2", "0.95"]);
    }
}
