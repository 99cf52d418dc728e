//! Full-ranking evaluation.

use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ForwardOptions, Model, PADDING_ID};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankResult {
    pub user: usize,
    /// 1-based rank of the target among all non-padding items.
    pub rank: usize,
}

/// `1 + #{j ≠ target : logits[j] ≥ logits[target]}`. Ties count against
/// the target. NaN logits are treated as ranking above it.
pub fn rank_of_target<T: Real>(logits: &[T], target: usize) -> Result<usize> {
    if target == PADDING_ID || target >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "target {target} is padding or out of range for {} logits",
            logits.len()
        )));
    }
    let t = logits[target];
    let above = logits
        .iter()
        .enumerate()
        .filter(|&(j, &v)| j != target && !(v < t))
        .count();
    Ok(1 + above)
}

pub fn ndcg_gain(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// `(HR@K, NDCG@K)` averaged over `ranks`, summed in input order.
pub fn hr_ndcg(ranks: &[usize], k: usize) -> (f64, f64) {
    if ranks.is_empty() {
        return (0.0, 0.0);
    }
    let n = ranks.len() as f64;
    let hits = ranks.iter().filter(|&&r| r <= k).count() as f64;
    let gain: f64 = ranks.iter().map(|&r| ndcg_gain(r, k)).sum();
    (hits / n, gain / n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "HR@10")]
    pub hr10: f64,
    #[serde(rename = "HR@20")]
    pub hr20: f64,
    #[serde(rename = "NDCG@10")]
    pub ndcg10: f64,
    #[serde(rename = "NDCG@20")]
    pub ndcg20: f64,
    pub users: usize,
}

impl MetricReport {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        let (hr10, ndcg10) = hr_ndcg(ranks, 10);
        let (hr20, ndcg20) = hr_ndcg(ranks, 20);
        MetricReport {
            hr10,
            hr20,
            ndcg10,
            ndcg20,
            users: ranks.len(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes") + "\n"
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions<T: Real> {
    pub forward: ForwardOptions<T>,
    /// Exclude items already in the input (other than the target) from the
    /// ranking.
    pub mask_history: bool,
    pub exec: Execution,
}

impl<T: Real> Default for EvalOptions<T> {
    fn default() -> Self {
        EvalOptions {
            forward: ForwardOptions::eval(),
            mask_history: false,
            exec: Execution::default(),
        }
    }
}

/// Ranks of every instance's target, in instance order.
pub fn rank_instances<T: Real>(
    model: &Model<T>,
    instances: &[Instance],
    opts: &EvalOptions<T>,
) -> Result<Vec<RankResult>> {
    let per = opts.exec.map(instances, |inst| -> Result<RankResult> {
        let mut logits = model.forward_with(&inst.input, &opts.forward)?;
        if opts.mask_history {
            for &i in &inst.input {
                if i != inst.target {
                    logits[i] = T::neg_infinity();
                }
            }
        }
        Ok(RankResult {
            user: inst.user,
            rank: rank_of_target(&logits, inst.target)?,
        })
    });
    per.into_iter().collect()
}

pub fn evaluate<T: Real>(model: &Model<T>, instances: &[Instance], opts: &EvalOptions<T>) -> Result<MetricReport> {
    let ranks: Vec<usize> = rank_instances(model, instances, opts)?.iter().map(|r| r.rank).collect();
    Ok(MetricReport::from_ranks(&ranks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_of_target(&[f32::NEG_INFINITY, 1.0, 5.0, 2.0], 2).unwrap(), 1);
        let mut flat = vec![0.0f32; 101];
        flat[0] = f32::NEG_INFINITY;
        assert_eq!(rank_of_target(&flat, 7).unwrap(), 100);
        assert_eq!(rank_of_target(&[5.0f64, 3.0, 9.0, 3.0], 1).unwrap(), 4);
        assert!(rank_of_target(&[1.0f32, 2.0], 0).is_err());
        assert!(rank_of_target(&[1.0f32, 2.0], 2).is_err());
    }

    #[test]
    fn gain_examples() {
        assert_eq!(ndcg_gain(1, 10), 1.0);
        assert!((ndcg_gain(5, 10) - 0.386_852_807_234_541_6).abs() < 1e-12);
        assert_eq!(ndcg_gain(11, 10), 0.0);
        assert_eq!(hr_ndcg(&[11], 10), (0.0, 0.0));
    }

    #[test]
    fn report_json_keys() {
        let r = MetricReport::from_ranks(&[1, 15, 30]);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["HR@10", "HR@20", "NDCG@10", "NDCG@20", "users"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["users"], 3);
        assert!((r.hr20 - 2.0 / 3.0).abs() < 1e-12);
    }
}
