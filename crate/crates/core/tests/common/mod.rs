//! Reference implementations used as test oracles. Everything here is the
//! slow, obvious version of a library routine, written independently of it.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wearec::data::Instance;
use wearec::data::Split;
use wearec::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Full two-sided DFT of one real signal, `X_k = Σ x_m e^{-2πi mk/n}`.
pub fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (m, &v)| {
                let ang = -2.0 * PI * (m * k) as f64 / n as f64;
                (re + v * ang.cos(), im + v * ang.sin())
            })
        })
        .collect()
}

/// Inverse DFT of a two-sided spectrum, real part.
pub fn idft_real(spec: &[(f64, f64)]) -> Vec<f64> {
    let n = spec.len();
    (0..n)
        .map(|m| {
            spec.iter().enumerate().fold(0.0, |acc, (k, &(re, im))| {
                let ang = 2.0 * PI * (m * k) as f64 / n as f64;
                acc + re * ang.cos() - im * ang.sin()
            }) / n as f64
        })
        .collect()
}

/// `Σ_j h[j] x[(m − j) mod n]`
pub fn circular_conv(h: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for (m, o) in out.iter_mut().enumerate() {
        for j in 0..n {
            let idx = (m as isize - j as isize).rem_euclid(n as isize) as usize;
            *o += h[j] * x[idx];
        }
    }
    out
}

pub fn column(m: &Matrix<f64>, c: usize) -> Vec<f64> {
    (0..m.rows()).map(|r| m.get(r, c)).collect()
}

/// `(approx, detail)` from the pairwise formulas.
pub fn haar_pairs(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    x.chunks(2).map(|p| ((p[0] + p[1]) * s, (p[0] - p[1]) * s)).unzip()
}

pub fn layer_norm_row(x: &[f64], eps: f64) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    x.iter().map(|v| (v - mean) / (var + eps).sqrt()).collect()
}

/// Applies "drop users and items below `k`" one rule at a time until a full
/// pass changes nothing. Returns surviving `(user index, raw items)`.
pub fn brute_k_core(rows: &[Vec<String>], k: usize) -> Vec<(usize, Vec<String>)> {
    let mut cur: Vec<(usize, Vec<String>)> = rows.iter().cloned().enumerate().collect();
    loop {
        let mut changed = false;
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for (_, s) in &cur {
            for i in s {
                *counts.entry(i.as_str()).or_default() += 1;
            }
        }
        let rare: HashSet<String> = counts
            .iter()
            .filter(|(_, &c)| c < k)
            .map(|(i, _)| i.to_string())
            .collect();
        if !rare.is_empty() {
            changed = true;
            for (_, s) in cur.iter_mut() {
                s.retain(|i| !rare.contains(i));
            }
        }
        let before = cur.len();
        cur.retain(|(_, s)| s.len() >= k);
        changed |= cur.len() != before;
        if !changed {
            return cur;
        }
    }
}

/// Rank by sorting a copy: position of the target after placing every tied
/// competitor ahead of it.
pub fn sorted_rank(logits: &[f64], target: usize) -> usize {
    let mut order: Vec<usize> = (1..logits.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .unwrap()
            .then_with(|| (a == target).cmp(&(b == target)))
    });
    order.iter().position(|&i| i == target).unwrap() + 1
}

pub fn instance(input: Vec<usize>, target: usize, user: usize) -> Instance {
    Instance {
        input,
        target,
        user,
        split: Split::Test,
    }
}

/// Users walking a cycle of `period` items, each starting at its own
/// offset; the next item is always the successor of the last one.
pub fn cyclic_corpus(users: usize, period: usize, min_len: usize) -> Vec<(String, Vec<String>)> {
    (0..users)
        .map(|u| {
            let len = min_len + u % 4;
            let seq = (0..len).map(|t| format!("i{}", (u + t) % period)).collect();
            (format!("u{u}"), seq)
        })
        .collect()
}

/// Period-2 corpus whose targets depend only on phase. Each user owns a pair
/// `(a, b)`; the input alternates the pair for `n - 2` positions and ends
/// with two shared marker items, so item counts (and hence the column mean)
/// are identical for both phases and the last position is the same for
/// everyone. The target is the pair item at position `n - 3`, the one the
/// alternation puts on the final position's parity. Ids: marker 1, pairs
/// from 2.
pub fn phase_corpus(pairs: usize, n: usize) -> (usize, Vec<Instance>) {
    assert!(n >= 4 && n % 2 == 0, "n must be even and at least 4");
    let mut out = Vec::new();
    for p in 0..pairs {
        let (a, b) = (2 + 2 * p, 3 + 2 * p);
        for phase in 0..2 {
            let (x, y) = if phase == 0 { (a, b) } else { (b, a) };
            let mut input: Vec<usize> = (0..n - 2).map(|t| if t % 2 == 0 { x } else { y }).collect();
            let target = input[n - 3];
            input.extend([1, 1]);
            out.push(instance(input, target, out.len()));
        }
    }
    (2 + 2 * pairs, out)
}
