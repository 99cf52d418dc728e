//! Acceptance suite. Runs every criterion and prints one line each:
//!
//! ```text
//! cargo test -p wearec-core --test acceptance            # all criteria
//! cargo test -p wearec-core --test acceptance -- 4 9     # a subset
//! ```
//!
//! The LastFM reproduction needs the prepared dataset at the path in
//! `WEAREC_LASTFM`; without it the criterion reports BLOCKED.

mod common;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::time::{Duration, Instant};

use wearec::analysis::{self, frequency_driver_analysis, BandSpec, DriverOptions};
use wearec::data::{self, Instance, Split, TrainMode};
use wearec::diff::{grad_check, GradCheckOptions};
use wearec::metrics::{evaluate, rank_instances, EvalOptions};
use wearec::model::{perturb_params, LossObjective};
use wearec::spectral::{self, haar_filters, FftPlan};
use wearec::train::{train_loop, TrainConfig, Trainer};
use wearec::{Matrix, Model, ModelConfig};

use common::*;

enum Status {
    Pass,
    Fail,
    Blocked,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn failed(e: impl std::fmt::Display) -> Outcome {
    Outcome {
        status: Status::Fail,
        detail: format!("error: {e}"),
    }
}

fn spectral_round_trips() -> Outcome {
    let mut rng = rng(1);
    let (mut e32, mut e64) = (0.0f64, 0.0f64);
    for n in (4..=512).step_by(2) {
        let x = uniform(n, 2, &mut rng);
        let x32: Matrix<f32> = x.cast();
        let p64 = FftPlan::<f64>::new(n).unwrap();
        let p32 = FftPlan::<f32>::new(n).unwrap();
        let back64 = p64.irfft(&p64.rfft(&x).unwrap()).unwrap();
        let back32 = p32.irfft(&p32.rfft(&x32).unwrap()).unwrap();
        let haar64 = spectral::haar_idwt(&spectral::haar_dwt(&x).unwrap()).unwrap();
        let haar32 = spectral::haar_idwt(&spectral::haar_dwt(&x32).unwrap()).unwrap();
        e64 = e64.max(back64.max_abs_diff(&x)).max(haar64.max_abs_diff(&x));
        e32 = e32
            .max(back32.max_abs_diff(&x32) as f64)
            .max(haar32.max_abs_diff(&x32) as f64);
    }
    check(
        e64 <= 1e-12 && e32 <= 1e-6,
        format!("max error f64 {e64:.2e} (<= 1e-12), f32 {e32:.2e} (<= 1e-6), n = 4..512 even"),
    )
}

fn transform_identities() -> Outcome {
    let mut rng = rng(2);
    let (mut parseval, mut conv, mut oracle_gap) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..100 {
        let n = 2 + case % 63;
        let x = uniform(n, 1, &mut rng);
        parseval = parseval.max(spectral::parseval_residual(&x).unwrap());
        let xs = column(&x, 0);
        let full = dft(&xs);
        let time: f64 = xs.iter().map(|v| v * v).sum();
        let freq: f64 = full.iter().map(|(r, i)| r * r + i * i).sum::<f64>() / n as f64;
        oracle_gap = oracle_gap.max((time - freq).abs());
        let spec = spectral::rfft(&x).unwrap();
        for (k, &(re, im)) in full.iter().enumerate().take(spec.bins()) {
            oracle_gap = oracle_gap.max((spec.re.get(k, 0) - re).abs()).max((spec.im.get(k, 0) - im).abs());
        }
    }
    let sizes = [4, 8, 16, 32, 64];
    for case in 0..100 {
        let n = sizes[case % sizes.len()];
        let (h, x) = (uniform(n, 1, &mut rng), uniform(n, 1, &mut rng));
        conv = conv.max(spectral::convolution_theorem_residual(&h, &x).unwrap());
        let direct = circular_conv(&column(&h, 0), &column(&x, 0));
        let lib = spectral::circular_convolution(h.as_slice(), x.as_slice());
        for (a, b) in direct.iter().zip(&lib) {
            oracle_gap = oracle_gap.max((a - b).abs());
        }
    }
    let (l, hf) = haar_filters::<f64>();
    let relation = (0..2).all(|m| hf[m] == if m % 2 == 0 { l[1 - m] } else { -l[1 - m] });
    check(
        parseval <= 1e-10 && conv <= 1e-10 && oracle_gap <= 1e-10 && relation,
        format!(
            "Parseval {parseval:.2e}, convolution {conv:.2e}, library vs brute force {oracle_gap:.2e}, Haar relation exact: {relation}"
        ),
    )
}

fn identity_configuration() -> Outcome {
    let base = ModelConfig {
        vocab_size: 10,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let h: Matrix<f32> = uniform(base.max_len, base.hidden, &mut rng(3)).cast();
    let mut worst = 0.0f32;
    for alpha in [0.0, 0.3, 1.0] {
        let mut m = Model::<f32>::new(ModelConfig { alpha, ..base.clone() }, 5).unwrap();
        m.set_identity_mixing();
        for layer in 0..base.layers {
            match m.mixing_forward(&h, layer) {
                Ok(mix) => worst = worst.max(mix.max_abs_diff(&h)),
                Err(e) => return failed(e),
            }
        }
    }
    check(worst <= 1e-5, format!("max |mix − H| = {worst:.2e} over α ∈ {{0, 0.3, 1}} (<= 1e-5)"))
}

fn gradient_check() -> Outcome {
    let cfg = ModelConfig {
        max_len: 8,
        hidden: 8,
        heads: 2,
        layers: 2,
        vocab_size: 20,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut model = Model::<f64>::new(cfg, 11).unwrap();
    perturb_params(&mut model.params, 0.3, 12);
    let instances = vec![
        (vec![0, 0, 0, 3, 7, 19, 3, 2], 5),
        (vec![4, 4, 9, 1, 12, 13, 0, 6], 19),
        (vec![0, 0, 0, 0, 0, 0, 0, 11], 11),
    ];
    let mut params = model.params.clone();
    let objective = LossObjective {
        model: &model,
        instances,
    };
    let plain = GradCheckOptions {
        step: 1e-5,
        richardson: false,
        ..GradCheckOptions::default()
    };
    let reference = match grad_check(&objective, &mut params, plain) {
        Ok(r) => r.max_rel_error,
        Err(e) => return failed(e),
    };
    match grad_check(&objective, &mut params, GradCheckOptions::default()) {
        Ok(r) => check(
            r.max_rel_error <= 1e-4,
            format!(
                "max relative error {:.2e} (<= 1e-4, floor 1e-8) over {} coordinates, h = 4e-3 with Richardson step halving; \
                 single difference at h = 1e-5 gives {reference:.2e} (round-off on |g| < 1e-6)",
                r.max_rel_error, r.coords_checked
            ),
        ),
        Err(e) => failed(e),
    }
}

fn bin_count_contract() -> Outcome {
    let c = ModelConfig::default();
    let plan = FftPlan::<f32>::new(50).unwrap();
    let spec = plan.rfft(&Matrix::zeros(50, 1)).unwrap();
    let ok = c.bins() == 26 && spectral::bin_count(50) == 26 && spec.bins() == 26;
    check(ok, format!("N = 50 gives {} bins (expected 26)", spec.bins()))
}

fn overfit_smoke() -> Outcome {
    let corpus = cyclic_corpus(50, 10, 8);
    let ds = data::Dataset::from_raw(corpus);
    let cfg = ModelConfig {
        max_len: 8,
        hidden: 32,
        heads: 2,
        layers: 2,
        alpha: 0.3,
        dropout: 0.0,
        vocab_size: ds.vocab_size(),
        ..ModelConfig::default()
    };
    let splits = data::make_splits(&ds, cfg.max_len, TrainMode::Prefixes).unwrap();
    let mut model = Model::<f32>::new(cfg, 21).unwrap();
    let tc = TrainConfig {
        lr: 5e-3,
        batch_size: 32,
        seed: 21,
        ..TrainConfig::default()
    };
    let mut trainer = match Trainer::new(&mut model, tc) {
        Ok(t) => t,
        Err(e) => return failed(e),
    };
    let mut losses = Vec::new();
    let mut solved_at = None;
    for epoch in 0..200 {
        match trainer.train_epoch(&splits.train, epoch) {
            Ok(l) => losses.push(l),
            Err(e) => return failed(e),
        }
        let ranks = rank_instances(trainer.model, &splits.test, &trainer.eval_options()).unwrap();
        if ranks.iter().all(|r| r.rank == 1) {
            solved_at = Some(epoch + 1);
            if losses.len() >= 10 {
                break;
            }
        } else {
            solved_at = None;
        }
    }
    let windows: Vec<f64> = losses.chunks_exact(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    let monotone = windows.windows(2).all(|w| w[1] <= w[0]);
    let first = windows.first().copied().unwrap_or(f64::NAN);
    let last = windows.last().copied().unwrap_or(f64::NAN);
    let solved = match solved_at {
        Some(e) => format!("HR@1 = 1.0 on {} held-out items at epoch {e}", splits.test.len()),
        None => format!("HR@1 < 1.0 on {} held-out items after 200 epochs", splits.test.len()),
    };
    check(
        solved_at.is_some() && monotone,
        format!("{solved}; 5-epoch mean loss {first:.4} -> {last:.4}, nonincreasing: {monotone}"),
    )
}

fn null_model() -> Outcome {
    let cfg = ModelConfig {
        vocab_size: 1001,
        ..ModelConfig::default()
    };
    let model = Model::<f32>::new(cfg.clone(), 31).unwrap();
    let mut rng = rng(32);
    let users = 10_000;
    let instances: Vec<Instance> = (0..users)
        .map(|u| {
            use rand::Rng;
            let input = (0..cfg.max_len).map(|_| rng.random_range(1..1001)).collect();
            instance(input, rng.random_range(1..1001), u)
        })
        .collect();
    let report = evaluate(&model, &instances, &EvalOptions::default()).unwrap();
    let p = 10.0 / 1000.0;
    let sigma = (p * (1.0 - p) / users as f64).sqrt();
    let z = (report.hr10 - p) / sigma;
    check(
        z.abs() <= 3.0,
        format!("HR@10 = {:.4} vs 0.01 ({z:+.2} σ, σ = {sigma:.4}), users {}", report.hr10, report.users),
    )
}

fn lastfm_reproduction() -> Outcome {
    let Some(path) = std::env::var_os("WEAREC_LASTFM") else {
        return Outcome {
            status: Status::Blocked,
            detail: "set WEAREC_LASTFM to the LastFM sequence file to run (dataset not bundled)".into(),
        };
    };
    let run = || -> wearec::Result<Outcome> {
        let raw = data::load_sequences(std::path::Path::new(&path))?;
        let ds = data::five_core_filter(&raw, 5)?;
        let cfg = ModelConfig {
            vocab_size: ds.vocab_size(),
            ..ModelConfig::default()
        };
        let splits = data::make_splits(&ds, cfg.max_len, TrainMode::Prefixes)?;
        let mut model = Model::<f32>::new(cfg, 42)?;
        let tc = TrainConfig {
            lr: 1e-3,
            batch_size: 256,
            ..TrainConfig::default()
        };
        let out = train_loop(&mut model, &splits, tc, |r| {
            eprintln!("  epoch {} loss {:.4} valid NDCG@20 {:.4}", r.epoch, r.train_loss, r.valid.ndcg20)
        })?;
        Ok(check(
            out.test.hr10 >= 0.075 && out.test.ndcg10 >= 0.038,
            format!(
                "test HR@10 {:.4} (>= 0.075), NDCG@10 {:.4} (>= 0.038), best epoch {}",
                out.test.hr10, out.test.ndcg10, out.best_epoch
            ),
        ))
    };
    run().unwrap_or_else(failed)
}

fn complexity_scaling() -> Outcome {
    let lengths = [64, 128, 256, 512, 1024];
    let mixing = analysis::bench_scaling(&lengths, 21, 5.0, analysis::mixing_layer_bench(64, 2, 7));
    let control = analysis::bench_scaling(&lengths, 21, 5.0, analysis::quadratic_control_bench(7));
    let (mixing, control) = match (mixing, control) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return failed(e),
    };
    let monotone = mixing
        .points
        .windows(2)
        .all(|w| w[0].millis > 0.0 && w[1].millis >= w[0].millis);
    let times: Vec<String> = mixing.points.iter().map(|p| format!("{}:{:.3}ms", p.n, p.millis)).collect();
    check(
        mixing.slope <= 1.3 && (control.slope - 2.0).abs() <= 0.3 && monotone,
        format!(
            "mixing slope {:.3} (<= 1.3), quadratic control {:.3} (2 ± 0.3), monotone {monotone} [{}]",
            mixing.slope,
            control.slope,
            times.join(" ")
        ),
    )
}

fn frequency_drivers() -> Outcome {
    let n = 16;
    let (vocab, corpus) = phase_corpus(80, n);
    let cfg = ModelConfig {
        max_len: n,
        hidden: 32,
        heads: 2,
        layers: 2,
        alpha: 1.0,
        dropout: 0.0,
        vocab_size: vocab,
        ..ModelConfig::default()
    };
    let train: Vec<Instance> = corpus
        .iter()
        .map(|i| Instance {
            split: Split::Train,
            ..i.clone()
        })
        .collect();
    let mut model = Model::<f32>::new(cfg.clone(), 41).unwrap();
    let tc = TrainConfig {
        lr: 1e-2,
        batch_size: 16,
        seed: 41,
        ..TrainConfig::default()
    };
    {
        let mut trainer = Trainer::new(&mut model, tc).unwrap();
        for epoch in 0..60 {
            if let Err(e) = trainer.train_epoch(&train, epoch) {
                return failed(e);
            }
        }
    }
    let bands: Vec<BandSpec> = [(0, 0), (1, 2), (3, 4), (5, 6), (7, 8)]
        .iter()
        .enumerate()
        .map(|(index, &(lo, hi))| BandSpec { index, lo, hi })
        .collect();
    let opts = DriverOptions {
        k: 1,
        ..DriverOptions::default()
    };
    let report = match frequency_driver_analysis(&model, &corpus, &bands, &opts) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let unique: Vec<usize> = report.bands.iter().map(|b| b.unique).collect();
    let hits: Vec<usize> = report.bands.iter().map(|b| b.hits).collect();
    let accounted = report.unique_total() + report.multi + report.none == report.total;
    let nyquist = report.bands.iter().find(|b| b.band.hi == cfg.bins() - 1).unwrap().unique;
    check(
        nyquist > unique[0] && accounted,
        format!(
            "unique per band {unique:?}, hits {hits:?}, multi {}, none {}, total {}; period-2 band {nyquist} > DC band {}",
            report.multi, report.none, report.total, unique[0]
        ),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Criterion = (u32, &'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "spectral round trips", 1, spectral_round_trips),
        (2, "Parseval, convolution theorem, Haar relation", 5, transform_identities),
        (3, "identity mixing configuration", 1, identity_configuration),
        (4, "full-model gradient check", 120, gradient_check),
        (5, "bin count for N = 50", 1, bin_count_contract),
        (6, "overfit smoke test", 120, overfit_smoke),
        (7, "null-model calibration", 60, null_model),
        (8, "LastFM reproduction", 7200, lastfm_reproduction),
        (9, "log-linear mixing-layer scaling", 120, complexity_scaling),
        (10, "frequency-driver analysis", 60, frequency_drivers),
    ];
    let mut failures = 0;
    for (id, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if elapsed > Duration::from_secs(budget) && matches!(outcome.status, Status::Pass) {
            outcome.status = Status::Fail;
            outcome.detail.push_str(&format!("; over the {budget} s budget"));
        }
        let tag = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failures += 1;
                "FAIL"
            }
            Status::Blocked => "BLOCKED",
        };
        println!(
            "[{tag}] criterion {id:>2}: {name} ({:.2} s): {}",
            elapsed.as_secs_f64(),
            outcome.detail
        );
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
