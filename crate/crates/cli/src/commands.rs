use std::path::{Path, PathBuf};

use serde_json::json;
use wearec::analysis::{
    self, enhancer_csv, export_enhancer, export_spectral_response, frequency_driver_analysis, spectral_csv,
    DriverOptions,
};
use wearec::config::RunConfig;
use wearec::data::{self, Dataset, Split, Splits};
use wearec::diff::{grad_check, Checkpoint, GradCheckOptions};
use wearec::metrics::{evaluate, EvalOptions};
use wearec::model::{perturb_params, ForwardOptions, LossObjective, PADDING_ID};
use wearec::seed::{self, Stream};
use wearec::train::{history_csv, train_loop};
use wearec::Model;

use crate::artifacts::{csv_preamble, json_artifact, OutputDir};
use crate::failure::{At, Failure, Stage};

pub const CHECKPOINT: &str = "checkpoint.bin";
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const SLOPE_BOUND: f64 = 1.3;

pub fn prepare(input: &Path, output: &Path, min_core: usize, max_len: usize) -> Result<(), Failure> {
    if min_core == 0 || max_len == 0 {
        return Err(Failure::usage("--min-core and --max-len must be at least 1"));
    }
    let raw = data::load_sequences(input).at(Stage::Data)?;
    let ds = data::five_core_filter(&raw, min_core).at(Stage::Data)?;
    let splits = data::make_splits(&ds, max_len, data::TrainMode::Prefixes).at(Stage::Data)?;
    let out = OutputDir::claim(output)?;
    out.write("dataset.txt", ds.to_text())?;
    for split in [Split::Train, Split::Valid, Split::Test] {
        let name = format!("{}.txt", split.as_str());
        out.write(&name, data::split_to_text(&ds, split, splits.get(split)))?;
    }
    let stats = json!({
        "min_core": min_core,
        "max_len": max_len,
        "stats": ds.stats(),
    });
    let text = serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n";
    out.write("stats.json", &text)?;
    print!("{text}");
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Splits), Failure> {
    let raw = data::load_sequences(&cfg.data).at(Stage::Data)?;
    let ds = data::five_core_filter(&raw, cfg.min_core).at(Stage::Data)?;
    let splits = data::make_splits(&ds, cfg.max_len, cfg.train_mode).at(Stage::Data)?;
    Ok((ds, splits))
}

pub fn train(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config).at(Stage::Config)?;
    let (ds, splits) = load_dataset(&cfg)?;
    let mut model = Model::<f32>::new(
        cfg.model_config(ds.vocab_size()),
        seed::sub_seed(cfg.seed, Stream::Init),
    )
    .at(Stage::Config)?;
    let out = OutputDir::claim(&cfg.output)?;
    let outcome = train_loop(&mut model, &splits, cfg.train_config(), |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  valid HR@10 {:.4}  NDCG@10 {:.4}  NDCG@20 {:.4}",
            r.epoch, r.train_loss, r.valid.hr10, r.valid.ndcg10, r.valid.ndcg20
        );
    })
    .at(Stage::Run)?;
    Checkpoint::from_store(cfg.to_text(), &outcome.best_params)
        .save(&out.path(CHECKPOINT))
        .at(Stage::Run)?;
    out.write("history.csv", csv_preamble(&cfg, CHECKPOINT) + &history_csv(&outcome.history))?;
    let result = json!({
        "split": "test",
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.history.len(),
        "valid": outcome.best_valid,
        "test": outcome.test,
    });
    out.write("metrics.json", json_artifact(&cfg, CHECKPOINT, result))?;
    print!("{}", outcome.test.to_json());
    Ok(())
}

/// Where a checkpoint-based command reads its data and writes its outputs.
pub struct Locations {
    pub checkpoint: PathBuf,
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

struct Restored {
    cfg: RunConfig,
    splits: Splits,
    model: Model<f32>,
    label: String,
}

/// Rebuilds the trained model from the config stored in the checkpoint.
/// Outputs go next to the checkpoint unless `--output` says otherwise.
fn restore(loc: &Locations, edit: impl FnOnce(&mut RunConfig) -> Result<(), String>) -> Result<Restored, Failure> {
    let ckpt = Checkpoint::load(&loc.checkpoint).at(Stage::Config)?;
    let mut cfg = RunConfig::parse(&ckpt.header, "checkpoint header").at(Stage::Config)?;
    if let Some(d) = &loc.data {
        cfg.data = d.clone();
    }
    cfg.output = match &loc.output {
        Some(o) => o.clone(),
        None => loc
            .checkpoint
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    edit(&mut cfg).map_err(Failure::usage)?;
    cfg.validate().at(Stage::Config)?;
    let (ds, splits) = load_dataset(&cfg)?;
    let mut model = Model::<f32>::new(cfg.model_config(ds.vocab_size()), 0).at(Stage::Config)?;
    ckpt.apply_to(&mut model.params).at(Stage::Config)?;
    let label = loc
        .checkpoint
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| CHECKPOINT.into());
    Ok(Restored {
        cfg,
        splits,
        model,
        label,
    })
}

pub fn eval(loc: &Locations, split: Split) -> Result<(), Failure> {
    let r = restore(loc, |_| Ok(()))?;
    let opts = EvalOptions {
        forward: ForwardOptions::eval(),
        mask_history: r.cfg.mask_history,
        exec: r.cfg.execution,
    };
    let report = evaluate(&r.model, r.splits.get(split), &opts).at(Stage::Run)?;
    let out = OutputDir::claim(&r.cfg.output)?;
    let result = json!({ "split": split.as_str(), "metrics": report });
    out.write(&format!("eval_{}.json", split.as_str()), json_artifact(&r.cfg, &r.label, result))?;
    print!("{}", report.to_json());
    Ok(())
}

pub fn analyze_freq(loc: &Locations, bands: Option<&str>, k: Option<usize>) -> Result<(), Failure> {
    let r = restore(loc, |cfg| {
        if let Some(b) = bands {
            cfg.set("bands", b)?;
        }
        if let Some(k) = k {
            cfg.set("analysis_k", &k.to_string())?;
        }
        Ok(())
    })?;
    let specs = r.cfg.bands.resolve(r.model.config().bins()).at(Stage::Config)?;
    let opts = DriverOptions {
        k: r.cfg.analysis_k,
        alpha: r.cfg.analysis_alpha(),
        exec: r.cfg.execution,
    };
    let report = frequency_driver_analysis(&r.model, &r.splits.test, &specs, &opts).at(Stage::Run)?;
    let out = OutputDir::claim(&r.cfg.output)?;
    out.write("freqdrivers.csv", csv_preamble(&r.cfg, &r.label) + &report.to_csv())?;
    print!("{}", report.to_csv());
    Ok(())
}

pub fn export_spectra(loc: &Locations) -> Result<(), Failure> {
    let r = restore(loc, |_| Ok(()))?;
    let sample = &r.splits.test[..r.cfg.spectra_sample.min(r.splits.test.len())];
    let rows = export_spectral_response(&r.model, sample).at(Stage::Run)?;
    let out = OutputDir::claim(&r.cfg.output)?;
    let path = out.write("spectra.csv", csv_preamble(&r.cfg, &r.label) + &spectral_csv(&rows))?;
    println!("{} rows -> {}", rows.len(), path.display());
    Ok(())
}

pub fn export_enhancer_cmd(loc: &Locations) -> Result<(), Failure> {
    let r = restore(loc, |_| Ok(()))?;
    let rows = export_enhancer(&r.model);
    let out = OutputDir::claim(&r.cfg.output)?;
    let path = out.write("enhancer.csv", csv_preamble(&r.cfg, &r.label) + &enhancer_csv(&rows))?;
    println!("{} rows -> {}", rows.len(), path.display());
    Ok(())
}

/// Three left-padded sequences over the gradcheck vocabulary, drawn from
/// the master seed.
fn gradcheck_instances(cfg: &RunConfig) -> Vec<(Vec<usize>, usize)> {
    let (n, v) = (cfg.max_len, cfg.gradcheck_vocab as u64);
    let draw = |a: u64, b: u64| seed::indexed(cfg.seed, a, b);
    (0..3u64)
        .map(|s| {
            let live = 1 + (draw(s, 0) % n as u64) as usize;
            let mut input = vec![PADDING_ID; n - live];
            input.extend((0..live).map(|t| 1 + (draw(s, t as u64 + 1) % (v - 1)) as usize));
            let target = 1 + (draw(s, u64::MAX - 1) % (v - 1)) as usize;
            (input, target)
        })
        .collect()
}

pub fn gradcheck(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config).at(Stage::Config)?;
    let mut mc = cfg.model_config(cfg.gradcheck_vocab);
    mc.dropout = 0.0;
    let mut model = Model::<f64>::new(mc, seed::sub_seed(cfg.seed, Stream::Init)).at(Stage::Config)?;
    // Away from the initialization, where the modulation branch is nearly
    // silent and many gradients sit below finite-difference resolution.
    perturb_params(&mut model.params, 0.3, cfg.seed);
    let mut params = model.params.clone();
    let objective = LossObjective {
        model: &model,
        instances: gradcheck_instances(&cfg),
    };
    let opts = GradCheckOptions {
        coords_per_param: cfg.gradcheck_coords,
        seed: cfg.seed,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&objective, &mut params, opts).at(Stage::Run)?;
    let out = OutputDir::claim(&cfg.output)?;
    let result = json!({
        "max_rel_error": report.max_rel_error,
        "tolerance": GRADCHECK_TOLERANCE,
        "coords_checked": report.coords_checked,
        "worst": report.worst,
        "step": opts.step,
        "richardson": opts.richardson,
        "abs_floor": opts.abs_floor,
    });
    out.write("gradcheck.json", json_artifact(&cfg, "none", result))?;
    println!(
        "max relative error {:.3e} over {} coordinates (tolerance {GRADCHECK_TOLERANCE:e})",
        report.max_rel_error, report.coords_checked
    );
    if report.max_rel_error > GRADCHECK_TOLERANCE || report.max_rel_error.is_nan() {
        let worst = report.worst.map(|(p, i)| format!("{p}[{i}]")).unwrap_or_default();
        return Err(Failure::numerical(format!(
            "gradient check failed: {:.3e} > {GRADCHECK_TOLERANCE:e} at {worst}",
            report.max_rel_error
        )));
    }
    Ok(())
}

pub fn bench(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config).at(Stage::Config)?;
    let mixing = analysis::bench_scaling(
        &cfg.bench_lengths,
        cfg.bench_reps,
        5.0,
        analysis::mixing_layer_bench(cfg.hidden, cfg.heads, cfg.seed),
    )
    .at(Stage::Run)?;
    let control = analysis::bench_scaling(
        &cfg.bench_lengths,
        cfg.bench_reps,
        5.0,
        analysis::quadratic_control_bench(cfg.seed),
    )
    .at(Stage::Run)?;
    let out = OutputDir::claim(&cfg.output)?;
    // timings vary run to run; everything else in the file is fixed
    let result = json!({ "mixing": mixing, "quadratic_control": control, "slope_bound": SLOPE_BOUND });
    out.write("bench.json", json_artifact(&cfg, "none", result))?;
    for p in &mixing.points {
        println!("n = {:>5}  {:.4} ms", p.n, p.millis);
    }
    let verdict = if mixing.slope <= SLOPE_BOUND { "within" } else { "above" };
    println!(
        "mixing-layer log-log slope {:.3} ({verdict} bound {SLOPE_BOUND}); quadratic control {:.3}",
        mixing.slope, control.slope
    );
    Ok(())
}
