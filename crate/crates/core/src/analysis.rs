//! Band-pass attribution of predictions, filter and enhancer exports, and
//! runtime scaling measurements.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{rank_instances, EvalOptions};
use crate::model::{FilterOverride, ForwardOptions, Model, ModelConfig};
use crate::real::Real;
use crate::tensor::Matrix;

/// Inclusive bin range `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BandSpec {
    pub index: usize,
    pub lo: usize,
    pub hi: usize,
}

/// `count` contiguous bands over `0..bins`, widths differing by at most one
/// (wider bands first).
pub fn equal_bands(bins: usize, count: usize) -> Result<Vec<BandSpec>> {
    if count == 0 || count > bins {
        return Err(Error::InvalidInput(format!("cannot split {bins} bins into {count} bands")));
    }
    let (base, extra) = (bins / count, bins % count);
    let mut lo = 0;
    Ok((0..count)
        .map(|index| {
            let w = base + usize::from(index < extra);
            let b = BandSpec {
                index,
                lo,
                hi: lo + w - 1,
            };
            lo += w;
            b
        })
        .collect())
}

/// Bands must tile `0..bins` in order without gaps or overlap.
pub fn check_partition(bands: &[BandSpec], bins: usize) -> Result<()> {
    let mut next = 0;
    for b in bands {
        if b.lo != next || b.hi < b.lo || b.hi >= bins {
            return Err(Error::InvalidInput(format!(
                "bands do not partition 0..{bins}: band {} is [{}, {}], expected to start at {next}",
                b.index, b.lo, b.hi
            )));
        }
        next = b.hi + 1;
    }
    if next != bins {
        return Err(Error::InvalidInput(format!("bands cover 0..{next}, expected 0..{bins}")));
    }
    Ok(())
}

/// Hard band-pass filter: scale 1 on the band's bins, 0 elsewhere, zero bias,
/// identical for every head.
pub fn band_filter<T: Real>(config: &ModelConfig, band: &BandSpec) -> FilterOverride<T> {
    let (k, bins) = (config.heads, config.bins());
    FilterOverride {
        scale: Matrix::from_fn(k, bins, |_, m| {
            if (band.lo..=band.hi).contains(&m) {
                T::one()
            } else {
                T::zero()
            }
        }),
        bias: Matrix::zeros(k, bins),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DriverOptions {
    /// Cut-off for "correctly predicted".
    pub k: usize,
    /// Fusion weight during the analysis; `Some(1.0)` removes the wavelet
    /// branch entirely, `None` keeps the trained value.
    pub alpha: Option<f64>,
    pub exec: Execution,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions {
            k: 10,
            alpha: Some(1.0),
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandCount {
    pub band: BandSpec,
    /// Users whose target ranks within K under this band.
    pub hits: usize,
    /// Users for which this is the only such band.
    pub unique: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriverReport {
    pub k: usize,
    pub bands: Vec<BandCount>,
    /// Users driven by two or more bands.
    pub multi: usize,
    /// Users driven by no band.
    pub none: usize,
    pub total: usize,
}

impl DriverReport {
    pub fn unique_total(&self) -> usize {
        self.bands.iter().map(|b| b.unique).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,lo,hi,hits,unique\n");
        for b in &self.bands {
            let _ = writeln!(out, "{},{},{},{},{}", b.band.index, b.band.lo, b.band.hi, b.hits, b.unique);
        }
        let _ = writeln!(out, "multi,,,,{}", self.multi);
        let _ = writeln!(out, "none,,,,{}", self.none);
        let _ = writeln!(out, "total,,,,{}", self.total);
        out
    }
}

/// Evaluates `instances` once per band with every spectral filter replaced
/// by that band's pass filter and the enhancer forced to 1, then attributes
/// each user to the set of bands under which the target ranks ≤ K.
pub fn frequency_driver_analysis<T: Real>(
    model: &Model<T>,
    instances: &[Instance],
    bands: &[BandSpec],
    opts: &DriverOptions,
) -> Result<DriverReport> {
    check_partition(bands, model.config().bins())?;
    if opts.k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    let mut driven = vec![Vec::new(); instances.len()];
    let mut counts = Vec::with_capacity(bands.len());
    for band in bands {
        let eval = EvalOptions {
            forward: ForwardOptions {
                filter_override: Some(band_filter(model.config(), band)),
                identity_enhancer: true,
                alpha: opts.alpha,
                ..ForwardOptions::eval()
            },
            mask_history: false,
            exec: opts.exec,
        };
        let ranks = rank_instances(model, instances, &eval)?;
        let mut hits = 0;
        for (u, r) in ranks.iter().enumerate() {
            if r.rank <= opts.k {
                hits += 1;
                driven[u].push(band.index);
            }
        }
        counts.push(BandCount {
            band: *band,
            hits,
            unique: 0,
        });
    }
    let (mut multi, mut none) = (0, 0);
    for d in &driven {
        match d.as_slice() {
            [] => none += 1,
            [b] => {
                if let Some(c) = counts.iter_mut().find(|c| c.band.index == *b) {
                    c.unique += 1;
                }
            }
            _ => multi += 1,
        }
    }
    Ok(DriverReport {
        k: opts.k,
        bands: counts,
        multi,
        none,
        total: instances.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralRow {
    pub layer: usize,
    pub head: usize,
    pub bin: usize,
    /// `bin / (bins − 1)`
    pub frequency: f64,
    pub base: f64,
    pub modulated: f64,
}

/// Base filter magnitudes `|W|` and the mean over `sample` of the modulated
/// magnitudes `|Ŵ|`, one row per (layer, head, bin). With an empty sample
/// the modulated column repeats the base.
pub fn export_spectral_response<T: Real>(model: &Model<T>, sample: &[Instance]) -> Result<Vec<SpectralRow>> {
    let cfg = model.config();
    let (k, bins) = (cfg.heads, cfg.bins());
    let mut sums = vec![Matrix::<f64>::zeros(k, bins); cfg.layers];
    for inst in sample {
        let trace = model.trace(&inst.input, &ForwardOptions::eval())?;
        for (acc, layer) in sums.iter_mut().zip(&trace.layers) {
            acc.add_assign(&layer.filter_scale.map(|v| v.abs()).cast());
        }
    }
    let mut rows = Vec::with_capacity(cfg.layers * k * bins);
    for (l, block) in model.layout().blocks.iter().enumerate() {
        let base = model.params.value(block.filter_scale);
        for h in 0..k {
            for m in 0..bins {
                let b = base.get(h, m).as_f64().abs();
                rows.push(SpectralRow {
                    layer: l,
                    head: h,
                    bin: m,
                    frequency: if bins > 1 { m as f64 / (bins - 1) as f64 } else { 0.0 },
                    base: b,
                    modulated: if sample.is_empty() {
                        b
                    } else {
                        sums[l].get(h, m) / sample.len() as f64
                    },
                });
            }
        }
    }
    Ok(rows)
}

pub fn spectral_csv(rows: &[SpectralRow]) -> String {
    let mut out = String::from("layer,head,bin,frequency,base_abs,modulated_abs_mean\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.9e},{:.9e}",
            r.layer, r.head, r.bin, r.frequency, r.base, r.modulated
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnhancerRow {
    pub layer: usize,
    pub index: usize,
    pub channel: usize,
    pub value: f32,
}

pub fn export_enhancer<T: Real>(model: &Model<T>) -> Vec<EnhancerRow> {
    let mut rows = Vec::new();
    for (l, block) in model.layout().blocks.iter().enumerate() {
        let t = model.params.value(block.enhancer);
        for i in 0..t.rows() {
            for c in 0..t.cols() {
                rows.push(EnhancerRow {
                    layer: l,
                    index: i,
                    channel: c,
                    value: t.get(i, c).to_f32().unwrap_or(f32::NAN),
                });
            }
        }
    }
    rows
}

/// Values are written with Rust's shortest round-trip formatting, so parsing
/// them back as `f32` is bit-exact.
pub fn enhancer_csv(rows: &[EnhancerRow]) -> String {
    let mut out = String::from("layer,index,channel,value\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:?}", r.layer, r.index, r.channel, r.value);
    }
    out
}

/// Provenance line prepended to every CSV export.
pub fn metadata_line(config_hash: &str, checkpoint: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} checkpoint={checkpoint} seed={seed}\n")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    /// Median time per call in milliseconds.
    pub millis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
}

/// Least-squares slope of `ln(time)` against `ln(n)`.
pub fn loglog_slope(points: &[ScalingPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.millis.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Median over `reps` of the per-call time of `f`, in milliseconds. Each rep
/// runs enough calls to last about `min_rep_ms`; one warmup rep is
/// discarded.
pub fn median_time(reps: usize, min_rep_ms: f64, mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    f();
    let once = start.elapsed().as_secs_f64() * 1e3;
    let inner = ((min_rep_ms / once.max(1e-6)).ceil() as usize).clamp(1, 1 << 20);
    for _ in 0..inner {
        f();
    }
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            for _ in 0..inner {
                f();
            }
            t.elapsed().as_secs_f64() * 1e3 / inner as f64
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    }
}

/// Times `make(n)` for each length and fits the log-log slope.
pub fn bench_scaling(
    lengths: &[usize],
    reps: usize,
    min_rep_ms: f64,
    mut make: impl FnMut(usize) -> Result<Box<dyn FnMut()>>,
) -> Result<ScalingReport> {
    if lengths.len() < 2 {
        return Err(Error::InvalidInput("need at least two lengths".into()));
    }
    let mut points = Vec::with_capacity(lengths.len());
    for &n in lengths {
        let mut f = make(n)?;
        points.push(ScalingPoint {
            n,
            millis: median_time(reps, min_rep_ms, &mut f),
        });
    }
    Ok(ScalingReport {
        slope: loglog_slope(&points),
        points,
    })
}

/// Forward of one mixing layer (spectral and wavelet branches plus fusion)
/// on a random `n x hidden` input, at fixed width.
pub fn mixing_layer_bench(hidden: usize, heads: usize, seed: u64) -> impl FnMut(usize) -> Result<Box<dyn FnMut()>> {
    move |n| {
        let config = ModelConfig {
            max_len: n,
            hidden,
            heads,
            layers: 1,
            vocab_size: 2,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let model = Model::<f32>::new(config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = Matrix::<f32>::randn(n, hidden, 1.0, &mut rng);
        Ok(Box::new(move || {
            black_box(model.mixing_forward(black_box(&h), 0).expect("mixing forward"));
        }) as Box<dyn FnMut()>)
    }
}

/// Dense `n x n` matrix-vector product, an O(n²) reference.
pub fn quadratic_control_bench(seed: u64) -> impl FnMut(usize) -> Result<Box<dyn FnMut()>> {
    move |n| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::<f32>::randn(n, n, 1.0, &mut rng);
        let x = Matrix::<f32>::randn(n, 1, 1.0, &mut rng);
        Ok(Box::new(move || {
            black_box(black_box(&a).matmul(black_box(&x)));
        }) as Box<dyn FnMut()>)
    }
}
