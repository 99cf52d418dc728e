//! The sequence encoder: embedding, stacked blocks of dynamic spectral
//! filtering fused with wavelet detail enhancement, point-wise FFN, and
//! the tied-embedding prediction head.
//!
//! Every forward pass runs on a [`Tape`] for a single padded sequence;
//! batching and data parallelism live in [`crate::train`].

mod config;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::ModelConfig;

use crate::diff::{Gradients, Mode, Objective, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::spectral::{self, ComplexSpectrum, FftPlan, WaveletPair};
use crate::tensor::Matrix;

pub const PADDING_ID: usize = 0;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

/// Parameter handles of one block.
#[derive(Clone, Debug)]
pub struct BlockParams {
    /// Base filter scale `W^l`, `k x bins`.
    pub filter_scale: ParamId,
    /// Base filter bias `b^l`, `k x bins`.
    pub filter_bias: ParamId,
    /// Context → scale modulation, `d → d → d → k·bins`.
    pub scale_mlp: [Linear; 3],
    /// Context → bias modulation, same shape as `scale_mlp`.
    pub bias_mlp: [Linear; 3],
    /// Detail-coefficient enhancer `T^l`, `N/2 x d/k`, shared by all heads.
    pub enhancer: ParamId,
    pub mix_norm: Norm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_norm: Norm,
}

/// Parameter handles of the whole network. Values live in the model's
/// [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ModelParams {
    /// `|V| x d`; row 0 is the padding embedding.
    pub item_embedding: ParamId,
    /// `N x d`
    pub position_embedding: ParamId,
    pub embed_norm: Norm,
    pub blocks: Vec<BlockParams>,
}

/// Replacement spectral filter used by the band analysis.
#[derive(Clone, Debug)]
pub struct FilterOverride<T: Real> {
    /// `k x bins`
    pub scale: Matrix<T>,
    /// `k x bins`
    pub bias: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardOptions<T: Real> {
    pub mode: Mode,
    pub filter_override: Option<FilterOverride<T>>,
    /// Run the wavelet branch with `T = 1` (perfect reconstruction).
    pub identity_enhancer: bool,
    pub alpha: Option<f64>,
}

impl<T: Real> ForwardOptions<T> {
    pub fn eval() -> Self {
        ForwardOptions {
            mode: Mode::Eval,
            filter_override: None,
            identity_enhancer: false,
            alpha: None,
        }
    }

    pub fn train() -> Self {
        ForwardOptions {
            mode: Mode::Train,
            ..Self::eval()
        }
    }
}

/// Per-layer intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct LayerTrace<T: Real> {
    /// Block input `H^l`.
    pub input: Matrix<T>,
    pub context: Matrix<T>,
    pub delta_scale: Matrix<T>,
    pub delta_bias: Matrix<T>,
    pub filter_scale: Matrix<T>,
    pub filter_bias: Matrix<T>,
    /// Per-head spectra of the input blocks.
    pub spectra: Vec<ComplexSpectrum<T>>,
    /// Per-head Haar coefficients of the input blocks (detail not rescaled).
    pub wavelets: Vec<WaveletPair<T>>,
    pub dff_out: Matrix<T>,
    pub wfe_out: Matrix<T>,
    /// `α·X + (1−α)·Y` before the residual.
    pub mix: Matrix<T>,
    pub mixed: Matrix<T>,
    pub output: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace<T: Real> {
    pub embedding: Matrix<T>,
    pub layers: Vec<LayerTrace<T>>,
    /// Final-position representation `h^L`, `1 x d`.
    pub last_hidden: Matrix<T>,
    pub logits: Vec<T>,
}

struct LayerVars {
    input: Var,
    context: Var,
    delta_scale: Var,
    delta_bias: Var,
    filter_scale: Var,
    filter_bias: Var,
    dff_out: Var,
    wfe_out: Var,
    mix: Var,
    mixed: Var,
    output: Var,
}

pub struct MixOutput {
    pub dff: Var,
    pub wfe: Var,
    /// Pre-residual fusion.
    pub mix: Var,
    /// `LayerNorm(H + Dropout(mix))`
    pub mixed: Var,
}

#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    config: ModelConfig,
    pub params: ParamStore<T>,
    layout: ModelParams,
    plan: Arc<FftPlan<T>>,
}

impl<T: Real> Model<T> {
    /// Builds and initializes a model: embeddings, base filter scales and
    /// hidden MLP/FFN weights ~ N(0, 0.02²); biases 0; the last stage of
    /// both modulation MLPs 0; enhancer 1; LayerNorm γ = 1, β = 0.
    pub fn new(config: ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let (d, k, bins, n) = (config.hidden, config.heads, config.bins(), config.max_len);
        let mut store = ParamStore::new();

        let item_embedding = store.register("item_embedding", Matrix::randn(config.vocab_size, d, INIT_STD, &mut rng));
        let position_embedding = store.register("position_embedding", Matrix::randn(n, d, INIT_STD, &mut rng));
        let embed_norm = register_norm(&mut store, "embed_norm", d);

        let mut blocks = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("block{l}");
            let filter_scale = store.register(format!("{p}.filter_scale"), Matrix::randn(k, bins, INIT_STD, &mut rng));
            let filter_bias = store.register(format!("{p}.filter_bias"), Matrix::zeros(k, bins));
            let mlp = |name: &str, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng| -> [Linear; 3] {
                [
                    register_linear(store, &format!("{p}.{name}.0"), d, d, Some(rng)),
                    register_linear(store, &format!("{p}.{name}.1"), d, d, Some(rng)),
                    register_linear(store, &format!("{p}.{name}.2"), d, k * bins, None),
                ]
            };
            let scale_mlp = mlp("scale_mlp", &mut store, &mut rng);
            let bias_mlp = mlp("bias_mlp", &mut store, &mut rng);
            let enhancer = store.register(
                format!("{p}.enhancer"),
                Matrix::filled(config.half_len(), config.head_dim(), T::one()),
            );
            let mix_norm = register_norm(&mut store, &format!("{p}.mix_norm"), d);
            let ffn_in = register_linear(&mut store, &format!("{p}.ffn_in"), d, d, Some(&mut rng));
            let ffn_out = register_linear(&mut store, &format!("{p}.ffn_out"), d, d, Some(&mut rng));
            let ffn_norm = register_norm(&mut store, &format!("{p}.ffn_norm"), d);
            blocks.push(BlockParams {
                filter_scale,
                filter_bias,
                scale_mlp,
                bias_mlp,
                enhancer,
                mix_norm,
                ffn_in,
                ffn_out,
                ffn_norm,
            });
        }

        Ok(Model {
            plan: Arc::new(FftPlan::new(n)?),
            config,
            params: store,
            layout: ModelParams {
                item_embedding,
                position_embedding,
                embed_norm,
                blocks,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ModelParams {
        &self.layout
    }

    pub fn plan(&self) -> &Arc<FftPlan<T>> {
        &self.plan
    }

    pub fn cast<U: Real>(&self) -> Result<Model<U>> {
        Ok(Model {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            plan: Arc::new(FftPlan::new(self.config.max_len)?),
        })
    }

    /// Sets every block to the identity mixing configuration: `W = 1`,
    /// `b = 0`, modulation MLP output stages zero, `T = 1`.
    pub fn set_identity_mixing(&mut self) {
        for b in &self.layout.blocks {
            self.params.value_mut(b.filter_scale).fill(T::one());
            self.params.value_mut(b.filter_bias).fill(T::zero());
            for lin in [b.scale_mlp[2], b.bias_mlp[2]] {
                self.params.value_mut(lin.weight).fill(T::zero());
                self.params.value_mut(lin.bias).fill(T::zero());
            }
            self.params.value_mut(b.enhancer).fill(T::one());
        }
    }

    fn check_items(&self, items: &[usize]) -> Result<()> {
        if items.len() != self.config.max_len {
            return Err(Error::shape("model input", self.config.max_len, items.len()));
        }
        if let Some(&bad) = items.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::InvalidInput(format!(
                "item id {bad} out of range for vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// `Dropout(LayerNorm(M[items] + P))`, `N x d`.
    pub fn embed(&self, tape: &mut Tape<'_, T>, items: &[usize], mode: Mode, rng: &mut ChaCha8Rng) -> Result<Var> {
        self.check_items(items)?;
        let table = tape.param(self.layout.item_embedding);
        let pos = tape.param(self.layout.position_embedding);
        let e = tape.gather(table, items)?;
        let e = tape.add(e, pos)?;
        let e = self.norm(tape, e, self.layout.embed_norm)?;
        tape.dropout(e, self.config.dropout, mode, rng)
    }

    fn norm(&self, tape: &mut Tape<'_, T>, x: Var, n: Norm) -> Result<Var> {
        let (g, b) = (tape.param(n.gamma), tape.param(n.beta));
        tape.layer_norm(x, g, b, T::lit(self.config.layer_norm_eps))
    }

    fn linear(&self, tape: &mut Tape<'_, T>, x: Var, lin: Linear) -> Result<Var> {
        let (w, b) = (tape.param(lin.weight), tape.param(lin.bias));
        tape.linear(x, w, b)
    }

    /// Column mean of `h` over all rows, or over non-padding rows when the
    /// context mask is enabled.
    pub fn context_vector(&self, tape: &mut Tape<'_, T>, h: Var, items: &[usize]) -> Result<Var> {
        if self.config.context_mask {
            let live = items.iter().filter(|&&i| i != PADDING_ID).count();
            if live > 0 {
                let w = T::one() / T::lit(live as f64);
                let weights = items
                    .iter()
                    .map(|&i| if i == PADDING_ID { T::zero() } else { w })
                    .collect();
                return tape.weighted_row_sum(h, weights);
            }
        }
        tape.mean_rows(h)
    }

    /// Returns `(Ŵ, b̂, Δs, Δb)`, each `k x bins`.
    pub fn modulate_filter(&self, tape: &mut Tape<'_, T>, context: Var, layer: usize) -> Result<(Var, Var, Var, Var)> {
        let b = &self.layout.blocks[layer];
        let (k, bins) = (self.config.heads, self.config.bins());
        let run_mlp = |tape: &mut Tape<'_, T>, mlp: &[Linear; 3]| -> Result<Var> {
            let h = self.linear(tape, context, mlp[0])?;
            let h = tape.gelu(h);
            let h = self.linear(tape, h, mlp[1])?;
            let h = tape.gelu(h);
            let out = self.linear(tape, h, mlp[2])?;
            tape.reshape(out, k, bins)
        };
        let delta_scale = run_mlp(tape, &b.scale_mlp)?;
        let delta_bias = run_mlp(tape, &b.bias_mlp)?;
        let base_scale = tape.param(b.filter_scale);
        let base_bias = tape.param(b.filter_bias);
        let one_plus = tape.offset(delta_scale, T::one());
        let scale = tape.mul(base_scale, one_plus)?;
        let bias = tape.add(base_bias, delta_bias)?;
        Ok((scale, bias, delta_scale, delta_bias))
    }

    /// Per-head spectral filtering with head `i` using row `i` of the
    /// `k x bins` filter.
    pub fn dff_forward(&self, tape: &mut Tape<'_, T>, h: Var, scale: Var, bias: Var) -> Result<Var> {
        let dk = self.config.head_dim();
        let mut heads = Vec::with_capacity(self.config.heads);
        for i in 0..self.config.heads {
            let block = tape.slice_cols(h, i * dk, dk)?;
            let s = tape.slice_rows(scale, i, 1)?;
            let b = tape.slice_rows(bias, i, 1)?;
            heads.push(tape.freq_filter(block, s, b, &self.plan)?);
        }
        merge_heads_var(tape, &heads)
    }

    /// Per-head Haar decomposition, detail rescaled by `enhancer`, inverse.
    pub fn wfe_forward(&self, tape: &mut Tape<'_, T>, h: Var, enhancer: Var) -> Result<Var> {
        let dk = self.config.head_dim();
        let mut heads = Vec::with_capacity(self.config.heads);
        for i in 0..self.config.heads {
            let block = tape.slice_cols(h, i * dk, dk)?;
            heads.push(tape.haar_enhance(block, enhancer)?);
        }
        merge_heads_var(tape, &heads)
    }

    /// Spectral and wavelet branches, `α` fusion, residual and LayerNorm.
    #[allow(clippy::too_many_arguments)]
    pub fn mix_block(
        &self,
        tape: &mut Tape<'_, T>,
        h: Var,
        layer: usize,
        items: &[usize],
        opts: &ForwardOptions<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(MixOutput, [Var; 4], Var)> {
        let b = &self.layout.blocks[layer];
        let context = self.context_vector(tape, h, items)?;
        let (mut scale, mut bias, ds, db) = self.modulate_filter(tape, context, layer)?;
        if let Some(ov) = &opts.filter_override {
            let (k, bins) = (self.config.heads, self.config.bins());
            if ov.scale.shape() != (k, bins) || ov.bias.shape() != (k, bins) {
                return Err(Error::shape("filter override", format!("{k}x{bins}"), format!("{:?}", ov.scale.shape())));
            }
            scale = tape.leaf(ov.scale.clone());
            bias = tape.leaf(ov.bias.clone());
        }
        let enhancer = if opts.identity_enhancer {
            tape.leaf(Matrix::filled(self.config.half_len(), self.config.head_dim(), T::one()))
        } else {
            tape.param(b.enhancer)
        };
        let dff = self.dff_forward(tape, h, scale, bias)?;
        let wfe = self.wfe_forward(tape, h, enhancer)?;
        let alpha = opts.alpha.unwrap_or(self.config.alpha);
        let xs = tape.scale(dff, T::lit(alpha));
        let ys = tape.scale(wfe, T::lit(1.0 - alpha));
        let mix = tape.add(xs, ys)?;
        let dropped = tape.dropout(mix, self.config.dropout, opts.mode, rng)?;
        let res = tape.add(h, dropped)?;
        let mixed = self.norm(tape, res, b.mix_norm)?;
        Ok((MixOutput { dff, wfe, mix, mixed }, [scale, bias, ds, db], context))
    }

    /// `LayerNorm(Ĥ + Dropout(GELU(Ĥ W₁ + b₁) W₂ + b₂))`
    pub fn ffn_block(&self, tape: &mut Tape<'_, T>, h: Var, layer: usize, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Var> {
        let b = &self.layout.blocks[layer];
        let f = self.linear(tape, h, b.ffn_in)?;
        let f = tape.gelu(f);
        let f = self.linear(tape, f, b.ffn_out)?;
        let f = tape.dropout(f, self.config.dropout, mode, rng)?;
        let res = tape.add(h, f)?;
        self.norm(tape, res, b.ffn_norm)
    }

    fn encode_inner(
        &self,
        tape: &mut Tape<'_, T>,
        items: &[usize],
        opts: &ForwardOptions<T>,
        rng: &mut ChaCha8Rng,
        mut record: Option<&mut Vec<LayerVars>>,
    ) -> Result<(Var, Var)> {
        let emb = self.embed(tape, items, opts.mode, rng)?;
        let mut h = emb;
        for l in 0..self.config.layers {
            let (mix, [scale, bias, ds, db], context) = self.mix_block(tape, h, l, items, opts, rng)?;
            let out = self.ffn_block(tape, mix.mixed, l, opts.mode, rng)?;
            if let Some(rec) = record.as_deref_mut() {
                rec.push(LayerVars {
                    input: h,
                    context,
                    delta_scale: ds,
                    delta_bias: db,
                    filter_scale: scale,
                    filter_bias: bias,
                    dff_out: mix.dff,
                    wfe_out: mix.wfe,
                    mix: mix.mix,
                    mixed: mix.mixed,
                    output: out,
                });
            }
            h = out;
        }
        let last = tape.slice_rows(h, self.config.max_len - 1, 1)?;
        Ok((emb, last))
    }

    /// Encodes `items` and returns the `1 x |V|` logit row (unmasked).
    pub fn logits_var(
        &self,
        tape: &mut Tape<'_, T>,
        items: &[usize],
        opts: &ForwardOptions<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let (_, last) = self.encode_inner(tape, items, opts, rng, None)?;
        let table = tape.param(self.layout.item_embedding);
        tape.matmul_bt(last, table)
    }

    /// Scores over the whole vocabulary with the padding logit at `-inf`.
    pub fn forward(&self, items: &[usize]) -> Result<Vec<T>> {
        self.forward_with(items, &ForwardOptions::eval())
    }

    pub fn forward_with(&self, items: &[usize], opts: &ForwardOptions<T>) -> Result<Vec<T>> {
        let mut tape = Tape::new(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.logits_var(&mut tape, items, opts, &mut rng)?;
        let mut row = tape.value(logits).as_slice().to_vec();
        row[PADDING_ID] = T::neg_infinity();
        Ok(row)
    }

    /// Forward pass retaining every per-layer intermediate.
    pub fn trace(&self, items: &[usize], opts: &ForwardOptions<T>) -> Result<ForwardTrace<T>> {
        let mut tape = Tape::new(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rec = Vec::with_capacity(self.config.layers);
        let (emb, last) = self.encode_inner(&mut tape, items, opts, &mut rng, Some(&mut rec))?;
        let table = tape.param(self.layout.item_embedding);
        let logits = tape.matmul_bt(last, table)?;
        let mut logits = tape.value(logits).as_slice().to_vec();
        logits[PADDING_ID] = T::neg_infinity();

        let dk = self.config.head_dim();
        let mut layers = Vec::with_capacity(rec.len());
        for lv in rec {
            let input = tape.value(lv.input).clone();
            let mut spectra = Vec::new();
            let mut wavelets = Vec::new();
            for i in 0..self.config.heads {
                let block = input.cols_slice(i * dk, dk);
                spectra.push(self.plan.rfft(&block)?);
                wavelets.push(spectral::haar_dwt(&block)?);
            }
            let v = |x: Var| tape.value(x).clone();
            layers.push(LayerTrace {
                context: v(lv.context),
                delta_scale: v(lv.delta_scale),
                delta_bias: v(lv.delta_bias),
                filter_scale: v(lv.filter_scale),
                filter_bias: v(lv.filter_bias),
                spectra,
                wavelets,
                dff_out: v(lv.dff_out),
                wfe_out: v(lv.wfe_out),
                mix: v(lv.mix),
                mixed: v(lv.mixed),
                output: v(lv.output),
                input,
            });
        }
        Ok(ForwardTrace {
            embedding: tape.value(emb).clone(),
            layers,
            last_hidden: tape.value(last).clone(),
            logits,
        })
    }

    fn check_target(&self, target: usize) -> Result<()> {
        if target == PADDING_ID || target >= self.config.vocab_size {
            return Err(Error::InvalidInput(format!(
                "target {target} must be a non-padding id below {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Cross-entropy of the next-item prediction over the full vocabulary
    /// (padding excluded), eval mode.
    pub fn loss(&self, items: &[usize], target: usize) -> Result<T> {
        self.loss_with(&self.params, items, target)
    }

    /// [`Self::loss`] evaluated with an external parameter store of the same
    /// layout.
    pub fn loss_with(&self, params: &ParamStore<T>, items: &[usize], target: usize) -> Result<T> {
        self.check_target(target)?;
        let mut tape = Tape::new(params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.logits_var(&mut tape, items, &ForwardOptions::eval(), &mut rng)?;
        let loss = tape.softmax_cross_entropy(logits, target, &[PADDING_ID])?;
        Ok(tape.value(loss).get(0, 0))
    }

    /// Loss of one instance with its parameter gradients added to `acc`,
    /// scaled by `weight`.
    pub fn loss_and_grad(
        &self,
        items: &[usize],
        target: usize,
        mode: Mode,
        weight: T,
        rng: &mut ChaCha8Rng,
        acc: &mut Gradients<T>,
    ) -> Result<T> {
        self.loss_and_grad_with(&self.params, items, target, mode, weight, rng, acc)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn loss_and_grad_with(
        &self,
        params: &ParamStore<T>,
        items: &[usize],
        target: usize,
        mode: Mode,
        weight: T,
        rng: &mut ChaCha8Rng,
        acc: &mut Gradients<T>,
    ) -> Result<T> {
        self.check_target(target)?;
        let mut tape = Tape::new(params);
        let opts = ForwardOptions {
            mode,
            ..ForwardOptions::eval()
        };
        let logits = self.logits_var(&mut tape, items, &opts, rng)?;
        let loss = tape.softmax_cross_entropy(logits, target, &[PADDING_ID])?;
        let value = tape.value(loss).get(0, 0);
        tape.backward_with_seed(loss, Matrix::filled(1, 1, weight), acc)?;
        Ok(value)
    }

    /// Pre-residual fusion `α·X + (1−α)·Y` of block `layer` applied to an
    /// arbitrary `N x d` input, eval mode.
    pub fn mixing_forward(&self, h: &Matrix<T>, layer: usize) -> Result<Matrix<T>> {
        if h.shape() != (self.config.max_len, self.config.hidden) {
            return Err(Error::shape(
                "mixing_forward",
                format!("{}x{}", self.config.max_len, self.config.hidden),
                format!("{:?}", h.shape()),
            ));
        }
        let mut tape = Tape::new(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hv = tape.leaf(h.clone());
        let items = vec![1; self.config.max_len];
        let (mix, _, _) = self.mix_block(&mut tape, hv, layer, &items, &ForwardOptions::eval(), &mut rng)?;
        Ok(tape.value(mix.mix).clone())
    }
}

/// Summed eval-mode loss over fixed `(input, target)` pairs, as a
/// finite-difference check objective.
pub struct LossObjective<'a> {
    pub model: &'a Model<f64>,
    pub instances: Vec<(Vec<usize>, usize)>,
}

impl Objective for LossObjective<'_> {
    fn value(&self, params: &ParamStore<f64>) -> Result<f64> {
        self.instances
            .iter()
            .map(|(x, t)| self.model.loss_with(params, x, *t))
            .sum()
    }

    fn value_and_grad(&self, params: &ParamStore<f64>) -> Result<(f64, Gradients<f64>)> {
        let mut acc = Gradients::for_store(params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut total = 0.0;
        for (x, t) in &self.instances {
            total += self.model.loss_and_grad_with(params, x, *t, Mode::Eval, 1.0, &mut rng, &mut acc)?;
        }
        Ok((total, acc))
    }
}

/// Adds `N(0, std²)` noise to every parameter so no coordinate sits at a
/// symmetric point (zero-initialized stages, unit enhancer).
pub fn perturb_params<T: Real>(store: &mut ParamStore<T>, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for slot in store.slots_mut() {
        let (r, c) = slot.value.shape();
        let noise = Matrix::<T>::randn(r, c, std, &mut rng);
        slot.value.add_assign(&noise);
    }
}

fn register_norm<T: Real>(store: &mut ParamStore<T>, name: &str, d: usize) -> Norm {
    Norm {
        gamma: store.register(format!("{name}.gamma"), Matrix::filled(1, d, T::one())),
        beta: store.register(format!("{name}.beta"), Matrix::zeros(1, d)),
    }
}

/// Weight `N(0, 0.02²)` when an rng is given, zero otherwise; bias zero.
fn register_linear<T: Real>(
    store: &mut ParamStore<T>,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: Option<&mut ChaCha8Rng>,
) -> Linear {
    let w = match rng {
        Some(rng) => Matrix::randn(fan_in, fan_out, INIT_STD, rng),
        None => Matrix::zeros(fan_in, fan_out),
    };
    Linear {
        weight: store.register(format!("{name}.weight"), w),
        bias: store.register(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
    }
}

fn merge_heads_var<T: Real>(tape: &mut Tape<'_, T>, heads: &[Var]) -> Result<Var> {
    if heads.len() == 1 {
        return Ok(heads[0]);
    }
    tape.concat_cols(heads)
}

/// Splits `N x d` into `k` contiguous `N x d/k` column blocks.
pub fn split_heads<T: Real>(h: &Matrix<T>, k: usize) -> Result<Vec<Matrix<T>>> {
    if k == 0 || h.cols() % k != 0 {
        return Err(Error::InvalidInput(format!(
            "cannot split {} columns into {k} heads",
            h.cols()
        )));
    }
    let w = h.cols() / k;
    Ok((0..k).map(|i| h.cols_slice(i * w, w)).collect())
}

pub fn merge_heads<T: Real>(blocks: &[Matrix<T>]) -> Matrix<T> {
    Matrix::concat_cols(blocks)
}
