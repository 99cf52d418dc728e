//! Reverse-mode differentiation over a fixed set of matrix primitives.
//!
//! A [`Tape`] records every primitive executed during one forward pass
//! together with the intermediates its backward map needs. Parameters are
//! read in place from a borrowed [`ParamStore`]; their gradients are
//! accumulated into a caller-owned [`Gradients`] so several tapes (one per
//! sample) can feed the same accumulator.

use std::sync::Arc;

use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::spectral::{self, ComplexSpectrum, FftPlan, WaveletPair};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Op<T: Real> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix<T>,
        rstd: Vec<T>,
    },
    Dropout {
        x: Var,
        mask: Matrix<T>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    WeightedRowSum {
        x: Var,
        weights: Vec<T>,
    },
    Reshape(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    FreqFilter {
        x: Var,
        scale: Var,
        bias: Var,
        plan: Arc<FftPlan<T>>,
        spectrum: ComplexSpectrum<T>,
    },
    HaarEnhance {
        x: Var,
        enhancer: Var,
        detail: Matrix<T>,
    },
    SoftmaxXent {
        logits: Var,
        target: usize,
        probs: Vec<T>,
    },
    Sum(Var),
}

struct Node<T: Real> {
    /// `None` for parameter leaves, which are read from the store.
    value: Option<Matrix<T>>,
    op: Op<T>,
}

pub struct Tape<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

/// Gradients of non-parameter nodes after a backward pass.
pub struct NodeGrads<T: Real> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> NodeGrads<T> {
    pub fn wrt(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(Error::shape("matmul", va.cols(), vb.rows()));
        }
        let out = va.matmul(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Error::shape("matmul_bt", va.cols(), vb.cols()));
        }
        let out = va.matmul_bt(vb);
        Ok(self.push(out, Op::MatMulBt(a, b)))
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(Error::shape("add_bias", format!("1x{}", vx.cols()), format!("{:?}", vb.shape())));
        }
        let mut out = vx.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(vb.as_slice()) {
                *o = *o + b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    /// `x · w + b`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", format!("{:?}", va.shape()), format!("{:?}", vb.shape())));
        }
        let out = va.zip_map(vb, |p, q| p + q);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("mul", format!("{:?}", va.shape()), format!("{:?}", vb.shape())));
        }
        let out = va.zip_map(vb, |p, q| p * q);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s))
    }

    /// `x + s` element-wise.
    pub fn offset(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v + s);
        self.push(out, Op::Offset(x))
    }

    /// Exact GELU, `x · Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu);
        self.push(out, Op::Gelu(x))
    }

    /// Per-row standardization followed by `gamma ⊙ · + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let vx = self.value(x);
        let (rows, d) = vx.shape();
        let (vg, vb) = (self.value(gamma), self.value(beta));
        if vg.shape() != (1, d) || vb.shape() != (1, d) {
            return Err(Error::shape("layer_norm", format!("1x{d}"), format!("{:?}", vg.shape())));
        }
        let inv_d = T::one() / T::lit(d as f64);
        let mut xhat = Matrix::zeros(rows, d);
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Matrix::zeros(rows, d);
        for r in 0..rows {
            let row = vx.row(r);
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let s = T::one() / (var + eps).sqrt();
            rstd.push(s);
            for c in 0..d {
                let h = (row[c] - mean) * s;
                xhat.set(r, c, h);
                out.set(r, c, vg.as_slice()[c] * h + vb.as_slice()[c]);
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        ))
    }

    /// Inverted dropout. Eval mode and `rate == 0` return `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidInput(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let vx = self.value(x);
        let mask = Matrix::from_fn(vx.rows(), vx.cols(), |_, _| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        });
        let out = vx.zip_map(&mask, |v, m| v * m);
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    /// Row lookup: output row `r` is `table[ids[r]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        let mut out = Matrix::zeros(ids.len(), vt.cols());
        for (r, &id) in ids.iter().enumerate() {
            if id >= vt.rows() {
                return Err(Error::InvalidInput(format!(
                    "id {id} out of range for a table of {} rows",
                    vt.rows()
                )));
            }
            out.row_mut(r).copy_from_slice(vt.row(id));
        }
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// `Σ_r weights[r] · x[r]` as a `1 x c` row.
    pub fn weighted_row_sum(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        let vx = self.value(x);
        if weights.len() != vx.rows() {
            return Err(Error::shape("weighted_row_sum", vx.rows(), weights.len()));
        }
        let mut out = Matrix::zeros(1, vx.cols());
        for (r, &w) in weights.iter().enumerate() {
            for (o, &v) in out.as_mut_slice().iter_mut().zip(vx.row(r)) {
                *o = *o + w * v;
            }
        }
        Ok(self.push(out, Op::WeightedRowSum { x, weights }))
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).rows();
        let w = T::one() / T::lit(n as f64);
        self.weighted_row_sum(x, vec![w; n])
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let vx = self.value(x);
        if vx.len() != rows * cols {
            return Err(Error::shape("reshape", vx.len(), rows * cols));
        }
        let out = vx.clone().reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape(x)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let vx = self.value(x);
        if start + width > vx.cols() {
            return Err(Error::shape("slice_cols", vx.cols(), start + width));
        }
        let out = vx.cols_slice(start, width);
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let vx = self.value(x);
        if start + count > vx.rows() {
            return Err(Error::shape("slice_rows", vx.rows(), start + count));
        }
        let out = vx.rows_slice(start, count);
        Ok(self.push(out, Op::SliceRows { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let blocks: Vec<Matrix<T>> = parts.iter().map(|&p| self.value(p).clone()).collect();
        let rows = blocks.first().map_or(0, |b| b.rows());
        if blocks.iter().any(|b| b.rows() != rows) {
            return Err(Error::InvalidInput("concat_cols: row counts differ".into()));
        }
        let out = Matrix::concat_cols(&blocks);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Spectral filtering of every column of `x` (`n x c`):
    /// `irfft(F ⊙ scale + bias)`, where `scale` and `bias` are `1 x bins`
    /// rows broadcast over channels and `bias` adds to the real part.
    pub fn freq_filter(&mut self, x: Var, scale: Var, bias: Var, plan: &Arc<FftPlan<T>>) -> Result<Var> {
        let vx = self.value(x);
        let bins = plan.bins();
        let (vs, vb) = (self.value(scale), self.value(bias));
        if vs.shape() != (1, bins) || vb.shape() != (1, bins) {
            return Err(Error::shape("freq_filter", format!("1x{bins}"), format!("{:?}", vs.shape())));
        }
        let spectrum = plan.rfft(vx)?;
        let mut filtered = spectrum.clone();
        for m in 0..bins {
            let (w, b) = (vs.as_slice()[m], vb.as_slice()[m]);
            for re in filtered.re.row_mut(m) {
                *re = *re * w + b;
            }
            for im in filtered.im.row_mut(m) {
                *im = *im * w;
            }
        }
        let out = plan.irfft(&filtered)?;
        Ok(self.push(
            out,
            Op::FreqFilter {
                x,
                scale,
                bias,
                plan: Arc::clone(plan),
                spectrum,
            },
        ))
    }

    /// Level-1 Haar analysis, detail rescaled by `enhancer`
    /// (`n/2 x c`), then synthesis.
    pub fn haar_enhance(&mut self, x: Var, enhancer: Var) -> Result<Var> {
        let vx = self.value(x);
        let vt = self.value(enhancer);
        let pair = spectral::haar_dwt(vx)?;
        if vt.shape() != pair.detail.shape() {
            return Err(Error::shape(
                "haar_enhance",
                format!("{:?}", pair.detail.shape()),
                format!("{:?}", vt.shape()),
            ));
        }
        let scaled = WaveletPair {
            approx: pair.approx,
            detail: pair.detail.zip_map(vt, |d, t| d * t),
            n_origin: pair.n_origin,
        };
        let out = spectral::haar_idwt(&scaled)?;
        Ok(self.push(
            out,
            Op::HaarEnhance {
                x,
                enhancer,
                detail: pair.detail,
            },
        ))
    }

    /// `-log softmax(logits)[target]` for a `1 x V` row; `masked` indices
    /// are excluded from the normalizer (treated as `-inf` logits).
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize, masked: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        if vl.rows() != 1 {
            return Err(Error::shape("softmax_cross_entropy", "1 row", vl.rows()));
        }
        let v = vl.cols();
        if target >= v || masked.contains(&target) {
            return Err(Error::InvalidInput(format!(
                "target {target} is out of range or masked (vocabulary {v})"
            )));
        }
        let live = |j: usize| !masked.contains(&j);
        let row = vl.as_slice();
        let max = (0..v)
            .filter(|&j| live(j))
            .map(|j| row[j])
            .fold(T::neg_infinity(), T::max);
        let mut probs = vec![T::zero(); v];
        let mut total = T::zero();
        for j in (0..v).filter(|&j| live(j)) {
            let e = (row[j] - max).exp();
            probs[j] = e;
            total = total + e;
        }
        for p in &mut probs {
            *p = *p / total;
        }
        let loss = total.ln() + max - row[target];
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(x))
    }

    /// Backward pass from a scalar output, seeded with `1`.
    pub fn backward(&self, out: Var, acc: &mut Gradients<T>) -> Result<NodeGrads<T>> {
        let (r, c) = self.shape(out);
        if (r, c) != (1, 1) {
            return Err(Error::shape("backward", "1x1", format!("{r}x{c}")));
        }
        self.backward_with_seed(out, Matrix::filled(1, 1, T::one()), acc)
    }

    /// Backward pass with an explicit output cotangent. Visits nodes in
    /// exact reverse execution order; parameter gradients are added into
    /// `acc`, other nodes' gradients are returned.
    pub fn backward_with_seed(&self, out: Var, seed: Matrix<T>, acc: &mut Gradients<T>) -> Result<NodeGrads<T>> {
        if seed.shape() != self.shape(out) {
            return Err(Error::shape(
                "backward seed",
                format!("{:?}", self.shape(out)),
                format!("{:?}", seed.shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        match self.nodes[out.0].op {
            Op::Param(id) => {
                if self.params.slot(id).trainable {
                    acc.slot_mut(id, seed.shape()).add_assign(&seed);
                }
                return Ok(NodeGrads { grads });
            }
            _ => grads[out.0] = Some(seed),
        }

        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(&node.op, &g, &mut grads, acc)?;
            // Keep intermediate cotangents available for inspection.
            grads[i] = Some(g);
        }
        Ok(NodeGrads { grads })
    }

    fn backward_node(
        &self,
        op: &Op<T>,
        g: &Matrix<T>,
        grads: &mut [Option<Matrix<T>>],
        acc: &mut Gradients<T>,
    ) -> Result<()> {
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let ga = g.matmul_bt(vb);
                    self.grad_mut(*a, grads, acc).add_assign(&ga);
                }
                if self.wants(*b) {
                    va.matmul_at_acc(g, self.grad_mut(*b, grads, acc));
                }
            }
            Op::MatMulBt(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let ga = g.matmul(vb);
                    self.grad_mut(*a, grads, acc).add_assign(&ga);
                }
                if self.wants(*b) {
                    g.matmul_at_acc(va, self.grad_mut(*b, grads, acc));
                }
            }
            Op::AddBias(x, bias) => {
                self.grad_mut(*x, grads, acc).add_assign(g);
                if self.wants(*bias) {
                    let gb = self.grad_mut(*bias, grads, acc);
                    for r in 0..g.rows() {
                        for (o, &v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.grad_mut(*a, grads, acc).add_assign(g);
                self.grad_mut(*b, grads, acc).add_assign(g);
            }
            Op::Mul(a, b) => {
                let ga = g.zip_map(self.value(*b), |p, q| p * q);
                let gb = g.zip_map(self.value(*a), |p, q| p * q);
                self.grad_mut(*a, grads, acc).add_assign(&ga);
                self.grad_mut(*b, grads, acc).add_assign(&gb);
            }
            Op::Scale(x, s) => self.grad_mut(*x, grads, acc).axpy(*s, g),
            Op::Offset(x) => self.grad_mut(*x, grads, acc).add_assign(g),
            Op::Gelu(x) => {
                let gx = g.zip_map(self.value(*x), |gv, xv| gv * gelu_derivative(xv));
                self.grad_mut(*x, grads, acc).add_assign(&gx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let vg = self.value(*gamma).as_slice().to_vec();
                let (rows, d) = g.shape();
                if self.wants(*gamma) {
                    let gg = self.grad_mut(*gamma, grads, acc);
                    for r in 0..rows {
                        for c in 0..d {
                            let o = &mut gg.as_mut_slice()[c];
                            *o = *o + g.get(r, c) * xhat.get(r, c);
                        }
                    }
                }
                if self.wants(*beta) {
                    let gb = self.grad_mut(*beta, grads, acc);
                    for r in 0..rows {
                        for (o, &v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o = *o + v;
                        }
                    }
                }
                let inv_d = T::one() / T::lit(d as f64);
                let mut gx = Matrix::zeros(rows, d);
                for r in 0..rows {
                    let gh: Vec<T> = (0..d).map(|c| g.get(r, c) * vg[c]).collect();
                    let sum_gh: T = gh.iter().copied().sum();
                    let sum_ghx: T = (0..d).map(|c| gh[c] * xhat.get(r, c)).sum();
                    for c in 0..d {
                        let v = rstd[r] * (gh[c] - inv_d * sum_gh - xhat.get(r, c) * inv_d * sum_ghx);
                        gx.set(r, c, v);
                    }
                }
                self.grad_mut(*x, grads, acc).add_assign(&gx);
            }
            Op::Dropout { x, mask } => {
                let gx = g.zip_map(mask, |p, q| p * q);
                self.grad_mut(*x, grads, acc).add_assign(&gx);
            }
            Op::Gather { table, ids } => {
                if self.wants(*table) {
                    let gt = self.grad_mut(*table, grads, acc);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, &v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::WeightedRowSum { x, weights } => {
                let gx = self.grad_mut(*x, grads, acc);
                for (r, &w) in weights.iter().enumerate() {
                    for (o, &v) in gx.row_mut(r).iter_mut().zip(g.as_slice()) {
                        *o = *o + w * v;
                    }
                }
            }
            Op::Reshape(x) => {
                let (r, c) = self.shape(*x);
                let gx = g.clone().reshaped(r, c);
                self.grad_mut(*x, grads, acc).add_assign(&gx);
            }
            Op::SliceCols { x, start } => {
                let gx = self.grad_mut(*x, grads, acc);
                for r in 0..g.rows() {
                    for (c, &v) in g.row(r).iter().enumerate() {
                        let o = &mut gx.row_mut(r)[start + c];
                        *o = *o + v;
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let gx = self.grad_mut(*x, grads, acc);
                for r in 0..g.rows() {
                    for (o, &v) in gx.row_mut(start + r).iter_mut().zip(g.row(r)) {
                        *o = *o + v;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    let gp = g.cols_slice(start, w);
                    self.grad_mut(p, grads, acc).add_assign(&gp);
                    start += w;
                }
            }
            Op::FreqFilter {
                x,
                scale,
                bias,
                plan,
                spectrum,
            } => {
                let gf = plan.irfft_adjoint(g)?;
                let vs = self.value(*scale).as_slice().to_vec();
                let bins = gf.bins();
                if self.wants(*scale) {
                    let gs = self.grad_mut(*scale, grads, acc);
                    for m in 0..bins {
                        let s: T = (0..gf.channels())
                            .map(|c| gf.re.get(m, c) * spectrum.re.get(m, c) + gf.im.get(m, c) * spectrum.im.get(m, c))
                            .sum();
                        gs.as_mut_slice()[m] = gs.as_mut_slice()[m] + s;
                    }
                }
                if self.wants(*bias) {
                    let gb = self.grad_mut(*bias, grads, acc);
                    for m in 0..bins {
                        let s: T = gf.re.row(m).iter().copied().sum();
                        gb.as_mut_slice()[m] = gb.as_mut_slice()[m] + s;
                    }
                }
                if self.wants(*x) {
                    let mut gspec = gf;
                    for m in 0..bins {
                        for v in gspec.re.row_mut(m) {
                            *v = *v * vs[m];
                        }
                        for v in gspec.im.row_mut(m) {
                            *v = *v * vs[m];
                        }
                    }
                    let gx = plan.rfft_adjoint(&gspec)?;
                    self.grad_mut(*x, grads, acc).add_assign(&gx);
                }
            }
            Op::HaarEnhance { x, enhancer, detail } => {
                let gpair = spectral::haar_idwt_adjoint(g)?;
                if self.wants(*enhancer) {
                    let gt = gpair.detail.zip_map(detail, |p, q| p * q);
                    self.grad_mut(*enhancer, grads, acc).add_assign(&gt);
                }
                if self.wants(*x) {
                    let vt = self.value(*enhancer);
                    let back = WaveletPair {
                        detail: gpair.detail.zip_map(vt, |p, q| p * q),
                        approx: gpair.approx,
                        n_origin: gpair.n_origin,
                    };
                    let gx = spectral::haar_dwt_adjoint(&back)?;
                    self.grad_mut(*x, grads, acc).add_assign(&gx);
                }
            }
            Op::SoftmaxXent { logits, target, probs } => {
                let up = g.get(0, 0);
                let gl = self.grad_mut(*logits, grads, acc);
                for (j, &p) in probs.iter().enumerate() {
                    let onehot = if j == *target { T::one() } else { T::zero() };
                    let o = &mut gl.as_mut_slice()[j];
                    *o = *o + up * (p - onehot);
                }
            }
            Op::Sum(x) => {
                let up = g.get(0, 0);
                let gx = self.grad_mut(*x, grads, acc);
                gx.as_mut_slice().iter_mut().for_each(|o| *o = *o + up);
            }
        }
        Ok(())
    }

    /// Whether a gradient for `v` is needed at all (frozen parameters are
    /// skipped).
    #[inline]
    fn wants(&self, v: Var) -> bool {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.slot(id).trainable,
            _ => true,
        }
    }

    fn grad_mut<'g>(
        &self,
        v: Var,
        grads: &'g mut [Option<Matrix<T>>],
        acc: &'g mut Gradients<T>,
    ) -> &'g mut Matrix<T> {
        let shape = self.shape(v);
        match self.nodes[v.0].op {
            // Frozen parameters still need a sink; give them the node slot.
            Op::Param(id) if self.params.slot(id).trainable => acc.slot_mut(id, shape),
            _ => grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1)),
        }
    }
}

#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    x * half * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

#[inline]
fn gelu_derivative<T: Real>(x: T) -> T {
    let cdf = T::lit(0.5) * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * T::lit(0.5)).exp() * T::lit(0.398_942_280_401_432_7);
    cdf + x * pdf
}
