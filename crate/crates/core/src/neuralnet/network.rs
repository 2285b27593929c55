use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{Dims, LayerSpec, NetworkSpec};
use super::tensor::{axpy, dot, transpose, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::par::Exec;

/// Samples per gradient chunk. Chunks are reduced in a fixed order, so a
/// batch gradient does not depend on how many threads ran the chunks.
pub const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Over the softmax output; targets are class indices.
    CrossEntropy,
    /// Sigmoid cross-entropy per output value, averaged; targets are masks.
    PixelBce,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    Class(usize),
    Mask(&'a [u8]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvOp {
    input: Dims,
    filters: usize,
    size: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Conv(ConvOp),
    Pool(Dims),
    Relu,
    Fc { inputs: usize, w: usize, b: usize },
    Softmax,
    Residual(ConvOp, ConvOp),
    SumPool(Dims),
}

/// Per-sample record of a forward pass.
struct Tape<T> {
    acts: Vec<Vec<T>>,
    extra: Vec<Vec<T>>,
    argmax: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    dims: Vec<Dims>,
    ops: Vec<Op>,
    pub params: Vec<Tensor<T>>,
}

fn im2col<T: Scalar>(x: &[T], d: Dims, k: usize, cols: &mut [T]) {
    let p = (k / 2) as isize;
    let (h, w) = (d.h as isize, d.w as isize);
    let n = d.h * d.w;
    for c in 0..d.c {
        let plane = &x[c * n..(c + 1) * n];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * n..][..n];
                let off = kx as isize - p;
                let x0 = (-off).clamp(0, w) as usize;
                let x1 = (w - off).clamp(0, w) as usize;
                for y in 0..d.h {
                    let dst = &mut row[y * d.w..(y + 1) * d.w];
                    let sy = y as isize + ky as isize - p;
                    if sy < 0 || sy >= h || x0 >= x1 {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * d.w..][..d.w];
                    dst[..x0].fill(T::zero());
                    dst[x1..].fill(T::zero());
                    let s0 = (x0 as isize + off) as usize;
                    dst[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], d: Dims, k: usize, dx: &mut [T]) {
    let p = (k / 2) as isize;
    let (h, w) = (d.h as isize, d.w as isize);
    let n = d.h * d.w;
    for c in 0..d.c {
        let plane = &mut dx[c * n..(c + 1) * n];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * n..][..n];
                let off = kx as isize - p;
                let x0 = (-off).clamp(0, w) as usize;
                let x1 = (w - off).clamp(0, w) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..d.h {
                    let sy = y as isize + ky as isize - p;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    let s0 = (x0 as isize + off) as usize;
                    let dst = &mut plane[sy as usize * d.w + s0..][..x1 - x0];
                    for (a, b) in dst.iter_mut().zip(&row[y * d.w + x0..y * d.w + x1]) {
                        *a += *b;
                    }
                }
            }
        }
    }
}

impl ConvOp {
    fn k(&self) -> usize {
        self.input.c * self.size * self.size
    }

    fn forward<T: Scalar>(&self, params: &[Tensor<T>], x: &[T]) -> Vec<T> {
        let n = self.input.h * self.input.w;
        let (w, b) = (&params[self.w].data, &params[self.b].data);
        let mut out = Vec::with_capacity(self.filters * n);
        for &bias in b.iter() {
            out.extend(std::iter::repeat_n(bias, n));
        }
        if self.size == 1 {
            T::gemm(
                self.filters,
                self.k(),
                n,
                T::one(),
                w,
                false,
                x,
                false,
                T::one(),
                &mut out,
            );
        } else {
            let mut cols = vec![T::zero(); self.k() * n];
            im2col(x, self.input, self.size, &mut cols);
            T::gemm(
                self.filters,
                self.k(),
                n,
                T::one(),
                w,
                false,
                &cols,
                false,
                T::one(),
                &mut out,
            );
        }
        out
    }

    /// Accumulates weight gradients; returns the input gradient if asked.
    fn backward<T: Scalar>(
        &self,
        params: &[Tensor<T>],
        x: &[T],
        dout: &[T],
        grads: &mut [Vec<T>],
        need_dx: bool,
    ) -> Option<Vec<T>> {
        let n = self.input.h * self.input.w;
        let k = self.k();
        // The weight gradient is dout (F x N) times the transposed patch
        // matrix; materializing that transpose is much faster than a
        // strided operand.
        let mut cols_t = vec![T::zero(); k * n];
        if self.size == 1 {
            transpose(x, k, n, &mut cols_t);
        } else {
            let mut cols = vec![T::zero(); k * n];
            im2col(x, self.input, self.size, &mut cols);
            transpose(&cols, k, n, &mut cols_t);
        }
        T::gemm(
            self.filters,
            n,
            k,
            T::one(),
            dout,
            false,
            &cols_t,
            false,
            T::one(),
            &mut grads[self.w],
        );
        for (f, gb) in grads[self.b].iter_mut().enumerate() {
            let mut s = T::zero();
            for &v in &dout[f * n..(f + 1) * n] {
                s += v;
            }
            *gb += s;
        }
        if !need_dx {
            return None;
        }
        let w = &params[self.w].data;
        if self.size == 1 {
            let mut dx = vec![T::zero(); k * n];
            T::gemm(
                k,
                self.filters,
                n,
                T::one(),
                w,
                true,
                dout,
                false,
                T::zero(),
                &mut dx,
            );
            return Some(dx);
        }
        let mut dcols = vec![T::zero(); k * n];
        T::gemm(
            k,
            self.filters,
            n,
            T::one(),
            w,
            true,
            dout,
            false,
            T::zero(),
            &mut dcols,
        );
        let mut dx = vec![T::zero(); self.input.len()];
        col2im(&dcols, self.input, self.size, &mut dx);
        Some(dx)
    }
}

fn relu<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let mut s = T::zero();
    for &v in &e {
        s += v;
    }
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sum of per-sample losses and correct-prediction credit over a batch, with
/// parameter gradients of the mean loss.
#[derive(Debug, Clone)]
pub struct BatchGrad<T> {
    pub loss_sum: f64,
    pub correct: f64,
    pub grads: Vec<Vec<T>>,
}

impl<T: Scalar> Network<T> {
    /// He-normal weights from the spec's init seed, zero biases.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(net.spec.init_seed);
        for t in &mut net.params {
            let shape = t.shape();
            if shape.len() < 2 {
                continue;
            }
            let fan_in: usize = shape[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            for v in &mut t.data {
                *v = T::of(normal.sample(&mut rng));
            }
        }
        Ok(net)
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let dims = spec.shapes()?;
        let params: Vec<Tensor<T>> = spec
            .param_shapes()?
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect();
        let mut ops = Vec::with_capacity(spec.layers.len());
        let mut next = 0;
        let mut take = || {
            next += 2;
            (next - 2, next - 1)
        };
        for (layer, &d) in spec.layers.iter().zip(&dims) {
            ops.push(match *layer {
                LayerSpec::Conv { size, filters } => {
                    let (w, b) = take();
                    Op::Conv(ConvOp {
                        input: d,
                        filters,
                        size,
                        w,
                        b,
                    })
                }
                LayerSpec::MaxPool => Op::Pool(d),
                LayerSpec::Relu => Op::Relu,
                LayerSpec::SumPool => Op::SumPool(d),
                LayerSpec::Fc { .. } => {
                    let (w, b) = take();
                    Op::Fc {
                        inputs: d.len(),
                        w,
                        b,
                    }
                }
                LayerSpec::Softmax => Op::Softmax,
                LayerSpec::Residual { size } => {
                    let (w1, b1) = take();
                    let (w2, b2) = take();
                    let conv = |w, b| ConvOp {
                        input: d,
                        filters: d.c,
                        size,
                        w,
                        b,
                    };
                    Op::Residual(conv(w1, b1), conv(w2, b2))
                }
            });
        }
        Ok(Self {
            spec,
            dims,
            ops,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_dims(&self) -> Dims {
        self.dims[0]
    }

    pub fn output_dims(&self) -> Dims {
        *self.dims.last().expect("non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Same parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            dims: self.dims.clone(),
            ops: self.ops.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    /// Rebinds fully convolutional parameters to another input size.
    pub fn with_input(&self, input: Dims) -> Result<Self> {
        let mut net = Self::zeros(self.spec.with_input(input))?;
        for (dst, src) in net.params.iter_mut().zip(&self.params) {
            if dst.shape() != src.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter shape {:?} changes to {:?} at input {input:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.data.clone_from(&src.data);
        }
        Ok(net)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dims().len() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, network expects {:?}",
                x.len(),
                self.input_dims()
            )));
        }
        Ok(())
    }

    fn run(&self, x: &[T], upto: usize) -> Tape<T> {
        let mut tape = Tape {
            acts: Vec::with_capacity(upto + 1),
            extra: vec![Vec::new(); upto],
            argmax: vec![Vec::new(); upto],
        };
        tape.acts.push(x.to_vec());
        for (i, op) in self.ops[..upto].iter().enumerate() {
            let input = tape.acts.last().expect("non-empty");
            let out = match op {
                Op::Conv(c) => c.forward(&self.params, input),
                Op::Pool(d) => {
                    let (oh, ow) = (d.h / 2, d.w / 2);
                    let mut out = Vec::with_capacity(d.c * oh * ow);
                    let mut idx = Vec::with_capacity(d.c * oh * ow);
                    for c in 0..d.c {
                        for y in 0..oh {
                            for x in 0..ow {
                                let base = c * d.h * d.w + 2 * y * d.w + 2 * x;
                                let mut best = base;
                                for cand in [base + 1, base + d.w, base + d.w + 1] {
                                    if input[cand] > input[best] {
                                        best = cand;
                                    }
                                }
                                out.push(input[best]);
                                idx.push(best as u32);
                            }
                        }
                    }
                    tape.argmax[i] = idx;
                    out
                }
                Op::Relu => {
                    let mut out = input.clone();
                    relu(&mut out);
                    out
                }
                Op::Fc { inputs, w, b, .. } => {
                    let weights = &self.params[*w].data;
                    let mut out = self.params[*b].data.clone();
                    for (o, row) in out.iter_mut().zip(weights.chunks_exact(*inputs)) {
                        *o += dot(row, input);
                    }
                    out
                }
                Op::Softmax => softmax(input),
                Op::SumPool(d) => input
                    .chunks_exact(d.h * d.w)
                    .map(|plane| plane.iter().fold(T::zero(), |a, &v| a + v))
                    .collect(),
                Op::Residual(a, b) => {
                    let mut h = a.forward(&self.params, input);
                    relu(&mut h);
                    let mut out = b.forward(&self.params, &h);
                    for (o, v) in out.iter_mut().zip(input) {
                        *o += *v;
                    }
                    tape.extra[i] = h;
                    out
                }
            };
            tape.acts.push(out);
        }
        tape
    }

    /// Output of one sample (probabilities when the net ends in softmax).
    pub fn forward_one(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        Ok(self.run(x, self.ops.len()).acts.pop().expect("non-empty"))
    }

    /// Batch forward: `batch` has shape `(N, C, H, W)`; returns `(N, out)`.
    pub fn forward(&self, batch: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
        let d = self.input_dims();
        let shape = batch.shape();
        if shape.len() != 4 || shape[1..] != [d.c, d.h, d.w] {
            return Err(Error::ShapeMismatch(format!(
                "batch shape {shape:?}, network expects (N, {}, {}, {})",
                d.c, d.h, d.w
            )));
        }
        let rows: Vec<&[T]> = batch.data.chunks(d.len()).collect();
        let outs = exec.try_map(&rows, |x| self.forward_one(x))?;
        let width = self.output_dims().len();
        Tensor::from_vec(&[shape[0], width], outs.concat())
    }

    /// Logits: the output before a trailing softmax.
    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let upto = if self.spec.ends_in_softmax() {
            self.ops.len() - 1
        } else {
            self.ops.len()
        };
        Ok(self.run(x, upto).acts.pop().expect("non-empty"))
    }

    /// Predicted class (ties to the lowest index).
    pub fn classify(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    fn loss_depth(&self, loss: Loss) -> Result<usize> {
        match loss {
            Loss::CrossEntropy if self.spec.ends_in_softmax() => Ok(self.ops.len() - 1),
            Loss::CrossEntropy => Err(Error::ShapeMismatch(
                "cross-entropy needs a softmax output".into(),
            )),
            Loss::PixelBce if self.spec.ends_in_softmax() => {
                Err(Error::ShapeMismatch("pixel loss needs raw logits".into()))
            }
            Loss::PixelBce => Ok(self.ops.len()),
        }
    }

    /// Loss, correct-prediction credit and `scale * dloss/dz` for one output.
    fn head(z: &[T], target: Target<'_>, loss: Loss, scale: T) -> Result<(f64, f64, Vec<T>)> {
        match (loss, target) {
            (Loss::CrossEntropy, Target::Class(y)) => {
                if y >= z.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "class {y} out of {} outputs",
                        z.len()
                    )));
                }
                let p = softmax(z);
                let zf: Vec<f64> = z.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
                let m = zf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + zf.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                let lv = lse - zf[y];
                let hit = f64::from(u8::from(argmax(z) == y));
                let mut d: Vec<T> = p.iter().map(|&v| v * scale).collect();
                d[y] = d[y] - scale;
                Ok((lv, hit, d))
            }
            (Loss::PixelBce, Target::Mask(m)) => {
                if m.len() != z.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "mask of {} for {} outputs",
                        m.len(),
                        z.len()
                    )));
                }
                let n = z.len() as f64;
                let (mut lv, mut hits) = (0.0, 0.0);
                let mut d = Vec::with_capacity(z.len());
                for (&zi, &t) in z.iter().zip(m) {
                    let zf = zi.to_f64().unwrap_or(f64::NAN);
                    let tf = f64::from(t.min(1));
                    lv += zf.max(0.0) - zf * tf + (-zf.abs()).exp().ln_1p();
                    hits += f64::from(u8::from((zf > 0.0) == (t > 0)));
                    d.push(T::of((sigmoid(zf) - tf) / n) * scale);
                }
                Ok((lv / n, hits / n, d))
            }
            _ => Err(Error::ShapeMismatch(
                "target kind does not match the loss".into(),
            )),
        }
    }

    fn sample_grad(
        &self,
        x: &[T],
        target: Target<'_>,
        loss: Loss,
        scale: T,
        grads: &mut [Vec<T>],
    ) -> Result<(f64, f64)> {
        self.check_input(x)?;
        let upto = self.loss_depth(loss)?;
        let tape = self.run(x, upto);
        let (lv, hit, dz) = Self::head(tape.acts.last().expect("non-empty"), target, loss, scale)?;
        self.backprop(&tape, upto, dz, grads);
        Ok((lv, hit))
    }

    /// Summed loss and correct-prediction credit over samples, forward only.
    /// For pixel losses the credit is the per-sample fraction of correct pixels.
    pub fn evaluate(
        &self,
        inputs: &[Vec<T>],
        targets: &[Target<'_>],
        loss: Loss,
        exec: Exec,
    ) -> Result<(f64, f64)> {
        if inputs.len() != targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs for {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let upto = self.loss_depth(loss)?;
        let idx: Vec<usize> = (0..inputs.len()).collect();
        let per = exec.try_map(&idx, |&i| -> Result<(f64, f64)> {
            self.check_input(&inputs[i])?;
            let tape = self.run(&inputs[i], upto);
            let (lv, hit, _) = Self::head(
                tape.acts.last().expect("non-empty"),
                targets[i],
                loss,
                T::one(),
            )?;
            Ok((lv, hit))
        })?;
        Ok(per.iter().fold((0.0, 0.0), |(a, b), (l, h)| (a + l, b + h)))
    }

    fn backprop(&self, tape: &Tape<T>, upto: usize, mut d: Vec<T>, grads: &mut [Vec<T>]) {
        for i in (0..upto).rev() {
            let x = &tape.acts[i];
            let need_dx = i > 0;
            d = match &self.ops[i] {
                Op::Conv(c) => match c.backward(&self.params, x, &d, grads, need_dx) {
                    Some(dx) => dx,
                    None => return,
                },
                Op::Pool(dims) => {
                    let mut dx = vec![T::zero(); dims.len()];
                    for (g, &j) in d.iter().zip(&tape.argmax[i]) {
                        dx[j as usize] += *g;
                    }
                    dx
                }
                Op::Relu => {
                    let out = &tape.acts[i + 1];
                    d.iter()
                        .zip(out)
                        .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
                        .collect()
                }
                Op::Fc { inputs, w, b, .. } => {
                    for (row, &g) in grads[*w].chunks_exact_mut(*inputs).zip(&d) {
                        if g != T::zero() {
                            axpy(g, x, row);
                        }
                    }
                    for (gb, g) in grads[*b].iter_mut().zip(&d) {
                        *gb += *g;
                    }
                    if !need_dx {
                        return;
                    }
                    let mut dx = vec![T::zero(); *inputs];
                    for (row, &g) in self.params[*w].data.chunks_exact(*inputs).zip(&d) {
                        if g != T::zero() {
                            axpy(g, row, &mut dx);
                        }
                    }
                    dx
                }
                Op::SumPool(dims) => {
                    let plane = dims.h * dims.w;
                    let mut dx = vec![T::zero(); dims.len()];
                    for (chunk, &g) in dx.chunks_exact_mut(plane).zip(&d) {
                        chunk.fill(g);
                    }
                    dx
                }
                Op::Softmax => {
                    let p = &tape.acts[i + 1];
                    let mut dot = T::zero();
                    for (g, pv) in d.iter().zip(p) {
                        dot += *g * *pv;
                    }
                    d.iter().zip(p).map(|(&g, &pv)| pv * (g - dot)).collect()
                }
                Op::Residual(a, b) => {
                    let h = &tape.extra[i];
                    let dh = b
                        .backward(&self.params, h, &d, grads, true)
                        .expect("dx requested");
                    let dh: Vec<T> = dh
                        .iter()
                        .zip(h)
                        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                        .collect();
                    match a.backward(&self.params, x, &dh, grads, need_dx) {
                        Some(mut dx) => {
                            for (o, g) in dx.iter_mut().zip(&d) {
                                *o += *g;
                            }
                            dx
                        }
                        None => return,
                    }
                }
            };
        }
    }

    fn empty_grads(&self) -> Vec<Vec<T>> {
        self.params
            .iter()
            .map(|t| vec![T::zero(); t.len()])
            .collect()
    }

    /// Loss and gradient of the batch-mean loss, without touching `params`.
    pub fn batch_grad(
        &self,
        inputs: &[Vec<T>],
        targets: &[Target<'_>],
        loss: Loss,
        exec: Exec,
    ) -> Result<BatchGrad<T>> {
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs for {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let scale = T::one() / T::of(inputs.len() as f64);
        let chunks: Vec<usize> = (0..inputs.len()).step_by(CHUNK).collect();
        let parts = exec.try_map(&chunks, |&start| -> Result<BatchGrad<T>> {
            let mut grads = self.empty_grads();
            let (mut loss_sum, mut correct) = (0.0, 0.0);
            for i in start..(start + CHUNK).min(inputs.len()) {
                let (l, c) = self.sample_grad(&inputs[i], targets[i], loss, scale, &mut grads)?;
                loss_sum += l;
                correct += c;
            }
            Ok(BatchGrad {
                loss_sum,
                correct,
                grads,
            })
        })?;
        let mut parts = parts.into_iter();
        let mut total = parts.next().expect("non-empty batch");
        for p in parts {
            total.loss_sum += p.loss_sum;
            total.correct += p.correct;
            for (acc, g) in total.grads.iter_mut().zip(p.grads) {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        Ok(total)
    }

    /// Fills every parameter's `grad` with the gradient of the mean batch
    /// loss and returns that loss.
    pub fn backward(
        &mut self,
        inputs: &[Vec<T>],
        targets: &[Target<'_>],
        loss: Loss,
        exec: Exec,
    ) -> Result<f64> {
        let bg = self.batch_grad(inputs, targets, loss, exec)?;
        for (t, g) in self.params.iter_mut().zip(bg.grads) {
            t.grad = g;
        }
        Ok(bg.loss_sum / inputs.len() as f64)
    }

    /// Mean loss over a batch without gradients.
    pub fn loss(&self, inputs: &[Vec<T>], targets: &[Target<'_>], loss: Loss) -> Result<f64> {
        let (sum, _) = self.evaluate(inputs, targets, loss, Exec::Sequential)?;
        Ok(sum / inputs.len() as f64)
    }

    /// Flat view helpers used by optimizers and checks.
    pub fn flat_params(&self) -> Vec<T> {
        self.params
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> NetworkSpec {
        NetworkSpec {
            input: Dims::new(1, 8, 8),
            layers: vec![
                LayerSpec::Conv {
                    size: 3,
                    filters: 3,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool,
                LayerSpec::Conv {
                    size: 3,
                    filters: 4,
                },
                LayerSpec::Relu,
                LayerSpec::Fc { width: 6 },
                LayerSpec::Softmax,
            ],
            init_seed: seed,
        }
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let d = Dims::new(2, 5, 4);
        let k = 3;
        let x: Vec<f64> = (0..d.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..d.c * k * k * d.h * d.w)
            .map(|i| (i as f64 * 1.3).cos())
            .collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, d, k, &mut cols);
        let mut back = vec![0.0; d.len()];
        col2im(&y, d, k, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let spec = NetworkSpec {
            input: Dims::new(2, 5, 6),
            layers: vec![LayerSpec::Conv {
                size: 3,
                filters: 2,
            }],
            init_seed: 3,
        };
        let net = Network::<f64>::new(spec).unwrap();
        let d = Dims::new(2, 5, 6);
        let x: Vec<f64> = (0..d.len()).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let out = net.forward_one(&x).unwrap();
        let w = &net.params[0].data;
        let b = &net.params[1].data;
        for f in 0..2 {
            for y in 0..5i64 {
                for xx in 0..6i64 {
                    let mut s = b[f];
                    for c in 0..2 {
                        for ky in 0..3i64 {
                            for kx in 0..3i64 {
                                let (sy, sx) = (y + ky - 1, xx + kx - 1);
                                if (0..5).contains(&sy) && (0..6).contains(&sx) {
                                    s += w[((f * 2 + c) * 3 + ky as usize) * 3 + kx as usize]
                                        * x[c * 30 + sy as usize * 6 + sx as usize];
                                }
                            }
                        }
                    }
                    assert!((out[f * 30 + y as usize * 6 + xx as usize] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_net_is_uniform_and_rows_sum_to_one() {
        let net = Network::<f32>::zeros(NetworkSpec::count_classifier(64, 0)).unwrap();
        let batch = Tensor::from_vec(
            &[2, 1, 64, 64],
            (0..2 * 4096).map(|i| (i % 3) as f32).collect(),
        )
        .unwrap();
        let out = net.forward(&batch, Exec::default()).unwrap();
        assert_eq!(out.shape(), &[2, 6]);
        for v in &out.data {
            assert!((v - 1.0 / 6.0).abs() < 1e-6);
        }
        let random = Network::<f32>::new(NetworkSpec::count_classifier(64, 1)).unwrap();
        let out = random.forward(&batch, Exec::default()).unwrap();
        for row in out.data.chunks(6) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn wrong_batch_shape_is_rejected() {
        let net = Network::<f32>::new(tiny(0)).unwrap();
        let bad = Tensor::<f32>::zeros(&[1, 1, 9, 8]);
        assert!(matches!(
            net.forward(&bad, Exec::Sequential),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(net.forward_one(&[0.0; 3]).is_err());
    }

    #[test]
    fn untouched_parameters_get_zero_gradient() {
        // A zero input and zero first-layer weights leave the second conv
        // without signal: its weight gradient must be exactly zero.
        let mut net = Network::<f64>::new(tiny(2)).unwrap();
        net.params[0].data.iter_mut().for_each(|w| *w = 0.0);
        let x = vec![vec![0.0; 64]];
        net.backward(
            &x,
            &[Target::Class(2)],
            Loss::CrossEntropy,
            Exec::Sequential,
        )
        .unwrap();
        assert!(net.params[2].grad.iter().all(|&g| g == 0.0));
        assert!(net.params[0].grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn batch_gradient_is_independent_of_execution() {
        let net = Network::<f32>::new(tiny(5)).unwrap();
        let inputs: Vec<Vec<f32>> = (0..11)
            .map(|s| (0..64).map(|i| ((i * s) % 5) as f32 / 4.0).collect())
            .collect();
        let targets: Vec<Target> = (0..11).map(|i| Target::Class(i % 6)).collect();
        let a = net
            .batch_grad(&inputs, &targets, Loss::CrossEntropy, Exec::Sequential)
            .unwrap();
        let b = net
            .batch_grad(&inputs, &targets, Loss::CrossEntropy, Exec::Parallel)
            .unwrap();
        assert_eq!(a.grads, b.grads);
        assert_eq!(a.loss_sum, b.loss_sum);
    }
}
