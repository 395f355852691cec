//! Point-set encoder with hand-written backpropagation.
//!
//! Four shared per-point layers (3 → 64 → 128 → 128 → 256), each followed by
//! batch normalization over every point of the batch and ReLU, then a max
//! pool over the points of each cloud, then three dense layers
//! (256 → d → d → d+3). The first two head layers also get batch
//! normalization, over the clouds of the batch, and ReLU. The last layer's
//! outputs are raw for rotations and translation; scale outputs are
//! `default · exp(raw)`, which keeps them positive.

mod checkpoint;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::rng;
use crate::scalar::{cast, lit, Real};
use crate::templates::{ParamKind, Template};

pub use checkpoint::{
    load_checkpoint, peek_header, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader,
    TensorInfo, CHECKPOINT_VERSION, MAGIC,
};

/// Widths of the shared per-point layers, input first.
pub const POINT_WIDTHS: [usize; 5] = [3, 64, 128, 128, 256];
/// Every dense layer but the last is followed by batch norm and ReLU.
pub const LAYERS_WITH_BN: usize = 6;
pub const BN_EPSILON: f64 = 1e-5;
/// Fraction of the running statistics kept at each training step.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `in × out`
    pub w: Array2<T>,
    pub b: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

/// How a raw network output becomes a parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    /// `default · exp(raw)`
    Scale(f64),
    Raw,
}

/// All trainable tensors and batch-norm statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    /// Four per-point layers followed by three head layers.
    pub dense: Vec<Dense<T>>,
    /// One per dense layer except the last.
    pub bn: Vec<BatchNorm<T>>,
    pub head: Vec<Head>,
}

/// Gradients shaped like the trainable tensors of [`EncoderWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads<T> {
    pub dense: Vec<Dense<T>>,
    /// `(dγ, dβ)` per batch-norm layer.
    pub bn: Vec<(Array1<T>, Array1<T>)>,
}

struct BnLayerCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
    /// Post-ReLU output.
    output: Array2<T>,
    mean: Array1<T>,
    var: Array1<T>,
}

/// Intermediate values of a training-mode forward pass.
pub struct ForwardCache<T> {
    batch: usize,
    /// Stacked input points.
    input: Array2<T>,
    /// Four per-point layers, then the two hidden head layers.
    layers: Vec<BnLayerCache<T>>,
    argmax: Array2<usize>,
    pooled: Array2<T>,
    params: Array2<T>,
}

impl<T> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

fn uniform<T: Real>(r: &mut rng::SeededRng, bound: f64) -> T {
    lit(r.random_range(-bound..bound))
}

fn dense_init<T: Real>(r: &mut rng::SeededRng, fan_in: usize, fan_out: usize) -> Dense<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Array2::from_shape_simple_fn((fan_in, fan_out), || uniform(r, bound));
    let b = Array1::from_shape_simple_fn(fan_out, || uniform(r, bound));
    Dense { w, b }
}

impl<T: Real> EncoderWeights<T> {
    /// Fan-in uniform initialization, `U(-1/√fan_in, 1/√fan_in)` for weights
    /// and biases; batch norm starts as the identity.
    pub fn init(template: &Template, seed: u64) -> Self {
        let head = heads(template);
        let d = template.spec().d();
        let mut r = rng::seeded(seed);
        let mut dense = Vec::with_capacity(7);
        for k in 0..4 {
            dense.push(dense_init(&mut r, POINT_WIDTHS[k], POINT_WIDTHS[k + 1]));
        }
        dense.push(dense_init(&mut r, POINT_WIDTHS[4], d));
        dense.push(dense_init(&mut r, d, d));
        dense.push(dense_init(&mut r, d, d + 3));
        let bn = POINT_WIDTHS[1..]
            .iter()
            .chain(&[d, d])
            .map(|&n| BatchNorm {
                gamma: Array1::ones(n),
                beta: Array1::zeros(n),
                running_mean: Array1::zeros(n),
                running_var: Array1::ones(n),
            })
            .collect();
        Self { dense, bn, head }
    }

    pub fn output_len(&self) -> usize {
        self.head.len()
    }

    pub fn cast<U: Real>(&self) -> EncoderWeights<U> {
        let c1 = |a: &Array1<T>| a.mapv(cast::<T, U>);
        EncoderWeights {
            dense: self
                .dense
                .iter()
                .map(|l| Dense {
                    w: l.w.mapv(cast::<T, U>),
                    b: c1(&l.b),
                })
                .collect(),
            bn: self
                .bn
                .iter()
                .map(|b| BatchNorm {
                    gamma: c1(&b.gamma),
                    beta: c1(&b.beta),
                    running_mean: c1(&b.running_mean),
                    running_var: c1(&b.running_var),
                })
                .collect(),
            head: self.head.clone(),
        }
    }

    /// Trainable tensors in a fixed order: each dense layer's `w` then `b`,
    /// then each batch norm's `γ` then `β`.
    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(26);
        for l in &self.dense {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        for b in &self.bn {
            out.push(b.gamma.as_slice().expect("standard layout"));
            out.push(b.beta.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(26);
        for l in &mut self.dense {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        for b in &mut self.bn {
            out.push(b.gamma.as_slice_mut().expect("standard layout"));
            out.push(b.beta.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    fn stack(&self, clouds: &[&[Vec3<T>]]) -> Result<(Array2<T>, usize)> {
        let Some(first) = clouds.first() else {
            return Err(Error::Invalid("empty batch".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::Invalid("point clouds must be non-empty".into()));
        }
        if clouds.iter().any(|c| c.len() != n) {
            return Err(Error::Invalid(
                "all clouds in a batch must have the same point count".into(),
            ));
        }
        let mut x = Array2::zeros((clouds.len() * n, 3));
        for (row, p) in clouds.iter().flat_map(|c| c.iter()).enumerate() {
            if !crate::geom::is_finite(*p) {
                return Err(Error::Invalid("point cloud contains NaN or infinite coordinates".into()));
            }
            for a in 0..3 {
                x[[row, a]] = p[a];
            }
        }
        Ok((x, n))
    }

    fn finish(&self, raw: &Array2<T>) -> Array2<T> {
        let mut out = raw.clone();
        for mut row in out.rows_mut() {
            for (v, h) in row.iter_mut().zip(&self.head) {
                if let Head::Scale(default) = h {
                    *v = lit::<T>(*default) * v.exp();
                }
            }
        }
        out
    }

    /// Max over the points of each cloud, with the winning row indices
    /// (first maximum wins).
    fn pool(a: &Array2<T>, batch: usize, points: usize) -> (Array2<T>, Array2<usize>) {
        let width = a.ncols();
        let mut pooled = Array2::zeros((batch, width));
        let mut argmax = Array2::zeros((batch, width));
        let data = a.as_standard_layout();
        let data = data.as_slice().expect("standard layout");
        for b in 0..batch {
            let block = &data[b * points * width..(b + 1) * points * width];
            let mut best = vec![b * points; width];
            let mut val: Vec<T> = block[..width].to_vec();
            for (i, row) in block.chunks_exact(width).enumerate().skip(1) {
                for c in 0..width {
                    if row[c] > val[c] {
                        val[c] = row[c];
                        best[c] = b * points + i;
                    }
                }
            }
            for c in 0..width {
                pooled[[b, c]] = val[c];
                argmax[[b, c]] = best[c];
            }
        }
        (pooled, argmax)
    }

    /// Inference with running batch statistics. Pure.
    pub fn forward_eval(&self, clouds: &[&[Vec3<T>]]) -> Result<Array2<T>> {
        let (mut x, n) = self.stack(clouds)?;
        for k in 0..LAYERS_WITH_BN {
            if k == 4 {
                x = Self::pool(&x, clouds.len(), n).0;
            }
            x = bn_eval(x.dot(&self.dense[k].w), &self.dense[k].b, &self.bn[k]);
        }
        let raw = x.dot(&self.dense[6].w) + &self.dense[6].b;
        Ok(self.finish(&raw))
    }

    /// Training-mode forward: batch statistics, with everything backward
    /// needs. Running statistics are not touched; see
    /// [`EncoderWeights::update_running_stats`].
    pub fn forward_train(&self, clouds: &[&[Vec3<T>]]) -> Result<(Array2<T>, ForwardCache<T>)> {
        let (input, n) = self.stack(clouds)?;
        let mut layers: Vec<BnLayerCache<T>> = Vec::with_capacity(LAYERS_WITH_BN);
        let mut argmax = Array2::zeros((0, 0));
        let mut pooled = Array2::zeros((0, 0));
        for k in 0..LAYERS_WITH_BN {
            let z = match k {
                0 => input.dot(&self.dense[k].w),
                4 => {
                    (pooled, argmax) = Self::pool(&layers[3].output, clouds.len(), n);
                    pooled.dot(&self.dense[k].w)
                }
                _ => layers[k - 1].output.dot(&self.dense[k].w),
            };
            layers.push(bn_train(z, &self.dense[k].b, &self.bn[k]));
        }
        let raw = layers[5].output.dot(&self.dense[6].w) + &self.dense[6].b;
        let params = self.finish(&raw);
        let cache = ForwardCache {
            batch: clouds.len(),
            input,
            layers,
            argmax,
            pooled,
            params: params.clone(),
        };
        Ok((params, cache))
    }

    /// Blends the cached batch statistics into the running statistics. The
    /// running variance uses the unbiased batch variance.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        let keep = lit::<T>(BN_MOMENTUM);
        let take = T::one() - keep;
        for (bn, layer) in self.bn.iter_mut().zip(&cache.layers) {
            let rows = layer.output.nrows() as f64;
            let unbias = lit::<T>(if rows > 1.0 { rows / (rows - 1.0) } else { 1.0 });
            Zip::from(&mut bn.running_mean)
                .and(&layer.mean)
                .for_each(|r, &m| *r = keep * *r + take * m);
            Zip::from(&mut bn.running_var)
                .and(&layer.var)
                .for_each(|r, &v| *r = keep * *r + take * v * unbias);
        }
    }

    /// Gradients of a loss with respect to every trainable tensor, given its
    /// gradient with respect to the output parameters.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_params: &Array2<T>) -> Result<EncoderGrads<T>> {
        if grad_params.dim() != (cache.batch, self.output_len()) {
            return Err(Error::Invalid(format!(
                "gradient shape {:?} does not match the cached batch ({}, {})",
                grad_params.dim(),
                cache.batch,
                self.output_len()
            )));
        }
        // Through the output head.
        let mut d_raw = grad_params.clone();
        Zip::from(d_raw.rows_mut())
            .and(cache.params.rows())
            .for_each(|mut g, p| {
                for ((g, &p), h) in g.iter_mut().zip(p.iter()).zip(&self.head) {
                    if let Head::Scale(_) = h {
                        *g *= p;
                    }
                }
            });
        let layer_grad = |input: &Array2<T>, d_out: &Array2<T>| Dense {
            w: input.t().dot(d_out),
            b: d_out.sum_axis(Axis(0)),
        };
        let last = layer_grad(&cache.layers[5].output, &d_raw);
        let mut d_a = d_raw.dot(&self.dense[6].w.t());
        let mut dense_grads = Vec::with_capacity(7);
        let mut bn_grads = Vec::with_capacity(LAYERS_WITH_BN);
        for k in (0..LAYERS_WITH_BN).rev() {
            let layer = &cache.layers[k];
            let (dz, d_gamma, d_beta) = bn_backward(d_a, layer, &self.bn[k]);
            let input = match k {
                0 => &cache.input,
                4 => &cache.pooled,
                _ => &cache.layers[k - 1].output,
            };
            dense_grads.push(layer_grad(input, &dz));
            bn_grads.push((d_gamma, d_beta));
            d_a = match k {
                0 => Array2::zeros((0, 0)),
                4 => {
                    // Max pool routes each gradient to its winning point.
                    let d_pooled = dz.dot(&self.dense[4].w.t());
                    let mut d = Array2::<T>::zeros(cache.layers[3].output.dim());
                    for b in 0..cache.batch {
                        for c in 0..d_pooled.ncols() {
                            d[[cache.argmax[[b, c]], c]] += d_pooled[[b, c]];
                        }
                    }
                    d
                }
                _ => dz.dot(&self.dense[k].w.t()),
            };
        }
        dense_grads.reverse();
        bn_grads.reverse();
        dense_grads.push(last);
        Ok(EncoderGrads {
            dense: dense_grads,
            bn: bn_grads,
        })
    }
}

/// Batch norm over the rows of `z = x·W` followed by ReLU. The bias only
/// shifts the batch mean, so it is folded into it.
fn bn_train<T: Real>(mut z: Array2<T>, bias: &Array1<T>, bn: &BatchNorm<T>) -> BnLayerCache<T> {
    let rows = z.nrows();
    let inv_m = T::one() / lit::<T>(rows as f64);
    let eps = lit::<T>(BN_EPSILON);
    let width = z.ncols();
    let data = z.as_slice_mut().expect("standard layout");
    let mut mean_z = vec![T::zero(); width];
    for row in data.chunks_exact(width) {
        for (s, &v) in mean_z.iter_mut().zip(row) {
            *s += v;
        }
    }
    mean_z.iter_mut().for_each(|s| *s *= inv_m);
    let mut var = vec![T::zero(); width];
    for row in data.chunks_exact(width) {
        for ((s, &v), &mu) in var.iter_mut().zip(row).zip(&mean_z) {
            let c = v - mu;
            *s += c * c;
        }
    }
    var.iter_mut().for_each(|s| *s *= inv_m);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let gamma = bn.gamma.as_slice().expect("standard layout");
    let beta = bn.beta.as_slice().expect("standard layout");
    let mut output = Array2::<T>::zeros((rows, width));
    let out = output.as_slice_mut().expect("standard layout");
    for (row, orow) in data.chunks_exact_mut(width).zip(out.chunks_exact_mut(width)) {
        let params = mean_z.iter().zip(&inv_std).zip(gamma.iter().zip(beta));
        for ((v, o), ((&mu, &is), (&g, &b))) in row.iter_mut().zip(orow.iter_mut()).zip(params) {
            let xh = (*v - mu) * is;
            *v = xh;
            let y = xh * g + b;
            *o = if y > T::zero() { y } else { T::zero() };
        }
    }
    let mean = Array1::from_iter(mean_z.iter().zip(bias).map(|(&m, &b)| m + b));
    BnLayerCache {
        xhat: z,
        inv_std: Array1::from(inv_std),
        output,
        mean,
        var: Array1::from(var),
    }
}

/// Batch norm with running statistics followed by ReLU, applied to `z = x·W`.
fn bn_eval<T: Real>(mut z: Array2<T>, bias: &Array1<T>, bn: &BatchNorm<T>) -> Array2<T> {
    let eps = lit::<T>(BN_EPSILON);
    let scale = Zip::from(&bn.gamma)
        .and(&bn.running_var)
        .map_collect(|&g, &v| g / (v + eps).sqrt());
    let shift = Zip::from(&bn.beta)
        .and(&bn.running_mean)
        .and(&scale)
        .map_collect(|&b, &m, &s| b - m * s);
    Zip::from(z.rows_mut()).for_each(|mut row| {
        Zip::from(&mut row)
            .and(bias)
            .and(&scale)
            .and(&shift)
            .for_each(|v, &bias, &s, &t| {
                let y = (*v + bias) * s + t;
                *v = if y > T::zero() { y } else { T::zero() };
            });
    });
    z
}

/// From the gradient at a layer's ReLU output to the gradient at `z`, plus
/// `(dγ, dβ)`.
fn bn_backward<T: Real>(
    mut d: Array2<T>,
    layer: &BnLayerCache<T>,
    bn: &BatchNorm<T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let m = lit::<T>(d.nrows() as f64);
    let width = d.ncols();
    let mut d_gamma = vec![T::zero(); width];
    let mut d_beta = vec![T::zero(); width];
    let g = d.as_slice_mut().expect("standard layout");
    let out = layer.output.as_slice().expect("standard layout");
    let xhat = layer.xhat.as_slice().expect("standard layout");
    for ((grow, orow), xrow) in g
        .chunks_exact_mut(width)
        .zip(out.chunks_exact(width))
        .zip(xhat.chunks_exact(width))
    {
        let sums = d_gamma.iter_mut().zip(d_beta.iter_mut());
        for (((g, &o), &xh), (dg, db)) in grow.iter_mut().zip(orow).zip(xrow).zip(sums) {
            if !(o > T::zero()) {
                *g = T::zero();
            }
            *dg += *g * xh;
            *db += *g;
        }
    }
    // dz = inv_std·γ·(dy − Σdy/m − xhat·Σ(dy·xhat)/m)
    let a: Vec<T> = (0..width).map(|c| layer.inv_std[c] * bn.gamma[c]).collect();
    let c1: Vec<T> = d_beta.iter().map(|&v| v / m).collect();
    let c2: Vec<T> = d_gamma.iter().map(|&v| v / m).collect();
    for (grow, xrow) in g.chunks_exact_mut(width).zip(xhat.chunks_exact(width)) {
        let coeffs = a.iter().zip(c1.iter().zip(&c2));
        for ((g, &xh), (&a, (&c1, &c2))) in grow.iter_mut().zip(xrow).zip(coeffs) {
            *g = a * (*g - c1 - xh * c2);
        }
    }
    (d, Array1::from(d_gamma), Array1::from(d_beta))
}

impl<T: Real> EncoderGrads<T> {
    /// Same order as [`EncoderWeights::trainable`].
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(26);
        for l in &self.dense {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        for (g, b) in &self.bn {
            out.push(g.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

/// Output mapping for a template's parameter vector.
pub fn heads(template: &Template) -> Vec<Head> {
    let spec = template.spec();
    let mut out = Vec::with_capacity(spec.len());
    for p in &spec.params {
        match p.kind {
            ParamKind::Scale => out.push(Head::Scale(p.default)),
            _ => out.extend([Head::Raw; 3]),
        }
    }
    out.extend([Head::Raw; 3]);
    out
}

/// Encoder bound to its template, as loaded from a checkpoint.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub weights: EncoderWeights<f32>,
    pub template: Template,
    pub step: u64,
}

impl Encoder {
    pub fn new(template: Template, seed: u64) -> Self {
        Self {
            weights: EncoderWeights::init(&template, seed),
            template,
            step: 0,
        }
    }

    /// Encodes one normalized cloud.
    pub fn encode(&self, cloud: &[Vec3<f32>]) -> Result<Vec<f32>> {
        let out = self.weights.forward_eval(&[cloud])?;
        Ok(out.row(0).to_vec())
    }
}
