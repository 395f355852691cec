//! Semi-supervised training: half-synthetic, half-realistic batches, the
//! reconstruction and editing branches, Adam, and MVE evaluation.

mod adam;
pub mod augment;
mod config;
mod dataset;
mod losses;
mod mve;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use config::TrainConfig;
pub use dataset::{
    augmented_example, augmented_shape, build_dataset, example_from_mesh, ingest_dir, realistic_example, split, synthetic_example,
    synthetic_shape, Dataset, ExampleKind, Labels, RealisticSource, Split, TrainingExample, POOL_SIZE,
};
pub use losses::{loss_reconstruction, loss_semantic, loss_similarity, loss_similarity_at, sample_edit, SampledEdit, EDIT_ROTATION_ANGLE};
pub use mve::{evaluate_mve, mve_from_predictions, MveReport};

use crate::encoder::{Encoder, EncoderGrads, EncoderWeights, ForwardCache};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::SurfaceSamples;
use crate::rng;
use crate::scalar::{lit, Real};
use crate::templates::Template;

/// Loss terms of one step, each averaged over its branch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub sem: f64,
    pub sem_edit: f64,
    pub rec: f64,
    pub rec_edit: f64,
    pub sim: f64,
    pub total: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "step,L_sem,L_sem',L_rec,L_rec',L_sim,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.sem, self.sem_edit, self.rec, self.rec_edit, self.sim, self.total
        )
    }

    pub fn is_finite(&self) -> bool {
        [self.sem, self.sem_edit, self.rec, self.rec_edit, self.sim, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut out = String::from(LossRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// How often each expensive operation ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub decodes: u64,
    pub edited_decodes: u64,
    pub similarity_evals: u64,
}

impl std::ops::AddAssign for OpCounters {
    fn add_assign(&mut self, o: Self) {
        self.decodes += o.decodes;
        self.edited_decodes += o.edited_decodes;
        self.similarity_evals += o.similarity_evals;
    }
}

/// One batch entry: the input cloud and, for synthetic shapes, the labels.
#[derive(Debug, Clone)]
pub struct BatchItem<'a, T> {
    pub cloud: Vec<Vec3<T>>,
    pub labels: Option<&'a Labels>,
}

/// Loss weights and branch switches used by [`batch_gradient`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub edit_branch: bool,
    pub sample_count: usize,
}

impl From<&TrainConfig> for LossWeights {
    fn from(c: &TrainConfig) -> Self {
        Self {
            alpha: c.alpha,
            beta: c.beta,
            gamma: c.gamma,
            edit_branch: c.edit_branch,
            sample_count: c.sample_count,
        }
    }
}

struct ExampleResult<T> {
    grad: Vec<T>,
    terms: [f64; 5],
    counters: OpCounters,
    samples: Option<SurfaceSamples>,
}

fn example_gradient<T: Real>(
    template: &Template,
    pred: &[T],
    item: &BatchItem<'_, T>,
    weights: &LossWeights,
    counts: (f64, f64),
    seed: u64,
    frozen: Option<&SurfaceSamples>,
) -> Result<ExampleResult<T>> {
    let spec = template.spec();
    let mut counters = OpCounters::default();
    let mut terms = [0.0; 5];
    let mut grad = vec![T::zero(); pred.len()];
    let mut samples = None;
    let add = |grad: &mut Vec<T>, g: &[T], w: f64| {
        let w = lit::<T>(w);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += w * *b;
        }
    };
    match item.labels {
        Some(labels) => {
            let (n, _) = counts;
            let gt: Vec<T> = labels.params.iter().map(|&x| lit(x)).collect();
            let gt_vertices: Vec<Vec3<T>> = labels.vertices.iter().map(|&v| geom::cast3(v)).collect();
            let (sem, g_sem) = loss_semantic(spec, pred, &gt)?;
            let vertices = template.decode_vertices(pred);
            counters.decodes += 1;
            let (rec, g_v) = loss_reconstruction(&vertices, &gt_vertices)?;
            add(&mut grad, &g_sem, weights.alpha / n);
            add(&mut grad, &template.vjp(pred, &g_v), weights.beta / n);
            terms[0] = sem.as_f64();
            terms[2] = rec.as_f64();
            if weights.edit_branch {
                let edit = sample_edit(spec, seed);
                let pred_e = edit.apply(pred);
                let gt_e = edit.apply(&gt);
                let (sem_e, g_sem_e) = loss_semantic(spec, &pred_e, &gt_e)?;
                let vertices_e = template.decode_vertices(&pred_e);
                let gt_vertices_e = template.decode_vertices(&gt_e);
                counters.edited_decodes += 2;
                let (rec_e, g_v_e) = loss_reconstruction(&vertices_e, &gt_vertices_e)?;
                let mut g_e = vec![T::zero(); pred.len()];
                add(&mut g_e, &g_sem_e, weights.alpha / n);
                add(&mut g_e, &template.vjp(&pred_e, &g_v_e), weights.beta / n);
                add(&mut grad, &edit.vjp(pred, &g_e), 1.0);
                terms[1] = sem_e.as_f64();
                terms[3] = rec_e.as_f64();
            }
        }
        None if pred.iter().any(|x| !x.is_finite()) => terms[4] = f64::NAN,
        None => {
            let (_, n) = counts;
            let mesh = template.mesh_from_vertices(template.decode_vertices(pred));
            counters.decodes += 1;
            let drawn = match frozen {
                Some(s) => s.clone(),
                None => SurfaceSamples::draw(&mesh, weights.sample_count, seed)?,
            };
            let (sim, g_v) = loss_similarity_at(&mesh, &item.cloud, &drawn)?;
            samples = Some(drawn);
            counters.similarity_evals += 1;
            add(&mut grad, &template.vjp(pred, &g_v), weights.gamma / n);
            terms[4] = sim.as_f64();
        }
    }
    Ok(ExampleResult {
        grad,
        terms,
        counters,
        samples,
    })
}

/// Result of [`batch_gradient`].
pub struct BatchGradient<T> {
    pub losses: LossRecord,
    pub grads: EncoderGrads<T>,
    pub cache: ForwardCache<T>,
    pub counters: OpCounters,
    /// Similarity sample locations drawn per example, `None` for
    /// synthetic examples.
    pub samples: Vec<Option<SurfaceSamples>>,
}

/// Total loss and its gradient in every trainable weight for one batch.
/// Per-example seeds are derived from `seed` and the batch position.
pub fn batch_gradient<T: Real>(
    weights: &EncoderWeights<T>,
    template: &Template,
    batch: &[BatchItem<'_, T>],
    loss: &LossWeights,
    seed: u64,
) -> Result<BatchGradient<T>> {
    batch_gradient_with_samples(weights, template, batch, loss, seed, None)
}

/// [`batch_gradient`] with the similarity sample locations of an earlier
/// call instead of fresh draws. Surface sampling picks faces by area, so
/// the loss as a function of the weights is only piecewise smooth unless
/// the samples are held fixed.
pub fn batch_gradient_with_samples<T: Real>(
    weights: &EncoderWeights<T>,
    template: &Template,
    batch: &[BatchItem<'_, T>],
    loss: &LossWeights,
    seed: u64,
    samples: Option<&[Option<SurfaceSamples>]>,
) -> Result<BatchGradient<T>> {
    if samples.is_some_and(|s| s.len() != batch.len()) {
        return Err(Error::Invalid("one sample set per batch item is required".into()));
    }
    let n_syn = batch.iter().filter(|b| b.labels.is_some()).count();
    let n_real = batch.len() - n_syn;
    let clouds: Vec<&[Vec3<T>]> = batch.iter().map(|b| b.cloud.as_slice()).collect();
    let (out, cache) = weights.forward_train(&clouds)?;
    let counts = (n_syn.max(1) as f64, n_real.max(1) as f64);
    let results = batch
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let pred: Vec<T> = out.row(i).to_vec();
            let frozen = samples.and_then(|s| s[i].as_ref());
            example_gradient(template, &pred, item, loss, counts, rng::derive(seed, i as u64), frozen)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad_out = Array2::zeros(out.dim());
    let mut sums = [0.0f64; 5];
    let mut counters = OpCounters::default();
    let mut drawn = Vec::with_capacity(batch.len());
    for (i, r) in results.into_iter().enumerate() {
        for (a, g) in grad_out.row_mut(i).iter_mut().zip(&r.grad) {
            *a = *g;
        }
        for (s, t) in sums.iter_mut().zip(r.terms) {
            *s += t;
        }
        counters += r.counters;
        drawn.push(r.samples);
    }
    let (ns, nr) = counts;
    let mut losses = LossRecord {
        step: 0,
        sem: sums[0] / ns,
        sem_edit: sums[1] / ns,
        rec: sums[2] / ns,
        rec_edit: sums[3] / ns,
        sim: sums[4] / nr,
        total: 0.0,
    };
    losses.total = loss.alpha * (losses.sem + losses.sem_edit)
        + loss.beta * (losses.rec + losses.rec_edit)
        + loss.gamma * losses.sim;
    let grads = weights.backward(&cache, &grad_out)?;
    Ok(BatchGradient {
        losses,
        grads,
        cache,
        counters,
        samples: drawn,
    })
}

/// One optimizer step: gradient, finite check, Adam update, running stats.
pub fn train_step<T: Real>(
    weights: &mut EncoderWeights<T>,
    adam: &mut AdamState<T>,
    template: &Template,
    batch: &[BatchItem<'_, T>],
    config: &TrainConfig,
    step: u64,
) -> Result<(LossRecord, OpCounters)> {
    let n_syn = batch.iter().filter(|b| b.labels.is_some()).count();
    if batch.is_empty() || 2 * n_syn != batch.len() {
        return Err(Error::Invalid(format!(
            "a batch must be half synthetic and half realistic, got {n_syn} of {}",
            batch.len()
        )));
    }
    let seed = rng::derive(rng::derive(config.seed, step), 1);
    let BatchGradient {
        mut losses,
        grads,
        cache,
        counters,
        ..
    } = batch_gradient(weights, template, batch, &LossWeights::from(config), seed)?;
    losses.step = step;
    if !losses.is_finite() || !grads.max_abs().is_finite() {
        return Err(Error::NonFinite {
            step,
            terms: format!(
                "L_sem={} L_sem'={} L_rec={} L_rec'={} L_sim={} total={} max|grad|={}",
                losses.sem,
                losses.sem_edit,
                losses.rec,
                losses.rec_edit,
                losses.sim,
                losses.total,
                grads.max_abs()
            ),
        });
    }
    adam.update(weights.trainable_mut(), grads.tensors(), config.learning_rate);
    weights.update_running_stats(&cache);
    Ok((losses, counters))
}

/// Draws the batch of `step`: `batch_size / 2` synthetic and realistic
/// training examples (with replacement), each with a random `points`-subset
/// of its pool.
pub fn draw_batch<'a>(dataset: &'a Split, config: &TrainConfig, step: u64) -> Result<Vec<BatchItem<'a, f32>>> {
    if dataset.synthetic.is_empty() || dataset.realistic.is_empty() {
        return Err(Error::Invalid("training split needs synthetic and realistic examples".into()));
    }
    let mut r = rng::seeded(rng::derive(rng::derive(config.seed, step), 0));
    let half = config.batch_size / 2;
    let mut picks = Vec::with_capacity(config.batch_size);
    for _ in 0..half {
        picks.push(&dataset.synthetic[r.random_range(0..dataset.synthetic.len())]);
    }
    for _ in 0..half {
        picks.push(&dataset.realistic[r.random_range(0..dataset.realistic.len())]);
    }
    picks
        .into_iter()
        .map(|ex| {
            if ex.pool.len() < config.points {
                return Err(Error::Invalid(format!(
                    "example {} has {} points, fewer than the {} requested",
                    ex.id,
                    ex.pool.len(),
                    config.points
                )));
            }
            let idx = rand::seq::index::sample(&mut r, ex.pool.len(), config.points);
            Ok(BatchItem {
                cloud: idx.iter().map(|i| ex.pool[i]).collect(),
                labels: ex.labels.as_ref(),
            })
        })
        .collect()
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub encoder: Encoder,
    pub losses: Vec<LossRecord>,
    pub evaluations: Vec<(u64, MveReport)>,
    pub counters: OpCounters,
}

/// Runs `config.steps` steps from a seeded initialization. `on_step` sees
/// every loss record as it is produced.
pub fn train(
    config: &TrainConfig,
    template: &Template,
    dataset: &Dataset,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    if template.class() != config.class {
        return Err(Error::Config(format!(
            "config is for {} but the template is {}",
            config.class,
            template.class()
        )));
    }
    let mut encoder = Encoder::new(template.clone(), rng::derive(config.seed, u64::MAX));
    let mut adam = AdamState::new(encoder.weights.trainable().iter().map(|t| t.len()));
    let mut losses = Vec::with_capacity(config.steps as usize);
    let mut evaluations = Vec::new();
    let mut counters = OpCounters::default();
    for step in 0..config.steps {
        let batch = draw_batch(&dataset.train, config, step)?;
        let (record, c) = train_step(&mut encoder.weights, &mut adam, template, &batch, config, step)?;
        counters += c;
        on_step(&record);
        losses.push(record);
        let done = step + 1;
        if config.eval_every > 0 && done % config.eval_every == 0 && done < config.steps {
            let report = evaluate_mve(&encoder.weights, template, &dataset.test.synthetic, config.points, &config.thresholds)?;
            evaluations.push((done, report));
        }
    }
    encoder.step = config.steps;
    let report = evaluate_mve(&encoder.weights, template, &dataset.test.synthetic, config.points, &config.thresholds)?;
    evaluations.push((config.steps, report));
    Ok(TrainOutput {
        encoder,
        losses,
        evaluations,
        counters,
    })
}

/// Builds the dataset described by `config`.
pub fn dataset_for(config: &TrainConfig, template: &Template) -> Result<Dataset> {
    build_dataset(
        template,
        config.synthetic,
        RealisticSource {
            augmented: config.realistic,
            dir: config.realistic_dir.as_deref(),
        },
        config.data_seed,
    )
}
