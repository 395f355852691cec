use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment;
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{self, Mesh};
use crate::rng;
use crate::templates::{self, Distribution, Template};

/// Surface points stored per example; each training step draws its input
/// cloud from this pool.
pub const POOL_SIZE: usize = 1024;

const SYNTHETIC_STREAM: u64 = 1;
const REALISTIC_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleKind {
    Synthetic,
    Realistic,
}

/// Ground truth of a synthetic example, in its normalized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub params: Vec<f64>,
    pub vertices: Vec<Vec3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub id: String,
    pub kind: ExampleKind,
    /// Normalized surface points, in sampling order.
    pub pool: Vec<Vec3<f32>>,
    /// Present exactly for synthetic examples.
    pub labels: Option<Labels>,
}

impl TrainingExample {
    /// The first `count` pool points, used as the fixed evaluation input.
    pub fn eval_cloud(&self, count: usize) -> &[Vec3<f32>] {
        &self.pool[..count.min(self.pool.len())]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub synthetic: Vec<TrainingExample>,
    pub realistic: Vec<TrainingExample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Split,
}

/// A normalized synthetic shape with its labels rescaled into the same frame.
pub fn synthetic_shape(template: &Template, seed: u64) -> Result<(Mesh<f64>, Vec<f64>)> {
    let spec = template.spec();
    let params = templates::sample_params(spec, seed, Distribution::default_for(spec.class))?;
    let decoded = template.decode(&params)?;
    let (mesh, tf) = decoded.mesh.normalized()?;
    Ok((mesh, templates::rescale_params(spec, &params, &tf)))
}

/// A normalized detail-augmented decode of a random parameter vector.
pub fn augmented_shape(template: &Template, seed: u64) -> Result<Mesh<f64>> {
    let spec = template.spec();
    let params = templates::sample_params(spec, rng::derive(seed, 0), Distribution::default_for(spec.class))?;
    let decoded = template.decode(&params)?;
    let mesh = augment::augment(&decoded.mesh, rng::derive(seed, 1))?;
    Ok(mesh.normalized()?.0)
}

fn pool(mesh: &Mesh<f64>, seed: u64) -> Result<Vec<Vec3<f32>>> {
    let cloud = mesh::sample_points(mesh, POOL_SIZE, seed)?;
    Ok(cloud.points.iter().map(|&p| geom::cast3(p)).collect())
}

pub fn synthetic_example(template: &Template, seed: u64, index: usize) -> Result<TrainingExample> {
    let item = rng::derive(seed, index as u64);
    let (mesh, params) = synthetic_shape(template, item)?;
    Ok(TrainingExample {
        id: format!("synthetic_{index:05}"),
        kind: ExampleKind::Synthetic,
        pool: pool(&mesh, rng::derive(item, 7))?,
        labels: Some(Labels {
            params,
            vertices: mesh.vertices,
        }),
    })
}

pub fn augmented_example(template: &Template, seed: u64, index: usize) -> Result<TrainingExample> {
    let item = rng::derive(seed, index as u64);
    let mesh = augmented_shape(template, item)?;
    Ok(TrainingExample {
        id: format!("realistic_{index:05}"),
        kind: ExampleKind::Realistic,
        pool: pool(&mesh, rng::derive(item, 7))?,
        labels: None,
    })
}

/// A realistic example from any mesh; normalizes it first.
pub fn realistic_example(id: String, mesh: &Mesh<f64>, seed: u64) -> Result<TrainingExample> {
    let (normalized, _) = mesh.normalized()?;
    Ok(TrainingExample {
        id,
        kind: ExampleKind::Realistic,
        pool: pool(&normalized, seed)?,
        labels: None,
    })
}

/// An example from an already normalized mesh; synthetic examples carry
/// their parameters and the labels are decoded from them.
pub fn example_from_mesh(
    template: &Template,
    id: String,
    mesh: &Mesh<f64>,
    params: Option<Vec<f64>>,
    seed: u64,
) -> Result<TrainingExample> {
    let labels = match params {
        Some(params) => {
            template.check_params(&params)?;
            let vertices = template.decode_vertices(&params);
            Some(Labels { params, vertices })
        }
        None => None,
    };
    Ok(TrainingExample {
        id,
        kind: if labels.is_some() {
            ExampleKind::Synthetic
        } else {
            ExampleKind::Realistic
        },
        pool: pool(mesh, seed)?,
        labels,
    })
}

/// Loads every `.obj`/`.ply` file of `dir` (sorted by name).
pub fn ingest_dir(dir: &Path, seed: u64) -> Result<Vec<TrainingExample>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("obj" | "ply")) {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let mesh = mesh::io::load_mesh(path)?;
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            realistic_example(format!("ingested_{id}"), &mesh, rng::derive(seed, i as u64))
        })
        .collect()
}

/// Seeded 4:1 split; returns (train, test).
pub fn split<E>(items: Vec<E>, seed: u64) -> (Vec<E>, Vec<E>) {
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let n_train = n * 4 / 5;
    let mut slots: Vec<Option<E>> = items.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<E> { idx.iter().map(|&i| slots[i].take().expect("index used once")).collect() };
    let train = take(&order[..n_train]);
    let test = take(&order[n_train..]);
    (train, test)
}

/// Where realistic shapes come from.
#[derive(Debug, Clone, Copy)]
pub struct RealisticSource<'a> {
    /// Number of detail-augmented decodes; 0 disables augmentation.
    pub augmented: usize,
    pub dir: Option<&'a Path>,
}

/// Generates synthetic and realistic examples and splits each 4:1.
pub fn build_dataset(
    template: &Template,
    n_synthetic: usize,
    realistic: RealisticSource<'_>,
    seed: u64,
) -> Result<Dataset> {
    if n_synthetic < 5 {
        return Err(Error::Invalid(format!(
            "need at least 5 synthetic shapes for a 4:1 split, got {n_synthetic}"
        )));
    }
    let syn_seed = rng::derive(seed, SYNTHETIC_STREAM);
    let synthetic = (0..n_synthetic)
        .into_par_iter()
        .map(|i| synthetic_example(template, syn_seed, i))
        .collect::<Result<Vec<_>>>()?;
    let real_seed = rng::derive(seed, REALISTIC_STREAM);
    let mut real = (0..realistic.augmented)
        .into_par_iter()
        .map(|i| augmented_example(template, real_seed, i))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = realistic.dir {
        real.extend(ingest_dir(dir, rng::derive(real_seed, u64::MAX))?);
    }
    if real.is_empty() {
        return Err(Error::Invalid(
            "no realistic shapes: augmentation is disabled and no mesh directory was given".into(),
        ));
    }
    if real.len() < 5 {
        return Err(Error::Invalid(format!(
            "need at least 5 realistic shapes for a 4:1 split, got {}",
            real.len()
        )));
    }
    let split_seed = rng::derive(seed, SPLIT_STREAM);
    let (syn_train, syn_test) = split(synthetic, rng::derive(split_seed, 0));
    let (real_train, real_test) = split(real, rng::derive(split_seed, 1));
    Ok(Dataset {
        train: Split {
            synthetic: syn_train,
            realistic: real_train,
        },
        test: Split {
            synthetic: syn_test,
            realistic: real_test,
        },
    })
}
