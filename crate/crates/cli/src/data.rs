//! On-disk datasets: normalized meshes, label files and a split manifest.
//!
//! ```text
//! out/
//!   manifest.json
//!   meshes/<id>.obj
//!   labels/<id>.json      synthetic examples only
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use semedit::mesh::{io, Mesh};
use semedit::rng;
use semedit::templates::{ClassId, Template};
use semedit::training::{self, Dataset, Split, TrainingExample};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

const SYNTHETIC_STREAM: u64 = 1;
const REALISTIC_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;
const POOL_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub id: String,
    /// Path of the normalized mesh, relative to the dataset directory.
    pub mesh: String,
    /// Path of the label file; synthetic examples only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntries {
    pub synthetic: Vec<Entry>,
    pub realistic: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub class: ClassId,
    pub spec_hash: String,
    pub seed: u64,
    pub train: SplitEntries,
    pub test: SplitEntries,
}

/// Ground-truth parameters of one synthetic example (normalized frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    pub class: ClassId,
    pub names: Vec<String>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GenDataOptions {
    pub class: ClassId,
    pub synthetic: usize,
    /// Detail-augmented shapes.
    pub realistic: usize,
    pub realistic_dir: Option<PathBuf>,
    pub seed: u64,
}

/// Parameter names in flat-vector order (rotations and the translation
/// expanded to `name.x`, `name.y`, `name.z`).
pub fn label_names(template: &Template) -> Vec<String> {
    let mut out = Vec::new();
    for p in &template.spec().params {
        if p.arity() == 1 {
            out.push(p.name.clone());
        } else {
            out.extend(["x", "y", "z"].map(|a| format!("{}.{a}", p.name)));
        }
    }
    out.extend(["x", "y", "z"].map(|a| format!("{}.{a}", semedit::templates::TRANSLATION_NAME)));
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_example(out: &Path, template: &Template, id: &str, mesh: &Mesh<f64>, params: Option<&[f64]>) -> Result<Entry> {
    let mesh_rel = format!("meshes/{id}.obj");
    io::save_mesh(mesh, out.join(&mesh_rel))?;
    let labels = match params {
        Some(p) => {
            let rel = format!("labels/{id}.json");
            let file = LabelFile {
                class: template.class(),
                names: label_names(template),
                params: p.to_vec(),
            };
            write_json(&out.join(&rel), &file)?;
            Some(rel)
        }
        None => None,
    };
    Ok(Entry {
        id: id.to_string(),
        mesh: mesh_rel,
        labels,
    })
}

fn ingest_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("obj" | "ply")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Generates, writes and splits a dataset; returns the manifest written to
/// `out/manifest.json`.
pub fn gen_data(options: &GenDataOptions, out: &Path) -> Result<Manifest> {
    if options.synthetic < 5 {
        bail!("need at least 5 synthetic shapes for a 4:1 split, got {}", options.synthetic);
    }
    let template = Template::builtin(options.class);
    fs::create_dir_all(out.join("meshes")).with_context(|| format!("creating {}", out.display()))?;
    fs::create_dir_all(out.join("labels"))?;

    let syn_seed = rng::derive(options.seed, SYNTHETIC_STREAM);
    let synthetic = (0..options.synthetic)
        .into_par_iter()
        .map(|i| {
            let (mesh, params) = training::synthetic_shape(&template, rng::derive(syn_seed, i as u64))?;
            write_example(out, &template, &format!("synthetic_{i:05}"), &mesh, Some(&params))
        })
        .collect::<Result<Vec<_>>>()?;

    let real_seed = rng::derive(options.seed, REALISTIC_STREAM);
    let mut realistic = (0..options.realistic)
        .into_par_iter()
        .map(|i| {
            let mesh = training::augmented_shape(&template, rng::derive(real_seed, i as u64))?;
            write_example(out, &template, &format!("realistic_{i:05}"), &mesh, None)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &options.realistic_dir {
        let ingested = ingest_paths(dir)?
            .par_iter()
            .map(|path| {
                let mesh = io::load_mesh(path)?;
                let (normalized, _) = mesh.normalized()?;
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                write_example(out, &template, &format!("ingested_{stem}"), &normalized, None)
            })
            .collect::<Result<Vec<_>>>()?;
        realistic.extend(ingested);
    }

    let split_seed = rng::derive(options.seed, SPLIT_STREAM);
    let (syn_train, syn_test) = training::split(synthetic, rng::derive(split_seed, 0));
    let (real_train, real_test) = training::split(realistic, rng::derive(split_seed, 1));
    let manifest = Manifest {
        class: options.class,
        spec_hash: template.spec_hash().to_string(),
        seed: options.seed,
        train: SplitEntries {
            synthetic: syn_train,
            realistic: real_train,
        },
        test: SplitEntries {
            synthetic: syn_test,
            realistic: real_test,
        },
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST))
}

pub fn read_labels(dir: &Path, entry: &Entry) -> Result<Option<Vec<f64>>> {
    match &entry.labels {
        Some(rel) => Ok(Some(read_json::<LabelFile>(&dir.join(rel))?.params)),
        None => Ok(None),
    }
}

fn load_entries(dir: &Path, template: &Template, entries: &[Entry], seed: u64) -> Result<Vec<TrainingExample>> {
    entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mesh = io::load_mesh(dir.join(&e.mesh))?;
            let params = read_labels(dir, e)?;
            training::example_from_mesh(template, e.id.clone(), &mesh, params, rng::derive(seed, i as u64))
                .with_context(|| format!("example {}", e.id))
        })
        .collect()
}

/// Reads a dataset written by [`gen_data`] into training examples.
pub fn load_dataset(dir: &Path, template: &Template) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    if manifest.class != template.class() || manifest.spec_hash != template.spec_hash() {
        bail!(
            "dataset is for a {} template with spec hash {}, expected {} with {}",
            manifest.class,
            manifest.spec_hash,
            template.class(),
            template.spec_hash()
        );
    }
    let pool_seed = rng::derive(manifest.seed, POOL_STREAM);
    let split = |s: &SplitEntries, k: u64| -> Result<Split> {
        let seed = rng::derive(pool_seed, k);
        Ok(Split {
            synthetic: load_entries(dir, template, &s.synthetic, rng::derive(seed, 0))?,
            realistic: load_entries(dir, template, &s.realistic, rng::derive(seed, 1))?,
        })
    };
    Ok(Dataset {
        train: split(&manifest.train, 0)?,
        test: split(&manifest.test, 1)?,
    })
}
