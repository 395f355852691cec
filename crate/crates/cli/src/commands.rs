use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use semedit::deform::{self, EditConfig, EncodedShape, WeightConfig};
use semedit::encoder::{load_checkpoint, peek_header, save_checkpoint};
use semedit::encoder::Encoder;
use semedit::mesh::{io, NormalizeTransform};
use semedit::templates::{self, ClassId, Edit, Template};
use semedit::training::{self, evaluate_mve, mve_from_predictions, MveReport, TrainConfig, TrainingExample};
use serde::{Deserialize, Serialize};

use crate::data::{self, label_names, GenDataOptions};
use crate::service;

#[derive(Debug, Parser)]
#[command(name = "semedit", version, about = "Semantic shape editing with parametric templates")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic + detail-augmented dataset with a 4:1 split.
    GenData(GenDataArgs),
    /// Train an encoder.
    Train(TrainArgs),
    /// Score a checkpoint (or stored predictions) on a dataset split.
    Eval(EvalArgs),
    /// Infer the semantic parameters of a mesh.
    Encode(EncodeArgs),
    /// Apply an edit list to an encoded parameter file.
    Edit(EditArgs),
    /// Edit a mesh: deform it by the template displacement of an edit list.
    Deform(DeformArgs),
    /// Run the HTTP editing service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub class: ClassId,
    #[arg(long, default_value_t = 4000)]
    pub synthetic: usize,
    /// Detail-augmented shapes [default: synthetic / 5].
    #[arg(long)]
    pub realistic: Option<usize>,
    /// Directory of OBJ/PLY meshes added to the realistic set.
    #[arg(long)]
    pub realistic_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset written by gen-data; generated in memory otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the checkpoint, loss log and evaluations.
    #[arg(long)]
    pub out: PathBuf,
    /// Config overrides, `key=value`.
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    pub ckpt: Option<PathBuf>,
    /// JSON object mapping example ids to parameter vectors.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.02, 0.03])]
    pub thresholds: Vec<f64>,
    /// Also write the fractions as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub edits: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Parameters written by `encode` for the same mesh.
    #[arg(long, conflicts_with = "ckpt", required_unless_present = "ckpt")]
    pub params: Option<PathBuf>,
    /// Encode on the fly instead of reading `--params`.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// JSON edit list; no edits when absent.
    #[arg(long)]
    pub edits: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Neighbours per vertex [default: 8 rigid, 4 humanoid].
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// One checkpoint per class to serve.
    #[arg(long, required = true)]
    pub ckpt: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

/// Output of `encode` and `edit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub class: ClassId,
    pub spec_hash: String,
    pub names: Vec<String>,
    /// Parameters in the normalized frame of the mesh.
    pub params: Vec<f64>,
    /// Normalization of the mesh: `x ↦ (x − center) · scale`.
    pub center: [f64; 3],
    pub scale: f64,
}

impl ParamFile {
    fn new(template: &Template, params: Vec<f64>, transform: &NormalizeTransform<f64>) -> Self {
        Self {
            class: template.class(),
            spec_hash: template.spec_hash().to_string(),
            names: label_names(template),
            params,
            center: transform.center,
            scale: transform.scale,
        }
    }

    fn template(&self) -> Result<Template> {
        let template = Template::builtin(self.class);
        if template.spec_hash() != self.spec_hash {
            bail!(
                "parameters were produced for spec hash {}, the {} template has {}",
                self.spec_hash,
                self.class,
                template.spec_hash()
            );
        }
        template.check_params(&self.params)?;
        Ok(template)
    }
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

/// A JSON edit list; an empty file means no edits.
pub fn read_edits(path: &Path) -> Result<Vec<Edit>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads a checkpoint with the builtin template its header names.
pub fn load_encoder(path: &Path) -> Result<Encoder> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let header = peek_header(&bytes)?;
    Ok(load_checkpoint(path, &Template::builtin(header.class))?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Encode(a) => encode(a),
        Command::Edit(a) => edit(a),
        Command::Deform(a) => deform_cmd(a),
        Command::Serve(a) => serve(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let options = GenDataOptions {
        class: a.class,
        synthetic: a.synthetic,
        realistic: a.realistic.unwrap_or(a.synthetic / 5),
        realistic_dir: a.realistic_dir,
        seed: a.seed,
    };
    let m = data::gen_data(&options, &a.out)?;
    println!(
        "{}: {} train / {} test synthetic, {} train / {} test realistic",
        a.out.display(),
        m.train.synthetic.len(),
        m.test.synthetic.len(),
        m.train.realistic.len(),
        m.test.realistic.len()
    );
    Ok(())
}

/// Resolves the training config; a dataset directory supplies the class
/// when neither the file nor the overrides do.
pub fn resolve_config(file: Option<&Path>, data: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let text = match file {
        Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let mut overrides = overrides.to_vec();
    if let Some(dir) = data {
        let manifest = data::read_manifest(dir)?;
        let in_file = text
            .as_deref()
            .and_then(|t| t.parse::<toml::Table>().ok())
            .is_some_and(|t| t.contains_key("class"));
        let in_overrides = overrides.iter().any(|o| o.split('=').next().map(str::trim) == Some("class"));
        if !in_file && !in_overrides {
            overrides.insert(0, format!("class=\"{}\"", manifest.class));
        }
    }
    Ok(TrainConfig::load(text.as_deref(), &overrides)?)
}

fn evaluations_csv(evaluations: &[(u64, MveReport)]) -> String {
    let mut out = String::from("step,threshold,fraction\n");
    for (step, r) in evaluations {
        for (t, f) in r.thresholds.iter().zip(&r.fractions) {
            out.push_str(&format!("{step},{t},{f}\n"));
        }
    }
    out
}

fn train(a: TrainArgs) -> Result<()> {
    let config = resolve_config(a.config.as_deref(), a.data.as_deref(), &a.overrides)?;
    let template = Template::builtin(config.class);
    let dataset = match &a.data {
        Some(dir) => data::load_dataset(dir, &template)?,
        None => training::dataset_for(&config, &template)?,
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let every = (config.steps / 20).max(1);
    let output = training::train(&config, &template, &dataset, |r| {
        if (r.step + 1) % every == 0 {
            log::info!(
                "step {} total {:.4} sem {:.4} rec {:.4} sim {:.4}",
                r.step + 1,
                r.total,
                r.sem,
                r.rec,
                r.sim
            );
        }
    })?;
    save_checkpoint(&output.encoder, a.out.join("checkpoint.bin"))?;
    fs::write(a.out.join("losses.csv"), training::loss_csv(&output.losses))?;
    fs::write(a.out.join("evaluations.csv"), evaluations_csv(&output.evaluations))?;
    fs::write(a.out.join("config.toml"), config.to_toml())?;
    let (_, last) = output.evaluations.last().ok_or_else(|| anyhow!("training produced no evaluation"))?;
    fs::write(a.out.join("mve.csv"), last.to_csv())?;
    println!("{}", last.table());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let manifest = data::read_manifest(&a.data)?;
    let template = Template::builtin(manifest.class);
    let dataset = data::load_dataset(&a.data, &template)?;
    let examples: &[TrainingExample] = match a.split {
        SplitName::Train => &dataset.train.synthetic,
        SplitName::Test => &dataset.test.synthetic,
    };
    let report = match (&a.ckpt, &a.predictions) {
        (Some(ckpt), _) => {
            let encoder = load_encoder(ckpt)?;
            if encoder.template.class() != template.class() {
                bail!("checkpoint is for {}, dataset is {}", encoder.template.class(), template.class());
            }
            evaluate_mve(&encoder.weights, &template, examples, a.points, &a.thresholds)?
        }
        (None, Some(path)) => {
            let map: BTreeMap<String, Vec<f64>> = read_json(path)?;
            let predictions = examples
                .iter()
                .map(|e| {
                    map.get(&e.id)
                        .cloned()
                        .ok_or_else(|| anyhow!("no prediction for example {}", e.id))
                })
                .collect::<Result<Vec<_>>>()?;
            mve_from_predictions(&template, examples, &predictions, &a.thresholds)?
        }
        (None, None) => bail!("either --ckpt or --predictions is required"),
    };
    println!("{}", report.table());
    if let Some(out) = &a.out {
        fs::write(out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<()> {
    let encoder = load_encoder(&a.ckpt)?;
    let mesh = io::load_mesh(&a.input)?;
    let config = EditConfig {
        points: a.points,
        seed: a.seed,
        ..EditConfig::for_class(encoder.template.class())
    };
    let encoded = deform::encode_shape(&encoder, &mesh, &config)?;
    write_json(&a.out, &ParamFile::new(&encoder.template, encoded.params, &encoded.transform))
}

fn edit(a: EditArgs) -> Result<()> {
    let file: ParamFile = read_json(&a.params)?;
    let template = file.template()?;
    let edits = read_edits(&a.edits)?;
    let params = templates::edit_params(template.spec(), &file.params, &edits)?;
    write_json(&a.out, &ParamFile { params, ..file })
}

fn deform_cmd(a: DeformArgs) -> Result<()> {
    let mesh = io::load_mesh(&a.input)?;
    let edits = match &a.edits {
        Some(p) => read_edits(p)?,
        None => Vec::new(),
    };
    let (template, encoded) = match (&a.params, &a.ckpt) {
        (Some(p), _) => {
            let file: ParamFile = read_json(p)?;
            let template = file.template()?;
            mesh.validate()?;
            let (normalized, transform) = mesh.normalized()?;
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
            let same = close(transform.scale, file.scale) && (0..3).all(|i| close(transform.center[i], file.center[i]));
            if !same {
                bail!("{} was not encoded from {}", p.display(), a.input.display());
            }
            let encoded = EncodedShape {
                normalized,
                transform,
                params: file.params,
            };
            (template, encoded)
        }
        (None, Some(ckpt)) => {
            let encoder = load_encoder(ckpt)?;
            let config = EditConfig {
                points: a.points,
                seed: a.seed,
                ..EditConfig::for_class(encoder.template.class())
            };
            let encoded = deform::encode_shape(&encoder, &mesh, &config)?;
            (encoder.template, encoded)
        }
        (None, None) => bail!("either --params or --ckpt is required"),
    };
    let mut weights = WeightConfig::for_class(template.class());
    if let Some(k) = a.k {
        weights.k = k;
    }
    let out = deform::deform_encoded(&template, &mesh, &encoded, &edits, weights)?;
    io::save_mesh(&out, &a.out)?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let encoders = a.ckpt.iter().map(|p| load_encoder(p)).collect::<Result<Vec<_>>>()?;
    let state = std::sync::Arc::new(service::AppState::new(encoders));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(state, &a.bind))
}
