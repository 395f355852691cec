use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingExample;
use crate::encoder::EncoderWeights;
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::templates::Template;

/// Clouds encoded per forward pass during evaluation.
const EVAL_CHUNK: usize = 32;

/// Pooled fraction of test vertices whose error is below each threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MveReport {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
    pub shapes: usize,
    pub vertices: usize,
}

impl MveReport {
    pub fn from_errors(errors: &[f64], shapes: usize, thresholds: &[f64]) -> Self {
        let n = errors.len().max(1) as f64;
        let fractions = thresholds
            .iter()
            .map(|&t| errors.iter().filter(|&&e| e < t).count() as f64 / n)
            .collect();
        Self {
            thresholds: thresholds.to_vec(),
            fractions,
            shapes,
            vertices: errors.len(),
        }
    }

    pub fn fraction_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.fractions[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fraction\n");
        for (t, f) in self.thresholds.iter().zip(&self.fractions) {
            out.push_str(&format!("{t},{f}\n"));
        }
        out
    }

    /// Ablation-style table: one header row of thresholds, one row of
    /// percentages.
    pub fn table(&self) -> String {
        let header: Vec<String> = self.thresholds.iter().map(|t| format!("{:>8}", format!("<{t}"))).collect();
        let row: Vec<String> = self.fractions.iter().map(|f| format!("{:>7.1}%", 100.0 * f)).collect();
        format!(
            "MVE   {}\nmodel {}\n({} shapes, {} vertices)",
            header.join(" "),
            row.join(" "),
            self.shapes,
            self.vertices
        )
    }
}

fn vertex_errors(template: &Template, example: &TrainingExample, prediction: &[f64]) -> Result<Vec<f64>> {
    let labels = example
        .labels
        .as_ref()
        .ok_or_else(|| Error::Invalid(format!("example {} has no ground truth", example.id)))?;
    if prediction.len() != template.spec().len() {
        return Err(Error::Invalid(format!(
            "prediction has {} values, expected {}",
            prediction.len(),
            template.spec().len()
        )));
    }
    let vertices: Vec<Vec3<f64>> = template.decode_vertices(prediction);
    Ok(vertices
        .iter()
        .zip(&labels.vertices)
        .map(|(&a, &b)| geom::dist2(a, b).sqrt())
        .collect())
}

/// MVE of given parameter predictions against the synthetic `examples`.
pub fn mve_from_predictions(
    template: &Template,
    examples: &[TrainingExample],
    predictions: &[Vec<f64>],
    thresholds: &[f64],
) -> Result<MveReport> {
    if predictions.len() != examples.len() {
        return Err(Error::Invalid("one prediction per example is required".into()));
    }
    let per_shape = examples
        .par_iter()
        .zip(predictions)
        .map(|(e, p)| vertex_errors(template, e, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(MveReport::from_errors(&per_shape.concat(), examples.len(), thresholds))
}

/// Encodes each example's evaluation cloud and scores the decoded shape.
pub fn evaluate_mve(
    weights: &EncoderWeights<f32>,
    template: &Template,
    examples: &[TrainingExample],
    points: usize,
    thresholds: &[f64],
) -> Result<MveReport> {
    let predictions = examples
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let clouds: Vec<&[Vec3<f32>]> = chunk.iter().map(|e| e.eval_cloud(points)).collect();
            let out = weights.forward_eval(&clouds)?;
            Ok(out
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|&x| x as f64).collect::<Vec<f64>>())
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    mve_from_predictions(template, examples, &predictions, thresholds)
}
