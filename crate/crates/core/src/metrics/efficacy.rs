//! Train-on-synthetic, test-on-original predictive comparison.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::check_same_variables;
use super::gbdt::{Gbdt, GbdtConfig, Objective};
use crate::error::{Error, Result};
use crate::schema::{Column, DataTable};

const FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyResult {
    pub target: String,
    /// Loss on the original table of a learner fitted to the synthetic table.
    pub loss_synthetic: f64,
    /// Cross-validated loss of the same learner fitted to the original table.
    pub loss_original: f64,
    /// `(loss_synthetic - loss_original) / loss_original`; 0 is parity.
    pub relative: f64,
}

/// Features and target of `table` with categorical codes taken from
/// `reference`'s category lists.
fn design(table: &DataTable, reference: &DataTable, target: &str) -> Result<(Array2<f64>, Vec<f64>)> {
    let features: Vec<&str> = reference.schema().names().filter(|n| *n != target).collect();
    let encode = |name: &str| -> Result<Vec<f64>> {
        let spec = table.spec(name).ok_or_else(|| Error::UnknownVariable(name.to_owned()))?;
        let ref_spec = reference.spec(name).expect("same variables");
        match table.column(name).expect("spec implies column") {
            Column::Continuous(v) => Ok(v.clone()),
            Column::Categorical(codes) => codes
                .iter()
                .enumerate()
                .map(|(row, &c)| {
                    let label = &spec.categories[c as usize];
                    ref_spec
                        .category_index(label)
                        .map(f64::from)
                        .ok_or_else(|| Error::UnknownCategory {
                            value: label.clone(),
                            column: name.to_owned(),
                            row: Some(row),
                        })
                })
                .collect(),
        }
    };
    let mut x = Array2::zeros((table.n_rows(), features.len()));
    for (j, name) in features.iter().enumerate() {
        for (i, v) in encode(name)?.into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Ok((x, encode(target)?))
}

fn objective(reference: &DataTable, target: &str) -> Objective {
    let spec = reference.spec(target).expect("target checked");
    if spec.is_categorical() {
        Objective::Softmax {
            n_classes: spec.categories.len(),
        }
    } else {
        Objective::SquaredError
    }
}

fn check_classes(y: &[f64], objective: Objective, target: &str) -> Result<()> {
    if matches!(objective, Objective::Softmax { .. }) && y.iter().all(|&c| c == y[0]) {
        return Err(Error::SingleClassTarget(target.to_owned()));
    }
    Ok(())
}

/// Relative ML efficacy for one target with the default learner.
pub fn ml_efficacy(original: &DataTable, synthetic: &DataTable, target: &str, seed: u64) -> Result<EfficacyResult> {
    ml_efficacy_with(original, synthetic, target, seed, &GbdtConfig::default())
}

pub fn ml_efficacy_with(
    original: &DataTable,
    synthetic: &DataTable,
    target: &str,
    seed: u64,
    config: &GbdtConfig,
) -> Result<EfficacyResult> {
    check_same_variables(original.schema(), synthetic.schema())?;
    if original.schema().index_of(target).is_none() {
        return Err(Error::UnknownVariable(target.to_owned()));
    }
    if original.n_rows() < FOLDS || synthetic.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let objective = objective(original, target);
    let (x_orig, y_orig) = design(original, original, target)?;
    let (x_syn, y_syn) = design(synthetic, original, target)?;
    check_classes(&y_orig, objective, target)?;
    check_classes(&y_syn, objective, target)?;

    let model = Gbdt::fit(&x_syn, &y_syn, objective, config)?;
    let loss_synthetic = model.loss(&x_orig, &y_orig);

    let mut order: Vec<usize> = (0..original.n_rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut total = 0.0;
    for fold in 0..FOLDS {
        let mut test = Vec::new();
        let mut train = Vec::new();
        for (i, &r) in order.iter().enumerate() {
            if i % FOLDS == fold {
                test.push(r);
            } else {
                train.push(r);
            }
        }
        let pick = |rows: &[usize]| -> (Array2<f64>, Vec<f64>) {
            (
                x_orig.select(ndarray::Axis(0), rows),
                rows.iter().map(|&r| y_orig[r]).collect(),
            )
        };
        let (xt, yt) = pick(&train);
        let (xv, yv) = pick(&test);
        let fold_model = Gbdt::fit(&xt, &yt, objective, config)?;
        total += fold_model.loss(&xv, &yv) * yv.len() as f64;
    }
    let loss_original = total / original.n_rows() as f64;
    Ok(EfficacyResult {
        target: target.to_owned(),
        loss_synthetic,
        loss_original,
        relative: (loss_synthetic - loss_original) / loss_original,
    })
}

/// [`ml_efficacy`] for each target in turn.
pub fn ml_efficacy_all(
    original: &DataTable,
    synthetic: &DataTable,
    targets: &[&str],
    seed: u64,
) -> Result<Vec<EfficacyResult>> {
    targets
        .iter()
        .map(|t| ml_efficacy(original, synthetic, t, seed))
        .collect()
}
