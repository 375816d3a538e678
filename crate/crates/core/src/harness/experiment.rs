//! Multi-run experiments: train on a biased table and evaluate against the
//! unbiased one, or complete a population and compare it with control totals.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::bias::{inject_bias, BiasRule};
use super::household::ControlTotals;
use crate::dag::{Dag, DagFile};
use crate::error::{Error, Result};
use crate::metrics::{assess, JsEntry, MetricsReport};
use crate::sampler::{complete, oversample_baseline, sample, sample_unconditional};
use crate::schema::{infer_schema, ingest_csv, write_csv, Column, DataTable, TableSchema};
use crate::trainer::{save_checkpoint, train, ModelCheckpoint, TrainingConfig};

/// Experiment description as read from JSON. Relative paths resolve against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub feeder: PathBuf,
    #[serde(default)]
    pub distributor: Option<PathBuf>,
    pub dag: PathBuf,
    #[serde(default)]
    pub ci: Vec<String>,
    #[serde(default)]
    pub bias_rules: Vec<BiasRule>,
    #[serde(default)]
    pub control_totals: Option<Vec<ControlTotals>>,
    #[serde(default = "one")]
    pub trainings: usize,
    #[serde(default = "one")]
    pub samples_per_training: usize,
    #[serde(default)]
    pub seed: u64,
    /// Schema file; inferred from the feeder when absent.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub training: TrainingConfig,
    /// SRMSE level for debiasing runs.
    #[serde(default = "level_one")]
    pub level: u8,
}

fn one() -> usize {
    1
}

fn level_one() -> u8 {
    1
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text)?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            fix(&mut config.feeder);
            fix(&mut config.dag);
            config.distributor.as_mut().map(fix);
            config.schema.as_mut().map(fix);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trainings == 0 || self.samples_per_training == 0 {
            return Err(Error::InvalidConfig(
                "trainings and samples_per_training must be positive".into(),
            ));
        }
        if self.distributor.is_some() != self.control_totals.is_some() {
            return Err(Error::InvalidConfig(
                "distributor and control_totals must be given together".into(),
            ));
        }
        for c in self.control_totals.iter().flatten() {
            c.validate()?;
        }
        Ok(())
    }
}

/// Evaluation of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub training: usize,
    pub sample: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasBundle {
    pub runs: Vec<RunReport>,
    /// Mean over runs of each run's mean SRMSE.
    pub mean_srmse: f64,
    /// Biased training table against the unbiased table.
    pub reference: MetricsReport,
    pub biased_rows: usize,
}

impl DebiasBundle {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path.as_ref())
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Inputs of a debiasing experiment.
#[derive(Debug, Clone)]
pub struct DebiasExperiment<'a> {
    pub feeder: &'a DataTable,
    pub bias_rules: &'a [BiasRule],
    pub dag: &'a Dag,
    pub ci: &'a [String],
    pub training: TrainingConfig,
    pub trainings: usize,
    pub samples_per_training: usize,
    pub seed: u64,
    pub level: u8,
    /// Upper bound on concurrently running trainings.
    pub jobs: usize,
}

/// Runs `f(0..n)` on up to `jobs` threads and returns the results in index order.
fn run_indexed<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|slot| slot.expect("every index ran"))
        .collect()
}

/// Trains `trainings` models on the biased feeder, draws
/// `samples_per_training` datasets from each using the unbiased table's
/// conditional inputs, and evaluates every dataset against the unbiased table.
/// Conditional-input columns are left out of the evaluation.
///
/// With `out`, each training writes `out/train_<i>/{checkpoint/, samples/, metrics.json}`
/// and the bundle goes to `out/bundle.json`.
pub fn run_debias_experiment(exp: &DebiasExperiment<'_>, out: Option<&Path>) -> Result<DebiasBundle> {
    if exp.trainings == 0 || exp.samples_per_training == 0 {
        return Err(Error::InvalidConfig(
            "trainings and samples_per_training must be positive".into(),
        ));
    }
    let biased = inject_bias(exp.feeder, exp.bias_rules, exp.seed)?;
    let exclude: Vec<&str> = exp.ci.iter().map(String::as_str).collect();
    let reference = assess(exp.feeder, &biased, exp.level, &exclude)?;
    let ci_source = exp.feeder.select_columns(&exclude)?;

    let per_training = run_indexed(exp.trainings, exp.jobs, |i| {
        let config = TrainingConfig {
            seed: exp.training.seed.wrapping_add(i as u64),
            ..exp.training.clone()
        };
        let model = train(&biased, exp.dag, exp.ci, &config)?.checkpoint;
        let dir = out.map(|o| o.join(format!("train_{i}")));
        if let Some(dir) = &dir {
            save_checkpoint(&model, dir.join("checkpoint"))?;
            create_dir(&dir.join("samples"))?;
        }
        let mut runs = Vec::with_capacity(exp.samples_per_training);
        for j in 0..exp.samples_per_training {
            let seed = exp.seed.wrapping_add((i * exp.samples_per_training + j) as u64);
            let synthetic = draw(&model, &ci_source, exp.feeder.n_rows(), seed)?;
            if let Some(dir) = &dir {
                write_csv(dir.join("samples").join(format!("sample_{j}.csv")), &synthetic)?;
            }
            runs.push(RunReport {
                training: i,
                sample: j,
                report: assess(exp.feeder, &synthetic, exp.level, &exclude)?,
            });
        }
        if let Some(dir) = &dir {
            write_json(&runs, &dir.join("metrics.json"))?;
        }
        Ok(runs)
    })?;

    let runs: Vec<RunReport> = per_training.into_iter().flatten().collect();
    let bundle = DebiasBundle {
        mean_srmse: bundle_mean(&runs),
        runs,
        reference,
        biased_rows: biased.n_rows(),
    };
    if let Some(out) = out {
        bundle.write_json(out.join("bundle.json"))?;
    }
    Ok(bundle)
}

fn bundle_mean(runs: &[RunReport]) -> f64 {
    let means: Vec<f64> = runs.iter().filter_map(|r| r.report.mean_srmse).collect();
    means.iter().sum::<f64>() / means.len() as f64
}

fn draw(model: &ModelCheckpoint, ci_source: &DataTable, n_rows: usize, seed: u64) -> Result<DataTable> {
    if ci_source.n_cols() == 0 {
        sample_unconditional(model, n_rows, seed)
    } else {
        sample(model, ci_source, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationReport {
    /// Completed distributor against the control totals.
    pub synthetic: Vec<JsEntry>,
    /// Stratum-matched resample of the feeder against the control totals.
    pub baseline: Vec<JsEntry>,
    pub mean_js_synthetic: f64,
    pub mean_js_baseline: f64,
}

impl PopulationReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path.as_ref())
    }
}

fn mean_js(entries: &[JsEntry]) -> f64 {
    entries.iter().map(|e| e.js).sum::<f64>() / entries.len().max(1) as f64
}

/// Inputs of a population-completion experiment.
#[derive(Debug, Clone)]
pub struct PopulationExperiment<'a> {
    pub feeder: &'a DataTable,
    /// Conditional-input columns of the target population.
    pub distributor: &'a DataTable,
    pub controls: &'a [ControlTotals],
    pub dag: &'a Dag,
    pub ci: &'a [String],
    pub training: TrainingConfig,
    pub seed: u64,
}

fn stratum_counts(table: &DataTable, var: &str) -> Result<BTreeMap<String, usize>> {
    let spec = table
        .spec(var)
        .ok_or_else(|| Error::UnknownVariable(var.to_owned()))?;
    let codes = table.column(var).and_then(Column::as_categorical).ok_or_else(|| {
        Error::SchemaMismatch(format!("stratum variable {var:?} must be categorical"))
    })?;
    let mut counts = BTreeMap::new();
    for &c in codes {
        *counts.entry(spec.categories[c as usize].clone()).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Trains on the feeder, completes the distributor, and reports the JS
/// distance per control variable and stratum. The baseline resamples feeder
/// rows so that each stratum matches the distributor's count.
///
/// With `out`, writes `out/population/{checkpoint/, samples/, metrics.json}`.
pub fn run_population_experiment(exp: &PopulationExperiment<'_>, out: Option<&Path>) -> Result<PopulationReport> {
    if exp.controls.is_empty() {
        return Err(Error::InvalidConfig("no control totals".into()));
    }
    let mut baselines: BTreeMap<&str, DataTable> = BTreeMap::new();
    for control in exp.controls {
        control.validate()?;
        let counts = stratum_counts(exp.distributor, &control.stratum_var)?;
        if let Some(missing) = control.distributions.keys().find(|s| !counts.contains_key(*s)) {
            return Err(Error::EmptyStratum(missing.clone()));
        }
        if !baselines.contains_key(control.stratum_var.as_str()) {
            let resampled = oversample_baseline(exp.feeder, &control.stratum_var, &counts, exp.seed)?;
            baselines.insert(&control.stratum_var, resampled);
        }
    }

    let model = train(exp.feeder, exp.dag, exp.ci, &exp.training)?.checkpoint;
    let completed = complete(&model, exp.distributor, exp.seed)?;

    let mut synthetic = Vec::new();
    let mut baseline = Vec::new();
    for control in exp.controls {
        synthetic.extend(control.js_against(&completed)?);
        baseline.extend(control.js_against(&baselines[control.stratum_var.as_str()])?);
    }
    let report = PopulationReport {
        mean_js_synthetic: mean_js(&synthetic),
        mean_js_baseline: mean_js(&baseline),
        synthetic,
        baseline,
    };
    if let Some(out) = out {
        let dir = out.join("population");
        save_checkpoint(&model, dir.join("checkpoint"))?;
        create_dir(&dir.join("samples"))?;
        write_csv(dir.join("samples").join("completed.csv"), &completed)?;
        for (var, table) in &baselines {
            write_csv(dir.join("samples").join(format!("baseline_{var}.csv")), table)?;
        }
        report.write_json(dir.join("metrics.json"))?;
    }
    Ok(report)
}

/// Either kind of experiment result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentReport {
    Debias(DebiasBundle),
    Population(PopulationReport),
}

/// Loads the files named by `config` and runs the experiment it describes:
/// population completion when a distributor is given, debiasing otherwise.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let feeder = match &config.schema {
        Some(path) => ingest_csv(&config.feeder, &TableSchema::from_json_file(path)?)?,
        None => {
            let schema = infer_schema(&config.feeder)?;
            ingest_csv(&config.feeder, &schema)?
        }
    };
    let dag = DagFile::from_json_file(&config.dag)?.dag();
    create_dir(out)?;
    match (&config.distributor, &config.control_totals) {
        (Some(path), Some(controls)) => {
            let ci: Vec<&str> = config.ci.iter().map(String::as_str).collect();
            let schema = feeder.schema().select(&ci)?;
            let distributor = ingest_csv(path, &schema)?;
            let exp = PopulationExperiment {
                feeder: &feeder,
                distributor: &distributor,
                controls,
                dag: &dag,
                ci: &config.ci,
                training: config.training.clone(),
                seed: config.seed,
            };
            Ok(ExperimentReport::Population(run_population_experiment(&exp, Some(out))?))
        }
        _ => {
            let exp = DebiasExperiment {
                feeder: &feeder,
                bias_rules: &config.bias_rules,
                dag: &dag,
                ci: &config.ci,
                training: config.training.clone(),
                trainings: config.trainings,
                samples_per_training: config.samples_per_training,
                seed: config.seed,
                level: config.level,
                jobs,
            };
            Ok(ExperimentReport::Debias(run_debias_experiment(&exp, Some(out))?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::bias::Test;
    use crate::harness::household::AggregateSpec;
    use crate::toy::{label_noise_dag, label_noise_table};

    fn tiny_training() -> TrainingConfig {
        TrainingConfig {
            epochs: 2,
            batch_size: 100,
            dims: crate::generator::GeneratorDims { d_z: 4, d_h: 8, d_f: 6 },
            discriminator: crate::discriminator::DiscriminatorConfig {
                hidden: 16,
                layers: 1,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn debias_bundle_shape_and_mean() {
        let feeder = label_noise_table(300, 0.1, 0);
        let rules = [BiasRule::new("x", Test::In(vec!["a".into()]), 0.7)];
        let ci = ["x".to_owned()];
        let dag = label_noise_dag();
        let exp = DebiasExperiment {
            feeder: &feeder,
            bias_rules: &rules,
            dag: &dag,
            ci: &ci,
            training: tiny_training(),
            trainings: 2,
            samples_per_training: 2,
            seed: 3,
            level: 1,
            jobs: 2,
        };
        let dir = tempfile::tempdir().unwrap();
        let bundle = run_debias_experiment(&exp, Some(dir.path())).unwrap();
        assert_eq!(bundle.runs.len(), 4);
        let members: Vec<f64> = bundle.runs.iter().map(|r| r.report.mean_srmse.unwrap()).collect();
        assert!((bundle.mean_srmse - members.iter().sum::<f64>() / 4.0).abs() < 1e-15);
        assert!(bundle.runs.iter().all(|r| r.report.srmse.iter().all(|e| e.variables != ["x"])));
        assert!(dir.path().join("train_1/samples/sample_1.csv").exists());
        assert!(dir.path().join("train_0/checkpoint/meta.json").exists());
        assert!(dir.path().join("bundle.json").exists());

        let serial = run_debias_experiment(&DebiasExperiment { jobs: 1, ..exp }, None).unwrap();
        assert_eq!(serial, bundle);
    }

    #[test]
    fn population_report_shape_and_self_consistent_baseline() {
        let feeder = label_noise_table(400, 0.1, 0);
        let distributor = label_noise_table(600, 0.1, 1).select_columns(&["x"]).unwrap();
        let control = ControlTotals::from_table(
            &feeder,
            &AggregateSpec {
                value_var: "z".into(),
                stratum_var: "x".into(),
                size_var: None,
                household_level: false,
            },
        )
        .unwrap();
        let ci = ["x".to_owned()];
        let dag = label_noise_dag();
        let exp = PopulationExperiment {
            feeder: &feeder,
            distributor: &distributor,
            controls: std::slice::from_ref(&control),
            dag: &dag,
            ci: &ci,
            training: tiny_training(),
            seed: 0,
        };
        let report = run_population_experiment(&exp, None).unwrap();
        assert_eq!(report.synthetic.len(), 5);
        assert_eq!(report.baseline.len(), 5);
        assert!(report.mean_js_baseline < 0.05, "{report:?}");
    }

    #[test]
    fn missing_feeder_stratum_is_reported() {
        let feeder = label_noise_table(400, 0.1, 0);
        let keep: Vec<usize> = (0..400).filter(|&r| feeder.label(r, "x") != Some("e")).collect();
        let partial = feeder.select_rows(&keep);
        let distributor = feeder.select_columns(&["x"]).unwrap();
        let control = ControlTotals::from_table(
            &feeder,
            &AggregateSpec {
                value_var: "z".into(),
                stratum_var: "x".into(),
                size_var: None,
                household_level: false,
            },
        )
        .unwrap();
        let dag = label_noise_dag();
        let ci = ["x".to_owned()];
        let exp = PopulationExperiment {
            feeder: &partial,
            distributor: &distributor,
            controls: std::slice::from_ref(&control),
            dag: &dag,
            ci: &ci,
            training: tiny_training(),
            seed: 0,
        };
        assert!(matches!(run_population_experiment(&exp, None), Err(Error::EmptyStratum(s)) if s == "e"));
    }
}
