//! Adversarial training loop.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, RngState, FORMAT_VERSION};

use std::io::Write;
use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::dag::{build_graph, Dag};
use crate::discriminator::{
    gradient_penalty_on, interpolation_weights, Discriminator, DiscriminatorConfig, DEFAULT_GP_LAMBDA,
};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorDims, NoiseBatch};
use crate::nn::{Adam, AdamConfig, ParamSet};
use crate::schema::{DataTable, EncoderSet, DEFAULT_N_MODES, DEFAULT_SMOOTHING};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: [f64; 2],
    pub n_critic: usize,
    pub gp_lambda: f64,
    pub seed: u64,
    pub dims: GeneratorDims,
    pub discriminator: DiscriminatorConfig,
    pub discriminator_conditioning: bool,
    /// Save a checkpoint every this many epochs when training into a directory.
    pub checkpoint_every: Option<usize>,
    pub n_modes: usize,
    pub smoothing: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 500,
            learning_rate: 2e-4,
            adam_betas: [0.5, 0.9],
            n_critic: 2,
            gp_lambda: DEFAULT_GP_LAMBDA,
            seed: 0,
            dims: GeneratorDims::default(),
            discriminator: DiscriminatorConfig::default(),
            discriminator_conditioning: true,
            checkpoint_every: None,
            n_modes: DEFAULT_N_MODES,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, n_rows: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.n_critic == 0 {
            return bad("epochs, batch_size and n_critic must be positive".into());
        }
        if self.batch_size > n_rows {
            return bad(format!(
                "batch_size {} exceeds the {n_rows} training rows",
                self.batch_size
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.gp_lambda >= 0.0) {
            return bad("learning_rate must be positive and gp_lambda non-negative".into());
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad(format!("adam betas must lie in [0, 1), got {:?}", self.adam_betas));
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive".into());
        }
        self.dims.validate()
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas[0],
            beta2: self.adam_betas[1],
            epsilon: 1e-8,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub gp: f64,
}

/// One record per generator step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.loss_d.is_finite() && r.loss_g.is_finite() && r.gp.is_finite())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "step", "loss_D", "loss_G", "gp"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.step.to_string(),
                r.loss_d.to_string(),
                r.loss_g.to_string(),
                r.gp.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("loss trace", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Rows of one batch and the matrices assembled from them.
#[derive(Debug, Clone)]
pub struct Batch {
    pub rows: Vec<usize>,
    /// Clean encoding of the conditional inputs, graph order.
    pub ci: Array2<f64>,
    /// Noisy encoding of the generated variables, graph order.
    pub real: Array2<f64>,
}

/// Splits a seeded permutation of `0..n` into consecutive batches; the last
/// batch may be short.
pub fn epoch_batches<R: rand::Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    rows.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub struct TrainOutput {
    pub checkpoint: ModelCheckpoint,
    pub trace: LossTrace,
}

/// Training state for one model.
pub struct Trainer {
    config: TrainingConfig,
    dag: Dag,
    ci_names: Vec<String>,
    feeder: DataTable,
    encoders: EncoderSet,
    generator: Generator,
    discriminator: Discriminator,
    gen_params: ParamSet,
    disc_params: ParamSet,
    gen_opt: Adam,
    disc_opt: Adam,
    ci_encoded: Array2<f64>,
    generated_names: Vec<String>,
    rng: ChaCha8Rng,
    epoch: usize,
    step: usize,
    trace: LossTrace,
}

impl Trainer {
    pub fn new(feeder: &DataTable, dag: &Dag, ci: &[String], config: TrainingConfig) -> Result<Self> {
        for name in ci {
            if feeder.schema().index_of(name).is_none() {
                return Err(Error::UnknownVariable(name.clone()));
            }
        }
        config.validate(feeder.n_rows())?;
        let graph = build_graph(dag, ci, feeder.schema())?;
        let (encoders, _warnings) = EncoderSet::fit(feeder, config.n_modes, config.smoothing)?;
        let generator = Generator::new(graph, &encoders, config.dims)?;
        let ci_width = if config.discriminator_conditioning {
            generator.ci_width()
        } else {
            0
        };
        let discriminator = Discriminator::new(generator.output_width() + ci_width, config.discriminator)?;
        let gen_params = generator.init_params(config.seed);
        let disc_params = discriminator.init_params(config.seed.wrapping_add(1));

        let ci_order: Vec<&str> = generator.graph().conditional_inputs();
        let ci_encoded = encoders.encode_columns::<ChaCha8Rng>(feeder, &ci_order, None)?;
        let generated_names = generator.graph().generated().into_iter().map(str::to_owned).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);

        Ok(Self {
            gen_opt: config.adam(),
            disc_opt: config.adam(),
            config,
            dag: dag.clone(),
            ci_names: ci.to_vec(),
            feeder: feeder.clone(),
            encoders,
            generator,
            discriminator,
            gen_params,
            disc_params,
            ci_encoded,
            generated_names,
            rng,
            epoch: 0,
            step: 0,
            trace: LossTrace::default(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn trace(&self) -> &LossTrace {
        &self.trace
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    /// Builds the generator and critic matrices for `rows`. Both come from the
    /// same feeder rows.
    pub fn assemble_batch(&mut self, rows: &[usize]) -> Result<Batch> {
        let ci = self.ci_encoded.select(Axis(0), rows);
        let subset = self.feeder.select_rows(rows);
        let names: Vec<&str> = self.generated_names.iter().map(String::as_str).collect();
        let real = self.encoders.encode_columns(&subset, &names, Some(&mut self.rng))?;
        Ok(Batch {
            rows: rows.to_vec(),
            ci,
            real,
        })
    }

    fn critic_input(&self, ci: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
        if self.config.discriminator_conditioning && ci.ncols() > 0 {
            concatenate(Axis(1), &[ci.view(), x.view()]).expect("rows agree")
        } else {
            x.clone()
        }
    }

    /// One critic update; returns `(loss_D, gp)`.
    fn critic_step(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let n = batch.rows.len();
        let noise = NoiseBatch::sample(&self.generator, n, &mut self.rng);
        let fake = self.generator.generate(&self.gen_params, &noise, &batch.ci)?;
        let real_in = self.critic_input(&batch.ci, &batch.real);
        let fake_in = self.critic_input(&batch.ci, &fake);
        let eps = interpolation_weights(n, &mut self.rng);

        let mut tape = Tape::new();
        let bound = self.disc_params.bind(&mut tape, true);
        let real_var = tape.constant(real_in.clone());
        let fake_var = tape.constant(fake_in.clone());
        let real_scores = self.discriminator.score_on(&mut tape, &bound, real_var);
        let fake_scores = self.discriminator.score_on(&mut tape, &bound, fake_var);
        let disc = &self.discriminator;
        let gp = gradient_penalty_on(&mut tape, &real_in, &fake_in, &eps, |t, x| disc.score_on(t, &bound, x))?;
        let mean_real = tape.mean(real_scores);
        let mean_fake = tape.mean(fake_scores);
        let gap = tape.sub(mean_fake, mean_real);
        let penalty = tape.scale(gp, self.config.gp_lambda);
        let loss = tape.add(gap, penalty);
        let (loss_value, gp_value) = (tape.scalar(loss), tape.scalar(gp));
        if !loss_value.is_finite() || !gp_value.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        let vars = bound.vars();
        let grads = tape.grad(loss, &vars);
        let updates: Vec<(String, Array2<f64>)> = self
            .disc_params
            .names()
            .zip(grads)
            .filter_map(|(name, g)| g.map(|g| (name.to_owned(), tape.value(g).clone())))
            .collect();
        self.disc_opt
            .update(&mut self.disc_params, updates.iter().map(|(n, g)| (n.as_str(), g.clone())));
        Ok((loss_value, gp_value))
    }

    fn generator_step(&mut self, batch: &Batch) -> Result<f64> {
        let n = batch.rows.len();
        let noise = NoiseBatch::sample(&self.generator, n, &mut self.rng);
        let mut tape = Tape::new();
        let gen_bound = self.gen_params.bind(&mut tape, true);
        let disc_bound = self.disc_params.bind(&mut tape, false);
        let out = self.generator.forward(&mut tape, &gen_bound, &noise, &batch.ci)?;
        let input = if self.config.discriminator_conditioning && batch.ci.ncols() > 0 {
            let ci = tape.constant(batch.ci.clone());
            tape.concat_cols(&[ci, out.output])
        } else {
            out.output
        };
        let scores = self.discriminator.score_on(&mut tape, &disc_bound, input);
        let mean = tape.mean(scores);
        let loss = tape.neg(mean);
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        let grads = tape.grad(loss, &gen_bound.vars());
        let updates: Vec<(String, Array2<f64>)> = self
            .gen_params
            .names()
            .zip(grads)
            .filter_map(|(name, g)| g.map(|g| (name.to_owned(), tape.value(g).clone())))
            .collect();
        self.gen_opt
            .update(&mut self.gen_params, updates.iter().map(|(n, g)| (n.as_str(), g.clone())));
        Ok(value)
    }

    /// Runs one epoch, handing every assembled batch to `observe` first.
    pub fn run_epoch_observed(&mut self, observe: &mut dyn FnMut(&Batch)) -> Result<()> {
        let batches = epoch_batches(self.feeder.n_rows(), self.config.batch_size, &mut self.rng);
        for rows in batches {
            let batch = self.assemble_batch(&rows)?;
            observe(&batch);
            let mut last = (0.0, 0.0);
            for _ in 0..self.config.n_critic {
                last = self.critic_step(&batch)?;
            }
            let loss_g = self.generator_step(&batch)?;
            self.trace.records.push(LossRecord {
                epoch: self.epoch,
                step: self.step,
                loss_d: last.0,
                loss_g,
                gp: last.1,
            });
            self.step += 1;
        }
        self.epoch += 1;
        log::debug!("epoch {} done, {} generator steps", self.epoch, self.step);
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<()> {
        self.run_epoch_observed(&mut |_| {})
    }

    /// Runs the remaining epochs. When `dir` is given, a checkpoint is written
    /// there every `checkpoint_every` epochs and at the end.
    pub fn run(&mut self, dir: Option<&Path>) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch()?;
            if let (Some(dir), Some(every)) = (dir, self.config.checkpoint_every) {
                if self.epoch % every == 0 {
                    save_checkpoint(&self.checkpoint(), dir)?;
                }
            }
        }
        if let Some(dir) = dir {
            save_checkpoint(&self.checkpoint(), dir)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            schema: self.feeder.schema().clone(),
            dag: self.dag.to_file(&self.ci_names),
            graph: self.generator.graph().clone(),
            encoders: self.encoders.clone(),
            config: self.config.clone(),
            epoch: self.epoch,
            rng: RngState::capture(&self.rng),
            generator_params: self.gen_params.clone(),
            discriminator_params: self.disc_params.clone(),
        }
    }

    pub fn finish(self) -> TrainOutput {
        TrainOutput {
            checkpoint: self.checkpoint(),
            trace: self.trace,
        }
    }
}

/// Trains a model on `feeder` and returns the final checkpoint with its loss trace.
pub fn train(feeder: &DataTable, dag: &Dag, ci: &[String], config: &TrainingConfig) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(feeder, dag, ci, config.clone())?;
    trainer.run(None)?;
    Ok(trainer.finish())
}
