//! Wasserstein critic with gradient penalty.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{affine, insert_affine, BoundParams, ParamSet};

const LAYER_NORM_EPS: f64 = 1e-5;
const NORM_EPS: f64 = 1e-12;
pub const DEFAULT_GP_LAMBDA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub hidden: usize,
    pub layers: usize,
    pub slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden: 200,
            layers: 2,
            slope: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    input_width: usize,
    config: DiscriminatorConfig,
}

impl Discriminator {
    pub fn new(input_width: usize, config: DiscriminatorConfig) -> Result<Self> {
        if input_width == 0 || config.hidden == 0 {
            return Err(Error::InvalidConfig(
                "critic input and hidden widths must be positive".into(),
            ));
        }
        Ok(Self {
            input_width,
            config,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn config(&self) -> DiscriminatorConfig {
        self.config
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet::new();
        let mut width = self.input_width;
        for l in 0..self.config.layers {
            insert_affine(&mut set, &mut rng, &format!("disc.l{l}"), width, self.config.hidden);
            set.insert(format!("disc.l{l}.gain"), Array2::ones((1, self.config.hidden)));
            set.insert(format!("disc.l{l}.bias"), Array2::zeros((1, self.config.hidden)));
            width = self.config.hidden;
        }
        insert_affine(&mut set, &mut rng, "disc.head", width, 1);
        set
    }

    /// Scores every row of `x`, returning a `batch x 1` node.
    pub fn score_on(&self, tape: &mut Tape, params: &BoundParams, x: Var) -> Var {
        let mut h = x;
        for l in 0..self.config.layers {
            h = affine(tape, params, &format!("disc.l{l}"), h);
            h = layer_norm(
                tape,
                h,
                params.var(&format!("disc.l{l}.gain")),
                params.var(&format!("disc.l{l}.bias")),
            );
            h = tape.leaky_relu(h, self.config.slope);
        }
        affine(tape, params, "disc.head", h)
    }

    fn check_width(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.input_width {
            return Err(Error::ShapeMismatch(format!(
                "critic expects {} columns, got {}",
                self.input_width,
                batch.ncols()
            )));
        }
        Ok(())
    }

    pub fn score(&self, params: &ParamSet, batch: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_width(batch)?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(batch.clone());
        let s = self.score_on(&mut tape, &bound, x);
        Ok(tape.value(s).iter().copied().collect())
    }

    /// Penalty value at seeded interpolation points between `real` and `fake`.
    pub fn gradient_penalty(
        &self,
        params: &ParamSet,
        real: &Array2<f64>,
        fake: &Array2<f64>,
        seed: u64,
    ) -> Result<f64> {
        self.check_width(real)?;
        self.check_width(fake)?;
        let eps = interpolation_weights(real.nrows(), &mut ChaCha8Rng::seed_from_u64(seed));
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let gp = gradient_penalty_on(&mut tape, real, fake, &eps, |t, x| self.score_on(t, &bound, x))?;
        Ok(tape.scalar(gp))
    }
}

fn layer_norm(tape: &mut Tape, x: Var, gain: Var, bias: Var) -> Var {
    let mu = tape.mean_rows(x);
    let centred = tape.sub(x, mu);
    let sq = tape.square(centred);
    let var = tape.mean_rows(sq);
    let var = tape.add_scalar(var, LAYER_NORM_EPS);
    let sd = tape.sqrt(var);
    let normed = tape.div(centred, sd);
    let scaled = tape.mul(normed, gain);
    tape.add(scaled, bias)
}

/// Uniform interpolation weights, one per row.
pub fn interpolation_weights<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Vec<f64> {
    (0..rows).map(|_| rng.random::<f64>()).collect()
}

/// `mean_rows (||grad_x score(x_hat)|| - 1)^2` with
/// `x_hat = eps * real + (1 - eps) * fake`, recorded on `tape` so that it can
/// be differentiated with respect to the scorer's parameters.
pub fn gradient_penalty_on<F>(
    tape: &mut Tape,
    real: &Array2<f64>,
    fake: &Array2<f64>,
    eps: &[f64],
    score: F,
) -> Result<Var>
where
    F: FnOnce(&mut Tape, Var) -> Var,
{
    if real.dim() != fake.dim() || eps.len() != real.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "real {:?}, fake {:?}, {} weights",
            real.dim(),
            fake.dim(),
            eps.len()
        )));
    }
    let e = Array2::from_shape_vec((eps.len(), 1), eps.to_vec()).expect("column of weights");
    let x_hat = real * &e + fake * &(1.0 - &e);
    let x = tape.param(x_hat);
    let scores = score(tape, x);
    let total = tape.sum(scores);
    let g = match tape.grad(total, &[x])[0] {
        Some(g) => g,
        None => tape.zeros(real.nrows(), real.ncols()),
    };
    let sq = tape.square(g);
    let norm2 = tape.sum_rows(sq);
    let norm2 = tape.add_scalar(norm2, NORM_EPS);
    let norm = tape.sqrt(norm2);
    let dev = tape.add_scalar(norm, -1.0);
    let dev2 = tape.square(dev);
    Ok(tape.mean(dev2))
}

/// `(loss_D, loss_G)` from per-row scores and a penalty value.
pub fn adversarial_losses(real_scores: &[f64], fake_scores: &[f64], gp: f64, lambda: f64) -> (f64, f64) {
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let (r, f) = (mean(real_scores), mean(fake_scores));
    (f - r + lambda * gp, -f)
}
