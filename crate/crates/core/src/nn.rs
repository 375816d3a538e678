//! Parameter storage, initialisation, and the Adam optimiser.

use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::autograd::{Tape, Var};

/// Named parameter arrays in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    arrays: IndexMap<String, Array2<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.arrays.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.arrays.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.arrays.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.arrays.values().map(Array2::len).sum()
    }

    /// Places every array on the tape, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .arrays
            .iter()
            .map(|(name, value)| {
                let var = if trainable {
                    tape.param(value.clone())
                } else {
                    tape.constant(value.clone())
                };
                (name.clone(), var)
            })
            .collect();
        BoundParams { vars }
    }
}

/// Tape handles for a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("parameter {name:?} not bound"),
        }
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().copied().collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }
}

/// Glorot-uniform weight matrix.
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng))
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize), std: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

/// `x W + b` with `W` stored as `name.w` and `b` as `name.b`.
pub fn affine(tape: &mut Tape, params: &BoundParams, name: &str, x: Var) -> Var {
    let w = params.var(&format!("{name}.w"));
    let b = params.var(&format!("{name}.b"));
    let xw = tape.matmul(x, w);
    tape.add(xw, b)
}

pub fn insert_affine<R: Rng + ?Sized>(
    set: &mut ParamSet,
    rng: &mut R,
    name: &str,
    fan_in: usize,
    fan_out: usize,
) {
    set.insert(format!("{name}.w"), glorot(rng, fan_in, fan_out));
    set.insert(format!("{name}.b"), Array2::zeros((1, fan_out)));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Adam with bias correction. Moment buffers are keyed like the parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: IndexMap<String, Array2<f64>>,
    second: IndexMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: IndexMap::new(),
            second: IndexMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads` pairs parameter names with gradient arrays.
    pub fn update<'a>(
        &mut self,
        params: &mut ParamSet,
        grads: impl IntoIterator<Item = (&'a str, Array2<f64>)>,
    ) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let param = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("unknown parameter {name:?}"));
            let m = self
                .first
                .entry(name.to_owned())
                .or_insert_with(|| Array2::zeros(grad.dim()));
            m.zip_mut_with(&grad, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
            let v = self
                .second
                .entry(name.to_owned())
                .or_insert_with(|| Array2::zeros(grad.dim()));
            v.zip_mut_with(&grad, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            ndarray::Zip::from(param)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    *p -= learning_rate * (m / c1) / ((v / c2).sqrt() + epsilon);
                });
        }
    }
}
