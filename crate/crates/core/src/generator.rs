//! DAG-ordered generator: one LSTM-style cell per generated variable, fed by
//! its predecessors' transformed outputs and an attention summary of its
//! remaining ancestors.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::dag::{GeneratorGraph, NodeRole};
use crate::error::{Error, Result};
use crate::nn::{affine, insert_affine, normal, BoundParams, ParamSet};
use crate::schema::{EncoderSet, VariableEncoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorDims {
    pub d_z: usize,
    pub d_h: usize,
    pub d_f: usize,
}

impl Default for GeneratorDims {
    fn default() -> Self {
        Self {
            d_z: 32,
            d_h: 64,
            d_f: 48,
        }
    }
}

impl GeneratorDims {
    pub fn validate(&self) -> Result<()> {
        if self.d_z == 0 || self.d_h == 0 || self.d_f == 0 {
            return Err(Error::InvalidConfig(format!(
                "generator dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Width of a generated node's cell input: noise, parent context, attention.
    pub fn cell_input_width(&self) -> usize {
        self.d_z + 2 * self.d_f
    }
}

/// Activation applied to one slice of a node's output logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Softmax(usize),
    Tanh,
}

impl Block {
    fn width(self) -> usize {
        match self {
            Block::Softmax(w) => w,
            Block::Tanh => 1,
        }
    }
}

fn blocks_for(encoder: &VariableEncoder) -> Vec<Block> {
    match encoder {
        VariableEncoder::Categorical(e) => vec![Block::Softmax(e.width())],
        VariableEncoder::Continuous(e) => vec![Block::Tanh, Block::Softmax(e.n_modes())],
    }
}

/// Static layout of a generator: graph, per-node encoded widths and dims.
#[derive(Debug, Clone)]
pub struct Generator {
    graph: GeneratorGraph,
    dims: GeneratorDims,
    widths: Vec<usize>,
    blocks: Vec<Vec<Block>>,
}

/// Tape handles for one node after a forward pass. Conditional inputs only
/// carry `f`.
#[derive(Debug, Clone, Copy)]
pub struct NodeActivation {
    pub f: Var,
    pub cell: Option<Var>,
    pub hidden: Option<Var>,
    pub values: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Encoded generated variables side by side, in graph order.
    pub output: Var,
    pub activations: Vec<NodeActivation>,
    /// Node names in the order they were visited.
    pub visited: Vec<String>,
}

/// Standard-normal noise, one `batch x d_z` matrix per generated node.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBatch {
    pub z: Vec<Array2<f64>>,
}

impl NoiseBatch {
    pub fn sample<R: Rng + ?Sized>(generator: &Generator, batch: usize, rng: &mut R) -> Self {
        let d_z = generator.dims.d_z;
        let z = (0..generator.graph.generated().len())
            .map(|_| {
                Array2::from_shape_simple_fn((batch, d_z), || {
                    let v: f64 = StandardNormal.sample(rng);
                    v
                })
            })
            .collect();
        Self { z }
    }

    pub fn batch_size(&self) -> usize {
        self.z.first().map_or(0, Array2::nrows)
    }
}

impl Generator {
    pub fn new(graph: GeneratorGraph, encoders: &EncoderSet, dims: GeneratorDims) -> Result<Self> {
        dims.validate()?;
        if graph.generated().is_empty() {
            return Err(Error::InvalidConfig(
                "every variable is a conditional input; nothing to generate".into(),
            ));
        }
        let mut widths = Vec::with_capacity(graph.len());
        let mut blocks = Vec::with_capacity(graph.len());
        for node in &graph.nodes {
            let encoder = encoders
                .get(&node.name)
                .ok_or_else(|| Error::UnknownVariable(node.name.clone()))?;
            widths.push(encoder.width());
            blocks.push(blocks_for(encoder));
        }
        Ok(Self {
            graph,
            dims,
            widths,
            blocks,
        })
    }

    pub fn graph(&self) -> &GeneratorGraph {
        &self.graph
    }

    pub fn dims(&self) -> GeneratorDims {
        self.dims
    }

    /// Encoded width of the node at graph position `t`.
    pub fn width_at(&self, t: usize) -> usize {
        self.widths[t]
    }

    pub fn ci_width(&self) -> usize {
        self.role_width(NodeRole::ConditionalInput)
    }

    pub fn output_width(&self) -> usize {
        self.role_width(NodeRole::Generated)
    }

    fn role_width(&self, role: NodeRole) -> usize {
        self.graph
            .nodes
            .iter()
            .zip(&self.widths)
            .filter(|(n, _)| n.role == role)
            .map(|(_, w)| w)
            .sum()
    }

    /// Fresh parameters, a deterministic function of `seed`.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let GeneratorDims { d_h, d_f, .. } = self.dims;
        let mut set = ParamSet::new();
        set.insert("gen.f0", normal(&mut rng, (1, d_f), 0.1));
        for (node, &width) in self.graph.nodes.iter().zip(&self.widths) {
            let name = &node.name;
            match node.role {
                NodeRole::ConditionalInput => {
                    insert_affine(&mut set, &mut rng, &format!("gen.{name}.ci"), width, d_f);
                }
                NodeRole::Generated => {
                    let lstm = format!("gen.{name}.lstm");
                    insert_affine(&mut set, &mut rng, &lstm, self.dims.cell_input_width(), 4 * d_h);
                    insert_affine(&mut set, &mut rng, &format!("gen.{name}.out1"), d_h, d_h);
                    insert_affine(&mut set, &mut rng, &format!("gen.{name}.out2"), d_h, width);
                    insert_affine(&mut set, &mut rng, &format!("gen.{name}.in"), width, d_f);
                    if !node.attention.is_empty() {
                        set.insert(
                            format!("gen.{name}.attn"),
                            Array2::zeros((1, node.attention.len())),
                        );
                    }
                }
            }
        }
        set
    }

    /// Runs the generator over one batch.
    ///
    /// `ci_batch` holds the encoded conditional inputs side by side in graph
    /// order; it must have zero columns when there are none.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        noise: &NoiseBatch,
        ci_batch: &Array2<f64>,
    ) -> Result<ForwardOutput> {
        let batch = noise.batch_size();
        if noise.z.len() != self.graph.generated().len() {
            return Err(Error::ShapeMismatch(format!(
                "noise covers {} nodes, graph generates {}",
                noise.z.len(),
                self.graph.generated().len()
            )));
        }
        if noise.z.iter().any(|z| z.dim() != (batch, self.dims.d_z)) {
            return Err(Error::ShapeMismatch("noise matrices differ in shape".into()));
        }
        if ci_batch.ncols() != self.ci_width() || (self.ci_width() > 0 && ci_batch.nrows() != batch) {
            return Err(Error::ShapeMismatch(format!(
                "conditional inputs are {}x{}, expected {batch}x{}",
                ci_batch.nrows(),
                ci_batch.ncols(),
                self.ci_width()
            )));
        }

        let d_h = self.dims.d_h;
        let mut activations: Vec<NodeActivation> = Vec::with_capacity(self.graph.len());
        let mut visited = Vec::with_capacity(self.graph.len());
        let mut outputs = Vec::new();
        let mut ci_offset = 0;
        let mut noise_index = 0;

        for (t, node) in self.graph.nodes.iter().enumerate() {
            visited.push(node.name.clone());
            let name = &node.name;
            let width = self.widths[t];
            if node.role == NodeRole::ConditionalInput {
                let block = ci_batch.slice(s![.., ci_offset..ci_offset + width]).to_owned();
                ci_offset += width;
                let x = tape.constant(block);
                let f = ci_transform(tape, params, name, x);
                activations.push(NodeActivation {
                    f,
                    cell: None,
                    hidden: None,
                    values: None,
                });
                continue;
            }

            let z = tape.constant(noise.z[noise_index].clone());
            noise_index += 1;
            let f_pred: Vec<Var> = node.predecessors.iter().map(|&p| activations[p].f).collect();
            let f_bar = if f_pred.is_empty() {
                let f0 = params.var("gen.f0");
                tape.broadcast(f0, (batch, self.dims.d_f))
            } else {
                mean_of(tape, &f_pred)
            };
            let a = if node.attention.is_empty() {
                tape.zeros(batch, self.dims.d_f)
            } else {
                let f_att: Vec<Var> = node.attention.iter().map(|&k| activations[k].f).collect();
                attention(tape, &f_att, params.var(&format!("gen.{name}.attn")))
            };
            let input = node_input(tape, z, f_bar, a);

            let prev_cells: Vec<Var> = node
                .predecessors
                .iter()
                .filter_map(|&p| activations[p].cell)
                .collect();
            let c_in = if prev_cells.is_empty() {
                tape.zeros(batch, d_h)
            } else {
                mean_of(tape, &prev_cells)
            };

            let gates = affine(tape, params, &format!("gen.{name}.lstm"), input);
            let (cell, hidden) = lstm_step(tape, gates, c_in, d_h);

            let h1 = affine(tape, params, &format!("gen.{name}.out1"), hidden);
            let h1 = tape.tanh(h1);
            let logits = affine(tape, params, &format!("gen.{name}.out2"), h1);
            let values = activate(tape, logits, &self.blocks[t]);
            let f = affine(tape, params, &format!("gen.{name}.in"), values);
            outputs.push(values);
            activations.push(NodeActivation {
                f,
                cell: Some(cell),
                hidden: Some(hidden),
                values: Some(values),
            });
        }

        let output = tape.concat_cols(&outputs);
        Ok(ForwardOutput {
            output,
            activations,
            visited,
        })
    }

    /// Forward pass on frozen parameters, returning the encoded values.
    pub fn generate(
        &self,
        params: &ParamSet,
        noise: &NoiseBatch,
        ci_batch: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let out = self.forward(&mut tape, &bound, noise, ci_batch)?;
        Ok(tape.value(out.output).clone())
    }
}

fn mean_of(tape: &mut Tape, parts: &[Var]) -> Var {
    let mut acc = parts[0];
    for &p in &parts[1..] {
        acc = tape.add(acc, p);
    }
    if parts.len() == 1 {
        acc
    } else {
        tape.scale(acc, 1.0 / parts.len() as f64)
    }
}

/// `sum_k softmax(alpha)_k f_k`. `alpha` is `1 x K`, every `f_k` is `batch x d_f`.
pub fn attention(tape: &mut Tape, f_values: &[Var], alpha: Var) -> Var {
    assert_eq!(tape.shape(alpha).1, f_values.len(), "one weight per attended node");
    let weights = tape.softmax_rows(alpha);
    let mut acc: Option<Var> = None;
    for (k, &f) in f_values.iter().enumerate() {
        let w = tape.slice_cols(weights, k, k + 1);
        let term = tape.mul(f, w);
        acc = Some(match acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    }
    acc.expect("attention over at least one node")
}

/// Cell input `[z, f_bar, a]`.
pub fn node_input(tape: &mut Tape, z: Var, f_bar: Var, a: Var) -> Var {
    tape.concat_cols(&[z, f_bar, a])
}

/// Learned affine map of an encoded conditional input to width `d_f`.
pub fn ci_transform(tape: &mut Tape, params: &BoundParams, name: &str, encoded: Var) -> Var {
    affine(tape, params, &format!("gen.{name}.ci"), encoded)
}

/// LSTM update from gate pre-activations laid out as input, forget, output,
/// candidate. Returns `(C_t, h_t)`.
fn lstm_step(tape: &mut Tape, gates: Var, c_in: Var, d_h: usize) -> (Var, Var) {
    let i = tape.slice_cols(gates, 0, d_h);
    let i = tape.sigmoid(i);
    let f = tape.slice_cols(gates, d_h, 2 * d_h);
    let f = tape.sigmoid(f);
    let o = tape.slice_cols(gates, 2 * d_h, 3 * d_h);
    let o = tape.sigmoid(o);
    let g = tape.slice_cols(gates, 3 * d_h, 4 * d_h);
    let g = tape.tanh(g);
    let keep = tape.mul(f, c_in);
    let write = tape.mul(i, g);
    let cell = tape.add(keep, write);
    let squashed = tape.tanh(cell);
    let hidden = tape.mul(o, squashed);
    (cell, hidden)
}

fn activate(tape: &mut Tape, logits: Var, blocks: &[Block]) -> Var {
    let mut parts = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for &block in blocks {
        let w = block.width();
        let slice = tape.slice_cols(logits, offset, offset + w);
        parts.push(match block {
            Block::Tanh => tape.tanh(slice),
            Block::Softmax(_) => tape.softmax_rows(slice),
        });
        offset += w;
    }
    if parts.len() == 1 {
        parts[0]
    } else {
        tape.concat_cols(&parts)
    }
}
