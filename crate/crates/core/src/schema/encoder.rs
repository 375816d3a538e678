use indexmap::IndexMap;
use ndarray::{Array2, ArrayViewMut1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mixture::{fit_gaussian_mixture, GaussianMixture};
use super::{Column, DataTable, TableSchema, VariableSpec};
use crate::error::{Error, Result};

pub const DEFAULT_N_MODES: usize = 5;
pub const DEFAULT_SMOOTHING: f64 = 0.2;

/// Continuous values are normalised by their most likely mixture mode and
/// clipped to `CLIP` standard deviations.
const CLIP: f64 = 4.0;

/// Mixture-mode normalisation of a continuous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousEncoder {
    pub mixture: GaussianMixture,
}

impl ContinuousEncoder {
    pub fn n_modes(&self) -> usize {
        self.mixture.n_modes()
    }

    pub fn width(&self) -> usize {
        1 + self.n_modes()
    }

    fn encode_into(&self, value: f64, mut out: ArrayViewMut1<f64>) {
        let k = self.mixture.most_likely_mode(value);
        let (mu, sigma) = (self.mixture.means[k], self.mixture.stds[k]);
        out.fill(0.0);
        out[0] = ((value - mu) / (CLIP * sigma)).clamp(-1.0, 1.0);
        out[1 + k] = 1.0;
    }

    fn decode(&self, block: &[f64]) -> f64 {
        let k = argmax(&block[1..]);
        let u = block[0].clamp(-1.0, 1.0);
        u * CLIP * self.mixture.stds[k] + self.mixture.means[k]
    }
}

/// One-hot encoding with optional uniform smoothing noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub categories: Vec<String>,
    pub smoothing: f64,
}

impl CategoricalEncoder {
    pub fn width(&self) -> usize {
        self.categories.len()
    }

    fn encode_into<R: Rng + ?Sized>(&self, code: u32, mut out: ArrayViewMut1<f64>, noise: Option<&mut R>) {
        out.fill(0.0);
        out[code as usize] = 1.0;
        if let Some(rng) = noise {
            if self.smoothing > 0.0 {
                for v in out.iter_mut() {
                    *v += rng.random::<f64>() * self.smoothing;
                }
                let total = out.sum();
                out.mapv_inplace(|v| v / total);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VariableEncoder {
    Continuous(ContinuousEncoder),
    Categorical(CategoricalEncoder),
}

impl VariableEncoder {
    pub fn width(&self) -> usize {
        match self {
            VariableEncoder::Continuous(e) => e.width(),
            VariableEncoder::Categorical(e) => e.width(),
        }
    }
}

/// Fitted encoders for every variable of a schema, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSet {
    pub schema: TableSchema,
    pub encoders: IndexMap<String, VariableEncoder>,
}

impl EncoderSet {
    /// Fits one encoder per variable. Constant continuous columns get a single
    /// mode and are reported in the returned warning list.
    pub fn fit(table: &DataTable, n_modes: usize, smoothing: f64) -> Result<(Self, Vec<String>)> {
        if table.n_rows() == 0 {
            return Err(Error::EmptyTable);
        }
        if !(0.0..0.5).contains(&smoothing) {
            return Err(Error::InvalidConfig(format!(
                "smoothing must lie in [0, 0.5), got {smoothing}"
            )));
        }
        if n_modes == 0 {
            return Err(Error::InvalidConfig("n_modes must be at least 1".into()));
        }
        let mut warnings = Vec::new();
        let mut encoders = IndexMap::new();
        for (spec, column) in table.schema().variables.iter().zip(table.columns()) {
            let encoder = match column {
                Column::Categorical(_) => VariableEncoder::Categorical(CategoricalEncoder {
                    categories: spec.categories.clone(),
                    smoothing,
                }),
                Column::Continuous(values) => {
                    let mixture = match fit_gaussian_mixture(values, n_modes) {
                        Some(m) => m,
                        None => {
                            let msg = format!(
                                "degenerate column {:?}: constant value, fitted a single mode",
                                spec.name
                            );
                            log::warn!("{msg}");
                            warnings.push(msg);
                            GaussianMixture::single(values[0], degenerate_scale(spec))
                        }
                    };
                    VariableEncoder::Continuous(ContinuousEncoder { mixture })
                }
            };
            encoders.insert(spec.name.clone(), encoder);
        }
        Ok((
            Self {
                schema: table.schema().clone(),
                encoders,
            },
            warnings,
        ))
    }

    pub fn get(&self, name: &str) -> Option<&VariableEncoder> {
        self.encoders.get(name)
    }

    pub fn width(&self, name: &str) -> Result<usize> {
        self.get(name)
            .map(VariableEncoder::width)
            .ok_or_else(|| Error::UnknownVariable(name.to_owned()))
    }

    pub fn total_width(&self) -> usize {
        self.encoders.values().map(VariableEncoder::width).sum()
    }

    pub fn names(&self) -> Vec<&str> {
        self.encoders.keys().map(String::as_str).collect()
    }

    /// Encodes every schema variable, without smoothing noise.
    pub fn encode(&self, table: &DataTable) -> Result<Array2<f64>> {
        let names = self.names();
        self.encode_columns::<rand_chacha::ChaCha8Rng>(table, &names, None)
    }

    /// Encodes every schema variable with smoothing noise on categorical blocks.
    pub fn encode_noisy<R: Rng + ?Sized>(&self, table: &DataTable, rng: &mut R) -> Result<Array2<f64>> {
        let names = self.names();
        self.encode_columns(table, &names, Some(rng))
    }

    /// Encodes the named variables side by side, in the given order.
    ///
    /// Categorical columns are matched by label, so `table` may use its own
    /// category lists as long as every label is known to the encoder.
    pub fn encode_columns<R: Rng + ?Sized>(
        &self,
        table: &DataTable,
        names: &[&str],
        mut noise: Option<&mut R>,
    ) -> Result<Array2<f64>> {
        let widths = names
            .iter()
            .map(|n| self.width(n))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros((table.n_rows(), widths.iter().sum()));
        let mut offset = 0;
        for (name, width) in names.iter().zip(widths) {
            let encoder = &self.encoders[*name];
            let column = table
                .column(name)
                .ok_or_else(|| Error::MissingColumn((*name).to_owned()))?;
            let spec = table.spec(name).expect("column exists");
            match (encoder, column) {
                (VariableEncoder::Continuous(enc), Column::Continuous(values)) => {
                    for (row, &v) in values.iter().enumerate() {
                        let block = out.slice_mut(ndarray::s![row, offset..offset + width]);
                        enc.encode_into(v, block);
                    }
                }
                (VariableEncoder::Categorical(enc), Column::Categorical(codes)) => {
                    let remap = category_remap(spec, &enc.categories);
                    for (row, &code) in codes.iter().enumerate() {
                        let mapped = remap[code as usize].ok_or_else(|| Error::UnknownCategory {
                            value: spec.categories[code as usize].clone(),
                            column: (*name).to_owned(),
                            row: Some(row),
                        })?;
                        let block = out.slice_mut(ndarray::s![row, offset..offset + width]);
                        enc.encode_into(mapped, block, noise.as_deref_mut());
                    }
                }
                _ => {
                    return Err(Error::SchemaMismatch(format!(
                        "column {name:?} kind differs from its encoder"
                    )))
                }
            }
            offset += width;
        }
        Ok(out)
    }

    /// Decodes a matrix laid out like [`EncoderSet::encode`].
    pub fn decode(&self, matrix: &Array2<f64>) -> Result<DataTable> {
        let names = self.names();
        self.decode_columns(matrix, &names)
    }

    /// Decodes a matrix laid out like [`EncoderSet::encode_columns`] with `names`.
    pub fn decode_columns(&self, matrix: &Array2<f64>, names: &[&str]) -> Result<DataTable> {
        let widths = names
            .iter()
            .map(|n| self.width(n))
            .collect::<Result<Vec<_>>>()?;
        let total: usize = widths.iter().sum();
        if matrix.ncols() != total {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {} columns, encoders need {total}",
                matrix.ncols()
            )));
        }
        let mut columns = Vec::with_capacity(names.len());
        let mut offset = 0;
        for (name, width) in names.iter().zip(widths) {
            let block = matrix.slice(ndarray::s![.., offset..offset + width]);
            let column = match &self.encoders[*name] {
                VariableEncoder::Continuous(enc) => Column::Continuous(
                    block
                        .rows()
                        .into_iter()
                        .map(|r| enc.decode(r.as_slice().unwrap_or(&r.to_vec())))
                        .collect(),
                ),
                VariableEncoder::Categorical(_) => Column::Categorical(
                    block
                        .rows()
                        .into_iter()
                        .map(|r| argmax(&r.to_vec()) as u32)
                        .collect(),
                ),
            };
            columns.push(column);
            offset += width;
        }
        DataTable::new(self.schema.select(names)?, columns)
    }
}

fn degenerate_scale(spec: &VariableSpec) -> f64 {
    let declared = spec.bounds.map_or(0.0, |[lo, hi]| 1e-3 * (hi - lo));
    declared.max(1e-6)
}

/// Maps a table's category codes onto an encoder's category indices.
fn category_remap(spec: &VariableSpec, categories: &[String]) -> Vec<Option<u32>> {
    spec.categories
        .iter()
        .map(|label| categories.iter().position(|c| c == label).map(|i| i as u32))
        .collect()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
