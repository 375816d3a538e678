//! Sampling from a trained model and completing distributor tables.
//!
//! Rows are generated in chunks. Chunk `i` draws its noise from a ChaCha8
//! stream seeded with `seed` and stream number `i`, so output does not depend
//! on how the caller batches work beyond the chunk size.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::generator::{Generator, NoiseBatch};
use crate::schema::csv_io::push_cell;
use crate::schema::{Column, DataTable, TableSchema, VariableKind};
use crate::trainer::ModelCheckpoint;

pub const DEFAULT_CHUNK_SIZE: usize = 10_000;

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Frozen model ready to generate.
struct Model<'a> {
    ckpt: &'a ModelCheckpoint,
    generator: Generator,
    ci: Vec<String>,
    generated: Vec<String>,
}

impl<'a> Model<'a> {
    fn new(ckpt: &'a ModelCheckpoint) -> Result<Self> {
        Ok(Self {
            generator: ckpt.generator()?,
            ci: ckpt.conditional_inputs().into_iter().map(str::to_owned).collect(),
            generated: ckpt.generated().into_iter().map(str::to_owned).collect(),
            ckpt,
        })
    }

    fn generated_schema(&self) -> Result<TableSchema> {
        let names: Vec<&str> = self.schema_order(&self.generated);
        self.ckpt.schema.select(&names)
    }

    /// `names` rearranged into the trained schema's order.
    fn schema_order<'n>(&self, names: &'n [String]) -> Vec<&'n str> {
        let mut out: Vec<&str> = names.iter().map(String::as_str).collect();
        out.sort_by_key(|n| self.ckpt.schema.index_of(n));
        out
    }

    /// Checks that `table` holds every conditional input with the trained kind.
    fn check_ci(&self, table: &DataTable) -> Result<()> {
        for name in &self.ci {
            let spec = table
                .spec(name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))?;
            let trained = self.ckpt.schema.get(name).expect("ci in trained schema");
            if spec.kind != trained.kind {
                return Err(Error::SchemaMismatch(format!(
                    "conditional input {name:?} was trained as {:?}",
                    trained.kind
                )));
            }
        }
        Ok(())
    }

    /// Generated columns for every row of `ci_rows`, in schema order.
    /// `row_offset` only adjusts row numbers in error messages.
    fn generate(&self, ci_rows: &DataTable, rng: &mut ChaCha8Rng, row_offset: usize) -> Result<DataTable> {
        let n = ci_rows.n_rows();
        if n == 0 {
            return DataTable::empty(self.generated_schema()?);
        }
        let ci_order = self.generator.graph().conditional_inputs();
        let ci = self
            .ckpt
            .encoders
            .encode_columns::<ChaCha8Rng>(ci_rows, &ci_order, None)
            .map_err(|e| match e {
                Error::UnknownCategory { value, column, row } => Error::UnknownCategory {
                    value,
                    column,
                    row: row.map(|r| r + row_offset),
                },
                other => other,
            })?;
        let ci = if ci_order.is_empty() {
            Array2::zeros((n, 0))
        } else {
            ci
        };
        let noise = NoiseBatch::sample(&self.generator, n, rng);
        let encoded = self.generator.generate(&self.ckpt.generator_params, &noise, &ci)?;
        let graph_order = self.generator.graph().generated();
        let decoded = self.ckpt.encoders.decode_columns(&encoded, &graph_order)?;
        decoded.reorder(&self.schema_order(&self.generated))
    }

    fn generate_chunked(&self, ci_rows: &DataTable, seed: u64, chunk_size: usize) -> Result<DataTable> {
        check_chunk(chunk_size)?;
        let mut out = DataTable::empty(self.generated_schema()?)?;
        let mut start = 0;
        let mut chunk = 0;
        while start < ci_rows.n_rows() {
            let end = (start + chunk_size).min(ci_rows.n_rows());
            let part = self.generate(&ci_rows.slice_rows(start, end), &mut chunk_rng(seed, chunk), start)?;
            out = out.vstack(&part)?;
            start = end;
            chunk += 1;
        }
        Ok(out)
    }
}

fn check_chunk(chunk_size: usize) -> Result<()> {
    if chunk_size == 0 {
        return Err(Error::InvalidConfig("chunk size must be positive".into()));
    }
    Ok(())
}

/// One synthetic row per row of `ci_source`. Conditional-input columns are
/// copied from `ci_source` as they are; the result follows the trained
/// schema's column order.
pub fn sample(ckpt: &ModelCheckpoint, ci_source: &DataTable, seed: u64) -> Result<DataTable> {
    sample_chunked(ckpt, ci_source, seed, DEFAULT_CHUNK_SIZE)
}

pub fn sample_chunked(
    ckpt: &ModelCheckpoint,
    ci_source: &DataTable,
    seed: u64,
    chunk_size: usize,
) -> Result<DataTable> {
    let model = Model::new(ckpt)?;
    model.check_ci(ci_source)?;
    let generated = model.generate_chunked(ci_source, seed, chunk_size)?;
    let mut variables = Vec::with_capacity(ckpt.schema.len());
    let mut columns = Vec::with_capacity(ckpt.schema.len());
    for spec in &ckpt.schema.variables {
        let (spec, column) = if model.ci.contains(&spec.name) {
            (ci_source.spec(&spec.name), ci_source.column(&spec.name))
        } else {
            (generated.spec(&spec.name), generated.column(&spec.name))
        };
        variables.push(spec.expect("column present").clone());
        columns.push(column.expect("column present").clone());
    }
    DataTable::new(TableSchema { variables }, columns)
}

/// Samples a model trained without conditional inputs.
pub fn sample_unconditional(ckpt: &ModelCheckpoint, n_rows: usize, seed: u64) -> Result<DataTable> {
    let model = Model::new(ckpt)?;
    if !model.ci.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "model has conditional inputs {:?}; sample it with a source table",
            model.ci
        )));
    }
    let mut out = DataTable::empty(model.generated_schema()?)?;
    let mut start = 0;
    let mut chunk = 0;
    while start < n_rows {
        let end = (start + DEFAULT_CHUNK_SIZE).min(n_rows);
        let rows = end - start;
        let mut rng = chunk_rng(seed, chunk);
        let noise = NoiseBatch::sample(&model.generator, rows, &mut rng);
        let encoded = model
            .generator
            .generate(&ckpt.generator_params, &noise, &Array2::zeros((rows, 0)))?;
        let graph_order = model.generator.graph().generated();
        let decoded = ckpt.encoders.decode_columns(&encoded, &graph_order)?;
        out = out.vstack(&decoded.reorder(&model.schema_order(&model.generated))?)?;
        start = end;
        chunk += 1;
    }
    Ok(out)
}

fn check_collisions<'n>(model: &Model, names: impl IntoIterator<Item = &'n str>) -> Result<()> {
    for name in names {
        if model.generated.iter().any(|g| g == name) {
            return Err(Error::SchemaMismatch(format!(
                "distributor column {name:?} collides with a generated variable"
            )));
        }
    }
    Ok(())
}

/// Distributor columns followed by the generated complementary columns.
pub fn complete(ckpt: &ModelCheckpoint, distributor: &DataTable, seed: u64) -> Result<DataTable> {
    complete_chunked(ckpt, distributor, seed, DEFAULT_CHUNK_SIZE)
}

pub fn complete_chunked(
    ckpt: &ModelCheckpoint,
    distributor: &DataTable,
    seed: u64,
    chunk_size: usize,
) -> Result<DataTable> {
    let model = Model::new(ckpt)?;
    model.check_ci(distributor)?;
    check_collisions(&model, distributor.schema().names())?;
    let generated = model.generate_chunked(distributor, seed, chunk_size)?;
    distributor.hstack(&generated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct CompletionStats {
    pub rows: usize,
    pub chunks: usize,
    /// Largest number of rows held at once, input and output buffers combined.
    pub peak_rows_in_memory: usize,
}

/// Streams a distributor CSV to an output CSV chunk by chunk. Distributor
/// fields are written back exactly as read; generated columns are appended.
/// Output matches [`complete_chunked`] with the same seed and chunk size.
pub fn complete_csv<R: Read, W: Write>(
    ckpt: &ModelCheckpoint,
    input: R,
    output: W,
    seed: u64,
    chunk_size: usize,
) -> Result<CompletionStats> {
    check_chunk(chunk_size)?;
    let model = Model::new(ckpt)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    check_collisions(&model, headers.iter().map(str::trim))?;
    let ci_schema = ckpt
        .schema
        .select(&model.ci.iter().map(String::as_str).collect::<Vec<_>>())?;
    let positions = ci_schema
        .variables
        .iter()
        .map(|v| {
            headers
                .iter()
                .position(|h| h.trim() == v.name)
                .ok_or_else(|| Error::MissingColumn(v.name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let gen_schema = model.generated_schema()?;

    let mut writer = csv::Writer::from_writer(output);
    let mut header: Vec<String> = headers.iter().map(str::to_owned).collect();
    header.extend(gen_schema.names().map(str::to_owned));
    writer.write_record(&header)?;

    let mut stats = CompletionStats::default();
    let mut records = reader.records();
    let mut buffer: Vec<csv::StringRecord> = Vec::with_capacity(chunk_size);
    loop {
        buffer.clear();
        for record in records.by_ref().take(chunk_size) {
            buffer.push(record?);
        }
        if buffer.is_empty() {
            break;
        }
        let mut columns: Vec<Column> = ci_schema
            .variables
            .iter()
            .map(|v| match v.kind {
                VariableKind::Continuous => Column::Continuous(Vec::with_capacity(buffer.len())),
                VariableKind::Categorical => Column::Categorical(Vec::with_capacity(buffer.len())),
            })
            .collect();
        for (i, record) in buffer.iter().enumerate() {
            for ((spec, &pos), column) in ci_schema.variables.iter().zip(&positions).zip(&mut columns) {
                push_cell(column, spec, record.get(pos).unwrap_or("").trim(), stats.rows + i)?;
            }
        }
        let ci_rows = DataTable::new(ci_schema.clone(), columns)?;
        let generated = model.generate(&ci_rows, &mut chunk_rng(seed, stats.chunks), stats.rows)?;
        stats.peak_rows_in_memory = stats
            .peak_rows_in_memory
            .max(buffer.len() + generated.n_rows());
        let mut out = Vec::with_capacity(header.len());
        for (i, record) in buffer.iter().enumerate() {
            out.clear();
            out.extend(record.iter().map(str::to_owned));
            out.extend((0..generated.n_cols()).map(|c| generated.cell_label(i, c)));
            writer.write_record(&out)?;
        }
        stats.rows += buffer.len();
        stats.chunks += 1;
    }
    writer.flush().map_err(|e| Error::io("<completion output>", e))?;
    Ok(stats)
}

pub fn complete_csv_file(
    ckpt: &ModelCheckpoint,
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    seed: u64,
    chunk_size: usize,
) -> Result<CompletionStats> {
    let (input, output) = (input.as_ref(), output.as_ref());
    let reader = File::open(input).map_err(|e| Error::io(input, e))?;
    let writer = File::create(output).map_err(|e| Error::io(output, e))?;
    complete_csv(ckpt, BufReader::new(reader), BufWriter::new(writer), seed, chunk_size)
}

/// Resamples `feeder` with replacement so that stratum `s` of `strata_var`
/// contributes exactly `targets[s]` rows.
pub fn oversample_baseline(
    feeder: &DataTable,
    strata_var: &str,
    targets: &BTreeMap<String, usize>,
    seed: u64,
) -> Result<DataTable> {
    let rows = oversample_rows(feeder, strata_var, targets, seed)?;
    Ok(feeder.select_rows(&rows))
}

/// Row indices drawn by [`oversample_baseline`].
pub fn oversample_rows(
    feeder: &DataTable,
    strata_var: &str,
    targets: &BTreeMap<String, usize>,
    seed: u64,
) -> Result<Vec<usize>> {
    let spec = feeder
        .spec(strata_var)
        .ok_or_else(|| Error::UnknownVariable(strata_var.to_owned()))?;
    let codes = feeder
        .column(strata_var)
        .and_then(Column::as_categorical)
        .ok_or_else(|| Error::SchemaMismatch(format!("stratum variable {strata_var:?} must be categorical")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (stratum, &count) in targets {
        if count == 0 {
            continue;
        }
        let members: Vec<usize> = match spec.category_index(stratum) {
            Some(code) => (0..codes.len()).filter(|&i| codes[i] == code).collect(),
            None => vec![],
        };
        if members.is_empty() {
            return Err(Error::EmptyStratum(stratum.clone()));
        }
        out.extend((0..count).map(|_| members[rng.random_range(0..members.len())]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::VariableSpec;
    use crate::toy::{label_noise_dag, label_noise_table};
    use crate::trainer::{save_checkpoint, load_checkpoint, train, TrainingConfig};
    use crate::discriminator::DiscriminatorConfig;
    use crate::generator::GeneratorDims;
    use std::sync::OnceLock;

    fn config(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            epochs,
            batch_size: 100,
            dims: GeneratorDims {
                d_z: 4,
                d_h: 8,
                d_f: 6,
            },
            discriminator: DiscriminatorConfig {
                hidden: 16,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn model() -> &'static ModelCheckpoint {
        static MODEL: OnceLock<ModelCheckpoint> = OnceLock::new();
        MODEL.get_or_init(|| {
            train(&label_noise_table(300, 0.1, 0), &label_noise_dag(), &["x".into()], &config(2))
                .unwrap()
                .checkpoint
        })
    }

    fn ci_source(n: usize) -> DataTable {
        label_noise_table(n, 0.1, 9).select_columns(&["x"]).unwrap()
    }

    #[test]
    fn sample_copies_conditional_inputs() {
        let src = ci_source(100);
        let out = sample(model(), &src, 3).unwrap();
        assert_eq!(out.n_rows(), 100);
        assert_eq!(out.schema().names().collect::<Vec<_>>(), ["x", "y", "z"]);
        assert_eq!(out.column("x"), src.column("x"));
        assert_eq!(out, sample(model(), &src, 3).unwrap());
        assert_ne!(out, sample(model(), &src, 4).unwrap());
    }

    #[test]
    fn chunking_matches_across_entry_points() {
        let src = ci_source(250);
        let a = sample_chunked(model(), &src, 1, 64).unwrap();
        let b = complete_chunked(model(), &src, 1, 64).unwrap();
        assert_eq!(a, b);
        let mut csv_in = Vec::new();
        crate::schema::write_csv_writer(&mut csv_in, &src).unwrap();
        let mut csv_out = Vec::new();
        let stats = complete_csv(model(), csv_in.as_slice(), &mut csv_out, 1, 64).unwrap();
        assert_eq!((stats.rows, stats.chunks), (250, 4));
        assert!(stats.peak_rows_in_memory <= 128);
        let mut expected = Vec::new();
        crate::schema::write_csv_writer(&mut expected, &a).unwrap();
        assert_eq!(String::from_utf8(csv_out).unwrap(), String::from_utf8(expected).unwrap());
    }

    #[test]
    fn unseen_category_names_row_and_column() {
        let schema = TableSchema::new(vec![VariableSpec::categorical("x", ["a", "zz"])]).unwrap();
        let src = DataTable::new(schema, vec![Column::Categorical(vec![0, 0, 1])]).unwrap();
        match sample(model(), &src, 0) {
            Err(Error::UnknownCategory { value, column, row }) => {
                assert_eq!((value.as_str(), column.as_str(), row), ("zz", "x", Some(2)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn completion_keeps_extra_columns_and_rejects_collisions() {
        let src = ci_source(20);
        let ids = TableSchema::new(vec![VariableSpec::continuous("id")]).unwrap();
        let ids = DataTable::new(ids, vec![Column::Continuous((0..20).map(f64::from).collect())]).unwrap();
        let dist = src.hstack(&ids).unwrap();
        let out = complete(model(), &dist, 0).unwrap();
        assert_eq!(out.schema().names().collect::<Vec<_>>(), ["x", "id", "y", "z"]);
        assert_eq!(out.column("id"), dist.column("id"));

        let clash = label_noise_table(20, 0.1, 1).select_columns(&["x", "y"]).unwrap();
        assert!(matches!(complete(model(), &clash, 0), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn zero_row_distributor() {
        let empty = ci_source(5).slice_rows(0, 0);
        let out = complete(model(), &empty, 0).unwrap();
        assert_eq!(out.n_rows(), 0);
        assert_eq!(out.n_cols(), 3);
    }

    #[test]
    fn loaded_checkpoint_samples_identically() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(model(), dir.path()).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();
        let src = ci_source(50);
        assert_eq!(sample(model(), &src, 11).unwrap(), sample(&loaded, &src, 11).unwrap());
    }

    #[test]
    fn unconditional_sampling() {
        let ckpt = train(&label_noise_table(200, 0.1, 0), &label_noise_dag(), &[], &config(1))
            .unwrap()
            .checkpoint;
        let out = sample_unconditional(&ckpt, 30, 0).unwrap();
        assert_eq!(out.n_rows(), 30);
        assert_eq!(out.schema().names().collect::<Vec<_>>(), ["x", "y", "z"]);
        assert!(sample_unconditional(model(), 5, 0).is_err());
    }

    #[test]
    fn oversampling_hits_targets() {
        let t = label_noise_table(200, 0.1, 2);
        let targets: BTreeMap<String, usize> = [("a".into(), 12), ("b".into(), 0), ("c".into(), 7)].into();
        let out = oversample_baseline(&t, "x", &targets, 5).unwrap();
        assert_eq!(out.n_rows(), 19);
        let codes = out.column("x").unwrap().as_categorical().unwrap();
        assert_eq!(codes.iter().filter(|&&c| c == 0).count(), 12);
        assert_eq!(codes.iter().filter(|&&c| c == 2).count(), 7);
        assert_eq!(
            oversample_rows(&t, "x", &targets, 5).unwrap(),
            oversample_rows(&t, "x", &targets, 5).unwrap()
        );
        let small = t.select_rows(&[0]);
        let label = small.label(0, "x").unwrap().to_owned();
        let out = oversample_baseline(&small, "x", &[(label, 12)].into(), 0).unwrap();
        assert_eq!(out.n_rows(), 12);
        assert!(matches!(
            oversample_baseline(&small, "x", &[("nope".into(), 1)].into(), 0),
            Err(Error::EmptyStratum(_))
        ));
    }
}
