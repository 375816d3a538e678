//! Checkpoint directories: `meta.json` plus a binary archive of named arrays.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainingConfig;
use crate::dag::{DagFile, GeneratorGraph};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::nn::ParamSet;
use crate::schema::{EncoderSet, TableSchema};

pub const FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const PARAMS_FILE: &str = "params.bin";
const MAGIC: &[u8; 4] = b"DSPA";

/// Position of the training RNG, enough to rebuild it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// 128-bit word position, as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::CorruptCheckpoint("malformed rng state".into());
        let bytes = hex::decode(&self.seed).map_err(|_| bad())?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse::<u128>().map_err(|_| bad())?);
        Ok(rng)
    }
}

/// Everything needed to sample from, or keep training, a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub schema: TableSchema,
    pub dag: DagFile,
    pub graph: GeneratorGraph,
    pub encoders: EncoderSet,
    pub config: TrainingConfig,
    pub epoch: usize,
    pub rng: RngState,
    pub generator_params: ParamSet,
    pub discriminator_params: ParamSet,
}

impl ModelCheckpoint {
    pub fn generator(&self) -> Result<Generator> {
        Generator::new(self.graph.clone(), &self.encoders, self.config.dims)
    }

    pub fn discriminator(&self) -> Result<Discriminator> {
        let generator = self.generator()?;
        let ci = if self.config.discriminator_conditioning {
            generator.ci_width()
        } else {
            0
        };
        Discriminator::new(generator.output_width() + ci, self.config.discriminator)
    }

    pub fn conditional_inputs(&self) -> Vec<&str> {
        self.graph.conditional_inputs()
    }

    pub fn generated(&self) -> Vec<&str> {
        self.graph.generated()
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    schema: TableSchema,
    dag: DagFile,
    graph: GeneratorGraph,
    encoders: EncoderSet,
    config: TrainingConfig,
    epoch: usize,
    rng: RngState,
    params_sha256: String,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let archive = encode_archive(
        ckpt.generator_params
            .iter()
            .chain(ckpt.discriminator_params.iter()),
    );
    let meta = Meta {
        format_version: FORMAT_VERSION,
        schema: ckpt.schema.clone(),
        dag: ckpt.dag.clone(),
        graph: ckpt.graph.clone(),
        encoders: ckpt.encoders.clone(),
        config: ckpt.config.clone(),
        epoch: ckpt.epoch,
        rng: ckpt.rng.clone(),
        params_sha256: hex::encode(Sha256::digest(&archive)),
    };
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, &archive).map_err(|e| Error::io(&params_path, e))?;
    let meta_path = dir.join(META_FILE);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let probe: VersionProbe = serde_json::from_str(&text)
        .map_err(|e| Error::CorruptCheckpoint(format!("{META_FILE}: {e}")))?;
    if probe.format_version > FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: probe.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let meta: Meta = serde_json::from_str(&text)
        .map_err(|e| Error::CorruptCheckpoint(format!("{META_FILE}: {e}")))?;

    let params_path = dir.join(PARAMS_FILE);
    let archive = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    if hex::encode(Sha256::digest(&archive)) != meta.params_sha256 {
        return Err(Error::CorruptCheckpoint(format!("{PARAMS_FILE} hash mismatch")));
    }
    let mut generator_params = ParamSet::new();
    let mut discriminator_params = ParamSet::new();
    for (name, array) in decode_archive(&archive)? {
        if name.starts_with("gen.") {
            generator_params.insert(name, array);
        } else if name.starts_with("disc.") {
            discriminator_params.insert(name, array);
        } else {
            return Err(Error::CorruptCheckpoint(format!("unexpected array {name:?}")));
        }
    }
    Ok(ModelCheckpoint {
        schema: meta.schema,
        dag: meta.dag,
        graph: meta.graph,
        encoders: meta.encoders,
        config: meta.config,
        epoch: meta.epoch,
        rng: meta.rng,
        generator_params,
        discriminator_params,
    })
}

/// `MAGIC`, version, count, then per array: name length, name, rows, cols and
/// little-endian values.
fn encode_archive<'a>(arrays: impl Iterator<Item = (&'a str, &'a Array2<f64>)>) -> Vec<u8> {
    let arrays: Vec<_> = arrays.collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, array) in arrays {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(array.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(array.ncols() as u64).to_le_bytes());
        for v in array.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint("truncated parameter archive".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode_archive(bytes: &[u8]) -> Result<Vec<(String, Array2<f64>)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad archive magic".into()));
    }
    let version = r.u32()?;
    if version > FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::CorruptCheckpoint("array name is not utf-8".into()))?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::CorruptCheckpoint("array size overflow".into()))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::CorruptCheckpoint("array size overflow".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let array = Array2::from_shape_vec((rows, cols), values).expect("length checked");
        out.push((name, array));
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes in parameter archive".into()));
    }
    Ok(out)
}
