//! Frozen sentence-level text encoders.
//!
//! Two implementations sit behind [`TextEncoder`]: a deterministic hashed bag of
//! tokens (offline tests and synthetic runs) and a closed lookup table of
//! embeddings computed elsewhere, e.g. by an external sentence encoder.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A dense vector in the shared text/graph space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Embedding {
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    /// L2-normalizes; a zero vector stays zero and is not flagged.
    pub fn normalized(values: Vec<f64>) -> Self {
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Self::raw(values);
        }
        Self {
            values: values.into_iter().map(|v| v / norm).collect(),
            normalized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; zero if either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Maps text to an L2-normalized embedding. Implementations are read-only.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Embedding>;

    /// Digest of all encoder state; used to check the tower stays frozen.
    fn checksum(&self) -> String;

    fn encode_all(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.encode(t)).collect()
    }
}

/// Mean of per-token Gaussian vectors seeded by a hash of the token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashEmbedEncoder {
    dim: usize,
    salt: u64,
}

impl HashEmbedEncoder {
    pub fn new(dim: usize, salt: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, salt }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.salt.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl TextEncoder for HashEmbedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::Validation(format!("text has no tokens: {text:?}")));
        }
        let mut acc = vec![0.0; self.dim];
        for tok in &tokens {
            for (a, v) in acc.iter_mut().zip(self.token_vector(tok)) {
                *a += v;
            }
        }
        let n = tokens.len() as f64;
        Ok(Embedding::normalized(acc.into_iter().map(|a| a / n).collect()))
    }

    fn checksum(&self) -> String {
        hex(&Sha256::digest(format!("hash-embed:{}:{}", self.dim, self.salt)))
    }
}

/// Closed table of precomputed embeddings keyed by the SHA-256 of the text.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEncoder {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TableRecord {
    hash: String,
    vector: Vec<f64>,
}

pub fn text_hash(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl TableEncoder {
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, Vec<f64>)>) -> Result<Self> {
        let mut table = BTreeMap::new();
        let mut dim = None;
        for (text, vector) in entries {
            check_dim(&mut dim, vector.len())?;
            table.insert(text_hash(text), vector);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            table,
        })
    }

    /// Reads `{"hash": ..., "vector": [...]}` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = BTreeMap::new();
        let mut dim = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TableRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            check_dim(&mut dim, rec.vector.len())?;
            table.insert(rec.hash, rec.vector);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            table,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for (hash, vector) in &self.table {
            let line = serde_json::to_string(&TableRecord {
                hash: hash.clone(),
                vector: vector.clone(),
            })?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

fn check_dim(dim: &mut Option<usize>, got: usize) -> Result<()> {
    match *dim {
        Some(d) if d != got => Err(Error::shape("embedding table", d, got)),
        _ => {
            *dim = Some(got);
            Ok(())
        }
    }
}

impl TextEncoder for TableEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        let key = text_hash(text);
        self.table
            .get(&key)
            .map(|v| Embedding::normalized(v.clone()))
            .ok_or(Error::UnknownText(key))
    }

    fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in &self.table {
            hasher.update(k.as_bytes());
            for x in v {
                hasher.update(x.to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }
}

/// Serializable choice of text encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TextEncoderSpec {
    HashEmbed { dim: usize, salt: u64 },
    Table { path: std::path::PathBuf },
}

impl Default for TextEncoderSpec {
    fn default() -> Self {
        TextEncoderSpec::HashEmbed { dim: 16, salt: 0 }
    }
}

impl TextEncoderSpec {
    pub fn build(&self) -> Result<Box<dyn TextEncoder>> {
        Ok(match self {
            TextEncoderSpec::HashEmbed { dim, salt } => Box::new(HashEmbedEncoder::new(*dim, *salt)),
            TextEncoderSpec::Table { path } => Box::new(TableEncoder::load(path)?),
        })
    }
}
