//! `FIVAEMB1` binary embedding container.
//!
//! ```text
//! magic    8 bytes  "FIVAEMB1"
//! count    u32 LE
//! dim      u32 LE
//! payload  count * dim f32 LE, row-major
//! labels   optional: count newline-terminated UTF-8 lines
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::sphere::{normalize, Embedding, LabeledEmbedding};

pub const MAGIC: &[u8; 8] = b"FIVAEMB1";
const HEADER_LEN: usize = 16;

/// Container contents, exactly as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEmbeddings {
    pub dim: usize,
    pub data: Vec<f32>,
    pub labels: Option<Vec<String>>,
}

impl RawEmbeddings {
    pub fn new(dim: usize, data: Vec<f32>, labels: Option<Vec<String>>) -> Result<Self> {
        let count = if dim == 0 {
            if !data.is_empty() {
                return Err(Error::invalid("dim", "zero dimension with non-empty payload"));
            }
            0
        } else {
            if !data.len().is_multiple_of(dim) {
                return Err(Error::invalid(
                    "data",
                    format!("{} values is not a multiple of dim {dim}", data.len()),
                ));
            }
            data.len() / dim
        };
        if let Some(labels) = &labels {
            if labels.len() != count {
                return Err(Error::LabelCountMismatch {
                    expected: count,
                    found: labels.len(),
                });
            }
            if let Some(bad) = labels.iter().find(|l| l.contains('\n')) {
                return Err(Error::invalid("labels", format!("label {bad:?} contains a newline")));
            }
        }
        Ok(Self { dim, data, labels })
    }

    pub fn from_embeddings(embeddings: &[Embedding]) -> Self {
        let dim = embeddings.first().map_or(0, Embedding::dim);
        Self::from_embeddings_with_dim(embeddings, dim)
    }

    pub(crate) fn from_embeddings_with_dim(embeddings: &[Embedding], dim: usize) -> Self {
        let data = embeddings
            .iter()
            .flat_map(|e| e.as_slice().iter().copied())
            .collect();
        Self {
            dim,
            data,
            labels: None,
        }
    }

    pub fn from_labeled(entries: &[LabeledEmbedding]) -> Self {
        let embeddings: Vec<_> = entries.iter().map(|e| e.embedding.clone()).collect();
        let mut raw = Self::from_embeddings(&embeddings);
        raw.labels = Some(entries.iter().map(|e| e.label.clone()).collect());
        raw
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        (0..self.len()).map(move |i| self.row(i))
    }

    /// Converts rows to embeddings. Without `normalize` every row must
    /// already be unit norm, otherwise `NotUnitNorm`.
    pub fn into_embeddings(self, normalize_rows: bool) -> Result<Vec<Embedding>> {
        self.rows()
            .map(|row| {
                if normalize_rows {
                    normalize(row)
                } else {
                    Embedding::from_unit(row.to_vec())
                }
            })
            .collect()
    }

    /// Like [`into_embeddings`](Self::into_embeddings) but keeps labels,
    /// which must be present and non-empty.
    pub fn into_labeled(self, normalize_rows: bool) -> Result<Vec<LabeledEmbedding>> {
        let labels = self
            .labels
            .clone()
            .ok_or_else(|| Error::UnsupportedFormat("container has no label block".into()))?;
        let embeddings = self.into_embeddings(normalize_rows)?;
        labels
            .into_iter()
            .zip(embeddings)
            .enumerate()
            .map(|(row, (label, embedding))| {
                if label.is_empty() {
                    Err(Error::EmptyLabel(row))
                } else {
                    Ok(LabeledEmbedding { label, embedding })
                }
            })
            .collect()
    }
}

pub fn encode(raw: &RawEmbeddings) -> Vec<u8> {
    let count = raw.len();
    let label_len = raw
        .labels
        .as_ref()
        .map_or(0, |l| l.iter().map(|s| s.len() + 1).sum());
    let mut buf = Vec::with_capacity(HEADER_LEN + raw.data.len() * 4 + label_len);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(count as u32).to_le_bytes());
    buf.extend_from_slice(&(raw.dim as u32).to_le_bytes());
    for v in &raw.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = &raw.labels {
        for label in labels {
            buf.extend_from_slice(label.as_bytes());
            buf.push(b'\n');
        }
    }
    buf
}

/// Decodes a complete container; any bytes after the payload are the label
/// block.
pub fn decode(bytes: &[u8]) -> Result<RawEmbeddings> {
    let (mut raw, used) = decode_prefix(bytes)?;
    let tail = &bytes[used..];
    if !tail.is_empty() {
        raw.labels = Some(decode_labels(tail, raw.len())?);
    }
    Ok(raw)
}

/// Decodes header and payload only, returning the bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(RawEmbeddings, usize)> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 8 && &bytes[..8] != MAGIC {
            return Err(bad_magic(&bytes[..8]));
        }
        return Err(Error::Truncated {
            needed: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(bad_magic(&bytes[..8]));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if dim == 0 && count != 0 {
        return Err(Error::UnsupportedFormat(format!(
            "{count} rows of dimension 0"
        )));
    }
    let payload_len = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::UnsupportedFormat(format!("{count}x{dim} payload overflows")))?;
    let end = HEADER_LEN + payload_len;
    if bytes.len() < end {
        return Err(Error::Truncated {
            needed: payload_len,
            found: bytes.len() - HEADER_LEN,
        });
    }
    let data = bytes[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((
        RawEmbeddings {
            dim,
            data,
            labels: None,
        },
        end,
    ))
}

fn decode_labels(tail: &[u8], count: usize) -> Result<Vec<String>> {
    let text = std::str::from_utf8(tail)
        .map_err(|e| Error::UnsupportedFormat(format!("label block is not UTF-8: {e}")))?;
    let found = text.split_terminator('\n').count();
    if found != count || !text.ends_with('\n') {
        return Err(Error::LabelCountMismatch {
            expected: count,
            found,
        });
    }
    Ok(text.split_terminator('\n').map(str::to_owned).collect())
}

fn bad_magic(found: &[u8]) -> Error {
    Error::BadMagic {
        expected: String::from_utf8_lossy(MAGIC).into_owned(),
        found: String::from_utf8_lossy(found).into_owned(),
    }
}

pub fn read(path: impl AsRef<Path>) -> Result<RawEmbeddings> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: impl AsRef<Path>, raw: &RawEmbeddings) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(raw)).map_err(|e| Error::io(path, e))
}
