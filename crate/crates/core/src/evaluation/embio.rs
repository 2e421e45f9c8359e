use std::fs;
use std::path::Path;

use crate::encoders::EmbeddingBatch;
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";

/// `EMB1`, u32 count, u32 dim, then per record u32 id length, UTF-8 id and
/// `dim` little-endian f32 values.
pub fn embeddings_to_bytes(batch: &EmbeddingBatch) -> Result<Vec<u8>> {
    if batch.ids().len() != batch.len() {
        return Err(Error::Invalid("embedding dump needs one id per row".into()));
    }
    let mut out = Vec::with_capacity(12 + batch.len() * (8 + 4 * batch.dim()));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(batch.len() as u32).to_le_bytes());
    out.extend_from_slice(&(batch.dim() as u32).to_le_bytes());
    for (id, row) in batch.ids().iter().zip(batch.rows()) {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for v in row {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn embeddings_from_bytes(bytes: &[u8]) -> Result<EmbeddingBatch> {
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("embedding dump ends inside {what}")))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let magic = take(4, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(EMBEDDING_MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let count = u32_at(take(4, "header")?);
    let dim = u32_at(take(4, "header")?);
    if dim == 0 {
        return Err(Error::Format("embedding dimension is zero".into()));
    }
    let mut ids = Vec::with_capacity(count.min(1 << 20));
    let mut rows = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = u32_at(take(4, "id length")?);
        let id = std::str::from_utf8(take(len, "id")?)
            .map_err(|_| Error::Format("embedding id is not UTF-8".into()))?
            .to_string();
        let raw = take(4 * dim, "vector")?;
        rows.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
        );
        ids.push(id);
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after embedding records".into()));
    }
    if count == 0 {
        return Err(Error::Format("embedding dump is empty".into()));
    }
    EmbeddingBatch::from_rows(rows)?.with_ids(ids)
}

pub fn write_embeddings(batch: &EmbeddingBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, embeddings_to_bytes(batch)?).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingBatch> {
    let path = path.as_ref();
    embeddings_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
