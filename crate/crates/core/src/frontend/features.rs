use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"AWE1";
/// Frame shift in seconds; used to convert manifest boundaries to frame indices.
pub const FRAME_SHIFT_S: f64 = 0.010;

/// A T×F row-major matrix of per-frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<f32>,
    n_frames: usize,
    n_dims: usize,
}

impl FeatureSequence {
    pub fn new(frames: Vec<f32>, n_frames: usize, n_dims: usize) -> Result<Self> {
        if n_frames == 0 || n_dims == 0 {
            return Err(Error::Invalid(format!(
                "feature sequence must be non-empty, got {n_frames}x{n_dims}"
            )));
        }
        if frames.len() != n_frames * n_dims {
            return Err(Error::Shape(format!(
                "{} values for {n_frames}x{n_dims} features",
                frames.len()
            )));
        }
        if let Some(i) = frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite feature at frame {} dim {}",
                i / n_dims,
                i % n_dims
            )));
        }
        Ok(Self {
            frames,
            n_frames,
            n_dims,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let n_dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_dims) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(rows.concat(), rows.len(), n_dims)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.frames[t * self.n_dims..(t + 1) * self.n_dims]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.frames.chunks_exact(self.n_dims)
    }

    /// Frames `[start, end)`, clamped to the sequence. Returns `None` when the range is empty.
    pub fn slice(&self, start: usize, end: usize) -> Option<FeatureSequence> {
        let end = end.min(self.n_frames);
        if start >= end {
            return None;
        }
        Some(FeatureSequence {
            frames: self.frames[start * self.n_dims..end * self.n_dims].to_vec(),
            n_frames: end - start,
            n_dims: self.n_dims,
        })
    }

    /// Frames covered by the time span `[start_s, end_s)` at a 10 ms frame shift.
    pub fn slice_seconds(&self, start_s: f64, end_s: f64) -> Option<FeatureSequence> {
        let start = (start_s / FRAME_SHIFT_S).round().max(0.0) as usize;
        let end = (end_s / FRAME_SHIFT_S).round().max(0.0) as usize;
        self.slice(start, end)
    }

    /// Concatenates sequences along time.
    pub fn concat(parts: &[FeatureSequence]) -> Result<FeatureSequence> {
        let n_dims = parts
            .first()
            .map(|p| p.n_dims)
            .ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.n_dims != n_dims) {
            return Err(Error::Shape("concatenating different feature widths".into()));
        }
        let frames: Vec<f32> = parts.iter().flat_map(|p| p.frames.iter().copied()).collect();
        let n_frames = frames.len() / n_dims;
        Ok(FeatureSequence {
            frames,
            n_frames,
            n_dims,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.frames.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_dims as u32).to_le_bytes());
        for v in &self.frames {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated("feature header".into()));
        }
        if &bytes[..4] != FEATURE_MAGIC {
            return Err(Error::BadMagic {
                expected: "AWE1".into(),
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
            });
        }
        if bytes.len() < 12 {
            return Err(Error::Truncated("feature header".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[12..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("feature dimensions overflow".into()))?;
        if payload.len() != expected {
            return Err(Error::Truncated(format!(
                "header says {rows}x{cols} ({expected} bytes), payload has {}",
                payload.len()
            )));
        }
        let frames = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(frames, rows, cols)
    }
}

pub fn write_features(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, seq.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureSequence::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bad_magic() {
        let mut bytes = FeatureSequence::new(vec![1.0; 6], 2, 3).unwrap().to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = FeatureSequence::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().starts_with("bad magic"), "{err}");
    }

    #[test]
    fn truncated_payload() {
        let bytes = FeatureSequence::new(vec![1.0; 6], 2, 3).unwrap().to_bytes();
        let err = FeatureSequence::from_bytes(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(err.to_string().starts_with("truncated"), "{err}");
        let err = FeatureSequence::from_bytes(&bytes[..7]).unwrap_err();
        assert!(err.to_string().starts_with("truncated"), "{err}");
    }

    #[test]
    fn header_layout_is_little_endian() {
        let bytes = FeatureSequence::new(vec![1.5, -2.0], 1, 2).unwrap().to_bytes();
        assert_eq!(&bytes[..4], b"AWE1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 20);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(FeatureSequence::new(vec![f32::NAN], 1, 1).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.feat");
        let seq = FeatureSequence::new(vec![0.1, 0.2, 0.3, -4e-7], 2, 2).unwrap();
        write_features(&seq, &p).unwrap();
        assert_eq!(read_features(&p).unwrap(), seq);
    }

    #[test]
    fn slice_seconds_maps_to_frames() {
        let seq = FeatureSequence::new((0..10).map(|v| v as f32).collect(), 10, 1).unwrap();
        let s = seq.slice_seconds(0.02, 0.05).unwrap();
        assert_eq!(s.as_slice(), &[2.0, 3.0, 4.0]);
        assert!(seq.slice(5, 5).is_none());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
            let mut state = seed;
            let frames: Vec<f32> = (0..rows * cols)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    f32::from_bits(((state >> 33) as u32) & 0x7f7f_ffff | ((state as u32) & 0x8000_0000))
                })
                .map(|v| if v.is_finite() { v } else { 0.0 })
                .collect();
            let seq = FeatureSequence::new(frames, rows, cols).unwrap();
            let back = FeatureSequence::from_bytes(&seq.to_bytes()).unwrap();
            prop_assert_eq!(
                back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                seq.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
