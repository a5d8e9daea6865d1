//! Labeled stream files.
//!
//! Wire format, all integers little-endian:
//!
//! ```text
//! "TLDS" | version: u32 | T: u32 | channels: u32 | H: u32 | W: u32
//! | labels: u16 × T | frames: u8 × (T·channels·H·W)
//! ```
//!
//! Frame values are quantized to 8 bits as `round(255·v)`; the loader
//! dequantizes to `v = q/255`, so a load→save cycle is byte-stable.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Result, StreamFileError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::LabeledStream;

pub const STREAM_MAGIC: [u8; 4] = *b"TLDS";
pub const STREAM_VERSION: u32 = 1;

/// Writes a stream file atomically (temp file in the target directory,
/// then rename).
pub fn save_stream<F: Scalar>(stream: &LabeledStream<F>, path: &Path) -> Result<()> {
    let shape = stream.frames.shape();
    let (t, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    assert_eq!(t, stream.labels.len(), "one label per frame");
    assert!(
        stream.labels.iter().all(|&l| l <= u16::MAX as usize),
        "labels fit u16"
    );

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(StreamFileError::Io)?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        out.write_all(&STREAM_MAGIC).map_err(StreamFileError::Io)?;
        out.write_all(&STREAM_VERSION.to_le_bytes())
            .map_err(StreamFileError::Io)?;
        for dim in [t, c, h, w] {
            out.write_all(&(dim as u32).to_le_bytes())
                .map_err(StreamFileError::Io)?;
        }
        for &label in &stream.labels {
            out.write_all(&(label as u16).to_le_bytes())
                .map_err(StreamFileError::Io)?;
        }
        let quantized: Vec<u8> = stream
            .frames
            .data()
            .iter()
            .map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        out.write_all(&quantized).map_err(StreamFileError::Io)?;
        out.flush().map_err(StreamFileError::Io)?;
    }
    tmp.persist(path)
        .map_err(|e| StreamFileError::Io(e.error))?;
    Ok(())
}

/// Reads a stream file; values come back as `q/255`. The returned
/// fingerprint hashes the file bytes, since the generator recipe is not
/// stored in this format.
pub fn load_stream<F: Scalar>(path: &Path) -> Result<LabeledStream<F>> {
    let bytes = std::fs::read(path).map_err(StreamFileError::Io)?;
    parse_stream(&bytes)
}

pub fn parse_stream<F: Scalar>(bytes: &[u8]) -> Result<LabeledStream<F>> {
    let mut pos = 0usize;
    let mut take = |n: usize, reading: &str| -> std::result::Result<&[u8], StreamFileError> {
        if pos + n > bytes.len() {
            return Err(StreamFileError::Truncated {
                reading: reading.to_string(),
            });
        }
        let out = &bytes[pos..pos + n];
        pos += n;
        Ok(out)
    };

    if take(4, "magic")? != STREAM_MAGIC {
        return Err(StreamFileError::BadMagic.into());
    }
    let version = u32::from_le_bytes(take(4, "version")?.try_into().unwrap());
    if version != STREAM_VERSION {
        return Err(StreamFileError::VersionMismatch {
            found: version,
            supported: STREAM_VERSION,
        }
        .into());
    }
    let mut dims = [0usize; 4];
    for (dim, name) in dims.iter_mut().zip(["frame count", "channels", "height", "width"]) {
        *dim = u32::from_le_bytes(take(4, name)?.try_into().unwrap()) as usize;
    }
    let [t, c, h, w] = dims;
    let labels: Vec<usize> = take(2 * t, "labels")?
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes(b.try_into().unwrap()) as usize)
        .collect();
    let volume = t * c * h * w;
    let raw = take(volume, "frames")?;
    if pos != bytes.len() {
        return Err(StreamFileError::TrailingBytes.into());
    }
    let data: Vec<F> = raw
        .iter()
        .map(|&q| F::from_f64_lossy(q as f64 / 255.0))
        .collect();

    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut fp = String::with_capacity(64);
    for b in digest {
        fp.push_str(&format!("{b:02x}"));
    }

    Ok(LabeledStream {
        frames: Tensor::from_vec(&[t, c, h, w], data).expect("volume computed from dims"),
        labels,
        spec_fingerprint: fp,
    })
}
