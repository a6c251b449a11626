//! On-disk lattice formats.
//!
//! `CNJL v1` is JSON lines: a header object
//! `{"vocab": [...], "blank_id": int, "frame_duration": float}` followed by
//! one `{"log_probs": [...]}` object per frame. When the header carries a
//! `"sidecar"` file name the frames are read from a `CNB1` binary file
//! instead: magic `CNB1`, little-endian `u32` frame count, `u32` vocab size,
//! then `f32` row-major log-probabilities. The JSON header stays
//! authoritative for the vocabulary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::network::{ConfusionNetwork, FramePosterior};
use super::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};

pub const CNB1_MAGIC: &[u8; 4] = b"CNB1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnjlHeader {
    pub vocab: Vec<String>,
    pub blank_id: TokenId,
    pub frame_duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<String>,
}

impl CnjlHeader {
    fn for_network(net: &ConfusionNetwork) -> Self {
        Self {
            vocab: net.vocab().tokens().to_vec(),
            blank_id: net.vocab().blank_id(),
            frame_duration: net.frame_duration(),
            sidecar: None,
        }
    }
}

/// Reads a CNJL file, following a binary sidecar relative to its directory.
pub fn read_cnjl(path: impl AsRef<Path>) -> Result<ConfusionNetwork> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    parse_cnjl(reader, path.parent())
}

pub fn parse_cnjl<R: BufRead>(reader: R, base_dir: Option<&Path>) -> Result<ConfusionNetwork> {
    let mut lines = reader.lines().filter(|l| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty CNJL input".into()))??;
    let header: CnjlHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Format(format!("bad CNJL header: {e}")))?;
    let vocab = Arc::new(Vocabulary::new(header.vocab, header.blank_id)?);

    if let Some(sidecar) = &header.sidecar {
        let sidecar_path = match base_dir {
            Some(dir) => dir.join(sidecar),
            None => Path::new(sidecar).to_path_buf(),
        };
        let rows = read_cnb1(BufReader::new(File::open(sidecar_path)?), vocab.len())?;
        return ConfusionNetwork::new(vocab, header.frame_duration, rows);
    }

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let frame: FramePosterior = serde_json::from_str(&line?)
            .map_err(|e| Error::Format(format!("bad CNJL frame {i}: {e}")))?;
        rows.push(frame.log_probs);
    }
    ConfusionNetwork::new(vocab, header.frame_duration, rows)
}

pub fn write_cnjl<W: Write>(net: &ConfusionNetwork, mut out: W) -> Result<()> {
    serde_json::to_writer(&mut out, &CnjlHeader::for_network(net))?;
    out.write_all(b"\n")?;
    for row in net.frames() {
        serde_json::to_writer(
            &mut out,
            &FramePosterior {
                log_probs: row.to_vec(),
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_cnjl(net: &ConfusionNetwork, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_cnjl(net, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Writes a header-only CNJL file at `path` plus a CNB1 sidecar next to it.
pub fn save_cnjl_with_sidecar(net: &ConfusionNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?;
    let sidecar_name = format!("{}.cnb", file_name.to_string_lossy());
    let mut header = CnjlHeader::for_network(net);
    header.sidecar = Some(sidecar_name.clone());

    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    out.flush()?;

    let mut bin = BufWriter::new(File::create(path.with_file_name(sidecar_name))?);
    write_cnb1(net, &mut bin)?;
    bin.flush()?;
    Ok(())
}

pub fn write_cnb1<W: Write>(net: &ConfusionNetwork, mut out: W) -> Result<()> {
    out.write_all(CNB1_MAGIC)?;
    out.write_all(&(net.num_frames() as u32).to_le_bytes())?;
    out.write_all(&(net.vocab_size() as u32).to_le_bytes())?;
    for row in net.frames() {
        for &lp in row {
            out.write_all(&(lp as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads CNB1 rows, checking the stored width against the header vocabulary.
pub fn read_cnb1<R: Read>(mut input: R, vocab_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CNB1_MAGIC {
        return Err(Error::Format("sidecar does not start with CNB1".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let frames = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let width = u32::from_le_bytes(word) as usize;
    if width != vocab_size {
        return Err(Error::Dimension {
            expected: vocab_size,
            found: width,
        });
    }
    let mut rows = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut row = Vec::with_capacity(width);
        for _ in 0..width {
            input.read_exact(&mut word)?;
            row.push(f32::from_le_bytes(word) as f64);
        }
        rows.push(row);
    }
    Ok(rows)
}
