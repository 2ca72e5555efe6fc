//! Binary shard container.
//!
//! Layout, little-endian throughout:
//!
//! | offset | size | field             |
//! |--------|------|-------------------|
//! | 0      | 4    | magic `NCAT`      |
//! | 4      | 2    | format_version    |
//! | 6      | 2    | alphabet_n        |
//! | 8      | 2    | grid_h            |
//! | 10     | 2    | grid_w            |
//! | 12     | 2    | patch_h           |
//! | 14     | 2    | patch_w           |
//! | 16     | 4    | seq_len           |
//! | 20     | 8    | num_sequences     |
//! | 28     | 8    | master_seed       |
//! | 36     | 2    | band_low (%)      |
//! | 38     | 2    | band_high (%), `0xFFFF` = unbounded |
//! | 40     | 1    | compressor_level  |
//!
//! followed by `num_sequences * seq_len` u32 tokens.
//!
//! Dyck shards reuse the header with `patch_h = patch_w = grid_h = grid_w = 0`;
//! `alphabet_n` then holds the number of bracket types `k`, and the vocabulary
//! is `2k` ids: `0..k` open brackets, `k..2k` the matching closers.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complexity::ComplexityBand;
use crate::error::{Error, Result};
use crate::nca::Grid;
use crate::tokenizer::{parse_grids, VocabSpec};

pub const MAGIC: [u8; 4] = *b"NCAT";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 41;
pub const BAND_UNBOUNDED: u16 = 0xFFFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardHeader {
    pub format_version: u16,
    pub alphabet_n: u16,
    pub grid_h: u16,
    pub grid_w: u16,
    pub patch_h: u16,
    pub patch_w: u16,
    pub seq_len: u32,
    pub num_sequences: u64,
    pub master_seed: u64,
    pub band_low: u16,
    pub band_high: u16,
    pub compressor_level: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShardKind {
    Nca(VocabSpec),
    Dyck { k: u16 },
}

impl ShardHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.format_version.to_le_bytes());
        b[6..8].copy_from_slice(&self.alphabet_n.to_le_bytes());
        b[8..10].copy_from_slice(&self.grid_h.to_le_bytes());
        b[10..12].copy_from_slice(&self.grid_w.to_le_bytes());
        b[12..14].copy_from_slice(&self.patch_h.to_le_bytes());
        b[14..16].copy_from_slice(&self.patch_w.to_le_bytes());
        b[16..20].copy_from_slice(&self.seq_len.to_le_bytes());
        b[20..28].copy_from_slice(&self.num_sequences.to_le_bytes());
        b[28..36].copy_from_slice(&self.master_seed.to_le_bytes());
        b[36..38].copy_from_slice(&self.band_low.to_le_bytes());
        b[38..40].copy_from_slice(&self.band_high.to_le_bytes());
        b[40] = self.compressor_level;
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::CorruptShard(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::CorruptShard(format!("bad magic {:?}", &bytes[0..4])));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let header = ShardHeader {
            format_version: u16_at(4),
            alphabet_n: u16_at(6),
            grid_h: u16_at(8),
            grid_w: u16_at(10),
            patch_h: u16_at(12),
            patch_w: u16_at(14),
            seq_len: u32_at(16),
            num_sequences: u64_at(20),
            master_seed: u64_at(28),
            band_low: u16_at(36),
            band_high: u16_at(38),
            compressor_level: bytes[40],
        };
        if header.format_version != FORMAT_VERSION {
            return Err(Error::CorruptShard(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        header.kind()?;
        Ok(header)
    }

    /// Vocabulary and framing implied by the header alone.
    pub fn kind(&self) -> Result<ShardKind> {
        let corrupt = |msg: String| Error::CorruptShard(msg);
        if self.patch_h == 0 && self.patch_w == 0 && self.grid_h == 0 && self.grid_w == 0 {
            if self.alphabet_n == 0 {
                return Err(corrupt("Dyck shard with zero bracket types".into()));
            }
            if !self.seq_len.is_multiple_of(2) {
                return Err(corrupt(format!("Dyck shard with odd sequence length {}", self.seq_len)));
            }
            return Ok(ShardKind::Dyck { k: self.alphabet_n });
        }
        let vocab = VocabSpec::new(self.alphabet_n as usize, self.patch_h as usize, self.patch_w as usize)
            .map_err(|e| corrupt(e.to_string()))?;
        if self.grid_h == 0
            || self.grid_w == 0
            || !self.grid_h.is_multiple_of(self.patch_h)
            || !self.grid_w.is_multiple_of(self.patch_w)
        {
            return Err(corrupt(format!(
                "grid {}x{} not divisible into {}x{} patches",
                self.grid_h, self.grid_w, self.patch_h, self.patch_w
            )));
        }
        let block = self.block_len().expect("NCA shard");
        if !(self.seq_len as usize).is_multiple_of(block) {
            return Err(corrupt(format!(
                "sequence length {} is not a whole number of {block}-token timesteps",
                self.seq_len
            )));
        }
        Ok(ShardKind::Nca(vocab))
    }

    /// Tokens per timestep for NCA shards.
    pub fn block_len(&self) -> Option<usize> {
        if self.patch_h == 0 || self.patch_w == 0 {
            return None;
        }
        Some((self.grid_h / self.patch_h) as usize * (self.grid_w / self.patch_w) as usize + 2)
    }

    pub fn vocab_size(&self) -> Result<u64> {
        Ok(match self.kind()? {
            ShardKind::Nca(v) => v.total_vocab() as u64,
            ShardKind::Dyck { k } => 2 * k as u64,
        })
    }

    pub fn band(&self) -> Option<ComplexityBand> {
        match (self.band_low, self.band_high) {
            (0, 0) => None,
            (lo, BAND_UNBOUNDED) => Some(ComplexityBand::above(lo as f64)),
            (lo, hi) => Some(ComplexityBand::between(lo as f64, hi as f64)),
        }
    }

    pub fn payload_len(&self) -> u64 {
        self.num_sequences * self.seq_len as u64 * 4
    }
}

/// Encodes a band into the header's integer-percent fields.
pub fn encode_band(band: &ComplexityBand) -> Result<(u16, u16)> {
    let to_u16 = |v: f64| -> Result<u16> {
        if v.fract() != 0.0 || !(0.0..BAND_UNBOUNDED as f64).contains(&v) {
            return Err(Error::config(format!(
                "band bound {v} must be a whole percent below 65535 to be recorded in a shard"
            )));
        }
        Ok(v as u16)
    };
    let lo = to_u16(band.low_pct)?;
    let hi = match band.high_pct {
        Some(h) => to_u16(h)?,
        None => BAND_UNBOUNDED,
    };
    Ok((lo, hi))
}

/// Writes sequences in order to `<path>.partial`, renaming into place on
/// [`ShardWriter::finish`]. Dropping an unfinished writer deletes the partial file.
pub struct ShardWriter {
    header: ShardHeader,
    out: Option<BufWriter<File>>,
    partial: PathBuf,
    target: PathBuf,
    written: u64,
}

impl ShardWriter {
    pub fn create(path: impl AsRef<Path>, header: ShardHeader) -> Result<Self> {
        header.kind().map_err(|e| Error::config(e.to_string()))?;
        let target = path.as_ref().to_path_buf();
        let mut partial = target.clone().into_os_string();
        partial.push(".partial");
        let partial = PathBuf::from(partial);
        let out = BufWriter::new(File::create(&partial)?);
        let mut writer = ShardWriter {
            header,
            out: Some(out),
            partial,
            target,
            written: 0,
        };
        // On failure the writer drops and removes the partial file.
        writer.out.as_mut().expect("just opened").write_all(&header.encode())?;
        Ok(writer)
    }

    pub fn header(&self) -> &ShardHeader {
        &self.header
    }

    pub fn write_sequence(&mut self, tokens: &[u32]) -> Result<()> {
        if tokens.len() != self.header.seq_len as usize {
            return Err(Error::config(format!(
                "sequence of {} tokens in a shard of fixed length {}",
                tokens.len(),
                self.header.seq_len
            )));
        }
        if self.written >= self.header.num_sequences {
            return Err(Error::config("more sequences than the header declares"));
        }
        let out = self.out.as_mut().expect("writer open");
        let mut buf = Vec::with_capacity(tokens.len() * 4);
        for t in tokens {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        out.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        if self.written != self.header.num_sequences {
            return Err(Error::config(format!(
                "shard declares {} sequences but {} were written",
                self.header.num_sequences, self.written
            )));
        }
        let out = self.out.take().expect("writer open");
        let file = out.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        drop(file);
        fs::rename(&self.partial, &self.target)?;
        Ok(self.target.clone())
    }
}

impl Drop for ShardWriter {
    fn drop(&mut self) {
        if self.out.take().is_some() {
            let _ = fs::remove_file(&self.partial);
        }
    }
}

/// A shard loaded into memory.
#[derive(Clone, Debug)]
pub struct Shard {
    pub header: ShardHeader,
    tokens: Vec<u32>,
}

impl Shard {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path.as_ref())?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = ShardHeader::decode(bytes)?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != header.payload_len() {
            return Err(Error::CorruptShard(format!(
                "payload is {} bytes, header implies {}",
                payload.len(),
                header.payload_len()
            )));
        }
        let tokens: Vec<u32> = payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let vocab = header.vocab_size()?;
        if let Some((i, &t)) = tokens.iter().enumerate().find(|(_, &t)| t as u64 >= vocab) {
            return Err(Error::CorruptShard(format!(
                "token {t} at position {i} outside vocabulary of {vocab}"
            )));
        }
        Ok(Shard { header, tokens })
    }

    pub fn kind(&self) -> ShardKind {
        self.header.kind().expect("validated on open")
    }

    pub fn num_sequences(&self) -> u64 {
        self.header.num_sequences
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn sequence(&self, index: u64) -> Result<&[u32]> {
        if index >= self.num_sequences() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.num_sequences(),
            });
        }
        let len = self.header.seq_len as usize;
        let start = index as usize * len;
        Ok(&self.tokens[start..start + len])
    }

    pub fn sequences(&self) -> impl Iterator<Item = &[u32]> {
        self.tokens.chunks_exact(self.header.seq_len.max(1) as usize)
    }

    /// Grids of NCA sequence `index`, framing taken from the header.
    pub fn grids(&self, index: u64) -> Result<Vec<Grid>> {
        let vocab = match self.kind() {
            ShardKind::Nca(v) => v,
            ShardKind::Dyck { .. } => {
                return Err(Error::config("Dyck shards do not contain grids"));
            }
        };
        parse_grids(
            self.sequence(index)?,
            &vocab,
            self.header.grid_h as usize,
            self.header.grid_w as usize,
        )
        .map_err(|e| Error::CorruptShard(format!("sequence {index}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> ShardHeader {
        ShardHeader {
            format_version: FORMAT_VERSION,
            alphabet_n: 2,
            grid_h: 2,
            grid_w: 2,
            patch_h: 2,
            patch_w: 2,
            seq_len: 6,
            num_sequences: 2,
            master_seed: 0xDEAD_BEEF,
            band_low: 50,
            band_high: BAND_UNBOUNDED,
            compressor_level: 6,
        }
    }

    #[test]
    fn header_byte_layout() {
        let b = header().encode();
        assert_eq!(&b[0..4], b"NCAT");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[16..20], &[6, 0, 0, 0]);
        assert_eq!(&b[28..36], &0xDEAD_BEEFu64.to_le_bytes());
        assert_eq!(&b[38..40], &[0xFF, 0xFF]);
        assert_eq!(b[40], 6);
        assert_eq!(ShardHeader::decode(&b).unwrap(), header());
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ncat");
        let mut w = ShardWriter::create(&path, header()).unwrap();
        w.write_sequence(&[16, 3, 17, 16, 15, 17]).unwrap();
        w.write_sequence(&[16, 0, 17, 16, 1, 17]).unwrap();
        w.finish().unwrap();

        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 6 * 4);
        let shard = Shard::open(&path).unwrap();
        assert_eq!(shard.sequence(1).unwrap(), &[16, 0, 17, 16, 1, 17]);
        assert_eq!(shard.grids(0).unwrap()[1].cells(), &[1, 1, 1, 1]);
        assert!(matches!(shard.sequence(2), Err(Error::IndexOutOfRange { .. })));
        assert_eq!(shard.header.band(), Some(ComplexityBand::above(50.0)));
    }

    #[test]
    fn dropped_writer_removes_partial() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ncat");
        {
            let mut w = ShardWriter::create(&path, header()).unwrap();
            w.write_sequence(&[16, 3, 17, 16, 15, 17]).unwrap();
        }
        assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
    }

    #[test]
    fn corrupt_inputs() {
        let mut b = header().encode().to_vec();
        b.extend(std::iter::repeat_n(0u8, 48));
        assert!(Shard::from_bytes(&b).is_ok());

        let mut bad_magic = b.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Shard::from_bytes(&bad_magic), Err(Error::CorruptShard(_))));

        assert!(matches!(
            Shard::from_bytes(&b[..b.len() - 1]),
            Err(Error::CorruptShard(_))
        ));
        assert!(matches!(Shard::from_bytes(&b[..10]), Err(Error::CorruptShard(_))));

        let mut bad_token = b.clone();
        bad_token[HEADER_LEN] = 18;
        assert!(matches!(Shard::from_bytes(&bad_token), Err(Error::CorruptShard(_))));

        let mut bad_version = b;
        bad_version[4] = 9;
        assert!(matches!(Shard::from_bytes(&bad_version), Err(Error::CorruptShard(_))));
    }

    #[test]
    fn band_encoding() {
        assert_eq!(encode_band(&ComplexityBand::above(50.0)).unwrap(), (50, BAND_UNBOUNDED));
        assert_eq!(encode_band(&ComplexityBand::between(20.0, 30.0)).unwrap(), (20, 30));
        assert!(encode_band(&ComplexityBand::between(20.5, 30.0)).is_err());
    }
}
