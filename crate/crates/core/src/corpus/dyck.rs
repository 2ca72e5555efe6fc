//! Balanced k-Dyck baseline corpus.
//!
//! Token `j < k` opens bracket type `j`; token `k + j` closes it.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{sequences_for_budget, thread_pool};
use super::shard::{ShardHeader, ShardWriter, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::seed::{mix64, stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyckConfig {
    pub k: u16,
    pub token_budget: u64,
    pub seq_len: u32,
    pub seed: u64,
    /// Probability of opening when both opening and closing are allowed.
    pub p_open: f64,
}

impl Default for DyckConfig {
    fn default() -> Self {
        DyckConfig {
            k: 128,
            token_budget: 1 << 20,
            seq_len: 1024,
            seed: 0,
            p_open: 0.5,
        }
    }
}

impl DyckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.seq_len == 0 || !self.seq_len.is_multiple_of(2) {
            return Err(Error::config(format!(
                "Dyck sequence length must be even and positive, got {}",
                self.seq_len
            )));
        }
        if !(self.p_open > 0.0 && self.p_open <= 1.0) {
            return Err(Error::config(format!("p_open must be in (0, 1], got {}", self.p_open)));
        }
        if self.token_budget == 0 {
            return Err(Error::config("token budget must be positive"));
        }
        Ok(())
    }
}

/// One balanced sequence of even length `len` over `k` bracket types.
///
/// Walks left to right. At depth 0 it must open; otherwise it opens a uniformly
/// chosen type with probability `p_open` if the remaining positions can still
/// close every open bracket, and closes the most recent bracket otherwise.
/// Depth is unbounded.
pub fn sample_dyck(k: u16, len: usize, p_open: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    debug_assert!(len.is_multiple_of(2));
    let k = k as u32;
    let mut stack: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let remaining = len - i;
        let can_open = stack.len() + 2 <= remaining;
        let open = can_open && (stack.is_empty() || rng.random::<f64>() < p_open);
        if open {
            let kind = rng.random_range(0..k);
            stack.push(kind);
            out.push(kind);
        } else {
            let kind = stack.pop().expect("close only with an open bracket");
            out.push(k + kind);
        }
    }
    debug_assert!(stack.is_empty());
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyckSummary {
    pub num_sequences: u64,
    pub total_tokens: u64,
    pub max_depth: u64,
}

/// Sequence `index` of a Dyck corpus.
pub fn dyck_sequence(config: &DyckConfig, index: u64) -> Vec<u32> {
    let mut rng = stream_rng(mix64(config.seed, index), Stream::Dyck);
    sample_dyck(config.k, config.seq_len as usize, config.p_open, &mut rng)
}

pub fn generate_dyck(config: &DyckConfig, out_path: impl AsRef<Path>, workers: usize) -> Result<DyckSummary> {
    config.validate()?;
    let num_sequences = sequences_for_budget(config.token_budget, config.seq_len as u64);
    let header = ShardHeader {
        format_version: FORMAT_VERSION,
        alphabet_n: config.k,
        grid_h: 0,
        grid_w: 0,
        patch_h: 0,
        patch_w: 0,
        seq_len: config.seq_len,
        num_sequences,
        master_seed: config.seed,
        band_low: 0,
        band_high: 0,
        compressor_level: 0,
    };
    let pool = thread_pool(workers)?;
    let mut writer = ShardWriter::create(out_path, header)?;
    let mut max_depth = 0u64;
    let chunk = 1024u64;
    let mut start = 0;
    while start < num_sequences {
        let end = (start + chunk).min(num_sequences);
        let seqs: Vec<Vec<u32>> =
            pool.install(|| (start..end).into_par_iter().map(|i| dyck_sequence(config, i)).collect());
        for s in &seqs {
            max_depth = max_depth.max(depth_profile_max(s, config.k));
            writer.write_sequence(s)?;
        }
        start = end;
    }
    writer.finish()?;
    Ok(DyckSummary {
        num_sequences,
        total_tokens: num_sequences * config.seq_len as u64,
        max_depth,
    })
}

fn depth_profile_max(seq: &[u32], k: u16) -> u64 {
    let mut depth = 0i64;
    let mut max = 0i64;
    for &t in seq {
        depth += if t < k as u32 { 1 } else { -1 };
        max = max.max(depth);
    }
    max as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn balanced(seq: &[u32], k: u32) -> bool {
        let mut stack = Vec::new();
        for &t in seq {
            if t < k {
                stack.push(t);
            } else if stack.pop() != Some(t - k) {
                return false;
            }
        }
        stack.is_empty()
    }

    #[test]
    fn k1_len4_enumerates_both_shapes() {
        // The balanced strings of length 4 over one bracket type are ()() and (()).
        let expected: HashSet<Vec<u32>> = [vec![0, 1, 0, 1], vec![0, 0, 1, 1]].into_iter().collect();
        let cfg = DyckConfig {
            k: 1,
            seq_len: 4,
            ..DyckConfig::default()
        };
        let seen: HashSet<Vec<u32>> = (0..200).map(|i| dyck_sequence(&cfg, i)).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn sequences_are_balanced() {
        let cfg = DyckConfig::default();
        for i in 0..200 {
            let s = dyck_sequence(&cfg, i);
            assert_eq!(s.len(), 1024);
            assert!(balanced(&s, 128));
            assert!(s.iter().all(|&t| t < 256));
        }
    }

    #[test]
    fn odd_length_is_rejected() {
        let cfg = DyckConfig {
            seq_len: 7,
            ..DyckConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        assert!(DyckConfig {
            k: 0,
            ..DyckConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn always_open_reaches_half_length_depth() {
        let mut rng = stream_rng(1, Stream::Dyck);
        let s = sample_dyck(3, 10, 1.0, &mut rng);
        assert!(s[..5].iter().all(|&t| t < 3));
        assert!(s[5..].iter().all(|&t| t >= 3));
        assert!(balanced(&s, 3));
    }

    #[test]
    fn shard_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ncat");
        let cfg = DyckConfig {
            k: 4,
            token_budget: 100,
            seq_len: 16,
            seed: 9,
            p_open: 0.5,
        };
        let summary = generate_dyck(&cfg, &path, 2).unwrap();
        assert_eq!(summary.num_sequences, 7);
        let shard = super::super::shard::Shard::open(&path).unwrap();
        assert_eq!(shard.kind(), super::super::shard::ShardKind::Dyck { k: 4 });
        for (i, s) in shard.sequences().enumerate() {
            assert_eq!(s, dyck_sequence(&cfg, i as u64).as_slice());
            assert!(balanced(s, 4));
        }
    }
}
