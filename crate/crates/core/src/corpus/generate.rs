use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shard::{encode_band, ShardHeader, ShardWriter, FORMAT_VERSION};
use crate::complexity::{sample_in_band, ComplexityHistogram, GZIP_LEVEL};
use crate::config::GenConfig;
use crate::error::{Error, Result};
use crate::tokenizer::serialize_trajectory;

pub const STATS_SCHEMA_VERSION: u32 = 1;

/// Sequences generated in parallel before being handed to the ordered writer.
const CHUNK: u64 = 256;

/// JSON sidecar written next to every generated shard.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub schema_version: u32,
    pub kind: String,
    pub config: GenConfig,
    pub token_budget: u64,
    pub num_sequences: u64,
    pub seq_len: u64,
    pub total_tokens: u64,
    pub compressor_level: u32,
    pub accepted: u64,
    pub rejected: u64,
    pub attempts: u64,
    pub acceptance_rate: f64,
    /// Fraction of accepted ratios inside the configured band (always 1 for a valid run).
    pub in_band_fraction: f64,
    pub ratio_histogram: ComplexityHistogram,
    pub workers: usize,
    pub elapsed_secs: f64,
    pub tokens_per_sec: f64,
}

/// `<shard>.stats.json`
pub fn stats_path(shard: &Path) -> PathBuf {
    let mut p = shard.as_os_str().to_owned();
    p.push(".stats.json");
    PathBuf::from(p)
}

/// Number of fixed-length sequences needed to cover `token_budget`.
pub fn sequences_for_budget(token_budget: u64, seq_len: u64) -> u64 {
    token_budget.div_ceil(seq_len)
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))
}

/// Generates a band-filtered NCA corpus into one shard plus a stats sidecar.
///
/// `workers == 0` uses one worker per available core. Output bytes depend only
/// on `config` and `token_budget`.
pub fn generate_corpus(
    config: &GenConfig,
    token_budget: u64,
    out_path: impl AsRef<Path>,
    workers: usize,
) -> Result<CorpusStats> {
    config.validate()?;
    if token_budget == 0 {
        return Err(Error::config("token budget must be positive"));
    }
    let out_path = out_path.as_ref();
    let vocab = config.vocab()?;
    let seq_len = config.seq_len() as u64;
    let num_sequences = sequences_for_budget(token_budget, seq_len);
    let (band_low, band_high) = encode_band(&config.band)?;
    let header = ShardHeader {
        format_version: FORMAT_VERSION,
        alphabet_n: config.alphabet_n as u16,
        grid_h: config.grid_h as u16,
        grid_w: config.grid_w as u16,
        patch_h: config.patch_h as u16,
        patch_w: config.patch_w as u16,
        seq_len: seq_len as u32,
        num_sequences,
        master_seed: config.master_seed,
        band_low,
        band_high,
        compressor_level: GZIP_LEVEL as u8,
    };

    let pool = thread_pool(workers)?;
    let started = Instant::now();
    let mut writer = ShardWriter::create(out_path, header)?;
    let mut ratios = Vec::with_capacity(num_sequences as usize);
    let mut attempts = 0u64;

    let mut start = 0;
    while start < num_sequences {
        let end = (start + CHUNK * pool.current_num_threads() as u64).min(num_sequences);
        let chunk: Vec<Result<(Vec<u32>, f64, u32)>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let sample = sample_in_band(config.master_seed, i, config)?;
                    let seq = serialize_trajectory(&sample.trajectory, &vocab)?;
                    Ok((seq.tokens, sample.ratio(), sample.attempts))
                })
                .collect()
        });
        for item in chunk {
            let (tokens, ratio, tries) = item?;
            writer.write_sequence(&tokens)?;
            ratios.push(ratio);
            attempts += tries as u64;
        }
        start = end;
    }
    writer.finish()?;
    let elapsed = started.elapsed().as_secs_f64();

    let total_tokens = num_sequences * seq_len;
    let in_band = ratios.iter().filter(|&&r| config.band.contains(r)).count();
    let stats = CorpusStats {
        schema_version: STATS_SCHEMA_VERSION,
        kind: "nca".into(),
        config: config.clone(),
        token_budget,
        num_sequences,
        seq_len,
        total_tokens,
        compressor_level: GZIP_LEVEL,
        accepted: num_sequences,
        rejected: attempts - num_sequences,
        attempts,
        acceptance_rate: num_sequences as f64 / attempts as f64,
        in_band_fraction: in_band as f64 / num_sequences as f64,
        ratio_histogram: ComplexityHistogram::from_ratios(&ratios),
        workers: pool.current_num_threads(),
        elapsed_secs: elapsed,
        tokens_per_sec: total_tokens as f64 / elapsed.max(1e-9),
    };
    fs::write(stats_path(out_path), serde_json::to_vec_pretty(&stats)?)?;
    Ok(stats)
}
