use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::shard::{Shard, ShardKind};
use crate::error::Result;

/// Default rank window of the log-log fit.
pub const FIT_RANK_LO: usize = 10;
pub const FIT_RANK_HI: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankFrequency {
    pub rank: usize,
    pub token: u32,
    pub count: u64,
    pub rel_freq: f64,
}

/// Least-squares line `ln(freq) = slope * ln(rank) + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rank_lo: usize,
    pub rank_hi: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipfReport {
    pub total_tokens: u64,
    pub distinct_tokens: usize,
    pub delimiters_included: bool,
    /// `None` when fewer than two ranks fall in the fit window.
    pub fit: Option<PowerLawFit>,
    /// Sorted by count descending, ties by token id.
    pub ranks: Vec<RankFrequency>,
}

impl ZipfReport {
    pub fn from_counts(counts: HashMap<u32, u64>, delimiters_included: bool) -> Self {
        let mut pairs: Vec<(u32, u64)> = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: u64 = pairs.iter().map(|p| p.1).sum();
        let ranks: Vec<RankFrequency> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(token, count))| RankFrequency {
                rank: i + 1,
                token,
                count,
                rel_freq: count as f64 / total as f64,
            })
            .collect();
        let fit = fit_power_law(&ranks, FIT_RANK_LO, FIT_RANK_HI);
        ZipfReport {
            total_tokens: total,
            distinct_tokens: ranks.len(),
            delimiters_included,
            fit,
            ranks,
        }
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a u32>, keep: impl Fn(u32) -> bool) -> Self {
        let mut counts = HashMap::new();
        for &t in tokens {
            if keep(t) {
                *counts.entry(t).or_insert(0u64) += 1;
            }
        }
        Self::from_counts(counts, false)
    }
}

/// Fits over ranks `[rank_lo, min(rank_hi, distinct)]`.
pub fn fit_power_law(ranks: &[RankFrequency], rank_lo: usize, rank_hi: usize) -> Option<PowerLawFit> {
    let hi = rank_hi.min(ranks.len());
    if rank_lo < 1 || hi < rank_lo + 1 {
        return None;
    }
    let pts: Vec<(f64, f64)> = ranks[rank_lo - 1..hi]
        .iter()
        .map(|r| ((r.rank as f64).ln(), r.rel_freq.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - (slope * p.0 + intercept)).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(PowerLawFit {
        slope,
        intercept,
        r_squared,
        rank_lo,
        rank_hi: hi,
    })
}

/// Rank-frequency report of a shard. Grid delimiters are dropped unless
/// `include_delimiters` is set; Dyck shards have none.
pub fn zipf_report(shard_path: impl AsRef<Path>, include_delimiters: bool) -> Result<ZipfReport> {
    let shard = Shard::open(shard_path)?;
    Ok(zipf_report_for(&shard, include_delimiters))
}

pub fn zipf_report_for(shard: &Shard, include_delimiters: bool) -> ZipfReport {
    let report = match shard.kind() {
        ShardKind::Nca(vocab) if !include_delimiters => {
            ZipfReport::from_tokens(shard.tokens(), |t| !vocab.is_delimiter(t))
        }
        _ => ZipfReport::from_tokens(shard.tokens(), |_| true),
    };
    ZipfReport {
        delimiters_included: include_delimiters,
        ..report
    }
}
