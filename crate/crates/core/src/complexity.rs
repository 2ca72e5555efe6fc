//! Trajectory complexity via gzip compressibility, and band-filtered sampling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use flate2::write::GzEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::GenConfig;
use crate::error::{Error, Result};
use crate::nca::{rollout, sample_rule, RuleParams, Trajectory};
use crate::seed::mix64;

/// DEFLATE level used for every ratio measurement. Band membership depends on
/// it, so it is recorded in shard headers.
pub const GZIP_LEVEL: u32 = 6;

/// Half-open interval of gzip ratios `(low_pct, high_pct]`, or `(low_pct, inf)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityBand {
    pub low_pct: f64,
    pub high_pct: Option<f64>,
}

impl ComplexityBand {
    /// The gzip bands used for complexity-matched corpora: 20-30, 30-40, 40-50, 50+.
    pub const PRESETS: [ComplexityBand; 4] = [
        ComplexityBand::between(20.0, 30.0),
        ComplexityBand::between(30.0, 40.0),
        ComplexityBand::between(40.0, 50.0),
        ComplexityBand::above(50.0),
    ];

    /// Accepts every ratio in `(0, 100]`.
    pub const FULL: ComplexityBand = ComplexityBand::between(0.0, 100.0);

    pub const fn between(low_pct: f64, high_pct: f64) -> Self {
        ComplexityBand {
            low_pct,
            high_pct: Some(high_pct),
        }
    }

    pub const fn above(low_pct: f64) -> Self {
        ComplexityBand {
            low_pct,
            high_pct: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low_pct.is_finite() && self.low_pct >= 0.0) {
            return Err(Error::config(format!("band low bound {} must be >= 0", self.low_pct)));
        }
        if let Some(high) = self.high_pct {
            if !(high.is_finite() && high > self.low_pct) {
                return Err(Error::config(format!(
                    "band high bound {high} must exceed low bound {}",
                    self.low_pct
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, ratio_pct: f64) -> bool {
        ratio_pct > self.low_pct && self.high_pct.is_none_or(|h| ratio_pct <= h)
    }
}

impl fmt::Display for ComplexityBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.high_pct {
            Some(h) => write!(f, "{}-{}", self.low_pct, h),
            None => write!(f, "{}+", self.low_pct),
        }
    }
}

impl FromStr for ComplexityBand {
    type Err = Error;

    /// Parses `LO-HI` or `LO+`, in percent.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_end_matches('%');
        let parse = |v: &str| {
            v.trim()
                .trim_end_matches('%')
                .parse::<f64>()
                .map_err(|_| Error::config(format!("invalid band bound {v:?}")))
        };
        let band = if let Some(lo) = s.strip_suffix('+') {
            ComplexityBand::above(parse(lo)?)
        } else if let Some((lo, hi)) = s.split_once('-') {
            ComplexityBand::between(parse(lo)?, parse(hi)?)
        } else {
            return Err(Error::config(format!("band {s:?} is not LO-HI or LO+")));
        };
        band.validate()?;
        Ok(band)
    }
}

/// `100 * gzip_len(bytes) / bytes.len()` at [`GZIP_LEVEL`], gzip container included.
pub fn gzip_ratio_bytes(bytes: &[u8]) -> f64 {
    assert!(!bytes.is_empty(), "gzip ratio of an empty buffer");
    let mut enc = GzEncoder::new(Vec::with_capacity(bytes.len() / 2 + 32), Compression::new(GZIP_LEVEL));
    enc.write_all(bytes).expect("in-memory write");
    let compressed = enc.finish().expect("in-memory write");
    100.0 * compressed.len() as f64 / bytes.len() as f64
}

/// Compression ratio of a trajectory's raw cell bytes (one byte per cell,
/// row-major, grids in time order, no delimiters).
pub fn gzip_ratio(trajectory: &Trajectory) -> f64 {
    gzip_ratio_bytes(&trajectory.cell_bytes())
}

/// An accepted rule, its annotated trajectory, and how many rules were tried.
#[derive(Clone, Debug)]
pub struct BandSample {
    pub rule: RuleParams,
    pub trajectory: Trajectory,
    pub attempts: u32,
}

impl BandSample {
    pub fn ratio(&self) -> f64 {
        self.trajectory.gzip_ratio_pct.expect("annotated on acceptance")
    }
}

/// Sub-index used for attempt `attempt` of `sequence_index`. The first attempt
/// uses the sequence index itself.
pub fn attempt_index(sequence_index: u64, attempt: u32) -> u64 {
    if attempt == 0 {
        sequence_index
    } else {
        mix64(sequence_index, attempt as u64)
    }
}

/// Rejection-samples rules until a rollout's gzip ratio falls in `config.band`.
///
/// Rules with non-finite logits count as rejected attempts.
pub fn sample_in_band(master_seed: u64, sequence_index: u64, config: &GenConfig) -> Result<BandSample> {
    let mut last_ratio = None;
    for attempt in 0..config.max_rejection_retries {
        let rule = sample_rule(master_seed, attempt_index(sequence_index, attempt), config);
        let mut trajectory = match rollout(&rule, config) {
            Ok(t) => t,
            Err(Error::NonFiniteLogits { .. }) => continue,
            Err(e) => return Err(e),
        };
        let ratio = gzip_ratio(&trajectory);
        last_ratio = Some(ratio);
        if config.band.contains(ratio) {
            trajectory.gzip_ratio_pct = Some(ratio);
            return Ok(BandSample {
                rule,
                trajectory,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::RetriesExhausted {
        sequence_index,
        attempts: config.max_rejection_retries,
        last_ratio,
    })
}

/// Ratios of `count` unfiltered rollouts, rules `0..count` under the master seed.
/// Rules with non-finite logits are skipped.
pub fn sample_ratios(count: usize, config: &GenConfig) -> Result<Vec<f64>> {
    let ratios: Vec<Option<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let rule = sample_rule(config.master_seed, i, config);
            match rollout(&rule, config) {
                Ok(t) => Ok(Some(gzip_ratio(&t))),
                Err(Error::NonFiniteLogits { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().flatten().collect())
}

/// Binned distribution of gzip ratios with summary quantiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityHistogram {
    pub bin_width_pct: f64,
    /// `counts[i]` covers `[i * width, (i + 1) * width)`; the last bin is open-ended.
    pub counts: Vec<u64>,
    pub total: u64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl ComplexityHistogram {
    pub const BIN_WIDTH_PCT: f64 = 5.0;
    pub const NUM_BINS: usize = 22;

    pub fn from_ratios(ratios: &[f64]) -> Self {
        let mut counts = vec![0u64; Self::NUM_BINS];
        for &r in ratios {
            let bin = ((r / Self::BIN_WIDTH_PCT).floor().max(0.0) as usize).min(Self::NUM_BINS - 1);
            counts[bin] += 1;
        }
        let mut sorted = ratios.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| quantile(&sorted, p);
        ComplexityHistogram {
            bin_width_pct: Self::BIN_WIDTH_PCT,
            counts,
            total: ratios.len() as u64,
            min: q(0.0),
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: q(1.0),
        }
    }
}

/// Linear-interpolation quantile of sorted data; NaN when empty.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = p * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Gzip-ratio histogram over `count` unfiltered rules. `config.band` is ignored.
pub fn complexity_histogram(count: usize, config: &GenConfig) -> Result<ComplexityHistogram> {
    if count == 0 {
        return Err(Error::config("histogram needs at least one sample"));
    }
    Ok(ComplexityHistogram::from_ratios(&sample_ratios(count, config)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nca::Grid;
    use rand::{Rng, SeedableRng};

    fn uniform_digits(len: usize, seed: u64) -> Vec<u8> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(0..10u8)).collect()
    }

    #[test]
    fn zero_buffer_compresses_well() {
        let r = gzip_ratio_bytes(&[0u8; 3744]);
        assert!(r < 5.0, "{r}");
    }

    #[test]
    fn uniform_digits_ratio_range() {
        for seed in 0..5 {
            let r = gzip_ratio_bytes(&uniform_digits(3744, seed));
            assert!((40.0..=55.0).contains(&r), "{r}");
        }
    }

    #[test]
    fn period_two_below_uniform() {
        let a = uniform_digits(144, 1);
        let b = uniform_digits(144, 2);
        let frames: Vec<Grid> = (0..26)
            .map(|t| Grid::new(12, 12, 10, if t % 2 == 0 { a.clone() } else { b.clone() }).unwrap())
            .collect();
        let periodic = gzip_ratio(&Trajectory::new(0, frames));
        let uniform = gzip_ratio_bytes(&uniform_digits(3744, 3));
        assert!(periodic < uniform, "{periodic} vs {uniform}");
    }

    #[test]
    fn ratio_is_deterministic_and_positive() {
        let bytes = uniform_digits(500, 9);
        assert_eq!(gzip_ratio_bytes(&bytes), gzip_ratio_bytes(&bytes));
        // Tiny inputs exceed 100% because of container overhead.
        let tiny = gzip_ratio_bytes(&[1, 2, 3]);
        assert!(tiny > 100.0);
    }

    #[test]
    fn band_membership() {
        let b = ComplexityBand::between(20.0, 30.0);
        assert!(!b.contains(20.0));
        assert!(b.contains(20.01));
        assert!(b.contains(30.0));
        assert!(!b.contains(30.01));
        let open = ComplexityBand::above(50.0);
        assert!(!open.contains(50.0));
        assert!(open.contains(150.0));
    }

    #[test]
    fn band_parsing() {
        assert_eq!("50+".parse::<ComplexityBand>().unwrap(), ComplexityBand::above(50.0));
        assert_eq!(
            "20-30".parse::<ComplexityBand>().unwrap(),
            ComplexityBand::between(20.0, 30.0)
        );
        assert_eq!(
            "40%-50%".parse::<ComplexityBand>().unwrap(),
            ComplexityBand::between(40.0, 50.0)
        );
        assert!("30-20".parse::<ComplexityBand>().is_err());
        assert!("abc".parse::<ComplexityBand>().is_err());
        for preset in ComplexityBand::PRESETS {
            assert_eq!(preset.to_string().parse::<ComplexityBand>().unwrap(), preset);
        }
    }

    #[test]
    fn full_band_accepts_first_rule() {
        let cfg = GenConfig::default().with_band(ComplexityBand::FULL);
        for i in 0..10 {
            let s = sample_in_band(5, i, &cfg).unwrap();
            assert_eq!(s.attempts, 1);
            assert_eq!(s.rule, sample_rule(5, i, &cfg));
        }
    }

    #[test]
    fn band_sampling_is_deterministic_and_in_band() {
        let cfg = GenConfig::default();
        for i in 0..20 {
            let a = sample_in_band(1, i, &cfg).unwrap();
            let b = sample_in_band(1, i, &cfg).unwrap();
            assert!(a.ratio() > 50.0);
            assert_eq!(a.trajectory, b.trajectory);
            assert_eq!(a.attempts, b.attempts);
        }
    }

    #[test]
    fn infeasible_band_exhausts_retries() {
        let cfg = GenConfig {
            max_rejection_retries: 20,
            ..GenConfig::default()
                .with_alphabet(2)
                .with_band(ComplexityBand::between(99.0, 100.0))
        };
        match sample_in_band(0, 3, &cfg) {
            Err(Error::RetriesExhausted {
                sequence_index: 3,
                attempts: 20,
                last_ratio: Some(r),
            }) => assert!(r < 99.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn histogram_single_sample() {
        let cfg = GenConfig::default();
        let h = complexity_histogram(1, &cfg).unwrap();
        assert_eq!(h.total, 1);
        assert_eq!(h.counts.iter().sum::<u64>(), 1);
        assert_eq!(h.median, h.min);
        let ratio = gzip_ratio(&rollout(&sample_rule(0, 0, &cfg), &cfg).unwrap());
        assert_eq!(h.median, ratio);
        assert_eq!(h.counts[(ratio / 5.0) as usize], 1);
    }

    #[test]
    fn histogram_is_reproducible() {
        let cfg = GenConfig::default().with_seed(77);
        assert_eq!(
            complexity_histogram(50, &cfg).unwrap(),
            complexity_histogram(50, &cfg).unwrap()
        );
    }

    #[test]
    fn quantiles() {
        let h = ComplexityHistogram::from_ratios(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((h.min, h.q1, h.median, h.q3, h.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!((h.counts[0], h.counts[1]), (4, 1));
        let h = ComplexityHistogram::from_ratios(&[120.0]);
        assert_eq!(h.counts[21], 1);
    }
}
