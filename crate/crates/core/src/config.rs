use serde::{Deserialize, Serialize};

use crate::complexity::ComplexityBand;
use crate::error::{Error, Result};
use crate::tokenizer::VocabSpec;

/// Range of the per-rule output-head gain, sampled log-uniformly.
///
/// The gain scales the final linear layer of every sampled rule. Gains near 1
/// give near-deterministic dynamics at `temperature = 1e-3`; gains comparable to
/// the temperature let sampling noise compete with the rule. Setting
/// `min == max == 1` disables the gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitGain {
    pub min: f64,
    pub max: f64,
}

impl Default for LogitGain {
    fn default() -> Self {
        LogitGain { min: 1e-4, max: 1.0 }
    }
}

impl LogitGain {
    pub const UNIT: LogitGain = LogitGain { min: 1.0, max: 1.0 };

    /// Maps a uniform draw in `[0, 1)` onto the log-uniform gain range.
    pub fn from_unit(&self, u: f64) -> f64 {
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (lo + u * (hi - lo)).exp()
    }
}

/// All generation knobs for one corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub alphabet_n: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub temperature: f64,
    /// Rollout length. `None` derives the longest rollout that fits `max_seq_len`.
    pub timesteps: Option<usize>,
    pub max_seq_len: usize,
    pub conv_channels: usize,
    pub mlp_hidden: usize,
    pub master_seed: u64,
    pub band: ComplexityBand,
    pub max_rejection_retries: u32,
    pub logit_gain: LogitGain,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            alphabet_n: 10,
            grid_h: 12,
            grid_w: 12,
            patch_h: 2,
            patch_w: 2,
            temperature: 1e-3,
            timesteps: None,
            max_seq_len: 1024,
            conv_channels: 4,
            mlp_hidden: 16,
            master_seed: 0,
            band: ComplexityBand::above(50.0),
            max_rejection_retries: 10_000,
            logit_gain: LogitGain::default(),
        }
    }
}

impl GenConfig {
    pub fn with_alphabet(mut self, n: usize) -> Self {
        self.alphabet_n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_band(mut self, band: ComplexityBand) -> Self {
        self.band = band;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet_n < 2 || self.alphabet_n > u8::MAX as usize + 1 {
            return Err(Error::config(format!(
                "alphabet_n must be in 2..=256, got {}",
                self.alphabet_n
            )));
        }
        for (name, v) in [
            ("grid_h", self.grid_h),
            ("grid_w", self.grid_w),
            ("patch_h", self.patch_h),
            ("patch_w", self.patch_w),
        ] {
            if v == 0 || v > u16::MAX as usize {
                return Err(Error::config(format!("{name} must be in 1..=65535, got {v}")));
            }
        }
        if !self.grid_h.is_multiple_of(self.patch_h) || !self.grid_w.is_multiple_of(self.patch_w) {
            return Err(Error::config(format!(
                "grid {}x{} is not divisible into {}x{} patches",
                self.grid_h, self.grid_w, self.patch_h, self.patch_w
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.conv_channels == 0 || self.mlp_hidden == 0 {
            return Err(Error::config("conv_channels and mlp_hidden must be positive"));
        }
        let g = self.logit_gain;
        if !(g.min.is_finite() && g.max.is_finite() && g.min > 0.0 && g.min <= g.max) {
            return Err(Error::config(format!(
                "logit gain range must satisfy 0 < min <= max, got {}..{}",
                g.min, g.max
            )));
        }
        self.band.validate()?;
        VocabSpec::new(self.alphabet_n, self.patch_h, self.patch_w)?;
        let block = self.block_len();
        let t = self.timesteps();
        if t == 0 {
            return Err(Error::config(format!(
                "max_seq_len {} cannot hold a single {}-token timestep",
                self.max_seq_len, block
            )));
        }
        if t * block > self.max_seq_len {
            return Err(Error::config(format!(
                "{t} timesteps x {block} tokens exceeds max_seq_len {}",
                self.max_seq_len
            )));
        }
        if self.max_seq_len > u32::MAX as usize {
            return Err(Error::config("max_seq_len must fit in 32 bits"));
        }
        Ok(())
    }

    pub fn patches_per_step(&self) -> usize {
        (self.grid_h / self.patch_h) * (self.grid_w / self.patch_w)
    }

    /// Tokens per serialized timestep: open delimiter, patches, close delimiter.
    pub fn block_len(&self) -> usize {
        self.patches_per_step() + 2
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps.unwrap_or_else(|| self.max_seq_len / self.block_len())
    }

    /// Tokens per serialized trajectory, which is also the shard sequence length.
    pub fn seq_len(&self) -> usize {
        self.timesteps() * self.block_len()
    }

    pub fn cells_per_grid(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn vocab(&self) -> Result<VocabSpec> {
        VocabSpec::new(self.alphabet_n, self.patch_h, self.patch_w)
    }
}
