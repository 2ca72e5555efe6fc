use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::config::GenConfig;
use crate::seed::{mix64, stream_rng, Stream};

/// Weights of one transition network: a 3x3 convolution over the one-hot
/// neighborhood followed by a cell-wise MLP with a ReLU hidden layer.
///
/// Layouts are row-major:
/// `conv_weights[c][s][ky][kx]`, `mlp_w1[j][c]`, `mlp_w2[s][j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub alphabet_n: usize,
    pub conv_channels: usize,
    pub mlp_hidden: usize,
    pub conv_weights: Vec<f32>,
    pub conv_bias: Vec<f32>,
    pub mlp_w1: Vec<f32>,
    pub mlp_b1: Vec<f32>,
    pub mlp_w2: Vec<f32>,
    pub mlp_b2: Vec<f32>,
    pub rule_seed: u64,
}

impl RuleParams {
    pub fn zeros(alphabet_n: usize, conv_channels: usize, mlp_hidden: usize, rule_seed: u64) -> Self {
        RuleParams {
            alphabet_n,
            conv_channels,
            mlp_hidden,
            conv_weights: vec![0.0; conv_channels * alphabet_n * 9],
            conv_bias: vec![0.0; conv_channels],
            mlp_w1: vec![0.0; mlp_hidden * conv_channels],
            mlp_b1: vec![0.0; mlp_hidden],
            mlp_w2: vec![0.0; alphabet_n * mlp_hidden],
            mlp_b2: vec![0.0; alphabet_n],
            rule_seed,
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv_weights.len()
            + self.conv_bias.len()
            + self.mlp_w1.len()
            + self.mlp_b1.len()
            + self.mlp_w2.len()
            + self.mlp_b2.len()
    }

    /// Closed-form parameter count for a network shape.
    pub fn expected_param_count(alphabet_n: usize, conv_channels: usize, mlp_hidden: usize) -> usize {
        9 * conv_channels * alphabet_n
            + conv_channels
            + conv_channels * mlp_hidden
            + mlp_hidden
            + mlp_hidden * alphabet_n
            + alphabet_n
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.conv_weights,
            &self.conv_bias,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }

    #[inline]
    pub fn conv_weight(&self, channel: usize, state: usize, ky: usize, kx: usize) -> f32 {
        self.conv_weights[((channel * self.alphabet_n + state) * 3 + ky) * 3 + kx]
    }
}

/// Seed of sequence `sequence_index` under `master_seed`.
pub fn rule_seed(master_seed: u64, sequence_index: u64) -> u64 {
    mix64(master_seed, sequence_index)
}

/// Samples a random transition network.
///
/// Weights are drawn from `Normal(0, 1/fan_in)` per layer (fan-in `9n` for the
/// convolution, `conv_channels` and `mlp_hidden` for the MLP layers), biases from
/// `Uniform(-0.5, 0.5)`. The output layer is then scaled by a log-uniform gain
/// drawn from `config.logit_gain`. Draw order: conv weights, conv bias, w1, b1,
/// w2, b2, gain.
pub fn sample_rule(master_seed: u64, sequence_index: u64, config: &GenConfig) -> RuleParams {
    let seed = rule_seed(master_seed, sequence_index);
    let mut rng = stream_rng(seed, Stream::Weights);
    let n = config.alphabet_n;
    let c = config.conv_channels;
    let h = config.mlp_hidden;

    let bias = Uniform::new(-0.5f32, 0.5f32).expect("valid range");
    let normal = |fan_in: usize, len: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
        let dist = Normal::new(0.0f32, (1.0 / fan_in as f32).sqrt()).expect("positive std");
        (0..len).map(|_| dist.sample(rng)).collect()
    };

    let conv_weights = normal(9 * n, c * n * 9, &mut rng);
    let conv_bias: Vec<f32> = (0..c).map(|_| bias.sample(&mut rng)).collect();
    let mlp_w1 = normal(c, h * c, &mut rng);
    let mlp_b1: Vec<f32> = (0..h).map(|_| bias.sample(&mut rng)).collect();
    let mut mlp_w2 = normal(h, n * h, &mut rng);
    let mut mlp_b2: Vec<f32> = (0..n).map(|_| bias.sample(&mut rng)).collect();

    let gain = config.logit_gain.from_unit(rng.random::<f64>()) as f32;
    mlp_w2.iter_mut().chain(mlp_b2.iter_mut()).for_each(|w| *w *= gain);

    RuleParams {
        alphabet_n: n,
        conv_channels: c,
        mlp_hidden: h,
        conv_weights,
        conv_bias,
        mlp_w1,
        mlp_b1,
        mlp_w2,
        mlp_b2,
        rule_seed: seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LogitGain;

    #[test]
    fn parameter_counts() {
        let cfg = GenConfig::default();
        let rule = sample_rule(42, 0, &cfg);
        assert_eq!(rule.param_count(), 614);
        assert_eq!(RuleParams::expected_param_count(10, 4, 16), 614);

        let rule = sample_rule(42, 0, &cfg.clone().with_alphabet(2));
        assert_eq!(rule.param_count(), 190);
        assert_eq!(RuleParams::expected_param_count(2, 4, 16), 190);
    }

    #[test]
    fn deterministic() {
        let cfg = GenConfig::default();
        let a = sample_rule(42, 0, &cfg);
        let b = sample_rule(42, 0, &cfg);
        assert_eq!(a, b);
        assert_ne!(a, sample_rule(42, 1, &cfg));
        assert_ne!(a, sample_rule(43, 0, &cfg));
        assert_eq!(a.rule_seed, rule_seed(42, 0));
    }

    #[test]
    fn values_finite_and_biases_bounded() {
        let cfg = GenConfig {
            logit_gain: LogitGain::UNIT,
            ..GenConfig::default()
        };
        for i in 0..50 {
            let rule = sample_rule(7, i, &cfg);
            assert!(rule.is_finite());
            for b in rule.conv_bias.iter().chain(&rule.mlp_b1).chain(&rule.mlp_b2) {
                assert!((-0.5..0.5).contains(b));
            }
        }
    }

    #[test]
    fn conv_weight_variance_matches_fan_in() {
        let cfg = GenConfig::default();
        let mut sum_sq = 0.0f64;
        let mut count = 0usize;
        for i in 0..200 {
            let rule = sample_rule(1, i, &cfg);
            sum_sq += rule.conv_weights.iter().map(|&w| (w as f64).powi(2)).sum::<f64>();
            count += rule.conv_weights.len();
        }
        let var = sum_sq / count as f64;
        let expected = 1.0 / 90.0;
        assert!((var - expected).abs() / expected < 0.05, "variance {var}");
    }
}
