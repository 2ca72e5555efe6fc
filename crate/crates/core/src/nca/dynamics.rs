use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{sample_init, Grid};
use super::rule::RuleParams;
use crate::config::GenConfig;
use crate::error::{Error, Result};
use crate::seed::{stream_rng, Stream};

/// How the next state is chosen from a cell's logits.
pub enum StepMode<'a> {
    /// Draw from `softmax(logits / temperature)`. Consumes exactly one uniform
    /// draw per cell, in row-major order.
    Sampled { temperature: f64, rng: &'a mut ChaCha8Rng },
    /// Highest logit, ties broken by the lowest state index.
    Argmax,
}

/// Ordered grids produced by iterating one rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rule_seed: u64,
    pub grids: Vec<Grid>,
    /// Set once the complexity filter has measured the trajectory.
    pub gzip_ratio_pct: Option<f64>,
}

impl Trajectory {
    pub fn new(rule_seed: u64, grids: Vec<Grid>) -> Self {
        Trajectory {
            rule_seed,
            grids,
            gzip_ratio_pct: None,
        }
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    /// Raw cell values of every grid, row-major, concatenated in time order.
    pub fn cell_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.grids.iter().map(|g| g.cells().len()).sum());
        for g in &self.grids {
            out.extend_from_slice(g.cells());
        }
        out
    }
}

/// Transition network rearranged for per-cell evaluation.
///
/// `taps[(k * n + s) * C + c]` is the contribution of state `s` at kernel
/// offset `k = ky * 3 + kx` to conv channel `c`.
struct Kernel<'r> {
    rule: &'r RuleParams,
    taps: Vec<f32>,
}

impl<'r> Kernel<'r> {
    fn new(rule: &'r RuleParams) -> Self {
        let n = rule.alphabet_n;
        let ch = rule.conv_channels;
        let mut taps = vec![0.0; 9 * n * ch];
        for k in 0..9 {
            for s in 0..n {
                for c in 0..ch {
                    taps[(k * n + s) * ch + c] = rule.conv_weight(c, s, k / 3, k % 3);
                }
            }
        }
        Kernel { rule, taps }
    }

    /// Writes the logits of every cell into `out` (`cells * n`, row-major).
    fn logits(&self, grid: &Grid, out: &mut Vec<f32>) -> Result<()> {
        let rule = self.rule;
        let n = rule.alphabet_n;
        let ch = rule.conv_channels;
        let hidden = rule.mlp_hidden;
        let (h, w) = (grid.height(), grid.width());
        out.clear();
        out.resize(h * w * n, 0.0);

        let mut z = vec![0.0f32; ch];
        let mut act = vec![0.0f32; hidden];
        for row in 0..h {
            let rows = [(row + h - 1) % h, row, (row + 1) % h];
            for col in 0..w {
                let cols = [(col + w - 1) % w, col, (col + 1) % w];
                z.copy_from_slice(&rule.conv_bias);
                for (ky, &r) in rows.iter().enumerate() {
                    for (kx, &c) in cols.iter().enumerate() {
                        let s = grid.get(r, c) as usize;
                        let base = ((ky * 3 + kx) * n + s) * ch;
                        for (zc, &t) in z.iter_mut().zip(&self.taps[base..base + ch]) {
                            *zc += t;
                        }
                    }
                }
                for (j, a) in act.iter_mut().enumerate() {
                    let wrow = &rule.mlp_w1[j * ch..(j + 1) * ch];
                    let v = rule.mlp_b1[j] + wrow.iter().zip(&z).map(|(w, x)| w * x).sum::<f32>();
                    *a = v.max(0.0);
                }
                let cell = (row * w + col) * n;
                for (s, logit) in out[cell..cell + n].iter_mut().enumerate() {
                    let wrow = &rule.mlp_w2[s * hidden..(s + 1) * hidden];
                    *logit = rule.mlp_b2[s] + wrow.iter().zip(&act).map(|(w, x)| w * x).sum::<f32>();
                }
            }
        }
        if out.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLogits {
                rule_seed: rule.rule_seed,
            });
        }
        Ok(())
    }

    fn step(&self, grid: &Grid, mode: &mut StepMode<'_>, logits: &mut Vec<f32>) -> Result<Grid> {
        self.logits(grid, logits)?;
        let n = self.rule.alphabet_n;
        let next: Vec<u8> = match mode {
            StepMode::Argmax => logits.chunks_exact(n).map(|l| argmax(l) as u8).collect(),
            StepMode::Sampled { temperature, rng } => {
                let inv_t = 1.0 / *temperature;
                let mut probs = vec![0.0f64; n];
                logits
                    .chunks_exact(n)
                    .map(|l| sample_softmax(l, inv_t, &mut probs, rng) as u8)
                    .collect()
            }
        };
        Ok(Grid::from_raw(grid.height(), grid.width(), n, next))
    }
}

#[inline]
fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

#[inline]
fn sample_softmax(logits: &[f32], inv_t: f64, probs: &mut [f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let best = argmax(logits);
    let max = logits[best] as f64;
    let mut total = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = ((l as f64 - max) * inv_t).exp();
        total += *p;
    }
    let mut threshold = u * total;
    for (s, &p) in probs.iter().enumerate() {
        if threshold < p {
            return s;
        }
        threshold -= p;
    }
    // Only reachable through rounding at the top of the cumulative sum.
    best
}

/// Logits of every cell (`height * width * n`, row-major), before temperature.
pub fn cell_logits(grid: &Grid, rule: &RuleParams) -> Result<Vec<f32>> {
    check_alphabet(grid, rule)?;
    let mut out = Vec::new();
    Kernel::new(rule).logits(grid, &mut out)?;
    Ok(out)
}

/// One synchronous update of every cell on the torus.
pub fn step(grid: &Grid, rule: &RuleParams, mut mode: StepMode<'_>) -> Result<Grid> {
    check_alphabet(grid, rule)?;
    let mut scratch = Vec::new();
    Kernel::new(rule).step(grid, &mut mode, &mut scratch)
}

/// Update rule applied during a rollout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RolloutMode {
    /// Temperature sampling with noise from the sequence's sampling stream.
    #[default]
    Sampled,
    /// Deterministic argmax dynamics; `config.temperature` is ignored.
    Argmax,
}

/// Rolls out `config.timesteps()` grids from the sequence's initial grid.
pub fn rollout(rule: &RuleParams, config: &GenConfig) -> Result<Trajectory> {
    rollout_with_mode(rule, config, RolloutMode::Sampled)
}

pub fn rollout_with_mode(rule: &RuleParams, config: &GenConfig, mode: RolloutMode) -> Result<Trajectory> {
    if rule.alphabet_n != config.alphabet_n {
        return Err(Error::config(format!(
            "rule alphabet {} does not match config alphabet {}",
            rule.alphabet_n, config.alphabet_n
        )));
    }
    let steps = config.timesteps();
    let kernel = Kernel::new(rule);
    let mut rng = stream_rng(rule.rule_seed, Stream::Sampling);
    let mut scratch = Vec::new();
    let mut grids = Vec::with_capacity(steps);
    grids.push(sample_init(rule.rule_seed, config));
    for _ in 1..steps {
        let mut step_mode = match mode {
            RolloutMode::Sampled => StepMode::Sampled {
                temperature: config.temperature,
                rng: &mut rng,
            },
            RolloutMode::Argmax => StepMode::Argmax,
        };
        let next = kernel.step(grids.last().expect("non-empty"), &mut step_mode, &mut scratch)?;
        grids.push(next);
    }
    Ok(Trajectory::new(rule.rule_seed, grids))
}

fn check_alphabet(grid: &Grid, rule: &RuleParams) -> Result<()> {
    if grid.alphabet() != rule.alphabet_n {
        return Err(Error::config(format!(
            "grid alphabet {} does not match rule alphabet {}",
            grid.alphabet(),
            rule.alphabet_n
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nca::rule::sample_rule;

    fn cfg() -> GenConfig {
        GenConfig::default()
    }

    /// Direct evaluation of the network on an explicit one-hot neighborhood,
    /// reading only from a snapshot of the input grid.
    #[allow(clippy::needless_range_loop)]
    fn reference_argmax(grid: &Grid, rule: &RuleParams) -> Grid {
        let snapshot = grid.clone();
        let n = rule.alphabet_n;
        let (h, w) = (grid.height() as isize, grid.width() as isize);
        let mut cells = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let mut onehot = vec![[[0.0f64; 3]; 3]; n];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let s = snapshot.get_wrapped(r + ky as isize - 1, c + kx as isize - 1);
                        onehot[s as usize][ky][kx] = 1.0;
                    }
                }
                let z: Vec<f64> = (0..rule.conv_channels)
                    .map(|ch| {
                        let mut acc = rule.conv_bias[ch] as f64;
                        for (s, plane) in onehot.iter().enumerate() {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    acc += rule.conv_weight(ch, s, ky, kx) as f64 * plane[ky][kx];
                                }
                            }
                        }
                        acc
                    })
                    .collect();
                let hid: Vec<f64> = (0..rule.mlp_hidden)
                    .map(|j| {
                        let v = rule.mlp_b1[j] as f64
                            + (0..rule.conv_channels)
                                .map(|ch| rule.mlp_w1[j * rule.conv_channels + ch] as f64 * z[ch])
                                .sum::<f64>();
                        v.max(0.0)
                    })
                    .collect();
                let logits: Vec<f64> = (0..n)
                    .map(|s| {
                        rule.mlp_b2[s] as f64
                            + (0..rule.mlp_hidden)
                                .map(|j| rule.mlp_w2[s * rule.mlp_hidden + j] as f64 * hid[j])
                                .sum::<f64>()
                    })
                    .collect();
                let mut best = 0;
                for s in 1..n {
                    if logits[s] > logits[best] {
                        best = s;
                    }
                }
                cells.push(best as u8);
            }
        }
        Grid::new(grid.height(), grid.width(), n, cells).unwrap()
    }

    #[test]
    fn zero_rule_collapses_to_state_zero() {
        let cfg = cfg();
        let rule = RuleParams::zeros(10, 4, 16, 5);
        let g = sample_init(5, &cfg);
        let next = step(&g, &rule, StepMode::Argmax).unwrap();
        assert!(next.cells().iter().all(|&c| c == 0));

        let traj = rollout_with_mode(&rule, &cfg, RolloutMode::Argmax).unwrap();
        assert_eq!(traj.len(), 26);
        assert_eq!(traj.grids[0], g);
        assert!(traj.grids[1..].iter().all(|g| *g == Grid::zeros(12, 12, 10)));

        // Tied logits are uniform under sampling.
        let traj = rollout(&rule, &cfg).unwrap();
        let nonzero = traj.grids[1..]
            .iter()
            .flat_map(|g| g.cells())
            .filter(|&&c| c != 0)
            .count();
        assert!(nonzero > 25 * 144 * 8 / 10, "{nonzero}");
    }

    #[test]
    fn matches_snapshot_reference() {
        let cfg = GenConfig {
            logit_gain: crate::config::LogitGain::UNIT,
            ..cfg()
        };
        for i in 0..20 {
            let rule = sample_rule(3, i, &cfg);
            let g = sample_init(rule.rule_seed, &cfg);
            let ours = step(&g, &rule, StepMode::Argmax).unwrap();
            let reference = reference_argmax(&g, &rule);
            // f32 vs f64 accumulation can flip near-ties; require near-total agreement.
            let diff = ours
                .cells()
                .iter()
                .zip(reference.cells())
                .filter(|(a, b)| a != b)
                .count();
            assert!(diff <= 1, "rule {i}: {diff} cells differ");
        }
    }

    #[test]
    fn argmax_is_translation_equivariant() {
        let cfg = cfg();
        let rule = sample_rule(11, 0, &cfg);
        let g = sample_init(rule.rule_seed, &cfg);
        for (dy, dx) in [(1, 0), (0, 1), (5, -3), (-7, 11)] {
            let a = step(&g.translate(dy, dx), &rule, StepMode::Argmax).unwrap();
            let b = step(&g, &rule, StepMode::Argmax).unwrap().translate(dy, dx);
            assert_eq!(a, b, "shift ({dy}, {dx})");
        }
    }

    #[test]
    fn rollout_is_deterministic_and_closed() {
        for n in [2usize, 10, 15] {
            let cfg = cfg().with_alphabet(n);
            let rule = sample_rule(8, 1, &cfg);
            let a = rollout(&rule, &cfg).unwrap();
            let b = rollout(&rule, &cfg).unwrap();
            assert_eq!(a, b);
            assert!(a.grids.iter().all(|g| g.cells().iter().all(|&c| (c as usize) < n)));
        }
    }

    #[test]
    fn non_finite_logits_fail_with_seed() {
        let mut rule = RuleParams::zeros(10, 4, 16, 0xABCD);
        rule.mlp_b2[3] = f32::NAN;
        let g = Grid::zeros(12, 12, 10);
        let err = step(&g, &rule, StepMode::Argmax).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLogits { rule_seed: 0xABCD }));
    }

    #[test]
    fn mismatched_alphabet_is_rejected() {
        let rule = RuleParams::zeros(10, 4, 16, 0);
        let g = Grid::zeros(4, 4, 2);
        assert!(step(&g, &rule, StepMode::Argmax).is_err());
    }

    #[test]
    fn sampling_follows_softmax() {
        // Two states with logit gap tau * ln 3: probabilities 3/4 and 1/4.
        let tau = 1e-3;
        let logits = [(3.0f64).ln() as f32 * tau as f32, 0.0];
        let mut rng = stream_rng(1, Stream::Sampling);
        let mut probs = [0.0; 2];
        let trials = 100_000;
        let zeros = (0..trials)
            .filter(|_| sample_softmax(&logits, 1.0 / tau, &mut probs, &mut rng) == 0)
            .count();
        let p = zeros as f64 / trials as f64;
        assert!((p - 0.75).abs() < 0.01, "p = {p}");
    }
}
