//! Transfer-efficiency arithmetic over validation-loss curves.
//!
//! Curves are exchanged as JSON lines, one evaluation per line:
//!
//! ```json
//! {"schema_version":1,"label":"nca","stage":"pre-training","seed":0,"tokens_seen":4096,"val_loss":3.91}
//! ```
//!
//! Lines sharing `(label, stage, seed)` form one curve, in file order.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CURVE_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    PrePreTraining,
    PreTraining,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tokens_seen: u64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub label: String,
    pub stage: Stage,
    pub seed: Option<u64>,
    points: Vec<CurvePoint>,
}

impl TrainingCurve {
    /// Token counts must be strictly increasing; losses finite and positive.
    pub fn new(label: impl Into<String>, stage: Stage, seed: Option<u64>, points: Vec<CurvePoint>) -> Result<Self> {
        let label = label.into();
        for w in points.windows(2) {
            if w[1].tokens_seen <= w[0].tokens_seen {
                return Err(Error::config(format!(
                    "curve {label:?}: tokens_seen not strictly increasing at {}",
                    w[1].tokens_seen
                )));
            }
        }
        if let Some(p) = points.iter().find(|p| !(p.val_loss.is_finite() && p.val_loss > 0.0)) {
            return Err(Error::config(format!(
                "curve {label:?}: loss {} at {} tokens is not finite and positive",
                p.val_loss, p.tokens_seen
            )));
        }
        Ok(TrainingCurve {
            label,
            stage,
            seed,
            points,
        })
    }

    pub fn from_pairs(label: impl Into<String>, pairs: &[(u64, f64)]) -> Result<Self> {
        let points = pairs
            .iter()
            .map(|&(tokens_seen, val_loss)| CurvePoint { tokens_seen, val_loss })
            .collect();
        Self::new(label, Stage::PreTraining, None, points)
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.points.last().map(|p| p.val_loss)
    }

    /// The same curve with every loss mapped to perplexity `exp(loss)`.
    pub fn to_perplexity(&self) -> TrainingCurve {
        TrainingCurve {
            points: self
                .points
                .iter()
                .map(|p| CurvePoint {
                    tokens_seen: p.tokens_seen,
                    val_loss: p.val_loss.exp(),
                })
                .collect(),
            ..self.clone()
        }
    }
}

/// How a threshold crossing between two logged evaluations is resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Crossing {
    /// Linear interpolation in (tokens, loss) between the bracketing evaluations.
    #[default]
    Interpolated,
    /// The first logged evaluation at or below the target.
    FirstLogged,
}

/// Token count at which the curve first reaches `loss <= target`, or `None`
/// if it never does.
pub fn tokens_to_reach(curve: &TrainingCurve, target: f64, crossing: Crossing) -> Option<f64> {
    let pts = curve.points();
    let i = pts.iter().position(|p| p.val_loss <= target)?;
    let hit = pts[i];
    if i == 0 || crossing == Crossing::FirstLogged {
        return Some(hit.tokens_seen as f64);
    }
    let prev = pts[i - 1];
    let frac = (prev.val_loss - target) / (prev.val_loss - hit.val_loss);
    Some(prev.tokens_seen as f64 + frac * (hit.tokens_seen - prev.tokens_seen) as f64)
}

/// `1 - (ppt_treated + pt_treated) / (ppt_base + pt_base)`.
///
/// `ppt_base` is zero for a baseline trained from scratch.
pub fn token_efficiency_gain(ppt_treated: f64, pt_treated: f64, ppt_base: f64, pt_base: f64) -> Result<f64> {
    let denom = ppt_base + pt_base;
    if !(denom.is_finite() && denom > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "baseline token total {denom} must be positive"
        )));
    }
    Ok(1.0 - (ppt_treated + pt_treated) / denom)
}

/// `tokens_to_reach(b) / tokens_to_reach(a)`: how many times faster `a` gets there.
pub fn convergence_speedup(
    curve_a: &TrainingCurve,
    curve_b: &TrainingCurve,
    target: f64,
    crossing: Crossing,
) -> Result<f64> {
    let reach = |c: &TrainingCurve| {
        tokens_to_reach(c, target, crossing)
            .ok_or_else(|| Error::UndefinedMetric(format!("curve {:?} never reaches loss {target}", c.label)))
    };
    let a = reach(curve_a)?;
    let b = reach(curve_b)?;
    if a == 0.0 {
        return Err(Error::UndefinedMetric(format!(
            "curve {:?} reaches the target at zero tokens",
            curve_a.label
        )));
    }
    Ok(b / a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub schema_version: u32,
    pub label: String,
    pub stage: Stage,
    #[serde(default)]
    pub seed: Option<u64>,
    pub tokens_seen: u64,
    pub val_loss: f64,
}

pub fn read_curves(path: impl AsRef<Path>) -> Result<Vec<TrainingCurve>> {
    let file = fs::File::open(path)?;
    parse_curves(BufReader::new(file))
}

/// `(label, stage, seed)`
type CurveKey = (String, Stage, Option<u64>);

pub fn parse_curves(reader: impl BufRead) -> Result<Vec<TrainingCurve>> {
    let mut groups: Vec<(CurveKey, Vec<CurvePoint>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CurveRecord = serde_json::from_str(&line).map_err(|e| Error::CurveLog {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if rec.schema_version != CURVE_SCHEMA_VERSION {
            return Err(Error::CurveLog {
                line: i + 1,
                reason: format!("unsupported schema version {}", rec.schema_version),
            });
        }
        let key = (rec.label, rec.stage, rec.seed);
        let point = CurvePoint {
            tokens_seen: rec.tokens_seen,
            val_loss: rec.val_loss,
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push(point),
            None => groups.push((key, vec![point])),
        }
    }
    groups
        .into_iter()
        .map(|((label, stage, seed), pts)| TrainingCurve::new(label, stage, seed, pts))
        .collect()
}

pub fn write_curves(path: impl AsRef<Path>, curves: &[TrainingCurve]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for c in curves {
        for p in c.points() {
            let rec = CurveRecord {
                schema_version: CURVE_SCHEMA_VERSION,
                label: c.label.clone(),
                stage: c.stage,
                seed: c.seed,
                tokens_seen: p.tokens_seen,
                val_loss: p.val_loss,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: Option<u64>,
    /// Final validation loss of the baseline run.
    pub target_loss: f64,
    pub baseline_tokens: f64,
    pub treated_tokens: Option<f64>,
    pub gain: Option<f64>,
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub baseline_label: String,
    pub treated_label: String,
    pub crossing: Crossing,
    pub treated_ppt_tokens: u64,
    pub per_seed: Vec<SeedComparison>,
    pub gain: Option<MeanStd>,
    pub speedup: Option<MeanStd>,
}

/// Compares a treated arm against a scratch baseline, seed by seed.
///
/// The target for each seed is the baseline's final validation loss. A single
/// unseeded baseline curve is paired with every treated curve.
pub fn compare_arms(
    baseline: &[TrainingCurve],
    treated: &[TrainingCurve],
    treated_ppt_tokens: u64,
    crossing: Crossing,
) -> Result<ComparisonReport> {
    let first = |c: &[TrainingCurve], what: &str| {
        c.first()
            .map(|c| c.label.clone())
            .ok_or_else(|| Error::UndefinedMetric(format!("no {what} curves")))
    };
    let baseline_label = first(baseline, "baseline")?;
    let treated_label = first(treated, "treated")?;

    let mut per_seed = Vec::new();
    for t in treated {
        let base = baseline
            .iter()
            .find(|b| b.seed == t.seed)
            .or_else(|| (baseline.len() == 1 && baseline[0].seed.is_none()).then(|| &baseline[0]));
        let Some(base) = base else { continue };
        let Some(target) = base.final_loss() else { continue };
        let baseline_tokens = tokens_to_reach(base, target, crossing).expect("final point reaches itself");
        let treated_tokens = tokens_to_reach(t, target, crossing);
        let gain = treated_tokens
            .map(|pt| token_efficiency_gain(treated_ppt_tokens as f64, pt, 0.0, baseline_tokens))
            .transpose()?;
        let speedup = treated_tokens.filter(|&pt| pt > 0.0).map(|pt| baseline_tokens / pt);
        per_seed.push(SeedComparison {
            seed: t.seed,
            target_loss: target,
            baseline_tokens,
            treated_tokens,
            gain,
            speedup,
        });
    }
    let gains: Vec<f64> = per_seed.iter().filter_map(|s| s.gain).collect();
    let speedups: Vec<f64> = per_seed.iter().filter_map(|s| s.speedup).collect();
    Ok(ComparisonReport {
        schema_version: REPORT_SCHEMA_VERSION,
        baseline_label,
        treated_label,
        crossing,
        treated_ppt_tokens,
        per_seed,
        gain: MeanStd::of(&gains),
        speedup: MeanStd::of(&speedups),
    })
}
