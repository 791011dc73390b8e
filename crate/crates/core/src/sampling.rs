//! Turning utility scores into contrastive training pairs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attribution::UtilityReport;
use crate::error::{Error, Result};
use crate::types::{Passage, QueryText, SharedContext, SyntheticExample, TrainingPairSet};

/// Relative slack under which two partition costs count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterLabel {
    Positive,
    Discard,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// One label per input score, in input order.
    pub labels: Vec<ClusterLabel>,
    /// Means of the positive, discard and negative clusters.
    pub centroids: [f64; 3],
}

fn sse(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum()
}

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - TIE_TOL * (1.0 + incumbent.abs())
}

fn no_worse(candidate: f64, incumbent: f64) -> bool {
    !better(incumbent, candidate)
}

/// Exact 3-means of one-dimensional scores.
///
/// Scores are sorted in descending order and split into three contiguous,
/// non-empty runs minimizing the total within-cluster sum of squares, via
/// dynamic programming over cut positions. Cuts only fall between distinct
/// values, so equal scores always share a cluster. Among equal-cost
/// partitions the one with the largest upper clusters wins.
pub fn cluster_1d(scores: &[f64]) -> Result<ClusterAssignment> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let n = sorted.len();
    let distinct = 1 + sorted.windows(2).filter(|w| w[0] != w[1]).count();
    if n < 3 || distinct < 3 {
        return Err(Error::InsufficientSeparation {
            distinct: if n == 0 { 0 } else { distinct },
        });
    }
    // cut j splits sorted[..j] from sorted[j..]
    let can_cut = |j: usize| j > 0 && j < n && sorted[j - 1] != sorted[j];

    // two[i]: best cost and first cut for sorted[..i] in two clusters
    let mut two: Vec<Option<(f64, usize)>> = vec![None; n + 1];
    for (i, slot) in two.iter_mut().enumerate().skip(2) {
        for a in 1..i {
            if !can_cut(a) {
                continue;
            }
            let cost = sse(&sorted[..a]) + sse(&sorted[a..i]);
            match *slot {
                Some((best, _)) if !no_worse(cost, best) => {}
                _ => *slot = Some((cost, a)),
            }
        }
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for b in 2..n {
        if !can_cut(b) {
            continue;
        }
        let Some((head, a)) = two[b] else { continue };
        let cost = head + sse(&sorted[b..]);
        match best {
            Some((c, _, _)) if !no_worse(cost, c) => {}
            _ => best = Some((cost, a, b)),
        }
    }
    let (_, a, b) = best.ok_or(Error::InsufficientSeparation { distinct })?;

    let mut labels = vec![ClusterLabel::Negative; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = if rank < a {
            ClusterLabel::Positive
        } else if rank < b {
            ClusterLabel::Discard
        } else {
            ClusterLabel::Negative
        };
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(ClusterAssignment {
        labels,
        centroids: [mean(&sorted[..a]), mean(&sorted[a..b]), mean(&sorted[b..])],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Positives and negatives from the outer clusters of [`cluster_1d`].
    #[default]
    Cluster,
    /// The best passage against the five worst.
    Top1Bottom5,
}

impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(SamplingStrategy::Cluster),
            "top1_bottom5" => Ok(SamplingStrategy::Top1Bottom5),
            other => Err(Error::InvalidConfig(format!("unknown sampling strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSelection {
    pub pairs: TrainingPairSet,
    /// Set when the cluster strategy fell back to top-1 / bottom-5.
    pub fallback: bool,
    pub warning: Option<String>,
}

/// Indices for the top-1 / bottom-5 strategy. Ties in score go to the lower
/// index first, so the lowest index wins the positive slot.
fn top1_bottom5(scores: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let Some((&top, rest)) = order.split_first() else {
        return (vec![], vec![]);
    };
    let take = rest.len().min(5);
    let mut negatives = rest[rest.len() - take..].to_vec();
    negatives.sort_unstable();
    (vec![top], negatives)
}

pub fn select_pairs(
    report: &UtilityReport,
    context: &SharedContext,
    query: &QueryText,
    strategy: SamplingStrategy,
) -> Result<PairSelection> {
    let scores = &report.scores;
    if scores.len() != context.len() {
        return Err(Error::DimensionMismatch {
            expected: context.len(),
            actual: scores.len(),
        });
    }
    let pick = |idx: &[usize]| -> Vec<Passage> { idx.iter().map(|&i| context.passages[i].clone()).collect() };
    let (pos, neg, fallback, warning) = match strategy {
        SamplingStrategy::Top1Bottom5 => {
            let (p, n) = top1_bottom5(scores);
            (p, n, false, None)
        }
        SamplingStrategy::Cluster => match cluster_1d(scores) {
            Ok(assignment) => {
                let with =
                    |label| -> Vec<usize> { (0..scores.len()).filter(|&i| assignment.labels[i] == label).collect() };
                (with(ClusterLabel::Positive), with(ClusterLabel::Negative), false, None)
            }
            Err(Error::InsufficientSeparation { distinct }) => {
                let (p, n) = top1_bottom5(scores);
                let msg = if distinct <= 1 {
                    format!("context {}: all scores equal, used top1_bottom5", context.context_id)
                } else {
                    format!(
                        "context {}: {distinct} distinct scores, used top1_bottom5",
                        context.context_id
                    )
                };
                log::warn!("{msg}");
                (p, n, true, Some(msg))
            }
            Err(e) => return Err(e),
        },
    };
    Ok(PairSelection {
        pairs: TrainingPairSet::new(query.clone(), pick(&pos), pick(&neg))?,
        fallback,
        warning,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub instances: usize,
    pub emitted: usize,
    pub skipped: usize,
    pub fallbacks: usize,
}

/// Writes one `pairs.jsonl` line per complete pair set, in input order.
/// Sets with an empty side are skipped and counted.
pub fn emit_training_pairs<W: Write>(
    instances: &[(SyntheticExample, TrainingPairSet)],
    mut out: W,
) -> Result<SampleSummary> {
    let mut summary = SampleSummary {
        instances: instances.len(),
        ..Default::default()
    };
    for (example, pairs) in instances {
        if !pairs.is_complete() {
            log::warn!(
                "skipping {}/{}: empty positive or negative side",
                example.context_id,
                example.task_id
            );
            summary.skipped += 1;
            continue;
        }
        serde_json::to_writer(&mut out, &pairs.to_record())?;
        out.write_all(b"\n")?;
        summary.emitted += 1;
    }
    out.flush()?;
    Ok(summary)
}
