//! Evaluation: top-K classification before/after propagation, threshold
//! sweeps over held-out challenges, and the corpus coverage estimate.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::simgraph::{LatentDistribution, LatentMatrix};
use crate::solver::{grade, select, SelectionConfig};
use crate::VertexId;

pub const TOPK_LEVELS: [usize; 3] = [1, 3, 5];

/// True if `target` ranks within the top `k` of `row` (ties: lower index first).
pub fn in_top_k(row: &[f64], target: usize, k: usize) -> bool {
    let t = row[target];
    let ahead = row
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v > t || (v == t && i < target))
        .count();
    ahead < k
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKRow {
    pub k: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKReport {
    pub rows: Vec<TopKRow>,
    pub sampled: usize,
}

impl TopKReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,before,after\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.k, r.before, r.after));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let [k, b, a] = f[..] else {
                return Err(Error::parse(n + 1, "expected K,before,after"));
            };
            rows.push(TopKRow {
                k: crate::tsv::parse_usize(n + 1, k)?,
                before: crate::tsv::parse_f64(n + 1, b)?,
                after: crate::tsv::parse_f64(n + 1, a)?,
            });
        }
        Ok(Self { rows, sampled: 0 })
    }

    pub fn row(&self, k: usize) -> Option<&TopKRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

/// Top-K accuracy of `before` (priors) and `after` (propagated) over a seeded
/// sample of vertices with a known true component.
pub fn run_topk_eval(
    truth: &[Option<usize>],
    before: &LatentMatrix,
    after: &LatentMatrix,
    sample_size: usize,
    seed: u64,
) -> TopKReport {
    let labelled: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].is_some()).collect();
    let mut sample: Vec<usize> = if sample_size >= labelled.len() {
        labelled
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, labelled.len(), sample_size)
            .into_iter()
            .map(|k| labelled[k])
            .collect()
    };
    sample.sort_unstable();
    let m = sample.len().max(1) as f64;
    let score = |state: &LatentMatrix, k: usize| {
        sample
            .iter()
            .filter(|&&i| in_top_k(state.row(i), truth[i].unwrap(), k))
            .count() as f64
            / m
    };
    TopKReport {
        rows: TOPK_LEVELS
            .iter()
            .map(|&k| TopKRow {
                k,
                before: score(before, k),
                after: score(after, k),
            })
            .collect(),
        sampled: sample.len(),
    }
}

/// A held-out challenge with its images already resolved to vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalChallenge {
    pub challenge_id: String,
    pub code: LatentDistribution,
    pub resolved: Vec<Option<VertexId>>,
    pub truth: BTreeSet<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub accuracy: f64,
    pub mean_selected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub best_threshold: f64,
    pub best_accuracy: f64,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,accuracy,mean_selected\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.accuracy, p.mean_selected));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let [t, a, m] = f[..] else {
                return Err(Error::parse(n + 1, "expected T,accuracy,mean_selected"));
            };
            points.push(SweepPoint {
                threshold: crate::tsv::parse_f64(n + 1, t)?,
                accuracy: crate::tsv::parse_f64(n + 1, a)?,
                mean_selected: crate::tsv::parse_f64(n + 1, m)?,
            });
        }
        Ok(Self::from_points(points))
    }

    fn from_points(points: Vec<SweepPoint>) -> Self {
        // first maximum, i.e. the lowest threshold among ties
        let best = points
            .iter()
            .fold(None::<&SweepPoint>, |b, p| match b {
                Some(b) if b.accuracy >= p.accuracy => Some(b),
                _ => Some(p),
            })
            .cloned();
        Self {
            best_threshold: best.as_ref().map_or(0.0, |b| b.threshold),
            best_accuracy: best.as_ref().map_or(0.0, |b| b.accuracy),
            points,
        }
    }

    pub fn accuracy_at(&self, threshold: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.threshold == threshold)
            .map(|p| p.accuracy)
    }
}

/// 0, 0.05, ..., 1.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

/// Exact-match accuracy and mean selection size at every threshold in `grid`.
pub fn run_threshold_sweep(
    challenges: &[EvalChallenge],
    state: &LatentMatrix,
    grid: &[f64],
) -> SweepResult {
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let m = challenges.len().max(1) as f64;
    let points = grid
        .into_iter()
        .map(|t| {
            let cfg = SelectionConfig::with_threshold(t);
            let (mut correct, mut selected) = (0usize, 0usize);
            for c in challenges {
                let ans = select(&c.code, &c.resolved, state, &cfg);
                correct += grade(&ans, &c.truth) as usize;
                selected += ans.selected.len();
            }
            SweepPoint {
                threshold: t,
                accuracy: correct as f64 / m,
                mean_selected: selected as f64 / m,
            }
        })
        .collect();
    SweepResult::from_points(points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub coverage: f64,
    pub estimated_total: f64,
    /// `estimated_total - n_graph_images`, rounded to the nearest integer.
    pub estimated_missing: i64,
}

impl Coverage {
    pub fn total_rounded(&self) -> i64 {
        self.estimated_total.round() as i64
    }
}

/// Missing-species style extrapolation from a sampled hit rate.
pub fn estimate_coverage(n_graph_images: u64, sampled: u64, found: u64) -> Result<Coverage> {
    if found == 0 {
        return Err(Error::Coverage("no sampled image was found in the graph".into()));
    }
    if found > sampled {
        return Err(Error::Coverage(format!("found {found} exceeds sampled {sampled}")));
    }
    let coverage = found as f64 / sampled as f64;
    // n * sampled / found keeps the full-precision total free of the division by coverage
    let total = n_graph_images as f64 * sampled as f64 / found as f64;
    Ok(Coverage {
        coverage,
        estimated_total: total,
        estimated_missing: (total - n_graph_images as f64).round() as i64,
    })
}

/// Same extrapolation from a coverage fraction given directly.
pub fn coverage_from_fraction(n_graph_images: u64, coverage: f64) -> Result<Coverage> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::Coverage(format!("coverage {coverage} outside (0, 1]")));
    }
    let total = n_graph_images as f64 / coverage;
    Ok(Coverage {
        coverage,
        estimated_total: total,
        estimated_missing: (total - n_graph_images as f64).round() as i64,
    })
}

/// Extrapolation with the hit rate truncated to `decimals` places, as in a
/// hand-reported "96.3%" for 1123/1165.
pub fn coverage_truncated(n_graph_images: u64, sampled: u64, found: u64, decimals: u32) -> Result<Coverage> {
    estimate_coverage(n_graph_images, sampled, found)?;
    let scale = 10u64.pow(decimals);
    let kept = found * scale / sampled;
    if kept == 0 {
        return Err(Error::Coverage(format!("coverage truncates to 0 at {decimals} decimals")));
    }
    coverage_from_fraction(n_graph_images, kept as f64 / scale as f64)
}
