//! Association graph: similarity-weighted image edges plus the merged dongle
//! (code-averaged prior, occurrence-count confidence) on every vertex.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::CooccurrenceCounts;
use crate::error::{Error, Result};
use crate::features::{cosine, SparseFeature};
use crate::tsv;
use crate::VertexId;

pub const DEFAULT_LATENT_DIM: usize = 230;

const SUM_TOLERANCE: f64 = 1e-6;

/// Probability vector over the latent basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    values: Vec<f64>,
}

impl LatentDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDistribution(format!("entry {v} is negative or not finite")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { values })
    }

    pub fn uniform(p: usize) -> Self {
        Self {
            values: vec![1.0 / p as f64; p],
        }
    }

    pub fn one_hot(p: usize, k: usize) -> Self {
        let mut values = vec![0.0; p];
        values[k] = 1.0;
        Self { values }
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the largest component; lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Dense row-major `n x p` matrix of per-vertex distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl LatentMatrix {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            data: vec![0.0; n * p],
        }
    }

    pub fn from_rows(p: usize, rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * p);
        for r in rows {
            assert_eq!(r.len(), p, "row length must equal p");
            data.extend(r);
        }
        Self { n, p, data }
    }

    pub fn from_flat(n: usize, p: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * p);
        Self { n, p, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p.max(1)).take(self.n)
    }

    pub fn max_abs_diff(&self, other: &LatentMatrix) -> f64 {
        assert_eq!((self.n, self.p), (other.n, other.p));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Sparse symmetric image graph with merged dongles.
///
/// Adjacency is stored in CSR form with every undirected edge present in both
/// rows, neighbors sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    p: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
    prior: LatentMatrix,
    confidence: Vec<f64>,
}

impl AssociationGraph {
    /// Assembles a graph from undirected edges `(i, j, w)` given once each.
    pub fn from_parts(
        edges: Vec<(u32, u32, f64)>,
        prior: LatentMatrix,
        confidence: Vec<f64>,
    ) -> Result<Self> {
        let n = prior.n();
        let p = prior.p();
        if confidence.len() != n {
            return Err(Error::DimensionMismatch {
                left: confidence.len(),
                right: n,
            });
        }
        if let Some(c) = confidence.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidConfig(format!("confidence {c} must be finite and >= 0")));
        }
        for (i, row) in prior.rows().enumerate() {
            LatentDistribution::new(row.to_vec())
                .map_err(|e| Error::InvalidConfig(format!("prior of vertex {i}: {e}")))?;
        }
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in &edges {
            if i == j {
                return Err(Error::InvalidConfig(format!("self-loop on vertex {i}")));
            }
            if i as usize >= n || j as usize >= n {
                return Err(Error::UnknownVertex(format!("{}", i.max(j))));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig(format!("edge ({i},{j}) weight {w}")));
            }
            adj[i as usize].push((j, w));
            adj[j as usize].push((i, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * edges.len());
        let mut weights = Vec::with_capacity(2 * edges.len());
        offsets.push(0);
        for (i, mut row) in adj.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidConfig(format!("duplicate edge at vertex {i}")));
            }
            for (j, w) in row {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Ok(Self {
            p,
            offsets,
            neighbors,
            weights,
            prior,
            confidence,
        })
    }

    pub fn n(&self) -> usize {
        self.confidence.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// `(neighbor, weight)` pairs of vertex `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&j, &w)| (j as usize, w))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Weight of edge `(i, j)`, 0 when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.neighbors[range.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.weights[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Undirected edges with `i < j`, in `(i, j)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    pub fn prior(&self) -> &LatentMatrix {
        &self.prior
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    /// Starting state for propagation: each vertex begins at its own prior
    /// (which is uniform for unseen vertices).
    pub fn initial_state(&self) -> LatentMatrix {
        self.prior.clone()
    }

    /// Same graph with every edge weight and confidence multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= factor);
        out.confidence.iter_mut().for_each(|c| *c *= factor);
        out
    }

    /// Connected component label per vertex (smallest member index).
    pub fn components(&self) -> Vec<usize> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = s;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for (u, _) in self.neighbors(v) {
                    if label[u] == usize::MAX {
                        label[u] = s;
                        stack.push(u);
                    }
                }
            }
        }
        label
    }

    /// Snapshot: `n TAB p`, then `E TAB i TAB j TAB w` and `V TAB i TAB c_i TAB prior_csv`.
    pub fn to_snapshot(&self) -> String {
        let mut out = format!("{}\t{}\n", self.n(), self.p);
        for (i, j, w) in self.edges() {
            out.push_str(&format!("E\t{i}\t{j}\t{w}\n"));
        }
        for i in 0..self.n() {
            out.push_str(&format!(
                "V\t{i}\t{}\t{}\n",
                self.confidence[i],
                tsv::join_f64(self.prior.row(i))
            ));
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let (n, p) = header
            .split_once('\t')
            .ok_or_else(|| Error::parse(1, "header must be `n TAB p`"))?;
        let n = tsv::parse_usize(1, n)?;
        let p = tsv::parse_usize(1, p)?;
        let mut edges = Vec::new();
        let mut prior = LatentMatrix::zeros(n, p);
        let mut confidence = vec![0.0; n];
        let mut seen = vec![false; n];
        for (k, line) in lines {
            let k = k + 1;
            let f: Vec<&str> = line.split('\t').collect();
            match f[..] {
                ["E", i, j, w] => edges.push((
                    tsv::parse_usize(k, i)? as u32,
                    tsv::parse_usize(k, j)? as u32,
                    tsv::parse_f64(k, w)?,
                )),
                ["V", i, c, csv] => {
                    let i = tsv::parse_usize(k, i)?;
                    if i >= n {
                        return Err(Error::parse(k, format!("vertex {i} out of range")));
                    }
                    let row = tsv::parse_csv_f64(k, csv)?;
                    if row.len() != p {
                        return Err(Error::parse(k, format!("prior has {} entries, want {p}", row.len())));
                    }
                    prior.row_mut(i).copy_from_slice(&row);
                    confidence[i] = tsv::parse_f64(k, c)?;
                    seen[i] = true;
                }
                [""] => {}
                _ => return Err(Error::parse(k, "expected an E or V line")),
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::parse(0, format!("vertex {i} has no V line")));
        }
        Self::from_parts(edges, prior, confidence)
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        tsv::write(path, &self.to_snapshot())
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        Self::from_snapshot(&tsv::read(path)?).map_err(|e| e.in_file(path))
    }
}

/// Co-occurrence re-scale g(c) = c^2.
pub fn rescale(c: u32) -> f64 {
    let c = c as f64;
    c * c
}

/// cosine(f_i, f_j) * g(c_ij); 0 for pairs that never co-occurred.
pub fn similarity(
    i: VertexId,
    j: VertexId,
    feats: &[SparseFeature],
    counts: &CooccurrenceCounts,
) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidConfig(format!("similarity of vertex {i} with itself")));
    }
    let fi = feats
        .get(i.index())
        .ok_or_else(|| Error::UnknownVertex(i.to_string()))?;
    let fj = feats
        .get(j.index())
        .ok_or_else(|| Error::UnknownVertex(j.to_string()))?;
    let c = counts.pair(i, j);
    if c == 0 {
        return Ok(0.0);
    }
    Ok(cosine(fi, fj)? * rescale(c))
}

/// Uniform average of distributions. Each component is summed in sorted order,
/// so the result does not depend on the order of `dists`.
pub fn average_distributions(dists: &[&LatentDistribution]) -> Result<LatentDistribution> {
    let first = dists
        .first()
        .ok_or_else(|| Error::InvalidDistribution("nothing to average".into()))?;
    let p = first.p();
    if let Some(d) = dists.iter().find(|d| d.p() != p) {
        return Err(Error::DimensionMismatch { left: p, right: d.p() });
    }
    let m = dists.len() as f64;
    let mut column = Vec::with_capacity(dists.len());
    let values = (0..p)
        .map(|k| {
            column.clear();
            column.extend(dists.iter().map(|d| d.values[k]));
            column.sort_unstable_by(f64::total_cmp);
            column.iter().sum::<f64>() / m
        })
        .collect();
    LatentDistribution::new(values)
}

/// Prior of vertex `i`: mean latent distribution of the codes it appeared with.
pub fn code_prior(
    i: VertexId,
    counts: &CooccurrenceCounts,
    codes: &BTreeMap<String, LatentDistribution>,
) -> Result<LatentDistribution> {
    let ids = counts.codes_of(i);
    if ids.is_empty() {
        return Err(Error::NoCooccurringCode(i.to_string()));
    }
    let dists = ids
        .iter()
        .map(|c| codes.get(*c).ok_or_else(|| Error::MissingCode(c.to_string())))
        .collect::<Result<Vec<_>>>()?;
    average_distributions(&dists)
}

/// Builds the graph over `feats.len()` vertices.
///
/// Edges are all co-occurring pairs with positive similarity; priors are the
/// code averages with confidence c_i. Vertices that were never counted get a
/// uniform prior and zero confidence.
pub fn build_graph(
    counts: &CooccurrenceCounts,
    feats: &[SparseFeature],
    codes: &BTreeMap<String, LatentDistribution>,
    p: usize,
) -> Result<AssociationGraph> {
    let n = feats.len();
    if let Some(d) = codes.values().find(|d| d.p() != p) {
        return Err(Error::DimensionMismatch { left: p, right: d.p() });
    }
    if let Some(v) = counts.occurrence_counts.keys().find(|v| v.index() >= n) {
        return Err(Error::MissingFeatures(v.to_string()));
    }
    let pairs: Vec<(VertexId, VertexId)> = counts.pair_counts.keys().copied().collect();
    let weighted = pairs
        .par_iter()
        .map(|&(i, j)| similarity(i, j, feats, counts).map(|w| (i.0, j.0, w)))
        .collect::<Result<Vec<_>>>()?;
    let edges: Vec<(u32, u32, f64)> = weighted.into_iter().filter(|e| e.2 > 0.0).collect();

    let by_vertex = counts.codes_by_vertex();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let v = VertexId(i as u32);
            match by_vertex.get(&v) {
                Some(ids) if counts.occurrence(v) > 0 => {
                    let dists = ids
                        .iter()
                        .map(|c| codes.get(*c).ok_or_else(|| Error::MissingCode(c.to_string())))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(average_distributions(&dists)?.values)
                }
                _ => Ok(LatentDistribution::uniform(p).values),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let confidence = (0..n)
        .map(|i| counts.occurrence(VertexId(i as u32)) as f64)
        .collect();
    AssociationGraph::from_parts(edges, LatentMatrix::from_rows(p, rows), confidence)
}

/// Code distribution file: `code_id TAB p TAB v1,...,vp`.
pub fn parse_codes(text: &str) -> Result<BTreeMap<String, LatentDistribution>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [id, p, csv] = f[..] else {
            return Err(Error::parse(n, "expected 3 tab-separated fields"));
        };
        let p = tsv::parse_usize(n, p)?;
        let values = tsv::parse_csv_f64(n, csv)?;
        if values.len() != p {
            return Err(Error::parse(n, format!("{} values, header says {p}", values.len())));
        }
        let d = LatentDistribution::new(values).map_err(|e| Error::parse(n, e.to_string()))?;
        out.insert(id.to_string(), d);
    }
    Ok(out)
}

pub fn codes_to_text<'a, I>(codes: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a LatentDistribution)>,
{
    codes
        .into_iter()
        .map(|(id, d)| format!("{id}\t{}\t{}\n", d.p(), tsv::join_f64(d.values())))
        .collect()
}

pub fn read_codes(path: &Path) -> Result<BTreeMap<String, LatentDistribution>> {
    parse_codes(&tsv::read(path)?).map_err(|e| e.in_file(path))
}
