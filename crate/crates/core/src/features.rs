//! Sparse top-10% feature vectors and their cosine similarity.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tsv;

pub const DEFAULT_DIMS: usize = 4096;

/// Fraction of dimensions retained by [`sparsify`].
pub const KEEP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeature {
    dims: usize,
    entries: Vec<(u32, f64)>,
    norm: f64,
}

/// Number of entries kept out of `dims`: ceil(0.10 * dims).
pub fn keep_count(dims: usize) -> usize {
    // dims * 10% without going through floating point
    dims.div_ceil(10)
}

impl SparseFeature {
    /// Validates sorted, strictly increasing, positive entries below `dims`.
    pub fn from_entries(dims: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidConfig("feature dimensionality must be >= 1".into()));
        }
        if entries.len() > keep_count(dims) {
            return Err(Error::InvalidConfig(format!(
                "{} entries exceed the {} allowed for {dims} dims",
                entries.len(),
                keep_count(dims)
            )));
        }
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidConfig("indices must be strictly increasing".into()));
            }
        }
        for &(i, v) in &entries {
            if i as usize >= dims || !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("bad entry {i}:{v}")));
            }
        }
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        Ok(Self {
            dims,
            entries,
            norm,
        })
    }

    pub fn empty(dims: usize) -> Self {
        Self {
            dims,
            entries: Vec::new(),
            norm: 0.0,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn densify(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_entries(
            self.dims,
            self.entries.iter().map(|&(i, v)| (i, v * factor)).collect(),
        )
    }

    fn to_field(&self) -> String {
        let parts: Vec<String> = self.entries.iter().map(|(i, v)| format!("{i}:{v}")).collect();
        parts.join(",")
    }
}

/// Keeps the ceil(10%) largest-magnitude entries (lower index wins ties), then
/// drops the non-positive survivors. Retained values are not rescaled.
pub fn sparsify(dense: &[f64]) -> Result<SparseFeature> {
    let dims = dense.len();
    if dims == 0 {
        return Err(Error::InvalidConfig("feature dimensionality must be >= 1".into()));
    }
    let keep = keep_count(dims);
    let mut order: Vec<u32> = (0..dims as u32).collect();
    let by_magnitude = |a: &u32, b: &u32| {
        dense[*b as usize]
            .abs()
            .total_cmp(&dense[*a as usize].abs())
            .then(a.cmp(b))
    };
    if keep < dims {
        order.select_nth_unstable_by(keep - 1, by_magnitude);
        order.truncate(keep);
    }
    order.sort_unstable();
    let entries = order
        .into_iter()
        .map(|i| (i, dense[i as usize]))
        .filter(|&(_, v)| v > 0.0)
        .collect();
    SparseFeature::from_entries(dims, entries)
}

/// Cosine similarity; 0 when either vector is empty.
pub fn cosine(a: &SparseFeature, b: &SparseFeature) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::DimensionMismatch {
            left: a.dims,
            right: b.dims,
        });
    }
    if a.norm == 0.0 || b.norm == 0.0 {
        return Ok(0.0);
    }
    let (mut i, mut j) = (0, 0);
    let mut dot = 0.0;
    while i < a.entries.len() && j < b.entries.len() {
        let (ia, va) = a.entries[i];
        let (ib, vb) = b.entries[j];
        match ia.cmp(&ib) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += va * vb;
                i += 1;
                j += 1;
            }
        }
    }
    Ok((dot / (a.norm * b.norm)).clamp(0.0, 1.0))
}

/// Lines `vertex_id TAB D TAB idx:val,...`.
pub fn write_features<'a, I>(path: &Path, features: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a SparseFeature)>,
{
    let mut out = String::new();
    for (id, f) in features {
        out.push_str(&format!("{id}\t{}\t{}\n", f.dims, f.to_field()));
    }
    tsv::write(path, &out)
}

pub fn parse_features(text: &str) -> Result<Vec<(String, SparseFeature)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [id, dims, body] = f[..] else {
            return Err(Error::parse(n, "expected 3 tab-separated fields"));
        };
        let dims = tsv::parse_usize(n, dims)?;
        let entries = body
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|pair| {
                let (i, v) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::parse(n, format!("bad entry `{pair}`")))?;
                let i = i
                    .parse::<u32>()
                    .map_err(|_| Error::parse(n, format!("bad index `{i}`")))?;
                Ok((i, tsv::parse_f64(n, v)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let feat = SparseFeature::from_entries(dims, entries)
            .map_err(|e| Error::parse(n, e.to_string()))?;
        out.push((id.to_string(), feat));
    }
    Ok(out)
}

pub fn read_features(path: &Path) -> Result<Vec<(String, SparseFeature)>> {
    parse_features(&tsv::read(path)?).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feat(dims: usize, e: &[(u32, f64)]) -> SparseFeature {
        SparseFeature::from_entries(dims, e.to_vec()).unwrap()
    }

    #[test]
    fn keeps_top_tenth() {
        let f = sparsify(&[9., 8., 7., 6., 5., 4., 3., 2., 1., 0.]).unwrap();
        assert_eq!(f.entries(), &[(0, 9.0)]);
    }

    #[test]
    fn all_zero_is_empty() {
        let f = sparsify(&[0.0; 50]).unwrap();
        assert!(f.entries().is_empty());
        assert_eq!(f.norm(), 0.0);
    }

    #[test]
    fn negative_survivors_dropped() {
        // -9 has the largest magnitude but is dropped after selection
        let f = sparsify(&[1.0, -9.0, 2.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0]).unwrap();
        assert_eq!(f.entries(), &[(11, 3.0)]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let f = sparsify(&[1.0; 20]).unwrap();
        assert_eq!(f.entries(), &[(0, 1.0), (1, 1.0)]);
    }

    /// Full-sort oracle for the retained index set.
    fn top_positive_by_sort(dense: &[f64]) -> Vec<u32> {
        let mut idx: Vec<usize> = (0..dense.len()).collect();
        idx.sort_by(|&a, &b| {
            dense[b]
                .abs()
                .partial_cmp(&dense[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        let keep = (dense.len() as f64 * 0.1).ceil() as usize;
        let mut kept: Vec<u32> = idx[..keep]
            .iter()
            .filter(|&&i| dense[i] > 0.0)
            .map(|&i| i as u32)
            .collect();
        kept.sort();
        kept
    }

    #[test]
    fn seeded_4096_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dense: Vec<f64> = (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = sparsify(&dense).unwrap();
        let got: Vec<u32> = f.entries().iter().map(|e| e.0).collect();
        let expected = top_positive_by_sort(&dense);
        assert!(!expected.is_empty() && expected.len() <= 410);
        assert_eq!(got, expected);
        assert_eq!(keep_count(4096), 410);
    }

    #[test]
    fn cosine_fixtures() {
        let a = feat(80, &[(0, 3.0), (2, 4.0)]);
        let b = feat(80, &[(2, 4.0), (5, 3.0)]);
        assert!((cosine(&a, &b).unwrap() - 0.64).abs() < 1e-12);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let c = feat(80, &[(7, 1.0)]);
        assert_eq!(cosine(&a, &c).unwrap(), 0.0);
        assert_eq!(cosine(&a, &SparseFeature::empty(80)).unwrap(), 0.0);
        assert!(matches!(
            cosine(&a, &SparseFeature::empty(90)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.tsv");
        let a = feat(40, &[(1, 0.125), (30, 2.5e-7)]);
        let e = SparseFeature::empty(40);
        write_features(&path, [("x", &a), ("y", &e)]).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back, vec![("x".to_string(), a), ("y".to_string(), e)]);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_free(
            dense_a in proptest::collection::vec(-1.0f64..1.0, 60),
            dense_b in proptest::collection::vec(-1.0f64..1.0, 60),
            scale in 0.01f64..100.0,
        ) {
            let a = sparsify(&dense_a).unwrap();
            let b = sparsify(&dense_b).unwrap();
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            if a.norm() > 0.0 {
                let c = cosine(&a, &a.scaled(scale).unwrap()).unwrap();
                prop_assert!((c - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn sparsify_idempotent(dense in proptest::collection::vec(-5.0f64..5.0, 1..200)) {
            let once = sparsify(&dense).unwrap();
            let twice = sparsify(&once.densify()).unwrap();
            prop_assert_eq!(&once, &twice);
            let direct: f64 = once.entries().iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
            prop_assert!((once.norm() - direct).abs() <= 1e-9 * direct.max(1e-300));
        }
    }
}
