//! Answers a challenge: resolve the eight images to vertices by perceptual
//! hash, then pick images whose propagated argmax matches the code's.

use std::collections::BTreeSet;

use crate::corpus::ImageBlob;
use crate::error::{Error, Result};
use crate::phash::{compute_hash, HashIndex};
use crate::simgraph::{argmax, LatentDistribution, LatentMatrix};
use crate::VertexId;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// Candidates need an activation strictly above this.
    pub threshold: f64,
    pub max_select: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            threshold: 0.65,
            max_select: 4,
        }
    }
}

impl SelectionConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.max_select == 0 {
            return Err(Error::InvalidConfig("max_select must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageVerdict {
    pub vertex: Option<VertexId>,
    /// Argmax of the vertex state (0 when unresolved).
    pub argmax: usize,
    pub max_activation: f64,
    /// State value at the code's component.
    pub activation: f64,
    /// Passed the matching rule: same argmax as the code and above threshold.
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChallengeAnswer {
    pub selected: BTreeSet<u8>,
    pub per_image: Vec<ImageVerdict>,
    pub code_component: usize,
    /// No image resolved, position 0 was picked blindly.
    pub arbitrary: bool,
}

impl ChallengeAnswer {
    /// `challenge_id TAB code_component TAB selected_csv TAB correct` (1, 0, or `-`).
    pub fn to_record(&self, challenge_id: &str, correct: Option<bool>) -> String {
        let sel: Vec<String> = self.selected.iter().map(u8::to_string).collect();
        let flag = match correct {
            Some(true) => "1",
            Some(false) => "0",
            None => "-",
        };
        format!("{challenge_id}\t{}\t{}\t{flag}", self.code_component, sel.join(","))
    }
}

/// Vertex of each image; `None` for images missing from the index or unhashable.
pub fn resolve_images(images: &[ImageBlob], idx: &HashIndex) -> Vec<Option<VertexId>> {
    images
        .iter()
        .map(|img| compute_hash(img).ok().and_then(|h| idx.lookup(&h)))
        .collect()
}

/// Applies the two selection rules to already-resolved images.
///
/// 1. Up to `max_select` images whose state argmax equals the code's argmax and
///    whose activation there exceeds the threshold, strongest first.
/// 2. Otherwise the single resolved image with the largest activation at the
///    code's component. Ties go to the lower position throughout.
pub fn select(
    code: &LatentDistribution,
    resolved: &[Option<VertexId>],
    state: &LatentMatrix,
    cfg: &SelectionConfig,
) -> ChallengeAnswer {
    let code_component = code.argmax();
    let per_image: Vec<ImageVerdict> = resolved
        .iter()
        .map(|v| match v {
            Some(v) if v.index() < state.n() => {
                let row = state.row(v.index());
                let k = argmax(row);
                let activation = row[code_component];
                ImageVerdict {
                    vertex: Some(*v),
                    argmax: k,
                    max_activation: row[k],
                    activation,
                    matched: k == code_component && activation > cfg.threshold,
                }
            }
            _ => ImageVerdict {
                vertex: None,
                argmax: 0,
                max_activation: 0.0,
                activation: 0.0,
                matched: false,
            },
        })
        .collect();

    let strongest_first = |a: &usize, b: &usize| {
        per_image[*b]
            .activation
            .total_cmp(&per_image[*a].activation)
            .then(a.cmp(b))
    };
    let mut candidates: Vec<usize> = (0..per_image.len()).filter(|&k| per_image[k].matched).collect();
    candidates.sort_by(strongest_first);
    candidates.truncate(cfg.max_select);

    let mut arbitrary = false;
    let selected: BTreeSet<u8> = if !candidates.is_empty() {
        candidates.into_iter().map(|k| k as u8).collect()
    } else {
        let mut present: Vec<usize> = (0..per_image.len())
            .filter(|&k| per_image[k].vertex.is_some())
            .collect();
        present.sort_by(strongest_first);
        match present.first() {
            Some(&k) => BTreeSet::from([k as u8]),
            None => {
                arbitrary = true;
                BTreeSet::from([0])
            }
        }
    };
    ChallengeAnswer {
        selected,
        per_image,
        code_component,
        arbitrary,
    }
}

pub fn solve_challenge(
    code: &LatentDistribution,
    images: &[ImageBlob],
    state: &LatentMatrix,
    idx: &HashIndex,
    cfg: &SelectionConfig,
) -> ChallengeAnswer {
    select(code, &resolve_images(images, idx), state, cfg)
}

/// Exact-set grading.
pub fn grade(answer: &ChallengeAnswer, truth: &BTreeSet<u8>) -> bool {
    answer.selected == *truth
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: usize = 6;

    /// One state row per image; the code points at component 2.
    fn setup(rows: Vec<Vec<f64>>) -> (LatentDistribution, Vec<Option<VertexId>>, LatentMatrix) {
        let n = rows.len();
        let code = LatentDistribution::new(vec![0.1, 0.1, 0.5, 0.1, 0.1, 0.1]).unwrap();
        let resolved = (0..n).map(|k| Some(VertexId(k as u32))).collect();
        (code, resolved, LatentMatrix::from_rows(P, rows))
    }

    /// Row with `a` at component `k`, rest spread evenly.
    fn row(k: usize, a: f64) -> Vec<f64> {
        let mut r = vec![(1.0 - a) / (P - 1) as f64; P];
        r[k] = a;
        r
    }

    #[test]
    fn caps_at_four_strongest() {
        let acts = [0.9, 0.8, 0.7, 0.6, 0.5, 0.45, 0.44, 0.43];
        let (code, res, state) = setup(acts.iter().map(|&a| row(2, a)).collect());
        let ans = select(&code, &res, &state, &SelectionConfig::with_threshold(0.4));
        assert_eq!(ans.selected, BTreeSet::from([0, 1, 2, 3]));
        assert_eq!(ans.code_component, 2);
        assert!(ans.per_image.iter().all(|v| v.matched));
    }

    #[test]
    fn fallback_picks_largest_code_activation() {
        // nobody has argmax 2; image 5 carries the most mass on it
        let mut rows: Vec<Vec<f64>> = (0..8).map(|_| row(0, 0.9)).collect();
        rows[5] = vec![0.84, 0.0, 0.08, 0.08, 0.0, 0.0];
        let (code, res, state) = setup(rows);
        let ans = select(&code, &res, &state, &SelectionConfig::with_threshold(0.65));
        assert_eq!(ans.selected, BTreeSet::from([5]));
        assert!(!ans.arbitrary);
    }

    #[test]
    fn below_threshold_matches_are_excluded() {
        // code argmax "box" (2), T = 0.1: images 1 and 3 clear it, 6 and 7 share
        // the argmax but sit below
        let mut rows: Vec<Vec<f64>> = (0..8).map(|_| row(4, 0.5)).collect();
        rows[1] = vec![0.05, 0.05, 0.4, 0.2, 0.15, 0.15];
        rows[3] = vec![0.01, 0.01, 0.3, 0.28, 0.2, 0.2];
        rows[6] = vec![0.0, 0.0, 0.09, 0.0, 0.0, 0.0];
        rows[7] = vec![0.0, 0.0, 0.08, 0.0, 0.0, 0.0];
        let (code, res, state) = setup(rows);
        let ans = select(&code, &res, &state, &SelectionConfig::with_threshold(0.1));
        assert_eq!(ans.selected, BTreeSet::from([1, 3]));
        assert_eq!(ans.per_image[6].argmax, 2);
        assert!(!ans.per_image[6].matched);
    }

    #[test]
    fn threshold_is_strict() {
        let (code, res, state) = setup(vec![row(2, 0.5), row(2, 0.4)]);
        let ans = select(&code, &res, &state, &SelectionConfig::with_threshold(0.5));
        // only fallback can pick 0 here
        assert!(!ans.per_image[0].matched);
        assert_eq!(ans.selected, BTreeSet::from([0]));
    }

    #[test]
    fn missing_images_skipped_or_arbitrary() {
        let (code, mut res, state) = setup((0..8).map(|k| row(2, 0.3 + k as f64 * 0.01)).collect());
        res[7] = None;
        let ans = select(&code, &res, &state, &SelectionConfig::with_threshold(0.9));
        assert_eq!(ans.selected, BTreeSet::from([6]));
        assert_eq!(ans.per_image[7].activation, 0.0);
        let none = vec![None; 8];
        let ans = select(&code, &none, &state, &SelectionConfig::default());
        assert!(ans.arbitrary);
        assert_eq!(ans.selected, BTreeSet::from([0]));
    }

    #[test]
    fn ties_go_to_lower_position() {
        let (code, res, state) = setup(vec![row(2, 0.7); 8]);
        let ans = select(&code, &res, &state, &SelectionConfig::with_threshold(0.1));
        assert_eq!(ans.selected, BTreeSet::from([0, 1, 2, 3]));
        let ans = select(&code, &res, &state, &SelectionConfig::with_threshold(0.9));
        assert_eq!(ans.selected, BTreeSet::from([0]));
    }

    #[test]
    fn grading_is_exact() {
        let mk = |s: &[u8]| ChallengeAnswer {
            selected: s.iter().copied().collect(),
            per_image: vec![],
            code_component: 0,
            arbitrary: false,
        };
        let truth = BTreeSet::from([1, 3]);
        assert!(grade(&mk(&[1, 3]), &truth));
        assert!(!grade(&mk(&[1]), &truth));
        assert!(!grade(&mk(&[1, 3, 4]), &truth));
        assert_eq!(mk(&[1, 3]).to_record("c9", Some(true)), "c9\t0\t1,3\t1");
    }

    #[test]
    fn config_bounds() {
        assert!(SelectionConfig::with_threshold(1.01).validate().is_err());
        assert!(SelectionConfig { max_select: 0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn selection_shrinks_with_threshold(
            acts in proptest::collection::vec((0usize..P, 0.2f64..1.0), 8),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (code, res, state) = setup(acts.iter().map(|&(k, a)| row(k, a)).collect());
            let a = select(&code, &res, &state, &SelectionConfig::with_threshold(lo));
            let b = select(&code, &res, &state, &SelectionConfig::with_threshold(hi));
            let ca = a.per_image.iter().filter(|v| v.matched).count();
            let cb = b.per_image.iter().filter(|v| v.matched).count();
            prop_assert!(cb <= ca);
            prop_assert!(b.selected.len() <= a.selected.len());
            prop_assert!((1..=4).contains(&a.selected.len()));
            let again = select(&code, &res, &state, &SelectionConfig::with_threshold(lo));
            prop_assert_eq!(a, again);
        }
    }
}
