//! Seeded synthetic worlds with known ground truth, plus random graph fixtures.
//!
//! All randomness in a world comes from one ChaCha8 stream seeded with
//! `WorldConfig::seed`, drawn in this order:
//!
//! 1. per category: centroid support and values, then the bitmap palette
//!    (redrawn until its luma contrast is large enough);
//! 2. per image (category-major): dense feature noise, cell mask and jitter,
//!    then pixel noise for each variant;
//! 3. training challenges, then held-out test challenges. Per challenge: code
//!    category, relevant count, relevant images, distractors, slot shuffle,
//!    variant per slot, code noise.
//!
//! Category `c` corresponds to latent component `c`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_manifest, ChallengeRecord, ImageBlob, IMAGES_PER_CHALLENGE};
use crate::error::{Error, Result};
use crate::features::{sparsify, write_features, SparseFeature};
use crate::simgraph::{codes_to_text, AssociationGraph, LatentDistribution, LatentMatrix};
use crate::tsv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    /// Latent dimension.
    pub p: usize,
    pub n_categories: usize,
    pub images_per_category: usize,
    pub n_challenges: usize,
    /// Held-out challenges used for solving and sweeps; not part of the corpus.
    pub n_test_challenges: usize,
    /// Inclusive bounds on relevant images per challenge.
    pub relevant_range: (usize, usize),
    /// Std-dev of Gaussian noise added to every feature dimension.
    pub feature_noise: f64,
    /// Probability mass moved off the true component of each code.
    pub code_noise: f64,
    /// Dirichlet concentration of the leaked mass; small values make it spiky.
    pub code_noise_concentration: f64,
    /// Max absolute per-pixel perturbation of each stored image variant.
    pub pixel_noise: u8,
    /// Feature dimensionality D.
    pub dims: usize,
    /// Fraction of D on which a category centroid is nonzero (at most 0.10).
    pub centroid_support: f64,
    /// Noisy copies stored per image; challenges show one at random.
    pub variants_per_image: usize,
    /// Side of the square bitmaps, in pixels.
    pub image_size: u32,
}

impl Default for WorldConfig {
    /// The reference world used by the evaluation suite.
    fn default() -> Self {
        Self {
            seed: 42,
            p: 230,
            n_categories: 20,
            images_per_category: 50,
            n_challenges: 5000,
            n_test_challenges: 500,
            relevant_range: (1, 4),
            feature_noise: 0.35,
            code_noise: 0.5,
            code_noise_concentration: 0.05,
            pixel_noise: 8,
            dims: 4096,
            centroid_support: 0.05,
            variants_per_image: 2,
            image_size: 32,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let (lo, hi) = self.relevant_range;
        if !(1 <= lo && lo <= hi && hi <= IMAGES_PER_CHALLENGE) {
            return bad(format!("relevant_range {lo}..={hi} must satisfy 1 <= min <= max <= 8"));
        }
        if !(0.0..1.0).contains(&self.code_noise) {
            return bad(format!("code_noise {} must be in [0, 1)", self.code_noise));
        }
        if self.n_categories == 0 || self.n_categories > self.p {
            return bad(format!("n_categories {} must be in 1..=p ({})", self.n_categories, self.p));
        }
        if self.images_per_category < hi {
            return bad(format!(
                "{} images per category cannot supply {hi} relevant images",
                self.images_per_category
            ));
        }
        if IMAGES_PER_CHALLENGE > hi && self.n_categories < 2 {
            return bad("distractors need at least two categories".into());
        }
        let foreign = (self.n_categories - 1) * self.images_per_category;
        if IMAGES_PER_CHALLENGE - lo > foreign {
            return bad(format!("only {foreign} foreign images for {} distractors", IMAGES_PER_CHALLENGE - lo));
        }
        if !(self.feature_noise >= 0.0) || !(self.code_noise_concentration > 0.0) {
            return bad("noise parameters must be non-negative (concentration > 0)".into());
        }
        if self.dims == 0 || !(self.centroid_support > 0.0 && self.centroid_support <= 0.10) {
            return bad("dims must be >= 1 and centroid_support in (0, 0.10]".into());
        }
        if self.variants_per_image == 0 || self.image_size < 8 {
            return bad("need >= 1 variant per image and image_size >= 8".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub id: String,
    pub category: usize,
    pub feature: SparseFeature,
    pub variants: Vec<ImageBlob>,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    /// Sparsified category centroids.
    pub centroids: Vec<SparseFeature>,
    pub images: Vec<SynthImage>,
    pub challenges: Vec<ChallengeRecord>,
    pub test_challenges: Vec<ChallengeRecord>,
    pub codes: BTreeMap<String, LatentDistribution>,
    /// Category of every base image id and every variant id.
    pub category_of: BTreeMap<String, usize>,
}

fn variant_id(base: &str, k: usize) -> String {
    format!("{base}v{k}")
}

/// Per-category bitmap palette: dark/bright level per channel and a polarity
/// per channel. All channels share one cell mask per image so the grayscale
/// cells stay bimodal.
#[derive(Debug, Clone, Copy)]
struct Palette {
    dark: [u8; 3],
    bright: [u8; 3],
    invert: [bool; 3],
}

/// Smallest luma gap between "on" and "off" cells a palette may have.
const MIN_LUMA_CONTRAST: f64 = 60.0;

impl Palette {
    /// Redraws until the luma of "on" and "off" cells is far apart, otherwise
    /// mixed channel polarities can leave the grayscale cells near their mean.
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        loop {
            let mut dark = [0u8; 3];
            let mut bright = [0u8; 3];
            let mut invert = [false; 3];
            for c in 0..3 {
                dark[c] = rng.random_range(10..=80);
                bright[c] = rng.random_range(175..=245);
                invert[c] = rng.random_bool(0.3);
            }
            let p = Self {
                dark,
                bright,
                invert,
            };
            if (p.luma(true) - p.luma(false)).abs() >= MIN_LUMA_CONTRAST {
                return p;
            }
        }
    }

    fn luma(&self, on: bool) -> f64 {
        const W: [f64; 3] = [0.299, 0.587, 0.114];
        (0..3)
            .map(|c| {
                let level = if on != self.invert[c] { self.bright[c] } else { self.dark[c] };
                W[c] * level as f64
            })
            .sum()
    }
}

/// Cell-patterned base bitmap (8x8 cells) with per-cell jitter.
fn base_bitmap(rng: &mut ChaCha8Rng, palette: &Palette, size: u32) -> Vec<u8> {
    let mask: u64 = rng.random();
    let mut cells = [[0u8; 3]; 64];
    for (k, cell) in cells.iter_mut().enumerate() {
        let on = mask >> k & 1 == 1;
        for c in 0..3 {
            let bright = on != palette.invert[c];
            let level = if bright { palette.bright[c] } else { palette.dark[c] } as i32;
            cell[c] = (level + rng.random_range(-10..=10)).clamp(0, 255) as u8;
        }
    }
    let s = size as usize;
    let mut px = Vec::with_capacity(s * s * 3);
    for y in 0..s {
        for x in 0..s {
            px.extend_from_slice(&cells[(y * 8 / s) * 8 + x * 8 / s]);
        }
    }
    px
}

/// Adds uniform integer noise in `[-amplitude, amplitude]` to every byte.
pub fn perturb_pixels(rng: &mut impl Rng, pixels: &[u8], amplitude: u8) -> Vec<u8> {
    let a = amplitude as i32;
    pixels
        .iter()
        .map(|&v| (v as i32 + rng.random_range(-a..=a)).clamp(0, 255) as u8)
        .collect()
}

/// Noise-free cell-patterned bitmaps, for dedup fixtures outside a world.
pub fn random_bitmaps(seed: u64, count: usize, size: u32) -> Vec<ImageBlob> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let palettes: Vec<Palette> = (0..16).map(|_| Palette::draw(&mut rng)).collect();
    (0..count)
        .map(|k| {
            let pal = palettes[k % palettes.len()];
            ImageBlob::new(format!("b{k:06}"), size, size, base_bitmap(&mut rng, &pal, size)).unwrap()
        })
        .collect()
}

fn dirichlet(rng: &mut ChaCha8Rng, p: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let draws: Vec<f64> = (0..p).map(|_| gamma.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    if s > 0.0 {
        draws.into_iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / p as f64; p]
    }
}

fn code_distribution(rng: &mut ChaCha8Rng, cfg: &WorldConfig, category: usize) -> LatentDistribution {
    let mut values = vec![0.0; cfg.p];
    values[category] = 1.0 - cfg.code_noise;
    if cfg.code_noise > 0.0 {
        for (v, n) in values.iter_mut().zip(dirichlet(rng, cfg.p, cfg.code_noise_concentration)) {
            *v += cfg.code_noise * n;
        }
    }
    let s: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= s);
    LatentDistribution::new(values).expect("convex combination of simplex points")
}

pub fn generate_world(cfg: &WorldConfig) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let support = ((cfg.dims as f64 * cfg.centroid_support).round() as usize).max(1);

    let mut dense_centroids = Vec::with_capacity(cfg.n_categories);
    let mut palettes = Vec::with_capacity(cfg.n_categories);
    for _ in 0..cfg.n_categories {
        let mut dense = vec![0.0; cfg.dims];
        let mut idx = index::sample(&mut rng, cfg.dims, support).into_vec();
        idx.sort_unstable();
        for i in idx {
            dense[i] = rng.random_range(0.5..1.5);
        }
        dense_centroids.push(dense);
        palettes.push(Palette::draw(&mut rng));
    }
    let centroids = dense_centroids
        .iter()
        .map(|d| sparsify(d))
        .collect::<Result<Vec<_>>>()?;

    let mut images = Vec::with_capacity(cfg.n_categories * cfg.images_per_category);
    let mut category_of = BTreeMap::new();
    for cat in 0..cfg.n_categories {
        for _ in 0..cfg.images_per_category {
            let id = format!("im{:05}", images.len());
            let dense: Vec<f64> = if cfg.feature_noise > 0.0 {
                dense_centroids[cat]
                    .iter()
                    .map(|&c| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        c + cfg.feature_noise * z
                    })
                    .collect()
            } else {
                dense_centroids[cat].clone()
            };
            let feature = sparsify(&dense)?;
            let base = base_bitmap(&mut rng, &palettes[cat], cfg.image_size);
            let variants = (0..cfg.variants_per_image)
                .map(|k| {
                    let px = perturb_pixels(&mut rng, &base, cfg.pixel_noise);
                    ImageBlob::new(variant_id(&id, k), cfg.image_size, cfg.image_size, px)
                })
                .collect::<Result<Vec<_>>>()?;
            category_of.insert(id.clone(), cat);
            for v in &variants {
                category_of.insert(v.id().to_string(), cat);
            }
            images.push(SynthImage {
                id,
                category: cat,
                feature,
                variants,
            });
        }
    }

    let mut codes = BTreeMap::new();
    let mut draw_challenges = |prefix: &str, code_prefix: &str, count: usize| {
        let mut out = Vec::with_capacity(count);
        for t in 0..count {
            let (record, code) = draw_challenge(&mut rng, cfg, &images, t, prefix, code_prefix);
            codes.insert(record.code_id.clone(), code);
            out.push(record);
        }
        out
    };
    let challenges = draw_challenges("ch", "k", cfg.n_challenges);
    let test_challenges = draw_challenges("tc", "tk", cfg.n_test_challenges);

    Ok(SyntheticWorld {
        config: cfg.clone(),
        centroids,
        images,
        challenges,
        test_challenges,
        codes,
        category_of,
    })
}

fn draw_challenge(
    rng: &mut ChaCha8Rng,
    cfg: &WorldConfig,
    images: &[SynthImage],
    t: usize,
    prefix: &str,
    code_prefix: &str,
) -> (ChallengeRecord, LatentDistribution) {
    let per = cfg.images_per_category;
    let cat = rng.random_range(0..cfg.n_categories);
    let k = rng.random_range(cfg.relevant_range.0..=cfg.relevant_range.1);
    let mut chosen: Vec<usize> = index::sample(rng, per, k)
        .into_iter()
        .map(|i| cat * per + i)
        .collect();
    let mut taken: BTreeSet<usize> = chosen.iter().copied().collect();
    while chosen.len() < IMAGES_PER_CHALLENGE {
        let mut other = rng.random_range(0..cfg.n_categories - 1);
        if other >= cat {
            other += 1;
        }
        loop {
            let img = other * per + rng.random_range(0..per);
            if taken.insert(img) {
                chosen.push(img);
                break;
            }
        }
    }
    let mut slots: Vec<(usize, bool)> = chosen.iter().enumerate().map(|(n, &i)| (i, n < k)).collect();
    slots.shuffle(rng);
    let image_ids: [String; IMAGES_PER_CHALLENGE] = std::array::from_fn(|s| {
        let img = &images[slots[s].0];
        img.variants[rng.random_range(0..img.variants.len())].id().to_string()
    });
    let truth: BTreeSet<u8> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1)
        .map(|(pos, _)| pos as u8)
        .collect();
    let code = code_distribution(rng, cfg, cat);
    let record = ChallengeRecord {
        challenge_id: format!("{prefix}{t:06}"),
        code_id: format!("{code_prefix}{t:06}"),
        image_ids,
        ground_truth: Some(truth),
    };
    (record, code)
}

impl SyntheticWorld {
    pub fn true_category(&self, image_id: &str) -> Option<usize> {
        self.category_of.get(image_id).copied()
    }

    /// Code category of a challenge, read off its relevant images.
    pub fn challenge_category(&self, r: &ChallengeRecord) -> Option<usize> {
        let first = *r.ground_truth.as_ref()?.iter().next()?;
        self.true_category(&r.image_ids[first as usize])
    }

    /// Writes the world's file tree into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let images_dir = dir.join("images");
        std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
        write_manifest(&dir.join("manifest.tsv"), &self.challenges)?;
        write_manifest(&dir.join("test_manifest.tsv"), &self.test_challenges)?;
        let feats: Vec<(&str, &SparseFeature)> = self
            .images
            .iter()
            .flat_map(|img| img.variants.iter().map(move |v| (v.id(), &img.feature)))
            .collect();
        write_features(&dir.join("features.tsv"), feats)?;
        tsv::write(
            &dir.join("codes.tsv"),
            &codes_to_text(self.codes.iter().map(|(k, v)| (k.as_str(), v))),
        )?;
        let mut truth = String::new();
        for r in self.challenges.iter().chain(&self.test_challenges) {
            let pos: Vec<String> = r
                .ground_truth
                .iter()
                .flatten()
                .map(u8::to_string)
                .collect();
            truth.push_str(&format!("{}\t{}\n", r.challenge_id, pos.join(",")));
        }
        tsv::write(&dir.join("truth.tsv"), &truth)?;
        let cats: String = self
            .category_of
            .iter()
            .map(|(id, c)| format!("{id}\t{c}\n"))
            .collect();
        tsv::write(&dir.join("categories.tsv"), &cats)?;
        let cfg = serde_json::to_string_pretty(&self.config).expect("config serializes");
        tsv::write(&dir.join("world.json"), &(cfg + "\n"))?;
        for img in &self.images {
            for v in &img.variants {
                v.save_png(&images_dir.join(format!("{}.png", v.id())))?;
            }
        }
        Ok(())
    }
}

/// Reads `categories.tsv` (`image_id TAB category`).
pub fn read_categories(path: &Path) -> Result<BTreeMap<String, usize>> {
    let text = tsv::read(path)?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, c) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(n + 1, "expected image TAB category").in_file(path))?;
        out.insert(id.to_string(), tsv::parse_usize(n + 1, c).map_err(|e| e.in_file(path))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldStats {
    pub images_per_category: Vec<usize>,
    /// Sum of c_i over base images (one per distinct image per challenge).
    pub total_occurrences: u64,
    /// Mean c_i over base images that appeared at least once.
    pub mean_occurrence: f64,
    /// c_ij value -> number of base-image pairs with that count.
    pub pair_histogram: BTreeMap<u32, usize>,
}

/// Stats over the training challenges, by true (base) image identity.
pub fn world_stats(w: &SyntheticWorld) -> WorldStats {
    let mut per_cat = vec![0usize; w.config.n_categories];
    for img in &w.images {
        per_cat[img.category] += 1;
    }
    let base_of: BTreeMap<&str, &str> = w
        .images
        .iter()
        .flat_map(|img| img.variants.iter().map(move |v| (v.id(), img.id.as_str())))
        .collect();
    let mut occ: BTreeMap<&str, u32> = BTreeMap::new();
    let mut pairs: BTreeMap<(&str, &str), u32> = BTreeMap::new();
    for r in &w.challenges {
        let distinct: BTreeSet<&str> = r
            .image_ids
            .iter()
            .map(|id| base_of.get(id.as_str()).copied().unwrap_or(id.as_str()))
            .collect();
        let v: Vec<&str> = distinct.into_iter().collect();
        for (a, x) in v.iter().enumerate() {
            *occ.entry(x).or_insert(0) += 1;
            for y in &v[a + 1..] {
                *pairs.entry((x, y)).or_insert(0) += 1;
            }
        }
    }
    let total: u64 = occ.values().map(|&c| c as u64).sum();
    let mut hist = BTreeMap::new();
    for &c in pairs.values() {
        *hist.entry(c).or_insert(0) += 1;
    }
    WorldStats {
        images_per_category: per_cat,
        total_occurrences: total,
        mean_occurrence: if occ.is_empty() { 0.0 } else { total as f64 / occ.len() as f64 },
        pair_histogram: hist,
    }
}

/// Parameters for seeded random propagation fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomGraphConfig {
    pub n: usize,
    pub p: usize,
    pub edge_prob: f64,
    pub weight: (f64, f64),
    /// Fraction of vertices given a positive confidence.
    pub clamp_fraction: f64,
    pub confidence: (f64, f64),
}

impl Default for RandomGraphConfig {
    fn default() -> Self {
        Self {
            n: 30,
            p: 4,
            edge_prob: 0.12,
            weight: (0.1, 2.0),
            clamp_fraction: 0.3,
            confidence: (0.5, 5.0),
        }
    }
}

/// Random graph whose every connected component holds at least one clamped
/// vertex. Priors are uniform draws from the simplex.
pub fn random_graph(cfg: &RandomGraphConfig, seed: u64) -> AssociationGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..cfg.n {
        for j in i + 1..cfg.n {
            if rng.random_bool(cfg.edge_prob) {
                edges.push((i as u32, j as u32, rng.random_range(cfg.weight.0..=cfg.weight.1)));
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..cfg.n).map(|_| dirichlet(&mut rng, cfg.p, 1.0)).collect();
    let mut confidence: Vec<f64> = (0..cfg.n)
        .map(|_| {
            if rng.random_bool(cfg.clamp_fraction) {
                rng.random_range(cfg.confidence.0..=cfg.confidence.1)
            } else {
                0.0
            }
        })
        .collect();
    let unclamped = AssociationGraph::from_parts(
        edges.clone(),
        LatentMatrix::from_rows(cfg.p, rows.clone()),
        confidence.clone(),
    )
    .expect("valid random graph");
    let comp = unclamped.components();
    let mut has_clamp = vec![false; cfg.n];
    for i in 0..cfg.n {
        has_clamp[comp[i]] |= confidence[i] > 0.0;
    }
    for i in 0..cfg.n {
        if comp[i] == i && !has_clamp[i] {
            confidence[i] = rng.random_range(cfg.confidence.0..=cfg.confidence.1);
        }
    }
    AssociationGraph::from_parts(edges, LatentMatrix::from_rows(cfg.p, rows), confidence)
        .expect("valid random graph")
}
