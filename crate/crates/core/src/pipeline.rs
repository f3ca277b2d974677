//! Directory-level pipeline stages.
//!
//! A corpus directory holds what `synth` writes (or any corpus in the same
//! formats): `manifest.tsv`, `test_manifest.tsv`, `features.tsv`, `codes.tsv`,
//! `categories.tsv`, `truth.tsv` and `images/<id>.png`. A work directory holds
//! everything derived from it. Every stage records its parameters and
//! summary numbers in `work/metadata.tsv`; wall-clock times go to
//! `work/timing.tsv` so that the rest of the tree stays reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::corpus::{ingest_corpus, read_manifest, CooccurrenceCounts, ImageBlob, VertexCatalog};
use crate::error::{Error, Result};
use crate::eval::{run_threshold_sweep, run_topk_eval, EvalChallenge, SweepResult, TopKReport};
use crate::features::{read_features, SparseFeature};
use crate::labelprop::{PropagationConfig, PropagationResult, PropagatorRegistry};
use crate::phash::{compute_hash, HashIndex};
use crate::simgraph::{build_graph, read_codes, AssociationGraph, LatentMatrix};
use crate::solver::{grade, select, SelectionConfig};
use crate::synth::{generate_world, read_categories, SyntheticWorld, WorldConfig};
use crate::tsv;
use crate::VertexId;

pub const MANIFEST: &str = "manifest.tsv";
pub const TEST_MANIFEST: &str = "test_manifest.tsv";
pub const FEATURES: &str = "features.tsv";
pub const CODES: &str = "codes.tsv";
pub const CATEGORIES: &str = "categories.tsv";
pub const TRUTH: &str = "truth.tsv";
pub const IMAGES: &str = "images";

pub const VERTICES: &str = "vertices.tsv";
pub const IMAGE_VERTICES: &str = "image_vertices.tsv";
pub const HASHES: &str = "hashes.tsv";
pub const COUNTS: &str = "counts.tsv";
pub const CODE_IMAGES: &str = "code_images.tsv";
pub const INGEST_ERRORS: &str = "ingest_errors.tsv";
pub const GRAPH: &str = "graph.tsv";
pub const RESULT: &str = "result.tsv";
pub const ANSWERS: &str = "answers.tsv";
pub const SWEEP: &str = "sweep.csv";
pub const SWEEP_PRIORS: &str = "sweep_priors.csv";
pub const TOPK: &str = "topk.csv";
pub const METADATA: &str = "metadata.tsv";
pub const TIMING: &str = "timing.tsv";

/// `key TAB value` table with a header row, kept sorted by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(pub BTreeMap<String, String>);

impl KeyValues {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        Self::parse(&tsv::read(path)?).map_err(|e| e.in_file(path))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(n + 1, "expected key TAB value"))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Self(map))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("key\tvalue\n");
        for (k, v) in &self.0 {
            out.push_str(&format!("{k}\t{v}\n"));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Merges `entries` into the table at `path`.
    pub fn update(path: &Path, entries: &[(&str, String)]) -> Result<()> {
        let mut kv = Self::read(path)?;
        for (k, v) in entries {
            kv.0.insert(k.to_string(), v.clone());
        }
        tsv::write(path, &kv.to_text())
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn record(work: &Path, entries: &[(&str, String)]) -> Result<()> {
    KeyValues::update(&work.join(METADATA), entries)
}

fn record_time(work: &Path, stage: &str, started: Instant) -> Result<()> {
    let key = format!("{stage}.seconds");
    KeyValues::update(
        &work.join(TIMING),
        &[(key.as_str(), format!("{:.6}", started.elapsed().as_secs_f64()))],
    )
}

/// Generates a world and writes its corpus tree into `out`.
pub fn run_synth(cfg: &WorldConfig, out: &Path) -> Result<SyntheticWorld> {
    let world = generate_world(cfg)?;
    ensure_dir(out)?;
    world.write_to(out)?;
    Ok(world)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub records: usize,
    pub errors: usize,
    pub vertices: usize,
    pub images: usize,
}

/// Hashes and deduplicates the training manifest and writes the count tables.
pub fn run_ingest(corpus: &Path, work: &Path, hash_tolerance: u32) -> Result<IngestSummary> {
    let started = Instant::now();
    ensure_dir(work)?;
    let mut catalog = VertexCatalog::new(HashIndex::with_tolerance(hash_tolerance));
    let ing = ingest_corpus(&corpus.join(MANIFEST), &corpus.join(IMAGES), &mut catalog)?;
    tsv::write(&work.join(VERTICES), &catalog.vertex_table())?;
    tsv::write(&work.join(IMAGE_VERTICES), &catalog.image_table())?;
    catalog.index.write_dump(&work.join(HASHES), &catalog.names)?;
    tsv::write(&work.join(COUNTS), &ing.counts.to_table(&catalog.names))?;
    tsv::write(&work.join(CODE_IMAGES), &ing.counts.code_table(&catalog.names))?;
    let errors: String = ing
        .errors
        .iter()
        .map(|e| format!("{}\t{}\n", e.line, e.message.replace(['\t', '\n'], " ")))
        .collect();
    tsv::write(&work.join(INGEST_ERRORS), &format!("line\tmessage\n{errors}"))?;
    let summary = IngestSummary {
        records: ing.records.len(),
        errors: ing.errors.len(),
        vertices: catalog.len(),
        images: catalog.by_image.len(),
    };
    record(
        work,
        &[
            ("ingest.hash_tolerance", hash_tolerance.to_string()),
            ("ingest.records", summary.records.to_string()),
            ("ingest.errors", summary.errors.to_string()),
            ("ingest.vertices", summary.vertices.to_string()),
            ("ingest.images", summary.images.to_string()),
        ],
    )?;
    record_time(work, "ingest", started)?;
    Ok(summary)
}

/// The vertex catalog persisted by [`run_ingest`].
pub fn load_catalog(work: &Path) -> Result<VertexCatalog> {
    let meta = KeyValues::read(&work.join(METADATA))?;
    let tolerance = meta
        .get("ingest.hash_tolerance")
        .map(|s| s.parse::<u32>())
        .transpose()
        .map_err(|e| Error::InvalidConfig(format!("ingest.hash_tolerance: {e}")))?
        .unwrap_or(0);
    let (index, names) = HashIndex::read_dump(&work.join(HASHES), tolerance)?;
    let mut catalog = VertexCatalog::from_parts(index, names);
    let ids = catalog.name_ids();
    let path = work.join(IMAGE_VERTICES);
    for (n, line) in tsv::read(&path)?.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (img, name) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(n + 1, "expected image TAB vertex").in_file(&path))?;
        let v = *ids
            .get(name)
            .ok_or_else(|| Error::UnknownVertex(name.to_string()))?;
        catalog.by_image.insert(img.to_string(), v);
    }
    Ok(catalog)
}

pub fn load_counts(work: &Path, catalog: &VertexCatalog) -> Result<CooccurrenceCounts> {
    let counts = tsv::read(&work.join(COUNTS))?;
    let codes = tsv::read(&work.join(CODE_IMAGES))?;
    CooccurrenceCounts::from_tables(&counts, &codes, &catalog.name_ids())
}

/// One feature per vertex: the first line of the feature file whose image id
/// resolves to that vertex.
pub fn vertex_features(
    catalog: &VertexCatalog,
    features: Vec<(String, SparseFeature)>,
) -> Result<Vec<SparseFeature>> {
    let mut out: Vec<Option<SparseFeature>> = vec![None; catalog.len()];
    for (id, f) in features {
        if let Some(v) = catalog.by_image.get(&id) {
            let slot = &mut out[v.index()];
            if slot.is_none() {
                *slot = Some(f);
            }
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, f)| f.ok_or_else(|| Error::MissingFeatures(catalog.names[i].clone())))
        .collect()
}

/// Builds `graph.tsv` from the ingested counts, features and code distributions.
pub fn run_build(corpus: &Path, work: &Path, p: usize) -> Result<AssociationGraph> {
    let started = Instant::now();
    let catalog = load_catalog(work)?;
    let counts = load_counts(work, &catalog)?;
    let feats = vertex_features(&catalog, read_features(&corpus.join(FEATURES))?)?;
    let codes = read_codes(&corpus.join(CODES))?;
    let g = build_graph(&counts, &feats, &codes, p)?;
    g.write_snapshot(&work.join(GRAPH))?;
    record(
        work,
        &[
            ("build.p", p.to_string()),
            ("build.vertices", g.n().to_string()),
            ("build.edges", g.edge_count().to_string()),
        ],
    )?;
    record_time(work, "build", started)?;
    Ok(g)
}

/// Propagates `graph.tsv` with the named propagator and writes `result.tsv`.
pub fn run_propagate(
    work: &Path,
    cfg: &PropagationConfig,
    schedule: &str,
    registry: &PropagatorRegistry,
) -> Result<PropagationResult> {
    cfg.validate()?;
    let propagator = registry.get(schedule)?;
    let g = AssociationGraph::read_snapshot(&work.join(GRAPH))?;
    let started = Instant::now();
    let res = propagator.propagate(&g, cfg)?;
    record_time(work, "propagate", started)?;
    tsv::write(&work.join(RESULT), &res.to_dump())?;
    record(
        work,
        &[
            ("propagate.schedule", schedule.to_string()),
            ("propagate.tolerance", cfg.tolerance.to_string()),
            ("propagate.max_iters", cfg.max_iters.to_string()),
            ("propagate.iters", res.iters.to_string()),
            ("propagate.final_delta", res.final_delta.to_string()),
            ("propagate.energy", res.energy.to_string()),
        ],
    )?;
    Ok(res)
}

/// Ground truth for challenges whose manifest line carries none.
fn read_truth(path: &Path) -> Result<HashMap<String, BTreeSet<u8>>> {
    let mut out = HashMap::new();
    if !path.exists() {
        return Ok(out);
    }
    for (n, line) in tsv::read(path)?.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, list) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(n + 1, "expected id TAB positions").in_file(path))?;
        let set = list
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<u8>()
                    .ok()
                    .filter(|&k| k < 8)
                    .ok_or_else(|| Error::parse(n + 1, format!("bad position `{s}`")).in_file(path))
            })
            .collect::<Result<_>>()?;
        out.insert(id.to_string(), set);
    }
    Ok(out)
}

/// Loads a challenge manifest and resolves every image to a vertex by hashing
/// its PNG. Images that fail to load, or whose hash is unknown, stay unresolved.
pub fn load_eval_challenges(
    corpus: &Path,
    manifest: &Path,
    catalog: &VertexCatalog,
) -> Result<Vec<EvalChallenge>> {
    let (records, _) = read_manifest(manifest)?;
    let codes = read_codes(&corpus.join(CODES))?;
    let truth = read_truth(&corpus.join(TRUTH))?;
    let images = corpus.join(IMAGES);
    let mut cache: HashMap<String, Option<VertexId>> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let code = codes
            .get(&r.code_id)
            .cloned()
            .ok_or_else(|| Error::MissingCode(r.code_id.clone()))?;
        let resolved = r
            .image_ids
            .iter()
            .map(|id| {
                *cache.entry(id.clone()).or_insert_with(|| {
                    let path = images.join(format!("{id}.png"));
                    ImageBlob::load_png(id.as_str(), &path)
                        .and_then(|img| compute_hash(&img))
                        .ok()
                        .and_then(|h| catalog.index.lookup(&h))
                })
            })
            .collect();
        let truth = r
            .ground_truth
            .clone()
            .or_else(|| truth.get(&r.challenge_id).cloned())
            .unwrap_or_default();
        out.push(EvalChallenge {
            challenge_id: r.challenge_id,
            code,
            resolved,
            truth,
        });
    }
    Ok(out)
}

pub fn load_state(work: &Path) -> Result<LatentMatrix> {
    Ok(PropagationResult::read_dump(&work.join(RESULT))?.state)
}

pub fn manifest_path(corpus: &Path, manifest: Option<&Path>) -> PathBuf {
    manifest.map_or_else(|| corpus.join(TEST_MANIFEST), Path::to_path_buf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSummary {
    pub challenges: usize,
    pub graded: usize,
    pub correct: usize,
}

impl SolveSummary {
    pub fn accuracy(&self) -> f64 {
        if self.graded == 0 {
            0.0
        } else {
            self.correct as f64 / self.graded as f64
        }
    }
}

/// Answers every challenge of `manifest` with the propagated state and writes
/// `answers.tsv`.
pub fn run_solve(
    corpus: &Path,
    work: &Path,
    manifest: &Path,
    cfg: &SelectionConfig,
) -> Result<SolveSummary> {
    cfg.validate()?;
    let catalog = load_catalog(work)?;
    let state = load_state(work)?;
    let started = Instant::now();
    let challenges = load_eval_challenges(corpus, manifest, &catalog)?;
    let mut out = String::from("challenge_id\tcode_component\tselected\tcorrect\n");
    let mut summary = SolveSummary {
        challenges: challenges.len(),
        graded: 0,
        correct: 0,
    };
    for c in &challenges {
        let ans = select(&c.code, &c.resolved, &state, cfg);
        let correct = (!c.truth.is_empty()).then(|| grade(&ans, &c.truth));
        if let Some(ok) = correct {
            summary.graded += 1;
            summary.correct += ok as usize;
        }
        out.push_str(&ans.to_record(&c.challenge_id, correct));
        out.push('\n');
    }
    record_time(work, "solve", started)?;
    tsv::write(&work.join(ANSWERS), &out)?;
    record(
        work,
        &[
            ("solve.threshold", cfg.threshold.to_string()),
            ("solve.max_select", cfg.max_select.to_string()),
            ("solve.challenges", summary.challenges.to_string()),
            ("solve.correct", summary.correct.to_string()),
            ("solve.accuracy", summary.accuracy().to_string()),
        ],
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub propagated: SweepResult,
    /// The same sweep with the unpropagated priors as the state.
    pub priors: SweepResult,
}

/// Threshold sweep over `manifest`, for the propagated state and for the
/// priors-only ablation.
pub fn run_sweep(corpus: &Path, work: &Path, manifest: &Path, grid: &[f64]) -> Result<SweepOutcome> {
    let catalog = load_catalog(work)?;
    let state = load_state(work)?;
    let g = AssociationGraph::read_snapshot(&work.join(GRAPH))?;
    let started = Instant::now();
    let challenges = load_eval_challenges(corpus, manifest, &catalog)?;
    let outcome = SweepOutcome {
        propagated: run_threshold_sweep(&challenges, &state, grid),
        priors: run_threshold_sweep(&challenges, g.prior(), grid),
    };
    record_time(work, "sweep", started)?;
    tsv::write(&work.join(SWEEP), &outcome.propagated.to_csv())?;
    tsv::write(&work.join(SWEEP_PRIORS), &outcome.priors.to_csv())?;
    record(
        work,
        &[
            ("sweep.best_t", outcome.propagated.best_threshold.to_string()),
            ("sweep.best_accuracy", outcome.propagated.best_accuracy.to_string()),
            ("sweep.priors_best_t", outcome.priors.best_threshold.to_string()),
            ("sweep.priors_best_accuracy", outcome.priors.best_accuracy.to_string()),
        ],
    )?;
    Ok(outcome)
}

/// True component of every vertex, read from `categories.tsv` by vertex name.
pub fn vertex_truth(corpus: &Path, catalog: &VertexCatalog) -> Result<Vec<Option<usize>>> {
    let cats = read_categories(&corpus.join(CATEGORIES))?;
    Ok(catalog.names.iter().map(|n| cats.get(n).copied()).collect())
}

/// Top-K accuracy of priors and propagated state over a seeded vertex sample.
pub fn run_topk(corpus: &Path, work: &Path, sample_size: usize, seed: u64) -> Result<TopKReport> {
    let catalog = load_catalog(work)?;
    let state = load_state(work)?;
    let g = AssociationGraph::read_snapshot(&work.join(GRAPH))?;
    let truth = vertex_truth(corpus, &catalog)?;
    let report = run_topk_eval(&truth, g.prior(), &state, sample_size, seed);
    tsv::write(&work.join(TOPK), &report.to_csv())?;
    let mut entries = vec![
        ("topk.seed", seed.to_string()),
        ("topk.sample_size", sample_size.to_string()),
        ("topk.sampled", report.sampled.to_string()),
    ];
    let keys: Vec<(String, String)> = report
        .rows
        .iter()
        .flat_map(|r| {
            [
                (format!("topk.before.{}", r.k), r.before.to_string()),
                (format!("topk.after.{}", r.k), r.after.to_string()),
            ]
        })
        .collect();
    entries.extend(keys.iter().map(|(k, v)| (k.as_str(), v.clone())));
    record(work, &entries)?;
    Ok(report)
}

/// Settings for [`run_all`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub world: WorldConfig,
    pub hash_tolerance: u32,
    pub propagation: PropagationConfig,
    pub schedule: String,
    pub selection: SelectionConfig,
    pub grid: Vec<f64>,
    pub topk_sample: usize,
    pub topk_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            hash_tolerance: 0,
            propagation: PropagationConfig::default(),
            schedule: "sequential".into(),
            selection: SelectionConfig::default(),
            grid: crate::eval::default_grid(),
            topk_sample: 1000,
            topk_seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub ingest: IngestSummary,
    pub propagation: PropagationResult,
    pub solve: SolveSummary,
    pub sweep: SweepOutcome,
    pub topk: TopKReport,
}

/// synth → ingest → build → propagate → solve → sweep → topk, with the corpus
/// in `root/corpus` and derived files in `root/work`.
pub fn run_all(cfg: &PipelineConfig, root: &Path) -> Result<PipelineReport> {
    let corpus = root.join("corpus");
    let work = root.join("work");
    run_synth(&cfg.world, &corpus)?;
    let ingest = run_ingest(&corpus, &work, cfg.hash_tolerance)?;
    record(&work, &[("synth.seed", cfg.world.seed.to_string())])?;
    run_build(&corpus, &work, cfg.world.p)?;
    let registry = PropagatorRegistry::with_defaults();
    let propagation = run_propagate(&work, &cfg.propagation, &cfg.schedule, &registry)?;
    let test = corpus.join(TEST_MANIFEST);
    let solve = run_solve(&corpus, &work, &test, &cfg.selection)?;
    let sweep = run_sweep(&corpus, &work, &test, &cfg.grid)?;
    let topk = run_topk(&corpus, &work, cfg.topk_sample, cfg.topk_seed)?;
    Ok(PipelineReport {
        ingest,
        propagation,
        solve,
        sweep,
        topk,
    })
}

/// Answer-file line parsed back: `(challenge_id, code_component, selected, correct)`.
pub fn parse_answer_line(line: &str) -> Option<(String, usize, BTreeSet<u8>, Option<bool>)> {
    let f: Vec<&str> = line.split('\t').collect();
    let [id, comp, sel, flag] = f[..] else {
        return None;
    };
    let selected = sel
        .split(',')
        .map(|s| s.parse::<u8>().ok())
        .collect::<Option<BTreeSet<u8>>>()?;
    let correct = match flag {
        "1" => Some(true),
        "0" => Some(false),
        "-" => None,
        _ => return None,
    };
    Some((id.to_string(), comp.parse().ok()?, selected, correct))
}

