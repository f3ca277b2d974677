//! Challenge records, manifest parsing, image deduplication on ingest and
//! co-occurrence counting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::phash::{compute_hash, HashIndex, PerceptualHash};
use crate::tsv;
use crate::VertexId;

pub const IMAGES_PER_CHALLENGE: usize = 8;

/// RGB8 image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBlob {
    id: String,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageBlob {
    pub fn new(id: impl Into<String>, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let id = id.into();
        if width < 8 || height < 8 {
            return Err(Error::ImageTooSmall { id, width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::InvalidImage {
                id,
                reason: format!("expected {expected} bytes, got {}", pixels.len()),
            });
        }
        Ok(Self {
            id,
            width,
            height,
            pixels,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn load_png(id: impl Into<String>, path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(id, w, h, rgb.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// One captcha: a code plus exactly eight images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeRecord {
    pub challenge_id: String,
    pub code_id: String,
    pub image_ids: [String; IMAGES_PER_CHALLENGE],
    /// Relevant positions, known only for synthetic corpora.
    pub ground_truth: Option<BTreeSet<u8>>,
}

impl ChallengeRecord {
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 3 or 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let (challenge_id, code_id) = (fields[0], fields[1]);
        if challenge_id.is_empty() || code_id.is_empty() {
            return Err(Error::parse(line_no, "empty challenge or code id"));
        }
        let images: Vec<&str> = fields[2].split(',').collect();
        if images.len() != IMAGES_PER_CHALLENGE {
            return Err(Error::parse(
                line_no,
                format!("expected 8 images, got {}", images.len()),
            ));
        }
        if images.iter().any(|s| s.is_empty()) {
            return Err(Error::parse(line_no, "empty image id"));
        }
        let image_ids: [String; IMAGES_PER_CHALLENGE] =
            std::array::from_fn(|k| images[k].to_string());
        let ground_truth = match fields.get(3) {
            None => None,
            Some(gt) => Some(parse_ground_truth(gt).map_err(|r| Error::parse(line_no, r))?),
        };
        Ok(Self {
            challenge_id: challenge_id.to_string(),
            code_id: code_id.to_string(),
            image_ids,
            ground_truth,
        })
    }

    pub fn to_line(&self) -> String {
        let mut line = format!(
            "{}\t{}\t{}",
            self.challenge_id,
            self.code_id,
            self.image_ids.join(",")
        );
        if let Some(gt) = &self.ground_truth {
            let pos: Vec<String> = gt.iter().map(u8::to_string).collect();
            line.push_str("\tgt:");
            line.push_str(&pos.join(";"));
        }
        line
    }
}

fn parse_ground_truth(field: &str) -> std::result::Result<BTreeSet<u8>, String> {
    let body = field
        .strip_prefix("gt:")
        .ok_or_else(|| format!("ground truth must start with `gt:`, got `{field}`"))?;
    let set = body
        .split(';')
        .map(|s| match s.parse::<u8>() {
            Ok(p) if (p as usize) < IMAGES_PER_CHALLENGE => Ok(p),
            _ => Err(format!("bad ground-truth position `{s}`")),
        })
        .collect::<std::result::Result<BTreeSet<u8>, String>>()?;
    if set.is_empty() {
        return Err("empty ground truth".into());
    }
    Ok(set)
}

/// A record that could not be used; ingestion carries on past it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

/// Parses manifest text, skipping blank and `#` lines.
pub fn parse_manifest(text: &str) -> (Vec<ChallengeRecord>, Vec<RecordError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match ChallengeRecord::parse_line(line, n + 1) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(RecordError {
                line: n + 1,
                message: e.to_string(),
            }),
        }
    }
    (records, errors)
}

pub fn write_manifest(path: &Path, records: &[ChallengeRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    tsv::write(path, &out)
}

pub fn read_manifest(path: &Path) -> Result<(Vec<ChallengeRecord>, Vec<RecordError>)> {
    Ok(parse_manifest(&tsv::read(path)?))
}

/// Co-occurrence statistics over deduplicated vertices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceCounts {
    /// Keyed by `(min, max)`.
    pub pair_counts: BTreeMap<(VertexId, VertexId), u32>,
    pub occurrence_counts: BTreeMap<VertexId, u32>,
    pub code_image: BTreeMap<String, BTreeSet<VertexId>>,
}

fn pair_key(a: VertexId, b: VertexId) -> (VertexId, VertexId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl CooccurrenceCounts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one challenge. Slots that collapsed onto the same vertex count once.
    pub fn add_challenge(&mut self, code_id: &str, vertices: &[VertexId]) {
        let distinct: BTreeSet<VertexId> = vertices.iter().copied().collect();
        for &v in &distinct {
            *self.occurrence_counts.entry(v).or_insert(0) += 1;
        }
        let ordered: Vec<VertexId> = distinct.iter().copied().collect();
        for (k, &a) in ordered.iter().enumerate() {
            for &b in &ordered[k + 1..] {
                *self.pair_counts.entry((a, b)).or_insert(0) += 1;
            }
        }
        self.code_image
            .entry(code_id.to_string())
            .or_default()
            .extend(distinct);
    }

    /// c_ij, symmetric; zero for pairs that never co-occurred and for `i == j`.
    pub fn pair(&self, i: VertexId, j: VertexId) -> u32 {
        if i == j {
            return 0;
        }
        self.pair_counts.get(&pair_key(i, j)).copied().unwrap_or(0)
    }

    /// c_i.
    pub fn occurrence(&self, i: VertexId) -> u32 {
        self.occurrence_counts.get(&i).copied().unwrap_or(0)
    }

    pub fn total_occurrences(&self) -> u64 {
        self.occurrence_counts.values().map(|&c| c as u64).sum()
    }

    /// Codes whose challenges contained `i`, in code-id order.
    pub fn codes_of(&self, i: VertexId) -> Vec<&str> {
        self.code_image
            .iter()
            .filter(|(_, vs)| vs.contains(&i))
            .map(|(c, _)| c.as_str())
            .collect()
    }

    /// Inverse of `code_image`: vertex -> codes (sorted), built in one pass.
    pub fn codes_by_vertex(&self) -> BTreeMap<VertexId, Vec<&str>> {
        let mut out: BTreeMap<VertexId, Vec<&str>> = BTreeMap::new();
        for (code, vs) in &self.code_image {
            for &v in vs {
                out.entry(v).or_default().push(code.as_str());
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.pair_counts.is_empty() && self.occurrence_counts.is_empty() && self.code_image.is_empty()
    }

    /// Counts table: `i TAB j TAB c_ij` (i < j by name) then `i TAB c_i`, each block sorted.
    pub fn to_table(&self, names: &[String]) -> String {
        let name = |v: VertexId| names[v.index()].as_str();
        let mut pairs: Vec<(&str, &str, u32)> = self
            .pair_counts
            .iter()
            .map(|(&(a, b), &c)| {
                let (x, y) = (name(a), name(b));
                if x <= y {
                    (x, y, c)
                } else {
                    (y, x, c)
                }
            })
            .collect();
        pairs.sort_unstable();
        let mut singles: Vec<(&str, u32)> = self
            .occurrence_counts
            .iter()
            .map(|(&v, &c)| (name(v), c))
            .collect();
        singles.sort_unstable();
        let mut out = String::new();
        for (a, b, c) in pairs {
            out.push_str(&format!("{a}\t{b}\t{c}\n"));
        }
        for (a, c) in singles {
            out.push_str(&format!("{a}\t{c}\n"));
        }
        out
    }

    /// `code_id TAB name,name,...`, sorted by code id then name.
    pub fn code_table(&self, names: &[String]) -> String {
        let mut out = String::new();
        for (code, vs) in &self.code_image {
            let mut ns: Vec<&str> = vs.iter().map(|v| names[v.index()].as_str()).collect();
            ns.sort_unstable();
            out.push_str(&format!("{code}\t{}\n", ns.join(",")));
        }
        out
    }

    pub fn from_tables(
        counts: &str,
        codes: &str,
        ids: &HashMap<String, VertexId>,
    ) -> Result<Self> {
        let lookup = |n: usize, name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::parse(n, format!("unknown vertex `{name}`")))
        };
        let count = |n: usize, s: &str| {
            s.parse::<u32>()
                .ok()
                .filter(|&c| c >= 1)
                .ok_or_else(|| Error::parse(n, format!("bad count `{s}`")))
        };
        let mut out = Self::new();
        for (n, line) in counts.lines().enumerate() {
            let n = n + 1;
            let f: Vec<&str> = line.split('\t').collect();
            match f[..] {
                [a, b, c] => {
                    let key = pair_key(lookup(n, a)?, lookup(n, b)?);
                    out.pair_counts.insert(key, count(n, c)?);
                }
                [a, c] => {
                    out.occurrence_counts.insert(lookup(n, a)?, count(n, c)?);
                }
                [""] => {}
                _ => return Err(Error::parse(n, "expected 2 or 3 fields")),
            }
        }
        for (n, line) in codes.lines().enumerate() {
            let n = n + 1;
            if line.is_empty() {
                continue;
            }
            let (code, list) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(n, "expected code TAB vertices"))?;
            let set = list
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| lookup(n, s))
                .collect::<Result<BTreeSet<_>>>()?;
            out.code_image.insert(code.to_string(), set);
        }
        Ok(out)
    }
}

/// Pointwise sum of counts; union of code/image sets.
pub fn merge_counts(a: &CooccurrenceCounts, b: &CooccurrenceCounts) -> CooccurrenceCounts {
    let mut out = a.clone();
    for (k, c) in &b.pair_counts {
        *out.pair_counts.entry(*k).or_insert(0) += c;
    }
    for (k, c) in &b.occurrence_counts {
        *out.occurrence_counts.entry(*k).or_insert(0) += c;
    }
    for (code, vs) in &b.code_image {
        out.code_image
            .entry(code.clone())
            .or_default()
            .extend(vs.iter().copied());
    }
    out
}

/// Counts records whose images all resolve; `resolve` maps image id to vertex.
pub fn count_records<F>(records: &[ChallengeRecord], mut resolve: F) -> CooccurrenceCounts
where
    F: FnMut(&str) -> Option<VertexId>,
{
    let mut counts = CooccurrenceCounts::new();
    for r in records {
        let vs: Option<Vec<VertexId>> = r.image_ids.iter().map(|id| resolve(id)).collect();
        if let Some(vs) = vs {
            counts.add_challenge(&r.code_id, &vs);
        }
    }
    counts
}

/// Hash index plus vertex naming. A vertex is named after the first image id
/// that created it.
#[derive(Debug, Clone, Default)]
pub struct VertexCatalog {
    pub index: HashIndex,
    pub names: Vec<String>,
    /// Every image id seen so far and the vertex it resolved to.
    pub by_image: BTreeMap<String, VertexId>,
}

impl VertexCatalog {
    pub fn new(index: HashIndex) -> Self {
        assert!(index.is_empty(), "catalog needs names for pre-existing vertices");
        Self {
            index,
            names: Vec::new(),
            by_image: BTreeMap::new(),
        }
    }

    pub fn from_parts(index: HashIndex, names: Vec<String>) -> Self {
        let by_image = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), VertexId(i as u32)))
            .collect();
        Self {
            index,
            names,
            by_image,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn insert(&mut self, image_id: &str, hash: PerceptualHash) -> VertexId {
        if let Some(&v) = self.by_image.get(image_id) {
            return v;
        }
        let (v, new) = self.index.lookup_or_insert(hash);
        if new {
            self.names.push(image_id.to_string());
        }
        self.by_image.insert(image_id.to_string(), v);
        v
    }

    pub fn name_ids(&self) -> HashMap<String, VertexId> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), VertexId(i as u32)))
            .collect()
    }

    /// `i TAB name` in id order.
    pub fn vertex_table(&self) -> String {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{i}\t{n}\n"))
            .collect()
    }

    /// `image_id TAB vertex_name`, sorted by image id.
    pub fn image_table(&self) -> String {
        self.by_image
            .iter()
            .map(|(img, v)| format!("{img}\t{}\n", self.names[v.index()]))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<ChallengeRecord>,
    pub counts: CooccurrenceCounts,
    pub errors: Vec<RecordError>,
}

/// Ingests a manifest whose image ids resolve to `images_dir/<id>.png`.
///
/// A record is counted only if all eight images load and hash; otherwise it is
/// reported in `errors` with its line number and skipped.
pub fn ingest_corpus(
    manifest: &Path,
    images_dir: &Path,
    catalog: &mut VertexCatalog,
) -> Result<Ingested> {
    let text = tsv::read(manifest)?;
    let (parsed, mut errors) = parse_manifest(&text);
    let line_of: HashMap<&str, usize> = text
        .lines()
        .enumerate()
        .filter_map(|(n, l)| l.split('\t').next().map(|id| (id, n + 1)))
        .collect();
    let mut hashes: HashMap<String, PerceptualHash> = HashMap::new();
    let mut records = Vec::with_capacity(parsed.len());
    let mut counts = CooccurrenceCounts::new();
    for r in parsed {
        let mut failure = None;
        for id in &r.image_ids {
            if catalog.by_image.contains_key(id) || hashes.contains_key(id) {
                continue;
            }
            let path = images_dir.join(format!("{id}.png"));
            match ImageBlob::load_png(id.as_str(), &path).and_then(|img| compute_hash(&img)) {
                Ok(h) => {
                    hashes.insert(id.clone(), h);
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(message) = failure {
            errors.push(RecordError {
                line: line_of.get(r.challenge_id.as_str()).copied().unwrap_or(0),
                message,
            });
            continue;
        }
        let vs: Vec<VertexId> = r
            .image_ids
            .iter()
            .map(|id| match catalog.by_image.get(id) {
                Some(&v) => v,
                None => catalog.insert(id, hashes[id]),
            })
            .collect();
        counts.add_challenge(&r.code_id, &vs);
        records.push(r);
    }
    errors.sort_by_key(|e| e.line);
    Ok(Ingested {
        records,
        counts,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, code: &str, imgs: [&str; 8]) -> ChallengeRecord {
        ChallengeRecord {
            challenge_id: id.into(),
            code_id: code.into(),
            image_ids: imgs.map(String::from),
            ground_truth: None,
        }
    }

    fn by_letter(s: &str) -> Option<VertexId> {
        Some(VertexId(s.as_bytes()[0] as u32 - b'A' as u32))
    }

    #[test]
    fn empty_manifest() {
        let (records, errors) = parse_manifest("");
        assert!(records.is_empty() && errors.is_empty());
        assert!(count_records(&records, by_letter).is_empty());
    }

    #[test]
    fn single_challenge_combinatorics() {
        let r = rec("c1", "k1", ["A", "B", "C", "D", "E", "F", "G", "H"]);
        let counts = count_records(&[r], by_letter);
        assert_eq!(counts.occurrence_counts.len(), 8);
        assert!(counts.occurrence_counts.values().all(|&c| c == 1));
        assert_eq!(counts.pair_counts.len(), 28);
        assert!(counts.pair_counts.values().all(|&c| c == 1));
    }

    #[test]
    fn three_challenge_fixture() {
        // A,B together in challenges 1 and 3; hand-counted
        let recs = [
            rec("c1", "k1", ["A", "B", "C", "D", "E", "F", "G", "H"]),
            rec("c2", "k2", ["A", "I", "J", "K", "L", "M", "N", "O"]),
            rec("c3", "k3", ["B", "A", "P", "Q", "R", "S", "T", "C"]),
        ];
        let counts = count_records(&recs, by_letter);
        let v = |s: &str| by_letter(s).unwrap();
        assert_eq!(counts.pair(v("A"), v("B")), 2);
        assert_eq!(counts.pair(v("B"), v("A")), 2);
        assert_eq!(counts.pair(v("A"), v("C")), 2);
        assert_eq!(counts.pair(v("B"), v("C")), 2);
        assert_eq!(counts.pair(v("A"), v("I")), 1);
        assert_eq!(counts.pair(v("I"), v("P")), 0);
        assert_eq!(counts.occurrence(v("A")), 3);
        assert_eq!(counts.occurrence(v("B")), 2);
        assert_eq!(counts.total_occurrences(), 24);
        assert_eq!(counts.codes_of(v("A")), vec!["k1", "k2", "k3"]);
    }

    #[test]
    fn collapsed_slots_count_once() {
        let r = rec("c1", "k", ["A", "A", "B", "C", "D", "E", "F", "G"]);
        let counts = count_records(&[r], by_letter);
        assert_eq!(counts.occurrence(VertexId(0)), 1);
        assert_eq!(counts.total_occurrences(), 7);
        assert_eq!(counts.pair_counts.len(), 21);
    }

    #[test]
    fn merge_identity_and_shared_image() {
        let a = count_records(
            &[rec("c1", "k1", ["A", "B", "C", "D", "E", "F", "G", "H"])],
            by_letter,
        );
        let b = count_records(
            &[rec("c2", "k2", ["A", "I", "J", "K", "L", "M", "N", "O"])],
            by_letter,
        );
        assert_eq!(merge_counts(&a, &CooccurrenceCounts::new()), a);
        let m = merge_counts(&a, &b);
        assert_eq!(m.occurrence(VertexId(0)), 2);
        assert_eq!(m, merge_counts(&b, &a));
    }

    #[test]
    fn manifest_errors_keep_going() {
        let text = "c1\tk1\ta,b,c,d,e,f,g,h\tgt:0;3\n\
                    c2\tk2\ta,b,c\n\
                    c3\tk3\ta,b,c,d,e,f,g,h\tgt:9\n\
                    c4\tk4\ta,b,c,d,e,f,g,h\n";
        let (records, errors) = parse_manifest(text);
        assert_eq!(records.len(), 2);
        assert_eq!(errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(records[0].ground_truth, Some(BTreeSet::from([0, 3])));
        assert_eq!(records[0].to_line(), text.lines().next().unwrap());
    }

    #[test]
    fn tables_round_trip() {
        let recs = [
            rec("c1", "k1", ["A", "B", "C", "D", "E", "F", "G", "H"]),
            rec("c2", "k2", ["H", "B", "I", "J", "K", "L", "M", "N"]),
        ];
        let counts = count_records(&recs, by_letter);
        let names: Vec<String> = (0..14u8).map(|k| ((b'A' + k) as char).to_string()).collect();
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), VertexId(i as u32)))
            .collect();
        let table = counts.to_table(&names);
        assert!(table.starts_with("A\tB\t1\n"));
        assert!(table.contains("B\tH\t2\n"));
        let back =
            CooccurrenceCounts::from_tables(&table, &counts.code_table(&names), &ids).unwrap();
        assert_eq!(back, counts);
    }
}
