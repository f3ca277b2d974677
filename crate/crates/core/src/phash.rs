//! 192-bit perceptual hash (8x8 mean-thresholded grid per RGB channel) and a
//! gray-key bucketed index used to deduplicate images into graph vertices.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::corpus::ImageBlob;
use crate::error::{Error, Result};
use crate::VertexId;

const GRID: usize = 8;

/// Fingerprint of one image.
///
/// `bits` holds the R, G and B planes in that order; within a plane, cell `k`
/// of the row-major 8x8 grid is bit `63 - k`, so the hex rendering reads in
/// grid order. `gray_key` is only used for bucketing and never compared as part
/// of the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PerceptualHash {
    pub bits: [u64; 3],
    pub gray_key: u64,
}

impl PerceptualHash {
    pub fn bits_hex(&self) -> String {
        format!(
            "{:016x}{:016x}{:016x}",
            self.bits[0], self.bits[1], self.bits[2]
        )
    }

    pub fn gray_key_hex(&self) -> String {
        format!("{:016x}", self.gray_key)
    }

    pub fn from_hex(bits_hex: &str, gray_key_hex: &str) -> Option<Self> {
        if bits_hex.len() != 48 || gray_key_hex.len() != 16 {
            return None;
        }
        let word = |s: &str| u64::from_str_radix(s, 16).ok();
        Some(Self {
            bits: [
                word(bits_hex.get(0..16)?)?,
                word(bits_hex.get(16..32)?)?,
                word(bits_hex.get(32..48)?)?,
            ],
            gray_key: word(gray_key_hex)?,
        })
    }

    /// Bitwise complement of the identity bits; the gray key is kept.
    pub fn complement(&self) -> Self {
        Self {
            bits: [!self.bits[0], !self.bits[1], !self.bits[2]],
            gray_key: self.gray_key,
        }
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bits_hex())
    }
}

/// Per-pixel overlap with the 8 cells along one axis, in units of 1/8 pixel.
///
/// Pixel `x` spans `[8x, 8x + 8)` and cell `c` spans `[c * len, (c + 1) * len)`,
/// so every weight is an integer and each cell's weights sum to `len`.
fn axis_weights(len: usize) -> Vec<[(usize, u64); 2]> {
    (0..len)
        .map(|x| {
            let (p0, p1) = (8 * x, 8 * x + 8);
            let mut out = [(0usize, 0u64); 2];
            let mut n = 0;
            let first = p0 / len;
            for cell in first..GRID.min(first + 2) {
                let (c0, c1) = (cell * len, (cell + 1) * len);
                let lo = p0.max(c0);
                let hi = p1.min(c1);
                if hi > lo {
                    out[n] = (cell, (hi - lo) as u64);
                    n += 1;
                }
            }
            out
        })
        .collect()
}

/// Threshold a plane's 64 area-weighted cell sums at their mean (ties set the bit).
fn plane_bits(
    width: usize,
    height: usize,
    wx: &[[(usize, u64); 2]],
    wy: &[[(usize, u64); 2]],
    sample: impl Fn(usize, usize) -> u64,
) -> u64 {
    let mut sums = [0u64; GRID * GRID];
    for y in 0..height {
        for &(cy, wgt_y) in &wy[y] {
            if wgt_y == 0 {
                continue;
            }
            for x in 0..width {
                let v = sample(x, y) * wgt_y;
                for &(cx, wgt_x) in &wx[x] {
                    sums[cy * GRID + cx] += v * wgt_x;
                }
            }
        }
    }
    // every cell has the same area, so comparing raw sums against the mean is exact
    let total: u64 = sums.iter().sum();
    sums.iter().enumerate().fold(0u64, |word, (k, &s)| {
        if 64 * s >= total {
            word | (1 << (63 - k))
        } else {
            word
        }
    })
}

fn luma(r: u8, g: u8, b: u8) -> u64 {
    (299 * r as u64 + 587 * g as u64 + 114 * b as u64 + 500) / 1000
}

pub fn compute_hash(img: &ImageBlob) -> Result<PerceptualHash> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < GRID || h < GRID {
        return Err(Error::ImageTooSmall {
            id: img.id().to_string(),
            width: img.width(),
            height: img.height(),
        });
    }
    let px = img.pixels();
    let wx = axis_weights(w);
    let wy = axis_weights(h);
    let at = |x: usize, y: usize, c: usize| px[(y * w + x) * 3 + c] as u64;
    let mut bits = [0u64; 3];
    for (c, word) in bits.iter_mut().enumerate() {
        *word = plane_bits(w, h, &wx, &wy, |x, y| at(x, y, c));
    }
    let gray_key = plane_bits(w, h, &wx, &wy, |x, y| {
        let i = (y * w + x) * 3;
        luma(px[i], px[i + 1], px[i + 2])
    });
    Ok(PerceptualHash { bits, gray_key })
}

pub fn hamming(a: &PerceptualHash, b: &PerceptualHash) -> u32 {
    a.bits
        .iter()
        .zip(&b.bits)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum()
}

/// Dedup index: hashes bucketed by gray key, matched within `tolerance` bits.
///
/// Vertex ids are handed out densely in insertion order.
#[derive(Debug, Clone, Default)]
pub struct HashIndex {
    buckets: HashMap<u64, Vec<(PerceptualHash, VertexId)>>,
    hashes: Vec<PerceptualHash>,
    tolerance: u32,
}

impl HashIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tolerance(tolerance: u32) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    pub fn tolerance(&self) -> u32 {
        self.tolerance
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn hash_of(&self, v: VertexId) -> Option<&PerceptualHash> {
        self.hashes.get(v.index())
    }

    /// First entry in `h`'s bucket within tolerance, in insertion order.
    pub fn lookup(&self, h: &PerceptualHash) -> Option<VertexId> {
        self.buckets.get(&h.gray_key).and_then(|bucket| {
            bucket
                .iter()
                .find(|(stored, _)| hamming(stored, h) <= self.tolerance)
                .map(|&(_, v)| v)
        })
    }

    pub fn lookup_or_insert(&mut self, h: PerceptualHash) -> (VertexId, bool) {
        if let Some(v) = self.lookup(&h) {
            return (v, false);
        }
        let v = VertexId(self.hashes.len() as u32);
        self.hashes.push(h);
        self.buckets.entry(h.gray_key).or_default().push((h, v));
        (v, true)
    }

    /// Lines `vertex_id TAB gray_key_hex TAB bits_hex`, in vertex id order.
    pub fn write_dump(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut out = String::new();
        for (i, h) in self.hashes.iter().enumerate() {
            let name = names.get(i).map(String::as_str).unwrap_or("");
            out.push_str(&format!(
                "{name}\t{}\t{}\n",
                h.gray_key_hex(),
                h.bits_hex()
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    /// Rebuilds an index from a dump; returns the index and the vertex names.
    pub fn read_dump(path: &Path, tolerance: u32) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_dump(&text, tolerance).map_err(|e| e.in_file(path))
    }

    pub fn parse_dump(text: &str, tolerance: u32) -> Result<(Self, Vec<String>)> {
        let mut idx = Self::with_tolerance(tolerance);
        let mut names = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [name, gray, bits] = fields[..] else {
                return Err(Error::parse(n + 1, "expected 3 tab-separated fields"));
            };
            let h = PerceptualHash::from_hex(bits, gray)
                .ok_or_else(|| Error::parse(n + 1, "malformed hash hex"))?;
            let v = VertexId(idx.hashes.len() as u32);
            idx.hashes.push(h);
            idx.buckets.entry(h.gray_key).or_default().push((h, v));
            names.push(name.to_string());
        }
        Ok((idx, names))
    }
}
