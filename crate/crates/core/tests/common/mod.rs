//! Fixtures shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use coassoc::corpus::ImageBlob;
use coassoc::simgraph::{AssociationGraph, LatentMatrix};
use coassoc::synth::perturb_pixels;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit LCG, mirrored by `reference/phash_ref.py`.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }

    pub fn byte(&mut self) -> u8 {
        (self.next() >> 56) as u8
    }
}

fn blob(id: &str, w: u32, h: u32, f: impl FnMut(u32, u32) -> [u8; 3]) -> ImageBlob {
    let mut f = f;
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            px.extend_from_slice(&f(x, y));
        }
    }
    ImageBlob::new(id, w, h, px).unwrap()
}

pub fn noise(w: u32, h: u32, seed: u64) -> ImageBlob {
    let mut g = Lcg::new(seed);
    blob("noise", w, h, |_, _| [g.byte(), g.byte(), g.byte()])
}

pub fn halves16() -> ImageBlob {
    blob("halves16", 16, 16, |x, _| if x < 8 { [0; 3] } else { [255; 3] })
}

pub fn gradient37x23() -> ImageBlob {
    blob("gradient", 37, 23, |x, y| {
        [
            ((x * 7 + y * 3) % 256) as u8,
            ((x * x + y) % 256) as u8,
            ((x * y) % 256) as u8,
        ]
    })
}

pub fn blocks29x41() -> ImageBlob {
    let mut g = Lcg::new(3);
    blob("blocks", 29, 41, |x, y| {
        let r = if (x / 5 + y / 7) % 2 == 0 { 255 } else { 0 };
        [r, ((x * 11) % 256) as u8, g.byte()]
    })
}

/// Replaces `percent`% of pixels (in expectation) with pure black or white.
pub fn salt_pepper(img: &ImageBlob, seed: u64, percent: u64) -> ImageBlob {
    let mut g = Lcg::new(seed);
    let mut px = img.pixels().to_vec();
    for p in px.chunks_exact_mut(3) {
        if (g.next() >> 33) % 100 < percent {
            let v = if g.next() >> 63 == 1 { 255 } else { 0 };
            p.fill(v);
        }
    }
    ImageBlob::new(img.id(), img.width(), img.height(), px).unwrap()
}

/// A copy of every image with seeded uniform pixel noise of at most `amplitude`.
pub fn noisy_copies(originals: &[ImageBlob], seed: u64, amplitude: u8) -> Vec<ImageBlob> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    originals
        .iter()
        .map(|img| {
            let px = perturb_pixels(&mut rng, img.pixels(), amplitude);
            ImageBlob::new(img.id(), img.width(), img.height(), px).unwrap()
        })
        .collect()
}

/// `(name, image, bits_hex, gray_key_hex)` computed by `reference/phash_ref.py`.
pub fn golden() -> Vec<(&'static str, ImageBlob, &'static str, &'static str)> {
    vec![
        (
            "noise64",
            noise(64, 64, 1),
            "2f6a9e531a58ba7ff71eb0e7148f943d9812c56587ac9687",
            "ff5a967316df943d",
        ),
        (
            "halves16",
            halves16(),
            "0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f",
            "0f0f0f0f0f0f0f0f",
        ),
        (
            "gradient37x23",
            gradient37x23(),
            "0f0f1e1e1e1e3c3c3c3e3e3e3e3f3f3f00031f3c3b776d6f",
            "0f1f3e3e3e3e3c3c",
        ),
        (
            "noise100x60",
            noise(100, 60, 7),
            "23c9778fe4744c570738b2d6ba2bc0941ddbf2d7906018fe",
            "0339f6d6bc2a48d4",
        ),
        (
            "blocks29x41",
            blocks29x41(),
            "926d6d926d92926d1e1e1e1e1e1e1e1e7ce0672384cfb3c8",
            "1e1e2e1e2c1e1e2c",
        ),
    ]
}

/// Salt-and-pepper copy of `noise64` and its reference hash and distance.
pub const SALT_PEPPER_BITS: &str = "2f6e0e511a58b27ff716b2e3349e9439fa13c56507a5968d";
pub const SALT_PEPPER_GRAY: &str = "ff569673121e943d";
pub const SALT_PEPPER_HAMMING: u32 = 21;

/// Solves a dense linear system by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            for c in 0..b[r].len() {
                b[r][c] -= f * b[col][c];
            }
        }
    }
    for col in (0..n).rev() {
        for c in 0..b[col].len() {
            let mut v = b[col][c];
            for k in col + 1..n {
                v -= a[col][k] * b[k][c];
            }
            b[col][c] = v / a[col][col];
        }
    }
    b
}

/// Classic harmonic labelling on the explicit-dongle graph: every vertex with
/// confidence c_i > 0 gets an extra leaf clamped to its prior, joined by an
/// edge of weight c_i. Leaves are the only labelled vertices; every image
/// vertex is free and settles at the weighted mean of its neighbours.
/// Image vertices without any path to a leaf keep their prior.
pub fn explicit_dongle_solution(g: &AssociationGraph) -> LatentMatrix {
    let n = g.n();
    let p = g.p();
    let mut leaves: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        if g.confidence()[i] > 0.0 {
            leaves.push((i, g.confidence()[i]));
        }
    }
    // adjacency over image vertices 0..n and leaves n..n+leaves.len()
    let m = n + leaves.len();
    let mut w = vec![vec![0.0; m]; m];
    for (i, j, x) in g.edges() {
        w[i][j] += x;
        w[j][i] += x;
    }
    for (k, &(i, c)) in leaves.iter().enumerate() {
        w[i][n + k] = c;
        w[n + k][i] = c;
    }
    // image vertices reachable from some leaf
    let mut reach = vec![false; m];
    let mut stack: Vec<usize> = (n..m).collect();
    while let Some(u) = stack.pop() {
        if reach[u] {
            continue;
        }
        reach[u] = true;
        for v in 0..m {
            if w[u][v] > 0.0 && !reach[v] {
                stack.push(v);
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| reach[i]).collect();
    let pos: Vec<Option<usize>> = {
        let mut pos = vec![None; n];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = Some(k);
        }
        pos
    };
    // (D - W)_uu Y_u = W_ul Y_l
    let mut a = vec![vec![0.0; free.len()]; free.len()];
    let mut b = vec![vec![0.0; p]; free.len()];
    for (r, &i) in free.iter().enumerate() {
        a[r][r] = w[i].iter().sum();
        for j in 0..n {
            if let Some(c) = pos[j] {
                a[r][c] -= w[i][j];
            }
        }
        for (k, &(leaf_of, _)) in leaves.iter().enumerate() {
            let x = w[i][n + k];
            if x > 0.0 {
                for t in 0..p {
                    b[r][t] += x * g.prior().row(leaf_of)[t];
                }
            }
        }
    }
    let y = gauss_solve(a, b);
    let rows = (0..n)
        .map(|i| match pos[i] {
            Some(r) => y[r].clone(),
            None => g.prior().row(i).to_vec(),
        })
        .collect();
    LatentMatrix::from_rows(p, rows)
}
