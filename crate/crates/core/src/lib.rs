//! Unsupervised association learning between captcha codes and images.
//!
//! A corpus of challenges (one code, eight images) is deduplicated with a
//! perceptual hash, turned into a co-occurrence/similarity graph whose vertices
//! carry code-averaged priors, and solved with clamped label propagation. New
//! challenges are answered by thresholded argmax matching against the code's
//! latent distribution.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod labelprop;
pub mod phash;
pub mod pipeline;
pub mod simgraph;
pub mod solver;
pub mod synth;
mod tsv;

pub use error::{Error, Result};

/// Dense index of a deduplicated image vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}
