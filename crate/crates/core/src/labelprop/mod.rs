//! Clamped label propagation over the association graph.
//!
//! Every vertex is pulled toward its merged dongle (prior with weight equal to
//! its confidence) and toward its neighbors. The fixed point minimizes
//!
//! ```text
//! E(Y) = sum_{i<j} w_ij |y_i - y_j|^2 + sum_i c_i |y_i - prior_i|^2
//! ```
//!
//! Iterative schedules and a dense direct solve are exposed as interchangeable
//! [`Propagator`]s, looked up by name in a [`PropagatorRegistry`].

mod direct;
mod registry;
mod sweep;

use std::path::Path;

pub use direct::{harmonic_solve, DirectSolve, DENSE_SOLVE_LIMIT};
pub use registry::{Propagator, PropagatorRegistry};
pub use sweep::{SequentialSweep, SynchronousSweep};

use crate::error::{Error, Result};
use crate::simgraph::{argmax, AssociationGraph, LatentMatrix};
use crate::tsv;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Gauss-Seidel: vertices updated in place, in index order.
    Sequential,
    /// Jacobi: every vertex reads the previous sweep's state.
    Synchronous,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Sequential => "sequential",
            Schedule::Synchronous => "synchronous",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    /// Stop once the largest componentwise change in a sweep drops below this.
    pub tolerance: f64,
    pub max_iters: usize,
    pub schedule: Schedule,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 1000,
            schedule: Schedule::Sequential,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub state: LatentMatrix,
    pub iters: usize,
    pub final_delta: f64,
    pub energy: f64,
}

impl PropagationResult {
    /// Result dump: a `#` metadata line, then `i TAB argmax TAB max_value TAB y_csv`.
    pub fn to_dump(&self) -> String {
        let mut out = format!(
            "#\titers={}\tfinal_delta={}\tenergy={}\n",
            self.iters, self.final_delta, self.energy
        );
        for (i, row) in self.state.rows().enumerate() {
            let k = argmax(row);
            out.push_str(&format!("{i}\t{k}\t{}\t{}\n", row[k], tsv::join_f64(row)));
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let meta = lines.next().ok_or_else(|| Error::parse(1, "empty result dump"))?;
        let mut iters = None;
        let mut final_delta = None;
        let mut energy = None;
        for field in meta.split('\t').skip(1) {
            match field.split_once('=') {
                Some(("iters", v)) => iters = Some(tsv::parse_usize(1, v)?),
                Some(("final_delta", v)) => final_delta = Some(tsv::parse_f64(1, v)?),
                Some(("energy", v)) => energy = Some(tsv::parse_f64(1, v)?),
                _ => return Err(Error::parse(1, format!("bad metadata field `{field}`"))),
            }
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let n = n + 2;
            let f: Vec<&str> = line.split('\t').collect();
            let [i, _, _, csv] = f[..] else {
                return Err(Error::parse(n, "expected 4 tab-separated fields"));
            };
            if tsv::parse_usize(n, i)? != rows.len() {
                return Err(Error::parse(n, "vertex lines out of order"));
            }
            rows.push(tsv::parse_csv_f64(n, csv)?);
        }
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::parse(0, "ragged state rows"));
        }
        Ok(Self {
            state: LatentMatrix::from_rows(p, rows),
            iters: iters.ok_or_else(|| Error::parse(1, "missing iters"))?,
            final_delta: final_delta.ok_or_else(|| Error::parse(1, "missing final_delta"))?,
            energy: energy.ok_or_else(|| Error::parse(1, "missing energy"))?,
        })
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        Self::from_dump(&tsv::read(path)?).map_err(|e| e.in_file(path))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Energy of `state`: edge terms over unordered pairs plus dongle clamp terms.
pub fn energy(g: &AssociationGraph, state: &LatentMatrix) -> f64 {
    let edges: f64 = g
        .edges()
        .map(|(i, j, w)| w * squared_distance(state.row(i), state.row(j)))
        .sum();
    let clamps: f64 = (0..g.n())
        .filter(|&i| g.confidence()[i] > 0.0)
        .map(|i| g.confidence()[i] * squared_distance(state.row(i), g.prior().row(i)))
        .sum();
    edges + clamps
}

/// Runs the iterative schedule named in `cfg`.
pub fn propagate(g: &AssociationGraph, cfg: &PropagationConfig) -> Result<PropagationResult> {
    match cfg.schedule {
        Schedule::Sequential => SequentialSweep.propagate(g, cfg),
        Schedule::Synchronous => SynchronousSweep.propagate(g, cfg),
    }
}

/// Like [`propagate`], calling `observer(sweep, state, delta)` after every sweep.
pub fn propagate_observed(
    g: &AssociationGraph,
    cfg: &PropagationConfig,
    observer: &mut dyn FnMut(usize, &LatentMatrix, f64),
) -> Result<PropagationResult> {
    sweep::run(g, cfg, Some(observer))
}

/// Clamps rounding negatives to zero and renormalizes each row to sum 1.
fn settle_rows(state: &mut LatentMatrix) {
    let p = state.p();
    if p == 0 {
        return;
    }
    for row in state.as_mut_slice().chunks_exact_mut(p) {
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
}
