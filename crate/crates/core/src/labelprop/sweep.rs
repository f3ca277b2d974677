use rayon::prelude::*;

use super::{energy, settle_rows, PropagationConfig, PropagationResult, Propagator, Schedule};
use crate::error::Result;
use crate::simgraph::{AssociationGraph, LatentMatrix};

/// Weighted average of the dongle and the neighbors, read from `src`, into `out`.
/// Returns false when the vertex has no pull at all.
#[inline]
fn vertex_update(g: &AssociationGraph, j: usize, src: &[f64], p: usize, out: &mut [f64]) -> bool {
    let c = g.confidence()[j];
    let mut total = c;
    if c > 0.0 {
        for (o, &pr) in out.iter_mut().zip(g.prior().row(j)) {
            *o = c * pr;
        }
    } else {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    for (i, w) in g.neighbors(j) {
        total += w;
        for (o, &y) in out.iter_mut().zip(&src[i * p..(i + 1) * p]) {
            *o += w * y;
        }
    }
    if total <= 0.0 {
        return false;
    }
    out.iter_mut().for_each(|o| *o /= total);
    true
}

fn sequential_sweep(g: &AssociationGraph, state: &mut LatentMatrix, scratch: &mut [f64]) -> f64 {
    let p = state.p();
    let mut delta = 0.0f64;
    for j in 0..g.n() {
        if !vertex_update(g, j, state.as_slice(), p, scratch) {
            continue;
        }
        let row = state.row_mut(j);
        for (y, &new) in row.iter_mut().zip(scratch.iter()) {
            delta = delta.max((new - *y).abs());
            *y = new;
        }
    }
    delta
}

fn synchronous_sweep(g: &AssociationGraph, prev: &LatentMatrix, next: &mut LatentMatrix) -> f64 {
    let p = prev.p();
    let src = prev.as_slice();
    next.as_mut_slice()
        .par_chunks_mut(p)
        .enumerate()
        .map(|(j, out)| {
            if !vertex_update(g, j, src, p, out) {
                out.copy_from_slice(&src[j * p..(j + 1) * p]);
                return 0.0;
            }
            out.iter()
                .zip(&src[j * p..(j + 1) * p])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

pub(super) fn run(
    g: &AssociationGraph,
    cfg: &PropagationConfig,
    mut observer: Option<&mut dyn FnMut(usize, &LatentMatrix, f64)>,
) -> Result<PropagationResult> {
    cfg.validate()?;
    let p = g.p();
    let mut state = g.initial_state();
    let mut iters = 0;
    let mut final_delta = 0.0;
    if g.n() > 0 && p > 0 {
        let mut scratch = vec![0.0; p];
        let mut next = match cfg.schedule {
            Schedule::Synchronous => Some(state.clone()),
            Schedule::Sequential => None,
        };
        while iters < cfg.max_iters {
            final_delta = match next.as_mut() {
                None => sequential_sweep(g, &mut state, &mut scratch),
                Some(buf) => {
                    let d = synchronous_sweep(g, &state, buf);
                    std::mem::swap(&mut state, buf);
                    d
                }
            };
            iters += 1;
            if let Some(obs) = observer.as_mut() {
                obs(iters, &state, final_delta);
            }
            if final_delta < cfg.tolerance {
                break;
            }
        }
    }
    settle_rows(&mut state);
    let energy = energy(g, &state);
    Ok(PropagationResult {
        state,
        iters,
        final_delta,
        energy,
    })
}

/// In-place sweeps in vertex order; each update is the exact coordinate
/// minimizer of the energy, so the energy never rises between sweeps.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialSweep;

impl Propagator for SequentialSweep {
    fn name(&self) -> &'static str {
        Schedule::Sequential.name()
    }

    fn propagate(&self, g: &AssociationGraph, cfg: &PropagationConfig) -> Result<PropagationResult> {
        let cfg = PropagationConfig {
            schedule: Schedule::Sequential,
            ..cfg.clone()
        };
        run(g, &cfg, None)
    }
}

/// Double-buffered sweeps, parallel over vertices.
#[derive(Debug, Clone, Copy, Default)]
pub struct SynchronousSweep;

impl Propagator for SynchronousSweep {
    fn name(&self) -> &'static str {
        Schedule::Synchronous.name()
    }

    fn propagate(&self, g: &AssociationGraph, cfg: &PropagationConfig) -> Result<PropagationResult> {
        let cfg = PropagationConfig {
            schedule: Schedule::Synchronous,
            ..cfg.clone()
        };
        run(g, &cfg, None)
    }
}
