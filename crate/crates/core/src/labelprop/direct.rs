use nalgebra::DMatrix;

use super::{energy, PropagationConfig, PropagationResult, Propagator};
use crate::error::{Error, Result};
use crate::simgraph::{AssociationGraph, LatentMatrix};

pub const DENSE_SOLVE_LIMIT: usize = 2000;

/// Solves `(diag(c + W1) - W) Y = c * prior` directly by LU factorization.
///
/// Only vertices in components with positive total confidence take part; the
/// rest keep their initial state, since the system is singular there.
pub fn harmonic_solve(g: &AssociationGraph) -> Result<LatentMatrix> {
    let n = g.n();
    if n > DENSE_SOLVE_LIMIT {
        return Err(Error::GraphTooLarge {
            n,
            limit: DENSE_SOLVE_LIMIT,
        });
    }
    let p = g.p();
    let mut state = g.initial_state();
    let comp = g.components();
    let mut comp_conf = vec![0.0; n];
    for i in 0..n {
        comp_conf[comp[i]] += g.confidence()[i];
    }
    let active: Vec<usize> = (0..n).filter(|&i| comp_conf[comp[i]] > 0.0).collect();
    if active.is_empty() || p == 0 {
        return Ok(state);
    }
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in active.iter().enumerate() {
        slot[i] = k;
    }
    let m = active.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DMatrix::<f64>::zeros(m, p);
    for (k, &i) in active.iter().enumerate() {
        let c = g.confidence()[i];
        let mut diag = c;
        for (j, w) in g.neighbors(i) {
            diag += w;
            a[(k, slot[j])] -= w;
        }
        a[(k, k)] += diag;
        for (col, &pr) in g.prior().row(i).iter().enumerate() {
            b[(k, col)] = c * pr;
        }
    }
    let y = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidConfig("harmonic system is singular".into()))?;
    for (k, &i) in active.iter().enumerate() {
        for (col, v) in state.row_mut(i).iter_mut().enumerate() {
            *v = y[(k, col)];
        }
    }
    Ok(state)
}

/// Dense direct solve exposed as a propagator (small graphs only).
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectSolve;

impl Propagator for DirectSolve {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn propagate(&self, g: &AssociationGraph, _cfg: &PropagationConfig) -> Result<PropagationResult> {
        let state = harmonic_solve(g)?;
        let energy = energy(g, &state);
        Ok(PropagationResult {
            state,
            iters: 1,
            final_delta: 0.0,
            energy,
        })
    }
}
