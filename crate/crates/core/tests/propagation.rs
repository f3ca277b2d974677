mod common;

use coassoc::labelprop::{
    energy, harmonic_solve, propagate, propagate_observed, PropagationConfig, PropagatorRegistry, Schedule,
};
use coassoc::simgraph::{AssociationGraph, LatentMatrix};
use coassoc::synth::{random_graph, RandomGraphConfig};
use proptest::prelude::*;

fn tight(schedule: Schedule) -> PropagationConfig {
    PropagationConfig {
        tolerance: 1e-12,
        max_iters: 100_000,
        schedule,
    }
}

/// Row sums and, per connected component, every coordinate within the range
/// of the clamped priors of that component.
fn check_simplex_and_bounds(g: &AssociationGraph, y: &LatentMatrix) -> Result<(), String> {
    let comp = g.components();
    let p = g.p();
    let mut lo = vec![vec![f64::INFINITY; p]; g.n()];
    let mut hi = vec![vec![f64::NEG_INFINITY; p]; g.n()];
    for i in 0..g.n() {
        if g.confidence()[i] > 0.0 {
            for k in 0..p {
                lo[comp[i]][k] = lo[comp[i]][k].min(g.prior().row(i)[k]);
                hi[comp[i]][k] = hi[comp[i]][k].max(g.prior().row(i)[k]);
            }
        }
    }
    for i in 0..g.n() {
        let s: f64 = y.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(format!("row {i} sums to {s}"));
        }
        let c = comp[i];
        if lo[c][0].is_finite() {
            for k in 0..p {
                let v = y.row(i)[k];
                if v < lo[c][k] - 1e-9 || v > hi[c][k] + 1e-9 {
                    return Err(format!("y[{i}][{k}] = {v} outside [{}, {}]", lo[c][k], hi[c][k]));
                }
            }
        }
    }
    Ok(())
}

#[test]
fn merged_dongles_match_explicit_dongle_graph() {
    for seed in 0..20 {
        let cfg = RandomGraphConfig {
            n: 5 + (seed as usize % 16),
            p: 2 + (seed as usize % 5),
            ..RandomGraphConfig::default()
        };
        let g = random_graph(&cfg, 1000 + seed);
        let merged = propagate(&g, &tight(Schedule::Sequential)).unwrap().state;
        let explicit = common::explicit_dongle_solution(&g);
        let d = merged.max_abs_diff(&explicit);
        assert!(d < 1e-6, "seed {seed}: {d}");
    }
}

#[test]
fn explicit_dongle_reference_on_hand_fixture() {
    // a - b, a clamped to (1,0) with c = 1, b unclamped: b copies a.
    let g = AssociationGraph::from_parts(
        vec![(0, 1, 3.0)],
        LatentMatrix::from_rows(2, vec![vec![1.0, 0.0], vec![0.5, 0.5]]),
        vec![1.0, 0.0],
    )
    .unwrap();
    let y = common::explicit_dongle_solution(&g);
    assert!((y.row(1)[0] - 1.0).abs() < 1e-12);
    // two clamps pulling apart: y0 = (1*e0 + 1*y1)/2, y1 = (1*e1 + 1*y0)/2 -> y0 = (2/3, 1/3)
    let g = AssociationGraph::from_parts(
        vec![(0, 1, 1.0)],
        LatentMatrix::from_rows(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        vec![1.0, 1.0],
    )
    .unwrap();
    let y = common::explicit_dongle_solution(&g);
    assert!((y.row(0)[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((y.row(1)[0] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn every_registered_propagator_agrees_with_the_direct_solve() {
    let reg = PropagatorRegistry::with_defaults();
    for seed in 0..10 {
        let g = random_graph(&RandomGraphConfig::default(), seed);
        let oracle = harmonic_solve(&g).unwrap();
        for name in reg.names() {
            let y = reg.get(name).unwrap().propagate(&g, &tight(Schedule::Sequential)).unwrap().state;
            assert!(y.max_abs_diff(&oracle) < 1e-8, "{name} seed {seed}");
            check_simplex_and_bounds(&g, &y).unwrap();
        }
    }
}

#[test]
fn sequential_energy_never_increases() {
    for seed in 0..10 {
        let g = random_graph(&RandomGraphConfig::default(), 500 + seed);
        let mut prev = energy(&g, &g.initial_state());
        propagate_observed(&g, &tight(Schedule::Sequential), &mut |_, y, _| {
            let e = energy(&g, y);
            assert!(e <= prev + 1e-12, "seed {seed}: {e} > {prev}");
            prev = e;
        })
        .unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn propagation_stays_on_simplex_within_bounds(
        seed in 0u64..10_000,
        n in 2usize..40,
        p in 1usize..7,
        edge_prob in 0.02f64..0.5,
        synchronous in any::<bool>(),
    ) {
        let g = random_graph(&RandomGraphConfig { n, p, edge_prob, ..RandomGraphConfig::default() }, seed);
        let schedule = if synchronous { Schedule::Synchronous } else { Schedule::Sequential };
        let res = propagate(&g, &tight(schedule)).unwrap();
        let bounds = check_simplex_and_bounds(&g, &res.state);
        prop_assert!(bounds.is_ok(), "{:?}", bounds);
        prop_assert!(res.energy <= energy(&g, &g.initial_state()) + 1e-12);
    }
}
