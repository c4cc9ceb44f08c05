#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pp_core::graph::{Edge, Link, LinkKind};
use pp_core::{build_extended_graph, ExtendedGraph, QueueDensityVector};

/// Random graph with `n` links: roughly a quarter are exits, the rest get one to
/// three successors with random positive ratios. Cycles are allowed.
pub fn random_graph(n: usize, seed: u64) -> ExtendedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut links = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for id in 0..n as u32 {
        let exit = id as usize == n - 1 || rng.random_bool(0.25);
        let kind = if exit {
            LinkKind::Exit
        } else if rng.random_bool(0.3) {
            LinkKind::Feeder
        } else {
            LinkKind::Internal
        };
        links.push(Link::new(id, 85.0, 1 + rng.random_range(0..3), kind));
        if exit {
            continue;
        }
        let k = rng.random_range(1..=3usize);
        let targets: BTreeSet<u32> = (0..k).map(|_| rng.random_range(0..n as u32)).collect();
        let w: Vec<f64> = targets.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = w.iter().sum();
        for (&to, wk) in targets.iter().zip(&w) {
            edges.push(Edge { from: id, to, ratio: wk / sum });
        }
    }
    build_extended_graph(links, &edges).unwrap()
}

pub fn random_q(n: usize, seed: u64) -> QueueDensityVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    // the supersink never holds vehicles
    v[n - 1] = 0.0;
    QueueDensityVector::new(v).unwrap()
}
