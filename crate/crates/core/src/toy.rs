//! Eight-link toy network with fabricated turning ratios.
//!
//! ```text
//!   0 ──► 4 ──► 5 ──► 7 ──► Ω
//!   1 ──┘  └──► 6 ──┘
//!   1 ──► 2 ──► 6
//!   3 ──► 5, 6
//! ```

use crate::graph::{build_extended_graph, Edge, ExtendedGraph, Link, LinkKind};

pub const TOY_EDGES: [(u32, u32, f64); 10] = [
    (0, 4, 1.0),
    (1, 4, 0.3),
    (1, 2, 0.7),
    (2, 6, 1.0),
    (3, 5, 0.5),
    (3, 6, 0.5),
    (4, 5, 0.6),
    (4, 6, 0.4),
    (5, 7, 1.0),
    (6, 7, 1.0),
];

pub fn toy_network() -> ExtendedGraph {
    let links = (0..8)
        .map(|id| {
            let kind = match id {
                0 | 1 | 3 => LinkKind::Feeder,
                7 => LinkKind::Exit,
                _ => LinkKind::Internal,
            };
            Link::new(id, 85.0, 2, kind)
        })
        .collect();
    let edges: Vec<Edge> = TOY_EDGES
        .iter()
        .map(|&(from, to, ratio)| Edge { from, to, ratio })
        .collect();
    build_extended_graph(links, &edges).expect("toy network is valid")
}
