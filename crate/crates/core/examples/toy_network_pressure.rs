//! Multi-hop pressure on the eight-link toy network, checked against the
//! walk-enumeration oracle.

use pp_core::graph::{downstream_set, transition_matrix};
use pp_core::pressure::{multi_hop_pressures, scalar_pressure_oracle};
use pp_core::toy::toy_network;
use pp_core::QueueDensityVector;

fn main() -> pp_core::Result<()> {
    let graph = toy_network();
    let matrix = transition_matrix(&graph);
    let q = QueueDensityVector::new(vec![0.2, 0.9, 0.1, 0.5, 0.7, 0.3, 1.0, 0.4, 0.0])?;

    for h in 0..=4 {
        let set: Vec<String> = downstream_set(&graph, 0u32, h)?.iter().map(|v| v.to_string()).collect();
        println!("N(0, {h}) = {{{}}}", set.join(", "));
    }

    println!("\n hop   link 0   link 1   link 3   oracle(0)");
    for p in multi_hop_pressures(&matrix, &q, 6)? {
        let at = |id: u32| matrix.index_of(id).map(|i| p.values[i]);
        let oracle = scalar_pressure_oracle(&graph, &q, 0u32, p.hop)?;
        println!("{:4} {:8.3} {:8.3} {:8.3} {:11.3}", p.hop, at(0)?, at(1)?, at(3)?, oracle);
    }
    Ok(())
}
