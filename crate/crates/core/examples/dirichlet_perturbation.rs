//! Perturbed turning ratios at several perturbation levels.

use pp_core::perturbation::{perturb_turning_ratios, PerturbationSpec};
use pp_core::toy::toy_network;

fn main() -> pp_core::Result<()> {
    let graph = toy_network();
    let row = graph.index_of(4u32)?;
    println!("original ratios of link 4: {:?}", graph.successors(row));
    for alpha in [0.0, 0.5, 1.0] {
        for seed in 1..=3 {
            let g = perturb_turning_ratios(&graph, &PerturbationSpec { alpha, m: 100.0, seed })?;
            let r: Vec<String> = g.successors(row).iter().map(|&(_, r)| format!("{r:.3}")).collect();
            println!("alpha {alpha:.1} seed {seed}: [{}]", r.join(", "));
        }
    }
    Ok(())
}
