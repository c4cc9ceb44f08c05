//! Splitting one homogeneous inflow over feeders by softmax of their
//! pressures, for a range of sensitivities, next to the N-MP split.

use pp_core::control::{nmp_redistribute, softmax_redistribute, surrogate_homogeneous, SurrogateParams};
use pp_core::PerimeterPressureVector;

fn main() -> pp_core::Result<()> {
    let params = SurrogateParams::default();
    let total = surrogate_homogeneous(0.09, 40.0, &params)?;
    println!("surrogate inflow at density 0.09: {total:.1} veh per cycle\n");

    let pressures = PerimeterPressureVector {
        feeders: vec![10, 11, 12, 13],
        values: vec![0.05, -0.40, -1.20, 0.00],
    };
    for s in [0.0, 1.0, 4.0, 8.0, 32.0] {
        let a = softmax_redistribute(total, &pressures, s)?;
        let cells: Vec<String> = a.inflow.iter().map(|x| format!("{x:6.1}")).collect();
        println!("s = {s:>4}: {}", cells.join(" "));
    }

    let clusters = [0.04, 0.12, 0.30, 0.08];
    let a = nmp_redistribute(total, &pressures.feeders, &clusters, 0.15, 0.1, 0.01)?;
    let cells: Vec<String> = a.inflow.iter().map(|x| format!("{x:6.1}")).collect();
    println!("n-mp    : {}", cells.join(" "));
    Ok(())
}
