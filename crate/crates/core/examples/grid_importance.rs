//! How far a feeder "sees": accumulative visiting probability by hop distance
//! on the 6×6 grid, with uniform and routing-derived turning ratios.

use pp_core::experiments::{importance_by_distance, importance_map, ExperimentConfig, RatioSource};

fn main() -> pp_core::Result<()> {
    let cfg = ExperimentConfig::default();
    let feeder = 5;
    for (name, source) in [("uniform", RatioSource::Uniform), ("assigned", RatioSource::Assigned)] {
        let rows = importance_map(&cfg, feeder, 10, source)?;
        let by_d = importance_by_distance(&rows, 10);
        let cells: Vec<String> = by_d.iter().map(|x| format!("{x:.3}")).collect();
        println!("{name:>8}: {}", cells.join(" "));
    }
    Ok(())
}
