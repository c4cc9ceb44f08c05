//! Mean TTS of every controller in the roster at desk scale; writes the CSVs
//! to `results/example`.

use std::path::Path;

use pp_core::experiments::{compare_controllers, roster, ExperimentConfig, Scale};

fn main() -> pp_core::Result<()> {
    let cfg = ExperimentConfig::for_scale(Scale::Desk);
    let out = compare_controllers(&cfg, &roster(&cfg))?;
    out.write(Path::new("results/example"))?;
    for r in &out.summary {
        println!(
            "{:16} {:8.1} h  (inside {:7.1}, outside {:7.1})",
            r.controller, r.tts_total_mean_h, r.tts_inside_mean_h, r.tts_outside_mean_h
        );
    }
    Ok(())
}
