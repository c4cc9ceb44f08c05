//! One run of the point-queue simulator on the 6×6 grid with the softmax
//! controller, printing the completion curve.

use pp_core::experiments::{ControllerSpec, ExperimentConfig, Prepared};
use pp_core::sim::SimConfig;

fn main() -> pp_core::Result<()> {
    let cfg = ExperimentConfig::default();
    let prepared = Prepared::new(cfg.grid(), &cfg.demand_params(), 1)?;
    println!(
        "{} links, {} feeders, {} trips",
        prepared.network.links.len(),
        prepared.network.feeders.len(),
        prepared.trips.len()
    );

    let controller = ControllerSpec::Softmax { hop: 8, sensitivity: 8.0 };
    let m = prepared.run(controller, cfg.surrogate(), None, SimConfig::default())?;
    for s in m.samples.iter().step_by(15) {
        println!(
            "t={:6.0} s  completed {:6}  inside {:5}  outside {:5}  density {:.3}",
            s.time_s, s.completed, s.inside, s.outside, s.region_density
        );
    }
    println!(
        "TTS {:.1} h (inside {:.1}, outside {:.1}); {}/{} trips done by {:.0} s",
        m.tts_total_h, m.tts_inside_h, m.tts_outside_h, m.trips_completed, m.trips_total, m.end_time_s
    );
    Ok(())
}
