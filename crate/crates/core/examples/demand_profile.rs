//! Piecewise-constant demand for the two subregions and a sampled trip list.

use pp_core::demand::{build_profile, sample_trips, DemandParams, Stream};
use pp_core::network::{build_grid_network, GridParams};

fn main() -> pp_core::Result<()> {
    let params = DemandParams {
        tau_hours: 0.5,
        alpha_upper: 0.7,
        ..DemandParams::default()
    };
    let profile = build_profile(&params)?;
    for s in [Stream::ExternalUpper, Stream::ExternalLower, Stream::InternalUpper, Stream::InternalLower] {
        let sp = profile.stream(s);
        let rates: Vec<String> = sp.intervals.iter().map(|i| format!("{:5.0}", i.rate_vph)).collect();
        println!("{s:?}: {:6.0} trips, veh/h {}", sp.total(), rates.join(" "));
    }

    let net = build_grid_network(GridParams::default())?;
    let trips = sample_trips(&profile, &net.groups, 1)?;
    println!("\nsampled {} trips; first three:", trips.len());
    for t in trips.trips.iter().take(3) {
        println!("  t={:7.1} s  {} -> {}", t.t_depart_s, t.origin_id, t.dest_id);
    }
    Ok(())
}
