//! Heterogeneous origin-destination demand.
//!
//! Four streams share one peaked profile of `n_intervals` equal intervals with
//! weights `r^0, r^1, …, r^peak, …, r^1, r^0`:
//!
//! * external upper: upper feeders to upper subregion, `N12 / 2` trips from `t = 0`;
//! * external lower: lower feeders to lower subregion, the same profile delayed by `τ`;
//! * internal upper: `α_upper · N22` trips from `t = 0`;
//! * internal lower: `(1 − α_upper) · N22` trips delayed by `τ`.
//!
//! No trip ever leaves the protected region or runs between feeders.

use std::io::Write;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LinkId;
use crate::network::{DemandGroups, Subregion};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandParams {
    /// External trips.
    pub n12: f64,
    /// Internal trips.
    pub n22: f64,
    /// Delay of the lower-subregion profiles, hours.
    pub tau_hours: f64,
    /// Share of internal trips generated in the upper subregion.
    pub alpha_upper: f64,
    /// Peakedness of the interval weights.
    pub r: f64,
    /// Demand horizon, seconds.
    pub horizon_s: f64,
    pub n_intervals: usize,
    pub interval_s: f64,
}

impl Default for DemandParams {
    fn default() -> Self {
        DemandParams {
            n12: 6000.0,
            n22: 11000.0,
            tau_hours: 0.75,
            alpha_upper: 0.5,
            r: 2.0,
            horizon_s: 9.0 * 900.0 + 3600.0,
            n_intervals: 9,
            interval_s: 900.0,
        }
    }
}

impl DemandParams {
    pub fn tau_s(&self) -> f64 {
        self.tau_hours * 3600.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    ExternalUpper,
    ExternalLower,
    InternalUpper,
    InternalLower,
}

impl Stream {
    pub const ALL: [Stream; 4] = [
        Stream::ExternalUpper,
        Stream::ExternalLower,
        Stream::InternalUpper,
        Stream::InternalLower,
    ];

    pub fn region(self) -> Subregion {
        match self {
            Stream::ExternalUpper | Stream::InternalUpper => Subregion::Upper,
            Stream::ExternalLower | Stream::InternalLower => Subregion::Lower,
        }
    }

    pub fn is_external(self) -> bool {
        matches!(self, Stream::ExternalUpper | Stream::ExternalLower)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
    /// Vehicles per hour.
    pub rate_vph: f64,
}

impl Interval {
    pub fn volume(&self) -> f64 {
        self.rate_vph * (self.end_s - self.start_s) / 3600.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamProfile {
    pub stream: Stream,
    pub intervals: Vec<Interval>,
}

impl StreamProfile {
    /// Piecewise-constant rate at time `t`, vehicles per hour.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.intervals
            .iter()
            .find(|iv| iv.start_s <= t && t < iv.end_s)
            .map_or(0.0, |iv| iv.rate_vph)
    }

    pub fn total(&self) -> f64 {
        self.intervals.iter().map(Interval::volume).sum()
    }

    /// Expected trips departing in `[t0, t1)`.
    pub fn volume_between(&self, t0: f64, t1: f64) -> f64 {
        self.intervals
            .iter()
            .map(|iv| {
                let lo = iv.start_s.max(t0);
                let hi = iv.end_s.min(t1);
                if hi > lo {
                    iv.rate_vph * (hi - lo) / 3600.0
                } else {
                    0.0
                }
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub params: DemandParams,
    pub horizon_s: f64,
    pub streams: Vec<StreamProfile>,
}

impl DemandProfile {
    pub fn stream(&self, s: Stream) -> &StreamProfile {
        self.streams
            .iter()
            .find(|p| p.stream == s)
            .expect("every stream is present")
    }

    pub fn rate_at(&self, s: Stream, t: f64) -> f64 {
        self.stream(s).rate_at(t)
    }

    /// Expected trips of all streams departing in `[t0, t1)`.
    pub fn volume_between(&self, t0: f64, t1: f64) -> f64 {
        self.streams.iter().map(|s| s.volume_between(t0, t1)).sum()
    }

    pub fn external_total(&self) -> f64 {
        self.stream(Stream::ExternalUpper).total() + self.stream(Stream::ExternalLower).total()
    }

    pub fn internal_total(&self) -> f64 {
        self.stream(Stream::InternalUpper).total() + self.stream(Stream::InternalLower).total()
    }
}

/// `[r^0, r^1, …, r^k, …, r^1, r^0]` for `n` intervals.
pub fn peak_weights(r: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| r.powi(k.min(n - 1 - k) as i32))
        .collect()
}

pub fn build_profile(params: &DemandParams) -> Result<DemandProfile> {
    let p = params;
    if !(p.alpha_upper > 0.0 && p.alpha_upper < 1.0) {
        return Err(Error::Param(format!("alpha_upper {} must lie in (0, 1)", p.alpha_upper)));
    }
    let tau = p.tau_s();
    if !(tau >= 0.0) || tau > p.horizon_s {
        return Err(Error::Param(format!(
            "tau {tau} s must lie in [0, horizon {} s]",
            p.horizon_s
        )));
    }
    if !(p.r > 0.0) {
        return Err(Error::Param(format!("peakedness r {} must be positive", p.r)));
    }
    if p.n_intervals == 0 || !(p.interval_s > 0.0) {
        return Err(Error::Param("need at least one interval of positive length".into()));
    }
    if !(p.n12 >= 0.0 && p.n22 >= 0.0) {
        return Err(Error::Param("trip totals must be non-negative".into()));
    }

    let weights = peak_weights(p.r, p.n_intervals);
    let wsum: f64 = weights.iter().sum();
    let volumes = [
        (Stream::ExternalUpper, p.n12 / 2.0, 0.0),
        (Stream::ExternalLower, p.n12 / 2.0, tau),
        (Stream::InternalUpper, p.n22 * p.alpha_upper, 0.0),
        (Stream::InternalLower, p.n22 * (1.0 - p.alpha_upper), tau),
    ];
    let streams = volumes
        .into_iter()
        .map(|(stream, volume, shift)| {
            let mut intervals = Vec::with_capacity(p.n_intervals);
            for (k, w) in weights.iter().enumerate() {
                let start = shift + k as f64 * p.interval_s;
                let end = start + p.interval_s;
                let rate = volume * w / wsum * 3600.0 / p.interval_s;
                if start >= p.horizon_s {
                    warn!("{stream:?} interval {k} starts after the horizon; dropped");
                    continue;
                }
                if end > p.horizon_s {
                    warn!("{stream:?} interval {k} truncated at the horizon");
                }
                intervals.push(Interval {
                    start_s: start,
                    end_s: end.min(p.horizon_s),
                    rate_vph: rate,
                });
            }
            StreamProfile { stream, intervals }
        })
        .collect();
    Ok(DemandProfile {
        params: *p,
        horizon_s: p.horizon_s,
        streams,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub t_depart_s: f64,
    pub origin_id: LinkId,
    pub dest_id: LinkId,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TripList {
    pub trips: Vec<Trip>,
}

impl TripList {
    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.trips {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn origins(groups: &DemandGroups, s: Stream) -> Result<&[LinkId]> {
    let (pool, name) = match s {
        Stream::ExternalUpper => (&groups.upper_feeders, "upper feeders"),
        Stream::ExternalLower => (&groups.lower_feeders, "lower feeders"),
        Stream::InternalUpper => (&groups.upper_sources, "upper sources"),
        Stream::InternalLower => (&groups.lower_sources, "lower sources"),
    };
    if pool.is_empty() {
        return Err(Error::EmptyGroup(name));
    }
    Ok(pool)
}

fn destinations(groups: &DemandGroups, s: Stream) -> Result<&[LinkId]> {
    let (pool, name) = match s.region() {
        Subregion::Upper => (&groups.upper_sinks, "upper sinks"),
        Subregion::Lower => (&groups.lower_sinks, "lower sinks"),
    };
    if pool.is_empty() {
        return Err(Error::EmptyGroup(name));
    }
    Ok(pool)
}

/// Draws a trip list: `round(volume)` trips per interval, departures uniform
/// inside the interval, endpoints uniform inside their groups.
pub fn sample_trips(profile: &DemandProfile, groups: &DemandGroups, seed: u64) -> Result<TripList> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trips = Vec::new();
    for sp in &profile.streams {
        let planned: f64 = sp.total();
        if planned == 0.0 {
            continue;
        }
        let from = origins(groups, sp.stream)?;
        let to = destinations(groups, sp.stream)?;
        for iv in &sp.intervals {
            let n = iv.volume().round() as usize;
            for _ in 0..n {
                let t = iv.start_s + rng.random::<f64>() * (iv.end_s - iv.start_s);
                let o = from[rng.random_range(0..from.len())];
                let d = to[rng.random_range(0..to.len())];
                trips.push(Trip {
                    t_depart_s: t,
                    origin_id: o,
                    dest_id: d,
                });
            }
        }
    }
    trips.sort_by(|a, b| {
        a.t_depart_s
            .total_cmp(&b.t_depart_s)
            .then(a.origin_id.cmp(&b.origin_id))
            .then(a.dest_id.cmp(&b.dest_id))
    });
    Ok(TripList { trips })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_grid_network, GridParams};

    #[test]
    fn weights_for_r_two() {
        let w = peak_weights(2.0, 9);
        assert_eq!(w, vec![1.0, 2.0, 4.0, 8.0, 16.0, 8.0, 4.0, 2.0, 1.0]);
        let sum: f64 = w.iter().sum();
        assert_eq!(sum, 46.0);
        assert_eq!(w[4] / sum, 16.0 / 46.0);
    }

    #[test]
    fn symmetric_case_has_identical_halves() {
        let p = build_profile(&DemandParams {
            tau_hours: 0.0,
            alpha_upper: 0.5,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(
            p.stream(Stream::ExternalUpper).intervals,
            p.stream(Stream::ExternalLower).intervals
        );
        assert_eq!(
            p.stream(Stream::InternalUpper).intervals,
            p.stream(Stream::InternalLower).intervals
        );
    }

    #[test]
    fn totals_integrate_to_trip_counts() {
        let p = build_profile(&DemandParams::default()).unwrap();
        assert!((p.external_total() - 6000.0).abs() < 1e-9);
        assert!((p.internal_total() - 11000.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        for bad in [
            DemandParams { alpha_upper: 0.0, ..Default::default() },
            DemandParams { alpha_upper: 1.0, ..Default::default() },
            DemandParams { tau_hours: 10.0, ..Default::default() },
            DemandParams { tau_hours: -0.1, ..Default::default() },
            DemandParams { r: 0.0, ..Default::default() },
        ] {
            assert!(matches!(build_profile(&bad), Err(Error::Param(_))));
        }
    }

    #[test]
    fn truncation_at_the_horizon() {
        let p = build_profile(&DemandParams {
            horizon_s: 8100.0,
            tau_hours: 0.5,
            ..Default::default()
        })
        .unwrap();
        let lower = p.stream(Stream::ExternalLower);
        assert_eq!(lower.intervals.last().unwrap().end_s, 8100.0);
        assert!(lower.total() < 3000.0);
        assert!((p.stream(Stream::ExternalUpper).total() - 3000.0).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_gives_empty_trip_list() {
        let net = build_grid_network(GridParams::default()).unwrap();
        let p = build_profile(&DemandParams {
            n12: 0.0,
            n22: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert!(sample_trips(&p, &net.groups, 3).unwrap().is_empty());
    }

    #[test]
    fn empty_group_is_reported() {
        let p = build_profile(&DemandParams::default()).unwrap();
        let groups = DemandGroups::default();
        assert!(matches!(sample_trips(&p, &groups, 1), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn sampling_is_seeded_and_sorted() {
        let net = build_grid_network(GridParams::default()).unwrap();
        let p = build_profile(&DemandParams::default()).unwrap();
        let a = sample_trips(&p, &net.groups, 11).unwrap();
        let b = sample_trips(&p, &net.groups, 11).unwrap();
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(a.trips.windows(2).all(|w| w[0].t_depart_s <= w[1].t_depart_s));
        let c = sample_trips(&p, &net.groups, 12).unwrap();
        assert_ne!(a, c);
        let header = String::from_utf8(ca).unwrap();
        assert!(header.starts_with("t_depart_s,origin_id,dest_id\n"));
    }
}
