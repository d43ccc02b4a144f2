//! Seeded synthetic connection records with clustered stations and
//! autocorrelated daily activity, for demos and tests.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use super::aggregate::DAY_SECONDS;
use super::ingest::ConnectionRecord;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_stations: usize,
    pub n_hotspots: usize,
    pub n_users: usize,
    pub n_days: usize,
    /// Mean connections per station per day at unit activity.
    pub daily_connections: f64,
    pub mean_duration_secs: f64,
    /// Day-to-day autocorrelation of hotspot log activity.
    pub rho: f64,
    /// Epoch seconds of the first day.
    pub start: f64,
    pub lon0: f64,
    pub lat0: f64,
    /// Half-width in degrees of the square holding the hotspots.
    pub extent_deg: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_stations: 300,
            n_hotspots: 12,
            n_users: 2000,
            n_days: 60,
            daily_connections: 5.0,
            mean_duration_secs: 900.0,
            rho: 0.7,
            // 2014-06-01T00:00:00Z
            start: 1_401_580_800.0,
            lon0: 121.47,
            lat0: 31.23,
            extent_deg: 0.15,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let ok = self.n_stations > 0
            && self.n_hotspots > 0
            && self.n_users > 0
            && self.n_days > 0
            && self.daily_connections > 0.0
            && self.mean_duration_secs > 0.0
            && self.rho.abs() < 1.0
            && self.extent_deg > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid synthetic spec {self:?}")))
        }
    }
}

/// Records sorted by start time. Stations scatter around hotspots; each
/// hotspot's log activity follows an AR(1) across days with a weekday cycle.
pub fn synthetic_records(spec: &SyntheticSpec, seed: u64) -> Result<Vec<ConnectionRecord>> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let e = spec.extent_deg;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let hotspots: Vec<(f64, f64, f64)> = (0..spec.n_hotspots)
        .map(|_| {
            (
                spec.lon0 + rng.random_range(-e..e),
                spec.lat0 + rng.random_range(-e..e),
                0.8 * unit.sample(&mut rng),
            )
        })
        .collect();
    let stations: Vec<(usize, f64, f64)> = (0..spec.n_stations)
        .map(|_| {
            let h = rng.random_range(0..spec.n_hotspots);
            let (lon, lat, _) = hotspots[h];
            (h, lon + 0.1 * e * unit.sample(&mut rng), lat + 0.1 * e * unit.sample(&mut rng))
        })
        .collect();
    let innov = (1.0 - spec.rho * spec.rho).sqrt() * 0.4;
    let mut level: Vec<f64> = (0..spec.n_hotspots).map(|_| 0.4 * unit.sample(&mut rng)).collect();
    let duration = Exp::new(1.0 / spec.mean_duration_secs).map_err(|e| Error::invalid(e.to_string()))?;
    let mut records = Vec::new();
    for day in 0..spec.n_days {
        if day > 0 {
            for z in &mut level {
                *z = spec.rho * *z + innov * unit.sample(&mut rng);
            }
        }
        let weekly = 0.2 * (2.0 * std::f64::consts::PI * day as f64 / 7.0).sin();
        let day_start = spec.start + day as f64 * DAY_SECONDS;
        for (s, &(h, lon, lat)) in stations.iter().enumerate() {
            let rate = spec.daily_connections * (hotspots[h].2 + level[h] + weekly).exp();
            let count = Poisson::new(rate).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut rng) as usize;
            for _ in 0..count {
                let start = (day_start + rng.random::<f64>() * DAY_SECONDS).round();
                let end = start + duration.sample(&mut rng).round();
                records.push(ConnectionRecord {
                    user_id: format!("u{}", rng.random_range(0..spec.n_users)),
                    station_id: format!("s{s}"),
                    lon,
                    lat,
                    start,
                    end,
                });
            }
        }
    }
    records.sort_by(|a, b| a.start.total_cmp(&b.start));
    Ok(records)
}
