//! Connection-record CSV: `user_id,station_id,lon,lat,start_iso8601,end_iso8601`.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::kernel::SiteGrid;

const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionRecord {
    pub user_id: String,
    pub station_id: String,
    pub lon: f64,
    pub lat: f64,
    /// Seconds since the Unix epoch.
    pub start: f64,
    pub end: f64,
}

impl ConnectionRecord {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// A skipped input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub reason: String,
}

/// Equirectangular projection about a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub lon0: f64,
    pub lat0: f64,
}

impl Projection {
    /// Planar `(x, y)` in meters.
    pub fn project(&self, lon: f64, lat: f64) -> [f64; 2] {
        let k = std::f64::consts::PI / 180.0;
        [
            EARTH_RADIUS_M * (lon - self.lon0) * k * (self.lat0 * k).cos(),
            EARTH_RADIUS_M * (lat - self.lat0) * k,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<ConnectionRecord>,
    /// Stations in order of first appearance, projected to meters.
    pub stations: SiteGrid,
    pub projection: Projection,
    pub rejected: Vec<Rejected>,
}

impl Ingested {
    pub fn unique_users(&self) -> usize {
        let mut users: Vec<&str> = self.records.iter().map(|r| r.user_id.as_str()).collect();
        users.sort_unstable();
        users.dedup();
        users.len()
    }
}

/// Parses RFC 3339 timestamps, or naive `YYYY-MM-DD[T ]HH:MM:SS[.f]` taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<f64> {
    let s = s.trim();
    let to_secs = |dt: DateTime<Utc>| dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9;
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(to_secs(dt.with_timezone(&Utc)));
    }
    ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y/%m/%d %H:%M:%S%.f", "%Y/%m/%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| to_secs(n.and_utc()))
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<ConnectionRecord, String> {
    if rec.len() != 6 {
        return Err(format!("expected 6 fields, found {}", rec.len()));
    }
    let text = |k: usize, name: &str| {
        let v = rec[k].trim();
        if v.is_empty() {
            Err(format!("empty {name}"))
        } else {
            Ok(v.to_string())
        }
    };
    let number = |k: usize, name: &str| -> std::result::Result<f64, String> {
        rec[k]
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("{name} {:?} is not a number", &rec[k]))
    };
    let user_id = text(0, "user_id")?;
    let station_id = text(1, "station_id")?;
    let lon = number(2, "lon")?;
    let lat = number(3, "lat")?;
    if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return Err(format!("coordinates ({lon}, {lat}) out of range"));
    }
    let start = parse_timestamp(&rec[4]).ok_or_else(|| format!("unparseable start {:?}", &rec[4]))?;
    let end = parse_timestamp(&rec[5]).ok_or_else(|| format!("unparseable end {:?}", &rec[5]))?;
    if end < start {
        return Err("end precedes start".to_string());
    }
    Ok(ConnectionRecord {
        user_id,
        station_id,
        lon,
        lat,
        start,
        end,
    })
}

/// Reads records, skipping malformed rows with a reason. Stations keep the
/// coordinates of their first record and are projected about `projection`,
/// or about the mean station position when `None`.
pub fn ingest<R: Read>(input: R, projection: Option<Projection>) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut station_index: HashMap<String, usize> = HashMap::new();
    let mut station_ll: Vec<(String, f64, f64)> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row) {
            Ok(r) => {
                if !station_index.contains_key(&r.station_id) {
                    station_index.insert(r.station_id.clone(), station_ll.len());
                    station_ll.push((r.station_id.clone(), r.lon, r.lat));
                }
                records.push(r);
            }
            Err(reason) => {
                log::debug!("line {line} rejected: {reason}");
                rejected.push(Rejected { line, reason });
            }
        }
    }
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "no valid connection records ({} rows rejected)",
            rejected.len()
        )));
    }
    if !rejected.is_empty() {
        log::warn!("{} malformed rows skipped", rejected.len());
    }
    let projection = projection.unwrap_or_else(|| {
        let k = station_ll.len() as f64;
        Projection {
            lon0: station_ll.iter().map(|s| s.1).sum::<f64>() / k,
            lat0: station_ll.iter().map(|s| s.2).sum::<f64>() / k,
        }
    });
    let (ids, coords) = station_ll
        .into_iter()
        .map(|(id, lon, lat)| (id, projection.project(lon, lat)))
        .unzip();
    Ok(Ingested {
        records,
        stations: SiteGrid::new(ids, coords)?,
        projection,
        rejected,
    })
}

fn format_timestamp(secs: f64) -> String {
    let whole = secs.floor();
    let nanos = ((secs - whole) * 1e9).round().min(999_999_999.0) as u32;
    DateTime::<Utc>::from_timestamp(whole as i64, nanos)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::AutoSi, true))
        .unwrap_or_default()
}

pub fn write_records_csv<W: Write>(records: &[ConnectionRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "station_id", "lon", "lat", "start_iso8601", "end_iso8601"])?;
    for r in records {
        w.write_record([
            r.user_id.clone(),
            r.station_id.clone(),
            r.lon.to_string(),
            r.lat.to_string(),
            format_timestamp(r.start),
            format_timestamp(r.end),
        ])?;
    }
    w.flush()?;
    Ok(())
}
