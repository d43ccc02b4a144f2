//! Aggregation of connection records into (cluster, slot) workload cells.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::ingest::ConnectionRecord;
use super::kmeans::Clustering;
use crate::error::{Error, Result};
use crate::kernel::SiteGrid;
use crate::model::Panel;
use crate::rng::seeded;

pub const DAY_SECONDS: f64 = 86_400.0;

/// Slot length and the start of slot 0 (seconds since the epoch). When the
/// origin is `None` it is the earliest record start floored to a whole slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotSpec {
    pub length_secs: f64,
    pub origin: Option<f64>,
}

impl Default for SlotSpec {
    fn default() -> Self {
        SlotSpec {
            length_secs: DAY_SECONDS,
            origin: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Aggregated {
    pub panel: Panel,
    /// Total connection seconds per kept cluster and slot, before division
    /// and log transform.
    pub totals: DMatrix<f64>,
    /// Cluster index of each panel site.
    pub kept: Vec<usize>,
    /// Clusters with no records at all.
    pub dropped: Vec<usize>,
    pub origin: f64,
}

#[derive(Default)]
struct Cell {
    seconds: f64,
    connections: usize,
    users: HashSet<String>,
    stations: HashSet<usize>,
}

/// Builds the workload panel. Workload is total connection seconds divided
/// by the cluster's station count; features are the intercept and log1p of
/// connections, unique users, active stations and total seconds. A record
/// spanning slot boundaries contributes its duration pro rata to each slot,
/// and a zero-length record counts toward the slot holding its start.
pub fn aggregate(
    records: &[ConnectionRecord],
    stations: &SiteGrid,
    clustering: &Clustering,
    slot: SlotSpec,
) -> Result<Aggregated> {
    if !(slot.length_secs > 0.0 && slot.length_secs.is_finite()) {
        return Err(Error::invalid(format!("slot length must be positive, got {}", slot.length_secs)));
    }
    if clustering.assignment.len() != stations.len() {
        return Err(Error::invalid(format!(
            "clustering covers {} stations, grid has {}",
            clustering.assignment.len(),
            stations.len()
        )));
    }
    if records.is_empty() {
        return Err(Error::invalid("no records to aggregate"));
    }
    let len = slot.length_secs;
    let origin = slot.origin.unwrap_or_else(|| {
        let first = records.iter().map(|r| r.start).fold(f64::INFINITY, f64::min);
        (first / len).floor() * len
    });
    if records.iter().any(|r| r.start < origin) {
        return Err(Error::invalid("a record starts before the slot origin"));
    }
    let slot_range = |r: &ConnectionRecord| {
        let first = ((r.start - origin) / len).floor() as usize;
        let last = if r.end > r.start {
            (((r.end - origin) / len).ceil() as usize).saturating_sub(1).max(first)
        } else {
            first
        };
        first..=last
    };
    let n_slots = records.iter().map(|r| slot_range(r).end() + 1).max().unwrap_or(1);
    let k = clustering.k;
    let mut cells: Vec<Cell> = (0..k * n_slots).map(|_| Cell::default()).collect();
    for r in records {
        let s = stations
            .index_of(&r.station_id)
            .ok_or_else(|| Error::invalid(format!("station {:?} is not in the clustering", r.station_id)))?;
        let c = clustering.assignment[s];
        for j in slot_range(r) {
            let lo = origin + j as f64 * len;
            let share = if r.end > r.start {
                (r.end.min(lo + len) - r.start.max(lo)).max(0.0)
            } else {
                0.0
            };
            let cell = &mut cells[c * n_slots + j];
            cell.seconds += share;
            cell.connections += 1;
            cell.users.insert(r.user_id.clone());
            cell.stations.insert(s);
        }
    }
    let sizes = clustering.sizes();
    let (kept, dropped): (Vec<usize>, Vec<usize>) =
        (0..k).partition(|&c| (0..n_slots).any(|j| cells[c * n_slots + j].connections > 0));
    if !dropped.is_empty() {
        log::warn!("dropping {} clusters with no records: {:?}", dropped.len(), dropped);
    }
    if kept.is_empty() {
        return Err(Error::invalid("every cluster is empty"));
    }
    let n = kept.len();
    let mut obs = DMatrix::zeros(n, n_slots);
    let mut observed = DMatrix::from_element(n, n_slots, false);
    let mut totals = DMatrix::zeros(n, n_slots);
    let mut features = vec![DMatrix::zeros(n, 5); n_slots];
    for (i, &c) in kept.iter().enumerate() {
        for j in 0..n_slots {
            let cell = &cells[c * n_slots + j];
            let x = &mut features[j];
            x[(i, 0)] = 1.0;
            if cell.connections == 0 {
                continue;
            }
            observed[(i, j)] = true;
            totals[(i, j)] = cell.seconds;
            obs[(i, j)] = (cell.seconds / sizes[c] as f64).ln_1p();
            x[(i, 1)] = (cell.connections as f64).ln_1p();
            x[(i, 2)] = (cell.users.len() as f64).ln_1p();
            x[(i, 3)] = (cell.stations.len() as f64).ln_1p();
            x[(i, 4)] = cell.seconds.ln_1p();
        }
    }
    let grid = SiteGrid::new(
        kept.iter().map(|c| format!("c{c}")).collect(),
        kept.iter().map(|&c| clustering.centroids[c]).collect(),
    )?;
    Ok(Aggregated {
        panel: Panel::new(grid, obs, observed, features)?,
        totals,
        kept,
        dropped,
        origin,
    })
}

#[derive(Debug, Clone)]
pub struct SiteSplit {
    pub train: Panel,
    /// `None` when nothing is held out.
    pub test: Option<Panel>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Seeded site-level holdout; both index lists are ascending.
pub fn split_sites(panel: &Panel, n_holdout: usize, seed: u64) -> Result<SiteSplit> {
    let n = panel.n_sites();
    if n_holdout >= n {
        return Err(Error::invalid(format!("cannot hold out {n_holdout} of {n} sites")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    let mut test_idx = idx[..n_holdout].to_vec();
    let mut train_idx = idx[n_holdout..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok(SiteSplit {
        train: panel.select_sites(&train_idx)?,
        test: if test_idx.is_empty() { None } else { Some(panel.select_sites(&test_idx)?) },
        train_idx,
        test_idx,
    })
}
