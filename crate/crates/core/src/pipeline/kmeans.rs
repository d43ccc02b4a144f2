//! Seeded k-means++ with Lloyd iterations and the elbow curve.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SiteGrid;
use crate::rng::{derive_seed, seeded};

pub const DEFAULT_K: usize = 25;
const RESTARTS: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<[f64; 2]>,
    /// Cluster of each station, in grid order.
    pub assignment: Vec<usize>,
    pub wcss: f64,
    /// WCSS after each Lloyd iteration.
    pub history: Vec<f64>,
}

impl Clustering {
    /// Number of stations in each cluster.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, &c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[[f64; 2]], k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|&p| sq_dist(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        centroids.push(c);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centroids
}

fn means(points: &[[f64; 2]], assignment: &[usize], k: usize, old: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut sum = vec![[0.0, 0.0]; k];
    let mut count = vec![0usize; k];
    for (&p, &c) in points.iter().zip(assignment) {
        sum[c][0] += p[0];
        sum[c][1] += p[1];
        count[c] += 1;
    }
    let centroids = (0..k)
        .map(|c| {
            if count[c] > 0 {
                [sum[c][0] / count[c] as f64, sum[c][1] / count[c] as f64]
            } else {
                old[c]
            }
        })
        .collect();
    (centroids, count)
}

fn wcss(points: &[[f64; 2]], assignment: &[usize], centroids: &[[f64; 2]]) -> f64 {
    points.iter().zip(assignment).map(|(&p, &c)| sq_dist(p, centroids[c])).sum()
}

/// Lloyd iterations from the given centroids until the assignment stops
/// changing or `max_iter` is reached. An empty cluster is re-seeded at the
/// point farthest from its centroid.
pub fn kmeans_from(stations: &SiteGrid, init: Vec<[f64; 2]>, max_iter: usize) -> Result<Clustering> {
    let points = stations.coords();
    let k = init.len();
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!("K = {k} must lie in 1..={}", points.len())));
    }
    let mut centroids = init;
    let mut assignment: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    for iter in 0..max_iter.max(1) {
        if iter > 0 {
            let next: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids).0).collect();
            if next == assignment {
                break;
            }
            assignment = next;
        }
        let (mut c, mut count) = means(points, &assignment, k, &centroids);
        while let Some(empty) = count.iter().position(|&n| n == 0) {
            let far = (0..points.len())
                .filter(|&i| count[assignment[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(points[a], c[assignment[a]]).total_cmp(&sq_dist(points[b], c[assignment[b]]))
                })
                .expect("k <= n leaves a cluster with two or more points");
            assignment[far] = empty;
            let (c2, n2) = means(points, &assignment, k, &c);
            c = c2;
            count = n2;
        }
        centroids = c;
        history.push(wcss(points, &assignment, &centroids));
    }
    Ok(Clustering {
        k,
        wcss: wcss(points, &assignment, &centroids),
        centroids,
        assignment,
        history,
    })
}

/// k-means++ seeding followed by Lloyd iterations; deterministic per seed.
pub fn kmeans(stations: &SiteGrid, k: usize, seed: u64, max_iter: usize) -> Result<Clustering> {
    if k == 0 || k > stations.len() {
        return Err(Error::invalid(format!("K = {k} must lie in 1..={}", stations.len())));
    }
    let mut rng = seeded(seed);
    let init = plus_plus_init(stations.coords(), k, &mut rng);
    kmeans_from(stations, init, max_iter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    #[serde(rename = "K")]
    pub k: usize,
    pub wcss: f64,
}

/// WCSS for each K in `ks` (ascending), best of five seeded restarts plus a
/// warm start from the previous K's solution with one centroid added at the
/// worst-fit station, which keeps the curve nonincreasing.
pub fn elbow_curve(stations: &SiteGrid, ks: std::ops::RangeInclusive<usize>, seed: u64) -> Result<Vec<ElbowPoint>> {
    let (lo, hi) = (*ks.start(), *ks.end());
    if lo == 0 || hi > stations.len() || lo > hi {
        return Err(Error::invalid(format!(
            "K range {lo}..={hi} must lie within 1..={}",
            stations.len()
        )));
    }
    let points = stations.coords();
    let mut out = Vec::new();
    let mut prev: Option<Clustering> = None;
    for k in lo..=hi {
        let mut best: Option<Clustering> = None;
        for r in 0..RESTARTS {
            let c = kmeans(stations, k, derive_seed(seed, (k as u64) << 8 | r), 300)?;
            if best.as_ref().is_none_or(|b| c.wcss < b.wcss) {
                best = Some(c);
            }
        }
        if let Some(p) = &prev {
            let worst = (0..points.len())
                .max_by(|&a, &b| {
                    sq_dist(points[a], p.centroids[p.assignment[a]])
                        .total_cmp(&sq_dist(points[b], p.centroids[p.assignment[b]]))
                })
                .expect("nonempty grid");
            let mut init = p.centroids.clone();
            init.push(points[worst]);
            let warm = kmeans_from(stations, init, 300)?;
            if best.as_ref().is_none_or(|b| warm.wcss < b.wcss) {
                best = Some(warm);
            }
        }
        let best = best.expect("at least one restart");
        out.push(ElbowPoint { k, wcss: best.wcss });
        prev = Some(best);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ClusterRow {
    station_id: String,
    cluster: usize,
    centroid_x: f64,
    centroid_y: f64,
}

/// Writes `station_id,cluster,centroid_x,centroid_y`.
pub fn write_clustering_csv<W: Write>(stations: &SiteGrid, c: &Clustering, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, id) in stations.ids().iter().enumerate() {
        let k = c.assignment[i];
        w.serialize(ClusterRow {
            station_id: id.clone(),
            cluster: k,
            centroid_x: c.centroids[k][0],
            centroid_y: c.centroids[k][1],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a clustering back and aligns it with `stations`; the WCSS is
/// recomputed from the coordinates.
pub fn read_clustering_csv<R: Read>(stations: &SiteGrid, input: R) -> Result<Clustering> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut assignment = vec![usize::MAX; stations.len()];
    let mut centroids: Vec<Option<[f64; 2]>> = Vec::new();
    for row in rdr.deserialize() {
        let r: ClusterRow = row?;
        let i = stations
            .index_of(&r.station_id)
            .ok_or_else(|| Error::invalid(format!("clustering names unknown station {:?}", r.station_id)))?;
        assignment[i] = r.cluster;
        if centroids.len() <= r.cluster {
            centroids.resize(r.cluster + 1, None);
        }
        centroids[r.cluster] = Some([r.centroid_x, r.centroid_y]);
    }
    if let Some(i) = assignment.iter().position(|&a| a == usize::MAX) {
        return Err(Error::invalid(format!(
            "station {:?} has no cluster",
            stations.ids()[i]
        )));
    }
    let centroids: Vec<[f64; 2]> = centroids
        .into_iter()
        .enumerate()
        .map(|(k, c)| c.ok_or_else(|| Error::invalid(format!("cluster {k} has no stations"))))
        .collect::<Result<_>>()?;
    let w = wcss(stations.coords(), &assignment, &centroids);
    Ok(Clustering {
        k: centroids.len(),
        centroids,
        assignment,
        wcss: w,
        history: vec![w],
    })
}

pub fn write_elbow_csv<W: Write>(curve: &[ElbowPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
