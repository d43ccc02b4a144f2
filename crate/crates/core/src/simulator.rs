//! Task-offloading experiment: tasks with random cycle demands and
//! tolerances share a per-(location, slot) cycle budget that is either split
//! equally or weighted by predicted workload.
//!
//! Units: a cell budget `c` is cycles per slot and tolerances are in slots,
//! so with `u` tasks sharing the cell a task needing `w` cycles finishes in
//! `w * u / c` slots.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

/// Lower bound applied to task cycles and tolerances.
pub const TASK_FLOOR: f64 = 0.1;
const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mu_c: f64,
    pub sigma_c2: f64,
    pub mu_delta: f64,
    pub sigma_delta2: f64,
    pub c_total: f64,
    /// Range of total tasks per slot in the synthetic demand profile.
    pub tasks_min: u64,
    pub tasks_max: u64,
    pub n_locations: usize,
    pub mu_gamma: f64,
    pub sigma_gamma2: f64,
    pub reps: usize,
    pub seed: u64,
    /// Weighted mode splits the full budget per slot instead of the literal
    /// `(C / l) * gamma * v / sum(v)` over all cells.
    pub budget_normalized: bool,
    /// Replaces the random deploy-delay factor with a constant.
    pub gamma_fixed: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mu_c: 10.0,
            sigma_c2: 3.0,
            mu_delta: 5.0,
            sigma_delta2: 2.0,
            c_total: 1000.0,
            tasks_min: 107,
            tasks_max: 4501,
            n_locations: 10,
            mu_gamma: 0.7,
            sigma_gamma2: 0.3,
            reps: 500,
            seed: 0,
            budget_normalized: false,
            gamma_fixed: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::invalid(format!("sim.{field}: {why}")));
        if !(self.mu_c > 0.0) {
            return bad("mu_c", "must be positive");
        }
        if !(self.mu_delta > 0.0) {
            return bad("mu_delta", "must be positive");
        }
        if !(self.mu_gamma > 0.0) {
            return bad("mu_gamma", "must be positive");
        }
        for (name, v) in [
            ("sigma_c2", self.sigma_c2),
            ("sigma_delta2", self.sigma_delta2),
            ("sigma_gamma2", self.sigma_gamma2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be a finite non-negative variance");
            }
        }
        if !(self.c_total > 0.0 && self.c_total.is_finite()) {
            return bad("c_total", "must be positive");
        }
        if self.n_locations == 0 {
            return bad("n_locations", "must be at least 1");
        }
        if self.reps == 0 {
            return bad("reps", "must be at least 1");
        }
        if self.tasks_min > self.tasks_max {
            return bad("tasks_min", "exceeds tasks_max");
        }
        if let Some(g) = self.gamma_fixed {
            if !(0.0..=1.0).contains(&g) {
                return bad("gamma_fixed", "must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Normal draw restricted to `[lo, hi]` by rejection; after repeated misses
/// the last draw is clamped.
fn truncated_normal<R: Rng + ?Sized>(mean: f64, var: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let sd = var.sqrt();
    if sd == 0.0 {
        return mean.clamp(lo, hi);
    }
    let dist = Normal::new(mean, sd).expect("finite normal parameters");
    let mut x = mean;
    for _ in 0..MAX_REJECTIONS {
        x = dist.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    x.clamp(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    pub cycles: f64,
    pub tolerance: f64,
}

/// Tasks per cell, locations by rows and slots by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    n_slots: usize,
    cells: Vec<Vec<Task>>,
}

impl TaskSet {
    pub fn cell(&self, location: usize, slot: usize) -> &[Task] {
        &self.cells[location * self.n_slots + slot]
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.cells.iter().flatten()
    }
}

/// Draws cycles and tolerance for every task in `demand`.
pub fn generate_tasks<R: Rng + ?Sized>(config: &SimConfig, demand: &DMatrix<u64>, rng: &mut R) -> TaskSet {
    let (l, t) = demand.shape();
    let mut cells = Vec::with_capacity(l * t);
    for i in 0..l {
        for j in 0..t {
            let cell = (0..demand[(i, j)])
                .map(|_| Task {
                    cycles: truncated_normal(config.mu_c, config.sigma_c2, TASK_FLOOR, f64::INFINITY, rng),
                    tolerance: truncated_normal(config.mu_delta, config.sigma_delta2, TASK_FLOOR, f64::INFINITY, rng),
                })
                .collect();
            cells.push(cell);
        }
    }
    TaskSet { n_slots: t, cells }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    Equal,
    Weighted,
}

impl std::fmt::Display for AllocationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AllocationMode::Equal => "equal",
            AllocationMode::Weighted => "weighted",
        })
    }
}

fn draw_gamma<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> f64 {
    config
        .gamma_fixed
        .unwrap_or_else(|| truncated_normal(config.mu_gamma, config.sigma_gamma2, 0.0, 1.0, rng))
}

/// Cycle budget per (location, slot). Equal mode gives every cell `C / l`.
/// Weighted mode draws a deploy-delay factor per cell and gives
/// `(C / l) * gamma * v / sum(v)` over all cells, or with `budget_normalized`
/// `C * gamma * v / sum_i(v)` within each slot; a slot whose predictions sum
/// to zero falls back to the equal split.
pub fn allocate<R: Rng + ?Sized>(
    config: &SimConfig,
    mode: AllocationMode,
    predictions: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (l, t) = predictions.shape();
    let equal = config.c_total / config.n_locations as f64;
    if mode == AllocationMode::Equal {
        return Ok(DMatrix::from_element(l, t, equal));
    }
    if predictions.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("predictions must be finite and non-negative"));
    }
    let total: f64 = predictions.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("weighted allocation needs predictions with a positive sum"));
    }
    let mut out = DMatrix::zeros(l, t);
    for j in 0..t {
        let slot_sum: f64 = predictions.column(j).sum();
        for i in 0..l {
            let gamma = draw_gamma(config, rng);
            let v = predictions[(i, j)];
            out[(i, j)] = if !config.budget_normalized {
                equal * gamma * v / total
            } else if slot_sum > 0.0 {
                config.c_total * gamma * v / slot_sum
            } else {
                equal * gamma
            };
        }
    }
    Ok(out)
}

/// Tasks finished within tolerance when all of them share `budget` equally.
pub fn run_slot(tasks: &[Task], budget: f64) -> usize {
    let u = tasks.len() as f64;
    if budget <= 0.0 {
        return 0;
    }
    tasks.iter().filter(|task| task.cycles * u / budget <= task.tolerance).count()
}

/// Per-slot totals drawn uniformly from the configured range, with one hot
/// location (index 0) taking `hot_share` of each slot and the rest split as
/// evenly as integer counts allow.
pub fn hotspot_demand(config: &SimConfig, n_slots: usize, hot_share: f64, seed: u64) -> Result<DMatrix<u64>> {
    config.validate()?;
    if !(0.0..=1.0).contains(&hot_share) {
        return Err(Error::invalid(format!("hot share {hot_share} outside [0, 1]")));
    }
    let l = config.n_locations;
    let mut rng = seeded(seed);
    let mut demand = DMatrix::zeros(l, n_slots);
    for j in 0..n_slots {
        let total = rng.random_range(config.tasks_min..=config.tasks_max);
        let hot = if l == 1 { total } else { (hot_share * total as f64).round() as u64 };
        demand[(0, j)] = hot;
        if l > 1 {
            let rest = total - hot;
            let cold = (l - 1) as u64;
            for i in 1..l {
                demand[(i, j)] = rest / cold + u64::from(((i - 1) as u64) < rest % cold);
            }
        }
    }
    Ok(demand)
}

/// Demand used as allocation weights, optionally perturbed by independent
/// log-normal noise with log-scale standard deviation `noise_sd`.
pub fn noisy_oracle(demand: &DMatrix<u64>, noise_sd: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid(format!("noise sd must be non-negative, got {noise_sd}")));
    }
    if noise_sd == 0.0 {
        return Ok(demand.map(|u| u as f64));
    }
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, noise_sd).expect("finite noise sd");
    Ok(demand.map(|u| u as f64 * noise.sample(&mut rng).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellOutcome {
    pub mode: AllocationMode,
    pub rep: usize,
    pub location: usize,
    pub slot: usize,
    pub offered: u64,
    pub completed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: AllocationMode,
    /// Completed over offered per replication, averaged over replications.
    pub completed_rate: f64,
    /// The same rate restricted to each location.
    pub per_location: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub equal: ModeSummary,
    pub weighted: ModeSummary,
    pub reps: usize,
    /// Outcomes ordered by replication, mode, location, slot.
    pub cells: Vec<CellOutcome>,
}

fn rate(completed: u64, offered: u64) -> f64 {
    if offered == 0 {
        0.0
    } else {
        completed as f64 / offered as f64
    }
}

fn run_rep(config: &SimConfig, demand: &DMatrix<u64>, predictions: &DMatrix<f64>, rep: usize) -> Result<Vec<CellOutcome>> {
    let mut rng = stream(config.seed, rep as u64);
    let tasks = generate_tasks(config, demand, &mut rng);
    let mut out = Vec::with_capacity(2 * demand.len());
    for mode in [AllocationMode::Equal, AllocationMode::Weighted] {
        let budget = allocate(config, mode, predictions, &mut rng)?;
        for i in 0..demand.nrows() {
            for j in 0..demand.ncols() {
                let cell = tasks.cell(i, j);
                out.push(CellOutcome {
                    mode,
                    rep,
                    location: i,
                    slot: j,
                    offered: cell.len() as u64,
                    completed: run_slot(cell, budget[(i, j)]) as u64,
                });
            }
        }
    }
    Ok(out)
}

fn summarize_mode(mode: AllocationMode, cells: &[CellOutcome], reps: usize, l: usize) -> ModeSummary {
    let mut overall = 0.0;
    let mut per_location = vec![0.0; l];
    for rep_cells in cells.chunks((cells.len() / reps.max(1)).max(1)) {
        let mine: Vec<&CellOutcome> = rep_cells.iter().filter(|c| c.mode == mode).collect();
        let (o, c) = mine.iter().fold((0, 0), |(o, c), x| (o + x.offered, c + x.completed));
        overall += rate(c, o);
        for (loc, acc) in per_location.iter_mut().enumerate() {
            let (o, c) = mine
                .iter()
                .filter(|x| x.location == loc)
                .fold((0, 0), |(o, c), x| (o + x.offered, c + x.completed));
            *acc += rate(c, o);
        }
    }
    ModeSummary {
        mode,
        completed_rate: overall / reps as f64,
        per_location: per_location.into_iter().map(|v| v / reps as f64).collect(),
    }
}

/// Runs `config.reps` independent replications in parallel, each with its
/// own derived stream; both modes in a replication share the same tasks.
pub fn run_simulation(config: &SimConfig, demand: &DMatrix<u64>, predictions: &DMatrix<f64>) -> Result<SimResult> {
    config.validate()?;
    if demand.shape() != predictions.shape() {
        return Err(Error::invalid(format!(
            "demand is {:?} but predictions are {:?}",
            demand.shape(),
            predictions.shape()
        )));
    }
    if demand.nrows() != config.n_locations {
        return Err(Error::invalid(format!(
            "demand has {} locations, config has {}",
            demand.nrows(),
            config.n_locations
        )));
    }
    let per_rep: Vec<Vec<CellOutcome>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(config, demand, predictions, rep))
        .collect::<Result<_>>()?;
    let cells: Vec<CellOutcome> = per_rep.into_iter().flatten().collect();
    let l = config.n_locations;
    Ok(SimResult {
        equal: summarize_mode(AllocationMode::Equal, &cells, config.reps, l),
        weighted: summarize_mode(AllocationMode::Weighted, &cells, config.reps, l),
        reps: config.reps,
        cells,
    })
}

/// Writes `mode,rep,location,slot,offered,completed,rate`: one row per cell
/// outcome, then one summary row per mode with `rep = all`, blank location
/// and slot, summed counts and the averaged rate.
pub fn write_sim_csv<W: Write>(result: &SimResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "rep", "location", "slot", "offered", "completed", "rate"])?;
    for c in &result.cells {
        w.write_record([
            c.mode.to_string(),
            c.rep.to_string(),
            c.location.to_string(),
            c.slot.to_string(),
            c.offered.to_string(),
            c.completed.to_string(),
            rate(c.completed, c.offered).to_string(),
        ])?;
    }
    for s in [&result.equal, &result.weighted] {
        let (o, c) = result
            .cells
            .iter()
            .filter(|x| x.mode == s.mode)
            .fold((0u64, 0u64), |(o, c), x| (o + x.offered, c + x.completed));
        w.write_record([
            s.mode.to_string(),
            "all".into(),
            String::new(),
            String::new(),
            o.to_string(),
            c.to_string(),
            s.completed_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `mode,location,completed_rate` with `location = all` for the
/// overall rate.
pub fn write_sim_summary_csv<W: Write>(result: &SimResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "location", "completed_rate"])?;
    for s in [&result.equal, &result.weighted] {
        w.write_record([s.mode.to_string(), "all".into(), s.completed_rate.to_string()])?;
        for (i, r) in s.per_location.iter().enumerate() {
            w.write_record([s.mode.to_string(), i.to_string(), r.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(c: f64, d: f64) -> Task {
        Task { cycles: c, tolerance: d }
    }

    #[test]
    fn sharing_rule_examples() {
        assert_eq!(run_slot(&[task(10.0, 5.0)], 100.0), 1);
        assert_eq!(run_slot(&vec![task(10.0, 5.0); 100], 100.0), 0);
        assert_eq!(run_slot(&[], 100.0), 0);
        assert_eq!(run_slot(&[task(10.0, 5.0)], 0.0), 0);
    }

    #[test]
    fn degenerate_variances_give_the_means() {
        let cfg = SimConfig {
            sigma_c2: 0.0,
            sigma_delta2: 0.0,
            ..SimConfig::default()
        };
        let demand = DMatrix::from_element(2, 3, 4u64);
        let tasks = generate_tasks(&cfg, &demand, &mut seeded(1));
        assert_eq!(tasks.len(), 24);
        assert!(tasks.tasks().all(|t| *t == task(10.0, 5.0)));
        let none = generate_tasks(&cfg, &DMatrix::zeros(2, 3), &mut seeded(1));
        assert!(none.is_empty());
    }

    #[test]
    fn equal_and_uniform_weighted_allocations() {
        let cfg = SimConfig {
            gamma_fixed: Some(1.0),
            ..SimConfig::default()
        };
        let v = DMatrix::from_element(10, 4, 2.5);
        let eq = allocate(&cfg, AllocationMode::Equal, &v, &mut seeded(0)).unwrap();
        assert!(eq.iter().all(|&c| c == 100.0));
        let w = allocate(&cfg, AllocationMode::Weighted, &v, &mut seeded(0)).unwrap();
        assert!(w.iter().all(|&c| (c - 100.0 / 40.0).abs() < 1e-12));
        let normalized = SimConfig {
            budget_normalized: true,
            ..cfg.clone()
        };
        let mut rng = seeded(0);
        let v = DMatrix::from_fn(10, 4, |i, j| (i * 3 + j) as f64 + 0.5);
        let w = allocate(&normalized, AllocationMode::Weighted, &v, &mut rng).unwrap();
        for j in 0..4 {
            assert!((w.column(j).sum() - 1000.0).abs() < 1e-9);
        }
        assert!(allocate(&cfg, AllocationMode::Weighted, &DMatrix::zeros(10, 4), &mut rng).is_err());
    }

    #[test]
    fn random_gamma_stays_in_unit_interval() {
        let cfg = SimConfig::default();
        let mut rng = seeded(3);
        for _ in 0..10_000 {
            let g = draw_gamma(&cfg, &mut rng);
            assert!((0.0..=1.0).contains(&g));
        }
    }

    #[test]
    fn hotspot_profile_shares() {
        let cfg = SimConfig::default();
        let d = hotspot_demand(&cfg, 50, 0.8, 4).unwrap();
        for j in 0..50 {
            let total: u64 = d.column(j).sum();
            assert!((107..=4501).contains(&total));
            assert!((d[(0, j)] as f64 - 0.8 * total as f64).abs() <= 0.5);
            let cold: Vec<u64> = (1..10).map(|i| d[(i, j)]).collect();
            assert!(cold.iter().max().unwrap() - cold.iter().min().unwrap() <= 1);
        }
    }
}
