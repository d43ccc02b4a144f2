//! Posterior predictive inference: kriging to new sites, forecasting future
//! slots, back-transform to the original scale and Gaussian smoothing.
//!
//! Each retained posterior draw yields one predictive draw per target; the
//! reported moments are statistics over those draws.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cross_distances, distance_matrix, CorrelationMatrix, Matern, SiteGrid, DEFAULT_JITTER};
use crate::mcmc::{Chain, Draw};
use crate::model::{ModelKind, Panel, Theta};
use crate::rng::stream;

/// A site and time slot to predict at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub site_id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictOptions {
    /// Use every `thinning`-th retained draw of each chain.
    pub thinning: usize,
    pub seed: u64,
    pub jitter: f64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            thinning: 4,
            seed: 0,
            jitter: DEFAULT_JITTER,
        }
    }
}

/// Predictive draws and their summaries, one entry per target.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionField {
    pub targets: Vec<Target>,
    pub mean_log: Vec<f64>,
    pub sd_log: Vec<f64>,
    pub mean_orig: Vec<f64>,
    pub sd_orig: Vec<f64>,
    pub n_samples: usize,
    /// `samples[k]` holds the model-scale draws for target `k`.
    pub samples: Vec<Vec<f64>>,
    /// Number of conditional variances clamped at zero after round-off.
    pub clamped: usize,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut k, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for v in values {
        k += 1.0;
        let d = v - mean;
        mean += d / k;
        m2 += d * (v - mean);
    }
    let sd = if k > 1.0 { (m2 / (k - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

impl PredictionField {
    /// Summarizes model-scale draws on both scales.
    pub fn from_samples(targets: Vec<Target>, samples: Vec<Vec<f64>>, clamped: usize) -> Result<Self> {
        if targets.len() != samples.len() {
            return Err(Error::invalid("one sample vector per target is required"));
        }
        let n_samples = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != n_samples) {
            return Err(Error::invalid("targets carry different numbers of draws"));
        }
        let (mean_log, sd_log) = samples.iter().map(|s| mean_sd(s.iter().copied())).unzip();
        let field = PredictionField {
            targets,
            mean_log,
            sd_log,
            mean_orig: Vec::new(),
            sd_orig: Vec::new(),
            n_samples,
            samples,
            clamped,
        };
        Ok(back_transform(field))
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Applies `exp(x) - 1` to every draw, clips at 0, and summarizes on the
/// original scale.
pub fn back_transform(mut field: PredictionField) -> PredictionField {
    let (mean, sd) = field
        .samples
        .iter()
        .map(|s| mean_sd(s.iter().map(|&v| v.exp_m1().max(0.0))))
        .unzip();
    field.mean_orig = mean;
    field.sd_orig = sd;
    field
}

/// Retained draws after thinning, in chain then iteration order.
fn thinned(chains: &[Chain], thinning: usize) -> Result<Vec<&Draw>> {
    if thinning == 0 {
        return Err(Error::invalid("thinning must be at least 1"));
    }
    let draws: Vec<&Draw> = chains
        .iter()
        .flat_map(|c| c.draws.iter().step_by(thinning))
        .collect();
    if draws.is_empty() {
        return Err(Error::invalid("no posterior draws to predict from"));
    }
    Ok(draws)
}

fn check_features(features: &[DMatrix<f64>], rows: usize, m: usize, what: &str) -> Result<()> {
    for (t, x) in features.iter().enumerate() {
        if x.shape() != (rows, m) {
            return Err(Error::invalid(format!(
                "{what} features for slot {t} are {}x{}, expected {rows}x{m}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{what} features for slot {t} are not finite")));
        }
    }
    Ok(())
}

/// Kriging system of one draw: weights `zeta^-1 c` and `1 - c' zeta^-1 c`.
struct Krige {
    weights: DMatrix<f64>,
    residual: Vec<f64>,
    clamped: usize,
}

fn krige_system(dist: &DMatrix<f64>, cross: &DMatrix<f64>, theta: &Theta, jitter: f64) -> Result<Krige> {
    let corr = CorrelationMatrix::from_distances(dist, theta.phi, theta.nu, jitter)?;
    let kernel = Matern::new(theta.phi, theta.nu)?;
    let c = cross.map(|d| kernel.eval(d));
    let weights = corr.factor().solve_mat(&c);
    let mut clamped = 0;
    let residual = (0..c.ncols())
        .map(|k| {
            let r = 1.0 - c.column(k).dot(&weights.column(k));
            if r < 0.0 {
                clamped += 1;
                0.0
            } else {
                r.min(1.0)
            }
        })
        .collect();
    Ok(Krige {
        weights,
        residual,
        clamped,
    })
}

/// Bayesian kriging of `O` at `new_sites` for the panel slots in `slots`.
///
/// `new_features[t]` is the `n_new x m` feature matrix of slot `t` for every
/// panel slot up to `slots.end`. For each draw the new-site latent path starts
/// from `V_0` kriged from the observed sites and follows the AR recursion
/// with the spatial effect `eta_t` kriged from the observed-site residuals.
pub fn krige_spatial(
    chains: &[Chain],
    panel: &Panel,
    new_sites: &SiteGrid,
    new_features: &[DMatrix<f64>],
    slots: std::ops::Range<usize>,
    options: &PredictOptions,
) -> Result<PredictionField> {
    let model = chains.first().map(|c| c.model).unwrap_or_default();
    if slots.end > panel.n_slots() || slots.start > slots.end {
        return Err(Error::invalid(format!(
            "slot range {slots:?} outside the panel's {} slots",
            panel.n_slots()
        )));
    }
    if new_features.len() < slots.end {
        return Err(Error::invalid(format!(
            "new-site features cover {} slots, need {}",
            new_features.len(),
            slots.end
        )));
    }
    let n_new = new_sites.len();
    check_features(&new_features[..slots.end], n_new, panel.n_features(), "new-site")?;
    for id in new_sites.ids() {
        if panel.grid().index_of(id).is_some() {
            log::warn!("new site {id} shares its id with an observed site");
        }
    }
    let draws = thinned(chains, options.thinning)?;
    let dist = distance_matrix(panel.grid());
    let cross = cross_distances(panel.grid(), new_sites);

    let per_draw: Vec<Result<(Vec<f64>, usize)>> = draws
        .par_iter()
        .enumerate()
        .map(|(j, draw)| {
            let theta = draw.to_theta()?;
            theta.check(panel)?;
            let rho = if model == ModelKind::Ar { theta.rho } else { 0.0 };
            let k = krige_system(&dist, &cross, &theta, options.jitter)?;
            let mut rng = stream(options.seed, j as u64);
            let sd_eps = theta.sigma_eps2.sqrt();
            let sd_eta = theta.sigma_eta2.sqrt();

            let mut v_new = DVector::zeros(n_new);
            if model == ModelKind::Ar {
                let sd0 = theta.sigma2.sqrt();
                let mean0 = k.weights.transpose() * &theta.latent0;
                for s in 0..n_new {
                    let z: f64 = rng.sample(StandardNormal);
                    v_new[s] = mean0[s] + sd0 * k.residual[s].sqrt() * z;
                }
            }
            let mut out = Vec::with_capacity(n_new * slots.len());
            for (t, x_new) in new_features.iter().enumerate().take(slots.end) {
                let prev = theta.previous_latent(t);
                let eta = theta.latent.column(t) - panel.features(t) * &theta.beta - prev * rho;
                let eta_mean = k.weights.transpose() * eta;
                let xb = x_new * &theta.beta;
                for s in 0..n_new {
                    let z: f64 = rng.sample(StandardNormal);
                    let e = eta_mean[s] + sd_eta * k.residual[s].sqrt() * z;
                    v_new[s] = rho * v_new[s] + xb[s] + e;
                }
                if t >= slots.start {
                    for s in 0..n_new {
                        let z: f64 = rng.sample(StandardNormal);
                        out.push(v_new[s] + sd_eps * z);
                    }
                }
            }
            Ok((out, k.clamped))
        })
        .collect();

    let n_targets = n_new * slots.len();
    let mut samples = vec![Vec::with_capacity(draws.len()); n_targets];
    let mut clamped = 0;
    for r in per_draw {
        let (vals, c) = r?;
        clamped += c;
        for (k, v) in vals.into_iter().enumerate() {
            samples[k].push(v);
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} kriging variances clamped at zero");
    }
    let targets = slots
        .flat_map(|t| {
            (0..n_new).map(move |s| Target {
                site_id: new_sites.ids()[s].clone(),
                x_m: new_sites.coords()[s][0],
                y_m: new_sites.coords()[s][1],
                t,
            })
        })
        .collect();
    PredictionField::from_samples(targets, samples, clamped)
}

/// Forecasts `O` at the panel sites for `future_features.len()` slots past
/// the panel, iterating the model forward from the last latent state of each
/// draw.
pub fn forecast_temporal(
    chains: &[Chain],
    panel: &Panel,
    future_features: &[DMatrix<f64>],
    options: &PredictOptions,
) -> Result<PredictionField> {
    let n = panel.n_sites();
    let n_slots = panel.n_slots();
    if future_features.is_empty() {
        return PredictionField::from_samples(Vec::new(), Vec::new(), 0);
    }
    check_features(future_features, n, panel.n_features(), "future")?;
    let model = chains.first().map(|c| c.model).unwrap_or_default();
    let draws = thinned(chains, options.thinning)?;
    let dist = distance_matrix(panel.grid());

    let per_draw: Vec<Result<Vec<f64>>> = draws
        .par_iter()
        .enumerate()
        .map(|(j, draw)| {
            let theta = draw.to_theta()?;
            theta.check(panel)?;
            let rho = if model == ModelKind::Ar { theta.rho } else { 0.0 };
            let corr = CorrelationMatrix::from_distances(&dist, theta.phi, theta.nu, options.jitter)?;
            let mut rng = stream(options.seed, j as u64);
            let sd_eta = theta.sigma_eta2.sqrt();
            let sd_eps = theta.sigma_eps2.sqrt();
            let mut v = theta.latent.column(n_slots - 1).into_owned();
            let mut out = Vec::with_capacity(n * future_features.len());
            for x in future_features {
                let eta = corr.factor().sample_zero_mean(&mut rng) * sd_eta;
                v = &v * rho + x * &theta.beta + eta;
                for i in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(v[i] + sd_eps * z);
                }
            }
            Ok(out)
        })
        .collect();

    let mut samples = vec![Vec::with_capacity(draws.len()); n * future_features.len()];
    for r in per_draw {
        for (k, v) in r?.into_iter().enumerate() {
            samples[k].push(v);
        }
    }
    let grid = panel.grid();
    let targets = (0..future_features.len())
        .flat_map(|k| {
            (0..n).map(move |i| Target {
                site_id: grid.ids()[i].clone(),
                x_m: grid.coords()[i][0],
                y_m: grid.coords()[i][1],
                t: n_slots + k,
            })
        })
        .collect();
    PredictionField::from_samples(targets, samples, 0)
}

/// Discrete Gaussian smoothing. The kernel spans `ceil(4 sd)` slots on each
/// side and is renormalized where it runs past either end of the series.
pub fn smooth_series(values: &[f64], sd: f64) -> Result<Vec<f64>> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::invalid(format!("smoothing sd must be positive, got {sd}")));
    }
    let radius = (4.0 * sd).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sd * sd)).exp())
        .collect();
    let n = values.len() as isize;
    Ok((0..n)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for (w, k) in weights.iter().zip(-radius..=radius) {
                let j = i + k;
                if (0..n).contains(&j) {
                    num += w * values[j as usize];
                    den += w;
                }
            }
            num / den
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRow {
    site_id: String,
    x_m: f64,
    y_m: f64,
    t: usize,
    mean_log: f64,
    sd_log: f64,
    mean: f64,
    sd: f64,
}

/// Writes `site_id,x_m,y_m,t,mean_log,sd_log,mean,sd`.
pub fn write_prediction_csv<W: Write>(field: &PredictionField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (k, t) in field.targets.iter().enumerate() {
        w.serialize(PredictionRow {
            site_id: t.site_id.clone(),
            x_m: t.x_m,
            y_m: t.y_m,
            t: t.t,
            mean_log: field.mean_log[k],
            sd_log: field.sd_log[k],
            mean: field.mean_orig[k],
            sd: field.sd_orig[k],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the summaries written by [`write_prediction_csv`]; draws are not
/// stored, so `samples` comes back empty.
pub fn read_prediction_csv<R: Read>(input: R) -> Result<PredictionField> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut field = PredictionField {
        targets: Vec::new(),
        mean_log: Vec::new(),
        sd_log: Vec::new(),
        mean_orig: Vec::new(),
        sd_orig: Vec::new(),
        n_samples: 0,
        samples: Vec::new(),
        clamped: 0,
    };
    for row in rdr.deserialize() {
        let r: PredictionRow = row?;
        field.targets.push(Target {
            site_id: r.site_id,
            x_m: r.x_m,
            y_m: r.y_m,
            t: r.t,
        });
        field.mean_log.push(r.mean_log);
        field.sd_log.push(r.sd_log);
        field.mean_orig.push(r.mean);
        field.sd_orig.push(r.sd);
    }
    Ok(field)
}
