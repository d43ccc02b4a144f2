//! Chain driver: initialization, the Gibbs / Metropolis-Hastings sweep,
//! burn-in adaptation and running moments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::DEFAULT_JITTER;
use crate::model::{ModelKind, Panel, PriorSpec, Theta};
use crate::rng::{derive_seed, seeded};

use super::conditionals::{ensure_finite, Sampler};

/// Step-size control for the `ln phi` random walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MhTuning {
    /// Initial standard deviation of the `ln phi` random walk.
    pub proposal_sd_phi: f64,
    /// Acceptance window the adapted step is expected to land in.
    pub target_accept: (f64, f64),
    pub adapt_during_burnin: bool,
    /// Acceptance rate the burn-in adaptation steers toward.
    pub adapt_target: f64,
}

impl Default for MhTuning {
    fn default() -> Self {
        MhTuning {
            proposal_sd_phi: 0.5,
            target_accept: (0.15, 0.40),
            adapt_during_burnin: true,
            adapt_target: 0.3,
        }
    }
}

impl MhTuning {
    pub fn validate(&self) -> Result<()> {
        if !(self.proposal_sd_phi > 0.0) || !self.proposal_sd_phi.is_finite() {
            return Err(Error::invalid("proposal_sd_phi must be positive"));
        }
        let (lo, hi) = self.target_accept;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::invalid("target_accept must satisfy 0 < lo < hi < 1"));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::invalid("adapt_target must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub model: ModelKind,
    pub n_iter: usize,
    pub n_burn: usize,
    pub tuning: MhTuning,
    pub seed: u64,
    pub priors: PriorSpec,
    pub jitter: f64,
    /// Keep the latent fields in every retained draw (needed for prediction).
    pub store_latents: bool,
    /// Log progress every this many iterations; 0 disables.
    pub log_every: usize,
    #[serde(skip)]
    pub init: Option<Theta>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            model: ModelKind::Ar,
            n_iter: 5000,
            n_burn: 1000,
            tuning: MhTuning::default(),
            seed: 0,
            priors: PriorSpec::default(),
            jitter: DEFAULT_JITTER,
            store_latents: true,
            log_every: 100,
            init: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return Err(Error::invalid(format!(
                "n_burn ({}) must be smaller than n_iter ({})",
                self.n_burn, self.n_iter
            )));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::invalid("jitter must be non-negative"));
        }
        self.tuning.validate()?;
        self.priors.validate()
    }
}

/// Latent fields of one retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawLatents {
    /// `latent[t][i]` is `V_t(s_i)`.
    pub latent: Vec<Vec<f64>>,
    pub latent0: Vec<f64>,
    pub mu: Vec<f64>,
}

/// One retained state of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub chain: usize,
    pub iter: usize,
    pub beta: Vec<f64>,
    pub rho: f64,
    pub sigma_eps2: f64,
    pub sigma_eta2: f64,
    pub phi: f64,
    pub nu: f64,
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latents: Option<DrawLatents>,
}

impl Draw {
    /// Snapshot of `theta`, with or without its latent fields.
    pub fn from_theta(chain: usize, iter: usize, theta: &Theta, store_latents: bool) -> Draw {
        let latents = store_latents.then(|| DrawLatents {
            latent: theta
                .latent
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            latent0: theta.latent0.iter().copied().collect(),
            mu: theta.mu.iter().copied().collect(),
        });
        Draw {
            chain,
            iter,
            beta: theta.beta.iter().copied().collect(),
            rho: theta.rho,
            sigma_eps2: theta.sigma_eps2,
            sigma_eta2: theta.sigma_eta2,
            phi: theta.phi,
            nu: theta.nu,
            sigma2: theta.sigma2,
            latents,
        }
    }

    /// Rebuilds the full parameter state; fails when latents were not kept.
    pub fn to_theta(&self) -> Result<Theta> {
        let lat = self
            .latents
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("draw {} carries no latent fields", self.iter)))?;
        let n = lat.latent0.len();
        if lat.latent.iter().any(|c| c.len() != n) || lat.mu.len() != n {
            return Err(Error::invalid(format!("draw {} has ragged latent fields", self.iter)));
        }
        let cols: Vec<f64> = lat.latent.iter().flatten().copied().collect();
        Ok(Theta {
            beta: DVector::from_vec(self.beta.clone()),
            rho: self.rho,
            sigma_eps2: self.sigma_eps2,
            sigma_eta2: self.sigma_eta2,
            phi: self.phi,
            nu: self.nu,
            mu: DVector::from_vec(lat.mu.clone()),
            sigma2: self.sigma2,
            latent: DMatrix::from_vec(n, lat.latent.len(), cols),
            latent0: DVector::from_vec(lat.latent0.clone()),
        })
    }
}

/// Per-cell running mean and variance (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct CellMoments {
    count: usize,
    mean: DMatrix<f64>,
    m2: DMatrix<f64>,
}

impl CellMoments {
    pub fn new(rows: usize, cols: usize) -> Self {
        CellMoments {
            count: 0,
            mean: DMatrix::zeros(rows, cols),
            m2: DMatrix::zeros(rows, cols),
        }
    }

    pub fn push(&mut self, x: &DMatrix<f64>) {
        self.count += 1;
        let k = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x.iter()) {
            let d = v - *m;
            *m += d / k;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    /// Unbiased sample variance; zero with fewer than two values.
    pub fn variance(&self) -> DMatrix<f64> {
        if self.count < 2 {
            return DMatrix::zeros(self.mean.nrows(), self.mean.ncols());
        }
        &self.m2 / (self.count as f64 - 1.0)
    }

    /// Standard error of each cell mean.
    pub fn standard_error(&self) -> DMatrix<f64> {
        let k = self.count.max(1) as f64;
        self.variance().map(|v| (v / k).sqrt())
    }
}

/// Post burn-in output of one chain.
#[derive(Debug, Clone)]
pub struct Chain {
    pub model: ModelKind,
    pub index: usize,
    pub seed: u64,
    pub n_iter: usize,
    pub n_burn: usize,
    pub draws: Vec<Draw>,
    /// Post burn-in acceptance rate of the `phi` proposal.
    pub accept_phi: f64,
    pub accept_nu: f64,
    /// Standard deviation of the `ln phi` step after adaptation.
    pub final_log_step: f64,
    /// PMCC of replicated observations `V + eps` at observed cells.
    pub pmcc: f64,
    /// Moments of `V_t(s)` over retained draws.
    pub latent: CellMoments,
    /// Moments of the replicated observation `V + eps` over retained draws.
    pub replicate: CellMoments,
    /// Moments of the imputed `o*` (meaningful at unobserved cells).
    pub imputed: CellMoments,
    pub mean_sigma_eps2: f64,
}

type Picker = Box<dyn Fn(&Draw) -> Option<f64>>;

impl Chain {
    /// Wraps externally produced draws, e.g. read back from NDJSON.
    pub fn from_draws(model: ModelKind, n_burn: usize, draws: Vec<Draw>) -> Chain {
        let n_iter = n_burn + draws.len();
        let mean_sigma_eps2 = if draws.is_empty() {
            0.0
        } else {
            draws.iter().map(|d| d.sigma_eps2).sum::<f64>() / draws.len() as f64
        };
        Chain {
            model,
            index: draws.first().map_or(0, |d| d.chain),
            seed: 0,
            n_iter,
            n_burn,
            draws,
            accept_phi: 0.0,
            accept_nu: 0.0,
            final_log_step: 0.0,
            pmcc: f64::NAN,
            latent: CellMoments::new(0, 0),
            replicate: CellMoments::new(0, 0),
            imputed: CellMoments::new(0, 0),
            mean_sigma_eps2,
        }
    }

    /// Draws of one scalar parameter by name (`beta_<k>`, `rho`, `sigma_eps2`,
    /// `sigma_eta2`, `phi`, `nu`, `sigma2`).
    pub fn trace(&self, name: &str) -> Option<Vec<f64>> {
        let pick: Picker = match name {
            "rho" => Box::new(|d| Some(d.rho)),
            "sigma_eps2" => Box::new(|d| Some(d.sigma_eps2)),
            "sigma_eta2" => Box::new(|d| Some(d.sigma_eta2)),
            "phi" => Box::new(|d| Some(d.phi)),
            "nu" => Box::new(|d| Some(d.nu)),
            "sigma2" => Box::new(|d| Some(d.sigma2)),
            other => {
                let k: usize = other.strip_prefix("beta_")?.parse().ok()?;
                Box::new(move |d| d.beta.get(k).copied())
            }
        };
        self.draws.iter().map(pick).collect()
    }
}

/// Starting state: OLS `beta` on observed cells, `rho = 0`, unit variances,
/// `phi` = 1 / median pairwise distance, `nu` at the middle of the grid,
/// `V = O` with unobserved cells at the observed mean of their slot,
/// `mu = V_0 = V_1`.
pub fn initial_theta(panel: &Panel, priors: &PriorSpec) -> Result<Theta> {
    priors.validate()?;
    let (n, t_len, m) = (panel.n_sites(), panel.n_slots(), panel.n_features());
    let mut xtx = DMatrix::<f64>::zeros(m, m);
    let mut xty = DVector::<f64>::zeros(m);
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..t_len {
        let x = panel.features(t);
        for i in 0..n {
            if panel.is_observed(i, t) {
                let row = x.row(i).transpose();
                xtx += &row * row.transpose();
                xty += &row * panel.obs()[(i, t)];
                total += panel.obs()[(i, t)];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid("panel has no observed cells"));
    }
    let beta = match xtx.clone().cholesky() {
        Some(c) => c.solve(&xty),
        None => {
            let ridge = xtx + DMatrix::identity(m, m) * 1e-8;
            ridge
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("initial least-squares system".into()))?
                .solve(&xty)
        }
    };
    let global = total / count as f64;
    let mut latent = panel.obs().clone();
    for t in 0..t_len {
        let (s, c) = (0..n)
            .filter(|&i| panel.is_observed(i, t))
            .fold((0.0, 0usize), |(s, c), i| (s + panel.obs()[(i, t)], c + 1));
        let fill = if c > 0 { s / c as f64 } else { global };
        for i in 0..n {
            if !panel.is_observed(i, t) {
                latent[(i, t)] = fill;
            }
        }
    }
    let phi = panel.grid().median_pairwise_distance().filter(|d| *d > 0.0).map_or(1.0, |d| 1.0 / d);
    let first = if t_len > 0 { latent.column(0).into_owned() } else { DVector::from_element(n, global) };
    Ok(Theta {
        beta,
        rho: 0.0,
        sigma_eps2: 1.0,
        sigma_eta2: 1.0,
        phi,
        nu: priors.nu_grid[priors.nu_grid.len() / 2],
        mu: first.clone(),
        sigma2: 1.0,
        latent,
        latent0: first,
    })
}

const LOG_STEP_BOUNDS: (f64, f64) = (-9.0, 2.5);

/// Runs one chain as chain number 0 seeded with `config.seed`.
pub fn run_chain(panel: &Panel, config: &ChainConfig) -> Result<Chain> {
    run_indexed(panel, config, 0, config.seed)
}

/// Runs `n_chains` chains in parallel with seeds derived from
/// `(config.seed, chain index)`. Output order follows the chain index.
pub fn run_chains(panel: &Panel, config: &ChainConfig, n_chains: usize) -> Result<Vec<Chain>> {
    if n_chains == 0 {
        return Err(Error::invalid("at least one chain is required"));
    }
    (0..n_chains)
        .into_par_iter()
        .map(|k| run_indexed(panel, config, k, derive_seed(config.seed, k as u64)))
        .collect()
}

fn run_indexed(panel: &Panel, config: &ChainConfig, index: usize, seed: u64) -> Result<Chain> {
    config.validate()?;
    let kind = config.model;
    let priors = &config.priors;
    let mut theta = match &config.init {
        Some(t) => t.clone(),
        None => initial_theta(panel, priors)?,
    };
    if kind == ModelKind::Gp {
        theta.rho = 0.0;
    }
    theta.check(panel)?;
    let mut rng = seeded(seed);
    let mut sampler = Sampler::new(panel, priors, kind, config.jitter, &theta)?;

    let (n, t_len) = (panel.n_sites(), panel.n_slots());
    let mut latent_m = CellMoments::new(n, t_len);
    let mut replicate_m = CellMoments::new(n, t_len);
    let mut imputed_m = CellMoments::new(n, t_len);
    let mut draws = Vec::with_capacity(config.n_iter - config.n_burn);
    let mut log_step = config.tuning.proposal_sd_phi.ln();
    let (mut acc_phi, mut acc_nu) = (0usize, 0usize);
    let (mut win_phi, mut win_nu) = (0usize, 0usize);
    let mut sum_eps = 0.0;
    // Polyak averaging of the log step over the second half of burn-in.
    let avg_from = config.n_burn / 2;
    let (mut step_sum, mut step_count) = (0.0, 0usize);

    for iter in 0..config.n_iter {
        if iter == config.n_burn && step_count > 0 {
            log_step = step_sum / step_count as f64;
        }
        let lat = sampler.sample_latents(&theta, &mut rng)?;
        theta.latent = lat.latent;
        theta.latent0 = lat.latent0;
        theta.mu = lat.mu;
        theta.beta = sampler.sample_beta(&theta, &mut rng)?;
        if kind == ModelKind::Ar {
            theta.rho = sampler.sample_rho(&theta, &mut rng);
        }
        let (eps, eta, s2) = sampler.sample_variances(&theta, &mut rng);
        theta.sigma_eps2 = eps;
        theta.sigma_eta2 = eta;
        theta.sigma2 = s2;
        let mh = sampler.mh_step_phi_nu(&theta, log_step.exp(), &mut rng)?;
        theta.phi = mh.phi;
        theta.nu = mh.nu;
        ensure_finite(&theta, iter)?;

        let retained = iter >= config.n_burn;
        if retained {
            acc_phi += usize::from(mh.accepted_phi);
            acc_nu += usize::from(mh.accepted_nu);
            let sd = theta.sigma_eps2.sqrt();
            let rep = theta.latent.map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                v + sd * z
            });
            latent_m.push(&theta.latent);
            replicate_m.push(&rep);
            imputed_m.push(&lat.imputed);
            sum_eps += theta.sigma_eps2;
            draws.push(Draw::from_theta(index, iter, &theta, config.store_latents));
        } else if config.tuning.adapt_during_burnin {
            let gain = ((iter + 1) as f64).powf(-0.6);
            let a = if mh.accepted_phi { 1.0 } else { 0.0 };
            log_step = (log_step + gain * (a - config.tuning.adapt_target))
                .clamp(LOG_STEP_BOUNDS.0, LOG_STEP_BOUNDS.1);
            if iter >= avg_from {
                step_sum += log_step;
                step_count += 1;
            }
        }
        win_phi += usize::from(mh.accepted_phi);
        win_nu += usize::from(mh.accepted_nu);

        if config.log_every > 0 && (iter + 1) % config.log_every == 0 {
            let pmcc = if replicate_m.count() > 1 {
                format!("{:.4}", replicate_pmcc(panel, &replicate_m))
            } else {
                "n/a".to_string()
            };
            log::info!(
                "chain {index} iter {}: pmcc {pmcc}, accept phi {:.3}, accept nu {:.3}, rho {:.4}, phi {:.4e}, nu {:.2}",
                iter + 1,
                win_phi as f64 / config.log_every as f64,
                win_nu as f64 / config.log_every as f64,
                theta.rho,
                theta.phi,
                theta.nu
            );
            win_phi = 0;
            win_nu = 0;
        }
    }

    let kept = draws.len() as f64;
    let accept_phi = acc_phi as f64 / kept;
    let (lo, hi) = config.tuning.target_accept;
    if !(lo..=hi).contains(&accept_phi) {
        log::warn!("chain {index}: phi acceptance {accept_phi:.3} outside [{lo}, {hi}]");
    }
    Ok(Chain {
        model: kind,
        index,
        seed,
        n_iter: config.n_iter,
        n_burn: config.n_burn,
        draws,
        accept_phi,
        accept_nu: acc_nu as f64 / kept,
        final_log_step: log_step.exp(),
        pmcc: replicate_pmcc(panel, &replicate_m),
        latent: latent_m,
        replicate: replicate_m,
        imputed: imputed_m,
        mean_sigma_eps2: sum_eps / kept,
    })
}

/// Sum over observed cells of squared error of the replicate mean plus the
/// replicate variance.
fn replicate_pmcc(panel: &Panel, rep: &CellMoments) -> f64 {
    let var = rep.variance();
    let mut total = 0.0;
    for t in 0..panel.n_slots() {
        for i in 0..panel.n_sites() {
            if panel.is_observed(i, t) {
                let d = rep.mean()[(i, t)] - panel.obs()[(i, t)];
                total += d * d + var[(i, t)];
            }
        }
    }
    total
}

/// PMCC pooled over several chains fitted to the same panel.
pub fn pooled_pmcc(panel: &Panel, chains: &[Chain]) -> Result<f64> {
    let first = chains.first().ok_or_else(|| Error::invalid("no chains to pool"))?;
    let (rows, cols) = first.replicate.mean().shape();
    if chains.iter().any(|c| c.replicate.count() == 0 || c.replicate.mean().shape() != (rows, cols)) {
        return Err(Error::invalid("chains carry no replicate moments for this panel"));
    }
    // Combine per-cell moments with the parallel Welford rule.
    let mut pooled = CellMoments::new(rows, cols);
    for c in chains {
        let (na, nb) = (pooled.count as f64, c.replicate.count as f64);
        let nt = na + nb;
        let delta = c.replicate.mean() - &pooled.mean;
        pooled.m2 += &c.replicate.m2 + delta.component_mul(&delta) * (na * nb / nt);
        pooled.mean += delta * (nb / nt);
        pooled.count += c.replicate.count;
    }
    Ok(replicate_pmcc(panel, &pooled))
}
