use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Panel, Theta};
use crate::error::Result;
use crate::kernel::{correlation_matrix, SiteGrid, DEFAULT_JITTER};
use crate::rng::{seeded, SimRng};

/// Output of a forward simulation, with the latent truth kept for checks.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: Panel,
    pub latent: DMatrix<f64>,
    pub latent0: DVector<f64>,
}

/// Intercept column plus `m - 1` independent standard-normal covariates per
/// site and slot.
pub fn simulate_features<R: Rng + ?Sized>(n_sites: usize, n_slots: usize, m: usize, rng: &mut R) -> Vec<DMatrix<f64>> {
    (0..n_slots)
        .map(|_| {
            DMatrix::from_fn(n_sites, m, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) })
        })
        .collect()
}

/// Forward simulation of the AR recursion: `V_0 ~ N(mu, sigma2 zeta)`, then
/// `V_t = rho V_{t-1} + X_t beta + eta_t` and `O_t = V_t + eps_t`. Setting
/// `rho = 0` yields data from the GP model. Every cell is observed.
pub fn simulate<R: Rng + ?Sized>(
    grid: &SiteGrid,
    features: Vec<DMatrix<f64>>,
    theta: &Theta,
    rng: &mut R,
) -> Result<Simulated> {
    let n = grid.len();
    let n_slots = features.len();
    let zeta = correlation_matrix(grid, theta.phi, theta.nu, DEFAULT_JITTER)?;
    let factor = zeta.factor();
    let sd_eta = theta.sigma_eta2.sqrt();
    let sd_eps = theta.sigma_eps2.sqrt();

    let latent0 = &theta.mu + factor.sample_zero_mean(rng) * theta.sigma2.sqrt();
    let mut latent = DMatrix::zeros(n, n_slots);
    let mut obs = DMatrix::zeros(n, n_slots);
    let mut prev = latent0.clone();
    for (t, x) in features.iter().enumerate() {
        let v = &prev * theta.rho + x * &theta.beta + factor.sample_zero_mean(rng) * sd_eta;
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            obs[(i, t)] = v[i] + sd_eps * e;
        }
        latent.set_column(t, &v);
        prev = v;
    }
    let panel = Panel::new(grid.clone(), obs, DMatrix::from_element(n, n_slots, true), features)?;
    Ok(Simulated {
        panel,
        latent,
        latent0,
    })
}

/// Simulates a fully observed panel with standard-normal covariates; the
/// number of features is `theta.beta.len()`.
pub fn simulate_panel(grid: &SiteGrid, n_slots: usize, theta: &Theta, seed: u64) -> Result<Panel> {
    let mut rng: SimRng = seeded(seed);
    let features = simulate_features(grid.len(), n_slots, theta.beta.len(), &mut rng);
    simulate(grid, features, theta, &mut rng).map(|s| s.panel)
}
