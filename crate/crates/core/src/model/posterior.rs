use nalgebra::DVector;

use super::{ModelKind, Panel, PriorSpec, Theta};
use crate::error::Result;
use crate::kernel::{correlation_matrix, DEFAULT_JITTER};
use crate::linalg::SpdFactor;

/// `-(x - mean)^2 / (2 var)`: a normal log-density without its constant.
pub fn log_normal_kernel(x: f64, mean: f64, var: f64) -> f64 {
    -(x - mean) * (x - mean) / (2.0 * var)
}

/// `(a - 1) ln x - b x`: a Gamma(shape a, rate b) log-density without its constant.
pub fn log_gamma_kernel(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() - b * x
}

/// The joint log-posterior split into its additive pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPosteriorTerms {
    /// `-(N/2) ln sigma_eps2 - SS / (2 sigma_eps2)` over observed cells.
    pub observation: f64,
    /// One entry per slot: `-(1/2) ln|sigma_eta2 zeta| - r' zeta^-1 r / (2 sigma_eta2)`.
    pub evolution: Vec<f64>,
    /// `-(1/2) ln|sigma2 zeta| - (V0 - mu)' zeta^-1 (V0 - mu) / (2 sigma2)`; zero for GP.
    pub initial: f64,
    pub log_prior: f64,
}

impl LogPosteriorTerms {
    pub fn total(&self) -> f64 {
        self.observation + self.evolution.iter().sum::<f64>() + self.initial + self.log_prior
    }
}

/// `V_t - rho V_{t-1} - X_t beta` (AR) or `V_t - X_t beta` (GP).
pub(crate) fn evolution_residual(kind: ModelKind, theta: &Theta, panel: &Panel, slot: usize) -> DVector<f64> {
    let mean = panel.features(slot) * &theta.beta;
    let mut r = theta.latent.column(slot) - mean;
    if kind == ModelKind::Ar {
        r -= theta.previous_latent(slot) * theta.rho;
    }
    r
}

/// Sum of squared nugget residuals over observed cells and the number of cells.
pub(crate) fn nugget_sum_of_squares(theta: &Theta, panel: &Panel) -> (f64, usize) {
    let mut ss = 0.0;
    let mut count = 0;
    for t in 0..panel.n_slots() {
        for i in 0..panel.n_sites() {
            if panel.is_observed(i, t) {
                let d = panel.obs()[(i, t)] - theta.latent[(i, t)];
                ss += d * d;
                count += 1;
            }
        }
    }
    (ss, count)
}

/// Sum over slots of `r_t' zeta^-1 r_t`.
pub(crate) fn evolution_quad_sum(kind: ModelKind, theta: &Theta, panel: &Panel, zeta: &SpdFactor) -> f64 {
    (0..panel.n_slots())
        .map(|t| zeta.quad_form(&evolution_residual(kind, theta, panel, t)))
        .sum()
}

pub(crate) fn log_prior(kind: ModelKind, theta: &Theta, priors: &PriorSpec) -> f64 {
    if priors.nu_index(theta.nu).is_none() {
        return f64::NEG_INFINITY;
    }
    let (a, b) = (priors.gamma_a, priors.gamma_b);
    let mut lp: f64 = theta
        .beta
        .iter()
        .map(|&bk| log_normal_kernel(bk, priors.beta_mean, priors.beta_var))
        .sum();
    lp += log_gamma_kernel(1.0 / theta.sigma_eps2, a, b);
    lp += log_gamma_kernel(1.0 / theta.sigma_eta2, a, b);
    lp += log_gamma_kernel(theta.phi, a, b);
    if kind == ModelKind::Ar {
        lp += log_normal_kernel(theta.rho, priors.rho_mean, priors.rho_var);
        lp += log_gamma_kernel(1.0 / theta.sigma2, a, b);
        lp += theta
            .mu
            .iter()
            .map(|&m| log_normal_kernel(m, 0.0, priors.mu_var))
            .sum::<f64>();
    }
    lp
}

/// Each additive piece of the joint log-posterior. Precisions carry the Gamma
/// priors, so the result is a density in `(1/sigma_eps2, 1/sigma_eta2, 1/sigma2)`.
pub fn log_posterior_terms(
    kind: ModelKind,
    theta: &Theta,
    panel: &Panel,
    priors: &PriorSpec,
    jitter: f64,
) -> Result<LogPosteriorTerms> {
    theta.check(panel)?;
    let zeta = correlation_matrix(panel.grid(), theta.phi, theta.nu, jitter)?;
    let factor = zeta.factor();
    let n = panel.n_sites() as f64;

    let (ss, count) = nugget_sum_of_squares(theta, panel);
    let observation = -(count as f64) / 2.0 * theta.sigma_eps2.ln() - ss / (2.0 * theta.sigma_eps2);

    let log_det_eta = n * theta.sigma_eta2.ln() + factor.log_det();
    let evolution = (0..panel.n_slots())
        .map(|t| {
            let r = evolution_residual(kind, theta, panel, t);
            -0.5 * log_det_eta - factor.quad_form(&r) / (2.0 * theta.sigma_eta2)
        })
        .collect();

    let initial = match kind {
        ModelKind::Ar => {
            let d = &theta.latent0 - &theta.mu;
            -0.5 * (n * theta.sigma2.ln() + factor.log_det()) - factor.quad_form(&d) / (2.0 * theta.sigma2)
        }
        ModelKind::Gp => 0.0,
    };

    Ok(LogPosteriorTerms {
        observation,
        evolution,
        initial,
        log_prior: log_prior(kind, theta, priors),
    })
}

pub fn log_joint_posterior(kind: ModelKind, theta: &Theta, panel: &Panel, priors: &PriorSpec) -> Result<f64> {
    log_posterior_terms(kind, theta, panel, priors, DEFAULT_JITTER).map(|t| t.total())
}

/// Joint log-posterior of the AR model, up to an additive constant.
pub fn log_joint_posterior_ar(theta: &Theta, panel: &Panel, priors: &PriorSpec) -> Result<f64> {
    log_joint_posterior(ModelKind::Ar, theta, panel, priors)
}

/// Joint log-posterior of the GP model; `rho`, `V_0`, `mu` and `sigma2` are ignored.
pub fn log_joint_posterior_gp(theta: &Theta, panel: &Panel, priors: &PriorSpec) -> Result<f64> {
    log_joint_posterior(ModelKind::Gp, theta, panel, priors)
}
