//! Full-conditional updates for the AR and GP models.
//!
//! Every Gaussian block is expressed in canonical form `N(P^-1 chi, P^-1)` so
//! its log-density kernel `-x'Px/2 + chi'x` can be compared directly with the
//! joint log-posterior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::kernel::{distance_matrix, CorrelationMatrix};
use crate::linalg::SpdFactor;
use crate::model::{
    evolution_quad_sum, log_gamma_kernel, nugget_sum_of_squares, ModelKind, Panel, PriorSpec, Theta,
};

/// Cap on rejection attempts for `rho` before the inverse-CDF fallback.
const RHO_REJECTION_ATTEMPTS: usize = 100;

/// A Gaussian full conditional `N(P^-1 chi, P^-1)`.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub precision: DMatrix<f64>,
    pub chi: DVector<f64>,
}

impl GaussianConditional {
    /// `-x'Px/2 + chi'x`, the log-density up to a constant.
    pub fn log_kernel(&self, x: &DVector<f64>) -> f64 {
        -0.5 * x.dot(&(&self.precision * x)) + self.chi.dot(x)
    }

    pub fn factor(&self, what: &str) -> Result<SpdFactor> {
        SpdFactor::new(self.precision.clone(), what)
    }

    pub fn mean(&self, what: &str) -> Result<DVector<f64>> {
        Ok(self.factor(what)?.solve(&self.chi))
    }

    pub fn sample<R: Rng + ?Sized>(&self, what: &str, rng: &mut R) -> Result<DVector<f64>> {
        Ok(self.factor(what)?.sample_canonical(&self.chi, rng))
    }
}

/// Shape and rate of a Gamma full conditional on a precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaConditional {
    pub shape: f64,
    pub rate: f64,
}

impl GammaConditional {
    /// Log-density kernel in the precision `tau`.
    pub fn log_kernel(&self, tau: f64) -> f64 {
        log_gamma_kernel(tau, self.shape, self.rate)
    }

    /// Draws the variance `1 / tau`.
    pub fn sample_variance<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        assert!(self.rate > 0.0 && self.shape > 0.0, "gamma conditional must have positive parameters");
        let tau = Gamma::new(self.shape, 1.0 / self.rate)
            .expect("positive gamma parameters")
            .sample(rng);
        1.0 / tau
    }
}

/// Conditionals of the three variance blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceConditionals {
    pub sigma_eps2: GammaConditional,
    pub sigma_eta2: GammaConditional,
    /// Absent for the GP model.
    pub sigma2: Option<GammaConditional>,
}

/// New latent values from one sweep of the latent block.
#[derive(Debug, Clone)]
pub struct LatentDraw {
    pub latent: DMatrix<f64>,
    pub latent0: DVector<f64>,
    pub mu: DVector<f64>,
    /// Draws `o* ~ N(V_t(s), sigma_eps2)` at unobserved cells; zero elsewhere.
    pub imputed: DMatrix<f64>,
}

/// Result of one Metropolis-Hastings sweep over `(phi, nu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOutcome {
    pub phi: f64,
    pub nu: f64,
    pub accepted_phi: bool,
    pub accepted_nu: bool,
}

#[derive(Debug, Clone)]
struct Spatial {
    phi: f64,
    nu: f64,
    corr: CorrelationMatrix,
    /// `zeta^-1`
    inv: DMatrix<f64>,
}

impl Spatial {
    fn build(distances: &DMatrix<f64>, phi: f64, nu: f64, jitter: f64) -> Result<Self> {
        let corr = CorrelationMatrix::from_distances(distances, phi, nu, jitter)?;
        let inv = corr.factor().inverse();
        Ok(Spatial { phi, nu, corr, inv })
    }
}

/// Full-conditional machinery bound to one panel. Caches the correlation
/// matrix for the current `(phi, nu)`; callers keep `theta.phi` and
/// `theta.nu` in sync through [`Sampler::mh_step_phi_nu`] or
/// [`Sampler::sync_spatial`].
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    panel: &'a Panel,
    priors: &'a PriorSpec,
    kind: ModelKind,
    jitter: f64,
    distances: DMatrix<f64>,
    spatial: Spatial,
}

impl<'a> Sampler<'a> {
    pub fn new(panel: &'a Panel, priors: &'a PriorSpec, kind: ModelKind, jitter: f64, theta: &Theta) -> Result<Self> {
        priors.validate()?;
        theta.check(panel)?;
        let distances = distance_matrix(panel.grid());
        let spatial = Spatial::build(&distances, theta.phi, theta.nu, jitter)?;
        Ok(Sampler {
            panel,
            priors,
            kind,
            jitter,
            distances,
            spatial,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Rebuilds the cached correlation matrix if `theta` moved `(phi, nu)`.
    pub fn sync_spatial(&mut self, theta: &Theta) -> Result<()> {
        if theta.phi != self.spatial.phi || theta.nu != self.spatial.nu {
            self.spatial = Spatial::build(&self.distances, theta.phi, theta.nu, self.jitter)?;
        }
        Ok(())
    }

    fn rho(&self, theta: &Theta) -> f64 {
        match self.kind {
            ModelKind::Ar => theta.rho,
            ModelKind::Gp => 0.0,
        }
    }

    /// `Sigma_eta^-1 = zeta^-1 / sigma_eta2`
    fn eta_precision(&self, theta: &Theta) -> DMatrix<f64> {
        &self.spatial.inv / theta.sigma_eta2
    }

    /// `V_t - rho V_{t-1}` (AR) or `V_t` (GP).
    fn innovation_target(&self, theta: &Theta, slot: usize) -> DVector<f64> {
        let v = theta.latent.column(slot).into_owned();
        match self.kind {
            ModelKind::Ar => v - theta.previous_latent(slot) * theta.rho,
            ModelKind::Gp => v,
        }
    }

    pub fn beta_conditional(&self, theta: &Theta) -> GaussianConditional {
        let m = self.panel.n_features();
        let p_eta = self.eta_precision(theta);
        let mut precision = DMatrix::identity(m, m) / self.priors.beta_var;
        let mut chi = DVector::from_element(m, self.priors.beta_mean / self.priors.beta_var);
        for t in 0..self.panel.n_slots() {
            let x = self.panel.features(t);
            let px = &p_eta * x;
            precision += x.transpose() * &px;
            chi += px.transpose() * self.innovation_target(theta, t);
        }
        GaussianConditional { precision, chi }
    }

    /// Mean and variance of the untruncated normal conditional of `rho`.
    pub fn rho_conditional(&self, theta: &Theta) -> (f64, f64) {
        let p_eta = self.eta_precision(theta);
        let mut precision = 1.0 / self.priors.rho_var;
        let mut chi = self.priors.rho_mean / self.priors.rho_var;
        for t in 0..self.panel.n_slots() {
            let prev = theta.previous_latent(t);
            let p_prev = &p_eta * &prev;
            precision += prev.dot(&p_prev);
            let target = theta.latent.column(t) - self.panel.features(t) * &theta.beta;
            chi += p_prev.dot(&target);
        }
        (chi / precision, 1.0 / precision)
    }

    pub fn variance_conditionals(&self, theta: &Theta) -> VarianceConditionals {
        let (a, b) = (self.priors.gamma_a, self.priors.gamma_b);
        let n = self.panel.n_sites() as f64;
        let (ss, count) = nugget_sum_of_squares(theta, self.panel);
        let factor = self.spatial.corr.factor();
        let q_eta = evolution_quad_sum(self.kind, theta, self.panel, factor);
        let sigma2 = match self.kind {
            ModelKind::Ar => {
                let d = &theta.latent0 - &theta.mu;
                Some(GammaConditional {
                    shape: n / 2.0 + a,
                    rate: b + 0.5 * factor.quad_form(&d),
                })
            }
            ModelKind::Gp => None,
        };
        VarianceConditionals {
            sigma_eps2: GammaConditional {
                shape: count as f64 / 2.0 + a,
                rate: b + 0.5 * ss,
            },
            sigma_eta2: GammaConditional {
                shape: n * self.panel.n_slots() as f64 / 2.0 + a,
                rate: b + 0.5 * q_eta,
            },
            sigma2,
        }
    }

    /// Conditional of `V_t`. Unobserved cells contribute no data precision.
    pub fn latent_conditional(&self, theta: &Theta, slot: usize) -> GaussianConditional {
        let n_slots = self.panel.n_slots();
        let rho = self.rho(theta);
        let p_eta = self.eta_precision(theta);
        let has_next = slot + 1 < n_slots && self.kind == ModelKind::Ar;
        let coef = if has_next { 1.0 + rho * rho } else { 1.0 };
        let mut precision = &p_eta * coef;
        let mut prior_mean = self.panel.features(slot) * &theta.beta;
        if self.kind == ModelKind::Ar {
            prior_mean += theta.previous_latent(slot) * rho;
        }
        if has_next {
            let next = theta.latent.column(slot + 1) - self.panel.features(slot + 1) * &theta.beta;
            prior_mean += next * rho;
        }
        let mut chi = &p_eta * prior_mean;
        for i in 0..self.panel.n_sites() {
            if self.panel.is_observed(i, slot) {
                precision[(i, i)] += 1.0 / theta.sigma_eps2;
                chi[i] += self.panel.obs()[(i, slot)] / theta.sigma_eps2;
            }
        }
        GaussianConditional { precision, chi }
    }

    /// Conditional of `V_0` (AR only).
    pub fn latent0_conditional(&self, theta: &Theta) -> GaussianConditional {
        let p_eta = self.eta_precision(theta);
        let p0 = &self.spatial.inv / theta.sigma2;
        let rho = theta.rho;
        let first = theta.latent.column(0) - self.panel.features(0) * &theta.beta;
        GaussianConditional {
            precision: &p_eta * (rho * rho) + &p0,
            chi: (&p_eta * first) * rho + &p0 * &theta.mu,
        }
    }

    /// Conditional of `mu` (AR only).
    pub fn mu_conditional(&self, theta: &Theta) -> GaussianConditional {
        let n = self.panel.n_sites();
        let p0 = &self.spatial.inv / theta.sigma2;
        GaussianConditional {
            precision: &p0 + DMatrix::identity(n, n) / self.priors.mu_var,
            chi: &p0 * &theta.latent0,
        }
    }

    pub fn sample_beta<R: Rng + ?Sized>(&self, theta: &Theta, rng: &mut R) -> Result<DVector<f64>> {
        self.beta_conditional(theta).sample("beta conditional precision", rng)
    }

    /// Draws `rho` from its normal conditional restricted to (-1, 1).
    pub fn sample_rho<R: Rng + ?Sized>(&self, theta: &Theta, rng: &mut R) -> f64 {
        let (mean, var) = self.rho_conditional(theta);
        truncated_normal_unit(mean, var.sqrt(), rng)
    }

    /// Draws `(sigma_eps2, sigma_eta2, sigma2)`; `sigma2` is carried over for GP.
    pub fn sample_variances<R: Rng + ?Sized>(&self, theta: &Theta, rng: &mut R) -> (f64, f64, f64) {
        let c = self.variance_conditionals(theta);
        let eps = c.sigma_eps2.sample_variance(rng);
        let eta = c.sigma_eta2.sample_variance(rng);
        let init = c.sigma2.map_or(theta.sigma2, |g| g.sample_variance(rng));
        (eps, eta, init)
    }

    /// One sweep over `V_1..V_T`, then `V_0` and `mu` (AR), then imputation of
    /// unobserved cells. Each block conditions on the freshest values.
    pub fn sample_latents<R: Rng + ?Sized>(&self, theta: &Theta, rng: &mut R) -> Result<LatentDraw> {
        let mut work = theta.clone();
        let n_slots = self.panel.n_slots();
        let mut full_factors: Vec<(f64, SpdFactor)> = Vec::with_capacity(2);
        for t in 0..n_slots {
            let cond = self.latent_conditional(&work, t);
            let fully_observed = (0..self.panel.n_sites()).all(|i| self.panel.is_observed(i, t));
            let v = if fully_observed {
                // Precision depends on t only through (1 + rho^2) vs 1.
                let key = cond.precision[(0, 0)];
                let pos = full_factors.iter().position(|(k, _)| *k == key);
                let idx = match pos {
                    Some(i) => i,
                    None => {
                        full_factors.push((key, cond.factor("latent conditional precision")?));
                        full_factors.len() - 1
                    }
                };
                full_factors[idx].1.sample_canonical(&cond.chi, rng)
            } else {
                cond.sample("latent conditional precision", rng)?
            };
            work.latent.set_column(t, &v);
        }
        if self.kind == ModelKind::Ar {
            work.latent0 = self.latent0_conditional(&work).sample("initial-state precision", rng)?;
            work.mu = self.mu_conditional(&work).sample("initial-mean precision", rng)?;
        }
        let sd = theta.sigma_eps2.sqrt();
        let (n, _) = work.latent.shape();
        let mut imputed = DMatrix::zeros(n, n_slots);
        for t in 0..n_slots {
            for i in 0..n {
                if !self.panel.is_observed(i, t) {
                    let z: f64 = rng.sample(StandardNormal);
                    imputed[(i, t)] = work.latent[(i, t)] + sd * z;
                }
            }
        }
        Ok(LatentDraw {
            latent: work.latent,
            latent0: work.latent0,
            mu: work.mu,
            imputed,
        })
    }

    fn kernel_with(&self, theta: &Theta, corr: &CorrelationMatrix) -> f64 {
        let factor = corr.factor();
        let n_slots = self.panel.n_slots() as f64;
        let q_eta = evolution_quad_sum(self.kind, theta, self.panel, factor);
        let mut k = -0.5 * n_slots * factor.log_det() - q_eta / (2.0 * theta.sigma_eta2);
        if self.kind == ModelKind::Ar {
            let d = &theta.latent0 - &theta.mu;
            k += -0.5 * factor.log_det() - factor.quad_form(&d) / (2.0 * theta.sigma2);
        }
        k
    }

    /// Log of the `(phi, nu)` full-conditional kernel: the spatial-effect
    /// term, the initial-state term (AR) and the Gamma prior on `phi`. Fails
    /// when the correlation matrix cannot be factored.
    pub fn spatial_log_kernel(&self, theta: &Theta, phi: f64, nu: f64) -> Result<f64> {
        let prior = log_gamma_kernel(phi, self.priors.gamma_a, self.priors.gamma_b);
        if phi == self.spatial.phi && nu == self.spatial.nu {
            return Ok(self.kernel_with(theta, &self.spatial.corr) + prior);
        }
        let corr = CorrelationMatrix::from_distances(&self.distances, phi, nu, self.jitter)?;
        Ok(self.kernel_with(theta, &corr) + prior)
    }

    /// Random-walk step on `ln phi` with step `log_step_sd`, then an
    /// independence proposal for `nu` drawn uniformly from the prior grid.
    /// Proposals whose kernel is not finite are rejected.
    pub fn mh_step_phi_nu<R: Rng + ?Sized>(
        &mut self,
        theta: &Theta,
        log_step_sd: f64,
        rng: &mut R,
    ) -> Result<MhOutcome> {
        let (phi, nu) = (theta.phi, theta.nu);
        let current = self.spatial_log_kernel(theta, phi, nu)?;

        let z: f64 = rng.sample(StandardNormal);
        let phi_prop = phi * (log_step_sd * z).exp();
        let (accepted_phi, current) = match self.propose(theta, phi_prop, nu) {
            Some((k, spatial)) => {
                // ln phi random walk: Jacobian ln(phi'/phi).
                let log_r = k - current + (phi_prop / phi).ln();
                if accept(log_r, rng) {
                    self.spatial = spatial;
                    (true, k)
                } else {
                    (false, current)
                }
            }
            None => {
                let _: f64 = rng.random();
                (false, current)
            }
        };
        let phi_now = self.spatial.phi;

        let grid = &self.priors.nu_grid;
        let nu_prop = grid[rng.random_range(0..grid.len())];
        let accepted_nu = match self.propose(theta, phi_now, nu_prop) {
            Some((k, spatial)) => {
                if accept(k - current, rng) {
                    self.spatial = spatial;
                    true
                } else {
                    false
                }
            }
            None => {
                let _: f64 = rng.random();
                false
            }
        };
        Ok(MhOutcome {
            phi: self.spatial.phi,
            nu: self.spatial.nu,
            accepted_phi,
            accepted_nu,
        })
    }

    fn propose(&self, theta: &Theta, phi: f64, nu: f64) -> Option<(f64, Spatial)> {
        if !(phi > 0.0) || !phi.is_finite() {
            return None;
        }
        let spatial = Spatial::build(&self.distances, phi, nu, self.jitter).ok()?;
        let k = self.kernel_with(theta, &spatial.corr)
            + log_gamma_kernel(phi, self.priors.gamma_a, self.priors.gamma_b);
        k.is_finite().then_some((k, spatial))
    }
}

/// Accept when `r >= 1`, otherwise with probability `r`.
fn accept<R: Rng + ?Sized>(log_r: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    if log_r >= 0.0 {
        return true;
    }
    u.ln() < log_r
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// `N(mean, sd^2)` restricted to (-1, 1): rejection first, inverse CDF after
/// [`RHO_REJECTION_ATTEMPTS`] misses.
pub fn truncated_normal_unit<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    for _ in 0..RHO_REJECTION_ATTEMPTS {
        let z: f64 = rng.sample(StandardNormal);
        let x = mean + sd * z;
        if x > -1.0 && x < 1.0 {
            return x;
        }
    }
    // Reflect so the mean sits at or left of zero, then work with upper tails.
    let (m, sign) = if mean > 0.0 { (-mean, -1.0) } else { (mean, 1.0) };
    let lo = (-1.0 - m) / sd;
    let hi = (1.0 - m) / sd;
    // Upper-tail probabilities Q(z) = Phi(-z); Q(lo) >= Q(hi).
    let q_lo = std_normal_cdf(-lo);
    let q_hi = std_normal_cdf(-hi);
    let u: f64 = rng.random();
    let q = q_hi + u * (q_lo - q_hi);
    let x = if q > 0.0 && q < 1.0 {
        m - sd * std_normal_quantile(q)
    } else {
        -1.0
    };
    let limit = 1.0 - 1e-12;
    (sign * x).clamp(-limit, limit)
}

/// Builds a sampler for the AR model and draws `beta`.
pub fn sample_beta<R: Rng + ?Sized>(theta: &Theta, panel: &Panel, priors: &PriorSpec, rng: &mut R) -> Result<DVector<f64>> {
    Sampler::new(panel, priors, ModelKind::Ar, crate::kernel::DEFAULT_JITTER, theta)?.sample_beta(theta, rng)
}

/// Builds a sampler for the AR model and draws `rho`.
pub fn sample_rho<R: Rng + ?Sized>(theta: &Theta, panel: &Panel, priors: &PriorSpec, rng: &mut R) -> Result<f64> {
    Ok(Sampler::new(panel, priors, ModelKind::Ar, crate::kernel::DEFAULT_JITTER, theta)?.sample_rho(theta, rng))
}

/// Builds a sampler for the AR model and draws `(sigma_eps2, sigma_eta2, sigma2)`.
pub fn sample_variances<R: Rng + ?Sized>(
    theta: &Theta,
    panel: &Panel,
    priors: &PriorSpec,
    rng: &mut R,
) -> Result<(f64, f64, f64)> {
    Ok(Sampler::new(panel, priors, ModelKind::Ar, crate::kernel::DEFAULT_JITTER, theta)?.sample_variances(theta, rng))
}

/// Builds a sampler for the AR model and sweeps the latent block.
pub fn sample_latents<R: Rng + ?Sized>(theta: &Theta, panel: &Panel, priors: &PriorSpec, rng: &mut R) -> Result<LatentDraw> {
    Sampler::new(panel, priors, ModelKind::Ar, crate::kernel::DEFAULT_JITTER, theta)?.sample_latents(theta, rng)
}

/// Builds a sampler for the AR model and runs one `(phi, nu)` sweep.
pub fn mh_step_phi_nu<R: Rng + ?Sized>(
    theta: &Theta,
    panel: &Panel,
    priors: &PriorSpec,
    log_step_sd: f64,
    rng: &mut R,
) -> Result<MhOutcome> {
    Sampler::new(panel, priors, ModelKind::Ar, crate::kernel::DEFAULT_JITTER, theta)?.mh_step_phi_nu(theta, log_step_sd, rng)
}

pub(crate) fn ensure_finite(theta: &Theta, iter: usize) -> Result<()> {
    let scalars = [
        ("rho", theta.rho),
        ("sigma_eps2", theta.sigma_eps2),
        ("sigma_eta2", theta.sigma_eta2),
        ("sigma2", theta.sigma2),
        ("phi", theta.phi),
    ];
    for (name, v) in scalars {
        if !v.is_finite() {
            return Err(Error::Divergent {
                iter,
                what: format!("{name} = {v}"),
            });
        }
    }
    let blocks: [(&str, &[f64]); 4] = [
        ("beta", theta.beta.as_slice()),
        ("latent", theta.latent.as_slice()),
        ("latent0", theta.latent0.as_slice()),
        ("mu", theta.mu.as_slice()),
    ];
    for (name, vals) in blocks {
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergent {
                iter,
                what: format!("non-finite entry in {name}"),
            });
        }
    }
    Ok(())
}
