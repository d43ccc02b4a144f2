//! Data panel, parameter vector, priors and the joint log-posterior of the
//! hierarchical space-time models
//!
//! ```text
//! O_t = V_t + eps_t,                     eps_t ~ N(0, sigma_eps2 I)
//! V_t = rho V_{t-1} + X_t beta + eta_t   eta_t ~ N(0, sigma_eta2 zeta)   (AR)
//! V_t =               X_t beta + eta_t                                   (GP)
//! V_0 ~ N(mu, sigma2 zeta)                                               (AR)
//! ```
//!
//! Time slots are 0-based in code and files: slot `t` of the panel is column
//! `t` of the observation matrix, and `V_{t-1}` of slot 0 is `V_0`.

mod io;
mod posterior;
mod simulate;

pub use io::{read_panel_csv, write_panel_csv};
pub use posterior::{
    log_gamma_kernel, log_joint_posterior, log_joint_posterior_ar, log_joint_posterior_gp,
    log_normal_kernel, log_posterior_terms, LogPosteriorTerms,
};
pub(crate) use posterior::{evolution_quad_sum, nugget_sum_of_squares};
pub use simulate::{simulate, simulate_features, simulate_panel, Simulated};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SiteGrid;

/// Which latent process the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `V_t = rho V_{t-1} + X_t beta + eta_t`
    #[default]
    Ar,
    /// `V_t = X_t beta + eta_t`
    Gp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ar" => Ok(ModelKind::Ar),
            "gp" => Ok(ModelKind::Gp),
            other => Err(Error::invalid(format!("unknown model {other:?}, expected ar or gp"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Ar => "ar",
            ModelKind::Gp => "gp",
        })
    }
}

/// The space-time data cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    grid: SiteGrid,
    obs: DMatrix<f64>,
    observed: DMatrix<bool>,
    features: Vec<DMatrix<f64>>,
}

impl Panel {
    /// `obs` and `observed` are `n x T`; `features` holds one `n x m` matrix per
    /// slot whose first column is the intercept (all ones).
    pub fn new(
        grid: SiteGrid,
        obs: DMatrix<f64>,
        observed: DMatrix<bool>,
        features: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = grid.len();
        let t = features.len();
        if obs.shape() != (n, t) || observed.shape() != (n, t) {
            return Err(Error::invalid(format!(
                "panel shape mismatch: grid has {n} sites, {t} feature slots, obs is {:?}, mask is {:?}",
                obs.shape(),
                observed.shape()
            )));
        }
        let m = features.first().map_or(1, |x| x.ncols());
        if m == 0 {
            return Err(Error::invalid("feature matrices need at least the intercept column"));
        }
        for (slot, x) in features.iter().enumerate() {
            if x.shape() != (n, m) {
                return Err(Error::invalid(format!("features of slot {slot} are {:?}, expected ({n}, {m})", x.shape())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite feature in slot {slot}")));
            }
            if x.column(0).iter().any(|&v| v != 1.0) {
                return Err(Error::invalid(format!("first feature column of slot {slot} must be all ones")));
            }
        }
        for i in 0..n {
            for s in 0..t {
                if observed[(i, s)] && !obs[(i, s)].is_finite() {
                    return Err(Error::invalid(format!("non-finite observation at site {i}, slot {s}")));
                }
            }
        }
        Ok(Panel {
            grid,
            obs,
            observed,
            features,
        })
    }

    pub fn grid(&self) -> &SiteGrid {
        &self.grid
    }

    pub fn n_sites(&self) -> usize {
        self.grid.len()
    }

    pub fn n_slots(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(1, |x| x.ncols())
    }

    /// Log-scale observations; entries at unobserved cells are meaningless.
    pub fn obs(&self) -> &DMatrix<f64> {
        &self.obs
    }

    pub fn observed(&self) -> &DMatrix<bool> {
        &self.observed
    }

    pub fn is_observed(&self, site: usize, slot: usize) -> bool {
        self.observed[(site, slot)]
    }

    pub fn features(&self, slot: usize) -> &DMatrix<f64> {
        &self.features[slot]
    }

    pub fn all_features(&self) -> &[DMatrix<f64>] {
        &self.features
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    /// Panel restricted to the given sites, in the given order.
    pub fn select_sites(&self, indices: &[usize]) -> Result<Panel> {
        let t = self.n_slots();
        let k = indices.len();
        let obs = DMatrix::from_fn(k, t, |r, c| self.obs[(indices[r], c)]);
        let observed = DMatrix::from_fn(k, t, |r, c| self.observed[(indices[r], c)]);
        let features = self
            .features
            .iter()
            .map(|x| DMatrix::from_fn(k, x.ncols(), |r, c| x[(indices[r], c)]))
            .collect();
        Panel::new(self.grid.subset(indices)?, obs, observed, features)
    }
}

/// Full parameter state including the latent fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub beta: DVector<f64>,
    pub rho: f64,
    pub sigma_eps2: f64,
    pub sigma_eta2: f64,
    pub phi: f64,
    pub nu: f64,
    pub mu: DVector<f64>,
    pub sigma2: f64,
    /// `V_t` for every slot, `n x T`.
    pub latent: DMatrix<f64>,
    /// `V_0`
    pub latent0: DVector<f64>,
}

impl Theta {
    pub fn check(&self, panel: &Panel) -> Result<()> {
        let n = panel.n_sites();
        if self.beta.len() != panel.n_features() {
            return Err(Error::invalid(format!(
                "beta has {} entries but the panel has {} features",
                self.beta.len(),
                panel.n_features()
            )));
        }
        if self.latent.shape() != (n, panel.n_slots()) || self.latent0.len() != n || self.mu.len() != n {
            return Err(Error::invalid("latent dimensions do not match the panel"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        for (name, v) in [
            ("sigma_eps2", self.sigma_eps2),
            ("sigma_eta2", self.sigma_eta2),
            ("sigma2", self.sigma2),
            ("phi", self.phi),
            ("nu", self.nu),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `V_{t-1}` for slot `t`, with `V_0` before the first slot.
    pub fn previous_latent(&self, slot: usize) -> DVector<f64> {
        if slot == 0 {
            self.latent0.clone()
        } else {
            self.latent.column(slot - 1).into_owned()
        }
    }
}

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub beta_mean: f64,
    pub beta_var: f64,
    pub rho_mean: f64,
    pub rho_var: f64,
    /// Gamma shape for the precisions `1/sigma_eps2`, `1/sigma_eta2`, `1/sigma2` and for `phi`.
    pub gamma_a: f64,
    /// Gamma rate, paired with `gamma_a`.
    pub gamma_b: f64,
    /// Support of the discrete uniform prior on `nu`.
    pub nu_grid: Vec<f64>,
    pub mu_var: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            beta_mean: 0.0,
            beta_var: 1e10,
            rho_mean: 0.0,
            rho_var: 1e10,
            gamma_a: 2.0,
            gamma_b: 1.0,
            nu_grid: default_nu_grid(),
            mu_var: 1e10,
        }
    }
}

/// 0.05, 0.10, ..., 1.50
pub fn default_nu_grid() -> Vec<f64> {
    (1..=30).map(|k| (k as f64 * 0.05 * 1e6).round() / 1e6).collect()
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta_var", self.beta_var),
            ("rho_var", self.rho_var),
            ("gamma_a", self.gamma_a),
            ("gamma_b", self.gamma_b),
            ("mu_var", self.mu_var),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("prior {name} must be positive, got {v}")));
            }
        }
        if self.nu_grid.is_empty() {
            return Err(Error::invalid("nu_grid must not be empty"));
        }
        if self.nu_grid.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("nu_grid entries must be positive"));
        }
        if self.nu_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("nu_grid must be strictly increasing"));
        }
        Ok(())
    }

    /// Index of `nu` in the grid, matching within 1e-9.
    pub fn nu_index(&self, nu: f64) -> Option<usize> {
        self.nu_grid.iter().position(|&g| (g - nu).abs() <= 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let g = default_nu_grid();
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[2], 0.15);
        assert_eq!(g[29], 1.5);
        PriorSpec::default().validate().unwrap();
    }

    #[test]
    fn prior_validation() {
        let mut p = PriorSpec::default();
        p.nu_grid = vec![0.5, 0.5];
        assert!(p.validate().is_err());
        p.nu_grid = vec![0.0, 0.5];
        assert!(p.validate().is_err());
        p.nu_grid = vec![];
        assert!(p.validate().is_err());
        let mut p = PriorSpec::default();
        p.gamma_b = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn panel_rejects_missing_intercept() {
        let grid = SiteGrid::from_coords(vec![[0.0, 0.0]]).unwrap();
        let x = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let r = Panel::new(grid, DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, true), vec![x]);
        assert!(r.is_err());
    }

    #[test]
    fn model_kind_parses() {
        assert_eq!("AR".parse::<ModelKind>().unwrap(), ModelKind::Ar);
        assert_eq!("gp".parse::<ModelKind>().unwrap(), ModelKind::Gp);
        assert!("kf".parse::<ModelKind>().is_err());
    }
}
