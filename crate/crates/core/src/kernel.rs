//! Matérn spatial correlation over a grid of planar sites.
//!
//! The correlation between two sites at distance `d` is
//!
//! ```text
//! kappa(d) = (u^nu K_nu(u)) / (2^(nu-1) Gamma(nu)),  u = 2 sqrt(nu) d phi
//! ```
//!
//! so `phi` acts as an inverse range: larger `phi` means faster decay.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::specfun;

/// Diagonal jitter added to correlation matrices before factorization.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Labelled sites with planar coordinates in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteGrid {
    ids: Vec<String>,
    coords: Vec<[f64; 2]>,
}

impl SiteGrid {
    pub fn new(ids: Vec<String>, coords: Vec<[f64; 2]>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("site grid must contain at least one site"));
        }
        if ids.len() != coords.len() {
            return Err(Error::invalid(format!(
                "{} site ids but {} coordinates",
                ids.len(),
                coords.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate site id {id:?}")));
            }
        }
        if coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("site coordinates must be finite"));
        }
        Ok(SiteGrid { ids, coords })
    }

    /// Sites labelled `s0`, `s1`, ...
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Result<Self> {
        let ids = (0..coords.len()).map(|i| format!("s{i}")).collect();
        Self::new(ids, coords)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            indices.iter().map(|&i| self.coords[i]).collect(),
        )
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclid(self.coords[i], self.coords[j])
    }

    /// Median of the pairwise distances, or `None` for a single site.
    pub fn median_pairwise_distance(&self) -> Option<f64> {
        let n = self.len();
        let mut d: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| self.distance(i, j))
            .collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(|a, b| a.total_cmp(b));
        let mid = d.len() / 2;
        Some(if d.len().is_multiple_of(2) {
            0.5 * (d[mid - 1] + d[mid])
        } else {
            d[mid]
        })
    }
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// A Matérn kernel with its normalizing constant precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Matern {
    phi: f64,
    nu: f64,
    scale: f64,
    log_norm: f64,
}

impl Matern {
    pub fn new(phi: f64, nu: f64) -> Result<Self> {
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::domain("matern", format!("phi must be positive, got {phi}")));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::domain("matern", format!("nu must be positive, got {nu}")));
        }
        let log_norm = (1.0 - nu) * std::f64::consts::LN_2 - specfun::ln_gamma(nu)?;
        Ok(Matern {
            phi,
            nu,
            scale: 2.0 * nu.sqrt() * phi,
            log_norm,
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Correlation at distance `d >= 0`.
    pub fn eval(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 1.0;
        }
        let u = self.scale * d;
        let lnk = specfun::ln_bessel_k(self.nu, u).expect("u > 0 and nu > 0");
        if !lnk.converged {
            // K_nu(u) saturated: u is tiny relative to the order, so the
            // correlation has reached its zero-distance limit.
            return 1.0;
        }
        (self.log_norm + self.nu * u.ln() + lnk.value).exp().min(1.0)
    }
}

/// Matérn correlation at distance `d` with decay `phi` and smoothness `nu`.
pub fn matern(d: f64, phi: f64, nu: f64) -> Result<f64> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::domain("matern", format!("distance must be non-negative, got {d}")));
    }
    Ok(Matern::new(phi, nu)?.eval(d))
}

pub fn distance_matrix(grid: &SiteGrid) -> DMatrix<f64> {
    let n = grid.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = grid.distance(i, j);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Distances from each site of `a` (rows) to each site of `b` (columns).
pub fn cross_distances(a: &SiteGrid, b: &SiteGrid) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| euclid(a.coords()[i], b.coords()[j]))
}

/// A Matérn correlation matrix together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    values: DMatrix<f64>,
    jitter: f64,
    factor: SpdFactor,
}

impl CorrelationMatrix {
    pub fn from_distances(distances: &DMatrix<f64>, phi: f64, nu: f64, jitter: f64) -> Result<Self> {
        if !(jitter >= 0.0) {
            return Err(Error::invalid(format!("jitter must be non-negative, got {jitter}")));
        }
        let kernel = Matern::new(phi, nu)?;
        let n = distances.nrows();
        let mut values = DMatrix::zeros(n, n);
        for i in 0..n {
            values[(i, i)] = 1.0 + jitter;
            for j in (i + 1)..n {
                let k = kernel.eval(distances[(i, j)]);
                values[(i, j)] = k;
                values[(j, i)] = k;
            }
        }
        let factor = SpdFactor::new(
            values.clone(),
            "Matérn correlation matrix (duplicate or near-duplicate sites?)",
        )?;
        Ok(CorrelationMatrix {
            values,
            jitter,
            factor,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// Builds the correlation matrix of `grid` for `(phi, nu)` with `jitter` on
/// the diagonal.
pub fn correlation_matrix(grid: &SiteGrid, phi: f64, nu: f64, jitter: f64) -> Result<CorrelationMatrix> {
    CorrelationMatrix::from_distances(&distance_matrix(grid), phi, nu, jitter)
}
