//! Full conditionals against the joint log-posterior on a two-site,
//! three-slot instance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stbayes::kernel::DEFAULT_JITTER;
use stbayes::mcmc::Sampler;
use stbayes::model::{log_joint_posterior, log_normal_kernel, ModelKind, Panel, PriorSpec, Theta};
use stbayes::SiteGrid;

pub const PAIRS: usize = 100;

pub fn instance(seed: u64, masked: bool) -> (Panel, Theta) {
    let (n, t_len, m) = (2, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = SiteGrid::from_coords(vec![[0.0, 0.0], [0.7, 0.4]]).unwrap();
    let features: Vec<DMatrix<f64>> = (0..t_len)
        .map(|_| DMatrix::from_fn(n, m, |_, c| if c == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 }))
        .collect();
    let obs = DMatrix::from_fn(n, t_len, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let mut observed = DMatrix::from_element(n, t_len, true);
    if masked {
        observed[(1, 1)] = false;
    }
    let panel = Panel::new(grid, obs, observed, features).unwrap();
    let theta = Theta {
        beta: DVector::from_vec(vec![0.3, -0.2]),
        rho: 0.45,
        sigma_eps2: 0.4,
        sigma_eta2: 0.8,
        phi: 1.3,
        nu: 0.5,
        mu: DVector::from_vec(vec![0.1, -0.3]),
        sigma2: 1.2,
        latent: DMatrix::from_fn(n, t_len, |_, _| rng.random::<f64>() * 2.0 - 1.0),
        latent0: DVector::from_vec(vec![0.2, 0.5]),
    };
    (panel, theta)
}

pub fn joint(kind: ModelKind, theta: &Theta, panel: &Panel) -> f64 {
    log_joint_posterior(kind, theta, panel, &PriorSpec::default()).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0)
}

/// Largest gap per block between conditional and joint log-density differences.
#[derive(Default)]
pub struct Gaps(pub Vec<(String, f64)>);

impl Gaps {
    fn record(&mut self, cond: f64, joint: f64, what: &str) {
        let gap = if cond.is_finite() && joint.is_finite() { (cond - joint).abs() } else { f64::INFINITY };
        match self.0.iter_mut().find(|(name, _)| name == what) {
            Some((_, worst)) => *worst = worst.max(gap),
            None => self.0.push((what.to_string(), gap)),
        }
    }

    pub fn worst(&self) -> f64 {
        self.0.iter().map(|g| g.1).fold(0.0, f64::max)
    }
}

/// Compares every full conditional with differences of the joint density
/// over `PAIRS` random value pairs per block.
pub fn check_all(kind: ModelKind, masked: bool) -> Gaps {
    let mut gaps = Gaps::default();
    let (panel, theta) = instance(17, masked);
    let priors = PriorSpec::default();
    let sampler = Sampler::new(&panel, &priors, kind, DEFAULT_JITTER, &theta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    let beta_c = sampler.beta_conditional(&theta);
    for _ in 0..PAIRS {
        let (a, b) = (random_vec(&mut rng, 2), random_vec(&mut rng, 2));
        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.beta = a.clone();
        tb.beta = b.clone();
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        gaps.record(beta_c.log_kernel(&a) - beta_c.log_kernel(&b), jd, "beta");
    }

    for t in 0..panel.n_slots() {
        let c = sampler.latent_conditional(&theta, t);
        for _ in 0..PAIRS {
            let (a, b) = (random_vec(&mut rng, 2), random_vec(&mut rng, 2));
            let (mut ta, mut tb) = (theta.clone(), theta.clone());
            ta.latent.set_column(t, &a);
            tb.latent.set_column(t, &b);
            let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
            gaps.record(c.log_kernel(&a) - c.log_kernel(&b), jd, &format!("V_{t}"));

            // Single coordinate V_t(s_1).
            let x: f64 = rng.random::<f64>() * 4.0 - 2.0;
            let (mut va, mut vb) = (theta.latent.column(t).into_owned(), theta.latent.column(t).into_owned());
            va[0] = x;
            vb[0] = -x / 2.0;
            let (mut ta, mut tb) = (theta.clone(), theta.clone());
            ta.latent.set_column(t, &va);
            tb.latent.set_column(t, &vb);
            let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
            gaps.record(c.log_kernel(&va) - c.log_kernel(&vb), jd, &format!("V_{t}(s_1)"));
        }
    }

    let var = sampler.variance_conditionals(&theta);
    for _ in 0..PAIRS {
        let (a, b) = (0.05 + 3.0 * rng.random::<f64>(), 0.05 + 3.0 * rng.random::<f64>());
        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.sigma_eps2 = a;
        tb.sigma_eps2 = b;
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        gaps.record(var.sigma_eps2.log_kernel(1.0 / a) - var.sigma_eps2.log_kernel(1.0 / b), jd, "sigma_eps2");

        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.sigma_eta2 = a;
        tb.sigma_eta2 = b;
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        gaps.record(var.sigma_eta2.log_kernel(1.0 / a) - var.sigma_eta2.log_kernel(1.0 / b), jd, "sigma_eta2");

        // phi through the MH kernel.
        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.phi = a;
        tb.phi = b;
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        let kd = sampler.spatial_log_kernel(&theta, a, theta.nu).unwrap()
            - sampler.spatial_log_kernel(&theta, b, theta.nu).unwrap();
        gaps.record(kd, jd, "phi");
    }

    for _ in 0..PAIRS {
        let grid = &priors.nu_grid;
        let a = grid[rng.random_range(0..grid.len())];
        let b = grid[rng.random_range(0..grid.len())];
        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.nu = a;
        tb.nu = b;
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        let kd = sampler.spatial_log_kernel(&theta, theta.phi, a).unwrap()
            - sampler.spatial_log_kernel(&theta, theta.phi, b).unwrap();
        gaps.record(kd, jd, "nu");
    }

    if kind == ModelKind::Gp {
        return gaps;
    }

    let (rho_mean, rho_var) = sampler.rho_conditional(&theta);
    let c0 = sampler.latent0_conditional(&theta);
    let cmu = sampler.mu_conditional(&theta);
    let s2 = var.sigma2.unwrap();
    for _ in 0..PAIRS {
        let (a, b) = (rng.random::<f64>() * 1.98 - 0.99, rng.random::<f64>() * 1.98 - 0.99);
        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.rho = a;
        tb.rho = b;
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        let kd = log_normal_kernel(a, rho_mean, rho_var) - log_normal_kernel(b, rho_mean, rho_var);
        gaps.record(kd, jd, "rho");

        let (va, vb) = (random_vec(&mut rng, 2), random_vec(&mut rng, 2));
        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.latent0 = va.clone();
        tb.latent0 = vb.clone();
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        gaps.record(c0.log_kernel(&va) - c0.log_kernel(&vb), jd, "V_0");

        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.mu = va.clone();
        tb.mu = vb.clone();
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        gaps.record(cmu.log_kernel(&va) - cmu.log_kernel(&vb), jd, "mu");

        let (x, y) = (0.05 + 3.0 * rng.random::<f64>(), 0.05 + 3.0 * rng.random::<f64>());
        let (mut ta, mut tb) = (theta.clone(), theta.clone());
        ta.sigma2 = x;
        tb.sigma2 = y;
        let jd = joint(kind, &ta, &panel) - joint(kind, &tb, &panel);
        gaps.record(s2.log_kernel(1.0 / x) - s2.log_kernel(1.0 / y), jd, "sigma2");
    }
    gaps
}
