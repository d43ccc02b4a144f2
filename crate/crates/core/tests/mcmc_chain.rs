use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stbayes::mcmc::{
    burn_in_mean, chains_from_draws, initial_theta, posterior_summary, read_draws_ndjson, run_chain, run_chains,
    write_draws_ndjson, write_summary_csv, Chain, ChainConfig, Draw,
};
use stbayes::model::{simulate_panel, ModelKind, Panel, PriorSpec, Theta};
use stbayes::SiteGrid;

fn truth(n: usize, rho: f64, sigma_eps2: f64) -> Theta {
    Theta {
        beta: DVector::from_vec(vec![1.0, 0.5, -0.5]),
        rho,
        sigma_eps2,
        sigma_eta2: 0.5,
        phi: 2.0,
        nu: 0.5,
        mu: DVector::zeros(n),
        sigma2: 1.0,
        latent: DMatrix::zeros(n, 1),
        latent0: DVector::zeros(n),
    }
}

fn grid(n: usize, seed: u64) -> SiteGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SiteGrid::from_coords((0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()).unwrap()
}

fn small_panel(seed: u64) -> Panel {
    simulate_panel(&grid(6, seed), 15, &truth(6, 0.5, 0.1), seed).unwrap()
}

fn short(model: ModelKind, seed: u64) -> ChainConfig {
    ChainConfig {
        model,
        n_iter: 600,
        n_burn: 200,
        seed,
        log_every: 0,
        ..ChainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_chain() {
    let panel = small_panel(1);
    let a = run_chain(&panel, &short(ModelKind::Ar, 5)).unwrap();
    let b = run_chain(&panel, &short(ModelKind::Ar, 5)).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.pmcc.to_bits(), b.pmcc.to_bits());
    let c = run_chain(&panel, &short(ModelKind::Ar, 6)).unwrap();
    assert_ne!(a.draws, c.draws);
}

#[test]
fn parallel_chains_are_reproducible_and_distinct() {
    let panel = small_panel(2);
    let cfg = short(ModelKind::Ar, 9);
    let a = run_chains(&panel, &cfg, 3).unwrap();
    let b = run_chains(&panel, &cfg, 3).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.draws, y.draws);
    }
    assert_ne!(a[0].draws, a[1].draws);
    assert_eq!(a.iter().map(|c| c.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(a[2].draws.iter().all(|d| d.chain == 2));
}

#[test]
fn chain_shape_and_legal_region() {
    let panel = small_panel(3);
    let priors = PriorSpec::default();
    for model in [ModelKind::Ar, ModelKind::Gp] {
        let chain = run_chain(&panel, &short(model, 1)).unwrap();
        assert_eq!(chain.draws.len(), 400);
        assert!((0.0..=1.0).contains(&chain.accept_phi));
        assert!((0.0..=1.0).contains(&chain.accept_nu));
        for d in &chain.draws {
            assert!(d.rho > -1.0 && d.rho < 1.0);
            assert!(d.sigma_eps2 > 0.0 && d.sigma_eta2 > 0.0 && d.sigma2 > 0.0 && d.phi > 0.0);
            assert!(priors.nu_index(d.nu).is_some());
        }
        if model == ModelKind::Gp {
            assert!(chain.draws.iter().all(|d| d.rho == 0.0));
            assert!(chain.draws.iter().all(|d| d.sigma2 == chain.draws[0].sigma2));
        }
    }
}

#[test]
fn rejects_burn_in_not_below_iterations() {
    let panel = small_panel(4);
    let cfg = ChainConfig {
        n_iter: 10,
        n_burn: 10,
        ..ChainConfig::default()
    };
    assert!(run_chain(&panel, &cfg).is_err());
}

/// Upper tail of Gamma(2, 1): P(X > x) = e^-x (1 + x).
fn gamma2_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 50.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let cdf = 1.0 - (-mid).exp() * (1.0 + mid);
        if cdf < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn nugget_is_learned_from_noiseless_data() {
    let panel = simulate_panel(&grid(8, 3), 20, &truth(8, 0.5, 1e-6), 3).unwrap();
    let chain = run_chain(&panel, &short(ModelKind::Ar, 2)).unwrap();
    // 10th percentile of sigma_eps2 = 1 / (90th percentile of the precision).
    let prior_p10 = 1.0 / gamma2_quantile(0.9);
    assert!(chain.mean_sigma_eps2 < prior_p10, "{} vs {prior_p10}", chain.mean_sigma_eps2);
}

#[test]
fn pmcc_matches_moment_formula() {
    let panel = small_panel(5);
    let cfg = ChainConfig {
        n_iter: 4000,
        n_burn: 500,
        ..short(ModelKind::Ar, 4)
    };
    let chain = run_chain(&panel, &cfg).unwrap();
    let mean = chain.latent.mean();
    let var = chain.latent.variance();
    let mut expected = 0.0;
    for t in 0..panel.n_slots() {
        for i in 0..panel.n_sites() {
            expected += (mean[(i, t)] - panel.obs()[(i, t)]).powi(2) + var[(i, t)] + chain.mean_sigma_eps2;
        }
    }
    assert!((chain.pmcc - expected).abs() < 0.02 * expected, "{} vs {expected}", chain.pmcc);
}

#[test]
fn initial_state_follows_site_relabeling() {
    let panel = small_panel(6);
    let perm = [3usize, 1, 5, 0, 2, 4];
    let permuted = panel.select_sites(&perm).unwrap();
    let priors = PriorSpec::default();
    let a = initial_theta(&panel, &priors).unwrap();
    let b = initial_theta(&permuted, &priors).unwrap();
    assert!((a.beta - b.beta).norm() < 1e-10);
    assert!((a.phi - b.phi).abs() < 1e-12);
    for (r, &p) in perm.iter().enumerate() {
        assert_eq!(a.latent.row(p), b.latent.row(r));
    }
}

#[test]
fn relabeled_sites_give_matching_posteriors() {
    let panel = small_panel(7);
    let perm = [5usize, 4, 3, 2, 1, 0];
    let permuted = panel.select_sites(&perm).unwrap();
    let cfg = ChainConfig {
        n_iter: 3000,
        n_burn: 500,
        ..short(ModelKind::Ar, 8)
    };
    let a = posterior_summary(&[run_chain(&panel, &cfg).unwrap()]).unwrap();
    let b = posterior_summary(&[run_chain(&permuted, &cfg).unwrap()]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        if x.parameter == "nu" || x.parameter == "phi" {
            continue;
        }
        assert!((x.mean - y.mean).abs() < x.sd.max(y.sd), "{}: {} vs {}", x.parameter, x.mean, y.mean);
    }
}

fn fake_draw(chain: usize, iter: usize, v: f64) -> Draw {
    Draw {
        chain,
        iter,
        beta: vec![v, 2.0 * v],
        rho: v / 10.0,
        sigma_eps2: v,
        sigma_eta2: v,
        phi: v,
        nu: 0.5,
        sigma2: 1.0,
        latents: None,
    }
}

#[test]
fn burn_in_mean_example() {
    assert_eq!(burn_in_mean(&[1.0, 2.0, 3.0, 4.0], 2), Some(3.5));
    assert_eq!(burn_in_mean(&[1.0, 2.0], 2), None);
}

#[test]
fn pooling_identical_chains_changes_nothing() {
    let draws: Vec<Draw> = (0..9).map(|k| fake_draw(0, k, k as f64 + 1.0)).collect();
    let one = Chain::from_draws(ModelKind::Ar, 0, draws.clone());
    let two = Chain::from_draws(ModelKind::Ar, 0, draws);
    let a = posterior_summary(std::slice::from_ref(&one)).unwrap();
    let b = posterior_summary(&[one, two]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.parameter, y.parameter);
        assert!((x.mean - y.mean).abs() < 1e-12);
        assert!((x.median - y.median).abs() < 1e-12);
        assert!((x.low - y.low).abs() < 1e-12 && (x.up - y.up).abs() < 1e-12);
    }
    assert_eq!(a[0].mean, 5.0);
    assert_eq!(a[0].median, 5.0);
}

#[test]
fn summary_rows_for_five_features() {
    let draws: Vec<Draw> = (0..4)
        .map(|k| Draw {
            beta: vec![0.0; 5],
            ..fake_draw(0, k, 1.0)
        })
        .collect();
    let ar = posterior_summary(&[Chain::from_draws(ModelKind::Ar, 0, draws.clone())]).unwrap();
    let names: Vec<&str> = ar.iter().map(|s| s.parameter.as_str()).collect();
    assert_eq!(
        names,
        ["beta_0", "beta_1", "beta_2", "beta_3", "beta_4", "rho", "sigma_eps2", "sigma_eta2", "phi", "nu"]
    );
    let gp = posterior_summary(&[Chain::from_draws(ModelKind::Gp, 0, draws)]).unwrap();
    assert_eq!(gp.len(), 9);
    assert!(posterior_summary(&[]).is_err());
}

#[test]
fn summary_csv_columns() {
    let draws: Vec<Draw> = (0..4).map(|k| fake_draw(0, k, k as f64)).collect();
    let s = posterior_summary(&[Chain::from_draws(ModelKind::Ar, 0, draws)]).unwrap();
    let mut buf = Vec::new();
    write_summary_csv(&s, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "parameter,mean,median,sd,low2.5p,up97.5p");
    assert_eq!(text.lines().count(), 1 + s.len());
}

#[test]
fn ndjson_round_trip_keeps_latents_and_chain_index() {
    let panel = small_panel(8);
    let cfg = ChainConfig {
        n_iter: 30,
        n_burn: 10,
        ..short(ModelKind::Ar, 1)
    };
    let chains = run_chains(&panel, &cfg, 2).unwrap();
    let mut buf = Vec::new();
    write_draws_ndjson(&chains, &mut buf).unwrap();
    let draws = read_draws_ndjson(std::io::Cursor::new(&buf)).unwrap();
    assert_eq!(draws.len(), 40);
    let regrouped = chains_from_draws(ModelKind::Ar, 10, draws);
    assert_eq!(regrouped.len(), 2);
    for (a, b) in chains.iter().zip(&regrouped) {
        assert_eq!(a.draws, b.draws);
    }
    let theta = regrouped[1].draws[3].to_theta().unwrap();
    assert_eq!(theta.latent.shape(), (6, 15));
}
