//! Subcommand bodies. Each reads its inputs, writes its artifacts into the
//! output directory and returns the paths it wrote.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use stbayes::mcmc::{chains_from_draws, pooled_pmcc, posterior_summary, read_draws_ndjson, run_chains, write_summary_csv};
use stbayes::metrics::{pmcc, point_errors, write_score_csv, ScoreReport};
use stbayes::model::{read_panel_csv, write_panel_csv, ModelKind, Panel};
use stbayes::pipeline::{
    aggregate, elbow_curve, ingest, kmeans, split_sites, synthetic_records, write_clustering_csv, write_elbow_csv,
    write_records_csv, Ingested, SlotSpec, SyntheticSpec,
};
use stbayes::predict::{
    forecast_temporal, krige_spatial, read_prediction_csv, write_prediction_csv, PredictOptions,
};
use stbayes::rng::derive_seed;
use stbayes::simulator::{hotspot_demand, noisy_oracle, run_simulation, write_sim_csv, write_sim_summary_csv};

use crate::config::RunConfig;
use crate::error::{CliError, Context};

/// Fit metadata that `predict` needs to rebuild the chains.
#[derive(Debug, Serialize, Deserialize)]
struct FitMeta {
    model: ModelKind,
    n_iter: usize,
    n_burn: usize,
    chains: usize,
    save_every: usize,
    seed: u64,
    train_sites: Vec<String>,
    test_sites: Vec<String>,
}

fn missing(field: &str, path: &Path) -> CliError {
    CliError::Config {
        field: field.into(),
        message: format!("file {} does not exist", path.display()),
    }
}

fn open(field: &str, path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|_| missing(field, path))
}

fn create(cfg: &RunConfig, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(&cfg.paths.out_dir).ctx("io")?;
    let path = cfg.out(name);
    let f = File::create(&path).ctx("io")?;
    Ok((path, BufWriter::new(f)))
}

fn load_panel(field: &str, path: &Path) -> Result<Panel, CliError> {
    read_panel_csv(open(field, path)?).ctx("model")
}

fn load_records(cfg: &RunConfig) -> Result<Ingested, CliError> {
    let path = cfg.paths.records.as_ref().ok_or_else(|| CliError::Config {
        field: "paths.records".into(),
        message: "no connection records given".into(),
    })?;
    let ing = ingest(open("paths.records", path)?, None).ctx("pipeline")?;
    log::info!(
        "{} records, {} stations, {} users, {} rows rejected",
        ing.records.len(),
        ing.stations.len(),
        ing.unique_users(),
        ing.rejected.len()
    );
    Ok(ing)
}

pub fn ingest_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ing = load_records(cfg)?;
    let p = &cfg.pipeline;
    let clustering = kmeans(&ing.stations, p.k, p.seed, p.max_iter).ctx("pipeline")?;
    let slot = SlotSpec {
        length_secs: p.slot_secs,
        origin: None,
    };
    let agg = aggregate(&ing.records, &ing.stations, &clustering, slot).ctx("pipeline")?;
    log::info!(
        "panel: {} sites x {} slots, {} observed cells",
        agg.panel.n_sites(),
        agg.panel.n_slots(),
        agg.panel.observed_count()
    );
    let (panel_path, w) = create(cfg, "panel.csv")?;
    write_panel_csv(&agg.panel, w).ctx("model")?;
    let (clust_path, w) = create(cfg, "clustering.csv")?;
    write_clustering_csv(&ing.stations, &clustering, w).ctx("pipeline")?;
    let (rej_path, w) = create(cfg, "rejected.csv")?;
    let mut rej = csv::Writer::from_writer(w);
    rej.write_record(["line", "reason"]).ctx("io")?;
    for r in &ing.rejected {
        rej.write_record([r.line.to_string(), r.reason.clone()]).ctx("io")?;
    }
    rej.flush().ctx("io")?;
    Ok(vec![panel_path, clust_path, rej_path])
}

pub fn cluster_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ing = load_records(cfg)?;
    let p = &cfg.pipeline;
    let hi = p.elbow_max.min(ing.stations.len());
    let lo = p.elbow_min.min(hi);
    let curve = elbow_curve(&ing.stations, lo..=hi, p.seed).ctx("pipeline")?;
    let clustering = kmeans(&ing.stations, p.k, p.seed, p.max_iter).ctx("pipeline")?;
    log::info!("K = {}: wcss {:.6e}", p.k, clustering.wcss);
    let (elbow_path, w) = create(cfg, "elbow.csv")?;
    write_elbow_csv(&curve, w).ctx("pipeline")?;
    let (clust_path, w) = create(cfg, "clustering.csv")?;
    write_clustering_csv(&ing.stations, &clustering, w).ctx("pipeline")?;
    Ok(vec![elbow_path, clust_path])
}

pub fn fit_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let panel = load_panel("paths.panel", &cfg.panel_path())?;
    if cfg.pipeline.holdout >= panel.n_sites() {
        return Err(CliError::Config {
            field: "pipeline.holdout".into(),
            message: format!("cannot hold out {} of {} sites", cfg.pipeline.holdout, panel.n_sites()),
        });
    }
    let split = split_sites(&panel, cfg.pipeline.holdout, cfg.pipeline.seed).ctx("pipeline")?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| panel.grid().ids()[i].clone()).collect::<Vec<_>>();
    let chains = run_chains(&split.train, &cfg.chain_config(), cfg.mcmc.chains).ctx("mcmc")?;
    let summary = posterior_summary(&chains).ctx("mcmc")?;
    let pooled = pooled_pmcc(&split.train, &chains).ctx("mcmc")?;
    for c in &chains {
        log::info!(
            "chain {}: accept phi {:.3}, accept nu {:.3}, pmcc {:.4}",
            c.index,
            c.accept_phi,
            c.accept_nu,
            c.pmcc
        );
    }
    log::info!("pooled pmcc {pooled:.4}");

    let (summary_path, w) = create(cfg, "summary.csv")?;
    write_summary_csv(&summary, w).ctx("mcmc")?;

    let (draws_path, mut w) = create(cfg, "draws.ndjson")?;
    for c in &chains {
        for d in c.draws.iter().step_by(cfg.mcmc.save_every) {
            serde_json::to_writer(&mut w, d).ctx("io")?;
            w.write_all(b"\n").ctx("io")?;
        }
    }
    w.flush().ctx("io")?;

    let (diag_path, w) = create(cfg, "diagnostics.csv")?;
    let mut dw = csv::Writer::from_writer(w);
    dw.write_record(["chain", "accept_phi", "accept_nu", "final_step_phi", "pmcc"]).ctx("io")?;
    for c in &chains {
        dw.write_record([
            c.index.to_string(),
            c.accept_phi.to_string(),
            c.accept_nu.to_string(),
            c.final_log_step.to_string(),
            c.pmcc.to_string(),
        ])
        .ctx("io")?;
    }
    dw.write_record(["pooled", "", "", "", &pooled.to_string()]).ctx("io")?;
    dw.flush().ctx("io")?;

    let meta = FitMeta {
        model: cfg.model,
        n_iter: cfg.mcmc.n_iter,
        n_burn: cfg.mcmc.n_burn,
        chains: cfg.mcmc.chains,
        save_every: cfg.mcmc.save_every,
        seed: cfg.mcmc.seed,
        train_sites: ids(&split.train_idx),
        test_sites: ids(&split.test_idx),
    };
    let (meta_path, mut w) = create(cfg, "fit.json")?;
    serde_json::to_writer_pretty(&mut w, &meta).ctx("io")?;
    w.write_all(b"\n").ctx("io")?;
    w.flush().ctx("io")?;
    Ok(vec![summary_path, draws_path, diag_path, meta_path])
}

fn site_indices(panel: &Panel, ids: &[String]) -> Result<Vec<usize>, CliError> {
    ids.iter()
        .map(|id| {
            panel.grid().index_of(id).ok_or_else(|| CliError::Config {
                field: "paths.panel".into(),
                message: format!("fitted site {id:?} is not in the panel"),
            })
        })
        .collect()
}

pub fn predict_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let panel = load_panel("paths.panel", &cfg.panel_path())?;
    let meta_path = cfg.out("fit.json");
    let meta: FitMeta = serde_json::from_reader(open("paths.out_dir", &meta_path)?).ctx("io")?;
    let train = panel.select_sites(&site_indices(&panel, &meta.train_sites)?).ctx("model")?;
    let draws = read_draws_ndjson(open("paths.out_dir", &cfg.out("draws.ndjson"))?).ctx("mcmc")?;
    let chains = chains_from_draws(meta.model, meta.n_burn, draws);
    let options = PredictOptions {
        thinning: cfg.predict.thinning,
        seed: cfg.predict.seed,
        jitter: cfg.mcmc.jitter,
    };
    let mut written = Vec::new();

    let targets = match &cfg.predict.targets {
        Some(path) => Some(load_panel("predict.targets", path)?),
        None if !meta.test_sites.is_empty() => {
            Some(panel.select_sites(&site_indices(&panel, &meta.test_sites)?).ctx("model")?)
        }
        None => None,
    };
    if let Some(target) = targets {
        let t_end = target.n_slots().min(train.n_slots());
        let field = krige_spatial(&chains, &train, target.grid(), target.all_features(), 0..t_end, &options)
            .ctx("predict")?;
        if field.clamped > 0 {
            log::warn!("{} kriging variances clamped at zero", field.clamped);
        }
        let (path, w) = create(cfg, "predictions_spatial.csv")?;
        write_prediction_csv(&field, w).ctx("predict")?;
        written.push(path);
    }
    if cfg.predict.horizon > 0 {
        // Future covariates are unknown; the last slot's are carried forward.
        let last = train.features(train.n_slots() - 1).clone();
        let future: Vec<DMatrix<f64>> = vec![last; cfg.predict.horizon];
        let field = forecast_temporal(&chains, &train, &future, &options).ctx("predict")?;
        let (path, w) = create(cfg, "predictions_temporal.csv")?;
        write_prediction_csv(&field, w).ctx("predict")?;
        written.push(path);
    }
    Ok(written)
}

pub fn score_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let pred_path = cfg
        .paths
        .predictions
        .clone()
        .unwrap_or_else(|| cfg.out("predictions_spatial.csv"));
    let field = read_prediction_csv(open("paths.predictions", &pred_path)?).ctx("predict")?;
    let (obs_field, obs_path) = match &cfg.paths.observed {
        Some(p) => ("paths.observed", p.clone()),
        None => ("paths.panel", cfg.panel_path()),
    };
    let observed = load_panel(obs_field, &obs_path)?;
    let (mut pred, mut var, mut obs) = (Vec::new(), Vec::new(), Vec::new());
    for (k, t) in field.targets.iter().enumerate() {
        if let Some(i) = observed.grid().index_of(&t.site_id) {
            if t.t < observed.n_slots() && observed.is_observed(i, t.t) {
                pred.push(field.mean_log[k]);
                var.push(field.sd_log[k] * field.sd_log[k]);
                obs.push(observed.obs()[(i, t.t)]);
            }
        }
    }
    let errors = point_errors(&pred, &obs).ctx("metrics")?;
    let report = ScoreReport {
        errors,
        pmcc: Some(pmcc(&pred, &var, &obs).ctx("metrics")?),
    };
    log::info!("scored {} cells: rmse {:.4}, mae {:.4}", errors.d, errors.rmse, errors.mae);
    let (path, w) = create(cfg, "score.csv")?;
    write_score_csv(&report, w).ctx("metrics")?;
    Ok(vec![path])
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let d = &cfg.demand;
    let demand = hotspot_demand(&cfg.sim, d.n_slots, d.hot_share, cfg.sim.seed).ctx("simulator")?;
    let weights = noisy_oracle(&demand, d.noise_sd, derive_seed(cfg.sim.seed, 1)).ctx("simulator")?;
    let result = run_simulation(&cfg.sim, &demand, &weights).ctx("simulator")?;
    log::info!(
        "completed rate: equal {:.4}, weighted {:.4} over {} replications",
        result.equal.completed_rate,
        result.weighted.completed_rate,
        result.reps
    );
    let (cells_path, w) = create(cfg, "sim_cells.csv")?;
    write_sim_csv(&result, w).ctx("simulator")?;
    let (summary_path, w) = create(cfg, "sim_summary.csv")?;
    write_sim_summary_csv(&result, w).ctx("simulator")?;
    Ok(vec![cells_path, summary_path])
}

/// Synthetic records through every stage, all in the output directory.
pub fn demo_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let records = synthetic_records(&SyntheticSpec::default(), cfg.pipeline.seed).ctx("pipeline")?;
    let (records_path, w) = create(cfg, "records.csv")?;
    write_records_csv(&records, w).ctx("pipeline")?;
    let mut cfg = cfg.clone();
    cfg.paths.records = Some(records_path.clone());
    cfg.paths.panel = None;
    cfg.paths.predictions = None;
    cfg.paths.observed = None;
    let mut written = vec![records_path];
    written.extend(ingest_cmd(&cfg)?);
    written.extend(cluster_cmd(&cfg)?);
    written.extend(fit_cmd(&cfg)?);
    written.extend(predict_cmd(&cfg)?);
    if cfg.pipeline.holdout > 0 {
        written.extend(score_cmd(&cfg)?);
    }
    written.extend(simulate_cmd(&cfg)?);
    written.sort();
    written.dedup();
    Ok(written)
}
