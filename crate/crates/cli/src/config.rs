//! Run configuration: one TOML document with every knob, overridable by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stbayes::mcmc::{ChainConfig, MhTuning};
use stbayes::model::{ModelKind, PriorSpec};
use stbayes::simulator::SimConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelKind,
    pub mcmc: McmcSection,
    pub pipeline: PipelineSection,
    pub predict: PredictSection,
    pub sim: SimConfig,
    pub demand: DemandSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Connection records CSV.
    pub records: Option<PathBuf>,
    /// Panel CSV; defaults to `<out_dir>/panel.csv`.
    pub panel: Option<PathBuf>,
    /// Prediction CSV to score; defaults to `<out_dir>/predictions_spatial.csv`.
    pub predictions: Option<PathBuf>,
    /// Panel CSV holding the observations to score against; defaults to the panel.
    pub observed: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            records: None,
            panel: None,
            predictions: None,
            observed: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub n_iter: usize,
    pub n_burn: usize,
    pub chains: usize,
    pub seed: u64,
    pub tuning: MhTuning,
    pub priors: PriorSpec,
    pub jitter: f64,
    /// Write every this many retained draws to the draws file.
    pub save_every: usize,
    pub log_every: usize,
}

impl Default for McmcSection {
    fn default() -> Self {
        let c = ChainConfig::default();
        McmcSection {
            n_iter: c.n_iter,
            n_burn: c.n_burn,
            chains: 4,
            seed: 7,
            tuning: c.tuning,
            priors: c.priors,
            jitter: c.jitter,
            save_every: 20,
            log_every: c.log_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(rename = "K")]
    pub k: usize,
    pub slot_secs: f64,
    /// Sites held out of the fit for spatial prediction.
    pub holdout: usize,
    pub seed: u64,
    pub elbow_min: usize,
    pub elbow_max: usize,
    pub max_iter: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            k: stbayes::pipeline::DEFAULT_K,
            slot_secs: stbayes::pipeline::DAY_SECONDS,
            holdout: 10,
            seed: 7,
            elbow_min: 1,
            elbow_max: 30,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    /// Panel CSV of sites to krige at; defaults to the held-out sites.
    pub targets: Option<PathBuf>,
    /// Slots to forecast past the panel at the fitted sites.
    pub horizon: usize,
    /// Use every `thinning`-th saved draw.
    pub thinning: usize,
    pub seed: u64,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection {
            targets: None,
            horizon: 7,
            thinning: 1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandSection {
    pub n_slots: usize,
    /// Share of each slot's tasks at the hot location.
    pub hot_share: f64,
    /// Log-scale noise on the demand used as predictions; 0 gives oracle weights.
    pub noise_sd: f64,
}

impl Default for DemandSection {
    fn default() -> Self {
        DemandSection {
            n_slots: 24,
            hot_share: 0.8,
            noise_sd: 0.0,
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub chains: Option<usize>,
    pub out: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub observed: Option<PathBuf>,
}

fn config_err(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err("", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            config_err(if field == "." { String::new() } else { field }, e.inner().to_string())
        })
    }

    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err("config", format!("cannot read {}: {e}", p.display())))?;
                RunConfig::from_toml(&text)
            }
        }
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(seed) = o.seed {
            self.mcmc.seed = seed;
            self.pipeline.seed = seed;
            self.predict.seed = seed;
            self.sim.seed = seed;
        }
        if let Some(m) = o.model {
            self.model = m;
        }
        if let Some(c) = o.chains {
            self.mcmc.chains = c;
        }
        if let Some(p) = o.out {
            self.paths.out_dir = p;
        }
        for (slot, value) in [
            (&mut self.paths.records, o.records),
            (&mut self.paths.panel, o.panel),
            (&mut self.paths.predictions, o.predictions),
            (&mut self.paths.observed, o.observed),
        ] {
            if value.is_some() {
                *slot = value;
            }
        }
    }

    /// Numeric bounds, reported with the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.mcmc;
        if m.n_iter == 0 {
            return Err(config_err("mcmc.n_iter", "must be positive"));
        }
        if m.n_burn >= m.n_iter {
            return Err(config_err("mcmc.n_burn", format!("{} must be smaller than n_iter {}", m.n_burn, m.n_iter)));
        }
        if m.chains == 0 {
            return Err(config_err("mcmc.chains", "must be at least 1"));
        }
        if m.save_every == 0 {
            return Err(config_err("mcmc.save_every", "must be at least 1"));
        }
        m.tuning.validate().map_err(|e| config_err("mcmc.tuning", e.to_string()))?;
        m.priors.validate().map_err(|e| config_err("mcmc.priors", e.to_string()))?;
        if !(m.jitter >= 0.0 && m.jitter.is_finite()) {
            return Err(config_err("mcmc.jitter", "must be non-negative"));
        }
        let p = &self.pipeline;
        if p.k == 0 {
            return Err(config_err("pipeline.K", "must be at least 1"));
        }
        if !(p.slot_secs > 0.0 && p.slot_secs.is_finite()) {
            return Err(config_err("pipeline.slot_secs", "must be positive"));
        }
        if p.elbow_min == 0 || p.elbow_min > p.elbow_max {
            return Err(config_err("pipeline.elbow_min", "need 1 <= elbow_min <= elbow_max"));
        }
        if self.predict.thinning == 0 {
            return Err(config_err("predict.thinning", "must be at least 1"));
        }
        self.sim.validate().map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split_whitespace()
                .find_map(|w| w.strip_prefix("sim."))
                .map(|f| format!("sim.{}", f.trim_end_matches(':')))
                .unwrap_or_else(|| "sim".into());
            config_err(field, msg)
        })?;
        let d = &self.demand;
        if d.n_slots == 0 {
            return Err(config_err("demand.n_slots", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&d.hot_share) {
            return Err(config_err("demand.hot_share", "must lie in [0, 1]"));
        }
        if !(d.noise_sd >= 0.0 && d.noise_sd.is_finite()) {
            return Err(config_err("demand.noise_sd", "must be non-negative"));
        }
        Ok(())
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            model: self.model,
            n_iter: self.mcmc.n_iter,
            n_burn: self.mcmc.n_burn,
            tuning: self.mcmc.tuning,
            seed: self.mcmc.seed,
            priors: self.mcmc.priors.clone(),
            jitter: self.mcmc.jitter,
            store_latents: true,
            log_every: self.mcmc.log_every,
            init: None,
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }

    pub fn panel_path(&self) -> PathBuf {
        self.paths.panel.clone().unwrap_or_else(|| self.out("panel.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn nested_values_parse() {
        let c = RunConfig::from_toml(
            "model = \"gp\"\n[mcmc]\nn_iter = 200\nn_burn = 50\n[mcmc.tuning]\nproposal_sd_phi = 0.2\n[pipeline]\nK = 5\n[sim]\nbudget_normalized = true\n",
        )
        .unwrap();
        assert_eq!(c.model, ModelKind::Gp);
        assert_eq!((c.mcmc.n_iter, c.mcmc.n_burn), (200, 50));
        assert_eq!(c.mcmc.tuning.proposal_sd_phi, 0.2);
        assert_eq!(c.pipeline.k, 5);
        assert!(c.sim.budget_normalized);
    }

    #[test]
    fn bad_field_reports_its_path() {
        match RunConfig::from_toml("[mcmc]\nn_iter = \"many\"\n") {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "mcmc.n_iter"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_toml("[sim]\nbogus = 1\n") {
            Err(CliError::Config { field, .. }) => assert!(field.starts_with("sim"), "{field}"),
            other => panic!("{other:?}"),
        }
        let mut c = RunConfig::default();
        c.mcmc.n_burn = c.mcmc.n_iter;
        match c.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "mcmc.n_burn"),
            other => panic!("{other:?}"),
        }
        let mut c = RunConfig::default();
        c.sim.reps = 0;
        match c.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "sim.reps"),
            other => panic!("{other:?}"),
        }
    }
}
