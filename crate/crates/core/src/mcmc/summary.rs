//! Pooled posterior summaries and chain export.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelKind;

use super::chain::{Chain, Draw};

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub parameter: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    #[serde(rename = "low2.5p")]
    pub low: f64,
    #[serde(rename = "up97.5p")]
    pub up: f64,
}

/// Mean of `values` after discarding the first `n_burn`.
pub fn burn_in_mean(values: &[f64], n_burn: usize) -> Option<f64> {
    let kept = values.get(n_burn..)?;
    (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Quantile of sorted data from the empirical distribution function,
/// averaging at jumps (median of an even sample is the middle average).
/// Depends on the data only through its empirical distribution, so pooling
/// identical samples leaves it unchanged.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let n = sorted.len();
    let np = n as f64 * p.clamp(0.0, 1.0);
    let j = np.floor() as usize;
    if (np - j as f64).abs() < 1e-9 * n as f64 {
        let lo = sorted[j.saturating_sub(1)];
        let hi = sorted[j.min(n - 1)];
        0.5 * (lo + hi)
    } else {
        sorted[j.min(n - 1)]
    }
}

/// Summary of pooled draws.
pub fn summarize(name: &str, values: &[f64]) -> Result<ParamSummary> {
    if values.is_empty() {
        return Err(Error::invalid(format!("no draws for {name}")));
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ParamSummary {
        parameter: name.to_string(),
        mean,
        median: quantile_sorted(&sorted, 0.5),
        sd,
        low: quantile_sorted(&sorted, 0.025),
        up: quantile_sorted(&sorted, 0.975),
    })
}

/// Parameter names reported for a model with `m` features.
pub fn parameter_names(kind: ModelKind, m: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..m).map(|k| format!("beta_{k}")).collect();
    if kind == ModelKind::Ar {
        names.push("rho".into());
    }
    names.extend(["sigma_eps2", "sigma_eta2", "phi", "nu"].map(String::from));
    names
}

/// Per-parameter summaries over the draws of all chains pooled together.
pub fn posterior_summary(chains: &[Chain]) -> Result<Vec<ParamSummary>> {
    let first = chains.first().ok_or_else(|| Error::invalid("no chains to summarize"))?;
    if chains.iter().any(|c| c.draws.is_empty()) {
        return Err(Error::invalid("chain without retained draws"));
    }
    if chains.iter().any(|c| c.model != first.model) {
        return Err(Error::invalid("cannot pool chains of different models"));
    }
    let m = first.draws[0].beta.len();
    parameter_names(first.model, m)
        .iter()
        .map(|name| {
            let mut pooled = Vec::new();
            for c in chains {
                pooled.extend(c.trace(name).ok_or_else(|| Error::invalid(format!("missing {name}")))?);
            }
            summarize(name, &pooled)
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(summary: &[ParamSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per retained draw, chains in order.
pub fn write_draws_ndjson<W: Write>(chains: &[Chain], mut out: W) -> Result<()> {
    for c in chains {
        for d in &c.draws {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_draws_ndjson<R: BufRead>(input: R) -> Result<Vec<Draw>> {
    let mut draws = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Draw = serde_json::from_str(&line).map_err(|e| Error::Parse {
            location: format!("line {}", k + 1),
            msg: e.to_string(),
        })?;
        draws.push(d);
    }
    Ok(draws)
}

/// Regroups draws read back from NDJSON into chains by their chain index.
pub fn chains_from_draws(model: ModelKind, n_burn: usize, draws: Vec<Draw>) -> Vec<Chain> {
    let mut groups: std::collections::BTreeMap<usize, Vec<Draw>> = Default::default();
    for d in draws {
        groups.entry(d.chain).or_default().push(d);
    }
    groups
        .into_values()
        .map(|g| Chain::from_draws(model, n_burn, g))
        .collect()
}
