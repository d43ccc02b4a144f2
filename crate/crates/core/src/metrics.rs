//! Point error metrics and the predictive model choice criterion (PMCC).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point errors between predictions and observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointErrors {
    pub mse: f64,
    pub mae: f64,
    /// `None` when every observation is zero.
    pub mape: Option<f64>,
    /// Records left out of MAPE because the observation is zero.
    pub mape_excluded: usize,
    /// `sum (p - o)^2 / sum (mean(p) - o)^2`; `None` when the denominator is zero.
    pub rmsep: Option<f64>,
    /// Square root of MSE.
    pub rmse: f64,
    pub d: usize,
}

pub fn point_errors(pred: &[f64], obs: &[f64]) -> Result<PointErrors> {
    if pred.len() != obs.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} observations",
            pred.len(),
            obs.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("no records to score"));
    }
    if pred.iter().chain(obs).any(|v| !v.is_finite()) {
        return Err(Error::invalid("predictions and observations must be finite"));
    }
    let d = pred.len() as f64;
    let sse: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o).powi(2)).sum();
    let mae = pred.iter().zip(obs).map(|(p, o)| (p - o).abs()).sum::<f64>() / d;
    let (ape_sum, ape_count) = pred
        .iter()
        .zip(obs)
        .filter(|(_, o)| **o != 0.0)
        .fold((0.0, 0usize), |(s, c), (p, o)| (s + ((p - o) / o).abs(), c + 1));
    let pred_mean = pred.iter().sum::<f64>() / d;
    let denom: f64 = obs.iter().map(|o| (pred_mean - o).powi(2)).sum();
    let mse = sse / d;
    Ok(PointErrors {
        mse,
        mae,
        mape: (ape_count > 0).then(|| ape_sum / ape_count as f64),
        mape_excluded: pred.len() - ape_count,
        rmsep: (denom > 0.0).then(|| sse / denom),
        rmse: mse.sqrt(),
        d: pred.len(),
    })
}

/// `sum (mean - obs)^2 + sum var` over aligned cells.
pub fn pmcc(pred_mean: &[f64], pred_var: &[f64], obs: &[f64]) -> Result<f64> {
    if pred_mean.len() != obs.len() || pred_var.len() != obs.len() {
        return Err(Error::invalid("pmcc inputs must have equal lengths"));
    }
    if let Some(v) = pred_var.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("predictive variance must be non-negative, got {v}")));
    }
    let sq: f64 = pred_mean.iter().zip(obs).map(|(m, o)| (m - o).powi(2)).sum();
    Ok(sq + pred_var.iter().sum::<f64>())
}

/// Point errors plus PMCC, serialized as a two-column table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport {
    pub errors: PointErrors,
    pub pmcc: Option<f64>,
}

impl ScoreReport {
    fn rows(&self) -> Vec<(&'static str, Option<f64>)> {
        let e = &self.errors;
        vec![
            ("mse", Some(e.mse)),
            ("mae", Some(e.mae)),
            ("mape", e.mape),
            ("rmsep", e.rmsep),
            ("rmse", Some(e.rmse)),
            ("pmcc", self.pmcc),
            ("d", Some(e.d as f64)),
            ("mape_excluded", Some(e.mape_excluded as f64)),
        ]
    }
}

#[derive(Serialize, Deserialize)]
struct MetricRow {
    metric: String,
    value: Option<f64>,
}

/// Writes `metric,value` rows; undefined values are left empty.
pub fn write_score_csv<W: Write>(report: &ScoreReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (metric, value) in report.rows() {
        w.serialize(MetricRow {
            metric: metric.to_string(),
            value,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_score_csv<R: Read>(input: R) -> Result<ScoreReport> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut get = std::collections::HashMap::new();
    for row in rdr.deserialize() {
        let r: MetricRow = row?;
        get.insert(r.metric, r.value);
    }
    let field = |name: &str| -> Result<Option<f64>> {
        get.get(name)
            .copied()
            .ok_or_else(|| Error::Parse {
                location: "score csv".into(),
                msg: format!("missing metric {name}"),
            })
    };
    let required = |name: &str| -> Result<f64> {
        field(name)?.ok_or_else(|| Error::Parse {
            location: "score csv".into(),
            msg: format!("metric {name} has no value"),
        })
    };
    Ok(ScoreReport {
        errors: PointErrors {
            mse: required("mse")?,
            mae: required("mae")?,
            mape: field("mape")?,
            mape_excluded: required("mape_excluded")? as usize,
            rmsep: field("rmsep")?,
            rmse: required("rmse")?,
            d: required("d")? as usize,
        },
        pmcc: field("pmcc")?,
    })
}
