//! Panel CSV: `site_id,x_m,y_m,t,observed,o_log,f_1..f_{m-1}`, one row per
//! (site, slot), sites in grid order and slots ascending. The intercept
//! column is implied. Unobserved cells leave `o_log` empty.

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::Panel;
use crate::error::{Error, Result};
use crate::kernel::SiteGrid;

pub fn write_panel_csv<W: Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let m = panel.n_features();
    let mut header: Vec<String> = ["site_id", "x_m", "y_m", "t", "observed", "o_log"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..m).map(|k| format!("f_{k}")));
    w.write_record(&header)?;
    let grid = panel.grid();
    for i in 0..panel.n_sites() {
        let [x, y] = grid.coords()[i];
        for t in 0..panel.n_slots() {
            let observed = panel.is_observed(i, t);
            let mut row = vec![
                grid.ids()[i].clone(),
                x.to_string(),
                y.to_string(),
                t.to_string(),
                if observed { "1" } else { "0" }.to_string(),
                if observed { panel.obs()[(i, t)].to_string() } else { String::new() },
            ];
            row.extend((1..m).map(|k| panel.features(t)[(i, k)].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(field: &str, line: u64, name: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Parse {
        location: format!("panel line {line}, column {name}"),
        msg: e.to_string(),
    })
}

struct Row {
    site: usize,
    t: usize,
    observed: bool,
    o_log: f64,
    features: Vec<f64>,
}

pub fn read_panel_csv<R: Read>(reader: R) -> Result<Panel> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let expected = ["site_id", "x_m", "y_m", "t", "observed", "o_log"];
    if headers.len() < expected.len() || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(Error::Parse {
            location: "panel header".into(),
            msg: format!("expected columns starting with {}", expected.join(",")),
        });
    }
    let n_cov = headers.len() - expected.len();

    let mut ids: Vec<String> = Vec::new();
    let mut coords: Vec<[f64; 2]> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        let id = rec[0].trim().to_string();
        let x = parse_f64(&rec[1], line, "x_m")?;
        let y = parse_f64(&rec[2], line, "y_m")?;
        let site = match index.get(&id) {
            Some(&s) => {
                if coords[s] != [x, y] {
                    return Err(Error::Parse {
                        location: format!("panel line {line}"),
                        msg: format!("site {id} changes coordinates"),
                    });
                }
                s
            }
            None => {
                index.insert(id.clone(), ids.len());
                ids.push(id);
                coords.push([x, y]);
                ids.len() - 1
            }
        };
        let t = rec[3].trim().parse::<usize>().map_err(|e| Error::Parse {
            location: format!("panel line {line}, column t"),
            msg: e.to_string(),
        })?;
        let observed = match rec[4].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    location: format!("panel line {line}, column observed"),
                    msg: format!("expected 0 or 1, got {other:?}"),
                })
            }
        };
        let o_log = if observed { parse_f64(&rec[5], line, "o_log")? } else { 0.0 };
        let features = (0..n_cov)
            .map(|c| parse_f64(&rec[6 + c], line, &format!("f_{}", c + 1)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            site,
            t,
            observed,
            o_log,
            features,
        });
    }

    let n = ids.len();
    let n_slots = rows.iter().map(|r| r.t + 1).max().unwrap_or(0);
    if n * n_slots != rows.len() {
        return Err(Error::Parse {
            location: "panel".into(),
            msg: format!("expected a complete cube of {n} sites x {n_slots} slots, got {} rows", rows.len()),
        });
    }
    let mut obs = DMatrix::zeros(n, n_slots);
    let mut observed = DMatrix::from_element(n, n_slots, false);
    let mut seen = DMatrix::from_element(n, n_slots, false);
    let mut features = vec![DMatrix::from_element(n, n_cov + 1, 1.0); n_slots];
    for row in rows {
        if seen[(row.site, row.t)] {
            return Err(Error::Parse {
                location: "panel".into(),
                msg: format!("duplicate row for site {} slot {}", ids[row.site], row.t),
            });
        }
        seen[(row.site, row.t)] = true;
        obs[(row.site, row.t)] = row.o_log;
        observed[(row.site, row.t)] = row.observed;
        for (c, v) in row.features.into_iter().enumerate() {
            features[row.t][(row.site, c + 1)] = v;
        }
    }
    Panel::new(SiteGrid::new(ids, coords)?, obs, observed, features)
}
