//! CSV artifacts of a run. Column order is fixed; unit columns are numbered
//! from 1.
//!
//! * `metrics_episode.csv`: `episode, sum_avg_reward, avg_reward_<i>...,
//!   mean_bid_<i>..., maint_cost`
//! * `trace_steps.csv`: `episode, t, then per unit k_<i>, u_req_<i>, u_f_<i>,
//!   g_<i>, r_<i>, then price, demand, filter_distance`
//! * `maintenance_raster.csv`: `day, unit_<i>...` with 0/1 entries

use super::{RunOutput, SimError};
use std::path::Path;

pub const METRICS_FILE: &str = "metrics_episode.csv";
pub const TRACE_FILE: &str = "trace_steps.csv";
pub const RASTER_FILE: &str = "maintenance_raster.csv";

fn bit(b: bool) -> String {
    (b as u8).to_string()
}

fn write_csv(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<(), SimError> {
    let err = |e: csv::Error| SimError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(&header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush()
        .map_err(|e| SimError::Output(format!("{}: {e}", path.display())))
}

/// Writes the three CSV files into `dir`, creating it if needed.
pub fn write_artifacts(out: &RunOutput, n_units: usize, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::Output(format!("{}: {e}", dir.display())))?;
    let units = 1..=n_units;

    let mut header = vec!["episode".to_string(), "sum_avg_reward".to_string()];
    header.extend(units.clone().map(|i| format!("avg_reward_{i}")));
    header.extend(units.clone().map(|i| format!("mean_bid_{i}")));
    header.push("maint_cost".into());
    write_csv(
        &dir.join(METRICS_FILE),
        header,
        out.episodes.iter().map(|m| {
            let mut row = vec![m.episode.to_string(), m.sum_avg_reward.to_string()];
            row.extend(m.avg_reward.iter().map(f64::to_string));
            row.extend(m.mean_bid.iter().map(f64::to_string));
            row.push(m.maint_cost.to_string());
            row
        }),
    )?;

    let mut header = vec!["episode".to_string(), "t".to_string()];
    for i in units.clone() {
        header.extend(["k", "u_req", "u_f", "g", "r"].map(|c| format!("{c}_{i}")));
    }
    header.extend(["price", "demand", "filter_distance"].map(String::from));
    write_csv(
        &dir.join(TRACE_FILE),
        header,
        out.records.iter().map(|r| {
            let mut row = vec![r.episode.to_string(), r.t.to_string()];
            for i in 0..n_units {
                row.push(r.bids[i].to_string());
                row.push(bit(r.requested[i]));
                row.push(bit(r.applied[i]));
                row.push(r.gen[i].to_string());
                row.push(r.rewards[i].to_string());
            }
            row.push(r.price.to_string());
            row.push(r.demand.to_string());
            row.push(r.distance.to_string());
            row
        }),
    )?;

    let mut header = vec!["day".to_string()];
    header.extend(units.map(|i| format!("unit_{i}")));
    write_csv(
        &dir.join(RASTER_FILE),
        header,
        out.records.iter().map(|r| {
            let mut row = vec![r.t.to_string()];
            row.extend(r.applied.iter().map(|&b| bit(b)));
            row
        }),
    )
}

/// Reads the executed decisions back from a maintenance raster, one row per
/// day in file order.
pub fn read_raster(path: &Path) -> Result<Vec<Vec<bool>>, SimError> {
    let err = |e: csv::Error| SimError::Output(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(err)?;
        let row = rec
            .iter()
            .skip(1)
            .map(|f| match f.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(SimError::Output(format!("{}: expected 0 or 1, got `{other}`", path.display()))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}
