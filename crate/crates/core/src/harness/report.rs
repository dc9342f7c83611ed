//! Figure-ready aggregation tables, built by joining the raw CSV outputs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Parses a simple comma-separated file (no quoting; none of the emitted
/// schemas need it) into a header and rows.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or(Error::EmptyInput("csv"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != header.len() {
            return Err(Error::Malformed {
                what: "csv",
                msg: format!("line {}: {} fields, header has {}", i + 2, fields.len(), header.len()),
            });
        }
        rows.push(fields);
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Malformed {
            what: "csv",
            msg: format!("missing column {name}"),
        })
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Malformed {
        what: "csv",
        msg: format!("bad number {s}: {e}"),
    })
}

/// Mean and sample standard deviation.
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-session divergences at sparse (n = 2) and dense (n = 50) equal
/// allocations, per method.
pub fn sparse_dense_table(exp1_csv: &str) -> Result<String> {
    let (header, rows) = parse_csv(exp1_csv)?;
    let (c_sess, c_method, c_n, c_kld) = (
        column(&header, "session_id")?,
        column(&header, "method")?,
        column(&header, "n_per_task")?,
        column(&header, "session_kld")?,
    );
    let mut out = String::from("session_id,method,n_per_task,session_kld\n");
    for row in &rows {
        if row[c_n] == "2" || row[c_n] == "50" {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row[c_sess], row[c_method], row[c_n], row[c_kld]
            ));
        }
    }
    Ok(out)
}

/// Mean and standard deviation of the session divergence versus
/// observations per task, per method (the accuracy-vs-data-quantity
/// curves).
pub fn accuracy_by_allocation_table(exp1_csv: &str) -> Result<String> {
    let (header, rows) = parse_csv(exp1_csv)?;
    let (c_method, c_n, c_kld) = (
        column(&header, "method")?,
        column(&header, "n_per_task")?,
        column(&header, "session_kld")?,
    );
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        let n: usize = row[c_n].parse().map_err(|_| Error::Malformed {
            what: "csv",
            msg: format!("bad n {}", row[c_n]),
        })?;
        groups
            .entry((row[c_method].clone(), n))
            .or_default()
            .push(parse_f64(&row[c_kld])?);
    }
    let mut out = String::from("method,n_per_task,sessions,mean_kld,sd_kld\n");
    for ((method, n), values) in groups {
        let (mean, sd) = mean_sd(&values);
        out.push_str(&format!("{method},{n},{},{mean},{sd}\n", values.len()));
    }
    Ok(out)
}

/// Mean and standard deviation of the session divergence versus total
/// observations, per strategy-estimator configuration (the
/// sampling-strategy curves).
pub fn strategy_curves_table(exp2_csv: &str) -> Result<String> {
    let (header, rows) = parse_csv(exp2_csv)?;
    let (c_method, c_strategy, c_obs, c_kld) = (
        column(&header, "method")?,
        column(&header, "strategy")?,
        column(&header, "total_obs")?,
        column(&header, "session_kld")?,
    );
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        let obs: usize = row[c_obs].parse().map_err(|_| Error::Malformed {
            what: "csv",
            msg: format!("bad obs {}", row[c_obs]),
        })?;
        let config = format!("{}+{}", row[c_method], row[c_strategy]);
        groups
            .entry((config, obs))
            .or_default()
            .push(parse_f64(&row[c_kld])?);
    }
    let mut out = String::from("configuration,total_obs,sessions,mean_kld,sd_kld\n");
    for ((config, obs), values) in groups {
        let (mean, sd) = mean_sd(&values);
        out.push_str(&format!("{config},{obs},{},{mean},{sd}\n", values.len()));
    }
    Ok(out)
}

/// Task-allocation histogram of the first 100 delivered items per
/// adaptive session.
pub fn task_allocation_table(trajectories_csv: &str) -> Result<String> {
    let (header, rows) = parse_csv(trajectories_csv)?;
    let (c_sess, c_idx, c_task) = (
        column(&header, "session_id")?,
        column(&header, "trial_index")?,
        column(&header, "task_id")?,
    );
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for row in &rows {
        let idx: usize = row[c_idx].parse().map_err(|_| Error::Malformed {
            what: "csv",
            msg: format!("bad trial index {}", row[c_idx]),
        })?;
        if idx < 100 {
            *counts
                .entry((row[c_sess].clone(), row[c_task].clone()))
                .or_default() += 1;
        }
    }
    let mut out = String::from("session_id,task_id,trials_in_first_100\n");
    for ((sess, task), count) in counts {
        out.push_str(&format!("{sess},{task},{count}\n"));
    }
    Ok(out)
}

/// Final positional error against normalized negative log probability per
/// session (the convergence-quality scatter).
pub fn convergence_scatter_table(summary_csv: &str) -> Result<String> {
    let (header, rows) = parse_csv(summary_csv)?;
    let (c_sess, c_dist, c_nnlp, c_flag) = (
        column(&header, "session_id")?,
        column(&header, "final_distance")?,
        column(&header, "final_nnlp")?,
        column(&header, "flagged_multimodal")?,
    );
    let mut out = String::from("session_id,final_distance,final_nnlp,flagged_multimodal\n");
    for row in &rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row[c_sess], row[c_dist], row[c_nnlp], row[c_flag]
        ));
    }
    Ok(out)
}
