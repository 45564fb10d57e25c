use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use super::{DecisionRecord, EpisodeLog};
use crate::error::{Error, Result};

/// Default heatmap bucket width in environment steps.
pub const HEATMAP_BUCKET: usize = 10;

/// Nine significant digits in scientific notation.
pub fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_decisions_csv<W: Write>(out: &mut W, logs: &[EpisodeLog]) -> Result<()> {
    writeln!(
        out,
        "episode,decision_index,env_step,phase,h_star,raw_argmax,xi"
    )?;
    for log in logs {
        for d in &log.decisions {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                log.episode,
                d.decision_index,
                d.env_step,
                d.phase,
                d.h_star,
                opt(d.raw_argmax),
                opt(d.xi)
            )?;
        }
    }
    Ok(())
}

pub fn write_episodes_csv<W: Write>(out: &mut W, logs: &[EpisodeLog]) -> Result<()> {
    writeln!(
        out,
        "episode,seed,mode,success,env_steps,decisions,ms_per_decision_mean,task,error"
    )?;
    for log in logs {
        let error = log.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            log.episode,
            log.seed,
            log.mode,
            u8::from(log.success),
            log.env_steps,
            log.decisions.len(),
            fmt_sig9(log.wall_ms_per_decision),
            log.task,
            error
        )?;
    }
    Ok(())
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, line: usize) -> Result<T> {
    fields
        .get(i)
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {line}: bad or missing column {i}")))
}

fn opt_field(fields: &[&str], i: usize, line: usize) -> Result<Option<usize>> {
    match fields.get(i) {
        Some(&"") => Ok(None),
        _ => field(fields, i, line).map(Some),
    }
}

/// Rebuilds per-episode decision lists from `decisions.csv`.
///
/// Only the decision columns are recovered; other [`EpisodeLog`] fields are
/// left empty. With `episodes` set, rows of other episodes are skipped.
pub fn read_decisions_csv<R: BufRead>(
    input: R,
    episodes: Option<&BTreeSet<usize>>,
) -> Result<Vec<EpisodeLog>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "episode,decision_index,env_step,phase,h_star,raw_argmax,xi" {
        return Err(Error::Parse(format!(
            "unexpected decisions header {header:?}"
        )));
    }
    let mut by_episode: BTreeMap<usize, Vec<DecisionRecord>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 2;
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let episode: usize = field(&f, 0, n)?;
        if episodes.is_some_and(|keep| !keep.contains(&episode)) {
            continue;
        }
        by_episode.entry(episode).or_default().push(DecisionRecord {
            decision_index: field(&f, 1, n)?,
            env_step: field(&f, 2, n)?,
            phase: field(&f, 3, n)?,
            h_star: field(&f, 4, n)?,
            raw_argmax: opt_field(&f, 5, n)?,
            xi: opt_field(&f, 6, n)?,
            curve: Vec::new(),
            wall_ms: 0.0,
        });
    }
    Ok(by_episode
        .into_iter()
        .map(|(episode, decisions)| EpisodeLog {
            episode,
            seed: 0,
            mode: String::new(),
            task: String::new(),
            horizon: decisions.iter().map(|d| d.h_star).max().unwrap_or(0),
            success: false,
            env_steps: 0,
            decisions,
            step_phases: Vec::new(),
            wall_ms_per_decision: 0.0,
            error: None,
        })
        .collect())
}

/// Episode indices whose `mode` column in `episodes.csv` equals `mode`.
pub fn episodes_with_mode<R: BufRead>(input: R, mode: &str) -> Result<BTreeSet<usize>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let cols: Vec<&str> = header.trim().split(',').collect();
    let (Some(ei), Some(mi)) = (
        cols.iter().position(|c| *c == "episode"),
        cols.iter().position(|c| *c == "mode"),
    ) else {
        return Err(Error::Parse(format!(
            "episodes header lacks episode/mode: {header:?}"
        )));
    };
    let mut out = BTreeSet::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.get(mi) == Some(&mode) {
            out.insert(field(&f, ei, i + 2)?);
        }
    }
    Ok(out)
}

/// Chunk-size counts per decision-time bucket.
///
/// Rows bucket decisions by the environment step at which they were made
/// (`bucket` steps per row); columns count `h* = 1..=horizon`; the last
/// column is the bucket's mean `h*`.
pub fn export_heatmap<W: Write>(
    out: &mut W,
    logs: &[EpisodeLog],
    horizon: usize,
    bucket: usize,
) -> Result<()> {
    let bucket = bucket.max(1);
    write!(out, "step_lo,step_hi")?;
    for h in 1..=horizon {
        write!(out, ",h{h}")?;
    }
    writeln!(out, ",mean_h_star")?;

    let mut rows: Vec<Vec<u64>> = Vec::new();
    for d in logs.iter().flat_map(|l| &l.decisions) {
        let r = d.env_step / bucket;
        if rows.len() <= r {
            rows.resize(r + 1, vec![0; horizon]);
        }
        if (1..=horizon).contains(&d.h_star) {
            rows[r][d.h_star - 1] += 1;
        }
    }
    for (r, counts) in rows.iter().enumerate() {
        write!(out, "{},{}", r * bucket, (r + 1) * bucket - 1)?;
        for c in counts {
            write!(out, ",{c}")?;
        }
        let total: u64 = counts.iter().sum();
        let mean = if total == 0 {
            String::new()
        } else {
            let weighted: u64 = counts
                .iter()
                .enumerate()
                .map(|(i, c)| (i as u64 + 1) * c)
                .sum();
            fmt_sig9(weighted as f64 / total as f64)
        };
        writeln!(out, ",{mean}")?;
    }
    Ok(())
}
