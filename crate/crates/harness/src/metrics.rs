//! Delimited text tables with a schema-version comment line and a header row.
//! Diff-able, language-neutral, and round-trip safe.

use std::fmt::Write as _;
use std::path::Path;

use uavsim_core::train::{EpisodeMetrics, SlotRecord};
use uavsim_core::SimError;

pub const SLOT_SCHEMA: &str = "# uavsim-slots v1";
pub const EPISODE_SCHEMA: &str = "# uavsim-episodes v1";
pub const SWEEP_SCHEMA: &str = "# uavsim-sweep v1";

const SLOT_HEADER: &str =
    "variant,seed,episode,slot,bs_bits,acc_bits,mean_delay,delay_var,contacts,info_error,reward";
const EPISODE_HEADER: &str =
    "variant,seed,episode,bs_bits_total,mean_delay,delay_var,contacts_per_uav_slot,info_error,reward_mean";
const SWEEP_HEADER: &str = "omega2,u2b_freq,throughput_per_slot,mean_delay,accumulated_bits";

/// One row of the per-slot table, tagged with its run identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRow {
    pub variant: String,
    pub seed: u64,
    pub episode: u64,
    pub record: SlotRecord,
}

/// One row of the per-episode table.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub variant: String,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub omega2: f64,
    pub u2b_freq: f64,
    pub throughput_per_slot: f64,
    pub mean_delay: f64,
    pub accumulated_bits: f64,
}

fn fmt_f(v: f64) -> String {
    // shortest representation that parses back exactly
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

pub fn write_slot_table(rows: &[SlotRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{SLOT_SCHEMA}").unwrap();
    writeln!(out, "{SLOT_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.seed,
            r.episode,
            r.record.t,
            fmt_f(r.record.bs_bits),
            fmt_f(r.record.acc_bits),
            fmt_f(r.record.mean_delay),
            fmt_f(r.record.delay_var),
            r.record.contacts,
            fmt_f(r.record.info_error),
            fmt_f(r.record.reward),
        )
        .unwrap();
    }
    out
}

pub fn parse_slot_table(text: &str) -> Result<Vec<SlotRow>, SimError> {
    let mut lines = text.lines();
    check_schema(lines.next(), SLOT_SCHEMA)?;
    check_header(lines.next(), SLOT_HEADER)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(SimError::Input(format!("slot row {i}: {} fields", f.len())));
        }
        rows.push(SlotRow {
            variant: f[0].to_string(),
            seed: parse_u(f[1], i)?,
            episode: parse_u(f[2], i)?,
            record: SlotRecord {
                t: parse_u(f[3], i)?,
                bs_bits: parse_f(f[4], i)?,
                acc_bits: parse_f(f[5], i)?,
                mean_delay: parse_f(f[6], i)?,
                delay_var: parse_f(f[7], i)?,
                contacts: parse_u(f[8], i)? as u32,
                info_error: parse_f(f[9], i)?,
                reward: parse_f(f[10], i)?,
            },
        });
    }
    Ok(rows)
}

pub fn write_episode_table(rows: &[EpisodeRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{EPISODE_SCHEMA}").unwrap();
    writeln!(out, "{EPISODE_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.seed,
            r.metrics.episode,
            fmt_f(r.metrics.bs_bits_total),
            fmt_f(r.metrics.mean_delay),
            fmt_f(r.metrics.delay_var),
            fmt_f(r.metrics.contacts_per_uav_slot),
            fmt_f(r.metrics.info_error),
            fmt_f(r.metrics.reward_mean),
        )
        .unwrap();
    }
    out
}

pub fn parse_episode_table(text: &str) -> Result<Vec<EpisodeRow>, SimError> {
    let mut lines = text.lines();
    check_schema(lines.next(), EPISODE_SCHEMA)?;
    check_header(lines.next(), EPISODE_HEADER)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(SimError::Input(format!(
                "episode row {i}: {} fields",
                f.len()
            )));
        }
        rows.push(EpisodeRow {
            variant: f[0].to_string(),
            seed: parse_u(f[1], i)?,
            metrics: EpisodeMetrics {
                episode: parse_u(f[2], i)?,
                bs_bits_total: parse_f(f[3], i)?,
                mean_delay: parse_f(f[4], i)?,
                delay_var: parse_f(f[5], i)?,
                contacts_per_uav_slot: parse_f(f[6], i)?,
                info_error: parse_f(f[7], i)?,
                reward_mean: parse_f(f[8], i)?,
            },
        });
    }
    Ok(rows)
}

pub fn write_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{SWEEP_SCHEMA}").unwrap();
    writeln!(out, "{SWEEP_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f(r.omega2),
            fmt_f(r.u2b_freq),
            fmt_f(r.throughput_per_slot),
            fmt_f(r.mean_delay),
            fmt_f(r.accumulated_bits),
        )
        .unwrap();
    }
    out
}

pub fn parse_sweep_table(text: &str) -> Result<Vec<SweepRow>, SimError> {
    let mut lines = text.lines();
    check_schema(lines.next(), SWEEP_SCHEMA)?;
    check_header(lines.next(), SWEEP_HEADER)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(SimError::Input(format!("sweep row {i}: {} fields", f.len())));
        }
        rows.push(SweepRow {
            omega2: parse_f(f[0], i)?,
            u2b_freq: parse_f(f[1], i)?,
            throughput_per_slot: parse_f(f[2], i)?,
            mean_delay: parse_f(f[3], i)?,
            accumulated_bits: parse_f(f[4], i)?,
        });
    }
    Ok(rows)
}

fn check_schema(line: Option<&str>, expected: &str) -> Result<(), SimError> {
    match line {
        Some(l) if l.trim() == expected => Ok(()),
        other => Err(SimError::Input(format!(
            "expected schema line '{expected}', got {other:?}"
        ))),
    }
}

fn check_header(line: Option<&str>, expected: &str) -> Result<(), SimError> {
    match line {
        Some(l) if l.trim() == expected => Ok(()),
        other => Err(SimError::Input(format!(
            "expected header '{expected}', got {other:?}"
        ))),
    }
}

fn parse_u(s: &str, row: usize) -> Result<u64, SimError> {
    s.parse()
        .map_err(|e| SimError::Input(format!("row {row}: bad integer '{s}': {e}")))
}

fn parse_f(s: &str, row: usize) -> Result<f64, SimError> {
    s.parse()
        .map_err(|e| SimError::Input(format!("row {row}: bad float '{s}': {e}")))
}

pub fn write_to(path: &Path, content: &str) -> Result<(), SimError> {
    std::fs::write(path, content)
        .map_err(|e| SimError::Input(format!("{}: {e}", path.display())))
}

pub fn read_from(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path)
        .map_err(|e| SimError::Input(format!("{}: {e}", path.display())))
}
