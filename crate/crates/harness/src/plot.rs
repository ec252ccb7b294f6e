//! Figure rendering as self-contained SVG files, each with a sidecar table
//! holding exactly the numbers plotted.

use std::fmt::Write as _;
use std::path::Path;

use uavsim_core::SimError;

use crate::metrics::{EpisodeRow, SweepRow};

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Figures the plotter knows how to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Throughput,
    Delay,
    DelayVariance,
    ContactFreq,
    InfoError,
    Trajectories,
    Sweep,
}

impl std::str::FromStr for Figure {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "throughput" => Ok(Figure::Throughput),
            "delay" => Ok(Figure::Delay),
            "delay_variance" => Ok(Figure::DelayVariance),
            "contact_freq" => Ok(Figure::ContactFreq),
            "info_error" => Ok(Figure::InfoError),
            "trajectories" => Ok(Figure::Trajectories),
            "sweep" => Ok(Figure::Sweep),
            other => Err(SimError::Input(format!("unknown figure '{other}'"))),
        }
    }
}

impl Figure {
    pub fn episode_metric(&self) -> Option<(&'static str, fn(&EpisodeRow) -> f64)> {
        match self {
            Figure::Throughput => Some(("episode throughput (bits)", |r| r.metrics.bs_bits_total)),
            Figure::Delay => Some(("mean information delay (slots)", |r| r.metrics.mean_delay)),
            Figure::DelayVariance => {
                Some(("delay variance across UAVs", |r| r.metrics.delay_var))
            }
            Figure::ContactFreq => Some((
                "U2B contacts per UAV per slot",
                |r| r.metrics.contacts_per_uav_slot,
            )),
            Figure::InfoError => Some(("mean information error", |r| r.metrics.info_error)),
            _ => None,
        }
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{title}</text>\n",
        W / 2.0
    )
}

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut svg = svg_header(title);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if (x1 - x0).abs() < 1e-12 {
        x1 = x0 + 1.0;
    }
    if (y1 - y0).abs() < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    // axes
    writeln!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">{x_label}</text>",
        W / 2.0,
        H - 16.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 16 {})\">{y_label}</text>",
        H / 2.0,
        H / 2.0
    )
    .unwrap();
    for (v, label_y) in [(y0, H - MARGIN), (y1, MARGIN)] {
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\" font-family=\"sans-serif\">{v:.3}</text>",
            MARGIN - 6.0,
            label_y + 4.0
        )
        .unwrap();
    }
    for (v, label_x) in [(x0, MARGIN), (x1, W - MARGIN)] {
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\" font-family=\"sans-serif\">{v:.1}</text>",
            label_x,
            H - MARGIN + 16.0
        )
        .unwrap();
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> =
            s.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\" font-family=\"sans-serif\">{}</text>",
            W - MARGIN - 150.0,
            MARGIN + 16.0 * (i + 1) as f64,
            s.label
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Per-episode metric figure: one line per variant, averaged across seeds.
/// Returns (svg, sidecar csv).
pub fn episode_figure(
    figure: Figure,
    rows: &[EpisodeRow],
) -> Result<(String, String), SimError> {
    let (label, extract) = figure
        .episode_metric()
        .ok_or_else(|| SimError::Input("not an episode metric figure".into()))?;
    if rows.is_empty() {
        return Err(SimError::Input("no data series to plot".into()));
    }
    let mut variants: Vec<String> = rows.iter().map(|r| r.variant.clone()).collect();
    variants.sort();
    variants.dedup();
    let mut series = Vec::new();
    let mut sidecar = String::from("# uavsim-plot v1\nvariant,episode,value\n");
    for v in &variants {
        let mut by_episode: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
        for r in rows.iter().filter(|r| &r.variant == v) {
            by_episode.entry(r.metrics.episode).or_default().push(extract(r));
        }
        let points: Vec<(f64, f64)> = by_episode
            .iter()
            .map(|(ep, vals)| {
                (*ep as f64, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        for (x, y) in &points {
            sidecar.push_str(&format!("{v},{x},{y}\n"));
        }
        series.push(Series { label: v.clone(), points });
    }
    Ok((line_chart(label, "episode", label, &series), sidecar))
}

/// Trajectory figure in scaled [-1, 1] coordinates with the BS marked.
/// `records` are (kind, id, slot, x, y) rows from a trajectory table.
pub fn trajectory_figure(
    records: &[(String, u64, u64, f64, f64)],
) -> Result<(String, String), SimError> {
    if records.is_empty() {
        return Err(SimError::Input("no data series to plot".into()));
    }
    let mut svg = svg_header("UAV trajectories (scaled coordinates)");
    let sx = |x: f64| MARGIN + (x + 1.0) / 2.0 * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y + 1.0) / 2.0 * (H - 2.0 * MARGIN);
    writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        MARGIN,
        MARGIN,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    )
    .unwrap();
    let mut sidecar = String::from("# uavsim-plot v1\nkind,id,slot,x,y\n");
    let mut uav_ids: Vec<u64> = records
        .iter()
        .filter(|(k, ..)| k == "uav")
        .map(|(_, id, ..)| *id)
        .collect();
    uav_ids.sort();
    uav_ids.dedup();
    for (kind, id, slot, x, y) in records {
        sidecar.push_str(&format!("{kind},{id},{slot},{x},{y}\n"));
        match kind.as_str() {
            "bs" => {
                writeln!(
                    svg,
                    "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"black\"/>\
                     <text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\">BS</text>",
                    sx(*x) - 5.0,
                    sy(*y) - 5.0,
                    sx(*x) + 8.0,
                    sy(*y) - 8.0
                )
                .unwrap();
            }
            "gu" => {
                writeln!(
                    svg,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3.5\" fill=\"none\" stroke=\"#444\"/>",
                    sx(*x),
                    sy(*y)
                )
                .unwrap();
            }
            _ => {}
        }
    }
    for (i, id) in uav_ids.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<(u64, f64, f64)> = records
            .iter()
            .filter(|(k, rid, ..)| k == "uav" && rid == id)
            .map(|(_, _, slot, x, y)| (*slot, *x, *y))
            .collect();
        pts.sort_by_key(|(s, ..)| *s);
        let path: Vec<String> =
            pts.iter().map(|(_, x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>",
            path.join(" ")
        )
        .unwrap();
        if let Some((_, x, y)) = pts.last() {
            writeln!(svg, "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{color}\"/>", sx(*x), sy(*y))
                .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    Ok((svg, sidecar))
}

/// Sweep figure: throughput and delay against the realized U2B contact
/// frequency.
pub fn sweep_figure(rows: &[SweepRow]) -> Result<(String, String), SimError> {
    if rows.is_empty() {
        return Err(SimError::Input("no data series to plot".into()));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.u2b_freq.partial_cmp(&b.u2b_freq).unwrap());
    let tp: Vec<(f64, f64)> =
        sorted.iter().map(|r| (r.u2b_freq, r.throughput_per_slot)).collect();
    let dl: Vec<(f64, f64)> = sorted.iter().map(|r| (r.u2b_freq, r.mean_delay)).collect();
    let svg = line_chart(
        "throughput and delay vs U2B connection frequency",
        "U2B contacts per UAV per slot",
        "throughput (bits/slot) / delay (slots)",
        &[
            Series { label: "throughput per slot".into(), points: tp.clone() },
            Series { label: "mean delay".into(), points: dl.clone() },
        ],
    );
    let mut sidecar = String::from("# uavsim-plot v1\nomega2,u2b_freq,throughput_per_slot,mean_delay\n");
    for r in &sorted {
        sidecar.push_str(&format!(
            "{},{},{},{}\n",
            r.omega2, r.u2b_freq, r.throughput_per_slot, r.mean_delay
        ));
    }
    Ok((svg, sidecar))
}

/// Parses a trajectory table back into rows.
pub fn parse_trajectory_csv(
    text: &str,
) -> Result<Vec<(String, u64, u64, f64, f64)>, SimError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.starts_with("# uavsim-trajectory") => {}
        other => {
            return Err(SimError::Input(format!(
                "expected trajectory schema line, got {other:?}"
            )))
        }
    }
    match lines.next() {
        Some("kind,id,slot,x,y") => {}
        other => return Err(SimError::Input(format!("bad trajectory header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(SimError::Input(format!("trajectory row {i} malformed")));
        }
        rows.push((
            f[0].to_string(),
            f[1].parse().map_err(|e| SimError::Input(format!("row {i}: {e}")))?,
            f[2].parse().map_err(|e| SimError::Input(format!("row {i}: {e}")))?,
            f[3].parse().map_err(|e| SimError::Input(format!("row {i}: {e}")))?,
            f[4].parse().map_err(|e| SimError::Input(format!("row {i}: {e}")))?,
        ));
    }
    Ok(rows)
}

pub fn save_figure(dir: &Path, name: &str, svg: &str, sidecar: &str) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| SimError::Input(format!("{}: {e}", dir.display())))?;
    crate::metrics::write_to(&dir.join(format!("{name}.svg")), svg)?;
    crate::metrics::write_to(&dir.join(format!("{name}.csv")), sidecar)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use uavsim_core::train::EpisodeMetrics;

    fn row(variant: &str, seed: u64, ep: u64, v: f64) -> EpisodeRow {
        EpisodeRow {
            variant: variant.into(),
            seed,
            metrics: EpisodeMetrics {
                episode: ep,
                bs_bits_total: v,
                mean_delay: v / 2.0,
                delay_var: 0.0,
                contacts_per_uav_slot: 0.1,
                info_error: 0.0,
                reward_mean: v,
            },
        }
    }

    #[test]
    fn episode_figure_averages_seeds() {
        let rows = vec![
            row("sta", 1, 0, 10.0),
            row("sta", 2, 0, 20.0),
            row("ideal", 1, 0, 30.0),
        ];
        let (svg, sidecar) = episode_figure(Figure::Throughput, &rows).unwrap();
        assert!(svg.contains("<svg"));
        assert!(sidecar.contains("sta,0,15"));
        assert!(sidecar.contains("ideal,0,30"));
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(episode_figure(Figure::Delay, &[]).is_err());
        assert!(sweep_figure(&[]).is_err());
        assert!(trajectory_figure(&[]).is_err());
    }

    #[test]
    fn trajectory_marks_bs() {
        let recs = vec![
            ("bs".to_string(), 0, 0, 1.0, 1.0),
            ("uav".to_string(), 0, 1, 0.0, 0.0),
            ("uav".to_string(), 0, 2, 0.5, 0.5),
        ];
        let (svg, sidecar) = trajectory_figure(&recs).unwrap();
        assert!(svg.contains(">BS<"));
        assert!(sidecar.contains("bs,0,0,1,1"));
        // sidecar row count matches the input
        assert_eq!(sidecar.lines().count(), 2 + recs.len());
    }
}
