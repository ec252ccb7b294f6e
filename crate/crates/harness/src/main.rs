//! Command-line front end: train, eval, sweep-omega2, plot, oracle-check.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::Rng;

use uavsim_core::marl::Variant;
use uavsim_core::rng::{stream, StreamKind};
use uavsim_core::WorldConfig;

use uavsim_harness::metrics::{
    parse_episode_table, parse_sweep_table, read_from, write_sweep_table, write_to, EpisodeRow,
};
use uavsim_harness::oracle::{
    enumerate_feasible, evaluate_tuple, oracle_feasible, oracle_one_step, validator_accepts,
    CandidateTuple, OracleState,
};
use uavsim_harness::plot::{
    episode_figure, parse_trajectory_csv, save_figure, sweep_figure, trajectory_figure, Figure,
};
use uavsim_harness::runner::{
    eval_leg, init_run_dir, leg_dir, load_leg, persist_leg, read_run_config, read_run_meta,
    run_indexed, train_leg, worker_count, write_trajectory_csv, EvalSummary, RunMeta,
    RUN_META_VERSION,
};
use uavsim_harness::sweep::sweep_omega2;

#[derive(Parser)]
#[command(
    name = "uavsim",
    about = "Multi-UAV data-relay network simulator with attention-enhanced multi-agent learning",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more variants over a list of seeds.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Variant name, comma list, or "all".
        #[arg(long)]
        variant: String,
        /// Comma-separated seed list.
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long, default_value_t = 300)]
        episodes: u64,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Also persist the per-slot metrics table (large).
        #[arg(long, default_value_t = false)]
        slot_log: bool,
    },
    /// Evaluate a finished run directory with greedy rollouts.
    Eval {
        /// Run directory produced by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: u64,
    },
    /// Train the STA variant over an omega2 grid and tabulate the trade-off.
    SweepOmega2 {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated omega2 values.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long, default_value_t = 150)]
        episodes: u64,
        #[arg(long, default_value_t = 10)]
        eval_episodes: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a figure from a run or sweep directory.
    Plot {
        /// Run directory (or sweep directory for --figure sweep).
        #[arg(long)]
        run: PathBuf,
        /// throughput | delay | delay_variance | contact_freq | info_error |
        /// trajectories | sweep
        #[arg(long)]
        figure: String,
        /// Output directory; defaults to <run>/plots.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the exhaustive one-step oracle against the validators.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        instances: u64,
        #[arg(long, default_value_t = 1000)]
        tuples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Result<Vec<u64>, _> =
        s.split(',').map(|x| x.trim().parse::<u64>()).collect();
    let seeds = seeds.context("seed list must be comma-separated integers")?;
    if seeds.is_empty() {
        bail!("empty seed list");
    }
    Ok(seeds)
}

fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    s.split(',')
        .map(|x| x.trim().parse::<Variant>().map_err(|e| anyhow!("{e}")))
        .collect()
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let grid: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
    let grid = grid.context("grid must be comma-separated numbers")?;
    if grid.is_empty() {
        bail!("empty grid");
    }
    Ok(grid)
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, variant, seeds, episodes, out, slot_log } => {
            let cfg_text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = WorldConfig::from_toml_str(&cfg_text)?;
            let variants = parse_variants(&variant)?;
            let seeds = parse_seeds(&seeds)?;
            let meta = RunMeta {
                schema_version: RUN_META_VERSION,
                variants: variants.iter().map(|v| v.as_str().to_string()).collect(),
                seeds: seeds.clone(),
                episodes,
            };
            init_run_dir(&out, &cfg_text, &meta)?;
            let jobs: Vec<(Variant, u64)> = variants
                .iter()
                .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
                .collect();
            let workers = worker_count();
            eprintln!(
                "training {} legs ({} workers), {} episodes each",
                jobs.len(),
                workers.min(jobs.len()),
                episodes
            );
            let results = run_indexed(jobs.len(), workers, |i| {
                let (v, s) = jobs[i];
                train_leg(&cfg, v, s, episodes, slot_log)
            });
            for r in results {
                let leg = r?;
                persist_leg(&out, &cfg, &leg)?;
                let last = leg.episodes.last().expect("at least one episode");
                eprintln!(
                    "  {}/seed {}: final episode throughput {:.2} bits, mean delay {:.2}",
                    leg.variant.as_str(),
                    leg.seed,
                    last.bs_bits_total,
                    last.mean_delay
                );
            }
            println!("{}", out.display());
            Ok(())
        }
        Command::Eval { run, episodes } => {
            let meta = read_run_meta(&run)?;
            let cfg = read_run_config(&run)?;
            let jobs: Vec<(Variant, u64)> = meta
                .variants
                .iter()
                .map(|v| v.parse::<Variant>().map_err(|e| anyhow!("{e}")))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flat_map(|v| meta.seeds.iter().map(move |&s| (v, s)))
                .collect();
            let workers = worker_count();
            let results = run_indexed(jobs.len(), workers, |i| -> Result<EvalSummary> {
                let (v, s) = jobs[i];
                let mut trainer = load_leg(&run, &cfg, v, s)?;
                let (summary, last) = eval_leg(&mut trainer, episodes, true)?;
                if let Some(log) = last {
                    let env = uavsim_core::env::Env::new(cfg.clone(), s);
                    let gu_positions: Vec<[f64; 3]> =
                        env.gus.iter().map(|g| g.position).collect();
                    let text = write_trajectory_csv(&log, &cfg, &gu_positions);
                    write_to(&leg_dir(&run, v, s).join("trajectory.csv"), &text)?;
                }
                Ok(summary)
            });
            let summaries: Vec<EvalSummary> =
                results.into_iter().collect::<Result<Vec<_>>>()?;
            let mut doc = String::from("# greedy evaluation summaries\n");
            for v in &meta.variants {
                let per: Vec<&EvalSummary> =
                    summaries.iter().filter(|s| &s.variant == v).collect();
                let stat = |f: fn(&EvalSummary) -> f64| {
                    uavsim_harness::runner::mean_std(
                        &per.iter().map(|s| f(s)).collect::<Vec<_>>(),
                    )
                };
                let (tp, tp_s) = stat(|s| s.throughput_per_slot);
                let (acc, acc_s) = stat(|s| s.accumulated_bits);
                let (dl, dl_s) = stat(|s| s.mean_delay);
                let (cf, cf_s) = stat(|s| s.contacts_per_uav_slot);
                let (ie, ie_s) = stat(|s| s.info_error);
                doc.push_str(&format!(
                    "[{v}]\nthroughput_per_slot = {tp}\nthroughput_per_slot_std = {tp_s}\n\
                     accumulated_bits = {acc}\naccumulated_bits_std = {acc_s}\n\
                     mean_delay = {dl}\nmean_delay_std = {dl_s}\n\
                     contact_freq = {cf}\ncontact_freq_std = {cf_s}\n\
                     info_error = {ie}\ninfo_error_std = {ie_s}\n\n"
                ));
                println!(
                    "{v}: throughput/slot {tp:.3} ± {tp_s:.3}, delay {dl:.2} ± {dl_s:.2}, \
                     contacts/UAV/slot {cf:.4}, info error {ie:.3}"
                );
            }
            write_to(&run.join("summary.toml"), &doc)?;
            Ok(())
        }
        Command::SweepOmega2 { config, grid, seeds, episodes, eval_episodes, out } => {
            let cfg_text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = WorldConfig::from_toml_str(&cfg_text)?;
            let grid = parse_grid(&grid)?;
            let seeds = parse_seeds(&seeds)?;
            std::fs::create_dir_all(&out)?;
            write_to(&out.join("config.toml"), &cfg_text)?;
            let rows = sweep_omega2(&cfg, &grid, &seeds, episodes, eval_episodes, worker_count())?;
            write_to(&out.join("sweep.csv"), &write_sweep_table(&rows))?;
            for r in &rows {
                println!(
                    "omega2 {:.4}: U2B freq {:.4}, throughput/slot {:.3}, delay {:.2}",
                    r.omega2, r.u2b_freq, r.throughput_per_slot, r.mean_delay
                );
            }
            Ok(())
        }
        Command::Plot { run, figure, out } => {
            let figure: Figure = figure.parse()?;
            let out_dir = out.unwrap_or_else(|| run.join("plots"));
            match figure {
                Figure::Sweep => {
                    let rows = parse_sweep_table(&read_from(&run.join("sweep.csv"))?)?;
                    let (svg, sidecar) = sweep_figure(&rows)?;
                    save_figure(&out_dir, "sweep", &svg, &sidecar)?;
                    println!("{}", out_dir.join("sweep.svg").display());
                }
                Figure::Trajectories => {
                    let meta = read_run_meta(&run)?;
                    let mut all = Vec::new();
                    for v in &meta.variants {
                        let variant: Variant = v.parse().map_err(|e| anyhow!("{e}"))?;
                        for &s in &meta.seeds {
                            let p = leg_dir(&run, variant, s).join("trajectory.csv");
                            if p.exists() {
                                let rows = parse_trajectory_csv(&read_from(&p)?)?;
                                let (svg, sidecar) = trajectory_figure(&rows)?;
                                let name = format!("trajectories_{}_seed{}", v, s);
                                save_figure(&out_dir, &name, &svg, &sidecar)?;
                                all.push(name);
                            }
                        }
                    }
                    if all.is_empty() {
                        bail!("no trajectory.csv found; run `uavsim eval` first");
                    }
                    for n in all {
                        println!("{}", out_dir.join(format!("{n}.svg")).display());
                    }
                }
                _ => {
                    let meta = read_run_meta(&run)?;
                    let mut rows: Vec<EpisodeRow> = Vec::new();
                    for v in &meta.variants {
                        let variant: Variant = v.parse().map_err(|e| anyhow!("{e}"))?;
                        for &s in &meta.seeds {
                            let p = leg_dir(&run, variant, s).join("episodes.csv");
                            rows.extend(parse_episode_table(&read_from(&p)?)?);
                        }
                    }
                    let (svg, sidecar) = episode_figure(figure, &rows)?;
                    let name = match figure {
                        Figure::Throughput => "throughput",
                        Figure::Delay => "delay",
                        Figure::DelayVariance => "delay_variance",
                        Figure::ContactFreq => "contact_freq",
                        Figure::InfoError => "info_error",
                        _ => unreachable!(),
                    };
                    save_figure(&out_dir, name, &svg, &sidecar)?;
                    println!("{}", out_dir.join(format!("{name}.svg")).display());
                }
            }
            Ok(())
        }
        Command::OracleCheck { config, instances, tuples, seed } => {
            let mut cfg = WorldConfig::load(&config)?;
            // enumeration-sized instance
            cfg.world.n_uavs = 2;
            cfg.world.n_gus = 3;
            let mut mismatches = 0u64;
            let mut value_violations = 0u64;
            for inst in 0..instances {
                let state = random_oracle_state(&cfg, seed, inst);
                let all = enumerate_all_raw(&state, &cfg)?;
                for t in &all {
                    let of = oracle_feasible(&state, t, &cfg)?;
                    let va = validator_accepts(&state, t, &cfg)?;
                    if of != va {
                        mismatches += 1;
                    }
                }
                let outcome = oracle_one_step(&state, &cfg)?;
                let feasible = enumerate_feasible(&state, &cfg)?;
                let mut rng = stream(seed, StreamKind::Sampling, [inst, 7, 0, 0]);
                for _ in 0..tuples {
                    let t = &feasible[rng.gen_range(0..feasible.len())];
                    let r = evaluate_tuple(&state, t, &cfg)?;
                    if r > outcome.best_reward + 1e-9 {
                        value_violations += 1;
                    }
                }
            }
            println!(
                "oracle-check: {instances} instances, {mismatches} feasibility mismatches, \
                 {value_violations} value violations"
            );
            if mismatches > 0 || value_violations > 0 {
                bail!("oracle consistency check failed");
            }
            Ok(())
        }
    }
}

/// Random small state for oracle checks.
pub fn random_oracle_state(cfg: &WorldConfig, seed: u64, instance: u64) -> OracleState {
    let mut rng = stream(seed, StreamKind::Layout, [instance, 1, 0, 0]);
    let w = cfg.world.area_half_width;
    let h = cfg.world.altitude;
    OracleState {
        uav_positions: (0..cfg.world.n_uavs)
            .map(|_| [rng.gen_range(-w..w), rng.gen_range(-w..w), h])
            .collect(),
        uav_buffers: (0..cfg.world.n_uavs).map(|_| rng.gen_range(0.0..10.0)).collect(),
        gu_positions: (0..cfg.world.n_gus)
            .map(|_| [rng.gen_range(-w..w), rng.gen_range(-w..w), 0.0])
            .collect(),
        gu_batteries: (0..cfg.world.n_gus)
            .map(|_| rng.gen_range(0.0..cfg.power.e_max))
            .collect(),
        gu_buffers: (0..cfg.world.n_gus).map(|_| rng.gen_range(0.0..8.0)).collect(),
    }
}

/// Every structurally well-formed tuple, feasible or not.
fn enumerate_all_raw(
    state: &OracleState,
    _cfg: &WorldConfig,
) -> Result<Vec<CandidateTuple>> {
    use uavsim_core::linkplan::{Association, Formation};
    let n_uavs = state.uav_positions.len();
    let n_gus = state.gu_positions.len();
    if n_uavs > 3 || n_gus > 4 {
        bail!("instance too large");
    }
    let mut out = Vec::new();
    let beam_base = uavsim_core::marl::BEAM_CODEBOOK;
    let beam_combos = beam_base.pow(n_uavs as u32);
    let assoc_combos = (n_uavs + 1).pow(n_gus as u32);
    // formation options per UAV: no link, the BS, or any UAV column
    let form_base = n_uavs + 2;
    let form_combos = form_base.pow(n_uavs as u32);
    for b in 0..beam_combos {
        let beams: Vec<usize> = (0..n_uavs)
            .map(|i| (b / beam_base.pow(i as u32)) % beam_base)
            .collect();
        for a in 0..assoc_combos {
            let mut pairs = Vec::new();
            for m in 0..n_gus {
                let pick = (a / (n_uavs + 1).pow(m as u32)) % (n_uavs + 1);
                if pick > 0 {
                    pairs.push((m, pick - 1));
                }
            }
            let assoc = Association::from_pairs(n_gus, n_uavs, &pairs)?;
            for f in 0..form_combos {
                let mut formation = Formation::new(n_uavs);
                let mut valid = true;
                for n in 0..n_uavs {
                    let pick = (f / form_base.pow(n as u32)) % form_base;
                    if pick > 0 {
                        let col = pick - 1;
                        if col == n + 1 {
                            valid = false;
                            break;
                        }
                        formation.set_target(n, Some(col));
                    }
                }
                if !valid {
                    continue;
                }
                out.push(CandidateTuple { beams: beams.clone(), assoc: assoc.clone(), formation });
            }
        }
    }
    Ok(out)
}
