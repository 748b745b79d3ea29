//! Command-line driver binding the library into reproducible experiments.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 a built-in
//! numerical target was missed (artifacts are still written).

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use sinai_lab::cli::{default_out_root, parse_count, parse_grid, parse_list, persist_run};
use sinai_lab::confinement::{BlockGeom, BlockKind, ConfineEvent};
use sinai_lab::env::EnvDistribution;
use sinai_lab::occupation::StepSpec;
use sinai_lab::report::RunResult;
use sinai_lab::rng::SeedTree;
use sinai_lab::vessel::VesselSpec;
use sinai_lab::walk::WeightFn;
use sinai_lab::{PI2_OVER_2, PI2_OVER_8};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "sinai", version, about = "well-process and confinement experiments")]
struct Cli {
    /// Master seed; with the config it determines every output byte.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Output directory (defaults to $SINAI_LAB_DIR/<verb>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (results are identical for any value).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Sample a two-sided Brownian grid environment.
    Env {
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1000)]
        left: usize,
        #[arg(long, default_value_t = 1000)]
        right: usize,
        /// json | csv | bin
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Well-process oracle cross-check over random environments.
    Wells {
        #[arg(long, default_value = "200")]
        paths: String,
        #[arg(long, default_value_t = 500)]
        cells: usize,
        #[arg(long, default_value = "50")]
        depths: String,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
    },
    /// Monte Carlo check of the environment jump probability formula.
    Jumpprob {
        #[arg(long, default_value = "1e4")]
        envs: String,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
    },
    /// Rate functional of a step spec, via both computation routes.
    Rate {
        /// comma-separated jump depths
        #[arg(long)]
        h: String,
        /// comma-separated jump locations
        #[arg(long)]
        x: String,
    },
    /// Confinement decay-rate fits (events a, b, c, or the c/b ratio).
    Confine {
        /// a | b | c | ratio
        #[arg(long)]
        event: String,
        #[arg(long, default_value = "1:4:0.5")]
        t_grid: String,
        #[arg(long, default_value = "1e5")]
        samples: String,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
    },
    /// Block-cost decay fits against the closed forms.
    Blocks {
        /// confine | hole | holer | barrier | gamma
        #[arg(long, default_value = "confine")]
        kind: String,
        #[arg(long, default_value = "2:6:1")]
        m_grid: String,
        #[arg(long, default_value = "2e4")]
        samples: String,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
    },
    /// Vessel sets: membership of witnesses, or the decay of the full event.
    Vessel {
        /// check | witness | mc
        #[arg(long, default_value = "witness")]
        action: String,
        #[arg(long, default_value = "1")]
        h: String,
        #[arg(long, default_value = "0.3")]
        x: String,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value = "1:3:1")]
        m_grid: String,
        #[arg(long, default_value = "1e5")]
        samples: String,
        #[arg(long, default_value_t = 2e-4)]
        dt: f64,
    },
    /// Walk in a sampled potential: trajectory data or localization stats.
    Walk {
        /// run | localize
        #[arg(long, default_value = "run")]
        action: String,
        #[arg(long, default_value = "1e6")]
        n: String,
        #[arg(long, default_value = "20")]
        envs: String,
        /// two-point | trunc-gauss
        #[arg(long, default_value = "two-point")]
        dist: String,
    },
    /// The variational problem behind weighted exponential-time integrals.
    Corollary {
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
    },
    /// Escape decay from the tightness set.
    Tightness {
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value = "2:5:1")]
        m_grid: String,
        #[arg(long, default_value = "1e4")]
        particles: String,
        #[arg(long, default_value_t = 5e-4)]
        dt: f64,
    },
    /// Merge result tables from previous runs.
    Report { dirs: Vec<PathBuf> },
}

fn main() {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().ok();
    }
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let seeds = SeedTree::new(cli.seed);
    let verb_name = verb_name(&cli.verb);
    let out = cli.out.clone().unwrap_or_else(|| default_out_root().join(verb_name));

    let (config, artifacts, results) = dispatch(&cli, &seeds)?;

    let mut artifacts = artifacts;
    artifacts.push((
        "result.json".into(),
        serde_json::to_vec_pretty(&results).expect("serializable"),
    ));
    persist_run(&out, verb_name, &config, cli.seed, &artifacts)?;

    println!("{}", sinai_lab::report::render_table(&results));
    println!("artifacts in {}", out.display());
    let failed = results.iter().any(|r| r.pass == Some(false));
    Ok(if failed { 3 } else { 0 })
}

fn verb_name(v: &Verb) -> &'static str {
    match v {
        Verb::Env { .. } => "env",
        Verb::Wells { .. } => "wells",
        Verb::Jumpprob { .. } => "jumpprob",
        Verb::Rate { .. } => "rate",
        Verb::Confine { .. } => "confine",
        Verb::Blocks { .. } => "blocks",
        Verb::Vessel { .. } => "vessel",
        Verb::Walk { .. } => "walk",
        Verb::Corollary { .. } => "corollary",
        Verb::Tightness { .. } => "tightness",
        Verb::Report { .. } => "report",
    }
}

type VerbOutput = (serde_json::Value, Vec<(String, Vec<u8>)>, Vec<RunResult>);

fn dispatch(cli: &Cli, seeds: &SeedTree) -> Result<VerbOutput> {
    match &cli.verb {
        Verb::Env { dt, left, right, format } => {
            let path = sinai_lab::env::sample_brownian(*dt, *left, *right, seeds, "cli-env", 0)?;
            let config = json!({"dt": dt, "left": left, "right": right, "format": format});
            let mut artifacts = Vec::new();
            match format.as_str() {
                "csv" => {
                    let mut buf = Vec::new();
                    path.write_csv(&mut buf)?;
                    artifacts.push(("path.csv".into(), buf));
                }
                "bin" => {
                    let mut buf = Vec::new();
                    path.write_binary(&mut buf)?;
                    artifacts.push(("path.bin".into(), buf));
                }
                "json" => {
                    artifacts.push((
                        "path.json".into(),
                        serde_json::to_vec_pretty(&json!({
                            "dt": dt, "left_n": left, "right_n": right,
                            "values": path.values(),
                        }))?,
                    ));
                }
                other => return Err(anyhow!("unknown format {other}")),
            }
            let wp = sinai_lab::wells::well_process(&path);
            artifacts.push(("well_process.csv".into(), wp.to_csv().into_bytes()));
            artifacts.push(("well_process.json".into(), serde_json::to_vec_pretty(&wp)?));
            let rows = vec![RunResult::informational("env", "max resolvable depth", wp.max_depth)];
            Ok((config, artifacts, rows))
        }

        Verb::Wells { paths, cells, depths, dt } => {
            let n_paths = parse_count(paths)?;
            let n_depths = parse_count(depths)?;
            let config = json!({"paths": n_paths, "cells": cells, "depths": n_depths, "dt": dt});
            let mut mismatches = 0u64;
            let mut total = 0u64;
            use rand::Rng;
            let mut rng = seeds.stream("wells-depths", 0);
            for i in 0..n_paths {
                let p = sinai_lab::env::sample_brownian(*dt, *cells, *cells, seeds, "wells-oracle", i)?;
                let wp = sinai_lab::wells::well_process(&p);
                let zw = sinai_lab::wells::zero_wells_bruteforce(&p);
                for _ in 0..n_depths {
                    let h: f64 = rng.gen_range(0.005..wp.max_depth.max(0.01) * 1.2);
                    total += 1;
                    if wp.eval(h) != sinai_lab::wells::bruteforce_eval(&zw, h) {
                        mismatches += 1;
                    }
                }
            }
            let rows = vec![RunResult {
                verb: "wells".into(),
                criterion: Some("wells-oracle".into()),
                name: format!("mismatches out of {total}"),
                measured: mismatches as f64,
                target: Some(0.0),
                tolerance: Some(0.0),
                pass: Some(mismatches == 0),
            }];
            Ok((config, Vec::new(), rows))
        }

        Verb::Jumpprob { envs, dt } => {
            let n = parse_count(envs)?;
            let config = json!({"envs": n, "dt": dt});
            let est = sinai_lab::wells::mc_jump_prob(1.0, 2.0, n, *dt, seeds, "cli-jumpprob")?;
            let exact = sinai_lab::wells::jump_prob_exact(2.0)?;
            let dev_se = (est.estimate - exact).abs() / est.std_error;
            let rows = vec![
                RunResult {
                    verb: "jumpprob".into(),
                    criterion: Some("jumpprob-2".into()),
                    name: "|estimate - exact| in SE units".into(),
                    measured: dev_se,
                    target: Some(0.0),
                    tolerance: Some(3.0),
                    pass: Some(dev_se <= 3.0),
                },
                RunResult::informational("jumpprob", "estimate", est.estimate),
                RunResult::informational("jumpprob", "exact", exact),
            ];
            let artifacts = vec![("estimate.json".into(), serde_json::to_vec_pretty(&est)?)];
            Ok((config, artifacts, rows))
        }

        Verb::Rate { h, x } => {
            let spec = StepSpec::new(parse_list(h)?, parse_list(x)?)
                .map_err(|e| anyhow!("invalid spec: {e}"))?;
            let config = json!({"h": h, "x": x});
            let direct = sinai_lab::rate::rate_of_spec(&spec);
            let mu = sinai_lab::occupation::occupation_unbounded(&spec.step_function());
            let via_env = sinai_lab::rate::rate_of_measure(&mu).map_err(|e| anyhow!("{e}"))?;
            let gap = (direct.value - via_env.value).abs();
            let rows = vec![
                RunResult::informational("rate", "rate value", direct.value),
                RunResult {
                    verb: "rate".into(),
                    criterion: Some("rate-dual-path".into()),
                    name: "|spec route - envelope route|".into(),
                    measured: gap,
                    target: Some(0.0),
                    tolerance: Some(1e-9),
                    pass: Some(gap <= 1e-9),
                },
                RunResult::informational(
                    "rate",
                    "in unit sublevel set",
                    sinai_lab::rate::in_k(&direct) as u8 as f64,
                ),
            ];
            let artifacts = vec![("rate.json".into(), direct.to_json().into_bytes())];
            Ok((config, artifacts, rows))
        }

        Verb::Confine { event, t_grid, samples, dt, eps, k } => {
            let grid = parse_grid(t_grid)?;
            let n = parse_count(samples)? as usize;
            let config = json!({"event": event, "t_grid": t_grid, "samples": n, "dt": dt, "eps": eps, "k": k});
            let (fit, criterion, target, tol) = match event.as_str() {
                "a" => (
                    sinai_lab::confinement::mc_rate(
                        ConfineEvent::Interval { h: 1.0, eps: *eps, z0: 0.5 },
                        &grid,
                        n,
                        *dt,
                        seeds,
                        "cli-confine-a",
                    )?,
                    "confine-a-slope",
                    -PI2_OVER_2,
                    0.02,
                ),
                "b" => (
                    sinai_lab::confinement::mc_rate(
                        ConfineEvent::Reflected { eps: *eps, w0: 0.0 },
                        &grid,
                        n,
                        *dt,
                        seeds,
                        "cli-confine-b",
                    )?,
                    "confine-b-slope",
                    -PI2_OVER_8,
                    0.05,
                ),
                "c" | "ratio" => (
                    sinai_lab::confinement::mc_floor_ratio(*k, *eps, &grid, n, *dt, seeds, "cli-ratio")?,
                    "floor-ratio-slope",
                    -3.0 * PI2_OVER_8,
                    0.20,
                ),
                other => return Err(anyhow!("unknown event {other} (use a | b | c | ratio)")),
            };
            let rows = vec![RunResult::judged("confine", criterion, "fitted slope", fit.slope, target, tol)];
            let artifacts = vec![("ratefit.json".into(), fit.to_json().into_bytes())];
            Ok((config, artifacts, rows))
        }

        Verb::Blocks { kind, m_grid, samples, dt } => {
            let grid = parse_grid(m_grid)?;
            let n = parse_count(samples)? as usize;
            let (bk, geom, tol, cid) = match kind.as_str() {
                "confine" => (
                    BlockKind::Confine,
                    BlockGeom { x: 0.0, y: 1.0, h: 1.0, h2: 1.0, eps: 0.1, delta: 0.05, z0: 0.45, z1: 0.0, z2: 0.0 },
                    0.10,
                    "block-confine-slope",
                ),
                "gamma" => (
                    BlockKind::Gamma,
                    BlockGeom { x: 0.3, y: 1.0, h: 1.0, h2: 1.5, eps: 0.1, delta: 0.05, z0: 0.0, z1: 0.3, z2: 0.3 },
                    0.15,
                    "block-gamma-slope",
                ),
                "hole" => (
                    BlockKind::Hole,
                    BlockGeom { x: 0.0, y: 1.0, h: 1.0, h2: 1.0, eps: 0.1, delta: 0.3, z0: 0.45, z1: 0.0, z2: 0.0 },
                    0.15,
                    "block-hole-slope",
                ),
                "holer" => (
                    BlockKind::HoleReflected,
                    BlockGeom { x: 0.0, y: 1.0, h: 1.0, h2: 1.0, eps: 0.1, delta: 0.3, z0: 0.4, z1: 0.4, z2: 0.0 },
                    0.15,
                    "block-holer-slope",
                ),
                "barrier" => (
                    BlockKind::Barrier,
                    BlockGeom { x: 0.0, y: 1.0, h: 1.0, h2: 1.0, eps: 0.1, delta: 0.3, z0: 0.45, z1: 0.0, z2: 0.0 },
                    0.15,
                    "block-barrier-slope",
                ),
                other => return Err(anyhow!("unknown block kind {other}")),
            };
            let config = json!({"kind": kind, "m_grid": m_grid, "samples": n, "dt": dt});
            let target = sinai_lab::confinement::block_target(bk, &geom);
            let fit = sinai_lab::confinement::mc_block_cost(bk, &geom, &grid, n, *dt, seeds, "cli-blocks")?;
            let rows = vec![RunResult::judged("blocks", cid, "fitted slope", fit.slope, target, tol)];
            let artifacts = vec![("ratefit.json".into(), fit.to_json().into_bytes())];
            Ok((config, artifacts, rows))
        }

        Verb::Vessel { action, h, x, delta, eps, m_grid, samples, dt } => {
            let spec = StepSpec::new(parse_list(h)?, parse_list(x)?)
                .map_err(|e| anyhow!("invalid spec: {e}"))?;
            let vs = VesselSpec::new(spec, *delta, *eps).map_err(|e| anyhow!("{e}"))?;
            let config = json!({"action": action, "h": h, "x": x, "delta": delta, "eps": eps,
                                "m_grid": m_grid, "samples": samples, "dt": dt});
            let mut artifacts = vec![("vessel_spec.json".into(), serde_json::to_vec_pretty(&vs)?)];
            let rows = match action.as_str() {
                "witness" | "check" => {
                    let path = sinai_lab::vessel::construct_witness(&vs).map_err(|e| anyhow!("{e}"))?;
                    let rep = sinai_lab::vessel::vessel_membership(&path, &vs).map_err(|e| anyhow!("{e}"))?;
                    let sk = sinai_lab::vessel::skorokhod_closeness(&path, &vs);
                    artifacts.push(("membership.json".into(), serde_json::to_vec_pretty(&rep)?));
                    artifacts.push(("closeness.json".into(), serde_json::to_vec_pretty(&sk)?));
                    vec![
                        RunResult {
                            verb: "vessel".into(),
                            criterion: Some("vessel-witness".into()),
                            name: "witness membership".into(),
                            measured: rep.ok as u8 as f64,
                            target: Some(1.0),
                            tolerance: Some(0.0),
                            pass: Some(rep.ok),
                        },
                        RunResult::informational("vessel", "closeness distance", sk.distance),
                        RunResult::informational("vessel", "closeness bound", sk.bound),
                    ]
                }
                "mc" => {
                    let grid = parse_grid(m_grid)?;
                    let n = parse_count(samples)?;
                    let fit = sinai_lab::vessel::mc_vessel_prob(&vs, &grid, n, *dt, seeds, "cli-vessel")
                        .map_err(|e| anyhow!("{e}"))?;
                    let expansion = vs.rate_expansion();
                    let i_spec = sinai_lab::rate::rate_of_spec(&vs.spec).value;
                    artifacts.push(("ratefit.json".into(), fit.to_json().into_bytes()));
                    vec![
                        RunResult::judged(
                            "vessel",
                            "vessel-mc-slope",
                            "slope vs finite-smallness rate",
                            fit.slope,
                            -expansion,
                            0.35,
                        ),
                        RunResult::informational("vessel", "spec rate", i_spec),
                    ]
                }
                other => return Err(anyhow!("unknown vessel action {other}")),
            };
            Ok((config, artifacts, rows))
        }

        Verb::Walk { action, n, envs, dist } => {
            let n_max = parse_count(n)?;
            let n_envs = parse_count(envs)?;
            let d = EnvDistribution::parse(dist).ok_or_else(|| anyhow!("unknown distribution {dist}"))?;
            let config = json!({"action": action, "n": n_max, "envs": n_envs, "dist": dist});
            let width = 4.0 * (n_max as f64).ln().powi(2);
            match action.as_str() {
                "run" => {
                    let pot = sinai_lab::env::sample_env(d, width as usize, seeds, "cli-walk-env", 0)?;
                    let sched = sinai_lab::walk::geometric_schedule(n_max, 0.01);
                    let traj = sinai_lab::walk::simulate_walk(&pot, n_max, &sched, seeds, "cli-walk", 0)
                        .map_err(|e| anyhow!("{e}"))?;
                    let artifacts = vec![("trajectory.csv".into(), traj.to_csv().into_bytes())];
                    let rows =
                        vec![RunResult::informational("walk", "final |position|", traj.checkpoints.last().unwrap().1.abs() as f64)];
                    Ok((config, artifacts, rows))
                }
                "localize" => {
                    let mut devs = Vec::new();
                    for e in 0..n_envs {
                        let pot = sinai_lab::env::sample_env(d, width as usize, seeds, "cli-loc-env", e)?;
                        let traj =
                            sinai_lab::walk::simulate_walk(&pot, n_max, &[n_max], seeds, "cli-loc-walk", e)
                                .map_err(|err| anyhow!("{err}"))?;
                        let dev = sinai_lab::walk::localization_deviation(
                            &pot, &traj, n_max, d, seeds, "cli-loc-env", e,
                        )
                        .map_err(|err| anyhow!("{err}"))?;
                        devs.push(dev / (n_max as f64).ln().powi(2));
                    }
                    let med = sinai_lab::stats::median(&devs);
                    let rows = vec![RunResult {
                        verb: "walk".into(),
                        criterion: Some("walk-localization".into()),
                        name: "median deviation / log(n)^2".into(),
                        measured: med,
                        target: Some(0.0),
                        tolerance: Some(0.5),
                        pass: Some(med <= 0.5),
                    }];
                    let artifacts =
                        vec![("deviations.json".into(), serde_json::to_vec_pretty(&devs)?)];
                    Ok((config, artifacts, rows))
                }
                other => Err(anyhow!("unknown walk action {other}")),
            }
        }

        Verb::Corollary { r, grid } => {
            let config = json!({"r": r, "grid": grid});
            let res = sinai_lab::walk::variational_sup(&WeightFn::Power(*r), *grid)
                .map_err(|e| anyhow!("{e}"))?;
            let target = 4.0 / std::f64::consts::PI.powi(2) * (2.0 / (r + 3.0)).powf((r + 3.0) / (r + 1.0));
            let mut rows = vec![
                RunResult::judged("corollary", "corollary-value", "grid LP value", res.lp_value, target, 1e-5),
                RunResult::informational("corollary", "greedy value", res.greedy_value),
            ];
            if let Some(s0) = res.s0 {
                rows.push(RunResult::informational("corollary", "s0", s0));
            }
            let artifacts = vec![("variational.json".into(), serde_json::to_vec_pretty(&res)?)];
            Ok((config, artifacts, rows))
        }

        Verb::Tightness { a, m_grid, particles, dt } => {
            let grid = parse_grid(m_grid)?;
            let n = parse_count(particles)? as usize;
            let config = json!({"a": a, "m_grid": m_grid, "particles": n, "dt": dt});
            let mut pts = Vec::new();
            for (i, &m) in grid.iter().enumerate() {
                let est = sinai_lab::occupation::mc_tightness_exceedance(
                    *a,
                    m,
                    n,
                    *dt,
                    seeds,
                    &format!("cli-tight/m{i}"),
                )
                .map_err(|e| anyhow!("{e}"))?;
                pts.push((m, est));
            }
            let fit = sinai_lab::stats::fit_log_decay(&pts, false, "tightness escape decay")
                .map_err(|e| anyhow!(e))?;
            let target = -a * PI2_OVER_8;
            let rows = vec![RunResult::judged(
                "tightness",
                "tightness-slope-a2",
                "fitted slope",
                fit.slope,
                target,
                0.20,
            )];
            let artifacts = vec![("ratefit.json".into(), fit.to_json().into_bytes())];
            Ok((config, artifacts, rows))
        }

        Verb::Report { dirs } => {
            let rows = sinai_lab::report::aggregate(dirs);
            let config = json!({"dirs": dirs.iter().map(|d| d.display().to_string()).collect::<Vec<_>>()});
            let artifacts = vec![(
                "aggregate.json".into(),
                serde_json::to_vec_pretty(&rows).context("serialize")?,
            )];
            Ok((config, artifacts, rows))
        }
    }
}
