//! `clesim`: reproducible experiment driver for the loop-soup / CLE
//! simulation kernels. Exit codes: 0 success, 1 error, 2 statistical
//! rejection (so CI can tell "broken" from "hypothesis rejected").

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use cle_cli::experiments::{
    collect_cle_bank, collect_qk_bank, collect_window_stats, minkowski_experiment, run_couplings,
    survival_of_n0, WindowMode,
};
use cle_cli::io::{self, ConfigFile, LoopMeta, Manifest};
use cle_cli::render::render_svg;
use cle_core::cle::{
    calibrate_gap, sample_cle, sample_fullplane_window, sample_nested_cle, CleConfig,
};
use cle_core::clusters::{build_clusters, cluster_boundaries, coarse_surround_test};
use cle_core::conformal::WalkParams;
use cle_core::geom::{pt, Loop, Point};
use cle_core::loopsoup::{sample_loop_soup, sample_sle83_soup, Domain, SoupConfig};
use cle_core::rng;
use cle_core::sle::{
    chordal_sle, disconnection_fraction, radial_theta, side_probability,
};
use cle_core::stats::{
    ks_test, overshoot_experiment, test_intensity_equality, test_proportionality,
    test_window_ensembles, BoundaryKind, WindowSpec,
};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "clesim", about = "Loop-soup and conformal loop ensemble experiments")]
struct Cli {
    /// master seed for all substreams
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (default: CLESIM_WORKERS or all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// plain-text config file (command line overrides it)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Brownian or boundary loop soup
    Soup(SoupArgs),
    /// Cluster a loop file and extract boundaries
    Clusters(ClustersArgs),
    /// Conformal loop ensembles
    #[command(subcommand)]
    Cle(CleCmd),
    /// Chordal SLE experiments
    #[command(subcommand)]
    Sle(SleCmd),
    /// Statistical hypothesis tests
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Render a loop file to SVG
    Render(RenderArgs),
}

#[derive(Args)]
struct SoupArgs {
    #[arg(long)]
    c: Option<f64>,
    /// set the intensity through kappa instead of c
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    tmin: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    domain_radius: f64,
    /// per-loop boundary raster ratio (h = diameter x ratio)
    #[arg(long)]
    raster_h: Option<f64>,
    /// keep outer boundaries instead of the Brownian loops
    #[arg(long)]
    sle: bool,
}

#[derive(Args)]
struct ClustersArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    touch_tol: f64,
    /// basepoint "x,y" for inner boundaries
    #[arg(long, default_value = "0,0")]
    basepoint: String,
    #[arg(long, default_value_t = 512.0)]
    raster_div: f64,
}

#[derive(Subcommand)]
enum CleCmd {
    /// One non-nested CLE sample
    Sample(CleArgs),
    /// Nested CLE down to a diameter cutoff
    Nested(CleNestedArgs),
    /// Full-plane window construction
    Fullplane(CleFullplaneArgs),
    /// Couple the nested CLEs of a disc and a square
    Couple(CleCoupleArgs),
}

#[derive(Args)]
struct CleArgs {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    domain_radius: f64,
    #[arg(long, default_value_t = 40.0)]
    q: f64,
}

#[derive(Args)]
struct CleNestedArgs {
    #[command(flatten)]
    base: CleArgs,
    #[arg(long, default_value_t = 0.15)]
    min_diam: f64,
}

#[derive(Args)]
struct CleFullplaneArgs {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 32.0)]
    big_r: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 0.05)]
    min_diam: f64,
    #[arg(long, default_value_t = 40.0)]
    q: f64,
}

#[derive(Args)]
struct CleCoupleArgs {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// rho gap M; calibrated from a pilot chain when omitted
    #[arg(long)]
    m_gap: Option<f64>,
    #[arg(long, default_value_t = 40)]
    retries: usize,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 40.0)]
    q: f64,
}

#[derive(Subcommand)]
enum SleCmd {
    /// Sample a chordal trace
    Trace(SleTraceArgs),
    /// Radial angle diffusion lifetimes
    Theta(SleThetaArgs),
    /// Conditioned side probability
    Side(SleSideArgs),
    /// Weighted neighborhood volumes over traces
    Minkowski(SleMinkArgs),
    /// Disconnection-time fractions over a marked-scale grid
    Disconnect(SleDiscArgs),
}

#[derive(Args)]
struct SleTraceArgs {
    #[arg(long, default_value_t = 3.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
}

#[derive(Args)]
struct SleThetaArgs {
    #[arg(long, default_value_t = 4.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    theta0: f64,
    #[arg(long, default_value_t = 1e-4)]
    du: f64,
    #[arg(long, default_value_t = 200)]
    n: usize,
}

#[derive(Args)]
struct SleSideArgs {
    #[arg(long, default_value_t = 3.0)]
    kappa: f64,
    /// marked point "x,y"
    #[arg(long, default_value = "0,1")]
    z0: String,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 4000)]
    n: usize,
    #[arg(long, default_value_t = 1.2)]
    t: f64,
    #[arg(long, default_value_t = 2e-4)]
    dt: f64,
}

#[derive(Args)]
struct SleMinkArgs {
    #[arg(long, default_value_t = 4.0)]
    kappa: f64,
    /// comma-separated epsilon list
    #[arg(long, default_value = "0.64,0.32,0.16,0.08")]
    eps_list: String,
    #[arg(long, default_value_t = 60)]
    traces: usize,
    #[arg(long, default_value_t = 2.2)]
    t: f64,
    #[arg(long, default_value_t = 6.4e-5)]
    dt: f64,
}

#[derive(Args)]
struct SleDiscArgs {
    #[arg(long, default_value_t = 4.0)]
    kappa: f64,
    #[arg(long, default_value = "0.15,0.1,0.05")]
    a_list: String,
    #[arg(long, default_value_t = 40000)]
    n: usize,
    #[arg(long, default_value_t = 2e-4)]
    du: f64,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Inner vs outer cluster boundary intensities
    NuTest(NuTestArgs),
    /// Full-plane inversion invariance
    Inversion(InversionArgs),
    /// Outer-boundary vs CLE intensity proportionality
    Proportionality(ProportionalityArgs),
    /// Renewal overshoot tails
    Overshoot(OvershootArgs),
    /// Small-loop shapes against the stationary law
    SmallShapes(SmallShapesArgs),
}

#[derive(Args)]
struct NuTestArgs {
    /// minimum harvested loops per side
    #[arg(long, default_value_t = 250)]
    n: usize,
    /// rho window "lo,hi"
    #[arg(long, default_value = "-2,-1")]
    window: String,
    #[arg(long, default_value_t = 40.0)]
    q: f64,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 4000)]
    max_chains: usize,
}

#[derive(Args)]
struct InversionArgs {
    #[arg(long, default_value_t = 150)]
    n: usize,
    #[arg(long, default_value_t = 64.0)]
    r_over_r: f64,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 40.0)]
    q: f64,
}

#[derive(Args)]
struct ProportionalityArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// two windows "lo1,hi1,lo2,hi2"
    #[arg(long, default_value = "-2,-1,-4,-3")]
    windows: String,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 40.0)]
    q: f64,
    #[arg(long, default_value_t = 3000)]
    max_chains: usize,
}

#[derive(Args)]
struct OvershootArgs {
    #[arg(long, default_value_t = 20000)]
    n: usize,
    #[arg(long, default_value = "0.5,1,2")]
    m_list: String,
    #[arg(long, default_value_t = 5.0)]
    y: f64,
}

#[derive(Args)]
struct SmallShapesArgs {
    #[arg(long, default_value = "0.9,0.6,0.4")]
    eps_list: String,
    #[arg(long, default_value_t = 150)]
    n: usize,
    #[arg(long, default_value_t = 40.0)]
    q: f64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.004)]
    stroke: f64,
}

fn parse_point(s: &str) -> Result<Point> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| anyhow!("expected x,y"))?;
    Ok(pt(x.trim().parse()?, y.trim().parse()?))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("{e}")))
        .collect()
}

fn cle_config(c: f64, q: f64) -> CleConfig {
    CleConfig {
        c,
        cutoff_q: q,
        ..CleConfig::default()
    }
}

/// 0 = pass, 2 = statistical rejection.
enum Outcome {
    Done,
    Rejected,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Rejected) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = cli
        .seed
        .or_else(|| config.get("seed").and_then(|s| s.parse().ok()))
        .unwrap_or(1);
    let workers = cli
        .workers
        .or_else(|| config.get("workers").and_then(|s| s.parse().ok()))
        .or_else(|| {
            std::env::var("CLESIM_WORKERS")
                .ok()
                .and_then(|s| s.parse().ok())
        });
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .ok();
    }
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("create {}", cli.out_dir.display()))?;
    let out_dir = cli.out_dir.clone();

    match cli.command {
        Command::Soup(args) => cmd_soup(args, &config, seed, &out_dir),
        Command::Clusters(args) => cmd_clusters(args, seed, &out_dir),
        Command::Cle(cmd) => cmd_cle(cmd, seed, &out_dir),
        Command::Sle(cmd) => cmd_sle(cmd, seed, &out_dir),
        Command::Stats(cmd) => cmd_stats(cmd, seed, &out_dir),
        Command::Render(args) => cmd_render(args, &out_dir),
    }
}

fn cmd_soup(args: SoupArgs, config: &ConfigFile, seed: u64, out_dir: &Path) -> Result<Outcome> {
    let c = args
        .c
        .or_else(|| args.kappa.map(cle_core::loopsoup::c_of_kappa))
        .or_else(|| config.get("soup.c").and_then(|s| s.parse().ok()))
        .unwrap_or(1.0);
    let tmin = args
        .tmin
        .or_else(|| config.get("soup.tmin").and_then(|s| s.parse().ok()))
        .unwrap_or(0.01);
    let tmax = args
        .tmax
        .or_else(|| config.get("soup.tmax").and_then(|s| s.parse().ok()))
        .unwrap_or(1.0);
    let mut cfg = SoupConfig::new(c, Domain::disc(args.domain_radius), tmin, tmax, seed)
        .map_err(|e| anyhow!("{e}"))?;
    if let Some(r) = args.raster_h {
        cfg.raster_ratio = r;
    }
    let path = out_dir.join("soup.jsonl");
    let header = vec![
        ("c".to_string(), format!("{c}")),
        ("kappa".to_string(), format!("{}", cfg.kappa)),
        ("tmin".to_string(), format!("{tmin}")),
        ("tmax".to_string(), format!("{tmax}")),
        ("domain_radius".to_string(), format!("{}", args.domain_radius)),
        ("seed".to_string(), format!("{seed}")),
        ("kind".to_string(), if args.sle { "sle".into() } else { "brownian".into() }),
    ];
    let loops: Vec<Loop> = if args.sle {
        sample_sle83_soup(&cfg).map_err(|e| anyhow!("{e}"))?.loops
    } else {
        sample_loop_soup(&cfg).loops
    };
    let n = loops.len();
    io::write_loops(
        &path,
        &header,
        loops.into_iter().map(|l| (l, LoopMeta::default())),
    )?;
    let mut manifest = Manifest::new("soup");
    for (k, v) in &header {
        manifest.set(k, v);
    }
    manifest.add_output(&path);
    manifest.write(out_dir)?;
    println!("soup: {n} loops -> {}", path.display());
    Ok(Outcome::Done)
}

fn cmd_clusters(args: ClustersArgs, seed: u64, out_dir: &Path) -> Result<Outcome> {
    let (_, read) = io::read_loops(&args.input)?;
    let loops: Vec<Loop> = read.into_iter().map(|(l, _)| l).collect();
    let basepoint = parse_point(&args.basepoint)?;
    let soup_hash = io::file_sha256(&args.input)?;
    let clusters = build_clusters(&loops, args.touch_tol);
    let mut lines = Vec::new();
    for (id, c) in clusters.iter().enumerate() {
        let h = (c.bbox.diag() / args.raster_div).max(1e-12);
        let want_inner = c.bbox.contains(basepoint)
            && coarse_surround_test(c, &loops, basepoint, 96.0) != Some(false);
        let basepoints: Vec<Point> = if want_inner { vec![basepoint] } else { vec![] };
        let filled = cluster_boundaries(c, &loops, &basepoints, h).map_err(|e| anyhow!("{e}"))?;
        lines.push(io::cluster_to_line(id, &filled, &soup_hash));
    }
    let path = out_dir.join("clusters.jsonl");
    fs::write(&path, lines.join("\n") + "\n")?;
    let mut manifest = Manifest::new("clusters");
    manifest.set("input", args.input.display());
    manifest.set("touch_tol", args.touch_tol);
    manifest.set("seed", seed);
    manifest.add_output(&path);
    manifest.write(out_dir)?;
    println!("clusters: {} -> {}", lines.len(), path.display());
    Ok(Outcome::Done)
}

fn cmd_cle(cmd: CleCmd, seed: u64, out_dir: &Path) -> Result<Outcome> {
    match cmd {
        CleCmd::Sample(args) => {
            let cfg = cle_config(args.c, args.q);
            let loops = sample_cle(&Domain::disc(args.domain_radius), &cfg, seed)
                .map_err(|e| anyhow!("{e}"))?;
            let path = out_dir.join("cle.jsonl");
            let n = loops.len();
            io::write_loops(
                &path,
                &[("seed".into(), seed.to_string()), ("c".into(), args.c.to_string())],
                loops.into_iter().map(|l| {
                    (
                        l,
                        LoopMeta {
                            generation: 1,
                            parent: None,
                        },
                    )
                }),
            )?;
            let mut manifest = Manifest::new("cle sample");
            manifest.set("seed", seed);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
            println!("cle: {n} loops -> {}", path.display());
        }
        CleCmd::Nested(args) => {
            let cfg = cle_config(args.base.c, args.base.q);
            let nested = sample_nested_cle(
                &Domain::disc(args.base.domain_radius),
                &cfg,
                args.min_diam,
                seed,
            )
            .map_err(|e| anyhow!("{e}"))?;
            let path = out_dir.join("nested.jsonl");
            let n = nested.loops.len();
            io::write_loops(
                &path,
                &[("seed".into(), seed.to_string()), ("min_diam".into(), args.min_diam.to_string())],
                nested.loops.into_iter().map(|nl| {
                    (
                        nl.lp,
                        LoopMeta {
                            generation: nl.generation,
                            parent: nl.parent,
                        },
                    )
                }),
            )?;
            let mut manifest = Manifest::new("cle nested");
            manifest.set("seed", seed);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
            println!("nested cle: {n} loops -> {}", path.display());
        }
        CleCmd::Fullplane(args) => {
            let cfg = cle_config(args.c, args.q);
            let w = sample_fullplane_window(args.big_r, args.r, &cfg, args.min_diam, seed)
                .map_err(|e| anyhow!("{e}"))?;
            let loops_path = out_dir.join("window.jsonl");
            io::write_loops(
                &loops_path,
                &[
                    ("big_r".into(), args.big_r.to_string()),
                    ("r".into(), args.r.to_string()),
                    ("seed".into(), seed.to_string()),
                ],
                w.window_loops.iter().map(|nl| {
                    (
                        nl.lp.clone(),
                        LoopMeta {
                            generation: nl.generation,
                            parent: nl.parent,
                        },
                    )
                }),
            )?;
            // chain CSV with rho estimates
            let chain_path = out_dir.join("chain.csv");
            let mut csv = String::from("j,rho,xi\n");
            let walk = WalkParams::default();
            let mut prev: Option<f64> = None;
            for (j, lp) in w.chain.iter().enumerate() {
                let rho = cle_core::conformal::log_conformal_radius(
                    lp,
                    Point::ZERO,
                    &walk,
                    rng::child_seed(seed, 900 + j as u64),
                )
                .map(|e| e.value)
                .unwrap_or(f64::NAN);
                let xi = prev.map(|p| p - rho).unwrap_or(f64::NAN);
                csv.push_str(&format!("{j},{rho},{xi}\n"));
                prev = Some(rho);
            }
            fs::write(&chain_path, csv)?;
            let mut manifest = Manifest::new("cle fullplane");
            manifest.set("seed", seed);
            manifest.add_output(&loops_path);
            manifest.add_output(&chain_path);
            manifest.write(out_dir)?;
            println!(
                "fullplane window: {} loops, chain length {}",
                w.window_loops.len(),
                w.chain.len()
            );
        }
        CleCmd::Couple(args) => {
            let cfg = cle_config(args.c, args.q);
            let disc = Loop::circle(Point::ZERO, 1.0, 256);
            let square = Loop::rectangle(pt(-1.0, -1.0), pt(1.0, 1.0));
            let m_gap = match args.m_gap {
                Some(m) => m,
                None => calibrate_gap(&Domain::disc(1.0), &cfg, 6, rng::child_seed(seed, 999))
                    .map_err(|e| anyhow!("{e}"))?,
            };
            let couplings = run_couplings(&disc, &square, m_gap, args.retries, &cfg, args.runs, seed);
            let successes = couplings.iter().filter(|c| c.success).count();
            let path = out_dir.join("couple.csv");
            let mut csv = String::from("run,success,n0,n0p\n");
            for (k, c) in couplings.iter().enumerate() {
                csv.push_str(&format!("{k},{},{},{}\n", c.success, c.n0, c.n0p));
            }
            fs::write(&path, csv)?;
            let mut manifest = Manifest::new("cle couple");
            manifest.set("seed", seed);
            manifest.set("m_gap", m_gap);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
            println!(
                "couple: {successes}/{} succeeded (M = {m_gap:.3}) -> {}",
                couplings.len(),
                path.display()
            );
        }
    }
    Ok(Outcome::Done)
}

fn cmd_sle(cmd: SleCmd, seed: u64, out_dir: &Path) -> Result<Outcome> {
    match cmd {
        SleCmd::Trace(args) => {
            let t = chordal_sle(args.kappa, args.t, args.dt, seed).map_err(|e| anyhow!("{e}"))?;
            let path = out_dir.join("trace.csv");
            let mut csv = String::from("x,y\n");
            for p in t.trace.vertices() {
                csv.push_str(&format!("{},{}\n", p.x, p.y));
            }
            fs::write(&path, csv)?;
            let mut manifest = Manifest::new("sle trace");
            manifest.set("kappa", args.kappa);
            manifest.set("seed", seed);
            manifest.set("coarse_steps", t.coarse_steps);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
            println!("trace: {} points -> {}", t.trace.vertices().len(), path.display());
        }
        SleCmd::Theta(args) => {
            let path = out_dir.join("theta.csv");
            let mut csv = String::from("run,lifetime,exit_side\n");
            for k in 0..args.n {
                let p = radial_theta(args.kappa, args.theta0, args.du, false, rng::child_seed(seed, k as u64))
                    .map_err(|e| anyhow!("{e}"))?;
                csv.push_str(&format!("{k},{},{}\n", p.lifetime, p.exit_side));
            }
            fs::write(&path, csv)?;
            let mut manifest = Manifest::new("sle theta");
            manifest.set("seed", seed);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
            println!("theta: {} runs -> {}", args.n, path.display());
        }
        SleCmd::Side(args) => {
            let z0 = parse_point(&args.z0)?;
            let est = side_probability(args.kappa, z0, args.eps, args.n, args.t, args.dt, seed)
                .map_err(|e| anyhow!("{e}"))?;
            let path = out_dir.join("side.csv");
            fs::write(
                &path,
                format!(
                    "p_hat,stderr,accepted,proposed\n{},{},{},{}\n",
                    est.p_hat, est.stderr, est.accepted, est.proposed
                ),
            )?;
            let mut manifest = Manifest::new("sle side");
            manifest.set("seed", seed);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
            println!(
                "side: p = {:.4} +- {:.4} ({} accepted / {})",
                est.p_hat, est.stderr, est.accepted, est.proposed
            );
        }
        SleCmd::Minkowski(args) => {
            let eps = parse_list(&args.eps_list)?;
            let exp = minkowski_experiment(args.kappa, args.traces, args.t, args.dt, &eps, seed)?;
            let path = out_dir.join("minkowski.csv");
            let mut csv = String::from("eps,mean_v\n");
            for (e, v) in exp.eps.iter().zip(&exp.mean_v) {
                csv.push_str(&format!("{e},{v}\n"));
            }
            csv.push_str(&format!(
                "# slope,{},expected,{},se,{},side_ratio,{}\n",
                exp.slope, exp.expected_slope, exp.slope_se, exp.side_ratio_at_min_eps
            ));
            fs::write(&path, csv)?;
            let mut manifest = Manifest::new("sle minkowski");
            manifest.set("seed", seed);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
            println!(
                "minkowski: slope {:.3} (expected {:.3}), side ratio {:.3}",
                exp.slope, exp.expected_slope, exp.side_ratio_at_min_eps
            );
        }
        SleCmd::Disconnect(args) => {
            let a_list = parse_list(&args.a_list)?;
            let path = out_dir.join("disconnect.csv");
            let mut csv = String::from("a,fraction,accepted,proposed\n");
            for (i, &a) in a_list.iter().enumerate() {
                let rep = disconnection_fraction(args.kappa, a, args.n, args.du, rng::child_seed(seed, i as u64))
                    .map_err(|e| anyhow!("{e}"))?;
                println!("a = {a}: fraction {:.3} ({} accepted)", rep.fraction, rep.accepted);
                csv.push_str(&format!("{a},{},{},{}\n", rep.fraction, rep.accepted, rep.proposed));
            }
            fs::write(&path, csv)?;
            let mut manifest = Manifest::new("sle disconnect");
            manifest.set("seed", seed);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
        }
    }
    Ok(Outcome::Done)
}

fn write_report(out_dir: &Path, name: &str, report: &cle_core::stats::Report) -> Result<()> {
    let text_path = out_dir.join(format!("{name}.txt"));
    fs::write(&text_path, report.render())?;
    let csv_path = out_dir.join(format!("{name}.csv"));
    let mut csv = String::from("test,statistic,p,rejected\n");
    for l in &report.lines {
        csv.push_str(&format!("{},{},{},{}\n", l.name, l.statistic, l.p, l.rejected));
    }
    fs::write(&csv_path, csv)?;
    Ok(())
}

fn cmd_stats(cmd: StatsCmd, seed: u64, out_dir: &Path) -> Result<Outcome> {
    match cmd {
        StatsCmd::NuTest(args) => {
            let w = parse_list(&args.window)?;
            let window = WindowSpec {
                rho_min: w[0],
                rho_max: w[1],
            };
            let cfg = cle_config(1.0, args.q);
            let margin = 7.0;
            let outer = collect_qk_bank(
                &cfg,
                window,
                BoundaryKind::Outer,
                margin,
                args.n,
                args.max_chains,
                rng::child_seed(seed, 1),
            );
            let inner = collect_qk_bank(
                &cfg,
                window,
                BoundaryKind::Inner,
                margin,
                args.n,
                args.max_chains,
                rng::child_seed(seed, 2),
            );
            let report = test_intensity_equality("nu_i vs nu_e", &outer, &inner, args.alpha, args.n.min(100))
                .map_err(|e| anyhow!("{e}"))?;
            print!("{}", report.render());
            write_report(out_dir, "nu_test", &report)?;
            let mut manifest = Manifest::new("stats nu-test");
            manifest.set("seed", seed);
            manifest.add_output(&out_dir.join("nu_test.txt"));
            manifest.add_output(&out_dir.join("nu_test.csv"));
            manifest.write(out_dir)?;
            if report.any_rejection() {
                return Ok(Outcome::Rejected);
            }
        }
        StatsCmd::Inversion(args) => {
            let cfg = cle_config(1.0, args.q);
            let walk = WalkParams {
                n_walks: 1500,
                ..WalkParams::default()
            };
            let plain = collect_window_stats(
                &cfg,
                args.r_over_r,
                1.0,
                0.05,
                WindowMode::Plain,
                args.n,
                &walk,
                rng::child_seed(seed, 1),
            );
            let inverted = collect_window_stats(
                &cfg,
                args.r_over_r,
                1.0,
                0.05,
                WindowMode::Inverted,
                args.n,
                &walk,
                rng::child_seed(seed, 2),
            );
            let report = test_window_ensembles(
                "full-plane inversion invariance",
                &plain,
                &inverted,
                args.alpha,
                (args.n / 3).max(30),
            )
            .map_err(|e| anyhow!("{e}"))?;
            print!("{}", report.render());
            write_report(out_dir, "inversion", &report)?;
            let mut manifest = Manifest::new("stats inversion");
            manifest.set("seed", seed);
            manifest.add_output(&out_dir.join("inversion.txt"));
            manifest.write(out_dir)?;
            if report.any_rejection() {
                return Ok(Outcome::Rejected);
            }
        }
        StatsCmd::Proportionality(args) => {
            let ws = parse_list(&args.windows)?;
            let w1 = WindowSpec {
                rho_min: ws[0],
                rho_max: ws[1],
            };
            let w2 = WindowSpec {
                rho_min: ws[2],
                rho_max: ws[3],
            };
            let cfg = cle_config(1.0, args.q);
            let margin = 7.0;
            let e_bank = [
                collect_qk_bank(&cfg, w1, BoundaryKind::Outer, margin, args.n, args.max_chains, rng::child_seed(seed, 1)),
                collect_qk_bank(&cfg, w2, BoundaryKind::Outer, margin, args.n, args.max_chains, rng::child_seed(seed, 2)),
            ];
            let cle_bank = [
                collect_cle_bank(&cfg, w1, margin, args.n, args.max_chains, rng::child_seed(seed, 3)),
                collect_cle_bank(&cfg, w2, margin, args.n, args.max_chains, rng::child_seed(seed, 4)),
            ];
            let report = test_proportionality(&e_bank, &cle_bank, args.alpha, [w1.width(), w2.width()])
                .map_err(|e| anyhow!("{e}"))?;
            print!("{}", report.render());
            write_report(out_dir, "proportionality", &report)?;
            let mut manifest = Manifest::new("stats proportionality");
            manifest.set("seed", seed);
            manifest.add_output(&out_dir.join("proportionality.txt"));
            manifest.write(out_dir)?;
            if report.any_rejection() {
                return Ok(Outcome::Rejected);
            }
        }
        StatsCmd::Overshoot(args) => {
            let m_list = parse_list(&args.m_list)?;
            let rep = overshoot_experiment(
                |run, k| {
                    let mut rg = rng::substream(seed, run * 100_003 + k as u64);
                    let u: f64 = rand::Rng::gen(&mut rg);
                    -(1.0 - u).ln()
                },
                args.y,
                &m_list,
                args.n,
            );
            let path = out_dir.join("overshoot.csv");
            let mut csv = String::from("m,tail\n");
            for (m, t) in rep.m_list.iter().zip(&rep.tail) {
                csv.push_str(&format!("{m},{t}\n"));
            }
            csv.push_str(&format!("# slope,{},se,{}\n", rep.slope, rep.slope_se));
            fs::write(&path, csv)?;
            println!(
                "overshoot: slope {:.4} +- {:.4} over {} runs",
                rep.slope, rep.slope_se, rep.n
            );
            let mut manifest = Manifest::new("stats overshoot");
            manifest.set("seed", seed);
            manifest.add_output(&path);
            manifest.write(out_dir)?;
        }
        StatsCmd::SmallShapes(args) => {
            let eps_list = parse_list(&args.eps_list)?;
            let report = small_shapes_experiment(&eps_list, args.n, args.q, seed)?;
            fs::write(out_dir.join("small_shapes.txt"), &report)?;
            print!("{report}");
            let mut manifest = Manifest::new("stats small-shapes");
            manifest.set("seed", seed);
            manifest.add_output(&out_dir.join("small_shapes.txt"));
            manifest.write(out_dir)?;
        }
    }
    Ok(Outcome::Done)
}

/// Shapes of the outermost CLE loop around 0 conditioned on a small
/// annulus modulus, against the stationary chain harvest.
fn small_shapes_experiment(eps_list: &[f64], n: usize, q: f64, seed: u64) -> Result<String> {
    use rayon::prelude::*;
    let cfg = cle_config(1.0, q);
    // conditioned samples: (modulus, area of shape)
    let samples: Vec<(f64, f64)> = (0..n as u64)
        .into_par_iter()
        .filter_map(|k| {
            let loops = sample_cle(&Domain::disc(1.0), &cfg, rng::child_seed(seed, k)).ok()?;
            let lp = loops.iter().find(|l| l.surrounds(Point::ZERO))?;
            let circle = Loop::circle(Point::ZERO, 1.0, 256);
            let h = cle_core::conformal::default_annulus_h(&circle, lp).max(4e-3);
            let m = cle_core::conformal::annulus_modulus(&circle, lp, h).ok()?;
            let rho = cle_core::conformal::log_conformal_radius(
                lp,
                Point::ZERO,
                &WalkParams::default(),
                rng::child_seed(seed ^ 7, k),
            )
            .ok()?
            .value;
            let shape = lp.scaled((-rho).exp());
            Some((m, shape.signed_area().abs()))
        })
        .collect();
    // stationary reference: chain harvest far below the start
    let window = WindowSpec {
        rho_min: -9.0,
        rho_max: -6.0,
    };
    let stationary = collect_cle_bank(&cfg, window, 7.0, n / 2, 4 * n, rng::child_seed(seed, 999));
    let mut out = String::from("# small-loop shapes vs stationary law\n");
    let mut last_d = f64::INFINITY;
    let mut monotone = true;
    for &eps in eps_list {
        let conditioned: Vec<f64> = samples
            .iter()
            .filter(|(m, _)| *m < eps)
            .map(|(_, a)| *a)
            .collect();
        if conditioned.len() < 20 {
            out.push_str(&format!("eps {eps}: only {} conditioned samples\n", conditioned.len()));
            continue;
        }
        let r = ks_test(&conditioned, &stationary.area);
        out.push_str(&format!(
            "eps {eps}: n {},  KS D {:.4}, p {:.4}\n",
            conditioned.len(),
            r.d,
            r.p
        ));
        if r.d > last_d + 0.1 {
            monotone = false;
        }
        last_d = r.d;
    }
    out.push_str(&format!("ks statistic trend non-increasing: {monotone}\n"));
    Ok(out)
}

fn cmd_render(args: RenderArgs, out_dir: &Path) -> Result<Outcome> {
    let (_, loops) = io::read_loops(&args.input)?;
    let svg = render_svg(&loops, args.stroke);
    let out = args.out.unwrap_or_else(|| out_dir.join("render.svg"));
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent).ok();
    }
    fs::write(&out, svg)?;
    println!("render: {} loops -> {}", loops.len(), out.display());
    Ok(Outcome::Done)
}
