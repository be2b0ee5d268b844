//! Replica-level parallel drivers for the statistical experiments. Each
//! replica runs on a substream derived from the master seed and its task
//! index, so results are independent of scheduling and worker count.

use anyhow::{bail, Result};
use cle_core::cle::{couple_nested, sample_fullplane_window, CleConfig, Coupling};
use cle_core::conformal::WalkParams;
use cle_core::geom::{pt, Bbox, Loop, Point};
use cle_core::rng;
use cle_core::sle::{chordal_sle, minkowski_volumes, MinkowskiReport, WeightGrid};
use cle_core::stats::{
    cle_chain_harvest, invert_chain, linear_fit, qk_chain_harvest_multi, window_statistics,
    BoundaryKind, FunctionalSample, WindowSpec, WindowStats,
};
use rayon::prelude::*;

/// Harvest a cluster-chain bank over one or more windows in parallel,
/// until at least `target` loops land in the first window (or `max_chains`
/// chains have run).
pub fn collect_qk_banks(
    cfg: &CleConfig,
    windows: &[WindowSpec],
    kind: BoundaryKind,
    margin: f64,
    target: usize,
    max_chains: usize,
    seed: u64,
) -> Vec<FunctionalSample> {
    let batch = 64usize;
    let mut out: Vec<FunctionalSample> = windows.iter().map(|_| FunctionalSample::default()).collect();
    let mut next = 0u64;
    while out[0].len() < target && (next as usize) < max_chains {
        let seeds: Vec<u64> = (0..batch as u64).map(|k| next + k).collect();
        next += batch as u64;
        let parts: Vec<Vec<FunctionalSample>> = seeds
            .par_iter()
            .filter_map(|&k| {
                qk_chain_harvest_multi(cfg, windows, kind, margin, rng::child_seed(seed, k)).ok()
            })
            .collect();
        for p in parts {
            for (w, f) in p.into_iter().enumerate() {
                out[w].merge(f);
            }
        }
    }
    out
}

/// Single-window convenience wrapper of [`collect_qk_banks`].
pub fn collect_qk_bank(
    cfg: &CleConfig,
    window: WindowSpec,
    kind: BoundaryKind,
    margin: f64,
    target: usize,
    max_chains: usize,
    seed: u64,
) -> FunctionalSample {
    collect_qk_banks(cfg, &[window], kind, margin, target, max_chains, seed).remove(0)
}

/// Harvest a nested-CLE chain bank in parallel.
pub fn collect_cle_bank(
    cfg: &CleConfig,
    window: WindowSpec,
    margin: f64,
    target: usize,
    max_chains: usize,
    seed: u64,
) -> FunctionalSample {
    let batch = 64usize;
    let mut out = FunctionalSample::default();
    let mut next = 0u64;
    while out.len() < target && (next as usize) < max_chains {
        let seeds: Vec<u64> = (0..batch as u64).map(|k| next + k).collect();
        next += batch as u64;
        let parts: Vec<FunctionalSample> = seeds
            .par_iter()
            .filter_map(|&k| cle_chain_harvest(cfg, window, margin, rng::child_seed(seed, k)).ok())
            .collect();
        for p in parts {
            out.merge(p);
        }
    }
    out
}

/// How a window ensemble is post-processed before its statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowMode {
    Plain,
    Inverted,
    /// translate by the offset, then invert (the power-check corruption)
    CorruptedInverted(f64),
}

/// Sample full-plane windows and compute per-configuration statistics.
pub fn collect_window_stats(
    cfg: &CleConfig,
    big_radius: f64,
    window_radius: f64,
    min_diam: f64,
    mode: WindowMode,
    n: usize,
    walk: &WalkParams,
    seed: u64,
) -> Vec<WindowStats> {
    (0..n as u64)
        .into_par_iter()
        .filter_map(|k| {
            let w = sample_fullplane_window(
                big_radius,
                window_radius,
                cfg,
                min_diam,
                rng::child_seed(seed, k),
            )
            .ok()?;
            let chain: Vec<Loop> = match mode {
                WindowMode::Plain => w.chain,
                WindowMode::Inverted => invert_chain(&w.chain),
                WindowMode::CorruptedInverted(shift) => {
                    let moved: Vec<Loop> =
                        w.chain.iter().map(|l| l.translated(pt(shift, 0.0))).collect();
                    invert_chain(&moved)
                }
            };
            window_statistics(&chain, walk, rng::child_seed(seed ^ 0xabcd, k))
                .ok()
                .flatten()
        })
        .collect()
}

/// Run `n` couplings of the two domains in parallel.
pub fn run_couplings(
    d: &Loop,
    dp: &Loop,
    m_gap: f64,
    retries: usize,
    cfg: &CleConfig,
    n: usize,
    seed: u64,
) -> Vec<Coupling> {
    (0..n as u64)
        .into_par_iter()
        .filter_map(|k| couple_nested(d, dp, m_gap, retries, cfg, rng::child_seed(seed, k)).ok())
        .collect()
}

/// Minkowski dimension experiment: mean weighted volumes over traces, the
/// regression slope of log E[v] on log eps, and the side ratio at the
/// smallest epsilon.
pub struct MinkowskiExperiment {
    pub kappa: f64,
    pub eps: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub expected_slope: f64,
    pub side_ratio_at_min_eps: f64,
    pub traces: usize,
}

pub fn minkowski_experiment(
    kappa: f64,
    n_traces: usize,
    t_total: f64,
    dt: f64,
    eps: &[f64],
    seed: u64,
) -> Result<MinkowskiExperiment> {
    let eps_min = eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights = WeightGrid::bump(
        Bbox {
            min: pt(-1.2, 0.4),
            max: pt(1.2, 2.0),
        },
        eps_min / 5.0,
    );
    let reports: Vec<MinkowskiReport> = (0..n_traces as u64)
        .into_par_iter()
        .filter_map(|k| {
            let trace = chordal_sle(kappa, t_total, dt, rng::child_seed(seed, k)).ok()?;
            minkowski_volumes(&trace, &weights, eps).ok()
        })
        .collect();
    if reports.len() < n_traces / 2 {
        bail!("too many failed traces: {}/{n_traces}", reports.len());
    }
    let k_eps = reports[0].eps.clone();
    let mut mean_v = vec![0.0f64; k_eps.len()];
    let mut plus_min = 0.0;
    let mut minus_min = 0.0;
    for r in &reports {
        for (i, v) in r.v_total.iter().enumerate() {
            mean_v[i] += v / reports.len() as f64;
        }
        plus_min += r.v_plus.last().unwrap();
        minus_min += r.v_minus.last().unwrap();
    }
    let xs: Vec<f64> = k_eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = mean_v.iter().map(|v| v.ln()).collect();
    let (slope, _icept, se) = linear_fit(&xs, &ys);
    let d = 1.0 + kappa / 8.0;
    Ok(MinkowskiExperiment {
        kappa,
        eps: k_eps,
        mean_v,
        slope,
        slope_se: se,
        expected_slope: 2.0 - d,
        side_ratio_at_min_eps: plus_min / minus_min,
        traces: reports.len(),
    })
}

/// Empirical survival function P(n0 >= j) of coupling indices.
pub fn survival_of_n0(couplings: &[Coupling]) -> Vec<f64> {
    let max = couplings.iter().map(|c| c.n0).max().unwrap_or(1);
    (1..=max)
        .map(|j| {
            couplings.iter().filter(|c| c.n0 >= j).count() as f64 / couplings.len().max(1) as f64
        })
        .collect()
}
