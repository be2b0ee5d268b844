//! Conformal loop ensembles from loop-soup clusters: non-nested and nested
//! sampling, the next-cluster Markov kernels, full-plane windows, and the
//! two-domain coupling construction.

use crate::clusters::{build_clusters_scaled, cluster_boundaries, Cluster, ClusterError};
use crate::conformal::{log_conformal_radius, ConformalError, WalkParams};
use crate::geom::{Loop, Point};
use crate::loopsoup::{sample_sle83_soup, Domain, SoupConfig, SoupError, StepsRule};
use crate::rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CleError {
    #[error("no cluster surrounds the basepoint after {attempts} soups (cutoff q = {cutoff_q})")]
    NoSurroundingCluster { attempts: usize, cutoff_q: f64 },
    #[error("nested recursion exceeded the loop budget of {0}")]
    RecursionBudgetExceeded(usize),
    #[error(transparent)]
    Soup(#[from] SoupError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

/// Parameters shared by all CLE-level samplers.
#[derive(Clone, Debug)]
pub struct CleConfig {
    /// soup intensity in (0, 1]
    pub c: f64,
    /// duration cutoff quality: t_min = (diam/q)^2 for each sampled domain
    pub cutoff_q: f64,
    pub steps: StepsRule,
    /// per-loop boundary raster ratio (h = diam x ratio)
    pub raster_ratio: f64,
    /// per-pair touch tolerance ratio for clustering
    pub touch_ratio: f64,
    /// cluster boundary raster: h = cluster bbox diagonal / this
    pub cluster_raster_div: f64,
    /// kernel resampling cap when no cluster surrounds the basepoint
    pub retry_cap: usize,
    /// log-conformal-radius estimation
    pub walk: WalkParams,
    pub walk_max: usize,
    /// total loop budget for nested recursion
    pub max_loops: usize,
}

impl Default for CleConfig {
    fn default() -> CleConfig {
        CleConfig {
            c: 1.0,
            cutoff_q: 40.0,
            steps: StepsRule::default(),
            raster_ratio: 1.0 / 64.0,
            touch_ratio: 1.0 / 512.0,
            cluster_raster_div: 512.0,
            retry_cap: 40,
            walk: WalkParams {
                n_walks: 1500,
                ..WalkParams::default()
            },
            walk_max: 24_000,
            max_loops: 200_000,
        }
    }
}

impl CleConfig {
    fn soup_config(&self, domain: Domain, seed: u64) -> Result<SoupConfig, SoupError> {
        let mut cfg = SoupConfig::relative(self.c, domain, self.cutoff_q, seed)?;
        cfg.steps = self.steps;
        cfg.raster_ratio = self.raster_ratio;
        cfg.touch_ratio = self.touch_ratio;
        Ok(cfg)
    }
}

/// Outer boundaries of the outermost clusters of an SLE(8/3) soup in the
/// domain: one non-nested CLE sample. Loops are pairwise disjoint and
/// non-nested.
pub fn sample_cle(domain: &Domain, cfg: &CleConfig, seed: u64) -> Result<Vec<Loop>, CleError> {
    let soup = sample_sle83_soup(&cfg.soup_config(domain.clone(), seed)?)?;
    outermost_boundaries(&soup.loops, cfg)
}

/// Outer boundaries of outermost clusters of a set of simple loops.
/// Boundaries that cross at raster resolution mean the clusters are
/// touching at that scale; they merge and re-extract jointly.
fn outermost_boundaries(loops: &[Loop], cfg: &CleConfig) -> Result<Vec<Loop>, CleError> {
    let clusters = build_clusters_scaled(loops, cfg.touch_ratio);
    let mut outs: Vec<Cluster> = Vec::new();
    'next: for c in &clusters {
        // surrounded by an already-accepted (larger) outermost boundary?
        let probe = loops[c.member_ids[0] as usize].vertices()[0];
        for o in &outs {
            let outer = o.outer.as_ref().unwrap();
            if outer.bbox().contains(probe) && outer.surrounds(probe) {
                continue 'next;
            }
        }
        let mut cur = c.clone();
        cur.outer = Some(extract_outer(&cur, loops, cfg)?);
        loop {
            let hit = outs.iter().position(|o| {
                crate::geom::loops_intersect(
                    o.outer.as_ref().unwrap(),
                    cur.outer.as_ref().unwrap(),
                    0.0,
                )
            });
            let Some(k) = hit else { break };
            let other = outs.swap_remove(k);
            // bridge at the closest boundary points, then merge members
            let grid = crate::geom::SegmentGrid::from_loop(other.outer.as_ref().unwrap());
            let mut best = (f64::INFINITY, Point::ZERO, Point::ZERO);
            for &v in cur.outer.as_ref().unwrap().vertices() {
                let (d, idx) = grid.nearest_capped(v, best.0);
                if d < best.0 {
                    let (a, b) = grid.segments()[idx as usize];
                    let ab = b - a;
                    let t = if ab.norm_sq() > 0.0 {
                        ((v - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    best = (d, v, a + ab * t);
                }
            }
            cur.member_ids.extend(other.member_ids);
            cur.member_ids.sort_unstable();
            cur.bridges.extend(other.bridges);
            cur.bridges.push((best.1, best.2));
            for &id in &cur.member_ids {
                for &v in loops[id as usize].vertices() {
                    cur.bbox.expand(v);
                }
            }
            cur.outer = Some(extract_outer(&cur, loops, cfg)?);
        }
        outs.push(cur);
    }
    Ok(outs
        .into_iter()
        .map(|c| c.outer.expect("outer extracted"))
        .collect())
}

fn extract_outer(c: &Cluster, loops: &[Loop], cfg: &CleConfig) -> Result<Loop, CleError> {
    if c.member_ids.len() == 1 && c.bridges.is_empty() {
        return Ok(loops[c.member_ids[0] as usize].clone());
    }
    let h = c.bbox.diag() / cfg.cluster_raster_div;
    let filled = cluster_boundaries(c, loops, &[], h)?;
    Ok(filled.outer.expect("outer boundary requested"))
}

/// A nested-CLE loop with its generation and parent index.
#[derive(Clone, Debug)]
pub struct NestedLoop {
    pub lp: Loop,
    pub generation: u32,
    pub parent: Option<u32>,
}

/// All generations of a nested CLE down to a diameter cutoff.
#[derive(Clone, Debug)]
pub struct NestedLoops {
    pub loops: Vec<NestedLoop>,
    pub min_diam: f64,
}

/// Nested CLE by direct recursion: a CLE in the domain, then independent
/// CLEs inside every loop of diameter at least `min_diam` (fresh soups
/// restricted to each interior; the restriction property makes this the
/// right conditional law, no conformal mapping involved).
pub fn sample_nested_cle(
    domain: &Domain,
    cfg: &CleConfig,
    min_diam: f64,
    seed: u64,
) -> Result<NestedLoops, CleError> {
    let mut out: Vec<NestedLoop> = Vec::new();
    // queue of (domain, generation, parent)
    let mut queue: Vec<(Domain, u32, Option<u32>)> = vec![(domain.clone(), 0, None)];
    let mut task = 0u64;
    while let Some((dom, gen, parent)) = queue.pop() {
        task += 1;
        let children = sample_cle(&dom, cfg, rng::child_seed(seed, task))?;
        for lp in children {
            if out.len() >= cfg.max_loops {
                return Err(CleError::RecursionBudgetExceeded(cfg.max_loops));
            }
            let id = out.len() as u32;
            let recurse = lp.diameter() >= min_diam;
            out.push(NestedLoop {
                lp: lp.clone(),
                generation: gen + 1,
                parent,
            });
            if recurse {
                queue.push((Domain::Region(lp), gen + 1, Some(id)));
            }
        }
    }
    Ok(NestedLoops {
        loops: out,
        min_diam,
    })
}

/// Outermost cluster of a soup in the interior of `a` that surrounds the
/// origin, with boundaries extracted at the origin. Resamples with fresh
/// substreams up to the retry cap when the cutoff leaves no surrounding
/// cluster.
pub fn next_cluster(a: &Loop, cfg: &CleConfig, seed: u64) -> Result<Cluster, CleError> {
    assert!(a.surrounds(Point::ZERO), "kernel domain must surround 0");
    for attempt in 0..cfg.retry_cap.max(1) {
        let soup_cfg = cfg.soup_config(Domain::Region(a.clone()), rng::child_seed(seed, attempt as u64))?;
        let soup = sample_sle83_soup(&soup_cfg)?;
        let clusters = build_clusters_scaled(&soup.loops, cfg.touch_ratio);
        // descending bbox area: the first cluster surrounding 0 is the
        // outermost one (surrounding clusters are nested)
        for c in &clusters {
            if !c.bbox.contains(Point::ZERO) {
                continue;
            }
            // coarse disproof is conclusive; anything else needs the fine pass
            if crate::clusters::coarse_surround_test(c, &soup.loops, Point::ZERO, 96.0)
                == Some(false)
            {
                continue;
            }
            let h = c.bbox.diag() / cfg.cluster_raster_div;
            let filled = match cluster_boundaries(c, &soup.loops, &[Point::ZERO], h) {
                Ok(f) => f,
                Err(ClusterError::BasepointInsideCluster) => continue,
                Err(e) => return Err(e.into()),
            };
            let surrounds = filled
                .outer
                .as_ref()
                .map_or(false, |o| o.surrounds(Point::ZERO))
                && filled.inner_for(Point::ZERO).is_some();
            if surrounds {
                return Ok(filled);
            }
        }
    }
    Err(CleError::NoSurroundingCluster {
        attempts: cfg.retry_cap,
        cutoff_q: cfg.cutoff_q,
    })
}

/// Q^e: outer boundary of the next surrounding cluster.
pub fn kernel_qe(a: &Loop, cfg: &CleConfig, seed: u64) -> Result<Loop, CleError> {
    Ok(next_cluster(a, cfg, seed)?.outer.expect("outer extracted"))
}

/// Q^i: inner boundary (around the origin) of the next surrounding cluster.
pub fn kernel_qi(a: &Loop, cfg: &CleConfig, seed: u64) -> Result<Loop, CleError> {
    let c = next_cluster(a, cfg, seed)?;
    Ok(c.inner_for(Point::ZERO).expect("inner extracted").clone())
}

/// Q^K: the next surrounding cluster itself.
pub fn kernel_qk(a: &Loop, cfg: &CleConfig, seed: u64) -> Result<Cluster, CleError> {
    next_cluster(a, cfg, seed)
}

/// The ordered chain of loops around the origin with their log-conformal
/// radii and increments.
#[derive(Clone, Debug)]
pub struct ChainSample {
    pub loops: Vec<Loop>,
    pub rho: Vec<f64>,
    pub rho_err: Vec<f64>,
    pub xi: Vec<f64>,
    /// log-conformal radius of the starting domain
    pub rho_start: f64,
    /// false when the chain ended because the cutoff left no surrounding
    /// cluster before `rho_stop` was reached
    pub complete: bool,
}

/// Estimate rho with enough walks that the drop from `prev` is resolved
/// (adaptive doubling up to `walk_max`). Walk substreams nest, so raising
/// the budget refines the same estimator.
fn rho_adaptive(
    lp: &Loop,
    prev: Option<(f64, f64)>,
    cfg: &CleConfig,
    seed: u64,
) -> Result<(f64, f64), CleError> {
    let mut n = cfg.walk.n_walks;
    loop {
        let params = WalkParams {
            n_walks: n,
            ..cfg.walk
        };
        let est = log_conformal_radius(lp, Point::ZERO, &params, seed)?;
        let done = match prev {
            Some((rp, ep)) => {
                let xi = rp - est.value;
                let sig = (ep * ep + est.stderr * est.stderr).sqrt();
                xi > 5.0 * sig || n >= cfg.walk_max
            }
            None => n >= cfg.walk.n_walks,
        };
        if done {
            return Ok((est.value, est.stderr));
        }
        n = (n * 2).min(cfg.walk_max);
    }
}

/// Iterate Q^e from the domain boundary until rho drops below `rho_stop`
/// or `max_len` loops have been produced.
pub fn sample_chain(
    domain: &Domain,
    cfg: &CleConfig,
    rho_stop: f64,
    max_len: usize,
    seed: u64,
) -> Result<ChainSample, CleError> {
    let boundary = domain.boundary_loop(256);
    let (rho_start, mut prev_err) = rho_adaptive(&boundary, None, cfg, rng::child_seed(seed, 1_000_003))?;
    let mut chain = ChainSample {
        loops: Vec::new(),
        rho: Vec::new(),
        rho_err: Vec::new(),
        xi: Vec::new(),
        rho_start,
        complete: false,
    };
    let mut current = boundary;
    let mut prev_rho = rho_start;
    for j in 0..max_len {
        let lp = match kernel_qe(&current, cfg, rng::child_seed(seed, j as u64)) {
            Ok(lp) => lp,
            Err(CleError::NoSurroundingCluster { .. }) => return Ok(chain),
            Err(e) => return Err(e),
        };
        let (rho, err) = rho_adaptive(
            &lp,
            Some((prev_rho, prev_err)),
            cfg,
            rng::child_seed(seed, 2_000_003 + j as u64),
        )?;
        chain.xi.push(prev_rho - rho);
        chain.rho.push(rho);
        chain.rho_err.push(err);
        chain.loops.push(lp.clone());
        current = lp;
        prev_rho = rho;
        prev_err = err;
        if rho < rho_stop {
            chain.complete = true;
            break;
        }
    }
    if chain.rho.last().map_or(false, |&r| r < rho_stop) {
        chain.complete = true;
    }
    Ok(chain)
}

/// A full-plane window: the nested structure meeting the disc of radius
/// `r`, sampled in the disc of radius `R`, plus the chain of loops
/// surrounding the origin.
#[derive(Clone, Debug)]
pub struct WindowSample {
    pub big_radius: f64,
    pub window_radius: f64,
    /// loops intersecting the window, all generations
    pub window_loops: Vec<NestedLoop>,
    /// which of `window_loops` lie fully inside the window
    pub contained: Vec<bool>,
    /// loops surrounding the origin, outside-in (all scales)
    pub chain: Vec<Loop>,
}

impl WindowSample {
    /// The loops surrounding `b`, largest first (the chain to `b`).
    pub fn chain_to(&self, b: Point) -> Vec<&Loop> {
        let mut picked: Vec<&Loop> = self
            .window_loops
            .iter()
            .map(|nl| &nl.lp)
            .filter(|lp| lp.surrounds(b))
            .collect();
        picked.sort_by(|x, y| {
            y.signed_area()
                .abs()
                .total_cmp(&x.signed_area().abs())
        });
        picked
    }
}

/// Nested CLE in the disc of radius `R`, pruned to what can matter inside
/// the window of radius `r`, chain around the origin kept down to
/// `min_diam`.
pub fn sample_fullplane_window(
    big_radius: f64,
    window_radius: f64,
    cfg: &CleConfig,
    min_diam: f64,
    seed: u64,
) -> Result<WindowSample, CleError> {
    assert!(big_radius >= 8.0 * window_radius, "need R >= 8 r");
    let mut window_loops: Vec<NestedLoop> = Vec::new();
    let mut contained: Vec<bool> = Vec::new();
    let mut chain: Vec<(f64, Loop)> = Vec::new(); // keyed by descending diameter
    let mut queue: Vec<(Domain, u32)> = vec![(Domain::disc(big_radius), 0)];
    let mut task = 0u64;
    let mut produced = 0usize;
    while let Some((dom, gen)) = queue.pop() {
        task += 1;
        // domains on the chain spine (surrounding the origin) resample a
        // stalled generation, mirroring the kernel's cutoff conditioning;
        // off-spine domains sample once
        let on_spine = match &dom {
            Domain::Disc { center, radius } => center.dist(Point::ZERO) < *radius,
            Domain::Region(lp) => lp.surrounds(Point::ZERO),
        };
        let mut children = sample_cle(&dom, cfg, rng::child_seed(seed, task))?;
        if on_spine {
            let mut attempt = 0usize;
            while attempt + 1 < cfg.retry_cap
                && !children.iter().any(|l| l.surrounds(Point::ZERO))
            {
                attempt += 1;
                children = sample_cle(
                    &dom,
                    cfg,
                    rng::child_seed(seed, task ^ (0x5150_0000 + attempt as u64)),
                )?;
            }
        }
        for lp in children {
            produced += 1;
            if produced >= cfg.max_loops {
                return Err(CleError::RecursionBudgetExceeded(cfg.max_loops));
            }
            let diam = lp.diameter();
            let min_r = lp.vertices().iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
            let max_r = lp.vertices().iter().map(|v| v.norm()).fold(0.0f64, f64::max);
            let surrounds0 = lp.surrounds(Point::ZERO);
            if surrounds0 {
                chain.push((diam, lp.clone()));
            }
            if min_r <= window_radius {
                window_loops.push(NestedLoop {
                    lp: lp.clone(),
                    generation: gen + 1,
                    parent: None,
                });
                contained.push(max_r <= window_radius);
            }
            // prune: recurse only where the window or the chain can continue
            let relevant = surrounds0 || min_r <= window_radius;
            if relevant && diam >= min_diam {
                queue.push((Domain::Region(lp), gen + 1));
            }
        }
    }
    chain.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(WindowSample {
        big_radius,
        window_radius,
        window_loops,
        contained,
        chain: chain.into_iter().map(|(_, l)| l).collect(),
    })
}

/// Result of the two-domain coupling.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub success: bool,
    /// index (1-based) of the first shared loop in each chain
    pub n0: usize,
    pub n0p: usize,
    /// the merged chain from the first shared loop on
    pub merged: Vec<Loop>,
    /// full rho histories of both chains up to the merge
    pub rho_a: Vec<f64>,
    pub rho_b: Vec<f64>,
}

/// Couple the nested CLE chains of two domains: alternate descent until
/// the log-conformal radii are within `m_gap`, then draw both next loops
/// from one shared soup restricted to each current interior; on failure
/// descend one step in both chains and retry.
pub fn couple_nested(
    d: &Loop,
    dp: &Loop,
    m_gap: f64,
    u_retries: usize,
    cfg: &CleConfig,
    seed: u64,
) -> Result<Coupling, CleError> {
    assert!(d.surrounds(Point::ZERO) && dp.surrounds(Point::ZERO));
    let mut cur_a = d.clone();
    let mut cur_b = dp.clone();
    let (mut rho_a, mut err_a) = rho_adaptive(&cur_a, None, cfg, rng::child_seed(seed, 1))?;
    let (mut rho_b, mut err_b) = rho_adaptive(&cur_b, None, cfg, rng::child_seed(seed, 2))?;
    let mut hist_a = vec![rho_a];
    let mut hist_b = vec![rho_b];
    let mut step = 0u64;

    let advance = |cur: &mut Loop,
                       rho: &mut f64,
                       err: &mut f64,
                       hist: &mut Vec<f64>,
                       step: &mut u64|
     -> Result<bool, CleError> {
        *step += 1;
        let lp = match kernel_qe(cur, cfg, rng::child_seed(seed, 100 + *step)) {
            Ok(lp) => lp,
            Err(CleError::NoSurroundingCluster { .. }) => return Ok(false),
            Err(e) => return Err(e),
        };
        let (r, e) = rho_adaptive(&lp, Some((*rho, *err)), cfg, rng::child_seed(seed, 7_000_000 + *step))?;
        *cur = lp;
        *rho = r;
        *err = e;
        hist.push(r);
        Ok(true)
    };

    for attempt in 0..u_retries {
        // descend the higher chain until the gap closes to m_gap
        let mut guard = 0;
        while (rho_a - rho_b).abs() > m_gap && guard < 200 {
            guard += 1;
            let ok = if rho_a > rho_b {
                advance(&mut cur_a, &mut rho_a, &mut err_a, &mut hist_a, &mut step)?
            } else {
                advance(&mut cur_b, &mut rho_b, &mut err_b, &mut hist_b, &mut step)?
            };
            if !ok {
                return Ok(Coupling {
                    success: false,
                    n0: hist_a.len(),
                    n0p: hist_b.len(),
                    merged: Vec::new(),
                    rho_a: hist_a,
                    rho_b: hist_b,
                });
            }
        }
        // shared-soup merge attempt
        let merge_seed = rng::child_seed(seed, 500_000 + attempt as u64);
        if let Some((la, lb, same)) = shared_soup_step(&cur_a, &cur_b, cfg, merge_seed)? {
            let n0 = hist_a.len(); // 1-based index of the loop about to be added
            let n0p = hist_b.len();
            if same {
                // continue the merged chain a few steps on a shared stream
                let mut merged = vec![la.clone()];
                let mut cur = la;
                for j in 0..4 {
                    match kernel_qe(&cur, cfg, rng::child_seed(merge_seed, 77 + j)) {
                        Ok(nxt) => {
                            merged.push(nxt.clone());
                            cur = nxt;
                        }
                        Err(CleError::NoSurroundingCluster { .. }) => break,
                        Err(e) => return Err(e),
                    }
                }
                return Ok(Coupling {
                    success: true,
                    n0,
                    n0p,
                    merged,
                    rho_a: hist_a,
                    rho_b: hist_b,
                });
            }
            // failed: adopt the two (different) loops and keep descending
            let (ra, ea) = rho_adaptive(&la, Some((rho_a, err_a)), cfg, rng::child_seed(seed, 8_000_000 + attempt as u64))?;
            cur_a = la;
            rho_a = ra;
            err_a = ea;
            hist_a.push(ra);
            let (rb, eb) = rho_adaptive(&lb, Some((rho_b, err_b)), cfg, rng::child_seed(seed, 9_000_000 + attempt as u64))?;
            cur_b = lb;
            rho_b = rb;
            err_b = eb;
            hist_b.push(rb);
        }
    }
    Ok(Coupling {
        success: false,
        n0: hist_a.len(),
        n0p: hist_b.len(),
        merged: Vec::new(),
        rho_a: hist_a,
        rho_b: hist_b,
    })
}

/// Draw one soup over the union of both interiors and read off the next
/// chain loop of each domain from its restriction. Returns the two loops
/// and whether they came out identical (same member set, hence bit-equal).
fn shared_soup_step(
    a: &Loop,
    b: &Loop,
    cfg: &CleConfig,
    seed: u64,
) -> Result<Option<(Loop, Loop, bool)>, CleError> {
    use crate::geom::Bbox;
    let mut bbox = Bbox::empty();
    for &v in a.vertices() {
        bbox.expand(v);
    }
    for &v in b.vertices() {
        bbox.expand(v);
    }
    let diam = a.diameter().min(b.diameter());
    let t_min = (diam / cfg.cutoff_q) * (diam / cfg.cutoff_q);
    let t_max = bbox.diag() * bbox.diag();
    // proposals over the joint box; restriction applied per domain below
    let box_domain = Domain::Region(Loop::rectangle(bbox.min, bbox.max));
    let mut soup_cfg = SoupConfig::new(cfg.c, box_domain, t_min, t_max, seed)?;
    soup_cfg.steps = cfg.steps;
    soup_cfg.raster_ratio = cfg.raster_ratio;
    soup_cfg.touch_ratio = cfg.touch_ratio;
    let soup = sample_sle83_soup(&soup_cfg)?;

    let pick = |domain: &Loop| -> Result<Option<(Vec<u32>, Loop)>, CleError> {
        let dt = Domain::Region(domain.clone());
        let tester = crate::loopsoup::DomainTest::new(&dt);
        let mut kept: Vec<(u32, Loop)> = Vec::new();
        for (k, lp) in soup.loops.iter().enumerate() {
            if tester.contains_loop(lp) {
                kept.push((k as u32, lp.clone()));
            }
        }
        let ids: Vec<u32> = kept.iter().map(|(k, _)| *k).collect();
        let loops: Vec<Loop> = kept.into_iter().map(|(_, l)| l).collect();
        let clusters = build_clusters_scaled(&loops, cfg.touch_ratio);
        for c in &clusters {
            if !c.bbox.contains(Point::ZERO) {
                continue;
            }
            if crate::clusters::coarse_surround_test(c, &loops, Point::ZERO, 96.0) == Some(false) {
                continue;
            }
            let h = c.bbox.diag() / cfg.cluster_raster_div;
            let filled = match cluster_boundaries(c, &loops, &[Point::ZERO], h) {
                Ok(f) => f,
                Err(ClusterError::BasepointInsideCluster) => continue,
                Err(e) => return Err(e.into()),
            };
            if filled
                .outer
                .as_ref()
                .map_or(false, |o| o.surrounds(Point::ZERO))
                && filled.inner_for(Point::ZERO).is_some()
            {
                let members: Vec<u32> = c.member_ids.iter().map(|&m| ids[m as usize]).collect();
                return Ok(Some((members, filled.outer.unwrap())));
            }
        }
        Ok(None)
    };

    let ra = pick(a)?;
    let rb = pick(b)?;
    match (ra, rb) {
        (Some((ma, la)), Some((mb, lb))) => {
            let same = ma == mb;
            Ok(Some((la, lb, same)))
        }
        _ => Ok(None),
    }
}

/// Full cluster chain around a basepoint from one soup sample: build the
/// clusters, extract boundaries for the candidates that can surround the
/// basepoint, and order them outside-in.
pub fn soup_cluster_chain(
    soup_cfg: &crate::loopsoup::SoupConfig,
    basepoint: Point,
    cfg: &CleConfig,
) -> Result<crate::clusters::ClusterChain, CleError> {
    let soup = sample_sle83_soup(soup_cfg)?;
    let clusters = build_clusters_scaled(&soup.loops, cfg.touch_ratio);
    let mut filled = Vec::new();
    for c in &clusters {
        if !c.bbox.contains(basepoint) {
            continue;
        }
        if crate::clusters::coarse_surround_test(c, &soup.loops, basepoint, 96.0) == Some(false) {
            continue;
        }
        let h = c.bbox.diag() / cfg.cluster_raster_div;
        match cluster_boundaries(c, &soup.loops, &[basepoint], h) {
            Ok(f) => filled.push(f),
            Err(ClusterError::BasepointInsideCluster) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(crate::clusters::chain_around(filled, basepoint)?)
}

/// Calibrate the coupling gap as twice the median absolute rho jump of a
/// pilot chain.
pub fn calibrate_gap(domain: &Domain, cfg: &CleConfig, steps: usize, seed: u64) -> Result<f64, CleError> {
    let chain = sample_chain(domain, cfg, f64::NEG_INFINITY, steps, seed)?;
    let mut jumps: Vec<f64> = chain.xi.iter().map(|x| x.abs()).collect();
    if jumps.is_empty() {
        return Ok(1.0);
    }
    jumps.sort_by(f64::total_cmp);
    Ok(2.0 * jumps[jumps.len() / 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::pt;

    fn quick_cfg() -> CleConfig {
        CleConfig {
            cutoff_q: 20.0,
            retry_cap: 20,
            walk: WalkParams {
                n_walks: 800,
                ..WalkParams::default()
            },
            walk_max: 6400,
            ..CleConfig::default()
        }
    }

    #[test]
    fn cle_loops_are_disjoint_simple_non_nested() {
        let cfg = quick_cfg();
        let loops = sample_cle(&Domain::disc(1.0), &cfg, 11).unwrap();
        assert!(!loops.is_empty());
        for lp in &loops {
            assert!(lp.is_simple_tagged());
        }
        for i in 0..loops.len() {
            for j in (i + 1)..loops.len() {
                assert!(
                    !crate::geom::loops_intersect(&loops[i], &loops[j], 0.0),
                    "loops {i} and {j} intersect"
                );
                // non-nested: winding of one about any vertex of the other is 0
                let vi = loops[i].vertices()[0];
                let vj = loops[j].vertices()[0];
                assert_eq!(loops[i].winding_unchecked(vj), 0);
                assert_eq!(loops[j].winding_unchecked(vi), 0);
            }
        }
    }

    #[test]
    fn tiny_intensity_gives_empty_cle() {
        let mut cfg = quick_cfg();
        cfg.c = 1e-9;
        let loops = sample_cle(&Domain::disc(1.0), &cfg, 3).unwrap();
        assert!(loops.is_empty());
    }

    #[test]
    fn kernel_output_nests_and_shrinks() {
        let cfg = quick_cfg();
        let a = Loop::circle(Point::ZERO, 1.0, 256);
        for seed in 0..6u64 {
            let lp = kernel_qe(&a, &cfg, seed).unwrap();
            assert!(lp.surrounds(Point::ZERO));
            for &v in lp.vertices().iter().step_by(8) {
                assert!(v.norm() < 1.0 + 1e-9, "kernel output escapes the domain");
            }
            // strict rho decrease, estimated
            let (r, e) = rho_adaptive(&lp, Some((0.0, 0.005)), &cfg, 900 + seed).unwrap();
            assert!(r < 0.0 + 3.0 * e, "rho {r} did not decrease");
        }
    }

    #[test]
    fn nested_generations_are_tagged_and_nested() {
        let cfg = quick_cfg();
        let nested = sample_nested_cle(&Domain::disc(1.0), &cfg, 0.35, 21).unwrap();
        assert!(!nested.loops.is_empty());
        let mut saw_gen2 = false;
        for nl in &nested.loops {
            if nl.generation >= 2 {
                saw_gen2 = true;
                let parent = &nested.loops[nl.parent.unwrap() as usize];
                assert_eq!(parent.generation, nl.generation - 1);
                // parent surrounds child
                assert!(parent.lp.surrounds(nl.lp.vertices()[0]));
            }
        }
        assert!(saw_gen2, "recursion produced no second generation");
        // siblings of the same parent are disjoint
        for i in 0..nested.loops.len() {
            for j in (i + 1)..nested.loops.len() {
                let (a, b) = (&nested.loops[i], &nested.loops[j]);
                if a.parent == b.parent && a.generation == b.generation {
                    assert!(!crate::geom::loops_intersect(&a.lp, &b.lp, 0.0));
                }
            }
        }
    }

    #[test]
    fn chain_rho_decreases() {
        let cfg = quick_cfg();
        // deep chains can terminate at the cutoff; scan seeds for one with
        // at least two links
        let chain = (0..20u64)
            .map(|s| sample_chain(&Domain::disc(1.0), &cfg, -7.0, 30, s).unwrap())
            .find(|c| c.loops.len() >= 2)
            .expect("a chain with two links");
        for w in chain.rho.windows(2) {
            assert!(w[1] < w[0] + 0.02, "rho not decreasing: {:?}", chain.rho);
        }
        for &xi in &chain.xi {
            assert!(xi > -0.02, "negative increment {xi}");
        }
    }

    #[test]
    fn coupling_identical_domains_succeeds_immediately() {
        let cfg = quick_cfg();
        let d = Loop::circle(Point::ZERO, 1.0, 256);
        let coupling = couple_nested(&d, &d, 1.0, 10, &cfg, 33).unwrap();
        assert!(coupling.success);
        assert_eq!(coupling.n0, 1);
        assert_eq!(coupling.n0p, 1);
        assert!(!coupling.merged.is_empty());
    }

    #[test]
    fn coupling_disc_vs_square() {
        let cfg = quick_cfg();
        let d = Loop::circle(Point::ZERO, 1.0, 256);
        let sq = Loop::rectangle(pt(-1.0, -1.0), pt(1.0, 1.0));
        let mut successes = 0;
        for seed in 0..5u64 {
            let c = couple_nested(&d, &sq, 0.8, 25, &cfg, seed).unwrap();
            if c.success {
                successes += 1;
                assert!(!c.merged.is_empty());
            }
        }
        assert!(successes >= 4, "only {successes}/5 couplings succeeded");
    }

    #[test]
    fn fullplane_window_has_chain_and_window_loops() {
        let mut cfg = quick_cfg();
        cfg.cutoff_q = 14.0;
        let w = (9..30u64)
            .map(|s| sample_fullplane_window(8.0, 1.0, &cfg, 0.05, s).unwrap())
            .find(|w| !w.chain.is_empty())
            .expect("some window sample has a chain");
        // chain is nested outside-in
        for pair in w.chain.windows(2) {
            let probe = pair[1].vertices()[0];
            assert!(pair[0].surrounds(probe));
        }
        for (nl, &inside) in w.window_loops.iter().zip(&w.contained) {
            if inside {
                for &v in nl.lp.vertices().iter().step_by(16) {
                    assert!(v.norm() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
