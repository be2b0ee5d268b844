//! Poisson sampling of the Brownian loop soup at intensity `c`, and the
//! derived soup of simple loops obtained by replacing each Brownian loop
//! with its outer boundary.
//!
//! The loop measure is realized with root-and-duration density
//! `d^2z dt / (2 pi t^2)` on durations `[t_min, t_max]`, each loop being a
//! Brownian bridge of its duration. Counting oracles in the tests are
//! stated against this normalization.

use crate::geom::{pt, Bbox, Loop, Point, SegmentGrid};
use crate::raster::{outer_contour, Raster};
use crate::rng;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoupError {
    #[error("invalid soup config: {0}")]
    InvalidConfig(&'static str),
    #[error("raster too coarse: {cells_across:.1} cells across the loop (need >= 8)")]
    ResolutionTooCoarse { cells_across: f64 },
    #[error("boundary extraction produced no contour")]
    EmptyContour,
}

/// Intensity `c(kappa) = (3 kappa - 8)(6 - kappa) / (2 kappa)`; the
/// standard correspondence, adopted as a labeled convention.
pub fn c_of_kappa(kappa: f64) -> f64 {
    (3.0 * kappa - 8.0) * (6.0 - kappa) / (2.0 * kappa)
}

/// Inverse of [`c_of_kappa`] on the branch `kappa in (8/3, 4]`.
pub fn kappa_of_c(c: f64) -> f64 {
    let disc = (26.0 - 2.0 * c) * (26.0 - 2.0 * c) - 576.0;
    (26.0 - 2.0 * c - disc.max(0.0).sqrt()) / 6.0
}

/// Sampling domain for soups.
#[derive(Clone, Debug)]
pub enum Domain {
    Disc { center: Point, radius: f64 },
    Region(Loop),
}

impl Domain {
    pub fn disc(radius: f64) -> Domain {
        Domain::Disc {
            center: Point::ZERO,
            radius,
        }
    }

    pub fn bbox(&self) -> Bbox {
        match self {
            Domain::Disc { center, radius } => Bbox {
                min: *center - pt(*radius, *radius),
                max: *center + pt(*radius, *radius),
            },
            Domain::Region(lp) => lp.bbox(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Disc { radius, .. } => 2.0 * radius,
            Domain::Region(lp) => lp.diameter(),
        }
    }

    /// Polyline boundary (for kernels and estimators).
    pub fn boundary_loop(&self, n: usize) -> Loop {
        match self {
            Domain::Disc { center, radius } => Loop::circle(*center, *radius, n),
            Domain::Region(lp) => lp.clone(),
        }
    }

    pub fn contains_point(&self, p: Point) -> bool {
        match self {
            Domain::Disc { center, radius } => center.dist(p) <= *radius,
            Domain::Region(lp) => lp.surrounds(p),
        }
    }
}

/// Cached containment test (pre-built boundary index for region domains).
pub struct DomainTest<'a> {
    domain: &'a Domain,
    grid: Option<SegmentGrid>,
}

impl<'a> DomainTest<'a> {
    pub fn new(domain: &'a Domain) -> DomainTest<'a> {
        let grid = match domain {
            Domain::Region(lp) => Some(SegmentGrid::with_max_div(lp.edges().collect(), 256.0)),
            Domain::Disc { .. } => None,
        };
        DomainTest { domain, grid }
    }

    /// True when the whole polyline stays inside the domain.
    pub fn contains_loop(&self, lp: &Loop) -> bool {
        match self.domain {
            Domain::Disc { center, radius } => lp
                .vertices()
                .iter()
                .all(|&v| center.dist(v) <= *radius),
            Domain::Region(region) => {
                if !region.surrounds(lp.vertices()[0]) {
                    return false;
                }
                let grid = self.grid.as_ref().expect("region grid");
                for (a, b) in lp.edges() {
                    if grid.segment_within(a, b, 0.0) {
                        return false;
                    }
                }
                true
            }
        }
    }
}

/// Resolution rule for bridge sampling: `n(t) = clamp(base sqrt(t/t_min),
/// min_steps, max_steps)`.
#[derive(Clone, Copy, Debug)]
pub struct StepsRule {
    pub base: usize,
    pub min_steps: usize,
    pub max_steps: usize,
}

impl Default for StepsRule {
    fn default() -> StepsRule {
        StepsRule {
            base: 32,
            min_steps: 16,
            max_steps: 2048,
        }
    }
}

impl StepsRule {
    pub fn steps_for(&self, t: f64, t_min: f64) -> usize {
        let n = (self.base as f64 * (t / t_min).sqrt()).ceil() as usize;
        n.clamp(self.min_steps.max(16), self.max_steps)
    }
}

/// Configuration of a loop soup sample.
#[derive(Clone, Debug)]
pub struct SoupConfig {
    pub c: f64,
    pub kappa: f64,
    pub domain: Domain,
    pub t_min: f64,
    pub t_max: f64,
    pub steps: StepsRule,
    pub seed: u64,
    /// per-loop boundary raster: h = diameter x raster_ratio
    pub raster_ratio: f64,
    /// per-pair touch tolerance for clustering: (diam_a + diam_b)/2 x touch_ratio
    pub touch_ratio: f64,
}

impl SoupConfig {
    pub fn new(c: f64, domain: Domain, t_min: f64, t_max: f64, seed: u64) -> Result<SoupConfig, SoupError> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(SoupError::InvalidConfig("c must be in (0, 1]"));
        }
        if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return Err(SoupError::InvalidConfig("need 0 < t_min < t_max < inf"));
        }
        Ok(SoupConfig {
            c,
            kappa: kappa_of_c(c),
            domain,
            t_min,
            t_max,
            steps: StepsRule::default(),
            seed,
            raster_ratio: 1.0 / 64.0,
            touch_ratio: 1.0 / 512.0,
        })
    }

    /// Domain-relative cutoffs: `t_min = (diam/q)^2`, `t_max = diam^2`.
    /// Keeps the construction exactly scale covariant in law.
    pub fn relative(c: f64, domain: Domain, q: f64, seed: u64) -> Result<SoupConfig, SoupError> {
        let d = domain.diameter();
        SoupConfig::new(c, domain, (d / q) * (d / q), d * d, seed)
    }

    pub fn with_seed(&self, seed: u64) -> SoupConfig {
        let mut c = self.clone();
        c.seed = seed;
        c
    }

    pub fn with_domain(&self, domain: Domain) -> SoupConfig {
        let mut c = self.clone();
        c.domain = domain;
        c
    }

    /// Domain swap with cutoffs rescaled to the new domain size.
    pub fn rescaled_to(&self, domain: Domain) -> SoupConfig {
        let r = domain.diameter() / self.domain.diameter();
        let mut c = self.clone();
        c.t_min *= r * r;
        c.t_max *= r * r;
        c.domain = domain;
        c
    }
}

/// A Poisson sample of loops with its generating configuration.
#[derive(Clone, Debug)]
pub struct LoopSoupSample {
    pub loops: Vec<Loop>,
    pub config: SoupConfig,
    /// Poisson proposals before the stay-in-domain restriction
    pub n_proposed: usize,
    pub n_rejected: usize,
}

/// Mean number of proposals: `c |bbox| (1/t_min - 1/t_max) / (2 pi)`.
pub fn expected_proposals(cfg: &SoupConfig) -> f64 {
    cfg.c * cfg.domain.bbox().area() * (1.0 / cfg.t_min - 1.0 / cfg.t_max)
        / (2.0 * core::f64::consts::PI)
}

/// Discrete Brownian bridge of duration `t` rooted at `root`:
/// start = end = root exactly, `n_steps` Gaussian increments conditioned
/// to return by the standard bridge construction.
pub fn sample_brownian_loop<R: Rng>(t: f64, root: Point, n_steps: usize, rg: &mut R) -> Loop {
    let n = n_steps.max(16);
    let sd = (t / n as f64).sqrt();
    let mut w = Vec::with_capacity(n + 1);
    let mut acc = Point::ZERO;
    w.push(acc);
    for _ in 0..n {
        let gx: f64 = StandardNormal.sample(rg);
        let gy: f64 = StandardNormal.sample(rg);
        acc += pt(gx * sd, gy * sd);
        w.push(acc);
    }
    let last = *w.last().unwrap();
    let pts: Vec<Point> = (0..n)
        .map(|k| {
            let frac = k as f64 / n as f64;
            root + w[k] - last * frac
        })
        .collect();
    Loop::new_raw(pts).expect("bridge produces a valid loop")
}

/// Sample a Brownian loop soup: Poisson number of bridges with roots
/// uniform over the domain bounding box and durations with density
/// `1/t^2` on `[t_min, t_max]`, keeping those inside the domain.
///
/// Loop `j` draws from substream `(seed, j+1)`; the Poisson count from
/// substream `(seed, 0)`. Identical seeds give bit-identical samples.
pub fn sample_loop_soup(cfg: &SoupConfig) -> LoopSoupSample {
    let bbox = cfg.domain.bbox();
    let lambda = expected_proposals(cfg);
    let mut count_rng = rng::substream(cfg.seed, 0);
    let n_proposed = if lambda > 0.0 {
        Poisson::new(lambda).map_or(0, |p| p.sample(&mut count_rng) as usize)
    } else {
        0
    };
    let test = DomainTest::new(&cfg.domain);
    let mut loops = Vec::new();
    let inv_span = 1.0 / cfg.t_min - 1.0 / cfg.t_max;
    for j in 0..n_proposed {
        let mut rg = rng::substream(cfg.seed, (j + 1) as u64);
        let root = pt(
            rg.gen_range(bbox.min.x..bbox.max.x),
            rg.gen_range(bbox.min.y..bbox.max.y),
        );
        let u: f64 = rg.gen();
        let t = 1.0 / (1.0 / cfg.t_min - u * inv_span);
        let n_steps = cfg.steps.steps_for(t, cfg.t_min);
        let lp = sample_brownian_loop(t, root, n_steps, &mut rg);
        if test.contains_loop(&lp) {
            loops.push(lp);
        }
    }
    let n_rejected = n_proposed - loops.len();
    LoopSoupSample {
        loops,
        config: cfg.clone(),
        n_proposed,
        n_rejected,
    }
}

/// Outer boundary of a loop's trace: rasterize at spacing `raster_h` on a
/// grid anchored to the loop, flood from outside, and extract the contour
/// of the non-exterior face by marching squares. The result is a simple
/// loop containing the trace.
pub fn sle83_boundary(lp: &Loop, raster_h: f64) -> Result<Loop, SoupError> {
    let diam = lp.diameter();
    let cells_across = diam / raster_h;
    if cells_across < 8.0 {
        return Err(SoupError::ResolutionTooCoarse { cells_across });
    }
    let mut raster = Raster::new(lp.bbox(), raster_h, 3);
    raster.mark_loop(lp);
    let ext = raster.exterior_mask();
    let region: Vec<bool> = ext.iter().map(|&e| !e).collect();
    outer_contour(&raster, &region, 0.0).ok_or(SoupError::EmptyContour)
}

/// Per-loop boundary raster spacing under a config.
pub fn boundary_h(cfg: &SoupConfig, lp: &Loop) -> f64 {
    lp.diameter() * cfg.raster_ratio
}

/// Sample an SLE(8/3) loop soup: Brownian soup, each loop replaced by its
/// outer boundary, restriction applied to the boundaries.
pub fn sample_sle83_soup(cfg: &SoupConfig) -> Result<LoopSoupSample, SoupError> {
    let bbox = cfg.domain.bbox();
    let lambda = expected_proposals(cfg);
    let mut count_rng = rng::substream(cfg.seed, 0);
    let n_proposed = if lambda > 0.0 {
        Poisson::new(lambda).map_or(0, |p| p.sample(&mut count_rng) as usize)
    } else {
        0
    };
    let test = DomainTest::new(&cfg.domain);
    let inv_span = 1.0 / cfg.t_min - 1.0 / cfg.t_max;
    let mut loops = Vec::new();
    let mut n_kept = 0usize;
    for j in 0..n_proposed {
        let mut rg = rng::substream(cfg.seed, (j + 1) as u64);
        let root = pt(
            rg.gen_range(bbox.min.x..bbox.max.x),
            rg.gen_range(bbox.min.y..bbox.max.y),
        );
        let u: f64 = rg.gen();
        let t = 1.0 / (1.0 / cfg.t_min - u * inv_span);
        let n_steps = cfg.steps.steps_for(t, cfg.t_min);
        let beta = sample_brownian_loop(t, root, n_steps, &mut rg);
        // the outer boundary stays in the domain iff the trace does, so a
        // trace-level prefilter skips pointless extractions
        if !test.contains_loop(&beta) {
            continue;
        }
        let eta = sle83_boundary(&beta, boundary_h(cfg, &beta))?;
        if test.contains_loop(&eta) {
            loops.push(eta);
            n_kept += 1;
        }
    }
    Ok(LoopSoupSample {
        loops,
        config: cfg.clone(),
        n_proposed,
        n_rejected: n_proposed - n_kept,
    })
}
