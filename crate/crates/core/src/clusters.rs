//! Loop clusters: connected components of the intersection graph, their
//! outer / inner boundaries, and the ordered chain of clusters around a
//! basepoint.
//!
//! Boundaries are extracted from the union of member *curves* (plus thin
//! bridge segments for touching-within-tolerance merges). The outer face
//! of the curve union equals that of the filled hull, and working at curve
//! level keeps inner components correct even when individual members
//! surround the basepoint.

use crate::geom::{Bbox, Loop, Point};
use crate::raster::Raster;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("basepoint is covered by the cluster at raster resolution")]
    BasepointInsideCluster,
    #[error("retained outer boundaries cross; upstream geometry is inconsistent")]
    NestingAmbiguity,
    #[error("boundary extraction failed: {0}")]
    Extraction(&'static str),
}

/// A connected component of intersecting loops.
#[derive(Clone, Debug)]
pub struct Cluster {
    /// sorted indices into the soup's loop list
    pub member_ids: Vec<u32>,
    pub bbox: Bbox,
    /// nearest-point connectors for members merged by tolerance without
    /// crossing; rasterized along with the curves to keep the cluster
    /// connected on the grid
    pub bridges: Vec<(Point, Point)>,
    pub outer: Option<Loop>,
    pub inner_at: Vec<(Point, Loop)>,
}

impl Cluster {
    pub fn inner_for(&self, z: Point) -> Option<&Loop> {
        self.inner_at
            .iter()
            .find(|(p, _)| p.dist(z) == 0.0)
            .map(|(_, l)| l)
    }
}

/// The clusters surrounding a basepoint, ordered outside-in.
#[derive(Clone, Debug)]
pub struct ClusterChain {
    pub clusters: Vec<Cluster>,
    pub basepoint: Point,
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let up = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = up;
            x = up;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        true
    }
}

fn closest_on_segment(z: Point, a: Point, b: Point) -> Point {
    let ab = b - a;
    let l2 = ab.norm_sq();
    if l2 == 0.0 {
        return a;
    }
    let t = ((z - a).dot(ab) / l2).clamp(0.0, 1.0);
    a + ab * t
}

fn pair_tol(touch_tol: f64, touch_ratio: f64, da: f64, db: f64) -> f64 {
    touch_tol.max(touch_ratio * 0.5 * (da + db))
}

fn build_impl(loops: &[Loop], touch_tol: f64, touch_ratio: f64) -> Vec<Cluster> {
    let n = loops.len();
    let mut uf = UnionFind::new(n);
    let bboxes: Vec<Bbox> = loops.iter().map(|l| l.bbox()).collect();
    let diams: Vec<f64> = bboxes.iter().map(|b| b.diag()).collect();
    let grids: Vec<crate::geom::SegmentGrid> = loops
        .iter()
        .map(|l| crate::geom::SegmentGrid::with_max_div(l.edges().collect(), 128.0))
        .collect();
    // edges of the smaller loop against the bigger loop's index
    let pair_hit = |a: usize, b: usize, tol: f64| -> bool {
        let (small, big) = if loops[a].len() <= loops[b].len() { (a, b) } else { (b, a) };
        loops[small]
            .edges()
            .any(|(p, q)| grids[big].segment_within(p, q, tol))
    };
    // nearest witness pair via capped vertex queries (bridges only need to
    // join the loops within the tolerance scale)
    let near_pair = |a: usize, b: usize| -> (f64, Point, Point) {
        let mut best = (f64::INFINITY, Point::ZERO, Point::ZERO);
        for &v in loops[a].vertices() {
            let (d, idx) = grids[b].nearest_capped(v, best.0);
            if d < best.0 {
                let (r, s) = grids[b].segments()[idx as usize];
                best = (d, v, closest_on_segment(v, r, s));
            }
        }
        for &v in loops[b].vertices() {
            let (d, idx) = grids[a].nearest_capped(v, best.0);
            if d < best.0 {
                let (r, s) = grids[a].segments()[idx as usize];
                best = (d, closest_on_segment(v, r, s), v);
            }
        }
        best
    };
    let mut bridges: Vec<(u32, u32, Point, Point)> = Vec::new();

    if n > 0 {
        // uniform grid over bbox centers, cell = median loop diameter
        let mut sorted = diams.clone();
        sorted.sort_by(f64::total_cmp);
        let cell = sorted[n / 2].max(1e-12);
        let mut grid: HashMap<(i32, i32), Vec<u32>> = HashMap::new();
        let cell_range = |b: &Bbox, pad: f64| -> (i32, i32, i32, i32) {
            (
                ((b.min.x - pad) / cell).floor() as i32,
                ((b.max.x + pad) / cell).floor() as i32,
                ((b.min.y - pad) / cell).floor() as i32,
                ((b.max.y + pad) / cell).floor() as i32,
            )
        };
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for k in 0..n {
            let pad = pair_tol(touch_tol, touch_ratio, diams[k], sorted[n - 1]);
            let (i0, i1, j0, j1) = cell_range(&bboxes[k], pad);
            // very large loops would flood the grid; give them a full scan
            let span = (i1 - i0 + 1) as i64 * (j1 - j0 + 1) as i64;
            if span > 16384 {
                for other in 0..k as u32 {
                    pairs.push((other, k as u32));
                }
                continue;
            }
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let slot = grid.entry((i, j)).or_default();
                    for &other in slot.iter() {
                        pairs.push((other, k as u32));
                    }
                    slot.push(k as u32);
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        for (a, b) in pairs {
            let (ia, ib) = (a as usize, b as usize);
            let tol = pair_tol(touch_tol, touch_ratio, diams[ia], diams[ib]);
            if bboxes[ia].dist(&bboxes[ib]) > tol {
                continue;
            }
            if uf.find(a) == uf.find(b) {
                // already together; still record a bridge if they only touch
                if pair_hit(ia, ib, tol) && !pair_hit(ia, ib, 0.0) {
                    let (_, pa, pb) = near_pair(ia, ib);
                    bridges.push((a, b, pa, pb));
                }
                continue;
            }
            if pair_hit(ia, ib, 0.0) {
                uf.union(a, b);
            } else if tol > 0.0 && pair_hit(ia, ib, tol) {
                uf.union(a, b);
                let (_, pa, pb) = near_pair(ia, ib);
                bridges.push((a, b, pa, pb));
            }
        }
    }

    // group by root
    let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
    for k in 0..n as u32 {
        groups.entry(uf.find(k)).or_default().push(k);
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|mut ids| {
            ids.sort_unstable();
            let mut bbox = Bbox::empty();
            for &id in &ids {
                for &v in loops[id as usize].vertices() {
                    bbox.expand(v);
                }
            }
            Cluster {
                member_ids: ids,
                bbox,
                bridges: Vec::new(),
                outer: None,
                inner_at: Vec::new(),
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.bbox
            .area()
            .total_cmp(&a.bbox.area())
            .then(a.member_ids[0].cmp(&b.member_ids[0]))
    });
    // attach bridges to their cluster
    let mut member_to_cluster: HashMap<u32, usize> = HashMap::new();
    for (ci, c) in clusters.iter().enumerate() {
        for &m in &c.member_ids {
            member_to_cluster.insert(m, ci);
        }
    }
    for (a, _b, pa, pb) in bridges {
        let ci = member_to_cluster[&a];
        clusters[ci].bridges.push((pa, pb));
    }
    clusters
}

/// Partition loops into clusters: connected components under crossing or
/// distance `<= touch_tol`. Output sorted by descending bounding-box area.
pub fn build_clusters(loops: &[Loop], touch_tol: f64) -> Vec<Cluster> {
    build_impl(loops, touch_tol, 0.0)
}

/// Like [`build_clusters`], with a per-pair tolerance proportional to the
/// mean of the two loop diameters (compensates raster-resolution touching).
pub fn build_clusters_scaled(loops: &[Loop], touch_ratio: f64) -> Vec<Cluster> {
    build_impl(loops, 0.0, touch_ratio)
}

/// All-pairs reference partition; the oracle for the indexed builder.
/// Deliberately avoids the spatial index and the segment grids: plain
/// quadratic edge-pair tests behind a bounding-box distance reject.
pub fn brute_force_partition(loops: &[Loop], touch_tol: f64) -> Vec<Vec<u32>> {
    let n = loops.len();
    let mut uf = UnionFind::new(n);
    let bboxes: Vec<Bbox> = loops.iter().map(|l| l.bbox()).collect();
    for a in 0..n {
        for b in (a + 1)..n {
            if bboxes[a].dist(&bboxes[b]) > touch_tol {
                continue;
            }
            let hit = loops[a].edges().any(|(p, q)| {
                loops[b]
                    .edges()
                    .any(|(r, s)| crate::geom::segment_dist(p, q, r, s) <= touch_tol)
            });
            if hit {
                uf.union(a as u32, b as u32);
            }
        }
    }
    let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
    for k in 0..n as u32 {
        groups.entry(uf.find(k)).or_default().push(k);
    }
    let mut out: Vec<Vec<u32>> = groups
        .into_values()
        .map(|mut v| {
            v.sort_unstable();
            v
        })
        .collect();
    out.sort_by_key(|v| v[0]);
    out
}

/// Extract the outer boundary of a cluster and the inner boundary around
/// each basepoint it surrounds.
///
/// `raster_h` is the base resolution; inner boundaries are re-extracted on
/// a refined window when the basepoint's free region is much smaller than
/// the cluster. Contours are shifted half a cell toward the curves so both
/// boundary kinds carry the same (centered) resolution bias.
pub fn cluster_boundaries(
    cluster: &Cluster,
    loops: &[Loop],
    basepoints: &[Point],
    raster_h: f64,
) -> Result<Cluster, ClusterError> {
    let mut out = cluster.clone();
    let mark = |raster: &mut Raster| {
        let window = Bbox {
            min: raster.origin,
            max: raster.origin
                + crate::geom::pt(raster.nx as f64 * raster.h, raster.ny as f64 * raster.h),
        };
        for &id in &cluster.member_ids {
            let lp = &loops[id as usize];
            if lp.bbox().overlaps(&window) {
                raster.mark_loop(lp);
            }
        }
        for &(a, b) in &cluster.bridges {
            raster.mark_segment(a, b);
        }
    };

    let mut raster = Raster::new(cluster.bbox, raster_h, 3);
    mark(&mut raster);
    let ext = raster.exterior_mask();
    let region: Vec<bool> = ext.iter().map(|&e| !e).collect();
    let outer = crate::raster::outer_contour(&raster, &region, 0.5 * raster.h)
        .ok_or(ClusterError::Extraction("no outer contour"))?;
    out.outer = Some(outer);

    out.inner_at.clear();
    for &z in basepoints {
        let (i, j) = match raster.cell_of(z) {
            Some(c) => c,
            None => continue, // off-grid basepoint is not surrounded
        };
        if raster.is_blocked(i, j) {
            return Err(ClusterError::BasepointInsideCluster);
        }
        let coarse = raster
            .region_from(z)
            .ok_or(ClusterError::Extraction("region flood failed"))?;
        if coarse.iter().zip(ext.iter()).any(|(&a, &b)| a && b) {
            // the basepoint's component reaches the exterior: not surrounded
            continue;
        }
        // refined window around the free component
        let mut rb = Bbox::empty();
        for jj in 0..raster.ny {
            for ii in 0..raster.nx {
                if coarse[raster.idx(ii, jj)] {
                    rb.expand(raster.cell_center(ii, jj));
                }
            }
        }
        let rb = rb.pad(2.0 * raster.h);
        let fine_h = (rb.diag() / 512.0).min(raster.h).max(raster_h / 64.0);
        let mut fine = Raster::new(rb, fine_h, 3);
        mark(&mut fine);
        let inner_region = match fine.region_from(z) {
            Some(r) => r,
            None => return Err(ClusterError::BasepointInsideCluster),
        };
        let contours = fine.contours(&inner_region, -0.5 * fine.h);
        let mut best: Option<Loop> = None;
        for c in contours {
            if let Ok(lp) = Loop::new_simple(c) {
                if lp.surrounds(z) {
                    let better = match &best {
                        Some(b) => lp.signed_area().abs() > b.signed_area().abs(),
                        None => true,
                    };
                    if better {
                        best = Some(lp);
                    }
                }
            }
        }
        let inner = best.ok_or(ClusterError::Extraction("no inner contour"))?;
        out.inner_at.push((z, inner));
    }
    Ok(out)
}

/// Cheap raster pretest: can the basepoint's free region reach the
/// exterior through cells untouched by the cluster's curves? Coarse
/// blocking is a superset of fine blocking, so `Some(false)` (reaches the
/// exterior) is conclusive at any finer resolution; `Some(true)` needs a
/// fine confirmation and `None` means the basepoint cell was blocked.
pub fn coarse_surround_test(
    cluster: &Cluster,
    loops: &[Loop],
    z: Point,
    div: f64,
) -> Option<bool> {
    let h = cluster.bbox.diag() / div;
    let mut raster = Raster::new(cluster.bbox, h, 3);
    for &id in &cluster.member_ids {
        raster.mark_loop(&loops[id as usize]);
    }
    for &(a, b) in &cluster.bridges {
        raster.mark_segment(a, b);
    }
    let (i, j) = raster.cell_of(z)?;
    if raster.is_blocked(i, j) {
        return None;
    }
    let ext = raster.exterior_mask();
    let region = raster.region_from(z)?;
    let escapes = region.iter().zip(ext.iter()).any(|(&a, &b)| a && b);
    Some(!escapes)
}

/// Filter clusters whose outer boundary surrounds `z0` and order them by
/// strict nesting, outside-in.
pub fn chain_around(clusters: Vec<Cluster>, z0: Point) -> Result<ClusterChain, ClusterError> {
    let mut kept: Vec<Cluster> = clusters
        .into_iter()
        .filter(|c| {
            c.outer.as_ref().map_or(false, |o| o.surrounds(z0)) && c.inner_for(z0).is_some()
        })
        .collect();
    kept.sort_by(|a, b| {
        b.outer
            .as_ref()
            .unwrap()
            .signed_area()
            .abs()
            .total_cmp(&a.outer.as_ref().unwrap().signed_area().abs())
    });
    for w in kept.windows(2) {
        let big = w[0].outer.as_ref().unwrap();
        let small = w[1].outer.as_ref().unwrap();
        // strict nesting: a sample of the smaller boundary must lie inside
        // the bigger one
        let step = (small.len() / 16).max(1);
        let mut inside = 0usize;
        let mut total = 0usize;
        for &v in small.vertices().iter().step_by(step) {
            total += 1;
            if big.surrounds(v) {
                inside += 1;
            }
        }
        if inside != total {
            return Err(ClusterError::NestingAmbiguity);
        }
    }
    Ok(ClusterChain {
        clusters: kept,
        basepoint: z0,
    })
}

/// Count outer / inner boundaries fully contained in the annulus
/// `r_in < |z| < r_out`; the alternation of the chain forces the counts to
/// differ by at most one.
pub fn boundary_count_invariant(
    chain: &ClusterChain,
    r_in: f64,
    r_out: f64,
) -> (usize, usize, bool) {
    let contained = |lp: &Loop| -> bool {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &v in lp.vertices() {
            let r = v.norm();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        lo > r_in && hi < r_out
    };
    let mut n_e = 0usize;
    let mut n_i = 0usize;
    for c in &chain.clusters {
        if let Some(o) = &c.outer {
            if contained(o) {
                n_e += 1;
            }
        }
        if let Some(i) = c.inner_for(chain.basepoint) {
            if contained(i) {
                n_i += 1;
            }
        }
    }
    let ok = n_e.abs_diff(n_i) <= 1;
    (n_e, n_i, ok)
}
