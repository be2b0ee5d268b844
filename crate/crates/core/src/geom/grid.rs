use super::point::{pt, Bbox, Point};
use super::polyline::{Loop, PathTrace};

/// Uniform bucket grid over a set of segments, for exact nearest-distance
/// queries. Cells hold segment indices in CSR layout.
pub struct SegmentGrid {
    segs: Vec<(Point, Point)>,
    bbox: Bbox,
    nx: usize,
    ny: usize,
    offsets: Vec<u32>,
    items: Vec<u32>,
    /// Chebyshev cell distance to the nearest occupied cell; lets queries
    /// jump straight to the first ring that can contain a segment.
    cheb: Vec<u16>,
}

impl SegmentGrid {
    pub fn from_loop(lp: &Loop) -> SegmentGrid {
        SegmentGrid::new(lp.edges().collect())
    }

    pub fn from_trace(tr: &PathTrace) -> SegmentGrid {
        SegmentGrid::new(tr.edges().collect())
    }

    pub fn new(segs: Vec<(Point, Point)>) -> SegmentGrid {
        SegmentGrid::with_max_div(segs, 512.0)
    }

    /// Like [`SegmentGrid::new`] with a cap on grid cells per side; coarser
    /// grids build faster and stay exact, trading a few extra distance
    /// evaluations per query.
    pub fn with_max_div(segs: Vec<(Point, Point)>, max_div: f64) -> SegmentGrid {
        assert!(!segs.is_empty());
        let mut bbox = Bbox::empty();
        let mut total_len = 0.0;
        for &(a, b) in &segs {
            bbox.expand(a);
            bbox.expand(b);
            total_len += a.dist(b);
        }
        let avg_edge = total_len / segs.len() as f64;
        let diag = bbox.diag().max(1e-300);
        let cs = avg_edge.max(diag / max_div);
        let bbox = bbox.pad(1e-9 * diag + 1e-300);
        let nx = ((bbox.width() / cs).ceil() as usize).clamp(1, 1024);
        let ny = ((bbox.height() / cs).ceil() as usize).clamp(1, 1024);
        let csx = bbox.width() / nx as f64;
        let csy = bbox.height() / ny as f64;


        let cell_of = |p: Point| -> (usize, usize) {
            let i = (((p.x - bbox.min.x) / csx) as isize).clamp(0, nx as isize - 1) as usize;
            let j = (((p.y - bbox.min.y) / csy) as isize).clamp(0, ny as isize - 1) as usize;
            (i, j)
        };

        // count then fill (CSR)
        let mut counts = vec![0u32; nx * ny];
        let mut spans: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(segs.len());
        for &(a, b) in &segs {
            let (i0, j0) = cell_of(a);
            let (i1, j1) = cell_of(b);
            let (i0, i1) = (i0.min(i1), i0.max(i1));
            let (j0, j1) = (j0.min(j1), j0.max(j1));
            spans.push((i0, i1, j0, j1));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i] += 1;
                }
            }
        }
        let mut offsets = vec![0u32; nx * ny + 1];
        for k in 0..nx * ny {
            offsets[k + 1] = offsets[k] + counts[k];
        }
        let mut cursor = offsets.clone();
        let mut items = vec![0u32; offsets[nx * ny] as usize];
        for (s, &(i0, i1, j0, j1)) in spans.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * nx + i;
                    items[cursor[c] as usize] = s as u32;
                    cursor[c] += 1;
                }
            }
        }

        // multi-source 8-neighbor BFS: Chebyshev distance to occupied cells
        let mut cheb = vec![u16::MAX; nx * ny];
        let mut frontier: Vec<u32> = Vec::new();
        for k in 0..nx * ny {
            if offsets[k + 1] > offsets[k] {
                cheb[k] = 0;
                frontier.push(k as u32);
            }
        }
        let mut next: Vec<u32> = Vec::new();
        let mut level: u16 = 0;
        while !frontier.is_empty() {
            level += 1;
            next.clear();
            for &k in &frontier {
                let k = k as usize;
                let (i, j) = ((k % nx) as isize, (k / nx) as isize);
                for dj in -1..=1isize {
                    for di in -1..=1isize {
                        let (ni, nj) = (i + di, j + dj);
                        if ni < 0 || nj < 0 || ni >= nx as isize || nj >= ny as isize {
                            continue;
                        }
                        let nk = nj as usize * nx + ni as usize;
                        if cheb[nk] == u16::MAX {
                            cheb[nk] = level;
                            next.push(nk as u32);
                        }
                    }
                }
            }
            core::mem::swap(&mut frontier, &mut next);
        }

        SegmentGrid {
            segs,
            bbox,
            nx,
            ny,
            offsets,
            items,
            cheb,
        }
    }

    pub fn segments(&self) -> &[(Point, Point)] {
        &self.segs
    }

    fn cell_rect(&self, i: usize, j: usize) -> Bbox {
        let w = self.bbox.width() / self.nx as f64;
        let h = self.bbox.height() / self.ny as f64;
        Bbox {
            min: pt(self.bbox.min.x + i as f64 * w, self.bbox.min.y + j as f64 * h),
            max: pt(
                self.bbox.min.x + (i + 1) as f64 * w,
                self.bbox.min.y + (j + 1) as f64 * h,
            ),
        }
    }

    fn rect_dist(b: &Bbox, p: Point) -> f64 {
        let dx = (b.min.x - p.x).max(p.x - b.max.x).max(0.0);
        let dy = (b.min.y - p.y).max(p.y - b.max.y).max(0.0);
        dx.hypot(dy)
    }

    fn home_cell(&self, p: Point) -> (isize, isize) {
        let w = self.bbox.width() / self.nx as f64;
        let h = self.bbox.height() / self.ny as f64;
        (
            (((p.x - self.bbox.min.x) / w) as isize).clamp(0, self.nx as isize - 1),
            (((p.y - self.bbox.min.y) / h) as isize).clamp(0, self.ny as isize - 1),
        )
    }

    /// Fast valid step radius for walk-on-spheres: a positive lower bound
    /// on the distance to the segment set, exact when the point is within
    /// two cells of it. Jumping by a lower bound keeps the walk correct.
    pub fn step_bound(&self, p: Point) -> f64 {
        let (ci, cj) = self.home_cell(p);
        let k = self.cheb[cj as usize * self.nx + ci as usize];
        if k >= 2 {
            let w = self.bbox.width() / self.nx as f64;
            let h = self.bbox.height() / self.ny as f64;
            (k - 1) as f64 * w.min(h)
        } else {
            self.nearest_capped(p, f64::INFINITY).0
        }
    }

    /// Exact minimum distance from `p` to the segment set, with the index
    /// of the nearest segment. `cap`: stop early once the bound proves the
    /// distance exceeds it (the returned distance is then only a lower
    /// bound, clamped to values > cap).
    pub fn nearest_capped(&self, p: Point, cap: f64) -> (f64, u32) {
        let (ci, cj) = self.home_cell(p);
        let mut best = f64::INFINITY;
        let mut best_idx = 0u32;
        let max_ring = self.nx.max(self.ny);
        // rings closer than the Chebyshev field value are empty
        let k0 = self.cheb[cj as usize * self.nx + ci as usize] as usize;
        for k in k0..=max_ring.max(k0) {
            let mut ring_min = f64::INFINITY;
            let scan = |i: isize, j: isize, ring_min: &mut f64, best: &mut f64, best_idx: &mut u32| {
                if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                    return;
                }
                let (iu, ju) = (i as usize, j as usize);
                let d_cell = Self::rect_dist(&self.cell_rect(iu, ju), p);
                *ring_min = ring_min.min(d_cell);
                if d_cell >= *best || d_cell > cap {
                    return;
                }
                let c = ju * self.nx + iu;
                for &s in &self.items[self.offsets[c] as usize..self.offsets[c + 1] as usize] {
                    let (a, b) = self.segs[s as usize];
                    let d = p.dist_to_segment(a, b);
                    if d < *best {
                        *best = d;
                        *best_idx = s;
                    }
                }
            };
            if k == 0 {
                scan(ci, cj, &mut ring_min, &mut best, &mut best_idx);
            } else {
                let kk = k as isize;
                for i in (ci - kk)..=(ci + kk) {
                    scan(i, cj - kk, &mut ring_min, &mut best, &mut best_idx);
                    scan(i, cj + kk, &mut ring_min, &mut best, &mut best_idx);
                }
                for j in (cj - kk + 1)..=(cj + kk - 1) {
                    scan(ci - kk, j, &mut ring_min, &mut best, &mut best_idx);
                    scan(ci + kk, j, &mut ring_min, &mut best, &mut best_idx);
                }
            }
            if ring_min > best || ring_min > cap {
                break;
            }
        }
        (best, best_idx)
    }

    /// Exact minimum distance from `p` to the segment set.
    pub fn dist(&self, p: Point) -> f64 {
        self.nearest_capped(p, f64::INFINITY).0
    }

    /// Exact nearest segment (distance, index).
    pub fn nearest(&self, p: Point) -> (f64, u32) {
        self.nearest_capped(p, f64::INFINITY)
    }

    /// Whether any indexed segment comes within `tol` of segment `[p, q]`.
    pub fn segment_within(&self, p: Point, q: Point, tol: f64) -> bool {
        let mut qb = Bbox::empty();
        qb.expand(p);
        qb.expand(q);
        let qb = qb.pad(tol);
        if !qb.overlaps(&self.bbox) {
            return false;
        }
        let (i0, j0) = self.home_cell(qb.min);
        let (i1, j1) = self.home_cell(qb.max);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let c = j as usize * self.nx + i as usize;
                for &s in &self.items[self.offsets[c] as usize..self.offsets[c + 1] as usize] {
                    let (a, b) = self.segs[s as usize];
                    if super::intersect::segment_dist(p, q, a, b) <= tol {
                        return true;
                    }
                }
            }
        }
        false
    }
}
