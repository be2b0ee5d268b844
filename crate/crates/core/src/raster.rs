//! Occupancy grids: supercover segment marking, scanline polygon fill,
//! flood fill, and marching-squares contour extraction with subpixel
//! midpoints. Cluster boundary extraction and the outer-boundary map for
//! Brownian loops are built from these pieces.

use crate::geom::{pt, Bbox, Loop, Point};
use std::collections::HashMap;

/// Binary occupancy grid. Cell `(i, j)` has center
/// `origin + ((i+0.5) h, (j+0.5) h)`.
pub struct Raster {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    blocked: Vec<bool>,
}

impl Raster {
    /// Grid covering `bbox` at spacing `h` with `margin` extra cells on
    /// every side. Total cell count is capped; `h` is enlarged if needed.
    pub fn new(bbox: Bbox, h: f64, margin: usize) -> Raster {
        assert!(h > 0.0 && h.is_finite());
        // irrational sub-cell stagger keeps input vertices off lattice lines
        const STAGGER_X: f64 = 0.318_309_886_183_790_7;
        const STAGGER_Y: f64 = 0.271_828_182_845_904_5;
        let mut h = h;
        let cap = 1 << 24;
        loop {
            let nx = (bbox.width() / h).ceil() as usize + 2 * margin + 2;
            let ny = (bbox.height() / h).ceil() as usize + 2 * margin + 2;
            if nx * ny <= cap {
                let origin = bbox.min - pt((margin as f64 + STAGGER_X) * h, (margin as f64 + STAGGER_Y) * h);
                return Raster {
                    origin,
                    h,
                    nx,
                    ny,
                    blocked: vec![false; nx * ny],
                };
            }
            h *= 2.0;
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        self.origin + pt((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Cell containing `p`, or None when `p` is off-grid.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let i = ((p.x - self.origin.x) / self.h).floor();
        let j = ((p.y - self.origin.y) / self.h).floor();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            None
        } else {
            Some((i as usize, j as usize))
        }
    }

    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.blocked[self.idx(i, j)]
    }

    pub fn block(&mut self, i: usize, j: usize) {
        let k = self.idx(i, j);
        self.blocked[k] = true;
    }

    pub fn blocked_mask(&self) -> &[bool] {
        &self.blocked
    }

    /// Mark every cell whose closed square the segment touches
    /// (supercover), so a 4-connected flood cannot leak across it.
    pub fn mark_segment(&mut self, a: Point, b: Point) {
        let to_grid = |p: Point| (p - self.origin) / self.h;
        let ga = to_grid(a);
        let gb = to_grid(b);
        let clamp_i = |v: f64, n: usize| (v.floor() as isize).clamp(0, n as isize - 1) as usize;
        let (mut i, mut j) = (clamp_i(ga.x, self.nx), clamp_i(ga.y, self.ny));
        let (ie, je) = (clamp_i(gb.x, self.nx), clamp_i(gb.y, self.ny));
        self.block(i, j);
        let d = gb - ga;
        let step_x: isize = if d.x > 0.0 { 1 } else { -1 };
        let step_y: isize = if d.y > 0.0 { 1 } else { -1 };
        let next_t = |coord: f64, cell: usize, step: isize, dv: f64| -> f64 {
            if dv == 0.0 {
                return f64::INFINITY;
            }
            let boundary = if step > 0 { cell as f64 + 1.0 } else { cell as f64 };
            (boundary - coord) / dv
        };
        let mut tx = next_t(ga.x, i, step_x, d.x);
        let mut ty = next_t(ga.y, j, step_y, d.y);
        let dtx = if d.x != 0.0 { 1.0 / d.x.abs() } else { f64::INFINITY };
        let dty = if d.y != 0.0 { 1.0 / d.y.abs() } else { f64::INFINITY };
        let mut guard = 0usize;
        while (i, j) != (ie, je)
            && tx.min(ty) <= 1.0 + 1e-12
            && guard < 4 * (self.nx + self.ny) + 8
        {
            guard += 1;
            if (tx - ty).abs() < 1e-12 && tx <= 1.0 + 1e-12 {
                // corner crossing: mark both side cells so the wall stays closed
                let ni = (i as isize + step_x).clamp(0, self.nx as isize - 1) as usize;
                let nj = (j as isize + step_y).clamp(0, self.ny as isize - 1) as usize;
                self.block(ni, j);
                self.block(i, nj);
                i = ni;
                j = nj;
                tx += dtx;
                ty += dty;
            } else if tx < ty {
                i = (i as isize + step_x).clamp(0, self.nx as isize - 1) as usize;
                tx += dtx;
            } else {
                j = (j as isize + step_y).clamp(0, self.ny as isize - 1) as usize;
                ty += dty;
            }
            self.block(i, j);
        }
        self.block(ie, je);
    }

    /// Mark all edges of a loop.
    pub fn mark_loop(&mut self, lp: &Loop) {
        for (a, b) in lp.edges() {
            self.mark_segment(a, b);
        }
    }

    /// Mark a trace (open or closed polyline) given by its vertices.
    pub fn mark_polyline(&mut self, pts: &[Point]) {
        for w in pts.windows(2) {
            self.mark_segment(w[0], w[1]);
        }
    }

    /// Block the interior of a simple loop (even-odd scanline rule on cell
    /// centers) together with its boundary cells.
    pub fn fill_simple_loop(&mut self, lp: &Loop) {
        self.mark_loop(lp);
        let bbox = lp.bbox();
        let j0 = self.cell_of(pt(bbox.center().x, bbox.min.y)).map_or(0, |c| c.1);
        let j1 = self
            .cell_of(pt(bbox.center().x, bbox.max.y))
            .map_or(self.ny - 1, |c| c.1);
        let verts = lp.vertices();
        let n = verts.len();
        let mut xs: Vec<f64> = Vec::new();
        for j in j0..=j1 {
            let y = self.origin.y + (j as f64 + 0.5) * self.h;
            xs.clear();
            for k in 0..n {
                let a = verts[k];
                let b = verts[(k + 1) % n];
                if (a.y <= y && b.y > y) || (b.y <= y && a.y > y) {
                    xs.push(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks(2) {
                if pair.len() < 2 {
                    break;
                }
                let lo = ((pair[0] - self.origin.x) / self.h - 0.5).ceil().max(0.0) as usize;
                let hi = ((pair[1] - self.origin.x) / self.h - 0.5).floor();
                if hi < 0.0 {
                    continue;
                }
                let hi = (hi as usize).min(self.nx - 1);
                for i in lo..=hi.min(self.nx - 1) {
                    self.block(i, j);
                }
            }
        }
    }

    /// Cells reachable from the grid border without entering blocked cells
    /// (4-connected).
    pub fn exterior_mask(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nx * self.ny];
        let mut queue: Vec<u32> = Vec::new();
        for i in 0..self.nx {
            for j in [0, self.ny - 1] {
                let k = self.idx(i, j);
                if !seen[k] && !self.blocked[k] {
                    seen[k] = true;
                    queue.push(k as u32);
                }
            }
        }
        for j in 0..self.ny {
            for i in [0, self.nx - 1] {
                let k = self.idx(i, j);
                if !seen[k] && !self.blocked[k] {
                    seen[k] = true;
                    queue.push(k as u32);
                }
            }
        }
        self.flood(&mut seen, queue);
        seen
    }

    /// Cells 4-connected to the cell containing `p` through free cells.
    /// None when `p` is off grid or its cell is blocked.
    pub fn region_from(&self, p: Point) -> Option<Vec<bool>> {
        let (i, j) = self.cell_of(p)?;
        if self.is_blocked(i, j) {
            return None;
        }
        let mut seen = vec![false; self.nx * self.ny];
        let k = self.idx(i, j);
        seen[k] = true;
        self.flood(&mut seen, vec![k as u32]);
        Some(seen)
    }

    fn flood(&self, seen: &mut [bool], mut queue: Vec<u32>) {
        while let Some(k) = queue.pop() {
            let k = k as usize;
            let (i, j) = (k % self.nx, k / self.nx);
            let try_push = |ni: usize, nj: usize, queue: &mut Vec<u32>, seen: &mut [bool]| {
                let nk = nj * self.nx + ni;
                if !seen[nk] && !self.blocked[nk] {
                    seen[nk] = true;
                    queue.push(nk as u32);
                }
            };
            if i > 0 {
                try_push(i - 1, j, &mut queue, seen);
            }
            if i + 1 < self.nx {
                try_push(i + 1, j, &mut queue, seen);
            }
            if j > 0 {
                try_push(i, j - 1, &mut queue, seen);
            }
            if j + 1 < self.ny {
                try_push(i, j + 1, &mut queue, seen);
            }
        }
    }

    /// Marching squares on a boolean region mask (true = region). Returns
    /// closed contours with the region on the left; vertices sit at dual
    /// edge midpoints, shifted by `shift` along the local left normal
    /// (toward the region). The region must not touch the grid border.
    pub fn contours(&self, region: &[bool], shift: f64) -> Vec<Vec<Point>> {
        #[derive(Clone, Copy)]
        struct Seg {
            to: (i32, i32),
            used: bool,
        }
        let mut segs: Vec<Seg> = Vec::new();
        let mut starts: Vec<(i32, i32)> = Vec::new();
        let mut by_from: HashMap<(i32, i32), u32> = HashMap::new();

        for j in 0..self.ny - 1 {
            for i in 0..self.nx - 1 {
                let bl = region[self.idx(i, j)] as u8;
                let br = region[self.idx(i + 1, j)] as u8;
                let tr = region[self.idx(i + 1, j + 1)] as u8;
                let tl = region[self.idx(i, j + 1)] as u8;
                let case = bl | (br << 1) | (tr << 2) | (tl << 3);
                if case == 0 || case == 15 {
                    continue;
                }
                let ii = i as i32;
                let jj = j as i32;
                let s = (2 * ii + 2, 2 * jj + 1);
                let e = (2 * ii + 3, 2 * jj + 2);
                let n = (2 * ii + 2, 2 * jj + 3);
                let w = (2 * ii + 1, 2 * jj + 2);
                let emit: &[((i32, i32), (i32, i32))] = match case {
                    1 => &[(s, w)],
                    2 => &[(e, s)],
                    3 => &[(e, w)],
                    4 => &[(n, e)],
                    5 => &[(n, w), (s, e)],
                    6 => &[(n, s)],
                    7 => &[(n, w)],
                    8 => &[(w, n)],
                    9 => &[(s, n)],
                    10 => &[(w, s), (e, n)],
                    11 => &[(e, n)],
                    12 => &[(w, e)],
                    13 => &[(s, e)],
                    14 => &[(w, s)],
                    _ => &[],
                };
                for &(f, t) in emit {
                    by_from.insert(f, segs.len() as u32);
                    starts.push(f);
                    segs.push(Seg { to: t, used: false });
                }
            }
        }

        let key_to_point = |k: (i32, i32)| -> Point {
            self.origin + pt(k.0 as f64 * 0.5 * self.h, k.1 as f64 * 0.5 * self.h)
        };

        let mut out = Vec::new();
        for start in 0..segs.len() {
            if segs[start].used {
                continue;
            }
            let mut chain: Vec<(i32, i32)> = Vec::new();
            let mut cur = start as u32;
            loop {
                if segs[cur as usize].used {
                    break;
                }
                segs[cur as usize].used = true;
                chain.push(starts[cur as usize]);
                match by_from.get(&segs[cur as usize].to) {
                    Some(&nxt) => cur = nxt,
                    None => break,
                }
                if cur as usize == start {
                    break;
                }
            }
            if chain.len() >= 3 {
                let mut pts: Vec<Point> = chain.iter().map(|&k| key_to_point(k)).collect();
                if shift != 0.0 {
                    pts = shift_along_left_normal(&pts, shift);
                }
                out.push(pts);
            }
        }
        out
    }
}

/// Move contour vertices along the local left normal (the region side for
/// region-on-the-left contours).
fn shift_along_left_normal(pts: &[Point], shift: f64) -> Vec<Point> {
    let n = pts.len();
    (0..n)
        .map(|k| {
            let prev = pts[(k + n - 1) % n];
            let next = pts[(k + 1) % n];
            let d = next - prev;
            let len = d.norm();
            if len == 0.0 {
                return pts[k];
            }
            let nrm = pt(-d.y / len, d.x / len);
            pts[k] + nrm * shift
        })
        .collect()
}

/// Largest-area contour of a region, as a Loop.
pub fn outer_contour(raster: &Raster, region: &[bool], shift: f64) -> Option<Loop> {
    let contours = raster.contours(region, shift);
    let mut best: Option<(f64, Vec<Point>)> = None;
    for c in contours {
        let mut area = 0.0;
        for k in 0..c.len() {
            area += c[k].cross(c[(k + 1) % c.len()]);
        }
        let area = area.abs();
        if best.as_ref().map_or(true, |(a, _)| area > *a) {
            best = Some((area, c));
        }
    }
    best.and_then(|(_, pts)| Loop::new_simple(pts).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;

    #[test]
    fn segment_marking_blocks_cells() {
        let bbox = Bbox {
            min: pt(0.0, 0.0),
            max: pt(1.0, 1.0),
        };
        let mut r = Raster::new(bbox, 0.05, 2);
        r.mark_segment(pt(0.0, 0.5), pt(1.0, 0.5));
        let (i, j) = r.cell_of(pt(0.5, 0.5)).unwrap();
        assert!(r.is_blocked(i, j));
        let ext = r.exterior_mask();
        assert!(!ext[r.idx(i, j)]);
    }

    #[test]
    fn filled_circle_encloses_interior() {
        let c = Loop::circle(Point::ZERO, 1.0, 256);
        let mut r = Raster::new(c.bbox(), 2.0 / 128.0, 3);
        r.fill_simple_loop(&c);
        let ext = r.exterior_mask();
        let inside = r.cell_of(Point::ZERO).unwrap();
        assert!(r.is_blocked(inside.0, inside.1), "center cell is filled");
        let outside = r.cell_of(pt(0.99, 0.99)).unwrap();
        assert!(ext[r.idx(outside.0, outside.1)]);
        let blocked = r.blocked_mask().iter().filter(|&&b| b).count();
        let expect = std::f64::consts::PI / (r.h * r.h);
        assert!(
            (blocked as f64 - expect).abs() / expect < 0.05,
            "blocked {blocked} expect {expect}"
        );
    }

    #[test]
    fn ring_region_yields_two_contours() {
        let outer = Loop::circle(Point::ZERO, 1.0, 256);
        let inner = Loop::circle(Point::ZERO, 0.5, 256);
        let mut r = Raster::new(outer.bbox(), 2.0 / 256.0, 3);
        r.fill_simple_loop(&outer);
        let mut carve = Raster::new(outer.bbox(), r.h, 3);
        carve.fill_simple_loop(&inner);
        let carved: Vec<bool> = r
            .blocked_mask()
            .iter()
            .zip(carve.blocked_mask())
            .map(|(&a, &b)| a && !b)
            .collect();
        let contours = r.contours(&carved, 0.0);
        assert_eq!(contours.len(), 2);
    }

    #[test]
    fn contour_of_filled_circle_approximates_it() {
        let c = Loop::circle(Point::ZERO, 1.0, 512);
        let h = 2.0 / 256.0;
        let mut r = Raster::new(c.bbox(), h, 3);
        r.fill_simple_loop(&c);
        let ext = r.exterior_mask();
        let region: Vec<bool> = ext.iter().map(|&e| !e).collect();
        let lp = outer_contour(&r, &region, 0.0).expect("contour");
        for &p in lp.vertices() {
            assert!((p.norm() - 1.0).abs() <= 2.0 * h, "vertex at {}", p.norm());
        }
        assert!(lp.verify_simple());
        assert!(lp.surrounds(Point::ZERO));
    }

    #[test]
    fn contour_orientation_region_on_left_is_ccw() {
        let c = Loop::circle(Point::ZERO, 0.7, 128);
        let mut r = Raster::new(c.bbox(), 0.02, 3);
        r.fill_simple_loop(&c);
        let ext = r.exterior_mask();
        let region: Vec<bool> = ext.iter().map(|&e| !e).collect();
        let contours = r.contours(&region, 0.0);
        assert_eq!(contours.len(), 1);
        let pts = &contours[0];
        let mut area = 0.0;
        for k in 0..pts.len() {
            area += pts[k].cross(pts[(k + 1) % pts.len()]);
        }
        assert!(area > 0.0, "outer contour of region should be CCW");
    }
}
