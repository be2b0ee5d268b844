use super::point::{pt, Bbox, Point};
use super::GeomError;

/// Closed planar polyline; the last vertex connects back to the first.
///
/// Construction normalizes orientation to counterclockwise (by signed area)
/// and collapses degenerate edges shorter than `1e-12 x diameter`. Loops
/// built by samplers that guarantee no self-crossings carry `simple = true`;
/// `area` and a few other operations require that tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Loop {
    pts: Vec<Point>,
    simple: bool,
}

impl Loop {
    /// Loop from raw vertices, tagged as simple (caller-asserted).
    pub fn new_simple(pts: Vec<Point>) -> Result<Loop, GeomError> {
        Loop::build(pts, true)
    }

    /// Loop from raw vertices with no simplicity guarantee.
    pub fn new_raw(pts: Vec<Point>) -> Result<Loop, GeomError> {
        Loop::build(pts, false)
    }

    fn build(pts: Vec<Point>, simple: bool) -> Result<Loop, GeomError> {
        if pts.iter().any(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let bbox = Bbox::of(&pts);
        let tol = 1e-12 * bbox.diag();
        let mut out: Vec<Point> = Vec::with_capacity(pts.len());
        for p in pts {
            if out.last().map_or(true, |q| q.dist(p) > tol) {
                out.push(p);
            }
        }
        // collapse a duplicated closing vertex
        while out.len() > 1 && out[0].dist(*out.last().unwrap()) <= tol {
            out.pop();
        }
        if out.len() < 3 {
            return Err(GeomError::TooFewVertices(out.len()));
        }
        let mut lp = Loop { pts: out, simple };
        if lp.signed_area() < 0.0 {
            lp.pts.reverse();
        }
        Ok(lp)
    }

    /// Regular `n`-gon approximation of a circle, counterclockwise.
    pub fn circle(center: Point, radius: f64, n: usize) -> Loop {
        let pts = (0..n)
            .map(|k| {
                let a = 2.0 * core::f64::consts::PI * k as f64 / n as f64;
                center + pt(radius * a.cos(), radius * a.sin())
            })
            .collect();
        Loop::new_simple(pts).expect("circle is a valid loop")
    }

    /// Axis-aligned rectangle boundary.
    pub fn rectangle(min: Point, max: Point) -> Loop {
        Loop::new_simple(vec![
            min,
            pt(max.x, min.y),
            max,
            pt(min.x, max.y),
        ])
        .expect("rectangle is a valid loop")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.pts
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_simple_tagged(&self) -> bool {
        self.simple
    }

    /// Edges as (start, end) pairs, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.pts.len();
        (0..n).map(move |i| (self.pts[i], self.pts[(i + 1) % n]))
    }

    pub fn bbox(&self) -> Bbox {
        Bbox::of(&self.pts)
    }

    /// Shoelace sum / 2; positive for counterclockwise orientation.
    pub fn signed_area(&self) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.edges() {
            s += a.cross(b);
        }
        0.5 * s
    }

    /// Enclosed area. Requires a simple loop.
    pub fn area(&self) -> Result<f64, GeomError> {
        if !self.simple {
            return Err(GeomError::NotSimple);
        }
        Ok(self.signed_area().abs())
    }

    /// Total edge length.
    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    /// Max distance between two vertices (exact for a polyline), via
    /// rotating calipers on the convex hull.
    pub fn diameter(&self) -> f64 {
        hull_diameter(&self.pts)
    }

    /// Exact minimum distance from `z` to the loop's edges.
    pub fn dist_to(&self, z: Point) -> f64 {
        let mut best = f64::INFINITY;
        for (a, b) in self.edges() {
            best = best.min(z.dist_to_segment(a, b));
        }
        best
    }

    /// Signed winding number of the loop about `z`.
    ///
    /// Errors with `PointOnBoundary` when `z` is within `1e-12 x diameter`
    /// of an edge, where the count is not well defined.
    pub fn winding_number(&self, z: Point) -> Result<i32, GeomError> {
        let tol = 1e-12 * self.bbox().diag();
        if self.dist_to(z) <= tol {
            return Err(GeomError::PointOnBoundary);
        }
        Ok(self.winding_unchecked(z))
    }

    /// Winding number without the on-boundary guard; callers must keep `z`
    /// off the edges.
    pub fn winding_unchecked(&self, z: Point) -> i32 {
        let mut w = 0i32;
        for (a, b) in self.edges() {
            if a.y <= z.y {
                if b.y > z.y && (b - a).cross(z - a) > 0.0 {
                    w += 1;
                }
            } else if b.y <= z.y && (b - a).cross(z - a) < 0.0 {
                w -= 1;
            }
        }
        w
    }

    /// True when the winding number about `z` is nonzero.
    pub fn surrounds(&self, z: Point) -> bool {
        self.winding_unchecked(z) != 0
    }

    /// Uniform scale about the origin.
    pub fn scaled(&self, s: f64) -> Loop {
        let pts = self.pts.iter().map(|&p| p * s).collect();
        Loop::build(pts, self.simple).expect("scaling preserves validity")
    }

    pub fn translated(&self, b: Point) -> Loop {
        let pts = self.pts.iter().map(|&p| p + b).collect();
        Loop::build(pts, self.simple).expect("translation preserves validity")
    }

    /// O(V^2) check that no two non-adjacent edges cross; test/validation use.
    pub fn verify_simple(&self) -> bool {
        let n = self.pts.len();
        for i in 0..n {
            let (a1, b1) = (self.pts[i], self.pts[(i + 1) % n]);
            for j in (i + 1)..n {
                // skip adjacent edges (shared endpoint)
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (a2, b2) = (self.pts[j], self.pts[(j + 1) % n]);
                if super::intersect::segments_cross(a1, b1, a2, b2) {
                    return false;
                }
            }
        }
        true
    }

    pub(crate) fn from_normalized(pts: Vec<Point>, simple: bool) -> Result<Loop, GeomError> {
        Loop::build(pts, simple)
    }
}

/// Open planar polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTrace {
    pts: Vec<Point>,
}

impl PathTrace {
    pub fn new(pts: Vec<Point>) -> Result<PathTrace, GeomError> {
        if pts.len() < 2 {
            return Err(GeomError::TooFewVertices(pts.len()));
        }
        if pts.iter().any(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        Ok(PathTrace { pts })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.pts
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.pts.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn bbox(&self) -> Bbox {
        Bbox::of(&self.pts)
    }

    pub fn dist_to(&self, z: Point) -> f64 {
        let mut best = f64::INFINITY;
        for (a, b) in self.edges() {
            best = best.min(z.dist_to_segment(a, b));
        }
        best
    }
}

/// Disc given by center and radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disc {
    pub center: Point,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: Point, radius: f64) -> Result<Disc, GeomError> {
        if !(radius > 0.0) || !center.is_finite() {
            return Err(GeomError::InvalidDisc);
        }
        Ok(Disc { center, radius })
    }

    pub fn contains(&self, p: Point) -> bool {
        self.center.dist(p) <= self.radius
    }
}

/// Andrew monotone chain hull (counterclockwise, no duplicate endpoint).
fn convex_hull(pts: &[Point]) -> Vec<Point> {
    let mut v: Vec<Point> = pts.to_vec();
    v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    v.dedup();
    if v.len() <= 2 {
        return v;
    }
    let mut lower: Vec<Point> = Vec::with_capacity(v.len());
    for &p in &v {
        while lower.len() >= 2 {
            let n = lower.len();
            if (lower[n - 1] - lower[n - 2]).cross(p - lower[n - 2]) <= 0.0 {
                lower.pop();
            } else {
                break;
            }
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(v.len());
    for &p in v.iter().rev() {
        while upper.len() >= 2 {
            let n = upper.len();
            if (upper[n - 1] - upper[n - 2]).cross(p - upper[n - 2]) <= 0.0 {
                upper.pop();
            } else {
                break;
            }
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Max pairwise distance via rotating calipers on the hull.
fn hull_diameter(pts: &[Point]) -> f64 {
    let hull = convex_hull(pts);
    let m = hull.len();
    match m {
        0 | 1 => 0.0,
        2 => hull[0].dist(hull[1]),
        _ => {
            let mut best: f64 = 0.0;
            let mut j = 1usize;
            for i in 0..m {
                let edge = hull[(i + 1) % m] - hull[i];
                loop {
                    let nj = (j + 1) % m;
                    if edge.cross(hull[nj] - hull[i]) > edge.cross(hull[j] - hull[i]) {
                        j = nj;
                    } else {
                        break;
                    }
                }
                best = best.max(hull[i].dist(hull[j]));
                best = best.max(hull[(i + 1) % m].dist(hull[j]));
            }
            best
        }
    }
}
