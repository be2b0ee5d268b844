use super::point::Point;
use super::polyline::Loop;

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

/// Proper or improper crossing of segments [a1,b1] and [a2,b2]
/// (shared endpoints and collinear overlap count as crossing).
pub fn segments_cross(a1: Point, b1: Point, a2: Point, b2: Point) -> bool {
    let d1 = orient(a2, b2, a1);
    let d2 = orient(a2, b2, b1);
    let d3 = orient(a1, b1, a2);
    let d4 = orient(a1, b1, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point, a: Point, b: Point, d: f64| -> bool {
        d == 0.0
            && p.x >= a.x.min(b.x)
            && p.x <= a.x.max(b.x)
            && p.y >= a.y.min(b.y)
            && p.y <= a.y.max(b.y)
    };
    on(a1, a2, b2, d1) || on(b1, a2, b2, d2) || on(a2, a1, b1, d3) || on(b2, a1, b1, d4)
}

/// Minimum distance between two segments.
pub fn segment_dist(a1: Point, b1: Point, a2: Point, b2: Point) -> f64 {
    if segments_cross(a1, b1, a2, b2) {
        return 0.0;
    }
    a1.dist_to_segment(a2, b2)
        .min(b1.dist_to_segment(a2, b2))
        .min(a2.dist_to_segment(a1, b1))
        .min(b2.dist_to_segment(a1, b1))
}

/// Whether two loops cross or come within `touch_tol` of each other.
///
/// Symmetric in its arguments. Uses a per-cell bucketing of the larger
/// loop's edges so soup-sized pair tests stay cheap.
pub fn loops_intersect(a: &Loop, b: &Loop, touch_tol: f64) -> bool {
    let (ba, bb) = (a.bbox(), b.bbox());
    if ba.dist(&bb) > touch_tol {
        return false;
    }
    // bucket the longer loop
    let (big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let grid = super::grid::SegmentGrid::from_loop(big);
    for (p, q) in small.edges() {
        if grid.segment_within(p, q, touch_tol) {
            return true;
        }
    }
    false
}

/// Minimum edge-to-edge distance between two loops (0 when they cross).
pub fn loop_dist(a: &Loop, b: &Loop) -> f64 {
    let mut best = f64::INFINITY;
    for (p, q) in a.edges() {
        for (r, s) in b.edges() {
            best = best.min(segment_dist(p, q, r, s));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}
