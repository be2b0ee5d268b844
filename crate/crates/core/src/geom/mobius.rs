use super::point::Point;
use super::polyline::{Disc, Loop};
use super::GeomError;

/// The Mobius maps the samplers need. `InversionAt(z0)` is `z -> z0^2/z`,
/// which fixes the eps-neighborhood of `z0`.
#[derive(Clone, Copy, Debug)]
pub enum MobiusMap {
    /// z -> 1/z
    Inversion,
    /// z -> s z, s > 0
    Scaling(f64),
    /// z -> z + b
    Translation(Point),
    /// z -> z0^2 / z
    InversionAt(Point),
}

impl MobiusMap {
    pub fn apply(&self, z: Point) -> Point {
        match *self {
            MobiusMap::Inversion => z.cinv(),
            MobiusMap::Scaling(s) => z * s,
            MobiusMap::Translation(b) => z + b,
            MobiusMap::InversionAt(z0) => z0.cmul(z0).cmul(z.cinv()),
        }
    }

    fn is_inversion(&self) -> bool {
        matches!(self, MobiusMap::Inversion | MobiusMap::InversionAt(_))
    }

    /// Upper bound for |f'| on a segment at distance `d` from the pole.
    fn deriv_bound(&self, d: f64) -> f64 {
        match *self {
            MobiusMap::Inversion => 1.0 / (d * d),
            MobiusMap::Scaling(s) => s,
            MobiusMap::Translation(_) => 1.0,
            MobiusMap::InversionAt(z0) => z0.norm_sq() / (d * d),
        }
    }
}

/// Default minimum distance a loop must keep from the pole of an inversion.
pub const DEFAULT_POLE_TOL: f64 = 1e-6;

/// Image of a loop under a Mobius map, with adaptive edge resampling so the
/// output resolution does not degrade where the map expands. Orientation is
/// re-normalized by the constructor.
pub fn mobius_image(lp: &Loop, map: MobiusMap, pole_tol: f64) -> Result<Loop, GeomError> {
    let max_edge = lp
        .edges()
        .map(|(a, b)| a.dist(b))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut out: Vec<Point> = Vec::with_capacity(lp.len() * 2);
    for (a, b) in lp.edges() {
        let d = if map.is_inversion() {
            let d = Point::ZERO.dist_to_segment(a, b);
            if d < pole_tol {
                return Err(GeomError::PoleTooClose);
            }
            d
        } else {
            1.0
        };
        let bound = map.deriv_bound(d);
        let n_sub = ((a.dist(b) * bound / max_edge).ceil() as usize).clamp(1, 4096);
        for k in 0..n_sub {
            let t = k as f64 / n_sub as f64;
            out.push(map.apply(a + (b - a) * t));
        }
    }
    Loop::from_normalized(out, lp.is_simple_tagged())
}

/// The multiplicative eps-neighborhood of `z0`: the disc of radius
/// `|z0| sinh(eps)` around `z0 cosh(eps)`, whose diameter along the ray
/// through `z0` is `[z0 e^-eps, z0 e^eps]`.
pub fn eps_neighborhood(z0: Point, eps: f64) -> Result<Disc, GeomError> {
    if z0.norm() == 0.0 {
        return Err(GeomError::ZeroBasepoint);
    }
    if !(eps > 0.0) {
        return Err(GeomError::InvalidParameter("eps must be positive"));
    }
    Disc::new(z0 * eps.cosh(), z0.norm() * eps.sinh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::point::pt;

    #[test]
    fn circle_inverts_to_circle() {
        let c = Loop::circle(Point::ZERO, 2.0, 256);
        let img = mobius_image(&c, MobiusMap::Inversion, DEFAULT_POLE_TOL).unwrap();
        for &p in img.vertices() {
            assert!((p.norm() - 0.5).abs() < 1e-9);
        }
        // orientation got re-normalized to CCW
        assert!(img.signed_area() > 0.0);
    }

    #[test]
    fn translation_round_trip_is_exact() {
        let c = Loop::circle(pt(0.3, -0.2), 1.0, 97);
        let b = pt(1.25, -3.5);
        let there = mobius_image(&c, MobiusMap::Translation(b), 0.0).unwrap();
        let back = mobius_image(&there, MobiusMap::Translation(-b), 0.0).unwrap();
        assert_eq!(back.len(), c.len());
        for (p, q) in back.vertices().iter().zip(c.vertices()) {
            assert!(p.dist(*q) < 1e-12);
        }
    }

    #[test]
    fn pole_too_close_is_rejected() {
        let c = Loop::circle(pt(1.0, 0.0), 1.0, 128);
        // passes within 0 of the origin (touches it)
        assert!(matches!(
            mobius_image(&c, MobiusMap::Inversion, 1e-3),
            Err(GeomError::PoleTooClose)
        ));
    }

    #[test]
    fn eps_neighborhood_values() {
        let d = eps_neighborhood(pt(1.0, 0.0), (2.0f64).ln()).unwrap();
        assert!((d.center.x - 1.25).abs() < 1e-12);
        assert!(d.center.y.abs() < 1e-12);
        assert!((d.radius - 0.75).abs() < 1e-12);

        // (ii) of the paper: neighborhood of z0 = image under z -> z0 z
        let d2 = eps_neighborhood(pt(2.0, 0.0), (2.0f64).ln()).unwrap();
        assert!((d2.center.x - 2.0 * d.center.x).abs() < 1e-12);
        assert!((d2.radius - 2.0 * d.radius).abs() < 1e-12);

        // eps -> 0 limit
        let e = 1e-8;
        let d3 = eps_neighborhood(pt(1.0, 0.0), e).unwrap();
        assert!((d3.center.x - 1.0).abs() < 1e-12);
        assert!((d3.radius / e - 1.0).abs() < 1e-8);
    }

    /// Circumcircle through three points.
    fn circumcircle(a: Point, b: Point, c: Point) -> (Point, f64) {
        let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        let ux = (a.norm_sq() * (b.y - c.y) + b.norm_sq() * (c.y - a.y) + c.norm_sq() * (a.y - b.y)) / d;
        let uy = (a.norm_sq() * (c.x - b.x) + b.norm_sq() * (a.x - c.x) + c.norm_sq() * (b.x - a.x)) / d;
        let center = pt(ux, uy);
        (center, center.dist(a))
    }

    #[test]
    fn eps_neighborhood_invariant_under_inversion_at_z0() {
        // the eps-neighborhood of z0, as a disc, is fixed by z -> z0^2/z:
        // map three exact boundary points and rebuild the disc through them
        for (z0, eps) in [(pt(1.0, 0.0), (2.0f64).ln()), (pt(0.7, -1.3), 0.4)] {
            let d = eps_neighborhood(z0, eps).unwrap();
            let map = MobiusMap::InversionAt(z0);
            let on_circle = |a: f64| d.center + pt(d.radius * a.cos(), d.radius * a.sin());
            let (c, r) = circumcircle(
                map.apply(on_circle(0.3)),
                map.apply(on_circle(2.0)),
                map.apply(on_circle(4.4)),
            );
            assert!(c.dist(d.center) <= 1e-9 * d.radius, "center moved {}", c.dist(d.center));
            assert!((r - d.radius).abs() <= 1e-9 * d.radius, "radius {} vs {}", r, d.radius);
        }
    }

    #[test]
    fn zero_basepoint_rejected() {
        assert!(matches!(
            eps_neighborhood(Point::ZERO, 0.1),
            Err(GeomError::ZeroBasepoint)
        ));
    }
}
