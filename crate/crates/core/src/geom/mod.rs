//! Exact planar primitives: winding numbers, segment intersection, Mobius
//! images, eps-neighborhoods, areas and distances. Everything downstream
//! rests on these, so the oracles here are brute force and the tests exact.

mod grid;
mod intersect;
mod mobius;
mod point;
mod polyline;

pub use grid::SegmentGrid;
pub use intersect::{loop_dist, loops_intersect, segment_dist, segments_cross};
pub use mobius::{eps_neighborhood, mobius_image, MobiusMap, DEFAULT_POLE_TOL};
pub use point::{pt, Bbox, Point};
pub use polyline::{Disc, Loop, PathTrace};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("point lies on the loop boundary (within tolerance)")]
    PointOnBoundary,
    #[error("operation requires a simple loop")]
    NotSimple,
    #[error("loop needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("disc requires a positive radius and finite center")]
    InvalidDisc,
    #[error("loop passes too close to the inversion pole")]
    PoleTooClose,
    #[error("basepoint must be nonzero")]
    ZeroBasepoint,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_loop() -> impl Strategy<Value = Loop> {
        (4usize..48, 0.2f64..3.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..0.5).prop_map(
            |(n, r, cx, cy, wobble)| {
                let pts = (0..n)
                    .map(|k| {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        let rr = r * (1.0 + wobble * (3.0 * a).sin());
                        pt(cx + rr * a.cos(), cy + rr * a.sin())
                    })
                    .collect();
                Loop::new_simple(pts).unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn winding_commutes_with_scaling(lp in arb_loop(), lam in 0.1f64..10.0, zx in -2.0f64..2.0, zy in -2.0f64..2.0) {
            let z = pt(zx, zy);
            let scaled = lp.scaled(lam);
            if let (Ok(w), Ok(ws)) = (lp.winding_number(z), scaled.winding_number(z * lam)) {
                prop_assert_eq!(w, ws);
            }
        }

        #[test]
        fn intersection_is_symmetric_and_rigid(a in arb_loop(), b in arb_loop(), dx in -1.0f64..1.0, dy in -1.0f64..1.0, lam in 0.5f64..2.0) {
            let hit = loops_intersect(&a, &b, 0.0);
            prop_assert_eq!(hit, loops_intersect(&b, &a, 0.0));
            let shift = pt(dx, dy);
            let (at, bt) = (a.translated(shift).scaled(lam), b.translated(shift).scaled(lam));
            prop_assert_eq!(hit, loops_intersect(&at, &bt, 0.0));
        }

        #[test]
        fn area_scales_quadratically(lp in arb_loop(), lam in 0.1f64..10.0) {
            let a0 = lp.area().unwrap();
            let a1 = lp.scaled(lam).area().unwrap();
            prop_assert!((a1 - lam * lam * a0).abs() <= 1e-12 * a1.max(a0).max(1.0));
        }
    }
}
