//! Minkowski-content volumes: weighted epsilon-neighborhood areas of a
//! chordal trace split by side, and the multiplicative-neighborhood
//! volumes of a loop around the origin.

use super::loewner::LoewnerTrace;
use super::SleError;
use crate::geom::{pt, Bbox, Loop, Point, SegmentGrid};

/// A nonnegative weight sampled on a uniform grid; compactly supported on
/// its bounding box and zero outside.
#[derive(Clone, Debug)]
pub struct WeightGrid {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl WeightGrid {
    /// Smooth bump supported on `bbox`: product of cosine windows. Node
    /// counts are forced even and the spacing adjusted so the node set is
    /// mirror symmetric about the box center.
    pub fn bump(bbox: Bbox, h: f64) -> WeightGrid {
        let nx = (((bbox.width() / h).ceil() as usize + 1) / 2 * 2).max(2);
        let ny = (((bbox.height() / h).ceil() as usize + 1) / 2 * 2).max(2);
        let h = (bbox.width() / nx as f64).max(bbox.height() / ny as f64);
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = (i as f64 + 0.5) / nx as f64;
                let y = (j as f64 + 0.5) / ny as f64;
                let wx = (core::f64::consts::PI * x).sin().powi(2);
                let wy = (core::f64::consts::PI * y).sin().powi(2);
                values.push(wx * wy);
            }
        }
        WeightGrid {
            origin: bbox.min,
            h,
            nx,
            ny,
            values,
        }
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        self.origin + pt((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }
}

/// Per-epsilon weighted neighborhood volumes of a chordal trace.
#[derive(Clone, Debug)]
pub struct MinkowskiReport {
    pub eps: Vec<f64>,
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub v_total: Vec<f64>,
    /// d = 1 + kappa / 8
    pub dimension: f64,
}

/// For each grid node with positive weight, the exact distance to the
/// discrete trace decides membership of every epsilon-neighborhood, and
/// the side of the nearest segment splits the volume into v+ and v-.
/// `v_total = v_plus + v_minus` holds exactly by construction.
pub fn minkowski_volumes(
    trace: &LoewnerTrace,
    weights: &WeightGrid,
    eps_list: &[f64],
) -> Result<MinkowskiReport, SleError> {
    let mut eps = eps_list.to_vec();
    eps.sort_by(f64::total_cmp);
    eps.reverse();
    if eps.is_empty() {
        return Err(SleError::InvalidParameter("eps list is empty"));
    }
    let eps_min = *eps.last().unwrap();
    if weights.h > eps_min / 4.0 {
        return Err(SleError::GridTooCoarse {
            h: weights.h,
            need: eps_min / 4.0,
        });
    }
    let eps_max = eps[0];
    let grid = SegmentGrid::from_trace(&trace.trace);
    let cell_area = weights.h * weights.h;
    let mut v_plus = vec![0.0f64; eps.len()];
    let mut v_minus = vec![0.0f64; eps.len()];
    for j in 0..weights.ny {
        for i in 0..weights.nx {
            let w = weights.values[j * weights.nx + i];
            if w <= 0.0 {
                continue;
            }
            let z = weights.node(i, j);
            let (d, idx) = grid.nearest_capped(z, eps_max * 1.0001);
            if d > eps_max {
                continue;
            }
            let (a, b) = grid.segments()[idx as usize];
            let right = (b - a).cross(z - a) <= 0.0;
            for (k, &e) in eps.iter().enumerate() {
                if d < e {
                    if right {
                        v_plus[k] += w * cell_area;
                    } else {
                        v_minus[k] += w * cell_area;
                    }
                } else {
                    break;
                }
            }
        }
    }
    let v_total = v_plus
        .iter()
        .zip(&v_minus)
        .map(|(p, m)| p + m)
        .collect();
    Ok(MinkowskiReport {
        eps,
        v_plus,
        v_minus,
        v_total,
        dimension: 1.0 + trace.kappa / 8.0,
    })
}

/// Multiplicative distance from `z` to a loop: the largest `r` such that
/// the loop stays clear of the disc of radius `|z| sinh r` around
/// `z cosh r`. For a single point `w` this is
/// `arccosh((|w|^2 + |z|^2) / (2 Re(w conj z)))` when the ray alignment is
/// positive, infinite otherwise; the segment minimum solves a quadratic.
pub fn multiplicative_dist(z: Point, lp: &Loop) -> f64 {
    let mut best = f64::INFINITY;
    for (a, b) in lp.edges() {
        best = best.min(segment_mult_dist(z, a, b));
        if best == 0.0 {
            break;
        }
    }
    best
}

fn point_ratio(z: Point, w: Point) -> f64 {
    let denom = w.dot(z);
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    (w.norm_sq() + z.norm_sq()) / (2.0 * denom)
}

fn acosh_clamped(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        0.0
    } else {
        (x + (x * x - 1.0).sqrt()).ln()
    }
}

/// Minimum of the multiplicative distance over a segment: the ratio
/// g(s) = (|w(s)|^2 + |z|^2) / (2 w(s).z) has a quadratic-root critical
/// point; evaluate endpoints and interior critical points.
fn segment_mult_dist(z: Point, a: Point, b: Point) -> f64 {
    let u = b - a;
    let mut best = point_ratio(z, a).min(point_ratio(z, b));
    // d/ds [ (|w|^2 + c) / (w.z) ] = 0 with w = a + s u and c = |z|^2
    // reduces to the quadratic (uu uz) s^2 + (2 uu az) s + (2 au az - (aa + c) uz) = 0
    let c = z.norm_sq();
    let au = a.dot(u);
    let uu = u.dot(u);
    let az = a.dot(z);
    let uz = u.dot(z);
    let aa = a.dot(a);
    let k2 = uu * uz;
    let k1 = 2.0 * uu * az;
    let k0 = 2.0 * au * az - (aa + c) * uz;
    let roots: &[f64] = &if k2.abs() > 1e-300 {
        let disc = k1 * k1 - 4.0 * k2 * k0;
        if disc >= 0.0 {
            let r = disc.sqrt();
            [(-k1 + r) / (2.0 * k2), (-k1 - r) / (2.0 * k2)]
        } else {
            [f64::NAN, f64::NAN]
        }
    } else if k1.abs() > 1e-300 {
        [-k0 / k1, f64::NAN]
    } else {
        [f64::NAN, f64::NAN]
    };
    for &s in roots {
        if s.is_finite() && s > 0.0 && s < 1.0 {
            best = best.min(point_ratio(z, a + u * s));
        }
    }
    acosh_clamped(best)
}

/// Per-epsilon areas of the multiplicative neighborhood of a loop, split
/// into the outside part `V_e` and the inside part `V_i`.
pub fn loop_minkowski(lp: &Loop, eps_list: &[f64], grid_h: f64) -> Result<Vec<(f64, f64, f64)>, SleError> {
    if !lp.surrounds(Point::ZERO) {
        return Err(SleError::InvalidParameter("loop must surround the origin"));
    }
    let mut eps = eps_list.to_vec();
    eps.sort_by(f64::total_cmp);
    eps.reverse();
    let eps_min = *eps.last().unwrap();
    if grid_h > eps_min * lp.bbox().diag() / 8.0 {
        return Err(SleError::GridTooCoarse {
            h: grid_h,
            need: eps_min * lp.bbox().diag() / 8.0,
        });
    }
    // the eps-neighborhood of the loop extends multiplicatively: bound the
    // grid by the loop bbox scaled by e^{eps_max} plus slack
    let scale = eps[0].exp();
    let bbox = lp.bbox();
    let grid_box = Bbox {
        min: bbox.min * scale - pt(grid_h, grid_h),
        max: bbox.max * scale + pt(grid_h, grid_h),
    };
    let nx = (grid_box.width() / grid_h).ceil() as usize;
    let ny = (grid_box.height() / grid_h).ceil() as usize;
    if nx * ny > (1 << 24) {
        return Err(SleError::InvalidParameter("loop grid too large"));
    }
    let mut out: Vec<(f64, f64, f64)> = eps.iter().map(|&e| (e, 0.0, 0.0)).collect();
    let cell = grid_h * grid_h;
    for j in 0..ny {
        for i in 0..nx {
            let z = grid_box.min + pt((i as f64 + 0.5) * grid_h, (j as f64 + 0.5) * grid_h);
            if z.norm_sq() == 0.0 {
                continue;
            }
            let d = multiplicative_dist(z, lp);
            if d >= eps[0] {
                continue;
            }
            let inside = lp.winding_unchecked(z) != 0;
            for (k, &e) in eps.iter().enumerate() {
                if d < e {
                    if inside {
                        out[k].2 += cell;
                    } else {
                        out[k].1 += cell;
                    }
                } else {
                    break;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sle::chordal_sle;

    #[test]
    fn multiplicative_distance_to_unit_circle_is_log_radius() {
        let c = Loop::circle(Point::ZERO, 1.0, 2048);
        for &r in &[0.5f64, 0.8, 1.3, 2.0] {
            let z = pt(r / (2.0f64).sqrt(), r / (2.0f64).sqrt());
            let d = multiplicative_dist(z, &c);
            let expect = r.ln().abs();
            assert!(
                (d - expect).abs() < 2e-3,
                "r = {r}: {d} vs {expect}"
            );
        }
    }

    #[test]
    fn unit_circle_tube_volumes() {
        // V_e = pi (e^{2 eps} - 1), V_i = pi (1 - e^{-2 eps})
        let c = Loop::circle(Point::ZERO, 1.0, 1024);
        let eps = [0.1f64, 0.05];
        let rows = loop_minkowski(&c, &eps, 0.004).unwrap();
        for &(e, ve, vi) in &rows {
            let expect_e = core::f64::consts::PI * ((2.0 * e).exp() - 1.0);
            let expect_i = core::f64::consts::PI * (1.0 - (-2.0 * e).exp());
            assert!((ve - expect_e).abs() / expect_e < 0.05, "eps {e}: V_e {ve} vs {expect_e}");
            assert!((vi - expect_i).abs() / expect_i < 0.05, "eps {e}: V_i {vi} vs {expect_i}");
        }
        // monotone in eps (rows sorted descending)
        assert!(rows[0].1 > rows[1].1 && rows[0].2 > rows[1].2);
    }

    #[test]
    fn symmetric_weight_on_vertical_trace_balances_sides() {
        // deterministic vertical segment via zero-noise driving
        let n = 2000;
        let dt = 1.0 / n as f64;
        let driving = vec![0.0f64; n + 1];
        let pts = super::super::loewner::evaluate_trace(&driving, dt);
        let trace = LoewnerTrace {
            kappa: 4.0,
            dt,
            driving,
            trace: crate::geom::PathTrace::new(pts).unwrap(),
            coarse_steps: 0,
        };
        let bbox = Bbox {
            min: pt(-1.0, 0.25),
            max: pt(1.0, 1.75),
        };
        let weights = WeightGrid::bump(bbox, 0.02);
        let rep = minkowski_volumes(&trace, &weights, &[0.4, 0.2, 0.1]).unwrap();
        for k in 0..rep.eps.len() {
            assert!(
                (rep.v_plus[k] - rep.v_minus[k]).abs() <= 1e-9 * rep.v_total[k].max(1e-12),
                "asymmetry at eps {}",
                rep.eps[k]
            );
            assert!((rep.v_total[k] - rep.v_plus[k] - rep.v_minus[k]).abs() < 1e-15);
        }
        // larger eps collects more volume
        assert!(rep.v_total[0] > rep.v_total[1] && rep.v_total[1] > rep.v_total[2]);
    }

    #[test]
    fn volumes_scale_with_eps_on_a_real_trace() {
        let t = chordal_sle(4.0, 1.0, 2e-4, 31).unwrap();
        let bbox = Bbox {
            min: pt(-1.0, 0.3),
            max: pt(1.0, 1.5),
        };
        let weights = WeightGrid::bump(bbox, 0.02);
        let rep = minkowski_volumes(&t, &weights, &[0.32, 0.16, 0.08]).unwrap();
        // crude per-trace check: halving eps shrinks volume by roughly
        // 2^(2-d) = sqrt(2) at kappa = 4, very loosely per sample
        for k in 1..rep.eps.len() {
            let ratio = rep.v_total[k - 1] / rep.v_total[k].max(1e-12);
            assert!(ratio > 1.05 && ratio < 3.5, "ratio {ratio}");
        }
    }
}
