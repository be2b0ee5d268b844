//! Law-level checks of the CLE machinery: the first-loop law against the
//! kernel, the small-radius tail bound, increment independence and
//! stationarity of the chain, full-plane window invariances, and the
//! boundary volume ratios.

use cle_core::cle::{
    calibrate_gap, kernel_qe, sample_chain, sample_cle, sample_fullplane_window, CleConfig,
};
use cle_core::conformal::{log_conformal_radius, WalkParams};
use cle_core::geom::{pt, Loop, Point};
use cle_core::loopsoup::Domain;
use cle_core::rng;
use cle_core::sle::loop_minkowski;
use cle_core::stats::{ks_test, overshoot};

fn law_cfg() -> CleConfig {
    CleConfig {
        cutoff_q: 20.0,
        retry_cap: 40,
        walk: WalkParams {
            n_walks: 700,
            ..WalkParams::default()
        },
        walk_max: 5600,
        ..CleConfig::default()
    }
}

fn rho_of(lp: &Loop, seed: u64) -> f64 {
    log_conformal_radius(lp, Point::ZERO, &WalkParams::default(), seed)
        .unwrap()
        .value
}

#[test]
fn first_nested_loop_matches_kernel_law() {
    // the loop around 0 in a CLE sample (conditioned to exist) has the
    // kernel law, which resamples until a loop exists
    let cfg = law_cfg();
    let domain = Domain::disc(1.0);
    let n = 110usize;
    let mut rho_cle = Vec::new();
    let mut rho_kernel = Vec::new();
    let mut attempts = 0u64;
    while rho_cle.len() < n && attempts < 4 * n as u64 {
        attempts += 1;
        let loops = sample_cle(&domain, &cfg, rng::child_seed(51, attempts)).unwrap();
        if let Some(lp) = loops.iter().find(|l| l.surrounds(Point::ZERO)) {
            rho_cle.push(rho_of(lp, rng::child_seed(61, attempts)));
        }
    }
    let boundary = Loop::circle(Point::ZERO, 1.0, 256);
    for k in 0..n as u64 {
        let lp = kernel_qe(&boundary, &cfg, rng::child_seed(52, k)).unwrap();
        rho_kernel.push(rho_of(&lp, rng::child_seed(62, k)));
    }
    let r = ks_test(&rho_cle, &rho_kernel);
    assert!(r.p > 0.01, "first-loop law KS p = {} (D = {})", r.p, r.d);
}

#[test]
fn small_radius_tail_bound() {
    // P(rho <= -x - x0) <= e^{-c x0} P(rho <= -x) with a positive fitted c
    let cfg = law_cfg();
    let boundary = Loop::circle(Point::ZERO, 1.0, 256);
    let n = 260usize;
    let mut rhos = Vec::with_capacity(n);
    for k in 0..n as u64 {
        let lp = kernel_qe(&boundary, &cfg, rng::child_seed(71, k)).unwrap();
        rhos.push(rho_of(&lp, rng::child_seed(72, k)));
    }
    rhos.sort_by(f64::total_cmp);
    let tail_frac = |x: f64| -> f64 {
        let c = rhos.iter().filter(|&&r| r <= -x).count();
        c as f64 / n as f64
    };
    // pick x so both tails are populated
    let x0 = 1.0;
    let xs = [2.0, 3.0];
    let mut hat_cs = Vec::new();
    for &x in &xs {
        let p1 = tail_frac(x);
        let p2 = tail_frac(x + x0);
        if p1 > 0.02 && p2 > 0.0 {
            hat_cs.push(-(p2 / p1).ln() / x0);
        }
    }
    assert!(!hat_cs.is_empty(), "tails unpopulated: {rhos:?}");
    for c in &hat_cs {
        assert!(*c > 0.0, "fitted tail rate not positive: {hat_cs:?}");
    }
}

#[test]
fn chain_increments_look_iid() {
    let mut cfg = law_cfg();
    cfg.cutoff_q = 32.0;
    let mut xis = Vec::new();
    for s in 0..60u64 {
        if let Ok(chain) = sample_chain(&Domain::disc(1.0), &cfg, -14.0, 8, s) {
            xis.extend(chain.xi);
        }
    }
    assert!(xis.len() >= 120, "only {} increments", xis.len());
    // lag-1 autocorrelation within 3 sigma of zero
    let n = xis.len();
    let mean = xis.iter().sum::<f64>() / n as f64;
    let var = xis.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let cov = xis
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    let rho1 = cov / var;
    let sigma = 1.0 / (n as f64).sqrt();
    assert!(rho1.abs() <= 3.0 * sigma, "lag-1 autocorrelation {rho1}");
    // first half vs second half in distribution
    let (a, b) = xis.split_at(n / 2);
    let r = ks_test(a, b);
    assert!(r.p > 0.01, "half-split KS p = {}", r.p);
}

#[test]
fn shape_law_stabilizes_along_the_chain() {
    // area(shape) of early-block vs late-block chain loops
    let mut cfg = law_cfg();
    cfg.cutoff_q = 32.0;
    let mut early = Vec::new();
    let mut late = Vec::new();
    for s in 0..80u64 {
        let chain = match sample_chain(&Domain::disc((24.0f64).exp()), &cfg, -5.0, 7, 3000 + s) {
            Ok(c) => c,
            Err(_) => continue,
        };
        for (j, lp) in chain.loops.iter().enumerate() {
            let shape = lp.scaled((-chain.rho[j]).exp());
            let area = shape.signed_area().abs();
            if (1..3).contains(&j) {
                early.push(area);
            } else if (4..7).contains(&j) {
                late.push(area);
            }
        }
    }
    assert!(early.len() >= 50 && late.len() >= 50, "{} / {}", early.len(), late.len());
    let r = ks_test(&early, &late);
    assert!(r.p > 0.01, "stationarity KS p = {} (D = {})", r.p, r.d);
}

#[test]
fn first_crossing_overshoot_is_controlled_at_calibrated_gap() {
    // with M = 2 x median jump, the overshoot below a level stays under M
    // at least half the time
    let cfg = law_cfg();
    let m_hat = calibrate_gap(&Domain::disc(1.0), &cfg, 6, 99).unwrap();
    assert!(m_hat > 0.0);
    let mut under = 0usize;
    let mut total = 0usize;
    for s in 0..40u64 {
        if let Ok(chain) = sample_chain(&Domain::disc(1.0), &cfg, -9.0, 6, 500 + s) {
            let v = -4.0;
            if let Some(j) = chain.rho.iter().position(|&r| r < v) {
                total += 1;
                if chain.rho[j] > v - m_hat {
                    under += 1;
                }
            }
        }
    }
    assert!(total >= 20, "too few crossings: {total}");
    let frac = under as f64 / total as f64;
    let sigma = 0.5 / (total as f64).sqrt();
    assert!(
        frac >= 0.5 - 2.5 * sigma,
        "P(overshoot < M) = {frac} with M = {m_hat}"
    );
}

#[test]
fn synthetic_overshoot_against_renewal_sum() {
    // overshoot helper against a hand renewal computation
    let xs = [0.4, 0.7, 0.2, 1.0];
    let o = overshoot(xs.iter().cloned(), 1.0);
    assert!((o - 0.1).abs() < 1e-12);
}

#[test]
fn window_scale_invariance_in_law() {
    let mut cfg = law_cfg();
    cfg.cutoff_q = 14.0;
    let lam = 3.0f64;
    let n = 170u64;
    let mut base = Vec::new();
    let mut scaled = Vec::new();
    for s in 0..n {
        if let Ok(w) = sample_fullplane_window(8.0, 1.0, &cfg, 0.1, rng::child_seed(81, s)) {
            if let Some(lp) = w.chain.last() {
                base.push(rho_of(lp, rng::child_seed(83, s)));
            }
        }
        if let Ok(w) =
            sample_fullplane_window(8.0 * lam, lam, &cfg, 0.1 * lam, rng::child_seed(82, s))
        {
            if let Some(lp) = w.chain.last() {
                scaled.push(rho_of(lp, rng::child_seed(84, s)) - lam.ln());
            }
        }
    }
    assert!(base.len() >= 45 && scaled.len() >= 45, "{} / {}", base.len(), scaled.len());
    let r = ks_test(&base, &scaled);
    assert!(r.p > 0.01, "window scaling KS p = {}", r.p);
}

#[test]
fn window_translation_invariance_in_law() {
    // chain to the off-center point b within a window vs the chain to 0:
    // compare the log-diameter of the innermost surrounding loop, shifted
    // by nothing (translation does not change diameters)
    let mut cfg = law_cfg();
    cfg.cutoff_q = 14.0;
    let b = pt(0.35, 0.1);
    let n = 200u64;
    let mut to_zero = Vec::new();
    let mut to_b = Vec::new();
    for s in 0..n {
        if let Ok(w) = sample_fullplane_window(8.0, 1.0, &cfg, 0.1, rng::child_seed(91, s)) {
            if let Some(lp) = w.chain_to(Point::ZERO).last() {
                to_zero.push(lp.diameter().ln());
            }
        }
        if let Ok(w) = sample_fullplane_window(8.0, 1.0, &cfg, 0.1, rng::child_seed(92, s)) {
            if let Some(lp) = w.chain_to(b).last() {
                to_b.push(lp.diameter().ln());
            }
        }
    }
    assert!(to_zero.len() >= 50 && to_b.len() >= 50, "{} / {}", to_zero.len(), to_b.len());
    let r = ks_test(&to_zero, &to_b);
    assert!(r.p > 0.01, "translation KS p = {} (D = {})", r.p, r.d);
}

#[test]
fn boundary_volume_ratio_tends_to_one() {
    // epsilon^{d-2} V_e vs V_i on kernel boundaries at kappa = 4. Even a
    // circle has V_e/V_i = e^{2 eps} at finite eps under multiplicative
    // neighborhoods, so the fractal excess over that baseline is what has
    // to decay toward 1 along the eps list.
    let cfg = law_cfg();
    let boundary = Loop::circle(Point::ZERO, 1.0, 256);
    let eps = [0.3, 0.15, 0.075];
    let mut ratios = vec![Vec::new(); eps.len()];
    let mut used = 0;
    for k in 0..14u64 {
        let lp = kernel_qe(&boundary, &cfg, rng::child_seed(95, k)).unwrap();
        let rho = rho_of(&lp, rng::child_seed(96, k));
        let shape = lp.scaled((-rho).exp());
        let h = shape.bbox().diag() / 448.0;
        if let Ok(rows) = loop_minkowski(&shape, &eps, h) {
            used += 1;
            for (i, &(e, ve, vi)) in rows.iter().enumerate() {
                if vi > 0.0 {
                    ratios[i].push(ve / vi / (2.0 * e).exp());
                }
            }
        }
    }
    assert!(used >= 10);
    let means: Vec<f64> = ratios
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len().max(1) as f64)
        .collect();
    for w in means.windows(2) {
        assert!(w[1] < w[0] + 0.05, "excess not decaying: {means:?}");
    }
    let last = means.last().unwrap();
    assert!(
        (last - 1.0).abs() < 0.45,
        "normalized V_e/V_i at smallest eps: {means:?}"
    );
}
