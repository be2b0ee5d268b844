//! Acceptance suite: every headline property runs here at desk scale with
//! its tolerance pinned in code. Each test prints one PASS line; a failed
//! assertion carries the measured numbers.

use cle_cli::experiments::{
    collect_cle_bank, collect_qk_banks, collect_window_stats, minkowski_experiment, run_couplings,
    survival_of_n0, WindowMode,
};
use cle_core::cle::{calibrate_gap, soup_cluster_chain, CleConfig};
use cle_core::clusters::{boundary_count_invariant, brute_force_partition, build_clusters};
use cle_core::conformal::{annulus_modulus, default_annulus_h, log_conformal_radius, WalkParams};
use cle_core::geom::{mobius_image, pt, Loop, MobiusMap, Point};
use cle_core::loopsoup::{sample_loop_soup, Domain, SoupConfig, StepsRule};
use cle_core::rng;
use cle_core::sle::side_probability;
use cle_core::stats::{
    ks_test, overshoot_experiment, test_intensity_equality, test_proportionality,
    test_window_ensembles, BoundaryKind, FunctionalSample, WindowSpec,
};
use rayon::prelude::*;
use std::sync::OnceLock;

const ALPHA: f64 = 0.01;

fn acceptance_cfg() -> CleConfig {
    CleConfig {
        c: 1.0,
        cutoff_q: 40.0,
        retry_cap: 40,
        walk: WalkParams {
            n_walks: 900,
            ..WalkParams::default()
        },
        walk_max: 7200,
        ..CleConfig::default()
    }
}

/// Criterion 5/7/11 share the harvested chain banks; computed once.
struct Banks {
    outer: [FunctionalSample; 2],
    inner: [FunctionalSample; 2],
}

fn banks() -> &'static Banks {
    static BANKS: OnceLock<Banks> = OnceLock::new();
    BANKS.get_or_init(|| {
        let cfg = acceptance_cfg();
        let windows = [
            WindowSpec {
                rho_min: -2.0,
                rho_max: -1.0,
            },
            WindowSpec {
                rho_min: -4.0,
                rho_max: -3.0,
            },
        ];
        let margin = 6.8; // two median rho jumps at this cutoff
        let target = 520;
        let max_chains = 6000;
        let mut o = collect_qk_banks(
            &cfg,
            &windows,
            BoundaryKind::Outer,
            margin,
            target,
            max_chains,
            0xA11CE,
        )
        .into_iter();
        let mut i = collect_qk_banks(
            &cfg,
            &windows,
            BoundaryKind::Inner,
            margin,
            target,
            max_chains,
            0xB0B,
        )
        .into_iter();
        Banks {
            outer: [o.next().unwrap(), o.next().unwrap()],
            inner: [i.next().unwrap(), i.next().unwrap()],
        }
    })
}

#[test]
fn criterion_01_geometry_exactness() {
    // fixtures
    let circle = Loop::circle(Point::ZERO, 1.0, 256);
    assert_eq!(circle.winding_number(Point::ZERO).unwrap(), 1);
    assert_eq!(circle.winding_number(pt(2.0, 0.0)).unwrap(), 0);
    let a = Loop::circle(Point::ZERO, 1.0, 128);
    assert!(cle_core::geom::loops_intersect(
        &a,
        &Loop::circle(pt(1.5, 0.0), 1.0, 128),
        0.0
    ));
    assert!(!cle_core::geom::loops_intersect(
        &a,
        &Loop::circle(pt(3.0, 0.0), 1.0, 128),
        0.0
    ));

    // 50 random soups, partition equals brute force exactly
    let results: Vec<(usize, bool, bool)> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let mut cfg =
                SoupConfig::new(1.0, Domain::disc(1.0), 0.0015, 1.0, rng::child_seed(500, s))
                    .unwrap();
            cfg.steps = StepsRule {
                base: 20,
                min_steps: 16,
                max_steps: 128,
            };
            let soup = sample_loop_soup(&cfg);
            let n = soup.loops.len();
            let check = |tol: f64| {
                let mut fast: Vec<Vec<u32>> = build_clusters(&soup.loops, tol)
                    .into_iter()
                    .map(|c| c.member_ids)
                    .collect();
                fast.sort_by_key(|v| v[0]);
                fast == brute_force_partition(&soup.loops, tol)
            };
            (n, check(0.0), check(0.008))
        })
        .collect();
    let max_loops = results.iter().map(|r| r.0).max().unwrap();
    for (k, (n, exact0, exact_tol)) in results.iter().enumerate() {
        assert!(*exact0 && *exact_tol, "soup {k} ({n} loops) mismatched");
    }
    assert!(max_loops <= 600, "soups too large: {max_loops}");
    println!("[criterion 1] PASS geometry exact on fixtures and 50 soups (max {max_loops} loops)");
}

#[test]
fn criterion_02_conformal_radius_calibration() {
    let disc = Loop::circle(Point::ZERO, 1.0, 1024);
    let est = log_conformal_radius(
        &disc,
        Point::ZERO,
        &WalkParams {
            n_walks: 100_000,
            ..WalkParams::default()
        },
        2024,
    )
    .unwrap();
    assert!(est.value.abs() <= 0.01, "unit-disc rho {}", est.value);

    let base = log_conformal_radius(&disc, Point::ZERO, &WalkParams { n_walks: 20_000, ..WalkParams::default() }, 1).unwrap();
    for (k, lam) in [0.5f64, 2.0, 10.0].into_iter().enumerate() {
        let scaled = Loop::circle(Point::ZERO, lam, 1024);
        let est = log_conformal_radius(
            &scaled,
            Point::ZERO,
            &WalkParams {
                n_walks: 20_000,
                ..WalkParams::default()
            },
            10 + k as u64,
        )
        .unwrap();
        let diff = est.value - base.value;
        let sigma = (est.stderr.powi(2) + base.stderr.powi(2)).sqrt();
        assert!(
            (diff - lam.ln()).abs() <= 3.0 * sigma + 1e-3,
            "lambda {lam}: {diff} vs {}",
            lam.ln()
        );
    }
    println!(
        "[criterion 2] PASS unit-disc rho {:.5} +- {:.5}; scaling covariance at 0.5/2/10",
        est.value, est.stderr
    );
}

#[test]
fn criterion_03_modulus_calibration() {
    let mut worst: f64 = 0.0;
    for (ro, ri) in [(1.0, 0.25), (2.0, 0.5)] {
        let outer = Loop::circle(Point::ZERO, ro, 512);
        let inner = Loop::circle(Point::ZERO, ri, 256);
        let m = annulus_modulus(&outer, &inner, default_annulus_h(&outer, &inner)).unwrap();
        let rel = (m - 0.25f64).abs() / 0.25;
        worst = worst.max(rel);
        assert!(rel <= 0.01, "round annulus ({ro},{ri}): m = {m}");
    }
    let outer = Loop::circle(Point::ZERO, 1.0, 512);
    let inner = Loop::circle(Point::ZERO, 0.25, 256);
    let m0 = annulus_modulus(&outer, &inner, default_annulus_h(&outer, &inner)).unwrap();
    let io = mobius_image(&inner, MobiusMap::Inversion, 1e-9).unwrap();
    let ii = mobius_image(&outer, MobiusMap::Inversion, 1e-9).unwrap();
    let m1 = annulus_modulus(&io, &ii, default_annulus_h(&io, &ii)).unwrap();
    let pair_rel = (m0 - m1).abs() / m0;
    assert!(pair_rel <= 0.02, "inversion pair: {m0} vs {m1}");
    println!(
        "[criterion 3] PASS round annuli within {:.3}%; inversion pair within {:.3}%",
        100.0 * worst,
        100.0 * pair_rel
    );
}

#[test]
fn criterion_04_boundary_count_invariant() {
    let cfg = acceptance_cfg();
    let results: Vec<(usize, usize, bool)> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let soup_cfg = SoupConfig::relative(
                1.0,
                Domain::disc(2.0),
                40.0,
                rng::child_seed(0xC0457, s),
            )
            .unwrap();
            let chain = soup_cluster_chain(&soup_cfg, Point::ZERO, &cfg).unwrap();
            let mut rg = rng::substream(0xA44, s);
            let mut checked = 0usize;
            let mut ok_all = true;
            for _ in 0..3 {
                let r_in = 0.08 * (rand::Rng::gen_range(&mut rg, 0.0..2.2f64)).exp();
                let r_out = r_in * (rand::Rng::gen_range(&mut rg, 0.6..1.6f64)).exp();
                let (ne, ni, ok) = boundary_count_invariant(&chain, r_in, r_out);
                checked += 1;
                if !ok {
                    eprintln!("counts ne={ne} ni={ni} in [{r_in},{r_out}]");
                    ok_all = false;
                }
            }
            (chain.clusters.len(), checked, ok_all)
        })
        .collect();
    let total: usize = results.iter().map(|r| r.1).sum();
    let bad = results.iter().filter(|r| !r.2).count();
    assert_eq!(bad, 0, "count invariant violated in {bad}/100 chains");
    let mean_len: f64 =
        results.iter().map(|r| r.0 as f64).sum::<f64>() / results.len() as f64;
    println!(
        "[criterion 4] PASS |n_e - n_i| <= 1 in 100/100 chains x {} annuli (mean chain length {:.1})",
        total / 100,
        mean_len
    );
}

#[test]
fn criterion_05_nu_i_equals_nu_e() {
    let b = banks();
    let (outer, inner) = (&b.outer[0], &b.inner[0]);
    let report = test_intensity_equality("nu_i vs nu_e", outer, inner, ALPHA, 500).unwrap();
    print!("{}", report.render());
    assert!(
        !report.any_rejection(),
        "nu_i = nu_e rejected:\n{}",
        report.render()
    );
    // power check: a 1.2x dilation must be rejected
    let corrupted = inner.dilated(1.2);
    let power = test_intensity_equality("power", outer, &corrupted, ALPHA, 500).unwrap();
    assert!(
        power.any_rejection(),
        "injected dilation was not rejected:\n{}",
        power.render()
    );
    println!(
        "[criterion 5] PASS nu_i = nu_e at {} vs {} loops; dilation alternative rejected",
        outer.len(),
        inner.len()
    );
}

#[test]
fn criterion_06_inversion_invariance() {
    let cfg = acceptance_cfg();
    let walk = WalkParams {
        n_walks: 1500,
        ..WalkParams::default()
    };
    let n = 560;
    let plain = collect_window_stats(&cfg, 64.0, 1.0, 0.05, WindowMode::Plain, n, &walk, 0xF1);
    let inverted =
        collect_window_stats(&cfg, 64.0, 1.0, 0.05, WindowMode::Inverted, n, &walk, 0xF2);
    let report =
        test_window_ensembles("inversion invariance", &plain, &inverted, ALPHA, 350).unwrap();
    print!("{}", report.render());
    assert!(
        !report.any_rejection(),
        "inversion invariance rejected:\n{}",
        report.render()
    );
    // power: translating before inverting must be caught
    let corrupted = collect_window_stats(
        &cfg,
        64.0,
        1.0,
        0.05,
        WindowMode::CorruptedInverted(0.1),
        n,
        &walk,
        0xF3,
    );
    let power = test_window_ensembles("corrupted", &plain, &corrupted, ALPHA, 350).unwrap();
    assert!(
        power.any_rejection(),
        "corrupted ensemble was not rejected:\n{}",
        power.render()
    );
    println!(
        "[criterion 6] PASS inversion invariance over {} / {} windows; corruption rejected",
        plain.len(),
        inverted.len()
    );
}

#[test]
fn criterion_07_proportionality() {
    let b = banks();
    let cfg = acceptance_cfg();
    let windows = [
        WindowSpec {
            rho_min: -2.0,
            rho_max: -1.0,
        },
        WindowSpec {
            rho_min: -4.0,
            rho_max: -3.0,
        },
    ];
    let cle_bank = [
        collect_cle_bank(&cfg, windows[0], 6.8, 450, 5000, 0xCE1),
        collect_cle_bank(&cfg, windows[1], 6.8, 450, 5000, 0xCE2),
    ];
    let report = test_proportionality(
        &b.outer,
        &cle_bank,
        ALPHA,
        [windows[0].width(), windows[1].width()],
    )
    .unwrap();
    print!("{}", report.render());
    assert!(
        !report.any_rejection(),
        "proportionality rejected:\n{}",
        report.render()
    );
    let a1 = report.extra.iter().find(|(k, _)| k == "alpha_hat window 1").unwrap().1;
    let a2 = report.extra.iter().find(|(k, _)| k == "alpha_hat window 2").unwrap().1;
    assert!(a1 > 0.0 && a2 > 0.0);
    println!(
        "[criterion 7] PASS gamma^e vs CLE shapes match; alpha-hat = {:.3} / {:.3} across windows",
        a1, a2
    );
}

#[test]
fn criterion_08_minkowski_dimension() {
    let eps = [0.64, 0.32, 0.16, 0.08];
    for kappa in [3.0f64, 4.0] {
        let exp = minkowski_experiment(kappa, 200, 2.2, 6.4e-5, &eps, 0x88 + kappa as u64).unwrap();
        let err = (exp.slope - exp.expected_slope).abs();
        assert!(
            err <= 0.1,
            "kappa {kappa}: slope {:.4} vs {:.4} (se {:.4})",
            exp.slope,
            exp.expected_slope,
            exp.slope_se
        );
        assert!(
            exp.side_ratio_at_min_eps >= 0.9 && exp.side_ratio_at_min_eps <= 1.1,
            "kappa {kappa}: side ratio {:.4}",
            exp.side_ratio_at_min_eps
        );
        println!(
            "[criterion 8] PASS kappa {kappa}: slope {:.3} (expected {:.3}), v+/v- {:.3} over {} traces",
            exp.slope, exp.expected_slope, exp.side_ratio_at_min_eps, exp.traces
        );
    }
}

#[test]
fn criterion_09_side_probability() {
    let est = side_probability(3.0, pt(0.0, 1.0), 0.05, 11_000, 1.1, 3e-4, 0x51DE).unwrap();
    assert!(est.accepted >= 1000, "only {} accepted", est.accepted);
    assert!(
        (est.p_hat - 0.5).abs() <= 3.0 * est.stderr,
        "p = {} +- {}",
        est.p_hat,
        est.stderr
    );
    println!(
        "[criterion 9] PASS side probability {:.4} +- {:.4} over {} accepted traces",
        est.p_hat, est.stderr, est.accepted
    );
}

#[test]
fn criterion_10_coupling() {
    let mut cfg = acceptance_cfg();
    cfg.cutoff_q = 30.0;
    let disc = Loop::circle(Point::ZERO, 1.0, 256);
    let square = Loop::rectangle(pt(-1.0, -1.0), pt(1.0, 1.0));
    let m_gap = calibrate_gap(&Domain::disc(1.0), &cfg, 6, 0xCAFE).unwrap();
    let couplings = run_couplings(&disc, &square, m_gap, 40, &cfg, 200, 0xC0471);
    let successes = couplings.iter().filter(|c| c.success).count();
    assert!(
        successes * 100 >= 95 * couplings.len(),
        "{successes}/{} couplings succeeded",
        couplings.len()
    );
    let survival = survival_of_n0(&couplings);
    for w in survival.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "survival not non-increasing: {survival:?}");
    }
    println!(
        "[criterion 10] PASS {successes}/{} couplings (M = {m_gap:.2}); P(n0 >= j) non-increasing over {} levels",
        couplings.len(),
        survival.len()
    );
}

#[test]
fn criterion_11_overshoot() {
    // synthetic exponential: the overshoot is exactly memoryless
    let m_list = [0.5, 1.0, 2.0];
    let n = 20_000;
    let rep = overshoot_experiment(
        |run, k| {
            let mut rg = rng::substream(0x0507, run * 4099 + k as u64);
            let u: f64 = rand::Rng::gen(&mut rg);
            -(1.0 - u).ln()
        },
        5.0,
        &m_list,
        n,
    );
    for (i, &m) in m_list.iter().enumerate() {
        let expect = (-m).exp();
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (rep.tail[i] - expect).abs() <= 3.0 * sigma,
            "M = {m}: tail {} vs {expect}",
            rep.tail[i]
        );
    }
    // empirical chain increments: negative fitted log-slope at 3 sigma
    let b = banks();
    let mut pool: Vec<f64> = b.outer[0]
        .xi
        .iter()
        .chain(b.outer[1].xi.iter())
        .chain(b.inner[0].xi.iter())
        .cloned()
        .filter(|x| *x > 0.0)
        .collect();
    assert!(pool.len() >= 200, "xi pool too small: {}", pool.len());
    pool.sort_by(f64::total_cmp);
    let pool_ref = &pool;
    let emp = overshoot_experiment(
        |run, k| {
            let mut rg = rng::substream(0xE407, run * 733 + k as u64);
            pool_ref[rand::Rng::gen_range(&mut rg, 0..pool_ref.len())]
        },
        20.0,
        &[1.0, 2.0, 3.0, 4.0],
        12_000,
    );
    assert!(
        emp.slope + 3.0 * emp.slope_se < 0.0,
        "empirical tail slope {} +- {}",
        emp.slope,
        emp.slope_se
    );
    println!(
        "[criterion 11] PASS exponential overshoot exact within 3 sigma; empirical slope {:.3} +- {:.3}",
        emp.slope, emp.slope_se
    );
}

#[test]
fn criterion_12_fullplane_convergence() {
    let cfg = acceptance_cfg();
    let walk = WalkParams {
        n_walks: 1200,
        ..WalkParams::default()
    };
    let target = (0.5f64).ln();
    let collect = |big_r: f64, seed: u64| -> Vec<f64> {
        (0..330u64)
            .into_par_iter()
            .filter_map(|k| {
                let w = cle_core::cle::sample_fullplane_window(
                    big_r,
                    1.0,
                    &cfg,
                    0.05,
                    rng::child_seed(seed, k),
                )
                .ok()?;
                let mut best: Option<f64> = None;
                for (j, lp) in w.chain.iter().enumerate() {
                    let rho = log_conformal_radius(
                        lp,
                        Point::ZERO,
                        &walk,
                        rng::child_seed(seed ^ 0x77, k * 100 + j as u64),
                    )
                    .ok()?
                    .value;
                    if best.map_or(true, |b: f64| (rho - target).abs() < (b - target).abs()) {
                        best = Some(rho);
                    }
                }
                best
            })
            .collect()
    };
    let small = collect(32.0, 0x320);
    let large = collect(64.0, 0x640);
    assert!(small.len() >= 200 && large.len() >= 200, "{} / {}", small.len(), large.len());
    let r = ks_test(&small, &large);
    assert!(r.p > 0.01, "window laws differ: KS p = {} (D = {})", r.p, r.d);
    println!(
        "[criterion 12] PASS window laws at R/r = 32 vs 64 agree (KS p = {:.3}, n = {}/{})",
        r.p,
        small.len(),
        large.len()
    );
}
