//! Statistical machinery and the headline hypothesis tests: two-sample
//! Kolmogorov-Smirnov with an exact small-sample null, Holm correction,
//! window harvesting of chain samples, intensity-measure comparisons,
//! inversion invariance, overshoot tails, and small-loop shapes.

use crate::cle::{next_cluster, sample_chain, CleConfig, CleError};
use crate::conformal::{annulus_modulus, log_conformal_radius, ConformalError, WalkParams};
use crate::geom::{mobius_image, Loop, MobiusMap, Point, SegmentGrid};
use crate::loopsoup::Domain;
use crate::rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("insufficient samples: got {got}, need {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("window outside the sampled scale range")]
    WindowOutsideSampledRange,
    #[error(transparent)]
    Cle(#[from] CleError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

/// Two-sample KS statistic (sup distance between empirical CDFs).
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a: Vec<f64> = xs.to_vec();
    let mut b: Vec<f64> = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Exact null probability P(D >= d) for the two-sample statistic by the
/// lattice-path recursion (valid without ties).
pub fn ks_p_exact(d: f64, n: usize, m: usize) -> f64 {
    // dp over paths (i, j) staying strictly inside |i/n - j/m| < d
    let inside = |i: usize, j: usize| -> bool {
        (i as f64 / n as f64 - j as f64 / m as f64).abs() < d - 1e-12
    };
    let mut dp = vec![0.0f64; m + 1];
    dp[0] = 1.0;
    for j in 1..=m {
        dp[j] = if inside(0, j) { dp[j - 1] } else { 0.0 };
    }
    for i in 1..=n {
        let mut row = vec![0.0f64; m + 1];
        row[0] = if inside(i, 0) { dp[0] } else { 0.0 };
        for j in 1..=m {
            if inside(i, j) || (i, j) == (n, m) {
                let total = (i + j) as f64;
                row[j] = dp[j] * (i as f64 / total) + row[j - 1] * (j as f64 / total);
            }
        }
        dp = row;
    }
    (1.0 - dp[m]).clamp(0.0, 1.0)
}

/// Asymptotic Kolmogorov tail Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 l^2).
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let t = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * t;
        sign = -sign;
        if t < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided p-value for the two-sample KS statistic: exact recursion for
/// small samples, asymptotic tail with the small-sample correction
/// otherwise.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    if n == 0 || m == 0 {
        return 1.0;
    }
    if n * m <= 40_000 {
        return ks_p_exact(d, n, m);
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sq = ne.sqrt();
    kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d)
}

/// A two-sample KS test result.
#[derive(Clone, Debug)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
    pub n: usize,
    pub m: usize,
}

pub fn ks_test(xs: &[f64], ys: &[f64]) -> KsResult {
    let d = ks_statistic(xs, ys);
    KsResult {
        d,
        p: ks_p_value(d, xs.len(), ys.len()),
        n: xs.len(),
        m: ys.len(),
    }
}

// ---------------------------------------------------------------------------
// Holm correction and reports

/// One line of a test report.
#[derive(Clone, Debug)]
pub struct ReportLine {
    pub name: String,
    pub statistic: f64,
    pub p: f64,
    pub rejected: bool,
}

/// A family of tests with Holm-corrected decisions at level alpha.
#[derive(Clone, Debug)]
pub struct Report {
    pub title: String,
    pub alpha: f64,
    pub lines: Vec<ReportLine>,
    pub extra: Vec<(String, f64)>,
}

impl Report {
    pub fn any_rejection(&self) -> bool {
        self.lines.iter().any(|l| l.rejected)
    }

    pub fn render(&self) -> String {
        let mut out = format!("# {} (alpha = {})\n", self.title, self.alpha);
        for l in &self.lines {
            out.push_str(&format!(
                "{:<28} stat {:>9.5}  p {:>9.5}  {}\n",
                l.name,
                l.statistic,
                l.p,
                if l.rejected { "REJECT" } else { "ok" }
            ));
        }
        for (k, v) in &self.extra {
            out.push_str(&format!("{:<28} {:>12.6}\n", k, v));
        }
        out
    }
}

/// Holm step-down: returns the rejection flags for a family of p-values.
pub fn holm_rejections(pvals: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut rejected = vec![false; m];
    for (rank, &idx) in order.iter().enumerate() {
        if pvals[idx] <= alpha / (m - rank) as f64 {
            rejected[idx] = true;
        } else {
            break;
        }
    }
    rejected
}

fn assemble_report(title: &str, alpha: f64, named: Vec<(String, f64, f64)>) -> Report {
    let pvals: Vec<f64> = named.iter().map(|(_, _, p)| *p).collect();
    let rej = holm_rejections(&pvals, alpha);
    Report {
        title: title.to_string(),
        alpha,
        lines: named
            .into_iter()
            .zip(rej)
            .map(|((name, statistic, p), rejected)| ReportLine {
                name,
                statistic,
                p,
                rejected,
            })
            .collect(),
        extra: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Harvesting

/// A log-conformal-radius window.
#[derive(Clone, Copy, Debug)]
pub struct WindowSpec {
    pub rho_min: f64,
    pub rho_max: f64,
}

impl WindowSpec {
    pub fn contains(&self, rho: f64) -> bool {
        rho >= self.rho_min && rho < self.rho_max
    }

    pub fn width(&self) -> f64 {
        self.rho_max - self.rho_min
    }
}

/// The five scale-invariant functionals of one harvested loop.
#[derive(Clone, Copy, Debug)]
pub struct HarvestItem {
    pub area: f64,
    pub diam: f64,
    pub isoperimetric: f64,
    pub modulus: Option<f64>,
    pub xi: Option<f64>,
}

/// Collected functional vectors plus per-chain window counts.
#[derive(Clone, Debug, Default)]
pub struct FunctionalSample {
    pub area: Vec<f64>,
    pub diam: Vec<f64>,
    pub isop: Vec<f64>,
    pub modulus: Vec<f64>,
    pub xi: Vec<f64>,
    pub per_chain_counts: Vec<usize>,
    pub chains: usize,
}

impl FunctionalSample {
    pub fn push(&mut self, item: HarvestItem) {
        self.area.push(item.area);
        self.diam.push(item.diam);
        self.isop.push(item.isoperimetric);
        if let Some(m) = item.modulus {
            self.modulus.push(m);
        }
        if let Some(x) = item.xi {
            self.xi.push(x);
        }
    }

    pub fn merge(&mut self, other: FunctionalSample) {
        self.area.extend(other.area);
        self.diam.extend(other.diam);
        self.isop.extend(other.isop);
        self.modulus.extend(other.modulus);
        self.xi.extend(other.xi);
        self.per_chain_counts.extend(other.per_chain_counts);
        self.chains += other.chains;
    }

    pub fn len(&self) -> usize {
        self.area.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area.is_empty()
    }

    /// Power-check corruption: dilate every harvested shape by `factor`.
    pub fn dilated(&self, factor: f64) -> FunctionalSample {
        let mut out = self.clone();
        for a in &mut out.area {
            *a *= factor * factor;
        }
        for d in &mut out.diam {
            *d *= factor;
        }
        out
    }
}

fn shape_functionals(lp: &Loop, rho: f64) -> (f64, f64, f64) {
    let scale = (-rho).exp();
    let shape = lp.scaled(scale);
    let area = shape.signed_area().abs();
    let diam = shape.diameter();
    let per = shape.perimeter();
    let isop = 4.0 * core::f64::consts::PI * area / (per * per);
    (area, diam, isop)
}

/// Modulus of the annulus between consecutive chain loops, at harvest
/// resolution (gap/32); None when the annulus degenerates.
fn pair_modulus(outer: &Loop, inner: &Loop) -> Option<f64> {
    let grid = SegmentGrid::from_loop(outer);
    let gap = inner
        .vertices()
        .iter()
        .map(|&v| grid.dist(v))
        .fold(f64::INFINITY, f64::min);
    if !(gap > 0.0) {
        return None;
    }
    let h = (gap / 32.0).max(outer.bbox().diag() * 2e-4);
    annulus_modulus(outer, inner, h).ok()
}

/// Which boundary of the cluster chain to harvest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryKind {
    Outer,
    Inner,
}

/// One cluster-chain pass over several disjoint windows: iterate the
/// next-cluster kernel from a disc whose log-conformal radius sits
/// `margin` above the highest window and harvest the requested boundary
/// of every cluster whose rho lands in a window, until the chain falls
/// below the lowest window.
pub fn qk_chain_harvest_multi(
    cfg: &CleConfig,
    windows: &[WindowSpec],
    kind: BoundaryKind,
    margin: f64,
    seed: u64,
) -> Result<Vec<FunctionalSample>, StatsError> {
    let top = windows.iter().map(|w| w.rho_max).fold(f64::NEG_INFINITY, f64::max);
    let bottom = windows.iter().map(|w| w.rho_min).fold(f64::INFINITY, f64::min);
    let rho_start = top + margin;
    let mut domain = Loop::circle(Point::ZERO, rho_start.exp(), 256);
    let mut out: Vec<FunctionalSample> = windows
        .iter()
        .map(|_| {
            let mut f = FunctionalSample::default();
            f.chains = 1;
            f
        })
        .collect();
    let mut counts = vec![0usize; windows.len()];
    // previous in-window loop per window, for modulus pairing
    let mut pending: Vec<Option<Loop>> = vec![None; windows.len()];
    let mut prev_rho: Option<f64> = None;
    for j in 0..64 {
        let cluster = match next_cluster(&domain, cfg, rng::child_seed(seed, j)) {
            Ok(c) => c,
            Err(CleError::NoSurroundingCluster { .. }) => break,
            Err(e) => return Err(e.into()),
        };
        let inner = cluster.inner_for(Point::ZERO).expect("inner extracted").clone();
        let target = match kind {
            BoundaryKind::Outer => cluster.outer.clone().expect("outer extracted"),
            BoundaryKind::Inner => inner.clone(),
        };
        let est = log_conformal_radius(
            &target,
            Point::ZERO,
            &cfg.walk,
            rng::child_seed(seed, 1000 + j),
        )?;
        let rho = est.value;
        for (w, window) in windows.iter().enumerate() {
            // settle the previous loop's modulus with this successor
            if let Some(prev) = pending[w].take() {
                if let Some(m) = pair_modulus(&prev, &target) {
                    out[w].modulus.push(m);
                }
            }
            if window.contains(rho) {
                counts[w] += 1;
                let (area, diam, isop) = shape_functionals(&target, rho);
                out[w].push(HarvestItem {
                    area,
                    diam,
                    isoperimetric: isop,
                    modulus: None,
                    xi: prev_rho.map(|p| p - rho),
                });
                pending[w] = Some(target.clone());
            }
        }
        prev_rho = Some(rho);
        domain = inner;
        if rho < bottom {
            break;
        }
    }
    for (w, c) in counts.into_iter().enumerate() {
        out[w].per_chain_counts.push(c);
    }
    Ok(out)
}

/// Single-window wrapper of [`qk_chain_harvest_multi`].
pub fn qk_chain_harvest(
    cfg: &CleConfig,
    window: WindowSpec,
    kind: BoundaryKind,
    margin: f64,
    seed: u64,
) -> Result<FunctionalSample, StatsError> {
    Ok(qk_chain_harvest_multi(cfg, &[window], kind, margin, seed)?.remove(0))
}

/// One nested-CLE chain pass (the Q^e iteration), harvesting loops whose
/// rho falls in the window.
pub fn cle_chain_harvest(
    cfg: &CleConfig,
    window: WindowSpec,
    margin: f64,
    seed: u64,
) -> Result<FunctionalSample, StatsError> {
    let rho_start = window.rho_max + margin;
    let domain = Domain::disc(rho_start.exp());
    let chain = sample_chain(&domain, cfg, window.rho_min - 0.05, 64, seed)?;
    let mut out = FunctionalSample::default();
    out.chains = 1;
    let mut count = 0usize;
    for (j, lp) in chain.loops.iter().enumerate() {
        let rho = chain.rho[j];
        if window.contains(rho) {
            count += 1;
            let (area, diam, isop) = shape_functionals(lp, rho);
            let modulus = chain
                .loops
                .get(j + 1)
                .and_then(|next| pair_modulus(lp, next));
            out.push(HarvestItem {
                area,
                diam,
                isoperimetric: isop,
                modulus,
                xi: Some(chain.xi[j]),
            });
        }
    }
    out.per_chain_counts.push(count);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Headline tests

/// Welch test on per-chain window counts (the count-density component of
/// the intensity comparison). Returns (z, p).
fn count_rate_test(a: &FunctionalSample, b: &FunctionalSample) -> (f64, f64) {
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len().max(1) as f64;
    let var = |v: &[usize], mu: f64| {
        v.iter()
            .map(|&x| (x as f64 - mu) * (x as f64 - mu))
            .sum::<f64>()
            / (v.len().max(2) - 1) as f64
    };
    let (ma, mb) = (mean(&a.per_chain_counts), mean(&b.per_chain_counts));
    let (va, vb) = (
        var(&a.per_chain_counts, ma),
        var(&b.per_chain_counts, mb),
    );
    let se = (va / a.per_chain_counts.len() as f64 + vb / b.per_chain_counts.len() as f64).sqrt();
    if se == 0.0 {
        return (0.0, 1.0);
    }
    let z = (ma - mb) / se;
    (z, erfc_two_sided(z))
}

fn erfc_two_sided(z: f64) -> f64 {
    // two-sided normal p-value via a rational erfc approximation
    let x = z.abs() / core::f64::consts::SQRT_2;
    // Abramowitz-Stegun 7.1.26
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    (poly * (-x * x).exp()).clamp(0.0, 1.0)
}

/// Compare two harvested intensity samples (five functional KS tests plus
/// the count-rate test, Holm-corrected).
pub fn test_intensity_equality(
    title: &str,
    a: &FunctionalSample,
    b: &FunctionalSample,
    alpha: f64,
    min_per_side: usize,
) -> Result<Report, StatsError> {
    if a.len() < min_per_side || b.len() < min_per_side {
        return Err(StatsError::InsufficientSamples {
            got: a.len().min(b.len()),
            need: min_per_side,
        });
    }
    let mut named = Vec::new();
    for (name, xs, ys) in [
        ("area(shape)", &a.area, &b.area),
        ("diameter(shape)", &a.diam, &b.diam),
        ("isoperimetric", &a.isop, &b.isop),
        ("pair modulus", &a.modulus, &b.modulus),
        ("xi increment", &a.xi, &b.xi),
    ] {
        if xs.len() < 20 || ys.len() < 20 {
            continue;
        }
        let r = ks_test(xs, ys);
        named.push((format!("KS {name}"), r.d, r.p));
    }
    let (z, p) = count_rate_test(a, b);
    named.push(("count density".to_string(), z, p));
    let mut report = assemble_report(title, alpha, named);
    report
        .extra
        .push(("n left".to_string(), a.len() as f64));
    report
        .extra
        .push(("n right".to_string(), b.len() as f64));
    Ok(report)
}

/// Per-window statistics of one full-plane configuration: the shape
/// functionals of the chain loop with rho nearest 0, and the modulus of
/// the annulus containing the point 1.
#[derive(Clone, Copy, Debug)]
pub struct WindowStats {
    pub near_area: f64,
    pub near_diam: f64,
    pub near_isop: f64,
    pub annulus_modulus_at_1: Option<f64>,
}

/// Extract the window statistics from a chain of loops around the origin
/// (outside-in order not required; loops are re-ranked by estimated rho).
pub fn window_statistics(
    chain: &[Loop],
    walk: &WalkParams,
    seed: u64,
) -> Result<Option<WindowStats>, StatsError> {
    if chain.is_empty() {
        return Ok(None);
    }
    let mut rhos: Vec<(usize, f64)> = Vec::with_capacity(chain.len());
    for (k, lp) in chain.iter().enumerate() {
        let est = log_conformal_radius(lp, Point::ZERO, walk, rng::child_seed(seed, k as u64))?;
        rhos.push((k, est.value));
    }
    // nearest |rho| to 0
    let (near_idx, near_rho) = rhos
        .iter()
        .map(|&(k, r)| (k, r))
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    let (area, diam, isop) = shape_functionals(&chain[near_idx], near_rho);
    // consecutive pair bracketing the point 1: outer surrounds it, inner
    // does not. Order by rho descending.
    let mut order = rhos.clone();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let one = crate::geom::pt(1.0, 0.0);
    let mut modulus = None;
    for w in order.windows(2) {
        let outer = &chain[w[0].0];
        let inner = &chain[w[1].0];
        if outer.surrounds(one) && !inner.surrounds(one) {
            modulus = pair_modulus(outer, inner);
            break;
        }
    }
    Ok(Some(WindowStats {
        near_area: area,
        near_diam: diam,
        near_isop: isop,
        annulus_modulus_at_1: modulus,
    }))
}

/// Invert a chain configuration through z -> 1/z (exact on polylines).
pub fn invert_chain(chain: &[Loop]) -> Vec<Loop> {
    chain
        .iter()
        .filter_map(|lp| mobius_image(lp, MobiusMap::Inversion, 1e-12).ok())
        .collect()
}

/// Compare window statistics of two ensembles (original vs inverted, or
/// any paired construction): KS on the three nearest-loop functionals and
/// on the annulus modulus at 1, Holm-corrected.
pub fn test_window_ensembles(
    title: &str,
    a: &[WindowStats],
    b: &[WindowStats],
    alpha: f64,
    min_n: usize,
) -> Result<Report, StatsError> {
    if a.len() < min_n || b.len() < min_n {
        return Err(StatsError::InsufficientSamples {
            got: a.len().min(b.len()),
            need: min_n,
        });
    }
    let pull = |s: &[WindowStats], f: fn(&WindowStats) -> f64| -> Vec<f64> {
        s.iter().map(f).collect()
    };
    let mods = |s: &[WindowStats]| -> Vec<f64> {
        s.iter().filter_map(|w| w.annulus_modulus_at_1).collect()
    };
    let mut named = Vec::new();
    for (name, xs, ys) in [
        ("near-loop area", pull(a, |w| w.near_area), pull(b, |w| w.near_area)),
        ("near-loop diameter", pull(a, |w| w.near_diam), pull(b, |w| w.near_diam)),
        ("near-loop isoperimetric", pull(a, |w| w.near_isop), pull(b, |w| w.near_isop)),
        ("annulus modulus at 1", mods(a), mods(b)),
    ] {
        if xs.len() >= 20 && ys.len() >= 20 {
            let r = ks_test(&xs, &ys);
            named.push((format!("KS {name}"), r.d, r.p));
        }
    }
    Ok(assemble_report(title, alpha, named))
}

/// Proportionality of two intensity measures: shape KS plus constancy of
/// the per-rho count ratio across two windows. Reports the ratio estimate
/// (alpha-hat) with a 95% interval.
pub fn test_proportionality(
    e_bank: &[FunctionalSample; 2],
    cle_bank: &[FunctionalSample; 2],
    alpha: f64,
    window_widths: [f64; 2],
) -> Result<Report, StatsError> {
    let mut named = Vec::new();
    for (name, xs, ys) in [
        ("area(shape)", &e_bank[0].area, &cle_bank[0].area),
        ("diameter(shape)", &e_bank[0].diam, &cle_bank[0].diam),
        ("isoperimetric", &e_bank[0].isop, &cle_bank[0].isop),
    ] {
        if xs.len() >= 20 && ys.len() >= 20 {
            let r = ks_test(xs, ys);
            named.push((format!("KS {name}"), r.d, r.p));
        }
    }
    // ratio of counts per chain per unit rho, per window
    let rate = |s: &FunctionalSample, width: f64| -> (f64, f64) {
        let n = s.len() as f64;
        let chains = s.chains.max(1) as f64;
        let r = n / chains / width;
        // Poisson-ish relative error
        (r, r / n.max(1.0).sqrt())
    };
    let mut ratios = Vec::new();
    for w in 0..2 {
        let (re, se_e) = rate(&e_bank[w], window_widths[w]);
        let (rc, se_c) = rate(&cle_bank[w], window_widths[w]);
        let ratio = re / rc;
        let se = ratio * ((se_e / re).powi(2) + (se_c / rc).powi(2)).sqrt();
        ratios.push((ratio, se));
    }
    let diff = ratios[0].0 - ratios[1].0;
    let se = (ratios[0].1.powi(2) + ratios[1].1.powi(2)).sqrt();
    let z = diff / se.max(1e-12);
    named.push(("ratio constancy".to_string(), z, erfc_two_sided(z)));
    let mut report = assemble_report("nu_e vs nu_cle proportionality", alpha, named);
    report.extra.push(("alpha_hat window 1".to_string(), ratios[0].0));
    report.extra.push(("alpha_hat se 1".to_string(), ratios[0].1));
    report.extra.push(("alpha_hat window 2".to_string(), ratios[1].0));
    report.extra.push(("alpha_hat se 2".to_string(), ratios[1].1));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Overshoot

/// Renewal overshoot of iid positive increments over level `y`.
pub fn overshoot(increments: impl Iterator<Item = f64>, y: f64) -> f64 {
    let mut s = 0.0;
    for x in increments {
        s += x;
        if s > y {
            return s - y;
        }
    }
    f64::NAN
}

/// Empirical overshoot tail fractions at the given thresholds, with a
/// fitted log-tail slope and its standard error.
pub struct OvershootReport {
    pub m_list: Vec<f64>,
    pub tail: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub n: usize,
}

/// Run `n` renewal experiments drawing increments from `draw` and measure
/// P(O(y) >= M) for each M.
pub fn overshoot_experiment(
    mut draw: impl FnMut(u64, usize) -> f64,
    y: f64,
    m_list: &[f64],
    n: usize,
) -> OvershootReport {
    let mut tail = vec![0usize; m_list.len()];
    for run in 0..n {
        let mut s = 0.0;
        let mut k = 0usize;
        let o = loop {
            let x = draw(run as u64, k);
            k += 1;
            s += x;
            if s > y {
                break s - y;
            }
            if k > 100_000 {
                break f64::NAN;
            }
        };
        for (i, &m) in m_list.iter().enumerate() {
            if o >= m {
                tail[i] += 1;
            }
        }
    }
    let fractions: Vec<f64> = tail.iter().map(|&t| t as f64 / n as f64).collect();
    // weighted least squares on log tail (only positive entries)
    let pts: Vec<(f64, f64, f64)> = m_list
        .iter()
        .zip(&fractions)
        .filter(|(_, &f)| f > 0.0)
        .map(|(&m, &f)| {
            let w = n as f64 * f / (1.0 - f).max(1e-9); // inverse variance of log p
            (m, f.ln(), w)
        })
        .collect();
    let (slope, slope_se) = weighted_slope(&pts);
    OvershootReport {
        m_list: m_list.to_vec(),
        tail: fractions,
        slope,
        slope_se,
        n,
    }
}

fn weighted_slope(pts: &[(f64, f64, f64)]) -> (f64, f64) {
    if pts.len() < 2 {
        return (0.0, f64::INFINITY);
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx: f64 = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
    let my: f64 = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope, (1.0 / sxx).sqrt())
}

/// Ordinary least squares slope with standard error, for the Minkowski
/// dimension regression.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let dof = (xs.len().max(3) - 2) as f64;
    let se = (resid / dof / sxx).sqrt();
    (slope, intercept, se)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ks_statistic_known_values() {
        let xs = vec![1.0, 1.0, 4.0, 4.0];
        let ys = vec![1.0, 1.0, 1.0, 4.0];
        assert!((ks_statistic(&xs, &ys) - 0.25).abs() < 1e-12);
        let same = vec![1.0, 2.0, 3.0];
        assert!(ks_statistic(&same, &same) == 0.0);
    }

    /// Exact null by direct enumeration of interleavings (n + m <= 12).
    fn ks_p_enumerated(d: f64, n: usize, m: usize) -> f64 {
        let total = n + m;
        let mut exceed = 0usize;
        let mut count = 0usize;
        // iterate all subsets of size n
        let mut indices: Vec<usize> = (0..n).collect();
        loop {
            count += 1;
            // walk the merged sequence; members of `indices` are x-steps
            let mut i = 0usize;
            let mut j = 0usize;
            let mut ptr = 0usize;
            let mut dmax = 0.0f64;
            for pos in 0..total {
                if ptr < n && indices[ptr] == pos {
                    i += 1;
                    ptr += 1;
                } else {
                    j += 1;
                }
                dmax = dmax.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
            }
            if dmax >= d - 1e-12 {
                exceed += 1;
            }
            // next combination
            let mut k = n;
            loop {
                if k == 0 {
                    return exceed as f64 / count as f64;
                }
                k -= 1;
                if indices[k] != k + total - n {
                    indices[k] += 1;
                    for l in k + 1..n {
                        indices[l] = indices[l - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn ks_exact_matches_enumeration() {
        for (n, m) in [(4usize, 4usize), (5, 5), (6, 4), (6, 6)] {
            for d10 in 1..=9 {
                let d = d10 as f64 / 10.0;
                let exact = ks_p_exact(d, n, m);
                let brute = ks_p_enumerated(d, n, m);
                assert!(
                    (exact - brute).abs() < 1e-10,
                    "n={n} m={m} d={d}: {exact} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn ks_null_p_values_are_roughly_uniform() {
        // under the null, p < 0.01 should occur about 1% of the time
        let mut rejections = 0;
        let trials = 400;
        for s in 0..trials {
            let mut rg = rng::root(50_000 + s);
            let xs: Vec<f64> = (0..80).map(|_| rg.gen::<f64>()).collect();
            let ys: Vec<f64> = (0..80).map(|_| rg.gen::<f64>()).collect();
            if ks_test(&xs, &ys).p < 0.01 {
                rejections += 1;
            }
        }
        assert!(rejections <= 8, "{rejections}/400 null rejections at 1%");
    }

    #[test]
    fn ks_detects_a_shift() {
        let mut rg = rng::root(3);
        let xs: Vec<f64> = (0..400).map(|_| rg.gen::<f64>()).collect();
        let ys: Vec<f64> = (0..400).map(|_| rg.gen::<f64>() * 1.2).collect();
        assert!(ks_test(&xs, &ys).p < 0.01);
    }

    #[test]
    fn holm_controls_the_family() {
        let rej = holm_rejections(&[0.001, 0.2, 0.03, 0.5], 0.05);
        assert_eq!(rej, vec![true, false, false, false]);
        let none = holm_rejections(&[0.9, 0.8, 0.99], 0.05);
        assert!(none.iter().all(|&r| !r));
        // all tiny: everything rejected
        let all = holm_rejections(&[1e-6, 1e-7, 1e-5], 0.05);
        assert!(all.iter().all(|&r| r));
    }

    #[test]
    fn exponential_overshoot_is_memoryless() {
        // xi ~ Exp(1): O(y) is exactly Exp(1)
        let m_list = [0.5, 1.0, 2.0];
        let n = 20_000;
        let rep = overshoot_experiment(
            |run, k| {
                let mut rg = rng::substream(42, run * 1_000 + k as u64);
                let u: f64 = rg.gen();
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
                (rep.tail[i] - expect).abs() <= 3.5 * sigma,
                "M={m}: {} vs {expect}",
                rep.tail[i]
            );
        }
        assert!((rep.slope + 1.0).abs() < 0.05, "slope {}", rep.slope);
        assert!(rep.slope / rep.slope_se < -3.0);
    }

    #[test]
    fn bounded_increments_bound_the_overshoot() {
        let m_list = [0.25, 0.5, 0.75];
        let rep = overshoot_experiment(
            |run, k| {
                let mut rg = rng::substream(7, run * 131 + k as u64);
                rg.gen_range(0.0..0.5)
            },
            3.0,
            &m_list,
            2000,
        );
        // O(y) <= 0.5 always
        assert!(rep.tail[2] == 0.0 || rep.tail[2] < 1e-9);
    }

    #[test]
    fn intensity_self_test_passes_and_dilation_rejects() {
        // same-law synthetic harvests: no rejection expected
        let mut a = FunctionalSample::default();
        let mut b = FunctionalSample::default();
        let mut rg = rng::root(9);
        for k in 0..600 {
            let shape = 1.0 + 0.3 * rg.gen::<f64>();
            let item = HarvestItem {
                area: shape * 3.0,
                diam: shape * 2.0,
                isoperimetric: 0.6 + 0.2 * rg.gen::<f64>(),
                modulus: Some(0.3 + 0.4 * rg.gen::<f64>()),
                xi: Some(1.0 + rg.gen::<f64>()),
            };
            if k % 2 == 0 {
                a.push(item);
            } else {
                b.push(item);
            }
        }
        a.per_chain_counts = vec![2; 150];
        b.per_chain_counts = vec![2; 150];
        a.chains = 150;
        b.chains = 150;
        let rep = test_intensity_equality("self", &a, &b, 0.01, 100).unwrap();
        assert!(!rep.any_rejection(), "{}", rep.render());
        // identical harvests: all p = 1 under KS (d = 0)
        let same = test_intensity_equality("same", &a, &a, 0.01, 100).unwrap();
        for line in same.lines.iter().filter(|l| l.name.starts_with("KS")) {
            assert!(line.p > 0.999, "{}", same.render());
        }
        // dilation corruption must be caught
        let bad = a.dilated(1.2);
        let rep2 = test_intensity_equality("power", &a, &bad, 0.01, 100).unwrap();
        assert!(rep2.any_rejection(), "{}", rep2.render());
    }
}
