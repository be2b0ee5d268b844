use cle_core::cle::{sample_fullplane_window, CleConfig};
use cle_core::conformal::WalkParams;
use cle_core::rng;
use std::time::Instant;

fn main() {
    for (q, big_r) in [(30.0, 8.0), (40.0, 64.0), (30.0, 64.0)] {
        let cfg = CleConfig {
            cutoff_q: q,
            retry_cap: 40,
            walk: WalkParams { n_walks: 700, ..WalkParams::default() },
            walk_max: 5600,
            ..CleConfig::default()
        };
        let t0 = Instant::now();
        let n = 24u64;
        let mut nonempty = 0;
        let mut chain_len = 0usize;
        for s in 0..n {
            if let Ok(w) = sample_fullplane_window(big_r, 1.0, &cfg, 0.05, rng::child_seed(7, s)) {
                if !w.chain.is_empty() {
                    nonempty += 1;
                    chain_len += w.chain.len();
                }
            }
        }
        println!(
            "q={q} R={big_r}: {nonempty}/{n} non-empty, mean chain {:.1}, {:.2}s/window",
            chain_len as f64 / nonempty.max(1) as f64,
            t0.elapsed().as_secs_f64() / n as f64
        );
    }
}
