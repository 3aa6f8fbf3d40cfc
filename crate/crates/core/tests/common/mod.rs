#![allow(dead_code)]

use tvlds::estimators::{build_design, DesignSystem};
use tvlds::graph::{build_graph, Graph, GraphKind};
use tvlds::lds::{random_stable_ensemble, simulate_panel};

/// Random stable ensemble on `kind`, simulated for `t` transitions; the
/// design covers all of them.
pub fn instance(kind: GraphKind, m: usize, d: usize, t: usize, seed: u64) -> (Graph, DesignSystem) {
    let g = build_graph(&kind, m).unwrap();
    let e = random_stable_ensemble(m, d, 0.8, seed).unwrap();
    let p = simulate_panel(&e, t, seed.wrapping_add(1000)).unwrap();
    (g, build_design(&p, 0, t).unwrap())
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Nested grid search over the whole coefficient vector; only sensible for
/// at most four unknowns.
pub fn brute_force(f: impl Fn(&[f64]) -> f64, center: &[f64], half: f64) -> (Vec<f64>, f64) {
    let n = center.len();
    let pts = 11usize;
    let mut c = center.to_vec();
    let mut h = half;
    let mut best = f(&c);
    while h > 1e-9 {
        let mut idx = vec![0usize; n];
        let mut level_best = (c.clone(), best);
        loop {
            let x: Vec<f64> = (0..n).map(|k| c[k] - h + 2.0 * h * idx[k] as f64 / (pts - 1) as f64).collect();
            let v = f(&x);
            if v < level_best.1 {
                level_best = (x, v);
            }
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < pts {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        c = level_best.0;
        best = level_best.1;
        h *= 0.5;
    }
    (c, best)
}
