//! Test oracles shared by several targets.

use johnkit::{GridDomain, GridSpec, JohnGraph, P2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const N8: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

// min over simple paths x -> x0 of max_k L_k / d(v_k), by depth-first enumeration
pub fn simple_path_oracle(gr: &JohnGraph, x: usize, x0: usize) -> f64 {
    fn walk(gr: &JohnGraph, u: usize, x0: usize, len: f64, worst: f64, seen: &mut Vec<bool>, best: &mut f64) {
        if worst >= *best {
            return;
        }
        if u == x0 {
            *best = worst;
            return;
        }
        let p = gr.dom.grid.center_of(u);
        for &(di, dj) in &N8 {
            let Some(v) = gr.dom.step_ok(u, di, dj) else { continue };
            if seen[v] {
                continue;
            }
            let l = len + gr.gauge.eval(gr.dom.grid.center_of(v) - p);
            seen[v] = true;
            walk(gr, v, x0, l, worst.max(l / gr.field[v]), seen, best);
            seen[v] = false;
        }
    }
    if x == x0 {
        return 0.0;
    }
    let mut seen = vec![false; gr.dom.grid.len()];
    seen[x] = true;
    let mut best = f64::INFINITY;
    walk(gr, x, x0, 0.0, 0.0, &mut seen, &mut best);
    best
}

pub fn random_small(rng: &mut ChaCha8Rng) -> GridDomain {
    let n = rng.gen_range(2..=4);
    let m = rng.gen_range(2..=4);
    let grid = GridSpec::new(P2::ZERO, 1.0, n + 2, m + 2).unwrap();
    loop {
        let mask: Vec<bool> = (0..grid.len())
            .map(|c| {
                let (i, j) = grid.coords(c);
                i > 0 && j > 0 && i <= n && j <= m && rng.gen_bool(0.75)
            })
            .collect();
        if let Ok(dom) = GridDomain::new(grid, mask) {
            if dom.count_inside() > 0 && dom.is_connected() {
                return dom;
            }
        }
    }
}
