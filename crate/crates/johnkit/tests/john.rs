use johnkit::john::{
    exhaustive_center, john_center, john_point, lipschitz_probe, lower_bound_check, optimal_john, ratio_profile,
};
use johnkit::{ConvexGauge, Error, GridDomain, GridSpec, JohnGraph, Neighborhood, Polyline, P2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{random_small, simple_path_oracle};

fn euc() -> ConvexGauge {
    ConvexGauge::euclidean(64).unwrap()
}

fn tri() -> ConvexGauge {
    ConvexGauge::new(vec![P2::new(1.0, 0.0), P2::new(0.0, 1.0), P2::new(-1.0, -1.0)]).unwrap()
}

fn disk(h: f64) -> GridDomain {
    let grid = GridSpec::square(-1.0 - 2.0 * h, 1.0 + 2.0 * h, h).unwrap();
    GridDomain::from_fn(grid, |p| p.norm() < 1.0).unwrap()
}

#[test]
fn small_domains_match_simple_path_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let dom = random_small(&mut rng);
        for g in [euc(), tri()] {
            let gr = JohnGraph::new(&dom, &g, Neighborhood::N8).unwrap();
            let mut center_want = f64::INFINITY;
            for &x0 in &gr.cells {
                let mut worst = 0.0f64;
                for &x in &gr.cells {
                    let want = simple_path_oracle(&gr, x, x0);
                    let got = john_point(&gr, x, x0, None).unwrap().value;
                    assert!((got - want).abs() <= 1e-12, "J({x};{x0}) = {got}, oracle {want}");
                    worst = worst.max(want);
                }
                let got = john_center(&gr, x0, None).unwrap().value;
                assert!((got - worst).abs() <= 1e-12);
                center_want = center_want.min(worst);
            }
            let opt = optimal_john(&gr).unwrap();
            assert!(opt.exhaustive);
            assert!((opt.value - center_want).abs() <= 1e-12);
        }
    }
}

#[test]
fn disk_values() {
    let h = 1.0 / 32.0;
    let dom = disk(h);
    let gr = JohnGraph::new(&dom, &euc(), Neighborhood::N8).unwrap();
    let o = dom.grid.cell_of(P2::ZERO).unwrap();
    let x = dom.grid.cell_of(P2::new(0.5, 0.0)).unwrap();
    let c = john_point(&gr, x, o, None).unwrap();
    assert!((c.value - 0.5).abs() <= 0.05, "{}", c.value);
    assert_eq!(c.witness_cells.first(), Some(&x));
    assert_eq!(c.witness_cells.last(), Some(&o));
    let center = john_center(&gr, o, None).unwrap();
    assert!((center.value - 1.0).abs() <= 0.1, "{}", center.value);
    assert!(dom.grid.center_of(center.worst_x).norm() > 0.9);
    assert_eq!(john_point(&gr, o, o, None).unwrap().value, 0.0);
}

#[test]
fn single_cell_domain() {
    let grid = GridSpec::new(P2::ZERO, 1.0, 3, 3).unwrap();
    let dom = GridDomain::from_fn(grid, |p| p == P2::new(1.0, 1.0)).unwrap();
    let gr = JohnGraph::new(&dom, &euc(), Neighborhood::N8).unwrap();
    assert_eq!(gr.len(), 1);
    assert_eq!(john_center(&gr, 4, None).unwrap().value, 0.0);
    assert_eq!(optimal_john(&gr).unwrap().value, 0.0);
}

#[test]
fn disconnected_domain() {
    let grid = GridSpec::new(P2::ZERO, 1.0, 5, 3).unwrap();
    let dom = GridDomain::from_fn(grid, |p| p.y == 1.0 && (p.x == 1.0 || p.x == 3.0)).unwrap();
    let gr = JohnGraph::new(&dom, &euc(), Neighborhood::N8).unwrap();
    assert_eq!(john_point(&gr, 6, 8, None).unwrap_err(), Error::Disconnected);
    assert_eq!(optimal_john(&gr).unwrap_err(), Error::Disconnected);
    assert!(john_point(&gr, 0, 8, None).is_err());
}

#[test]
fn ratio_profiles() {
    let h = 1.0 / 32.0;
    let dom = disk(h);
    let g = euc();
    let radial = Polyline::new(vec![P2::new(0.5, 0.0), P2::ZERO]).unwrap();
    let prof = ratio_profile(&dom, &g, &radial).unwrap();
    // j(t) = (0.5 - |p|) / (1 - |p|), largest at the center
    assert!((prof.sup - 0.5).abs() <= 0.05, "{}", prof.sup);
    assert!(prof.argmax_param > 0.9);
    assert_eq!(prof.samples[0][3], 0.0);
    let point = Polyline::new(vec![P2::new(0.2, 0.1)]).unwrap();
    let prof = ratio_profile(&dom, &g, &point).unwrap();
    assert_eq!(prof.sup, 0.0);
    let out = Polyline::new(vec![P2::ZERO, P2::new(1.5, 0.0)]).unwrap();
    assert!(ratio_profile(&dom, &g, &out).is_err());
}

#[test]
fn witness_is_sound() {
    let h = 1.0 / 24.0;
    let grid = GridSpec::square(-1.1, 1.1, h).unwrap();
    let dom = GridDomain::from_fn(grid, |p| p.norm() < 1.0 && !(p.y.abs() < 0.08 && p.x > -0.2)).unwrap();
    let g = tri();
    let gr = JohnGraph::new(&dom, &g, Neighborhood::N16).unwrap();
    let x = grid.cell_of(P2::new(0.6, 0.3)).unwrap();
    let x0 = grid.cell_of(P2::new(0.5, -0.4)).unwrap();
    let c = john_point(&gr, x, x0, None).unwrap();
    let mut l = 0.0;
    let mut worst = 0.0f64;
    for w in c.witness_cells.windows(2) {
        let (a, b) = grid.coords(w[0]);
        let (p, q) = grid.coords(w[1]);
        let step = (p as i64 - a as i64, q as i64 - b as i64);
        assert_eq!(dom.step_ok(w[0], step.0, step.1), Some(w[1]));
        l += g.eval(grid.center_of(w[1]) - grid.center_of(w[0]));
        worst = worst.max(l / gr.field[w[1]]);
    }
    assert!((worst - c.value).abs() <= 1e-12);
    assert!(c.bracket[0] <= c.value && c.value <= c.bracket[1] + 1e-12);
    assert!((c.clamped() - c.value.max(1.0)).abs() == 0.0);
    // the detour around the slit costs more than the straight disk path
    let full = GridDomain::from_fn(grid, |p| p.norm() < 1.0).unwrap();
    let fr = JohnGraph::new(&full, &g, Neighborhood::N16).unwrap();
    assert!(john_point(&fr, x, x0, None).unwrap().value <= c.value);
}

#[test]
fn scale_equivariance() {
    let g = tri();
    let build = |s: f64| {
        let grid = GridSpec::new(P2::new(-1.1 * s, -1.1 * s), s / 16.0, 36, 36).unwrap();
        let dom = GridDomain::from_fn(grid, |p| (p * (1.0 / s)).norm() < 1.0 && p.x / s > -0.7).unwrap();
        JohnGraph::new(&dom, &g, Neighborhood::N8).unwrap()
    };
    let (a, b) = (build(1.0), build(8.0));
    assert_eq!(a.cells, b.cells);
    for (x, x0) in [(a.cells[3], a.cells[400]), (a.cells[50], a.cells[700])] {
        let ja = john_point(&a, x, x0, None).unwrap().value;
        let jb = john_point(&b, x, x0, None).unwrap().value;
        assert!((ja - jb).abs() <= 1e-9 * ja.max(1.0), "{ja} {jb}");
    }
    assert!((optimal_john(&a).unwrap().value - optimal_john(&b).unwrap().value).abs() <= 1e-9);
}

#[test]
fn center_search_matches_exhaustive_scan() {
    let h = 1.0 / 20.0;
    let grid = GridSpec::square(-1.05, 1.05, h).unwrap();
    assert!(grid.nx <= 48);
    for dom in [
        GridDomain::from_fn(grid, |p| p.norm() < 1.0).unwrap(),
        GridDomain::from_fn(grid, |p| (0.35..1.0).contains(&p.norm())).unwrap(),
        GridDomain::from_fn(grid, |p| p.x.abs() + p.y.abs() < 1.0 && p.y > -0.5).unwrap(),
    ] {
        let gr = JohnGraph::new(&dom, &tri(), Neighborhood::N8).unwrap();
        let opt = optimal_john(&gr).unwrap();
        let (v, _) = exhaustive_center(&gr).unwrap();
        assert!((opt.value - v).abs() <= 1e-9, "{} vs {v}", opt.value);
        assert!(opt.r0 <= opt.r_omega);
    }
}

#[test]
fn lipschitz_and_lower_bound_on_disk() {
    let h = 1.0 / 24.0;
    let dom = disk(h);
    let gr = JohnGraph::new(&dom, &euc(), Neighborhood::N8).unwrap();
    let at = |x: f64, y: f64| dom.grid.cell_of(P2::new(x, y)).unwrap();
    let pairs = vec![
        ((at(0.3, 0.2), at(-0.4, 0.0)), (at(0.3 + h, 0.2), at(-0.4, 0.0))),
        ((at(0.0, 0.5), at(0.1, -0.3)), (at(0.0, 0.5 - h), at(0.1 + h, -0.3))),
        ((at(0.0, 0.0), at(0.5, 0.5)), (at(0.9, 0.0), at(0.5, 0.5))),
    ];
    let rep = lipschitz_probe(&gr, &pairs).unwrap();
    assert_eq!(rep.pairs.len(), 2);
    assert_eq!(rep.skipped.len(), 1);
    assert!(rep.finite && rep.max_ratio < 10.0, "{}", rep.max_ratio);
    let ys: Vec<usize> = gr.cells.iter().copied().step_by(97).collect();
    let lb = lower_bound_check(&gr, &ys).unwrap();
    assert!(lb.all_hold, "{:?}", lb.samples.iter().filter(|s| !s.holds).collect::<Vec<_>>());
    assert_eq!(lb.asymmetry, euc().asymmetry_constant());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn enlarging_never_increases(r in 0.5..0.85f64, ax in -0.2..0.2f64, bx in -0.2..0.2f64, ay in -0.3..0.3f64) {
        let grid = GridSpec::square(-1.1, 1.1, 1.0 / 16.0).unwrap();
        let g = tri();
        let small = GridDomain::from_fn(grid, |p| p.norm() < r).unwrap();
        let big = GridDomain::from_fn(grid, |p| p.norm() < 1.0).unwrap();
        let gs = JohnGraph::new(&small, &g, Neighborhood::N8).unwrap();
        let gb = JohnGraph::new(&big, &g, Neighborhood::N8).unwrap();
        let x = grid.cell_of(P2::new(ax, ay)).unwrap();
        let x0 = grid.cell_of(P2::new(bx, -ay)).unwrap();
        let js = john_point(&gs, x, x0, None).unwrap().value;
        let jb = john_point(&gb, x, x0, None).unwrap().value;
        prop_assert!(jb <= js + 1e-12);
    }
}
