use johnkit::curve::{
    carrot_concat, carrot_region, carrot_reroute, cigar_from_two_carrots, cigar_region, rasterize_balls,
};
use johnkit::grid::{check_inclusion, dilate8};
use johnkit::{ConvexGauge, Error, GridSpec, Polyline, P2};
use proptest::prelude::*;

fn euc() -> ConvexGauge {
    ConvexGauge::euclidean(64).unwrap()
}

fn tri() -> ConvexGauge {
    ConvexGauge::new(vec![P2::new(1.0, 0.0), P2::new(0.0, 1.0), P2::new(-1.0, -1.0)]).unwrap()
}

fn pl(pts: &[[f64; 2]]) -> Polyline {
    Polyline::new(pts.iter().map(|&p| P2::from(p)).collect()).unwrap()
}

fn at(grid: &GridSpec, mask: &[bool], p: P2) -> bool {
    mask[grid.cell_of(p).unwrap()]
}

fn unit_grid(n: usize) -> GridSpec {
    // cell centers on the lattice 3k/n - 1.5, so the axes are sampled exactly
    GridSpec::new(P2::new(-1.5, -1.5), 3.0 / n as f64, n, n).unwrap()
}

#[test]
fn segment_lengths() {
    let g = euc();
    let s = pl(&[[0.0, 0.0], [3.0, 4.0]]);
    assert!((s.total_length(&g) - 5.0).abs() <= 0.01);
    let t = tri();
    let e = pl(&[[0.0, 0.0], [1.0, 0.0]]);
    let fwd = e.total_length(&t);
    let back = e.reversed().total_length(&t);
    assert!((fwd - t.eval(P2::new(1.0, 0.0))).abs() < 1e-15);
    assert!((back - t.eval(P2::new(-1.0, 0.0))).abs() < 1e-15);
    assert!(back <= t.asymmetry_constant() * fwd + 1e-12);
    assert!(back > fwd);
}

#[test]
fn l_shape_additivity() {
    let g = tri();
    let l = pl(&[[0.0, 0.0], [2.0, 0.0], [2.0, 1.0]]);
    let whole = l.length(&g, 0.0, 1.0).unwrap();
    let split = l.length(&g, 0.0, 0.5).unwrap() + l.length(&g, 0.5, 1.0).unwrap();
    assert!((whole - split).abs() <= 1e-12);
    assert!((whole - l.total_length(&g)).abs() <= 1e-12);
    assert!(l.length(&g, 0.7, 0.2).is_err());
}

// Continuum carrot of the segment (0,0)-(1,0) at J: some s in (0,1] with |p - (s,0)| < s/J.
fn segment_carrot_oracle(p: P2, j: f64) -> bool {
    (1..=20_000).any(|k| {
        let s = k as f64 / 20_000.0;
        (p - P2::new(s, 0.0)).norm() < s / j
    })
}

// Continuum cigar of the same segment: radius min(s, 1 - s)/J.
fn segment_cigar_oracle(p: P2, j: f64) -> bool {
    (1..20_000).any(|k| {
        let s = k as f64 / 20_000.0;
        (p - P2::new(s, 0.0)).norm() < s.min(1.0 - s) / j
    })
}

#[test]
fn segment_carrot_membership() {
    let g = euc();
    let grid = unit_grid(120);
    let seg = pl(&[[0.0, 0.0], [1.0, 0.0]]);
    let car = carrot_region(&g, &seg, 1.0, &grid, None).unwrap();
    assert!(at(&grid, &car.cells, P2::new(0.5, 0.4)));
    assert!(!at(&grid, &car.cells, P2::new(0.0, 0.1)));
    assert_eq!(car.pitch, grid.h / 2.0);
    // interior agreement with the continuum oracle away from the rim
    for c in 0..grid.len() {
        let p = grid.center_of(c);
        let inner = segment_carrot_oracle(p, 1.0 / 0.97);
        let outer = segment_carrot_oracle(p, 1.0 / 1.03);
        if inner {
            assert!(car.cells[c], "{p:?} should be inside");
        }
        if !outer {
            assert!(!car.cells[c], "{p:?} should be outside");
        }
    }
    let thin = carrot_region(&g, &seg, 1e6, &grid, None).unwrap();
    for c in (0..grid.len()).filter(|&c| thin.cells[c]) {
        let p = grid.center_of(c);
        assert!(p.y.abs() <= grid.h && (-grid.h..=1.0 + grid.h).contains(&p.x));
    }
    assert!(carrot_region(&g, &seg, 0.5, &grid, None).is_err());
    assert!(carrot_region(&g, &seg.clone().with_infinity(true), 1.0, &grid, None).is_err());
}

#[test]
fn segment_cigar() {
    let g = euc();
    let grid = unit_grid(120);
    let seg = pl(&[[0.0, 0.0], [1.0, 0.0]]);
    let cig = cigar_region(&g, &seg, 1.0, &grid).unwrap();
    assert!(at(&grid, &cig.cells, P2::new(0.5, 0.4)));
    assert!(!at(&grid, &cig.cells, P2::new(0.0, 0.1)));
    // the ball at (0.2, 0) has radius 0.2 and reaches (0.05, 0.1)
    assert!(segment_cigar_oracle(P2::new(0.05, 0.1), 1.0));
    assert!(at(&grid, &cig.cells, P2::new(0.05, 0.1)));
    for c in 0..grid.len() {
        let p = grid.center_of(c);
        if segment_cigar_oracle(p, 1.0 / 0.97) {
            assert!(cig.cells[c], "{p:?} should be inside");
        }
        if !segment_cigar_oracle(p, 1.0 / 1.03) {
            assert!(!cig.cells[c], "{p:?} should be outside");
        }
    }
    let car = carrot_region(&g, &seg, 1.0, &grid, None).unwrap();
    let rev = carrot_region(&g, &seg.reversed(), 1.0, &grid, None).unwrap();
    let both: Vec<bool> = car.cells.iter().zip(&rev.cells).map(|(&a, &b)| a && b).collect();
    assert!(check_inclusion(&grid, &cig.cells, &both).holds);
    let tiny = pl(&[[0.3, 0.3], [0.3 + 1e-6, 0.3]]);
    assert_eq!(cigar_region(&g, &tiny, 1.0, &grid).unwrap().count(), 0);
    // length 2 segment: the middle ball has radius 1
    let grid2 = GridSpec::new(P2::new(-1.5, -1.5), 1.0 / 32.0, 97, 97).unwrap();
    let long = pl(&[[-1.0, 0.0], [1.0, 0.0]]);
    let cig = cigar_region(&g, &long, 1.0, &grid2).unwrap();
    assert!(at(&grid2, &cig.cells, P2::new(0.0, 0.95)));
    assert!(!at(&grid2, &cig.cells, P2::new(0.0, 1.05)));
}

#[test]
fn reroute_examples() {
    let g = euc();
    let grid = unit_grid(128);
    let seg = pl(&[[0.0, 0.0], [1.0, 0.0]]);
    let (gz, cert) = carrot_reroute(&g, &seg, 1.0, P2::new(0.5, 0.25), &grid).unwrap();
    assert!((cert.eta - P2::new(0.5, 0.0)).norm() <= grid.h);
    assert_eq!(gz.vertices().len(), 3);
    assert!(cert.lengths_ok && cert.inclusion.holds);
    let (gz, cert) = carrot_reroute(&g, &seg, 1.0, P2::new(0.5, 0.0), &grid).unwrap();
    assert!(cert.lengths_ok);
    assert!((gz.start() - P2::new(0.5, 0.0)).norm() <= grid.h && gz.end() == P2::new(1.0, 0.0));
    assert!(matches!(
        carrot_reroute(&g, &seg, 1.0, P2::new(-0.5, 0.8), &grid),
        Err(Error::Invalid(_))
    ));
    assert!(matches!(
        carrot_reroute(&tri(), &seg, 1.0, P2::new(0.5, 0.1), &grid),
        Err(Error::EuclideanOnly(_))
    ));
}

#[test]
fn concat_examples() {
    let g = euc();
    let grid = unit_grid(128);
    let g1 = pl(&[[0.0, -0.5], [1.0, -0.5], [1.5, 0.5]]);
    let y2 = g1.point_at(0.4);
    let point = Polyline::new(vec![y2]).unwrap();
    let w = g1.point_at(0.9);
    let (hat, cert) = carrot_concat(&g, &g1, &point, 2.0, 2.0, w, &grid).unwrap();
    assert!(cert.inclusion.holds);
    assert!((hat.start() - y2).norm() < 1e-12 && (hat.end() - w).norm() < 1e-12);
    let g2 = pl(&[[y2.x - 0.1, y2.y + 0.1], [y2.x, y2.y]]);
    assert!(g2.total_length(&g) <= g1.length(&g, 0.0, 0.4).unwrap());
    let (_, cert) = carrot_concat(&g, &g1, &g2, 2.0, 2.0, w, &grid).unwrap();
    assert!(cert.inclusion.holds && cert.slack >= 0.0);
    let far = pl(&[[-0.9, 1.4], [y2.x, y2.y]]);
    match carrot_concat(&g, &g1, &far, 2.0, 2.0, w, &grid) {
        Err(Error::ConcatOrder { slack }) => assert!(slack < 0.0),
        other => panic!("{other:?}"),
    }
    let off = pl(&[[0.0, 0.5], [0.1, 0.5]]);
    assert!(carrot_concat(&g, &g1, &off, 2.0, 2.0, w, &grid).is_err());
}

#[test]
fn cigar_ball_examples() {
    let g = euc();
    let grid = unit_grid(128);
    let z = P2::new(0.5, 0.0);
    let a1 = pl(&[[0.0, 0.5], [0.5, 0.0]]);
    let a2 = pl(&[[1.0, 0.5], [0.5, 0.0]]);
    let (a, r, cert) = cigar_from_two_carrots(&g, &a1, &a2, 1.0, &grid).unwrap();
    assert!((a - z).norm() < 1e-9);
    assert!((r - a1.total_length(&g)).abs() < 1e-9);
    assert!(cert.inclusion.holds);
    let long = pl(&[[-1.0, 0.0], [2.0, 0.0]]);
    let short = pl(&[[2.0, 1.0], [2.0, 0.0]]);
    let (a, r, cert) = cigar_from_two_carrots(&g, &long, &short, 1.0, &grid).unwrap();
    let l = long.total_length(&g);
    // the 64-gon shrinks lengths uniformly along an axis, so a sits 2/3 along
    assert!((a - P2::new(1.0, 0.0)).norm() < 1e-9, "{a:?}");
    assert!((r - 2.0 / 3.0 * l).abs() < 1e-9);
    assert!(cert.identity_residual <= 1e-9 && cert.inclusion.holds);
    let other = pl(&[[2.0, 1.0], [2.0, 0.5]]);
    assert!(cigar_from_two_carrots(&g, &long, &other, 1.0, &grid).is_err());
}

#[test]
fn rasterized_balls_match_per_cell_test() {
    let g = tri();
    let grid = unit_grid(64);
    let balls = [(P2::new(0.1, 0.2), 0.4), (P2::new(0.9, -0.6), 0.25), (P2::new(-2.0, 0.0), 1.2)];
    let mask = rasterize_balls(&g, &grid, &balls);
    for c in 0..grid.len() {
        let p = grid.center_of(c);
        let want = balls.iter().any(|&(b, r)| g.eval(b - p) < r);
        assert_eq!(mask[c], want, "{p:?}");
    }
}

fn random_polyline() -> impl Strategy<Value = Polyline> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..8)
        .prop_map(|v| Polyline::new(v.into_iter().map(|(x, y)| P2::new(x, y)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn reverse_length_bounded(c in random_polyline()) {
        let g = tri();
        prop_assert!(c.reversed().total_length(&g) <= g.asymmetry_constant() * c.total_length(&g) + 1e-12);
    }

    #[test]
    fn subcurve_lengths_add(c in random_polyline(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let g = tri();
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let parts = c.length(&g, 0.0, a).unwrap() + c.length(&g, a, b).unwrap() + c.length(&g, b, 1.0).unwrap();
        prop_assert!((parts - c.total_length(&g)).abs() <= 1e-12 * (1.0 + parts));
        prop_assert!(c.length(&g, 0.0, a).unwrap() <= c.length(&g, 0.0, b).unwrap() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn carrots_shrink_with_j(c in random_polyline(), j in 1.0..4.0f64, dj in 0.0..3.0f64) {
        let g = euc();
        let grid = unit_grid(64);
        let wide = carrot_region(&g, &c, j, &grid, None).unwrap();
        let narrow = carrot_region(&g, &c, j + dj, &grid, None).unwrap();
        prop_assert!(narrow.cells.iter().zip(&wide.cells).all(|(&n, &w)| !n || w));
    }

    #[test]
    fn perturbed_carrots_cover_the_limit(c in random_polyline(), j in 1.0..3.0f64, m in 1usize..4) {
        // γ_i = γ + e_i/i with J_i = J(1 + 1/i): the union over i >= m covers car(γ, J)
        let g = euc();
        let grid = unit_grid(64);
        let limit = carrot_region(&g, &c, j, &grid, None).unwrap();
        let mut union = vec![false; grid.len()];
        let mut lens = Vec::new();
        for i in m..m + 40 {
            let eps = 0.05 / i as f64;
            let bumped: Vec<P2> = c
                .vertices()
                .iter()
                .enumerate()
                .map(|(k, &v)| v + P2::new(eps * (k as f64).sin(), eps * (k as f64).cos()))
                .collect();
            let ci = Polyline::new(bumped).unwrap();
            lens.push(ci.total_length(&g));
            let car = carrot_region(&g, &ci, j * (1.0 + 1.0 / i as f64), &grid, None).unwrap();
            for (u, &b) in union.iter_mut().zip(&car.cells) {
                *u |= b;
            }
        }
        prop_assert!(check_inclusion(&grid, &limit.cells, &dilate8(&grid, &union)).holds);
        let tail_min = lens[lens.len() / 2..].iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(c.total_length(&g) <= tail_min + 0.05 * c.vertices().len() as f64 * 2.0 / (m + 20) as f64 + 1e-9);
    }
}
