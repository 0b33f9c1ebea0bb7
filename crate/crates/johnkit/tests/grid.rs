use johnkit::grid::{hausdorff_distance, keep_distance_check, limsup_closure};
use johnkit::{CompactSet, ConvexGauge, Error, GridDomain, GridSpec, P2};
use proptest::prelude::*;

fn euc() -> ConvexGauge {
    ConvexGauge::euclidean(64).unwrap()
}

fn tri() -> ConvexGauge {
    ConvexGauge::new(vec![P2::new(1.0, 0.0), P2::new(0.0, 1.0), P2::new(-1.0, -1.0)]).unwrap()
}

fn disk(h: f64, r: f64) -> GridDomain {
    let grid = GridSpec::square(-1.0 - 3.0 * h, 1.0 + 3.0 * h, h).unwrap();
    GridDomain::from_fn(grid, |p| p.norm() < r).unwrap()
}

#[test]
fn disk_center_distance() {
    let h = 1.0 / 64.0;
    let dom = disk(h, 1.0);
    let g = euc();
    let field = dom.distance_field(&g).unwrap();
    let c = dom.grid.cell_of(P2::ZERO).unwrap();
    assert!((field[c] - 1.0).abs() <= 2.0 * h, "{}", field[c]);
    let (x, r) = dom.inradius_point(&field).unwrap();
    assert!(dom.grid.center_of(x).norm() <= 2.0 * h);
    assert!((r - 1.0).abs() <= 2.0 * h);
}

#[test]
fn square_linf_center_distance() {
    let h = 1.0 / 32.0;
    let grid = GridSpec::square(-1.1, 1.1, h).unwrap();
    let dom = GridDomain::from_fn(grid, |p| p.x.abs() < 1.0 && p.y.abs() < 1.0).unwrap();
    let field = dom.distance_field(&ConvexGauge::linf()).unwrap();
    let c = grid.cell_of(P2::new(h / 2.0, h / 2.0)).unwrap();
    assert!((field[c] - 1.0).abs() <= 2.0 * h);
}

#[test]
fn triangle_field_matches_brute_force() {
    let grid = GridSpec::new(P2::new(-1.1, -1.1), 2.2 / 31.0, 32, 32).unwrap();
    let dom = GridDomain::from_fn(grid, |p| p.norm() < 1.0).unwrap();
    let g = tri();
    let field = dom.distance_field(&g).unwrap();
    for c in dom.inside_cells() {
        let x = grid.center_of(c);
        let want = (0..grid.len())
            .filter(|&b| !dom.inside[b])
            .filter(|&b| dom.outer.contains(&b))
            .map(|b| g.eval(x - grid.center_of(b)))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(field[c], want);
        // an infimum over every complement cell as well
        for b in (0..grid.len()).filter(|&b| !dom.inside[b]) {
            assert!(field[c] <= g.eval(x - grid.center_of(b)) + 1e-12);
        }
    }
}

#[test]
fn large_grid_field_matches_brute_force() {
    // above the brute-force threshold the seeded propagation is used
    let h = 2.4 / 160.0;
    let grid = GridSpec::new(P2::new(-1.2, -1.2), h, 161, 161).unwrap();
    let dom = GridDomain::from_fn(grid, |p| {
        let q = p - P2::new(0.2, 0.0);
        p.norm() < 1.0 && !(q.x > 0.0 && q.y.abs() < 0.1)
    })
    .unwrap();
    let g = tri();
    let field = dom.distance_field(&g).unwrap();
    let inside = dom.inside_cells();
    for &c in inside.iter().step_by(37) {
        let x = grid.center_of(c);
        let want = dom
            .outer
            .iter()
            .map(|&b| g.eval(x - grid.center_of(b)))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(field[c], want);
    }
}

#[test]
fn whole_grid_has_no_boundary() {
    let grid = GridSpec::square(0.0, 1.0, 0.25).unwrap();
    let dom = GridDomain::from_fn(grid, |_| true).unwrap();
    assert_eq!(dom.distance_field(&euc()), Err(Error::NoBoundary));
}

#[test]
fn empty_domain_has_no_inradius() {
    let grid = GridSpec::square(0.0, 1.0, 0.25).unwrap();
    let dom = GridDomain::from_fn(grid, |_| false).unwrap();
    assert_eq!(dom.inradius_point(&vec![0.0; grid.len()]), Err(Error::EmptyDomain));
}

#[test]
fn annulus_inradius() {
    let h = 1.0 / 64.0;
    let grid = GridSpec::square(-1.1, 1.1, h).unwrap();
    let dom = GridDomain::from_fn(grid, |p| (0.5..1.0).contains(&p.norm()) && p.norm() > 0.5).unwrap();
    let field = dom.distance_field(&euc()).unwrap();
    let (x, r) = dom.inradius_point(&field).unwrap();
    assert!((r - 0.25).abs() <= 2.0 * h, "{r}");
    assert!((grid.center_of(x).norm() - 0.75).abs() <= 2.0 * h);
    // ties go to the first index attaining the max
    let first = (0..grid.len()).find(|&c| dom.inside[c] && field[c] == r).unwrap();
    assert_eq!(x, first);
}

#[test]
fn slit_disk_inradius_is_deterministic() {
    let grid = GridSpec::square(-1.05, 1.05, 1.0 / 64.0).unwrap();
    let dom = johnkit::limits::slit_disk(3, &grid).unwrap();
    let field = dom.distance_field(&euc()).unwrap();
    let a = dom.inradius_point(&field).unwrap();
    let b = dom.inradius_point(&dom.distance_field(&euc()).unwrap()).unwrap();
    assert_eq!(a, b);
    assert!(dom.inside[a.0]);
}

fn set(grid: GridSpec, f: impl Fn(P2) -> bool) -> CompactSet {
    CompactSet::from_fn(grid, f)
}

#[test]
fn hausdorff_examples() {
    let h = 1.0 / 32.0;
    let grid = GridSpec::new(P2::new(-1.5 + h / 2.0, -1.5 + h / 2.0), h, 96, 96).unwrap();
    let g = euc();
    let a = set(grid, |p| p.norm() <= 1.0);
    assert_eq!(hausdorff_distance(&a, &a, &g).unwrap(), 0.0);
    let o = grid.cell_of(P2::ZERO).unwrap();
    let e = grid.cell_of(P2::new(1.0, 0.0)).unwrap();
    let mut pa = vec![false; grid.len()];
    pa[o] = true;
    let mut pb = vec![false; grid.len()];
    pb[e] = true;
    let d = hausdorff_distance(&CompactSet::new(grid, pa).unwrap(), &CompactSet::new(grid, pb).unwrap(), &g).unwrap();
    let want = (grid.center_of(e) - grid.center_of(o)).norm();
    assert!((d - want).abs() < 1e-12 && (d - 1.0).abs() <= h);
    let b = set(grid, |p| p.norm() <= 0.5);
    let d = hausdorff_distance(&a, &b, &g).unwrap();
    assert!((d - 0.5).abs() <= 2.0 * h, "{d}");
    let empty = set(grid, |_| false);
    assert!(hausdorff_distance(&a, &empty, &g).is_err());
}

#[test]
fn limsup_examples() {
    let h = 1.0 / 32.0;
    let grid = GridSpec::square(-1.6, 1.6, h).unwrap();
    let g = euc();
    let k = set(grid, |p| p.norm() <= 1.0);
    assert_eq!(limsup_closure(&vec![k.clone(); 5]).unwrap().cells, k.cells);
    let shrinking: Vec<CompactSet> = (1..=40)
        .map(|j| set(grid, move |p| p.norm() <= 1.0 + 1.0 / (j as f64 * 4.0)))
        .collect();
    let lim = limsup_closure(&shrinking).unwrap();
    // the truncation keeps the tail from index 20 on: radius 1 + 1/80
    assert!(hausdorff_distance(&lim, &k, &g).unwrap() <= 2.0 * h);
    let a = set(grid, |p| p.x < 0.0 && p.norm() <= 1.0);
    let b = set(grid, |p| p.x > 0.0 && p.norm() <= 1.0);
    let alt: Vec<CompactSet> = (0..6).map(|j| if j % 2 == 0 { a.clone() } else { b.clone() }).collect();
    let union: Vec<bool> = a.cells.iter().zip(&b.cells).map(|(&x, &y)| x || y).collect();
    assert_eq!(limsup_closure(&alt).unwrap().cells, union);
    assert!(limsup_closure(&[]).is_err());
}

#[test]
fn keep_distance_examples() {
    let h = 1.0 / 32.0;
    let grid = GridSpec::square(-1.6, 1.6, h).unwrap();
    let g = euc();
    let x = P2::new(h / 2.0, h / 2.0);
    let closed = vec![set(grid, |p| p.norm() <= 1.0); 6];
    let rep = keep_distance_check(&closed, &[x; 6], 1.0 - h, &g).unwrap();
    assert_eq!(rep.status, "pass");
    assert!(rep.margin >= 0.0 && rep.margin <= 6.0 * h, "{rep:?}");
    let shrinking: Vec<CompactSet> = (1..=8)
        .map(|j| set(grid, move |p| p.norm() <= 1.0 + 1.0 / j as f64))
        .collect();
    assert_eq!(keep_distance_check(&shrinking, &[x; 8], 1.0 - h, &g).unwrap().status, "pass");
    let to_edge: Vec<P2> = (1..=12).map(|j| P2::new(1.0 - 1.0 / (j * j) as f64, 0.0)).collect();
    // distances to complement cell centers never drop below about h
    let rep = keep_distance_check(&vec![closed[0].clone(); 12], &to_edge, 2.0 * h, &g).unwrap();
    assert_eq!(rep.status, "hypothesis_failed", "{rep:?}");
    assert!(rep.failed_at.is_some());
}

fn random_set(grid: GridSpec, seed: u64) -> CompactSet {
    let mut cells = vec![false; grid.len()];
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    for c in cells.iter_mut() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *c = (s >> 33) % 5 == 0;
    }
    cells[(seed as usize) % grid.len()] = true;
    CompactSet::new(grid, cells).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hausdorff_is_a_metric(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let grid = GridSpec::square(0.0, 1.0, 1.0 / 12.0).unwrap();
        let g = euc();
        let (a, b, c) = (random_set(grid, s1), random_set(grid, s2), random_set(grid, s3));
        prop_assert_eq!(hausdorff_distance(&a, &a, &g).unwrap(), 0.0);
        let ab = hausdorff_distance(&a, &b, &g).unwrap();
        prop_assert!((ab - hausdorff_distance(&b, &a, &g).unwrap()).abs() <= 1e-12);
        let ac = hausdorff_distance(&a, &c, &g).unwrap();
        let bc = hausdorff_distance(&b, &c, &g).unwrap();
        prop_assert!(ab + bc - ac >= -1e-9);
    }

    #[test]
    fn field_positive_inside(r in 0.3..0.95f64, cx in -0.2..0.2f64) {
        let grid = GridSpec::square(-1.1, 1.1, 1.0 / 16.0).unwrap();
        let dom = GridDomain::from_fn(grid, |p| (p - P2::new(cx, 0.0)).norm() < r).unwrap();
        let field = dom.distance_field(&tri()).unwrap();
        for c in dom.inside_cells() {
            prop_assert!(field[c] > 0.0);
        }
    }
}
