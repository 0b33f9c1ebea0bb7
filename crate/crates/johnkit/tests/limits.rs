use johnkit::john::optimal_john;
use johnkit::limits::{
    ball_minimality_check, euclidean_competitors, lsc_experiment, reflected_ball, slit_disk, Generator,
    SequenceScenario,
};
use johnkit::{ConvexGauge, Error, GridDomain, GridSpec, JohnGraph, Neighborhood, P2};

fn scenario(generator: Generator, k_min: u32, k_max: u32, h: f64) -> SequenceScenario {
    SequenceScenario {
        name: "t".into(),
        generator,
        k_min,
        k_max,
        gauge: "euclidean:64".into(),
        h,
        half_width: 1.0,
        tol: 0.1,
        neighborhood: 8,
    }
}

#[test]
fn constant_sequence_has_no_gap() {
    let rep = lsc_experiment(&scenario(Generator::ConstantDisk, 1, 3, 1.0 / 16.0)).unwrap();
    assert_eq!(rep.rows.len(), 3);
    assert!(rep.rows.iter().all(|r| r.john == rep.rows[0].john && r.hausdorff_to_limit == 0.0));
    assert!(rep.gap.unwrap().abs() <= 0.1, "{:?}", rep.gap);
    assert_eq!(rep.status, "ok");
    assert!(rep.csv().starts_with("k,john,d_h\n1,"));
}

#[test]
fn bump_sequence_converges_to_the_disk() {
    let mut s = scenario(Generator::BumpDisk, 2, 5, 1.0 / 16.0);
    s.half_width = 1.6;
    let rep = lsc_experiment(&s).unwrap();
    assert!(rep.hausdorff_monotone, "{:?}", rep.rows);
    assert_eq!(rep.limit_components, 1);
    assert!(rep.lsc_holds, "{rep:?}");
}

#[test]
fn slit_sequence_gap() {
    let rep = lsc_experiment(&scenario(Generator::SlitDisk, 2, 4, 1.0 / 32.0)).unwrap();
    assert!(rep.min_john >= 1.2, "{}", rep.min_john);
    assert!(rep.limit_john.unwrap() <= 1.1, "{:?}", rep.limit_john);
    assert!(rep.gap.unwrap() > 0.0);
    assert!(rep.lsc_holds);
    assert!(rep.hausdorff_monotone);
}

#[test]
fn slit_resolution_is_gated() {
    let grid = GridSpec::square(-1.1, 1.1, 1.0 / 32.0).unwrap();
    assert!(matches!(slit_disk(5, &grid), Err(Error::RefineGrid(_))));
    let err = lsc_experiment(&scenario(Generator::SlitDisk, 2, 6, 1.0 / 32.0)).unwrap_err();
    assert!(matches!(err, Error::RefineGrid(_)));
    assert!(SequenceScenario::from_toml("name='x'\ngenerator='slit_disk'\nk_min=3\nk_max=2\nh=0.1").is_err());
    assert!(SequenceScenario::from_toml("name='x'\ngenerator='slit_disk'\nk_min=1\nk_max=2\nh=0.1\nneighborhood=4").is_err());
}

#[test]
fn john_is_translation_invariant() {
    let h = 1.0 / 16.0;
    let grid = GridSpec::square(-1.6, 1.6, h).unwrap();
    let shape = |c: P2| move |p: P2| (p - c).norm() < 1.0 && (p - c).y > -0.6;
    let g = ConvexGauge::new(vec![P2::new(1.0, 0.0), P2::new(0.0, 1.0), P2::new(-1.0, -1.0)]).unwrap();
    let a = GridDomain::from_fn(grid, shape(P2::ZERO)).unwrap();
    let b = GridDomain::from_fn(grid, shape(P2::new(3.0 * h, -4.0 * h))).unwrap();
    assert_eq!(a.count_inside(), b.count_inside());
    let ja = optimal_john(&JohnGraph::new(&a, &g, Neighborhood::N8).unwrap()).unwrap();
    let jb = optimal_john(&JohnGraph::new(&b, &g, Neighborhood::N8).unwrap()).unwrap();
    assert!((ja.value - jb.value).abs() <= 1e-9, "{} {}", ja.value, jb.value);
    let (ia, ja_) = grid.coords(ja.center);
    let (ib, jb_) = grid.coords(jb.center);
    assert_eq!((ib as i64 - ia as i64, jb_ as i64 - ja_ as i64), (3, -4));
}

#[test]
fn euclidean_ball_is_minimal() {
    let grid = GridSpec::square(-1.5, 1.5, 1.0 / 16.0).unwrap();
    let g = ConvexGauge::euclidean(64).unwrap();
    let comps = euclidean_competitors(&grid).unwrap();
    let rep = ball_minimality_check(&g, &grid, &comps, Neighborhood::N8, 0.1).unwrap();
    assert!(rep.ball_near_one, "{}", rep.ball_john);
    assert!(rep.all_hold, "{rep:?}");
    assert_eq!(rep.competitors.len(), 3);
}

#[test]
fn reflected_triangle_is_minimal() {
    let g = ConvexGauge::new(vec![P2::new(1.0, 0.0), P2::new(0.0, 1.0), P2::new(-1.0, -1.0)]).unwrap();
    let grid = GridSpec::square(-1.6, 1.6, 1.0 / 16.0).unwrap();
    let ball = reflected_ball(&g, &grid).unwrap();
    assert!(ball.inside[grid.cell_of(P2::new(-0.9, 0.0)).unwrap()]);
    assert!(!ball.inside[grid.cell_of(P2::new(0.9, 0.0)).unwrap()]);
    let side = (ball.count_inside() as f64).sqrt() * grid.h / 2.0;
    let square = GridDomain::from_fn(grid, |p| p.x.abs() < side && p.y.abs() < side).unwrap();
    let disk_r = (ball.count_inside() as f64 * grid.h * grid.h / std::f64::consts::PI).sqrt();
    let disk = GridDomain::from_fn(grid, |p| p.norm() < disk_r).unwrap();
    let comps = vec![("square".to_string(), square), ("disk".to_string(), disk)];
    let rep = ball_minimality_check(&g, &grid, &comps, Neighborhood::N8, 0.1).unwrap();
    assert!(rep.all_hold, "{rep:?}");
    assert!(rep.competitors.iter().all(|c| c.john.is_some()), "{rep:?}");
    let other = GridSpec::square(-1.0, 1.0, 1.0 / 16.0).unwrap();
    let bad = vec![("elsewhere".to_string(), GridDomain::from_fn(other, |p| p.norm() < 0.5).unwrap())];
    assert!(ball_minimality_check(&g, &grid, &bad, Neighborhood::N8, 0.1).is_err());
}
