//! Hausdorff-convergent domain sequences and lower semicontinuity of the
//! John constant.

use crate::error::{invalid, Error, Result};
use crate::gauge::ConvexGauge;
use crate::geom::P2;
use crate::grid::{hausdorff_distance, limsup_closure, CompactSet, GridDomain, GridSpec};
use crate::john::{optimal_john, JohnGraph, Neighborhood, OptimalJohn};
use serde::{Deserialize, Serialize};

/// Unit disk minus the closed strip `[0,1] × [-2^-k, 2^-k]`.
pub fn slit_disk(k: u32, grid: &GridSpec) -> Result<GridDomain> {
    if k < 1 {
        return invalid("slit index must be at least 1");
    }
    let w = 0.5f64.powi(k as i32);
    if w < 2.0 * grid.h {
        return Err(Error::RefineGrid(format!(
            "slit half-width {w} is below 2h = {}",
            2.0 * grid.h
        )));
    }
    GridDomain::from_fn(*grid, |p| {
        p.norm() < 1.0 && !(p.x >= 0.0 && p.x <= 1.0 && p.y.abs() <= w)
    })
}

/// Closed unit disk as the limit of the slit disks: the slit shrunk to one
/// cell row and then closed.
pub fn slit_disk_limit(grid: &GridSpec) -> Result<CompactSet> {
    let h = grid.h;
    let dom = GridDomain::from_fn(*grid, |p| {
        p.norm() < 1.0 && !(p.x >= 0.0 && p.y.abs() < 0.5 * h)
    })?;
    Ok(closure(&dom))
}

/// Mask of `Ω̄`: the inside plus the complement boundary layer.
pub fn closure(dom: &GridDomain) -> CompactSet {
    let mut cells = dom.inside.clone();
    for &c in &dom.outer {
        cells[c] = true;
    }
    CompactSet {
        grid: dom.grid,
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Slit disks `Ω_k`.
    SlitDisk,
    /// The unit disk for every `k`.
    ConstantDisk,
    /// Unit disk joined with a disk of radius `1/k` centred at `(1, 0)`.
    BumpDisk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceScenario {
    pub name: String,
    pub generator: Generator,
    pub k_min: u32,
    pub k_max: u32,
    #[serde(default = "default_gauge")]
    pub gauge: String,
    pub h: f64,
    /// Half side of the square grid window.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_nb")]
    pub neighborhood: u8,
}

fn default_gauge() -> String {
    "euclidean:64".into()
}
fn default_half_width() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    0.1
}
fn default_nb() -> u8 {
    8
}

pub fn parse_neighborhood(n: u8) -> Result<Neighborhood> {
    match n {
        8 => Ok(Neighborhood::N8),
        16 => Ok(Neighborhood::N16),
        _ => invalid(format!("neighborhood must be 8 or 16, got {n}")),
    }
}

impl SequenceScenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: SequenceScenario =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("scenario toml: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 1 || self.k_max < self.k_min {
            return invalid("need 1 <= k_min <= k_max");
        }
        if !(self.h > 0.0) || !(self.half_width > 0.0) || !(self.tol >= 0.0) {
            return invalid("h, half_width must be positive and tol nonnegative");
        }
        parse_neighborhood(self.neighborhood)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let m = self.half_width + 3.0 * self.h;
        GridSpec::square(-m, m, self.h)
    }

    pub fn domain(&self, k: u32) -> Result<GridDomain> {
        let grid = self.grid()?;
        match self.generator {
            Generator::SlitDisk => slit_disk(k, &grid),
            Generator::ConstantDisk => GridDomain::from_fn(grid, |p| p.norm() < 1.0),
            Generator::BumpDisk => {
                let r = 1.0 / k as f64;
                GridDomain::from_fn(grid, |p| {
                    p.norm() < 1.0 || (p - P2::new(1.0, 0.0)).norm() < r
                })
            }
        }
    }

    /// Known limit of the closures, when the generator has one.
    pub fn limit_hint(&self) -> Result<Option<CompactSet>> {
        let grid = self.grid()?;
        Ok(match self.generator {
            Generator::SlitDisk => Some(slit_disk_limit(&grid)?),
            Generator::ConstantDisk | Generator::BumpDisk => {
                Some(closure(&GridDomain::from_fn(grid, |p| p.norm() < 1.0)?))
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LscRow {
    pub k: u32,
    pub john: f64,
    pub center: [usize; 2],
    pub inradius: f64,
    pub hausdorff_to_limit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LscReport {
    pub name: String,
    pub rows: Vec<LscRow>,
    pub min_john: f64,
    pub limit_john: Option<f64>,
    pub limit_center: Option<[usize; 2]>,
    pub limit_inradius: f64,
    pub limit_components: usize,
    /// `min_k John(Ω_k) - John(Ω)`; positive means strict inequality.
    pub gap: Option<f64>,
    pub tol: f64,
    pub lsc_holds: bool,
    pub hausdorff_monotone: bool,
    pub hausdorff_final_below_4h: bool,
    /// `d_H` between the truncated limsup of the closures and the limit used.
    pub limsup_to_limit: f64,
    /// "ok", "lsc_failed", "not_converged" or "limit not a domain".
    pub status: String,
}

impl LscReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("k,john,d_h\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{}\n",
                r.k,
                crate::report::fmt_g9(r.john),
                crate::report::fmt_g9(r.hausdorff_to_limit)
            ));
        }
        s
    }
}

fn count_components(set: &CompactSet) -> usize {
    let dom = GridDomain::new(set.grid, set.cells.clone()).expect("same grid");
    let mut seen = vec![false; set.grid.len()];
    let mut count = 0;
    for s in 0..set.grid.len() {
        if !set.cells[s] || seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(c) = stack.pop() {
            for &(di, dj) in &crate::grid::NEIGHBORS_8 {
                if let Some(n) = dom.step_ok(c, di, dj) {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
    }
    count
}

/// Runs `John(Ω_k)` for `k_min..=k_max`, forms the limit of the closures and
/// checks `John(Ω) <= min_k John(Ω_k) + tol` on its interior.
pub fn lsc_experiment(s: &SequenceScenario) -> Result<LscReport> {
    s.validate()?;
    let g = ConvexGauge::parse(&s.gauge)?;
    let nb = parse_neighborhood(s.neighborhood)?;
    let grid = s.grid()?;
    let doms = (s.k_min..=s.k_max)
        .map(|k| s.domain(k))
        .collect::<Result<Vec<_>>>()?;
    let closures: Vec<CompactSet> = doms.iter().map(closure).collect();
    let limsup = limsup_closure(&closures)?;
    let limit = s.limit_hint()?.unwrap_or_else(|| limsup.clone());
    let limsup_to_limit = hausdorff_distance(&limsup, &limit, &g)?;

    let mut rows = Vec::new();
    for (k, dom) in (s.k_min..=s.k_max).zip(&doms) {
        let gr = JohnGraph::new(dom, &g, nb)?;
        let o = optimal_john(&gr)?;
        rows.push(LscRow {
            k,
            john: o.value,
            center: grid.coords(o.center).into(),
            inradius: o.r_omega,
            hausdorff_to_limit: hausdorff_distance(&closures[(k - s.k_min) as usize], &limit, &g)?,
        });
    }
    let min_john = rows.iter().map(|r| r.john).fold(f64::INFINITY, f64::min);
    let dh: Vec<f64> = rows.iter().map(|r| r.hausdorff_to_limit).collect();
    let hausdorff_monotone = dh.windows(2).all(|w| w[1] <= w[0]);
    let hausdorff_final_below_4h = *dh.last().unwrap() < 4.0 * grid.h;

    let interior = limit.interior();
    let components = count_components(&interior);
    let mut report = LscReport {
        name: s.name.clone(),
        rows,
        min_john,
        limit_john: None,
        limit_center: None,
        limit_inradius: 0.0,
        limit_components: components,
        gap: None,
        tol: s.tol,
        lsc_holds: false,
        hausdorff_monotone,
        hausdorff_final_below_4h,
        limsup_to_limit,
        status: String::new(),
    };
    if components != 1 {
        report.status = "limit not a domain".into();
        return Ok(report);
    }
    let ldom = GridDomain::new(grid, interior.cells)?;
    let lgr = JohnGraph::new(&ldom, &g, nb)?;
    let lo: OptimalJohn = optimal_john(&lgr)?;
    report.limit_john = Some(lo.value);
    report.limit_center = Some(grid.coords(lo.center).into());
    report.limit_inradius = lo.r_omega;
    report.gap = Some(min_john - lo.value);
    report.lsc_holds = lo.value <= min_john + s.tol && lo.r_omega > 0.0;
    report.status = if !(hausdorff_monotone && hausdorff_final_below_4h) {
        "not_converged"
    } else if report.lsc_holds {
        "ok"
    } else {
        "lsc_failed"
    }
    .into();
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct Competitor {
    pub name: String,
    pub area_ratio: f64,
    pub john: Option<f64>,
    pub skipped: Option<String>,
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalityReport {
    pub ball_john: f64,
    pub ball_near_one: bool,
    pub competitors: Vec<Competitor>,
    pub tol: f64,
    pub all_hold: bool,
}

/// Mask of the reflected unit body `D = -K`: `{p : gauge(-p) < 1}`, restricted
/// to the component of the origin cell. Sharp tips can rasterize into cells
/// that touch the rest only at corners.
pub fn reflected_ball(g: &ConvexGauge, grid: &GridSpec) -> Result<GridDomain> {
    let raw = GridDomain::from_fn(*grid, |p| g.eval(-p) < 1.0)?;
    let start = grid
        .cell_of(P2::ZERO)
        .filter(|&c| raw.inside[c])
        .ok_or_else(|| Error::Invalid("grid does not hold the origin".into()))?;
    let mut keep = vec![false; grid.len()];
    keep[start] = true;
    let mut stack = vec![start];
    while let Some(c) = stack.pop() {
        for &(di, dj) in &crate::grid::NEIGHBORS_8 {
            if let Some(n) = raw.step_ok(c, di, dj) {
                if !keep[n] {
                    keep[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    GridDomain::new(*grid, keep)
}

/// Checks that the reflected body minimizes the John constant among the
/// given competitors of equal area (within 2%), all inside the grid window.
pub fn ball_minimality_check(
    g: &ConvexGauge,
    grid: &GridSpec,
    competitors: &[(String, GridDomain)],
    nb: Neighborhood,
    tol: f64,
) -> Result<MinimalityReport> {
    let ball = reflected_ball(g, grid)?;
    let area = ball.count_inside() as f64;
    let ball_john = optimal_john(&JohnGraph::new(&ball, g, nb)?)?.value;
    let mut out = Vec::new();
    for (name, dom) in competitors {
        if dom.grid != *grid {
            return invalid(format!("competitor {name} lives on another grid"));
        }
        let ratio = dom.count_inside() as f64 / area;
        if (ratio - 1.0).abs() > 0.02 {
            out.push(Competitor {
                name: name.clone(),
                area_ratio: ratio,
                john: None,
                skipped: Some("area differs by more than 2%".into()),
                holds: None,
            });
            continue;
        }
        let j = optimal_john(&JohnGraph::new(dom, g, nb)?)?.value;
        out.push(Competitor {
            name: name.clone(),
            area_ratio: ratio,
            john: Some(j),
            skipped: None,
            holds: Some(ball_john <= j + tol),
        });
    }
    let ball_near_one = (ball_john - 1.0).abs() <= tol;
    Ok(MinimalityReport {
        ball_john,
        ball_near_one,
        all_hold: ball_near_one && out.iter().all(|c| c.holds != Some(false)),
        competitors: out,
        tol,
    })
}

/// Square, 2:1 ellipse and slit disk with the area of the unit disk.
pub fn euclidean_competitors(grid: &GridSpec) -> Result<Vec<(String, GridDomain)>> {
    use std::f64::consts::PI;
    let s = PI.sqrt() / 2.0;
    let (a, b) = (2f64.sqrt(), 1.0 / 2f64.sqrt());
    // slit of half-width w: π ρ² - 2 w ρ = π
    let w = 1.0 / 16.0;
    let rho = (w + (w * w + PI * PI).sqrt()) / PI;
    Ok(vec![
        (
            "square".into(),
            GridDomain::from_fn(*grid, |p| p.x.abs() < s && p.y.abs() < s)?,
        ),
        (
            "ellipse".into(),
            GridDomain::from_fn(*grid, |p| (p.x / a).powi(2) + (p.y / b).powi(2) < 1.0)?,
        ),
        (
            "slit_disk".into(),
            GridDomain::from_fn(*grid, |p| {
                p.norm() < rho && !(p.x >= 0.0 && p.y.abs() <= w)
            })?,
        ),
    ])
}
