//! Cover decomposition of `ℝ² \ K` for a closed obstacle `K ∋ 0` whose
//! complement is carrot-John toward infinity.
//!
//! Every scheduled radius `R` gets its own grid with spacing `h R / R_0`, so
//! consecutive grids nest: each center of the coarser grid is a center of the
//! finer one. Escape curves are budget-following grid paths toward the
//! boundary of the window `B(min(R_max, 4R))` at one common `J`, and the exit
//! point `x_R` is the first path vertex with `|x_R| >= 3R`, so that
//! `2R <= ℓ(γ[x, x_R]) <= J d(x_R, K)` holds exactly on the grid.
//!
//! Euclidean gauges only.

use crate::curve::{carrot_concat, carrot_region, cigar_from_two_carrots, rasterize_balls, Polyline};
use crate::error::{invalid, Error, Result};
use crate::gauge::ConvexGauge;
use crate::geom::P2;
use crate::grid::{check_inclusion, dilate8, union_masks, GridDomain, GridSpec, Inclusion};
use crate::john::{escape_path, escape_value, min_escape_j, EscapeField, JohnGraph, Neighborhood};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Grid half-width in units of `R`; pieces stay inside `B(6R)`.
pub const GRID_REACH: f64 = 6.5;
/// Escape window radius in units of `R`, capped by `R_max`.
pub const WINDOW_FACTOR: f64 = 4.0;
/// Floor of the measured length constant.
pub const C1_FLOOR: f64 = 4.0;
/// Bisection tolerance for the estimated `J`.
pub const J_TOL: f64 = 1e-3;
/// Largest `B_R` diameter, in cells, sampled at every cell.
pub const FULL_SAMPLE_SIDE: usize = 128;
/// Radius identity tolerance, relative to curve length.
pub const IDENTITY_TOL: f64 = 1e-6;

/// Obstacle primitives. Rays are `[start, direction]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSet {
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub segments: Vec<[[f64; 2]; 2]>,
    #[serde(default)]
    pub rays: Vec<[[f64; 2]; 2]>,
}

// P + tD for t in [0, t1]; t1 infinite for rays
struct Piece {
    p: P2,
    d: P2,
    t1: f64,
}

impl ObstacleSet {
    fn pieces(&self) -> Vec<Piece> {
        let mut out = Vec::new();
        for &p in &self.points {
            out.push(Piece {
                p: p.into(),
                d: P2::ZERO,
                t1: 0.0,
            });
        }
        for &[a, b] in &self.segments {
            let a = P2::from(a);
            out.push(Piece {
                p: a,
                d: P2::from(b) - a,
                t1: 1.0,
            });
        }
        for &[a, d] in &self.rays {
            out.push(Piece {
                p: a.into(),
                d: d.into(),
                t1: f64::INFINITY,
            });
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.segments.is_empty() && self.rays.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return invalid("obstacle set is empty");
        }
        let all = self
            .points
            .iter()
            .chain(self.segments.iter().flatten())
            .chain(self.rays.iter().flatten());
        if all.flatten().any(|v| !v.is_finite()) {
            return invalid("obstacle coordinates must be finite");
        }
        if self.rays.iter().any(|r| r[1] == [0.0, 0.0]) {
            return invalid("ray direction must be nonzero");
        }
        Ok(())
    }

    /// The set moved by `-shift`.
    pub fn translated(&self, shift: P2) -> ObstacleSet {
        let m = |v: [f64; 2]| [v[0] - shift.x, v[1] - shift.y];
        ObstacleSet {
            points: self.points.iter().map(|&p| m(p)).collect(),
            segments: self.segments.iter().map(|&[a, b]| [m(a), m(b)]).collect(),
            rays: self.rays.iter().map(|&[a, d]| [m(a), d]).collect(),
        }
    }

    /// Euclidean distance from `q` to the set.
    pub fn distance(&self, q: P2) -> f64 {
        self.pieces()
            .iter()
            .map(|s| {
                let dd = s.d.dot(s.d);
                let t = if dd == 0.0 {
                    0.0
                } else {
                    ((q - s.p).dot(s.d) / dd).clamp(0.0, s.t1)
                };
                (q - (s.p + s.d * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Cells whose closed square meets the set.
    pub fn rasterize(&self, grid: &GridSpec) -> Vec<bool> {
        let mut mask = vec![false; grid.len()];
        let half = 0.5 * grid.h;
        let far = grid.center(grid.nx - 1, grid.ny - 1);
        let reach = grid.origin.norm().max(far.norm()) + grid.h;
        for s in self.pieces() {
            let t1 = if s.t1.is_finite() {
                s.t1
            } else {
                (s.p.norm() + reach) / s.d.norm()
            };
            let e = s.p + s.d * t1;
            let (j0, j1) = grid.row_range(s.p.y.min(e.y) - half, s.p.y.max(e.y) + half);
            for j in j0..j1 {
                let y = grid.center(0, j).y;
                let (ta, tb) = if s.d.y == 0.0 {
                    if (s.p.y - y).abs() <= half {
                        (0.0, t1)
                    } else {
                        continue;
                    }
                } else {
                    let u = (y - half - s.p.y) / s.d.y;
                    let v = (y + half - s.p.y) / s.d.y;
                    (u.min(v).max(0.0), u.max(v).min(t1))
                };
                if ta > tb {
                    continue;
                }
                let xa = s.p.x + s.d.x * ta;
                let xb = s.p.x + s.d.x * tb;
                let (i0, i1) = grid.col_range(xa.min(xb) - half, xa.max(xb) + half);
                for i in i0..i1 {
                    mask[grid.index(i, j)] = true;
                }
            }
        }
        mask
    }
}

fn default_pairs() -> usize {
    50
}
fn default_overlap() -> usize {
    8
}
fn default_n_hat() -> usize {
    8
}
fn default_band() -> f64 {
    4.0
}

/// Scene file contents.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub name: String,
    /// Grid spacing at the first scheduled radius; it scales with `R`.
    pub h: f64,
    /// Dyadic radii `R, 2R, 4R, ...`.
    pub schedule: Vec<f64>,
    pub r_max: f64,
    /// Point of `K` moved to the origin.
    #[serde(default)]
    pub anchor: [f64; 2],
    /// Carrot constant toward infinity; estimated from the samples when absent.
    #[serde(default)]
    pub j: Option<f64>,
    #[serde(default = "default_pairs")]
    pub boman_pairs: usize,
    /// Allowed cover multiplicity.
    #[serde(default = "default_overlap")]
    pub overlap_bound: usize,
    /// Allowed number of pieces toward infinity.
    #[serde(default = "default_n_hat")]
    pub n_hat: usize,
    /// Sample stride in cells; 1 up to a 128-cell `B_R`, 2 above when absent.
    #[serde(default)]
    pub sample_stride: Option<usize>,
    /// Allowed max/min spread of `|W_{j,R}| / R²` over the schedule.
    #[serde(default = "default_band")]
    pub volume_band: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    pub k: ObstacleSet,
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SceneConfig = toml::from_str(text).map_err(|e| Error::Invalid(format!("scene: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return invalid("h must be positive");
        }
        if self.schedule.is_empty() {
            return invalid("schedule is empty");
        }
        if !(self.schedule[0] > 0.0 && self.schedule[0].is_finite()) {
            return invalid("schedule radii must be positive");
        }
        for w in self.schedule.windows(2) {
            if w[1] != 2.0 * w[0] {
                return invalid("schedule must double at every step");
            }
        }
        if !(self.r_max > 0.0) {
            return invalid("r_max must be positive");
        }
        if self.j.is_some_and(|j| !(j >= 1.0)) {
            return invalid("J must be at least 1");
        }
        if self.sample_stride == Some(0) {
            return invalid("sample_stride must be positive");
        }
        if !(self.volume_band >= 1.0) {
            return invalid("volume_band must be at least 1");
        }
        self.k.validate()?;
        let k = self.k.translated(self.anchor.into());
        if k.distance(P2::ZERO) > 1e-12 {
            return invalid("the anchor must lie on K");
        }
        let m = (GRID_REACH * self.schedule[0] / self.h).ceil();
        if m > 4096.0 {
            return invalid("grid too fine: more than 8193 cells per side");
        }
        Ok(())
    }
}

/// First crossing of `∂B(3R)` along a curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExitPoint {
    pub point: P2,
    pub param: f64,
    /// `ℓ(γ[x, x_R])`.
    pub length: f64,
    /// `ℓ - 2R`.
    pub lower_slack: f64,
}

/// First point of `curve` with `gauge(p) = 3R`, found by bisection inside
/// the crossing segment.
pub fn exit_point(g: &ConvexGauge, curve: &Polyline, r: f64) -> Result<ExitPoint> {
    let target = 3.0 * r;
    let vs = curve.vertices();
    let mut acc = 0.0;
    if g.eval(vs[0]) >= target {
        return invalid("curve starts outside B(3R)");
    }
    for k in 0..vs.len().saturating_sub(1) {
        let (a, b) = (vs[k], vs[k + 1]);
        if g.eval(b) >= target {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if g.eval(a.lerp(b, mid)) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let p = a.lerp(b, hi);
            let length = acc + g.eval(p - a);
            let (param, _) = curve.project(p);
            return Ok(ExitPoint {
                point: p,
                param,
                length,
                lower_slack: length - 2.0 * r,
            });
        }
        acc += g.eval(b - a);
    }
    Err(Error::IncreaseRMax(format!("curve ends before radius {target}")))
}

/// Greedy substitute for a Besicovitch subcover: visit points by decreasing
/// radius and keep the ball of each point no kept ball covers yet. Returns
/// the kept indices and the largest number of kept closed balls over any
/// input point.
pub fn bounded_overlap_cover(g: &ConvexGauge, balls: &[(P2, f64)]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..balls.len()).collect();
    order.sort_by(|&a, &b| balls[b].1.total_cmp(&balls[a].1).then(a.cmp(&b)));
    let inside = |k: usize, p: P2| g.eval(balls[k].0 - p) <= balls[k].1;
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if !kept.iter().any(|&k| inside(k, balls[i].0)) {
            kept.push(i);
        }
    }
    let mult = balls
        .iter()
        .map(|&(p, _)| kept.iter().filter(|&&k| inside(k, p)).count())
        .max()
        .unwrap_or(0);
    (kept, mult)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoverBall {
    pub center: P2,
    #[serde(skip)]
    pub cell: usize,
    pub radius: f64,
}

/// Sample exit data at one radius.
#[derive(Debug, Clone, Copy)]
pub struct ExitRecord {
    pub cell: usize,
    /// Exit vertex cell.
    pub exit: usize,
    pub point: P2,
    pub length: f64,
    pub distance: f64,
}

/// Ball cover, its components and the `V` assignment at one radius.
#[derive(Debug, Clone)]
pub struct CoverData {
    pub balls: Vec<CoverBall>,
    pub multiplicity: usize,
    pub component_of: Vec<usize>,
    pub components: Vec<Vec<usize>>,
    /// Component per sample, first index wins.
    pub assignment: Vec<usize>,
    /// First ball of the assigned component holding the sample's exit.
    pub entry_ball: Vec<usize>,
    /// Samples whose exit lies in balls of two or more components.
    pub overlapping: usize,
    // all-pairs chain lengths and next hops inside components
    chain_len: Vec<Vec<f64>>,
    chain_next: Vec<Vec<usize>>,
}

impl CoverData {
    /// Chain of ball indices from `a` to `b` inside one component.
    pub fn chain(&self, a: usize, b: usize) -> Vec<usize> {
        let mut out = vec![a];
        let mut c = a;
        while c != b {
            c = self.chain_next[c][b];
            out.push(c);
        }
        out
    }

    pub fn chain_length(&self, a: usize, b: usize) -> f64 {
        self.chain_len[a][b]
    }

    /// First ball of component `comp` holding `p`.
    pub fn ball_in(&self, g: &ConvexGauge, comp: usize, p: P2) -> Option<usize> {
        self.components[comp]
            .iter()
            .copied()
            .find(|&b| g.eval(self.balls[b].center - p) <= self.balls[b].radius)
    }

    /// First component with a ball holding `p`.
    pub fn component_at(&self, g: &ConvexGauge, p: P2) -> Option<usize> {
        (0..self.balls.len())
            .find(|&b| g.eval(self.balls[b].center - p) <= self.balls[b].radius)
            .map(|b| self.component_of[b])
    }
}

/// Connected components of the closed-ball intersection graph, the `V`
/// assignment of every sample exit, and shortest center chains.
pub fn components_and_v(g: &ConvexGauge, balls: Vec<CoverBall>, exits: &[P2], multiplicity: usize) -> Result<CoverData> {
    let n = balls.len();
    let meets = |a: usize, b: usize| g.eval(balls[a].center - balls[b].center) <= balls[a].radius + balls[b].radius;
    let mut component_of = vec![usize::MAX; n];
    let mut components = Vec::new();
    for s in 0..n {
        if component_of[s] != usize::MAX {
            continue;
        }
        let c = components.len();
        let mut members = vec![s];
        component_of[s] = c;
        let mut k = 0;
        while k < members.len() {
            let u = members[k];
            for v in 0..n {
                if component_of[v] == usize::MAX && meets(u, v) {
                    component_of[v] = c;
                    members.push(v);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        components.push(members);
    }
    let mut chain_len = vec![vec![f64::INFINITY; n]; n];
    let mut chain_next = vec![vec![usize::MAX; n]; n];
    for a in 0..n {
        chain_len[a][a] = 0.0;
        chain_next[a][a] = a;
        for b in 0..n {
            if a != b && component_of[a] == component_of[b] && meets(a, b) {
                chain_len[a][b] = g.eval(balls[b].center - balls[a].center);
                chain_next[a][b] = b;
            }
        }
    }
    for m in 0..n {
        for a in 0..n {
            for b in 0..n {
                let via = chain_len[a][m] + chain_len[m][b];
                if via < chain_len[a][b] {
                    chain_len[a][b] = via;
                    chain_next[a][b] = chain_next[a][m];
                }
            }
        }
    }
    let mut data = CoverData {
        balls,
        multiplicity,
        component_of,
        components,
        assignment: Vec::with_capacity(exits.len()),
        entry_ball: Vec::with_capacity(exits.len()),
        overlapping: 0,
        chain_len,
        chain_next,
    };
    for &e in exits {
        let holders: Vec<usize> = (0..n)
            .filter(|&b| g.eval(data.balls[b].center - e) <= data.balls[b].radius)
            .collect();
        let Some(&first) = holders.first() else {
            return invalid(format!("exit point ({}, {}) is not covered", e.x, e.y));
        };
        let comp = data.component_of[first];
        if holders.iter().any(|&b| data.component_of[b] != comp) {
            data.overlapping += 1;
        }
        data.assignment.push(comp);
        data.entry_ball.push(first);
    }
    Ok(data)
}

/// One scheduled radius: grid, escape field, samples, cover.
#[derive(Debug, Clone)]
pub struct Level {
    pub r: f64,
    pub grid: GridSpec,
    pub k_mask: Vec<bool>,
    pub graph: JohnGraph,
    pub window: f64,
    pub escape: EscapeField,
    pub sample: Vec<usize>,
    sample_of: Vec<u32>,
    pub exits: Vec<ExitRecord>,
    pub cover: CoverData,
}

const NO_SAMPLE: u32 = u32::MAX;

impl Level {
    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Sample index of the cell holding `p`, if that cell is sampled.
    pub fn sample_at(&self, p: P2) -> Option<usize> {
        let c = self.grid.cell_of(p)?;
        match self.sample_of[c] {
            NO_SAMPLE => None,
            s => Some(s as usize),
        }
    }

    /// Component assigned to the cell holding `p`: its escape exit, then the
    /// first cover ball holding that exit.
    /// A point on a cell edge next to `K` uses the nearest free neighbor.
    pub fn component_at(&self, g: &ConvexGauge, p: P2) -> Option<usize> {
        if let Some(s) = self.sample_at(p) {
            return Some(self.cover.assignment[s]);
        }
        let c0 = self.grid.cell_of(p)?;
        let c = crate::grid::NEIGHBORS_8
            .iter()
            .filter_map(|&(di, dj)| self.grid.offset(c0, di, dj))
            .chain([c0])
            .filter(|&c| !self.k_mask[c])
            .min_by(|&a, &b| {
                (self.grid.center_of(a) - p)
                    .norm()
                    .total_cmp(&(self.grid.center_of(b) - p).norm())
                    .then(a.cmp(&b))
            })?;
        let path = self.walk_cells(c, 0.0)?;
        let (k, _) = self.exit_on(g, &path)?;
        self.cover.component_at(g, self.grid.center_of(path[k]))
    }

    /// Budget-following path from cell `c` with arrival length `l0`, as cells.
    fn walk_cells(&self, c: usize, l0: f64) -> Option<Vec<usize>> {
        let v = self.graph.node(c).ok()?;
        let path = self.escape.walk(v, l0)?;
        Some(path.into_iter().map(|v| self.graph.cells[v]).collect())
    }

    /// Index of the exit vertex on a cell path and the length there.
    fn exit_on(&self, g: &ConvexGauge, path: &[usize]) -> Option<(usize, f64)> {
        let target = 3.0 * self.r;
        let mut l = 0.0;
        for k in 0..path.len() {
            if k > 0 {
                l += g.eval(self.grid.center_of(path[k]) - self.grid.center_of(path[k - 1]));
            }
            if g.eval(self.grid.center_of(path[k])) >= target {
                return Some((k, l));
            }
        }
        None
    }
}

/// Escape curve of one point.
#[derive(Debug, Clone, Serialize)]
pub struct EscapeCurve {
    pub curve: Polyline,
    /// Largest `ℓ/d` over the grid part of the curve.
    pub ratio: f64,
    /// `max(ratio, 1)`.
    pub clamped: f64,
    pub level_radius: f64,
}

/// Obstacle, common carrot constant and the per-radius levels.
#[derive(Debug, Clone)]
pub struct ObstacleScene {
    pub config: SceneConfig,
    /// `K` with the anchor at the origin.
    pub k: ObstacleSet,
    pub gauge: ConvexGauge,
    pub j: f64,
    /// `J` estimate before clamping to 1; `None` when supplied.
    pub j_estimate: Option<f64>,
    pub levels: Vec<Level>,
}

fn level_grid(cfg: &SceneConfig, r: f64) -> Result<GridSpec> {
    let m = (GRID_REACH * cfg.schedule[0] / cfg.h).ceil() as usize;
    let h = cfg.h * r / cfg.schedule[0];
    let lo = -(m as f64) * h;
    GridSpec::new(P2::new(lo, lo), h, 2 * m + 1, 2 * m + 1)
}

impl ObstacleScene {
    /// Builds every level: rasterized `K`, escape field at the common `J`,
    /// sample exits, greedy cover and components.
    pub fn new(cfg: &SceneConfig, gauge: &ConvexGauge) -> Result<Self> {
        if !gauge.is_euclidean() {
            return Err(Error::EuclideanOnly("obstacle decomposition"));
        }
        cfg.validate()?;
        let k = cfg.k.translated(cfg.anchor.into());
        struct Raw {
            r: f64,
            grid: GridSpec,
            k_mask: Vec<bool>,
            graph: JohnGraph,
            window: f64,
            targets: Vec<usize>,
            sample: Vec<usize>,
        }
        let mut raws = Vec::new();
        for &r in &cfg.schedule {
            let grid = level_grid(cfg, r)?;
            let window = cfg.r_max.min(WINDOW_FACTOR * r);
            if 3.0 * r + 2.0 * grid.h >= window {
                return Err(Error::IncreaseRMax(format!(
                    "escape window {window} does not clear radius 3R = {}",
                    3.0 * r
                )));
            }
            let k_mask = k.rasterize(&grid);
            let inside: Vec<bool> = k_mask.iter().map(|&b| !b).collect();
            let dom = GridDomain::new(grid, inside)?;
            let graph = JohnGraph::new(&dom, gauge, Neighborhood::N8)?;
            let targets: Vec<usize> = (0..graph.len())
                .filter(|&v| gauge.eval(grid.center_of(graph.cells[v])) >= window)
                .collect();
            let m = (grid.nx - 1) / 2;
            let side = (2.0 * r / grid.h).ceil() as usize;
            let stride = cfg
                .sample_stride
                .unwrap_or(if side <= FULL_SAMPLE_SIDE { 1 } else { 2 });
            let sample: Vec<usize> = graph
                .cells
                .iter()
                .copied()
                .filter(|&c| {
                    let (i, j) = grid.coords(c);
                    i.abs_diff(m) % stride == 0
                        && j.abs_diff(m) % stride == 0
                        && gauge.eval(grid.center_of(c)) < r
                })
                .collect();
            if sample.is_empty() {
                return invalid(format!("no sampled cells in B_R at R = {r}"));
            }
            raws.push(Raw {
                r,
                grid,
                k_mask,
                graph,
                window,
                targets,
                sample,
            });
        }
        let (j, j_estimate) = match cfg.j {
            Some(j) => (j, None),
            None => {
                let mut est: f64 = 0.0;
                for raw in &raws {
                    let starts: Vec<usize> = raw.sample.iter().map(|&c| raw.graph.node(c).unwrap()).collect();
                    est = est.max(min_escape_j(&raw.graph, &raw.targets, &starts, J_TOL)?);
                }
                (est.max(1.0), Some(est))
            }
        };
        let mut levels = Vec::new();
        for raw in raws {
            let escape = EscapeField::new(&raw.graph, &raw.targets, j);
            let mut sample_of = vec![NO_SAMPLE; raw.grid.len()];
            for (s, &c) in raw.sample.iter().enumerate() {
                sample_of[c] = s as u32;
            }
            let mut level = Level {
                r: raw.r,
                grid: raw.grid,
                k_mask: raw.k_mask,
                graph: raw.graph,
                window: raw.window,
                escape,
                sample: raw.sample,
                sample_of,
                exits: Vec::new(),
                cover: CoverData {
                    balls: Vec::new(),
                    multiplicity: 0,
                    component_of: Vec::new(),
                    components: Vec::new(),
                    assignment: Vec::new(),
                    entry_ball: Vec::new(),
                    overlapping: 0,
                    chain_len: Vec::new(),
                    chain_next: Vec::new(),
                },
            };
            let mut exits = Vec::with_capacity(level.sample.len());
            for &c in &level.sample {
                let path = level.walk_cells(c, 0.0).ok_or_else(|| {
                    let p = level.grid.center_of(c);
                    Error::Invalid(format!("J = {j} admits no escape from ({}, {})", p.x, p.y))
                })?;
                let (k_exit, length) = level
                    .exit_on(gauge, &path)
                    .ok_or_else(|| Error::IncreaseRMax("escape path ends inside B(3R)".into()))?;
                let e = path[k_exit];
                exits.push(ExitRecord {
                    cell: c,
                    exit: e,
                    point: level.grid.center_of(e),
                    length,
                    distance: level.graph.field[e],
                });
            }
            let cand: Vec<(P2, f64)> = exits.iter().map(|x| (x.point, x.distance / 2.0)).collect();
            let (kept, mult) = bounded_overlap_cover(gauge, &cand);
            let balls = kept
                .iter()
                .map(|&i| CoverBall {
                    center: cand[i].0,
                    cell: exits[i].exit,
                    radius: cand[i].1,
                })
                .collect();
            let points: Vec<P2> = exits.iter().map(|x| x.point).collect();
            level.cover = components_and_v(gauge, balls, &points, mult)?;
            level.exits = exits;
            levels.push(level);
        }
        Ok(ObstacleScene {
            config: cfg.clone(),
            k,
            gauge: gauge.clone(),
            j,
            j_estimate,
            levels,
        })
    }

    /// Exact minimax escape from `x` to the window boundary of the first
    /// level whose window holds `x`, extended radially past the window.
    /// Input and output use scene file coordinates.
    pub fn john_curve_to_infinity(&self, x: P2) -> Result<EscapeCurve> {
        let g = &self.gauge;
        let anchor = P2::from(self.config.anchor);
        let x = x - anchor;
        let level = self
            .levels
            .iter()
            .find(|l| g.eval(x) < l.window - 2.0 * l.h())
            .ok_or_else(|| Error::Invalid("point outside every escape window".into()))?;
        let c = level.grid.cell_of(x).ok_or_else(|| Error::Invalid("point off grid".into()))?;
        let v = level
            .graph
            .node(c)
            .map_err(|_| Error::Invalid("point lies in K".into()))?;
        let mut is_target = vec![false; level.graph.len()];
        for u in 0..level.graph.len() {
            is_target[u] = level.escape.is_target(u);
        }
        let (ratio, path) = escape_path(&level.graph, v, &is_target, 0.0, J_TOL * 1e-2)?;
        let mut pts: Vec<P2> = path.iter().map(|&u| level.grid.center_of(level.graph.cells[u])).collect();
        let end = *pts.last().unwrap();
        pts.push(end * 2.0);
        for p in &mut pts {
            *p = *p + anchor;
        }
        let curve = Polyline::new(pts)?.with_infinity(true);
        Ok(EscapeCurve {
            curve,
            ratio,
            clamped: ratio.max(1.0),
            level_radius: level.r,
        })
    }
}

/// One seed curve threaded through consecutive levels.
#[derive(Debug, Clone, Serialize)]
pub struct Spine {
    pub curve: Polyline,
    /// Level indices covered, ascending.
    pub levels: Vec<usize>,
    /// Exit point at each covered level.
    pub exits: Vec<P2>,
    /// Parameter of each exit on `curve`.
    #[serde(skip)]
    pub exit_params: Vec<f64>,
    /// `ℓ(γ[x, x_R])` at each covered level.
    pub exit_lengths: Vec<f64>,
    /// Largest `ℓ/d` along grid vertices.
    pub ratio: f64,
    /// Levels where the budget walk failed and an exact search continued.
    pub fallbacks: usize,
}

fn build_spine(scene: &ObstacleScene, seed: P2, first: usize, last: usize) -> Result<Spine> {
    let g = &scene.gauge;
    let mut pts: Vec<P2> = vec![seed];
    let mut cum = 0.0;
    let mut ratio: f64 = 0.0;
    let mut fallbacks = 0;
    let mut exits = Vec::new();
    let mut exit_lengths = Vec::new();
    let mut exit_vertex = Vec::new();
    for li in first..=last {
        let level = &scene.levels[li];
        let here = *pts.last().unwrap();
        let c = level
            .grid
            .cell_of(here)
            .ok_or_else(|| Error::Invalid("seed curve left the grid".into()))?;
        let snap = level.grid.center_of(c);
        if level.graph.node(c).is_err() {
            return invalid(format!("seed curve snaps into K at R = {}", level.r));
        }
        if snap != here {
            cum += g.eval(snap - here);
            pts.push(snap);
        }
        let path = match level.walk_cells(c, cum) {
            Some(p) => p,
            None => {
                fallbacks += 1;
                let v = level.graph.node(c)?;
                let mut is_target = vec![false; level.graph.len()];
                for u in 0..level.graph.len() {
                    is_target[u] = level.escape.is_target(u);
                }
                let (_, path) = escape_path(&level.graph, v, &is_target, cum, J_TOL * 1e-2)?;
                path.into_iter().map(|u| level.graph.cells[u]).collect()
            }
        };
        let (k_exit, l_exit) = level
            .exit_on(g, &path)
            .ok_or_else(|| Error::IncreaseRMax("seed curve ends inside B(3R)".into()))?;
        let nodes: Vec<usize> = path[..=k_exit].iter().map(|&c| level.graph.node(c).unwrap()).collect();
        ratio = ratio.max(escape_value(&level.graph, &nodes, cum));
        for w in path[..=k_exit].windows(2) {
            pts.push(level.grid.center_of(w[1]));
        }
        cum += l_exit;
        exit_vertex.push(pts.len() - 1);
        exits.push(level.grid.center_of(path[k_exit]));
        exit_lengths.push(cum);
    }
    // dedup in Polyline::new can only merge the seed with its snap, which we skip above
    let curve = Polyline::new(pts)?;
    let exit_params = exit_vertex.iter().map(|&k| curve.vertex_param(k)).collect();
    Ok(Spine {
        curve,
        levels: (first..=last).collect(),
        exits,
        exit_params,
        exit_lengths,
        ratio,
        fallbacks,
    })
}

/// Measured length constant: the largest possible `ℓ(β_z)/R` over samples
/// `z`, entry balls and target balls of one component, at least 4.
pub fn measured_c1(scene: &ObstacleScene) -> f64 {
    let g = &scene.gauge;
    let mut c1: f64 = C1_FLOOR;
    for level in &scene.levels {
        let cov = &level.cover;
        // best continuation from each entry ball: chain to any ball, then its radius
        let tail: Vec<f64> = (0..cov.balls.len())
            .map(|b| {
                cov.components[cov.component_of[b]]
                    .iter()
                    .map(|&d1| cov.chain_length(b, d1) + cov.balls[d1].radius)
                    .fold(0.0, f64::max)
            })
            .collect();
        for (s, x) in level.exits.iter().enumerate() {
            let b = cov.entry_ball[s];
            let len = x.length + g.eval(cov.balls[b].center - x.point) + tail[b];
            c1 = c1.max(len / level.r);
        }
    }
    c1
}

/// `Ω_{k,R,y}` with its checks.
#[derive(Debug, Clone, Serialize)]
pub struct OmegaPiece {
    pub r: f64,
    pub component: usize,
    pub y: P2,
    pub y_exit: P2,
    pub y_ball: usize,
    #[serde(skip)]
    pub mask: Vec<bool>,
    pub cells: usize,
    pub area: f64,
    pub v_size: usize,
    /// Largest `ℓ(β_z)/R` over the component's samples.
    pub c1_measured: f64,
    /// Samples of `V` outside the closure (one-cell tolerance).
    pub v_misses: usize,
    /// Cells shared with `K`.
    pub k_hits: usize,
    pub k_inclusion: Inclusion,
    /// Cells outside `B(2 C1 R)`.
    pub outside_bound: usize,
    /// Smallest `d(η, K)` over chain vertices, and the bound `R/J`.
    pub chain_min_distance: f64,
    pub chain_bound: f64,
    /// A ball reached past the grid.
    pub clipped: bool,
}

fn segment_balls(g: &ConvexGauge, a: P2, b: P2, l0: f64, j: f64, pitch: f64, out: &mut Vec<(P2, f64)>) -> f64 {
    let w = g.eval(b - a);
    let n = ((b - a).norm() / pitch).ceil().max(1.0) as usize;
    for k in 1..=n {
        let u = k as f64 / n as f64;
        out.push((a.lerp(b, u), (l0 + u * w) / j));
    }
    l0 + w
}

/// Rasterizes `car(γ_y[y, y_R], J) ∪ ⋃_z car(β_z, J')` over the sampled
/// `z` of component `comp`. Shared tree edges and chain suffixes are drawn
/// once with the largest arrival length, which gives the same union.
pub fn omega_construct(
    scene: &ObstacleScene,
    li: usize,
    comp: usize,
    y_curve: &Polyline,
    y_ball: usize,
    c1: f64,
) -> Result<OmegaPiece> {
    let g = &scene.gauge;
    let level = &scene.levels[li];
    let cov = &level.cover;
    let grid = &level.grid;
    let jp = c1 * scene.j;
    let pitch = grid.h / 2.0;
    let y_exit = y_curve.end();
    if cov.component_of[y_ball] != comp {
        return invalid("target ball lies in another component");
    }
    let mut edge_len = vec![f64::NEG_INFINITY; grid.len()];
    let mut next_cell = vec![usize::MAX; grid.len()];
    let mut entry_len = vec![f64::NEG_INFINITY; cov.balls.len()];
    let mut exit_len: Vec<(usize, f64)> = Vec::new();
    let mut c1_measured: f64 = 0.0;
    let mut v_cells = Vec::new();
    let y_tail = g.eval(y_exit - cov.balls[y_ball].center);
    for (s, x) in level.exits.iter().enumerate() {
        if cov.assignment[s] != comp {
            continue;
        }
        v_cells.push(x.cell);
        let path = level.walk_cells(x.cell, 0.0).expect("samples escape");
        let mut l = 0.0;
        for w in path.windows(2) {
            if w[0] == x.exit {
                break;
            }
            if l > edge_len[w[0]] {
                edge_len[w[0]] = l;
                next_cell[w[0]] = w[1];
            }
            l += g.eval(grid.center_of(w[1]) - grid.center_of(w[0]));
        }
        exit_len.push((s, x.length));
        let b = cov.entry_ball[s];
        let to_center = x.length + g.eval(cov.balls[b].center - x.point);
        entry_len[b] = entry_len[b].max(to_center);
        let beta = to_center + cov.chain_length(b, y_ball) + y_tail;
        c1_measured = c1_measured.max(beta / level.r);
    }
    if v_cells.is_empty() {
        return invalid("component has no sampled points");
    }
    let mut balls: Vec<(P2, f64)> = Vec::new();
    for c in 0..grid.len() {
        if next_cell[c] != usize::MAX {
            segment_balls(g, grid.center_of(c), grid.center_of(next_cell[c]), edge_len[c], jp, pitch, &mut balls);
        }
    }
    for &(s, l) in &exit_len {
        let b = cov.entry_ball[s];
        // repeated exits redraw identical segments only
        segment_balls(g, level.exits[s].point, cov.balls[b].center, l, jp, pitch, &mut balls);
    }
    let mut chain_min = f64::INFINITY;
    for b in 0..cov.balls.len() {
        if !(entry_len[b] > f64::NEG_INFINITY) {
            continue;
        }
        let chain = cov.chain(b, y_ball);
        let mut l = entry_len[b];
        for w in chain.windows(2) {
            l = segment_balls(g, cov.balls[w[0]].center, cov.balls[w[1]].center, l, jp, pitch, &mut balls);
        }
        for &c in &chain {
            chain_min = chain_min.min(level.graph.field[cov.balls[c].cell]);
        }
        segment_balls(g, cov.balls[y_ball].center, y_exit, l, jp, pitch, &mut balls);
    }
    for (p, _, l) in y_curve.samples(g, pitch).into_iter().skip(1) {
        balls.push((p, l / scene.j));
    }
    let lo = grid.origin;
    let hi = grid.center(grid.nx - 1, grid.ny - 1);
    let clipped = balls.iter().any(|&(p, r)| {
        let reach = r * g.outer_radius();
        p.x - reach < lo.x || p.y - reach < lo.y || p.x + reach > hi.x || p.y + reach > hi.y
    });
    let mask = rasterize_balls(g, grid, &balls);
    let grown = dilate8(grid, &mask);
    let v_misses = v_cells.iter().filter(|&&c| !grown[c]).count();
    let k_hits = mask.iter().zip(&level.k_mask).filter(|&(&a, &b)| a && b).count();
    let free: Vec<bool> = level.k_mask.iter().map(|&b| !b).collect();
    let k_inclusion = check_inclusion(grid, &mask, &free);
    let bound = 2.0 * c1 * level.r;
    let outside_bound = (0..grid.len())
        .filter(|&c| mask[c] && g.eval(grid.center_of(c)) >= bound)
        .count();
    let cells = mask.iter().filter(|&&b| b).count();
    Ok(OmegaPiece {
        r: level.r,
        component: comp,
        y: y_curve.start(),
        y_exit,
        y_ball,
        mask,
        cells,
        area: cells as f64 * grid.h * grid.h,
        v_size: v_cells.len(),
        c1_measured,
        v_misses,
        k_hits,
        k_inclusion,
        outside_bound,
        chain_min_distance: chain_min,
        chain_bound: level.r / scene.j,
        clipped,
    })
}

/// `β_z` for sample `s` of level `li`: its escape path up to the exit, then
/// ball centers from its entry ball to `y_ball`, then `y_exit`.
pub fn beta_curve(scene: &ObstacleScene, li: usize, s: usize, y_ball: usize, y_exit: P2) -> Result<Polyline> {
    let level = &scene.levels[li];
    let cov = &level.cover;
    let x = &level.exits[s];
    if cov.component_of[y_ball] != cov.assignment[s] {
        return invalid("sample and target ball lie in different components");
    }
    let path = level.walk_cells(x.cell, 0.0).expect("samples escape");
    let k = path.iter().position(|&c| c == x.exit).expect("exit on path");
    let mut pts: Vec<P2> = path[..=k].iter().map(|&c| level.grid.center_of(c)).collect();
    for b in cov.chain(cov.entry_ball[s], y_ball) {
        pts.push(cov.balls[b].center);
    }
    pts.push(y_exit);
    Polyline::new(pts)
}

/// A piece family `W_{j,·}`.
#[derive(Debug, Clone, Serialize)]
pub struct Family {
    pub index: usize,
    pub seed: P2,
    /// Radius at which the seed was found uncovered.
    pub found_at: f64,
    /// Defined at every scheduled `R > |seed|` when true.
    pub toward_infinity: bool,
    pub levels: Vec<f64>,
    #[serde(skip)]
    pub level_indices: Vec<usize>,
    pub spine: Spine,
    pub pieces: Vec<OmegaPiece>,
}

impl Family {
    pub fn piece_at(&self, li: usize) -> Option<&OmegaPiece> {
        self.level_indices.iter().position(|&l| l == li).map(|k| &self.pieces[k])
    }

    fn spine_to(&self, li: usize) -> Result<Polyline> {
        let k = self.spine.levels.iter().position(|&l| l == li).expect("spine covers its levels");
        self.spine.curve.sub(0.0, self.spine.exit_params[k])
    }
}

/// Output of [`build_w`].
#[derive(Debug, Clone)]
pub struct CoverDecomposition {
    pub scene: ObstacleScene,
    pub c1: f64,
    pub j_prime: f64,
    pub families: Vec<Family>,
    /// Pieces toward infinity.
    pub n: usize,
    /// Problems met while building, itemized.
    pub issues: Vec<String>,
}

fn add_family(
    scene: &ObstacleScene,
    c1: f64,
    index: usize,
    seed: P2,
    found_at: f64,
    lis: Vec<usize>,
    toward_infinity: bool,
) -> Result<Family> {
    let g = &scene.gauge;
    let spine = build_spine(scene, seed, lis[0], *lis.last().unwrap())?;
    let mut pieces = Vec::new();
    for &li in &lis {
        let k = spine.levels.iter().position(|&l| l == li).unwrap();
        let y_exit = spine.exits[k];
        let cov = &scene.levels[li].cover;
        let comp = cov.component_at(g, y_exit).ok_or_else(|| {
            Error::Invalid(format!(
                "seed exit ({}, {}) at R = {} lies in no cover ball",
                y_exit.x, y_exit.y, scene.levels[li].r
            ))
        })?;
        let y_ball = cov.ball_in(g, comp, y_exit).unwrap();
        let y_curve = spine.curve.sub(0.0, spine.exit_params[k])?;
        pieces.push(omega_construct(scene, li, comp, &y_curve, y_ball, c1)?);
    }
    Ok(Family {
        index,
        seed,
        found_at,
        toward_infinity,
        levels: lis.iter().map(|&l| scene.levels[l].r).collect(),
        level_indices: lis,
        spine,
        pieces,
    })
}

/// Runs the induction over the schedule. At each radius `s`, while a sampled
/// cell of `B_s \ K` lies outside every closed piece at `s`, the uncovered
/// cell nearest the origin seeds a new family: toward infinity when no
/// existing infinite family's `V` absorbs it at any scheduled `R >= s`,
/// otherwise a finite family on `[s, R')`.
pub fn build_w(scene: ObstacleScene) -> Result<CoverDecomposition> {
    let g = scene.gauge.clone();
    let c1 = measured_c1(&scene);
    let mut families: Vec<Family> = Vec::new();
    let mut issues = Vec::new();
    let cap = 4 * scene.config.n_hat.max(1);
    let nl = scene.levels.len();
    'levels: for si in 0..nl {
        let level = &scene.levels[si];
        let mut stuck: Vec<usize> = Vec::new();
        loop {
            let mut covered = vec![false; level.grid.len()];
            for f in &families {
                if let Some(p) = f.piece_at(si) {
                    covered = union_masks(&covered, &p.mask);
                }
            }
            let covered = dilate8(&level.grid, &covered);
            let u = level
                .sample
                .iter()
                .copied()
                .filter(|&c| !covered[c] && !stuck.contains(&c))
                .min_by(|&a, &b| {
                    g.eval(level.grid.center_of(a))
                        .total_cmp(&g.eval(level.grid.center_of(b)))
                        .then(a.cmp(&b))
                });
            let Some(u) = u else { break };
            if families.len() >= cap {
                issues.push(format!("family cap {cap} reached at R = {}", level.r));
                break 'levels;
            }
            let up = level.grid.center_of(u);
            let mut eaten_at = None;
            'scan: for ri in si..nl {
                let lr = &scene.levels[ri];
                let Some(comp) = lr.component_at(&g, up) else { continue };
                for f in families.iter().filter(|f| f.toward_infinity) {
                    if f.piece_at(ri).is_some_and(|p| p.component == comp) {
                        eaten_at = Some(ri);
                        break 'scan;
                    }
                }
            }
            let index = families.len() + 1;
            let fam = match eaten_at {
                None => {
                    let lis: Vec<usize> = (si..nl).collect();
                    add_family(&scene, c1, index, up, level.r, lis, true)
                }
                Some(rp) => {
                    let lis: Vec<usize> = if rp == si { vec![si] } else { (si..rp).collect() };
                    add_family(&scene, c1, index, up, level.r, lis, false)
                }
            };
            match fam {
                Ok(f) => {
                    let holds = f.piece_at(si).is_some_and(|p| dilate8(&level.grid, &p.mask)[u]);
                    if !holds {
                        issues.push(format!("seed ({}, {}) not covered by its own piece", up.x, up.y));
                        stuck.push(u);
                    }
                    families.push(f);
                }
                Err(e) => {
                    issues.push(format!("seed ({}, {}) at R = {}: {e}", up.x, up.y, level.r));
                    stuck.push(u);
                }
            }
        }
    }
    let n = families.iter().filter(|f| f.toward_infinity).count();
    let j_prime = c1 * scene.j;
    Ok(CoverDecomposition {
        scene,
        c1,
        j_prime,
        families,
        n,
        issues,
    })
}

/// Restriction of a mask on level `from` to the centers of level `to`
/// (`to` not finer than `from`).
fn restrict(scene: &ObstacleScene, from: usize, mask: &[bool], to: usize) -> Vec<bool> {
    let a = &scene.levels[from].grid;
    let b = &scene.levels[to].grid;
    (0..b.len())
        .map(|c| {
            let p = b.center_of(c);
            a.cell_of(p)
                .is_some_and(|k| mask[k] && (a.center_of(k) - p).norm() <= 1e-9 * a.h)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub r: f64,
    pub h: f64,
    pub window: f64,
    pub samples: usize,
    pub balls: usize,
    pub multiplicity: usize,
    pub components: usize,
    pub overlap_rate: f64,
    /// `min r / (R/J)` and `max r / (2R)` over kept balls.
    pub radius_low: f64,
    pub radius_high: f64,
    pub radii_ok: bool,
    /// `min (ℓ - 2R)` and `min (J d - ℓ)` over sample exits.
    pub lower_size_slack: f64,
    pub upper_size_slack: f64,
    pub cover_misses: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeRow {
    pub family: usize,
    pub r: f64,
    pub area: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeBand {
    pub family: usize,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DyadicOverlap {
    pub family: usize,
    pub base_r: f64,
    pub l: usize,
    pub k_l: usize,
    pub k_next: usize,
    /// `|W_{k_l,2^l R} ∩ W_{k_{l+1},2^{l+1} R}| / |W_{k_l,2^l R}|` on the coarser grid.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BomanPair {
    pub family: usize,
    pub z: P2,
    pub w: P2,
    pub r_z: f64,
    pub r_w: f64,
    pub a: P2,
    pub radius: f64,
    pub concat_slack: f64,
    pub concat: Inclusion,
    pub cigar: Inclusion,
    /// Ball `B_{z,w}` inside the pieces holding both curves.
    pub ball_in_pieces: Inclusion,
    /// `car(γ̂_z, J')` inside the same pieces.
    pub carrot_in_pieces: Inclusion,
    pub identity_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub name: String,
    pub j: f64,
    pub j_estimate: Option<f64>,
    pub c1: f64,
    pub j_prime: f64,
    pub n: usize,
    pub n_hat: usize,
    pub families_total: usize,
    pub levels: Vec<LevelReport>,
    pub families: Vec<Family>,
    pub volumes: Vec<VolumeRow>,
    pub bands: Vec<VolumeBand>,
    pub overlaps: Vec<DyadicOverlap>,
    pub min_overlap: f64,
    pub boman: Vec<BomanPair>,
    pub failures: Vec<String>,
    pub passed: bool,
}

impl DecompositionReport {
    /// `family,r,area,ratio` rows.
    pub fn volume_csv(&self) -> String {
        let mut s = String::from("family,r,area,ratio\n");
        for v in &self.volumes {
            s.push_str(&format!(
                "{},{},{},{}\n",
                v.family,
                crate::report::fmt_g9(v.r),
                crate::report::fmt_g9(v.area),
                crate::report::fmt_g9(v.ratio)
            ));
        }
        s
    }
}

fn boman_pair(dec: &CoverDecomposition, f: &Family, rng: &mut ChaCha8Rng) -> Result<Option<BomanPair>> {
    let scene = &dec.scene;
    let g = &scene.gauge;
    let pick_level = |rng: &mut ChaCha8Rng| f.level_indices[rng.gen_range(0..f.level_indices.len())];
    let (mut lz, mut lw) = (pick_level(rng), pick_level(rng));
    if lz > lw {
        std::mem::swap(&mut lz, &mut lw);
    }
    let pick = |li: usize, rng: &mut ChaCha8Rng| -> Option<usize> {
        let piece = f.piece_at(li)?;
        let cov = &scene.levels[li].cover;
        let members: Vec<usize> = (0..cov.assignment.len())
            .filter(|&s| cov.assignment[s] == piece.component)
            .collect();
        (!members.is_empty()).then(|| members[rng.gen_range(0..members.len())])
    };
    let (Some(sz), Some(sw)) = (pick(lz, rng), pick(lw, rng)) else {
        return Ok(None);
    };
    let pz = f.piece_at(lz).unwrap();
    let pw = f.piece_at(lw).unwrap();
    let beta_z = beta_curve(scene, lz, sz, pz.y_ball, pz.y_exit)?;
    let beta_w = beta_curve(scene, lw, sw, pw.y_ball, pw.y_exit)?;
    let gamma1 = f.spine_to(lw)?;
    let grid = &scene.levels[lw].grid;
    let (hat_z, ccert) = carrot_concat(g, &gamma1, &beta_z, scene.j, dec.j_prime, pw.y_exit, grid)?;
    let (a, radius, gcert) = cigar_from_two_carrots(g, &hat_z, &beta_w, dec.j_prime, grid)?;
    let pieces = union_masks(&restrict(scene, lz, &pz.mask, lw), &pw.mask);
    let ball = rasterize_balls(g, grid, &[(a, radius)]);
    let ball_in_pieces = check_inclusion(grid, &ball, &pieces);
    let car_hat = carrot_region(g, &hat_z, dec.j_prime, grid, None)?;
    let carrot_in_pieces = check_inclusion(grid, &car_hat.cells, &pieces);
    let scale = hat_z.total_length(g).max(beta_w.total_length(g));
    let identity_ok = gcert.identity_residual <= IDENTITY_TOL * scale;
    let passed = ccert.inclusion.holds
        && gcert.inclusion.holds
        && ball_in_pieces.holds
        && carrot_in_pieces.holds
        && identity_ok;
    Ok(Some(BomanPair {
        family: f.index,
        z: beta_z.start(),
        w: beta_w.start(),
        r_z: scene.levels[lz].r,
        r_w: scene.levels[lw].r,
        a,
        radius,
        concat_slack: ccert.slack,
        concat: ccert.inclusion,
        cigar: gcert.inclusion,
        ball_in_pieces,
        carrot_in_pieces,
        identity_residual: gcert.identity_residual,
        passed,
    }))
}

/// Checks the decomposition: cover of the samples, ball radii, per-piece
/// containments, volume bands, dyadic overlaps and `pairs` Boman pairs drawn
/// with `seed`. Failures are itemized, not raised.
pub fn verify_decomposition(dec: &CoverDecomposition, pairs: usize, seed: u64) -> Result<DecompositionReport> {
    let scene = &dec.scene;
    let g = &scene.gauge;
    let cfg = &scene.config;
    let mut failures = dec.issues.clone();
    let mut levels = Vec::new();
    for (li, level) in scene.levels.iter().enumerate() {
        let cov = &level.cover;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for b in &cov.balls {
            lo = lo.min(b.radius / (level.r / scene.j));
            hi = hi.max(b.radius / (2.0 * level.r));
        }
        let radii_ok = lo >= 1.0 && hi <= 1.0;
        let lower = level.exits.iter().map(|x| x.length - 2.0 * level.r).fold(f64::INFINITY, f64::min);
        let upper = level
            .exits
            .iter()
            .map(|x| scene.j * x.distance - x.length)
            .fold(f64::INFINITY, f64::min);
        let mut union = vec![false; level.grid.len()];
        for f in &dec.families {
            if let Some(p) = f.piece_at(li) {
                union = union_masks(&union, &p.mask);
            }
        }
        let grown = dilate8(&level.grid, &union);
        let cover_misses = level.sample.iter().filter(|&&c| !grown[c]).count();
        if !radii_ok {
            failures.push(format!("ball radii outside [R/J, 2R] at R = {}", level.r));
        }
        if cov.multiplicity > cfg.overlap_bound {
            failures.push(format!(
                "cover multiplicity {} above {} at R = {}",
                cov.multiplicity, cfg.overlap_bound, level.r
            ));
        }
        if cover_misses > 0 {
            failures.push(format!("{cover_misses} sampled cells uncovered at R = {}", level.r));
        }
        if lower < -1e-9 || upper < -1e-9 {
            failures.push(format!("exit size inequality violated at R = {}", level.r));
        }
        levels.push(LevelReport {
            r: level.r,
            h: level.h(),
            window: level.window,
            samples: level.sample.len(),
            balls: cov.balls.len(),
            multiplicity: cov.multiplicity,
            components: cov.components.len(),
            overlap_rate: cov.overlapping as f64 / level.sample.len() as f64,
            radius_low: lo,
            radius_high: hi,
            radii_ok,
            lower_size_slack: lower,
            upper_size_slack: upper,
            cover_misses,
        });
    }
    if dec.n > cfg.n_hat {
        failures.push(format!("{} pieces toward infinity, above {}", dec.n, cfg.n_hat));
    }
    for f in &dec.families {
        if f.spine.ratio > scene.j + 1e-9 {
            failures.push(format!("family {} seed curve ratio {} above J", f.index, f.spine.ratio));
        }
        for p in &f.pieces {
            let tag = format!("family {} at R = {}", f.index, p.r);
            if p.v_misses > 0 {
                failures.push(format!("{tag}: {} points of V outside the piece", p.v_misses));
            }
            if !p.k_inclusion.holds {
                failures.push(format!("{tag}: piece meets K"));
            }
            if p.outside_bound > 0 {
                failures.push(format!("{tag}: piece leaves B(2 C1 R)"));
            }
            if p.c1_measured > dec.c1 + 1e-9 {
                failures.push(format!("{tag}: curve length above C1 R"));
            }
            if p.chain_min_distance < p.chain_bound - scene.levels[0].h() * p.r / scene.levels[0].r {
                failures.push(format!("{tag}: chain vertex closer than R/J to K"));
            }
            if p.clipped {
                failures.push(format!("{tag}: piece clipped by the grid"));
            }
        }
    }
    let mut volumes = Vec::new();
    let mut bands = Vec::new();
    for f in dec.families.iter().filter(|f| f.toward_infinity) {
        let ratios: Vec<f64> = f.pieces.iter().map(|p| p.area / (p.r * p.r)).collect();
        for (p, &ratio) in f.pieces.iter().zip(&ratios) {
            volumes.push(VolumeRow {
                family: f.index,
                r: p.r,
                area: p.area,
                ratio,
            });
        }
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().copied().fold(0.0, f64::max);
        let spread = max / min;
        let holds = spread <= cfg.volume_band;
        if !holds {
            failures.push(format!("family {} volume spread {spread} above {}", f.index, cfg.volume_band));
        }
        bands.push(VolumeBand {
            family: f.index,
            min,
            max,
            spread,
            holds,
        });
    }
    let mut overlaps = Vec::new();
    let nl = scene.levels.len();
    for f in dec.families.iter().filter(|f| f.toward_infinity) {
        for &base in &f.level_indices {
            let chain_family = |li: usize| -> Option<usize> {
                let comp = scene.levels[li].component_at(g, f.seed)?;
                dec.families
                    .iter()
                    .position(|h| h.piece_at(li).is_some_and(|p| p.component == comp))
            };
            for li in base..nl - 1 {
                let (Some(a), Some(b)) = (chain_family(li), chain_family(li + 1)) else {
                    failures.push(format!("family {}: no piece holds the seed at R = {}", f.index, scene.levels[li].r));
                    break;
                };
                let wa = restrict(scene, li, &dec.families[a].piece_at(li).unwrap().mask, li + 1);
                let wb = &dec.families[b].piece_at(li + 1).unwrap().mask;
                let size = wa.iter().filter(|&&x| x).count();
                let both = wa.iter().zip(wb).filter(|&(&x, &y)| x && y).count();
                let ratio = if size == 0 { 0.0 } else { both as f64 / size as f64 };
                if !(ratio > 0.0) {
                    failures.push(format!(
                        "family {}: empty dyadic overlap at R = {}",
                        f.index, scene.levels[li].r
                    ));
                }
                overlaps.push(DyadicOverlap {
                    family: f.index,
                    base_r: scene.levels[base].r,
                    l: li - base,
                    k_l: dec.families[a].index,
                    k_next: dec.families[b].index,
                    ratio,
                });
            }
        }
    }
    let min_overlap = overlaps.iter().map(|o| o.ratio).fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let infinite: Vec<&Family> = dec.families.iter().filter(|f| f.toward_infinity).collect();
    let mut boman = Vec::new();
    if !infinite.is_empty() {
        let mut attempts = 0;
        while boman.len() < pairs && attempts < 4 * pairs {
            attempts += 1;
            let f = infinite[rng.gen_range(0..infinite.len())];
            match boman_pair(dec, f, &mut rng) {
                Ok(Some(p)) => {
                    if !p.passed {
                        failures.push(format!(
                            "Boman pair ({}, {}) - ({}, {}) in family {} failed",
                            p.z.x, p.z.y, p.w.x, p.w.y, p.family
                        ));
                    }
                    boman.push(p);
                }
                Ok(None) => {}
                Err(e) => failures.push(format!("Boman pair in family {}: {e}", f.index)),
            }
        }
        if boman.len() < pairs {
            failures.push(format!("only {} of {pairs} Boman pairs drawn", boman.len()));
        }
    }
    let passed = failures.is_empty();
    Ok(DecompositionReport {
        name: cfg.name.clone(),
        j: scene.j,
        j_estimate: scene.j_estimate,
        c1: dec.c1,
        j_prime: dec.j_prime,
        n: dec.n,
        n_hat: cfg.n_hat,
        families_total: dec.families.len(),
        levels,
        families: dec.families.clone(),
        volumes,
        bands,
        overlaps,
        min_overlap,
        boman,
        failures,
        passed,
    })
}

/// Scene, induction and verification in one call.
pub fn decompose(cfg: &SceneConfig, gauge: &ConvexGauge, seed: u64) -> Result<(CoverDecomposition, DecompositionReport)> {
    let scene = ObstacleScene::new(cfg, gauge)?;
    let dec = build_w(scene)?;
    let report = verify_decomposition(&dec, cfg.boman_pairs, seed)?;
    Ok((dec, report))
}

