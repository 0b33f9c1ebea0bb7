//! Rasterized domains and compact sets.
//!
//! Cells are addressed by a row-major linear index `j * nx + i`; the cell
//! center is `origin + h * (i, j)`. Every argmin/argmax in the crate breaks
//! ties toward the smaller index.
//!
//! The discrete boundary of a domain has two layers: inside cells touching the
//! complement and complement cells touching the inside (8-adjacency). Boundary
//! distances are measured to the complement layer, so they are positive on
//! every inside cell.

use crate::error::{invalid, Error, Result};
use crate::gauge::ConvexGauge;
use crate::geom::P2;
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Largest grid (in cells) handled by the brute-force distance field.
pub const BRUTE_FORCE_CELLS: usize = 128 * 128;

pub const NEIGHBORS_8: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// Center of cell (0, 0).
    pub origin: P2,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(origin: P2, h: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return invalid("grid spacing must be positive");
        }
        if nx < 2 || ny < 2 {
            return invalid("grid extent must be at least 2x2");
        }
        Ok(GridSpec { origin, h, nx, ny })
    }

    /// Grid of spacing `h` whose cell centers cover `[lo, hi]²` symmetrically,
    /// with one center on the origin when `lo = -hi`.
    pub fn square(lo: f64, hi: f64, h: f64) -> Result<Self> {
        let k0 = (lo / h).floor() as i64;
        let k1 = (hi / h).ceil() as i64;
        let n = (k1 - k0 + 1).max(2) as usize;
        Self::new(P2::new(k0 as f64 * h, k0 as f64 * h), h, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn center(&self, i: usize, j: usize) -> P2 {
        P2::new(
            self.origin.x + self.h * i as f64,
            self.origin.y + self.h * j as f64,
        )
    }

    pub fn center_of(&self, idx: usize) -> P2 {
        let (i, j) = self.coords(idx);
        self.center(i, j)
    }

    /// Cell whose center is nearest to `p`, if `p` is within half a cell of the grid.
    pub fn cell_of(&self, p: P2) -> Option<usize> {
        let fi = ((p.x - self.origin.x) / self.h).round();
        let fj = ((p.y - self.origin.y) / self.h).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some(self.index(fi as usize, fj as usize))
    }

    /// Neighbor of `idx` at offset `(di, dj)`, if on the grid.
    pub fn offset(&self, idx: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.coords(idx);
        let ni = i as i64 + di;
        let nj = j as i64 + dj;
        if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
            return None;
        }
        Some(self.index(ni as usize, nj as usize))
    }

    /// Half-open column range of centers with x in `[lo, hi]`.
    pub fn col_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        axis_range(self.origin.x, self.h, self.nx, lo, hi)
    }

    pub fn row_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        axis_range(self.origin.y, self.h, self.ny, lo, hi)
    }

    pub fn mask_from_fn(&self, f: impl Fn(P2) -> bool) -> Vec<bool> {
        (0..self.len()).map(|c| f(self.center_of(c))).collect()
    }
}

fn axis_range(o: f64, h: f64, n: usize, lo: f64, hi: f64) -> (usize, usize) {
    let a = ((lo - o) / h).ceil().max(0.0);
    let b = ((hi - o) / h).floor() + 1.0;
    let a = (a.min(n as f64)) as usize;
    let b = (b.max(0.0).min(n as f64)) as usize;
    (a, b.max(a))
}

#[derive(Debug, Clone)]
pub struct GridDomain {
    pub grid: GridSpec,
    pub inside: Vec<bool>,
    /// Both boundary layers, sorted.
    pub boundary: Vec<usize>,
    /// Complement cells adjacent to the inside, sorted. Distances are taken to these.
    pub outer: Vec<usize>,
}

impl GridDomain {
    pub fn new(grid: GridSpec, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.len() {
            return invalid("mask size does not match grid");
        }
        let mut boundary = Vec::new();
        let mut outer = Vec::new();
        for c in 0..grid.len() {
            let touches = NEIGHBORS_8.iter().any(|&(di, dj)| {
                grid.offset(c, di, dj)
                    .is_some_and(|n| inside[n] != inside[c])
            });
            if touches {
                boundary.push(c);
                if !inside[c] {
                    outer.push(c);
                }
            }
        }
        Ok(GridDomain {
            grid,
            inside,
            boundary,
            outer,
        })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(P2) -> bool) -> Result<Self> {
        let mask = grid.mask_from_fn(f);
        Self::new(grid, mask)
    }

    pub fn inside_cells(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&c| self.inside[c]).collect()
    }

    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Whether the step `c -> c + (di, dj)` stays inside without cutting a
    /// complement corner. Covers unit, diagonal and knight steps.
    pub fn step_ok(&self, c: usize, di: i64, dj: i64) -> Option<usize> {
        let g = &self.grid;
        let n = g.offset(c, di, dj)?;
        if !self.inside[n] {
            return None;
        }
        let via: &[(i64, i64)] = match (di.abs(), dj.abs()) {
            (1, 1) => &[(di, 0), (0, dj)],
            (2, 1) => &[(di / 2, 0), (di / 2, dj)],
            (1, 2) => &[(0, dj / 2), (di, dj / 2)],
            _ => &[],
        };
        for &(a, b) in via {
            match g.offset(c, a, b) {
                Some(m) if self.inside[m] => {}
                _ => return None,
            }
        }
        Some(n)
    }

    /// Connectivity of the inside under 8-neighbor steps that do not cut corners.
    pub fn is_connected(&self) -> bool {
        let cells = self.inside_cells();
        let Some(&start) = cells.first() else {
            return false;
        };
        let mut seen = vec![false; self.grid.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 1;
        while let Some(c) = stack.pop() {
            for &(di, dj) in &NEIGHBORS_8 {
                if let Some(n) = self.step_ok(c, di, dj) {
                    if !seen[n] {
                        seen[n] = true;
                        count += 1;
                        stack.push(n);
                    }
                }
            }
        }
        count == cells.len()
    }

    /// `d(x) = min_y gauge(x - y)` over the complement boundary layer, for
    /// inside cells; 0 elsewhere.
    pub fn distance_field(&self, g: &ConvexGauge) -> Result<Vec<f64>> {
        if self.outer.is_empty() {
            return Err(Error::NoBoundary);
        }
        let queries = self.inside_cells();
        let d = if self.grid.len() <= BRUTE_FORCE_CELLS {
            min_distance_brute(&self.grid, g, &self.outer, &queries)
        } else {
            min_distance_seeded(&self.grid, g, &self.outer, &queries)
        };
        let mut field = vec![0.0; self.grid.len()];
        for (&c, v) in queries.iter().zip(d) {
            field[c] = v;
        }
        Ok(field)
    }

    /// Argmax of the distance field; ties go to the smaller index.
    pub fn inradius_point(&self, field: &[f64]) -> Result<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..self.grid.len() {
            if self.inside[c] && best.is_none_or(|(_, v)| field[c] > v) {
                best = Some((c, field[c]));
            }
        }
        best.ok_or(Error::EmptyDomain)
    }
}

/// Grows a mask by one cell in the 8-neighborhood.
pub fn dilate8(grid: &GridSpec, mask: &[bool]) -> Vec<bool> {
    (0..grid.len())
        .map(|c| {
            mask[c]
                || NEIGHBORS_8
                    .iter()
                    .any(|&(di, dj)| grid.offset(c, di, dj).is_some_and(|n| mask[n]))
        })
        .collect()
}

/// Outcome of a mask inclusion `A ⊆ B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Inclusion {
    /// Cells of `A` outside `B`.
    pub strict_misses: usize,
    /// Cells of `A` outside `B` grown by one cell; the verdict uses this count.
    pub misses: usize,
    pub holds: bool,
}

/// `A ⊆ B` up to one cell of dilation of `B`.
pub fn check_inclusion(grid: &GridSpec, a: &[bool], b: &[bool]) -> Inclusion {
    let grown = dilate8(grid, b);
    let strict_misses = a.iter().zip(b).filter(|&(&x, &y)| x && !y).count();
    let misses = a.iter().zip(&grown).filter(|&(&x, &y)| x && !y).count();
    Inclusion {
        strict_misses,
        misses,
        holds: misses == 0,
    }
}

pub fn union_masks(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(&x, &y)| x || y).collect()
}

/// `min_s gauge(q - s)` over source cells for each query cell.
///
/// Small problems are brute force. Larger ones seed each query with the source
/// found by a nearest-label sweep, then re-check every source that could beat
/// it, so both paths are exact.
pub fn min_gauge_distance(grid: &GridSpec, g: &ConvexGauge, sources: &[usize], queries: &[usize]) -> Vec<f64> {
    if sources.is_empty() {
        return vec![f64::INFINITY; queries.len()];
    }
    if sources.len() * queries.len() <= BRUTE_FORCE_PAIRS {
        min_distance_brute(grid, g, sources, queries)
    } else {
        min_distance_seeded(grid, g, sources, queries)
    }
}

const BRUTE_FORCE_PAIRS: usize = 1 << 22;

pub(crate) fn min_distance_brute(grid: &GridSpec, g: &ConvexGauge, sources: &[usize], queries: &[usize]) -> Vec<f64> {
    let pts: Vec<P2> = sources.iter().map(|&c| grid.center_of(c)).collect();
    queries
        .par_iter()
        .map(|&c| {
            let x = grid.center_of(c);
            pts.iter()
                .map(|&y| g.eval(x - y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub(crate) fn min_distance_seeded(grid: &GridSpec, g: &ConvexGauge, sources: &[usize], queries: &[usize]) -> Vec<f64> {
    let pts: Vec<P2> = sources.iter().map(|&c| grid.center_of(c)).collect();
    let labels = nearest_label_sweep(grid, g, sources);
    let buckets = Buckets::new(grid, sources);
    let rout = g.outer_radius();
    queries
        .par_iter()
        .map(|&c| {
            let x = grid.center_of(c);
            let mut best = g.eval(x - grid.center_of(labels[c]));
            buckets.visit(x, best * rout, |k| {
                let d = g.eval(x - pts[k]);
                if d < best {
                    best = d;
                }
            });
            best
        })
        .collect()
}

#[derive(PartialEq)]
struct HeapItem {
    d: f64,
    cell: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.d.total_cmp(&self.d).then_with(|| o.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Multi-source Dijkstra carrying the source cell; each cell ends with a
/// nearby (usually nearest) source.
fn nearest_label_sweep(grid: &GridSpec, g: &ConvexGauge, sources: &[usize]) -> Vec<usize> {
    let mut label = vec![usize::MAX; grid.len()];
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        label[s] = s;
        dist[s] = 0.0;
        heap.push(HeapItem { d: 0.0, cell: s });
    }
    while let Some(HeapItem { d, cell }) = heap.pop() {
        if d > dist[cell] {
            continue;
        }
        let src = grid.center_of(label[cell]);
        for &(di, dj) in &NEIGHBORS_8 {
            if let Some(n) = grid.offset(cell, di, dj) {
                let nd = g.eval(grid.center_of(n) - src);
                if nd < dist[n] {
                    dist[n] = nd;
                    label[n] = label[cell];
                    heap.push(HeapItem { d: nd, cell: n });
                }
            }
        }
    }
    label
}

const BUCKET: usize = 8;

/// Coarse spatial buckets of point indices.
struct Buckets {
    grid: GridSpec,
    bx: usize,
    by: usize,
    items: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(grid: &GridSpec, cells: &[usize]) -> Self {
        let bx = grid.nx.div_ceil(BUCKET);
        let by = grid.ny.div_ceil(BUCKET);
        let mut items = vec![Vec::new(); bx * by];
        for (k, &c) in cells.iter().enumerate() {
            let (i, j) = grid.coords(c);
            items[(j / BUCKET) * bx + i / BUCKET].push(k);
        }
        Buckets {
            grid: *grid,
            bx,
            by,
            items,
        }
    }

    /// Calls `f` on every point whose bucket meets the disk of radius `rad` around `x`.
    fn visit(&self, x: P2, rad: f64, mut f: impl FnMut(usize)) {
        let g = &self.grid;
        let w = BUCKET as f64 * g.h;
        let rel = |v: f64, o: f64| (v - o + 0.5 * g.h) / w;
        let bi0 = rel(x.x - rad, g.origin.x).floor().max(0.0) as usize;
        let bj0 = rel(x.y - rad, g.origin.y).floor().max(0.0) as usize;
        let bi1 = (rel(x.x + rad, g.origin.x).floor() as i64).min(self.bx as i64 - 1);
        let bj1 = (rel(x.y + rad, g.origin.y).floor() as i64).min(self.by as i64 - 1);
        if bi1 < 0 || bj1 < 0 {
            return;
        }
        for bj in bj0..=bj1 as usize {
            for bi in bi0..=bi1 as usize {
                for &k in &self.items[bj * self.bx + bi] {
                    f(k);
                }
            }
        }
    }
}

/// A closed set represented as a union of closed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSet {
    pub grid: GridSpec,
    pub cells: Vec<bool>,
}

impl CompactSet {
    pub fn new(grid: GridSpec, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.len() {
            return invalid("mask size does not match grid");
        }
        Ok(CompactSet { grid, cells })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(P2) -> bool) -> Self {
        let cells = grid.mask_from_fn(f);
        CompactSet { grid, cells }
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&b| b)
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&c| self.cells[c]).collect()
    }

    /// Complement cells adjacent to the set.
    pub fn outer_layer(&self) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&c| {
                !self.cells[c]
                    && NEIGHBORS_8
                        .iter()
                        .any(|&(di, dj)| self.grid.offset(c, di, dj).is_some_and(|n| self.cells[n]))
            })
            .collect()
    }

    /// Member cells adjacent to the complement; the grid frame counts as complement.
    pub fn inner_layer(&self) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&c| {
                self.cells[c]
                    && NEIGHBORS_8.iter().any(|&(di, dj)| match self.grid.offset(c, di, dj) {
                        Some(n) => !self.cells[n],
                        None => true,
                    })
            })
            .collect()
    }

    /// Members minus the inner layer.
    pub fn interior(&self) -> CompactSet {
        let mut cells = self.cells.clone();
        for c in self.inner_layer() {
            cells[c] = false;
        }
        CompactSet {
            grid: self.grid,
            cells,
        }
    }

    /// `min gauge(p - y)` over the outer layer; `None` if the set fills the grid.
    pub fn boundary_distance(&self, p: P2, g: &ConvexGauge) -> Option<f64> {
        let outer = self.outer_layer();
        if outer.is_empty() {
            return None;
        }
        Some(
            outer
                .iter()
                .map(|&c| g.eval(p - self.grid.center_of(c)))
                .fold(f64::INFINITY, f64::min),
        )
    }
}

fn directed_hausdorff(a: &CompactSet, b: &CompactSet, g: &ConvexGauge) -> f64 {
    let queries: Vec<usize> = a.members().into_iter().filter(|&c| !b.cells[c]).collect();
    min_gauge_distance(&a.grid, g, &b.members(), &queries)
        .into_iter()
        .fold(0.0, f64::max)
}

/// `max(sup_a inf_b g(a-b), sup_b inf_a g(b-a))` over cell centers.
pub fn hausdorff_distance(a: &CompactSet, b: &CompactSet, g: &ConvexGauge) -> Result<f64> {
    if a.grid != b.grid {
        return invalid("hausdorff operands live on different grids");
    }
    if a.is_empty() || b.is_empty() {
        return invalid("hausdorff operand is empty");
    }
    Ok(directed_hausdorff(a, b, g).max(directed_hausdorff(b, a, g)))
}

/// Truncated `⋂_m Cl(⋃_{j≥m} K_j)`.
///
/// With `n` sets the intersection runs over `m ≤ ⌈n/2⌉`, so every tail union
/// still holds at least half of the prefix. Running `m` to `n` would return
/// `K_n` alone. Cells are closed, so the closure of a union of cells is the
/// union itself.
pub fn limsup_closure(sets: &[CompactSet]) -> Result<CompactSet> {
    let Some(first) = sets.first() else {
        return invalid("limsup of an empty sequence");
    };
    if sets.iter().any(|s| s.grid != first.grid) {
        return invalid("sequence lives on different grids");
    }
    let n = sets.len();
    let m_max = n.div_ceil(2);
    // tail[m] = union of sets[m..]; the intersection over m < m_max of a
    // decreasing family is its last member
    let mut tail = vec![false; first.grid.len()];
    for s in &sets[m_max - 1..] {
        for (t, &b) in tail.iter_mut().zip(&s.cells) {
            *t |= b;
        }
    }
    Ok(CompactSet {
        grid: first.grid,
        cells: tail,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct KeepDistanceReport {
    /// "pass", "fail" or "hypothesis_failed".
    pub status: String,
    /// `d(x, ∂K) - (r - tol)` at the limit point.
    pub margin: f64,
    pub tol: f64,
    pub limit_distance: f64,
    /// Index of the first sequence term violating the hypothesis.
    pub failed_at: Option<usize>,
}

/// Checks that the limit of `x_j` sits inside the limit of `K_j` at distance
/// at least `r - 4h` from its boundary.
///
/// Hypothesis: each `x_j` lies in `K_j` with `d(x_j, ∂K_j) >= r`, and the tail
/// of `x_j` is Cauchy within `2h`.
pub fn keep_distance_check(
    k_seq: &[CompactSet],
    x_seq: &[P2],
    r: f64,
    g: &ConvexGauge,
) -> Result<KeepDistanceReport> {
    if k_seq.is_empty() || k_seq.len() != x_seq.len() {
        return invalid("sequences must be nonempty and of equal length");
    }
    let grid = k_seq[0].grid;
    let tol = 4.0 * grid.h;
    let hyp_fail = |j: usize| KeepDistanceReport {
        status: "hypothesis_failed".into(),
        margin: f64::NAN,
        tol,
        limit_distance: f64::NAN,
        failed_at: Some(j),
    };
    for (j, (k, &x)) in k_seq.iter().zip(x_seq).enumerate() {
        let member = grid.cell_of(x).is_some_and(|c| k.cells[c]);
        let d = k.boundary_distance(x, g).unwrap_or(f64::INFINITY);
        if !member || d < r {
            return Ok(hyp_fail(j));
        }
    }
    let n = x_seq.len();
    let tail = &x_seq[n / 2..];
    let last = x_seq[n - 1];
    if tail.iter().any(|&p| (p - last).norm() > 2.0 * grid.h) {
        return Ok(hyp_fail(n / 2));
    }
    let limit = limsup_closure(k_seq)?;
    let interior = limit.interior();
    let d = limit.boundary_distance(last, g).unwrap_or(f64::INFINITY);
    let in_interior = grid.cell_of(last).is_some_and(|c| interior.cells[c]);
    let margin = d - (r - tol);
    let ok = in_interior && margin >= 0.0;
    Ok(KeepDistanceReport {
        status: if ok { "pass" } else { "fail" }.into(),
        margin,
        tol,
        limit_distance: d,
        failed_at: None,
    })
}
