//! Discrete John constants.
//!
//! Curves are directed paths in the cell graph of a domain: nodes are inside
//! cells, edges are 8- or 16-neighbor steps that stay inside and do not cut
//! complement corners, and the weight of `u -> v` is `gauge(v - u)`. For a
//! path from `x` to `x0` the ratio at a vertex is the path length so far over
//! the boundary distance there; `J(x; x0)` is the least achievable maximum
//! ratio.
//!
//! For a fixed `J`, keeping only prefixes that satisfy `L(v) <= J d(v)` and
//! taking shortest prefixes is lossless: a shorter prefix only loosens every
//! later constraint. That makes feasibility a pruned Dijkstra search.

use crate::curve::Polyline;
use crate::error::{invalid, Error, Result};
use crate::gauge::ConvexGauge;
use crate::geom::P2;
use crate::grid::{GridDomain, NEIGHBORS_8};
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Mutex;

const KNIGHT: [(i64, i64); 8] = [
    (2, 1),
    (1, 2),
    (-1, 2),
    (-2, 1),
    (-2, -1),
    (-1, -2),
    (1, -2),
    (2, -1),
];

/// Default relative binary-search tolerance.
pub const DEFAULT_REL_TOL: f64 = 1e-3;
/// Grids with both sides at most this size get an exhaustive center scan.
pub const EXACT_SCAN_SIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Neighborhood {
    #[default]
    N8,
    N16,
}

impl Neighborhood {
    pub fn offsets(self) -> Vec<(i64, i64)> {
        let mut v = NEIGHBORS_8.to_vec();
        if self == Neighborhood::N16 {
            v.extend_from_slice(&KNIGHT);
        }
        v
    }

    pub fn label(self) -> &'static str {
        match self {
            Neighborhood::N8 => "8",
            Neighborhood::N16 => "16",
        }
    }
}

/// Cell graph of a domain with boundary distances attached.
#[derive(Debug, Clone)]
pub struct JohnGraph {
    pub dom: GridDomain,
    pub gauge: ConvexGauge,
    pub neighborhood: Neighborhood,
    /// Cell of each node, ascending.
    pub cells: Vec<usize>,
    node_of: Vec<u32>,
    /// Boundary distance per node.
    pub d: Vec<f64>,
    /// Full distance field, indexed by cell.
    pub field: Vec<f64>,
    fwd_off: Vec<usize>,
    fwd: Vec<(u32, f64)>,
    rev_off: Vec<usize>,
    rev: Vec<(u32, f64)>,
}

const NONE: u32 = u32::MAX;

impl JohnGraph {
    pub fn new(dom: &GridDomain, g: &ConvexGauge, nb: Neighborhood) -> Result<Self> {
        let field = dom.distance_field(g)?;
        let cells = dom.inside_cells();
        if cells.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let mut node_of = vec![NONE; dom.grid.len()];
        for (k, &c) in cells.iter().enumerate() {
            node_of[c] = k as u32;
        }
        let offs = nb.offsets();
        let mut fwd_off = Vec::with_capacity(cells.len() + 1);
        let mut fwd = Vec::new();
        fwd_off.push(0);
        for &c in &cells {
            let p = dom.grid.center_of(c);
            for &(di, dj) in &offs {
                if let Some(n) = dom.step_ok(c, di, dj) {
                    let w = g.eval(dom.grid.center_of(n) - p);
                    fwd.push((node_of[n], w));
                }
            }
            fwd_off.push(fwd.len());
        }
        let mut counts = vec![0usize; cells.len() + 1];
        for &(v, _) in &fwd {
            counts[v as usize + 1] += 1;
        }
        for k in 0..cells.len() {
            counts[k + 1] += counts[k];
        }
        let rev_off = counts.clone();
        let mut fill = counts;
        let mut rev = vec![(0u32, 0.0); fwd.len()];
        for u in 0..cells.len() {
            for &(v, w) in &fwd[fwd_off[u]..fwd_off[u + 1]] {
                rev[fill[v as usize]] = (u as u32, w);
                fill[v as usize] += 1;
            }
        }
        let d = cells.iter().map(|&c| field[c]).collect();
        Ok(JohnGraph {
            dom: dom.clone(),
            gauge: g.clone(),
            neighborhood: nb,
            cells,
            node_of,
            d,
            field,
            fwd_off,
            fwd,
            rev_off,
            rev,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn node(&self, cell: usize) -> Result<usize> {
        match self.node_of.get(cell) {
            Some(&n) if n != NONE => Ok(n as usize),
            _ => invalid(format!("cell {cell} is not inside the domain")),
        }
    }

    fn out_edges(&self, u: usize) -> &[(u32, f64)] {
        &self.fwd[self.fwd_off[u]..self.fwd_off[u + 1]]
    }

    fn in_edges(&self, u: usize) -> &[(u32, f64)] {
        &self.rev[self.rev_off[u]..self.rev_off[u + 1]]
    }

    fn max_weight(&self) -> f64 {
        self.fwd.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    fn min_d(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Graph connectivity under the step rule.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in self.out_edges(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v as usize);
                }
            }
        }
        count == self.len()
    }
}

#[derive(PartialEq)]
struct MinItem(f64, u32);
impl Eq for MinItem {}
impl Ord for MinItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}
impl PartialOrd for MinItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(PartialEq)]
struct MaxItem(f64, u32);
impl Eq for MaxItem {}
impl Ord for MaxItem {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then_with(|| o.1.cmp(&self.1))
    }
}
impl PartialOrd for MaxItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Shortest path from `s` to `t` among paths whose every ratio is `<= j`
/// (`< j` when `strict`). Returns the node path.
fn constrained_path(gr: &JohnGraph, s: usize, t: usize, j: f64, strict: bool) -> Option<Vec<usize>> {
    constrained_path_to(gr, s, |v| v == t, j, strict, 0.0)
}

/// Same search toward any node accepted by `is_target`, with the path length
/// starting at `l0` instead of 0.
fn constrained_path_to(
    gr: &JohnGraph,
    s: usize,
    is_target: impl Fn(usize) -> bool,
    j: f64,
    strict: bool,
    l0: f64,
) -> Option<Vec<usize>> {
    let n = gr.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![NONE; n];
    let mut heap = BinaryHeap::new();
    dist[s] = l0;
    heap.push(MinItem(l0, s as u32));
    while let Some(MinItem(l, u)) = heap.pop() {
        let u = u as usize;
        if l > dist[u] {
            continue;
        }
        if is_target(u) {
            let mut path = vec![u];
            let mut c = u;
            while c != s {
                c = parent[c] as usize;
                path.push(c);
            }
            path.reverse();
            return Some(path);
        }
        for &(v, w) in gr.out_edges(u) {
            let v = v as usize;
            let nl = l + w;
            let r = nl / gr.d[v];
            let ok = if strict { r < j } else { r <= j };
            if ok && nl < dist[v] {
                dist[v] = nl;
                parent[v] = u as u32;
                heap.push(MinItem(nl, v as u32));
            }
        }
    }
    None
}

/// Per-vertex `(L, d, L/d)` along a node path, with the same arithmetic as the search.
fn profile_of(gr: &JohnGraph, path: &[usize]) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(path.len());
    let mut l = 0.0;
    for (k, &v) in path.iter().enumerate() {
        if k > 0 {
            let u = path[k - 1];
            let w = gr
                .out_edges(u)
                .iter()
                .find(|e| e.0 as usize == v)
                .expect("path follows graph edges")
                .1;
            l += w;
        }
        let d = gr.d[v];
        out.push((l, d, if k == 0 { 0.0 } else { l / d }));
    }
    out
}

fn path_value(profile: &[(f64, f64, f64)]) -> f64 {
    profile.iter().map(|p| p.2).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct VertexRatio {
    pub length: f64,
    pub distance: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JohnCertificate {
    pub value: f64,
    /// Witness as `[i, j]` cell coordinates from `x` to `x0`.
    pub witness: Vec<[usize; 2]>,
    #[serde(skip)]
    pub witness_cells: Vec<usize>,
    #[serde(skip)]
    pub witness_curve: Polyline,
    /// Arclength parameter of the first vertex attaining the value.
    pub witness_param: f64,
    pub per_vertex: Vec<VertexRatio>,
    /// Final binary-search bracket before the exact descent.
    pub bracket: [f64; 2],
    pub tol_j: f64,
    pub searches: usize,
}

impl JohnCertificate {
    /// `max(value, 1)`, the value typed into `[1, ∞)`.
    pub fn clamped(&self) -> f64 {
        self.value.max(1.0)
    }
}

fn certificate(gr: &JohnGraph, path: &[usize], bracket: [f64; 2], tol_j: f64, searches: usize) -> JohnCertificate {
    let prof = profile_of(gr, path);
    let value = path_value(&prof);
    let witness_cells: Vec<usize> = path.iter().map(|&v| gr.cells[v]).collect();
    let pts: Vec<P2> = witness_cells.iter().map(|&c| gr.dom.grid.center_of(c)).collect();
    let witness_curve = Polyline::new(pts).expect("cell centers are finite");
    let kstar = prof.iter().position(|p| p.2 == value).unwrap_or(0);
    let witness_param = if path.len() > 1 {
        let e: f64 = witness_cells
            .windows(2)
            .take(kstar)
            .map(|w| (gr.dom.grid.center_of(w[1]) - gr.dom.grid.center_of(w[0])).norm())
            .sum();
        e / witness_curve.euclidean_length()
    } else {
        0.0
    };
    JohnCertificate {
        value,
        witness: witness_cells.iter().map(|&c| gr.dom.grid.coords(c).into()).collect(),
        witness_cells,
        witness_curve,
        witness_param,
        per_vertex: prof
            .into_iter()
            .map(|(length, distance, ratio)| VertexRatio {
                length,
                distance,
                ratio,
            })
            .collect(),
        bracket,
        tol_j,
        searches,
    }
}

/// `J(x; x0)`: binary search on `J` with pruned searches, then an exact
/// descent: while some path has all ratios strictly below the current
/// witness value, take it. The result is the exact minimax over paths.
///
/// `tol_j` defaults to `1e-3` times the initial bracket `[0, V0]`, where `V0`
/// is the value of the shortest path found at the a-priori bound
/// `J_hi = (#nodes · max edge weight) / min d`.
pub fn john_point(gr: &JohnGraph, x: usize, x0: usize, tol_j: Option<f64>) -> Result<JohnCertificate> {
    let s = gr.node(x)?;
    let t = gr.node(x0)?;
    if s == t {
        return Ok(certificate(gr, &[s], [0.0, 0.0], 0.0, 0));
    }
    let j_hi = gr.len() as f64 * gr.max_weight() / gr.min_d();
    let mut searches = 1;
    let mut path = constrained_path(gr, s, t, j_hi, false).ok_or(Error::Disconnected)?;
    let mut hi = path_value(&profile_of(gr, &path));
    let mut lo = 0.0;
    let tol = tol_j.unwrap_or(DEFAULT_REL_TOL * hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        searches += 1;
        match constrained_path(gr, s, t, mid, false) {
            Some(p) => {
                hi = path_value(&profile_of(gr, &p));
                path = p;
            }
            None => lo = mid,
        }
    }
    let bracket = [lo, hi];
    loop {
        searches += 1;
        match constrained_path(gr, s, t, hi, true) {
            Some(p) => {
                hi = path_value(&profile_of(gr, &p));
                path = p;
            }
            None => break,
        }
    }
    Ok(certificate(gr, &path, bracket, tol, searches))
}

/// For a fixed `J`, the largest admissible arrival length at each node for
/// some continuation to `x0`; a start `x` is feasible iff the value is `>= 0`.
/// `A(x0) = J d(x0)`, `A(v) = min(J d(v), max_{v->u} A(u) - w(v,u))`.
fn arrival_budget(gr: &JohnGraph, t: usize, j: f64) -> Vec<f64> {
    arrival_budget_multi(gr, &[t], j)
}

fn arrival_budget_multi(gr: &JohnGraph, targets: &[usize], j: f64) -> Vec<f64> {
    let n = gr.len();
    let mut a = vec![f64::NEG_INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &t in targets {
        a[t] = j * gr.d[t];
        heap.push(MaxItem(a[t], t as u32));
    }
    while let Some(MaxItem(val, u)) = heap.pop() {
        let u = u as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in gr.in_edges(u) {
            let v = v as usize;
            if done[v] {
                continue;
            }
            let cand = (val - w).min(j * gr.d[v]);
            if cand >= 0.0 && cand > a[v] {
                a[v] = cand;
                heap.push(MaxItem(cand, v as u32));
            }
        }
    }
    a
}

fn uncovered(gr: &JohnGraph, t: usize, j: f64) -> Vec<usize> {
    let a = arrival_budget(gr, t, j);
    (0..gr.len()).filter(|&v| !(a[v] >= 0.0)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CenterResult {
    pub value: f64,
    pub worst_x: usize,
    pub bracket: [f64; 2],
    pub sweeps: usize,
}

/// `J(Ω; x0) = max_x J(x; x0)`.
///
/// Brackets by doubling from 1, bisects with one backward sweep per trial `J`
/// until the bracket is below `tol_j` (default `1e-3` of the initial bracket),
/// then evaluates `J(x; x0)` exactly for the cells still uncovered at the
/// lower end. `worst_x` is the maximizer, ties to the smaller cell.
pub fn john_center(gr: &JohnGraph, x0: usize, tol_j: Option<f64>) -> Result<CenterResult> {
    john_center_below(gr, x0, tol_j, f64::INFINITY).map(|r| r.expect("unbounded cap"))
}

/// Like [`john_center`] but returns `None` as soon as `J(Ω; x0) > cap` is certain.
pub fn john_center_below(
    gr: &JohnGraph,
    x0: usize,
    tol_j: Option<f64>,
    cap: f64,
) -> Result<Option<CenterResult>> {
    let t = gr.node(x0)?;
    if gr.len() == 1 {
        return Ok(Some(CenterResult {
            value: 0.0,
            worst_x: x0,
            bracket: [0.0, 0.0],
            sweeps: 0,
        }));
    }
    let mut sweeps = 0;
    if cap.is_finite() {
        sweeps += 1;
        if !uncovered(gr, t, cap).is_empty() {
            return Ok(None);
        }
    }
    let mut hi = if cap.is_finite() { cap } else { 1.0 };
    let j_max = gr.len() as f64 * gr.max_weight() / gr.min_d();
    while !cap.is_finite() {
        sweeps += 1;
        if uncovered(gr, t, hi).is_empty() {
            break;
        }
        if hi > j_max {
            return Err(Error::Disconnected);
        }
        hi *= 2.0;
    }
    let mut lo = if cap.is_finite() || hi <= 1.0 { 0.0 } else { hi / 2.0 };
    let tol = tol_j.unwrap_or(DEFAULT_REL_TOL * (hi - lo));
    let mut low_set = None;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        sweeps += 1;
        let u = uncovered(gr, t, mid);
        if u.is_empty() {
            hi = mid;
        } else {
            lo = mid;
            low_set = Some(u);
        }
    }
    let low_set = match low_set {
        Some(u) => u,
        None => uncovered(gr, t, lo),
    };
    let mut best = (0.0, x0);
    for v in low_set {
        let c = john_point(gr, gr.cells[v], x0, None)?;
        if c.value > best.0 {
            best = (c.value, gr.cells[v]);
        }
    }
    Ok(Some(CenterResult {
        value: best.0,
        worst_x: best.1,
        bracket: [lo, hi],
        sweeps,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalJohn {
    pub value: f64,
    pub center: usize,
    pub worst_x: usize,
    pub inradius_cell: usize,
    pub r_omega: f64,
    pub j_at_inradius: f64,
    pub r0: f64,
    pub candidates: usize,
    pub evaluated: usize,
    pub exhaustive: bool,
}

/// The `k` best `(J(Ω; c), c, worst_x)` seen so far, ascending, ties to the smaller cell.
struct TopK {
    k: usize,
    items: Vec<(f64, usize, usize)>,
}

impl TopK {
    fn cap(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    fn offer(&mut self, item: (f64, usize, usize)) {
        let pos = self
            .items
            .partition_point(|b| b.0 < item.0 || (b.0 == item.0 && b.1 < item.1));
        self.items.insert(pos, item);
        self.items.truncate(self.k);
    }
}

/// Evaluates candidates, skipping any that provably exceed the current k-th
/// best. Candidates are visited in order of decreasing boundary distance so
/// good caps appear early; the final set does not depend on the visit order.
fn scan_centers(gr: &JohnGraph, cands: &[usize], top: &mut TopK) -> Result<()> {
    let mut order = cands.to_vec();
    order.sort_by(|&a, &b| gr.field[b].total_cmp(&gr.field[a]).then(a.cmp(&b)));
    let shared = Mutex::new(std::mem::replace(top, TopK { k: top.k, items: Vec::new() }));
    order.par_iter().try_for_each(|&c| -> Result<()> {
        let cap = shared.lock().unwrap().cap();
        if let Some(r) = john_center_below(gr, c, None, cap)? {
            shared.lock().unwrap().offer((r.value, c, r.worst_x));
        }
        Ok(())
    })?;
    *top = shared.into_inner().unwrap();
    Ok(())
}

/// `John(Ω) = min_{x0} J(Ω; x0)` over cells with `d >= r0`,
/// `r0 = r_Ω / (1 + 2 C J(Ω; x_Ω))`.
///
/// Grids up to 64×64 are scanned exhaustively. Larger grids scan a stride
/// lattice, then repeatedly halve the stride around the best four cells.
pub fn optimal_john(gr: &JohnGraph) -> Result<OptimalJohn> {
    if !gr.is_connected() {
        return Err(Error::Disconnected);
    }
    let (xo, r_omega) = gr.dom.inradius_point(&gr.field)?;
    let at_inradius = john_center(gr, xo, None)?;
    let c = gr.gauge.asymmetry_constant();
    let r0 = r_omega / (1.0 + 2.0 * c * at_inradius.value);
    let cands: Vec<usize> = gr
        .cells
        .iter()
        .zip(&gr.d)
        .filter(|&(_, &d)| d >= r0)
        .map(|(&c, _)| c)
        .collect();
    let grid = &gr.dom.grid;
    let exhaustive = grid.nx <= EXACT_SCAN_SIDE && grid.ny <= EXACT_SCAN_SIDE;
    let mut seen: std::collections::HashSet<usize> = std::collections::HashSet::new();
    seen.insert(xo);
    let mut evaluated = 1;
    let mut top = TopK {
        k: if exhaustive { 1 } else { 4 },
        items: vec![(at_inradius.value, xo, at_inradius.worst_x)],
    };
    if exhaustive {
        let rest: Vec<usize> = cands.iter().copied().filter(|c| *c != xo).collect();
        evaluated += rest.len();
        scan_centers(gr, &rest, &mut top)?;
    } else {
        let is_cand: std::collections::HashSet<usize> = cands.iter().copied().collect();
        let side = grid.nx.max(grid.ny);
        let mut stride = side.div_ceil(32).next_power_of_two();
        let mut frontier: Vec<usize> = cands
            .iter()
            .copied()
            .filter(|&c| {
                let (i, j) = grid.coords(c);
                i % stride == 0 && j % stride == 0
            })
            .collect();
        loop {
            let fresh: Vec<usize> = frontier.into_iter().filter(|c| seen.insert(*c)).collect();
            evaluated += fresh.len();
            scan_centers(gr, &fresh, &mut top)?;
            if stride == 1 {
                break;
            }
            let reach = stride as i64;
            stride /= 2;
            let step = stride as i64;
            let mut next = Vec::new();
            for &(_, k, _) in &top.items {
                for dj in (-reach..=reach).step_by(step as usize) {
                    for di in (-reach..=reach).step_by(step as usize) {
                        if let Some(n) = grid.offset(k, di, dj) {
                            if is_cand.contains(&n) {
                                next.push(n);
                            }
                        }
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            frontier = next;
        }
    }
    let (value, center, worst_x) = top.items[0];
    Ok(OptimalJohn {
        value,
        center,
        worst_x,
        inradius_cell: xo,
        r_omega,
        j_at_inradius: at_inradius.value,
        r0,
        candidates: cands.len(),
        evaluated,
        exhaustive,
    })
}

/// Exhaustive `argmin_{x0} J(Ω; x0)` over every inside cell.
pub fn exhaustive_center(gr: &JohnGraph) -> Result<(f64, usize)> {
    let mut top = TopK { k: 1, items: Vec::new() };
    scan_centers(gr, &gr.cells, &mut top)?;
    let b = top.items[0];
    Ok((b.0, b.1))
}

/// Escape budgets toward a target node set at a fixed `J`, with a successor
/// per node that stays within budget.
#[derive(Debug, Clone)]
pub struct EscapeField {
    pub j: f64,
    /// Arrival budget per node; `-inf` where no escape exists.
    pub budget: Vec<f64>,
    next: Vec<u32>,
    is_target: Vec<bool>,
}

impl EscapeField {
    pub fn new(gr: &JohnGraph, targets: &[usize], j: f64) -> Self {
        let budget = arrival_budget_multi(gr, targets, j);
        let mut is_target = vec![false; gr.len()];
        for &t in targets {
            is_target[t] = true;
        }
        let next = (0..gr.len())
            .map(|v| {
                if is_target[v] || !(budget[v] >= 0.0) {
                    return NONE;
                }
                let mut best = (f64::NEG_INFINITY, NONE);
                for &(u, w) in gr.out_edges(v) {
                    let val = budget[u as usize] - w;
                    if val > best.0 || (val == best.0 && u < best.1) {
                        best = (val, u);
                    }
                }
                best.1
            })
            .collect();
        EscapeField {
            j,
            budget,
            next,
            is_target,
        }
    }

    pub fn is_target(&self, v: usize) -> bool {
        self.is_target[v]
    }

    /// Budget-following path from `v` to a target. Every vertex keeps
    /// `l0 + L <= budget <= J d`; `None` when `l0` exceeds the budget at `v`.
    pub fn walk(&self, v: usize, l0: f64) -> Option<Vec<usize>> {
        if !(l0 <= self.budget[v]) {
            return None;
        }
        let mut path = vec![v];
        let mut c = v;
        while !self.is_target[c] {
            c = self.next[c] as usize;
            path.push(c);
        }
        Some(path)
    }
}

/// Smallest `J` (within `tol`) at which every start escapes to the targets.
/// Brackets by doubling from 1.
pub fn min_escape_j(gr: &JohnGraph, targets: &[usize], starts: &[usize], tol: f64) -> Result<f64> {
    let ok = |j: f64| {
        let a = arrival_budget_multi(gr, targets, j);
        starts.iter().all(|&s| a[s] >= 0.0)
    };
    let mut hi = 1.0;
    let mut tries = 0;
    while !ok(hi) {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::NoEscape);
        }
    }
    let mut lo = if tries == 0 { 0.0 } else { hi / 2.0 };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Largest `(l0 + L) / d` along a node path, the start counted only when `l0 > 0`.
pub fn escape_value(gr: &JohnGraph, path: &[usize], l0: f64) -> f64 {
    let prof = profile_of(gr, path);
    let mut v = if l0 > 0.0 { l0 / gr.d[path[0]] } else { 0.0 };
    for p in &prof[1..] {
        v = v.max((l0 + p.0) / p.1);
    }
    v
}

/// Exact minimax escape from `s` to any target with the length starting at
/// `l0`: binary search, then strict descent as in [`john_point`].
pub fn escape_path(gr: &JohnGraph, s: usize, targets: &[bool], l0: f64, tol: f64) -> Result<(f64, Vec<usize>)> {
    let hit = |v: usize| targets[v];
    if hit(s) {
        return Ok((escape_value(gr, &[s], l0), vec![s]));
    }
    let j_hi = (l0 + gr.len() as f64 * gr.max_weight()) / gr.min_d();
    let mut path = constrained_path_to(gr, s, hit, j_hi, false, l0).ok_or(Error::NoEscape)?;
    let mut hi = escape_value(gr, &path, l0);
    let mut lo = if l0 > 0.0 { l0 / gr.d[s] } else { 0.0 };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match constrained_path_to(gr, s, hit, mid, false, l0) {
            Some(p) => {
                hi = escape_value(gr, &p, l0);
                path = p;
            }
            None => lo = mid,
        }
    }
    while let Some(p) = constrained_path_to(gr, s, hit, hi, true, l0) {
        let v = escape_value(gr, &p, l0);
        if v >= hi {
            break;
        }
        hi = v;
        path = p;
    }
    Ok((hi, path))
}

/// Boundary distance of an arbitrary point: min over the complement layer.
pub fn point_distance(dom: &GridDomain, g: &ConvexGauge, p: P2) -> f64 {
    dom.outer
        .iter()
        .map(|&c| g.eval(p - dom.grid.center_of(c)))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioProfile {
    /// `(param, ℓ(γ[0,t]), d(γ(t)), ratio)` per sample.
    pub samples: Vec<[f64; 4]>,
    pub sup: f64,
    pub argmax_param: f64,
}

/// `j(t) = ℓ(γ[0,t]) / d(γ(t))` at samples of pitch `h/2`; the first sample has ratio 0.
pub fn ratio_profile(dom: &GridDomain, g: &ConvexGauge, curve: &Polyline) -> Result<RatioProfile> {
    let mut out = Vec::new();
    let mut sup = 0.0;
    let mut arg = 0.0;
    for (k, (p, t, l)) in curve.samples(g, dom.grid.h / 2.0).into_iter().enumerate() {
        let inside = dom.grid.cell_of(p).is_some_and(|c| dom.inside[c]);
        if !inside {
            return invalid(format!("curve leaves the domain at sample {k} ({:.6}, {:.6})", p.x, p.y));
        }
        let d = point_distance(dom, g, p);
        let r = if k == 0 { 0.0 } else { l / d };
        if r > sup {
            sup = r;
            arg = t;
        }
        out.push([t, l, d, r]);
    }
    Ok(RatioProfile {
        samples: out,
        sup,
        argmax_param: arg,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzPair {
    pub x: usize,
    pub y: usize,
    pub xh: usize,
    pub yh: usize,
    pub j: f64,
    pub jh: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub pairs: Vec<LipschitzPair>,
    pub skipped: Vec<(usize, String)>,
    pub max_ratio: f64,
    pub finite: bool,
}

/// Empirical `|J(x;y) - J(x̂;ŷ)| d(x) / (‖x-x̂‖ + ‖y-ŷ‖)` over pairs of cells.
/// Pairs moving either point by more than `min(d(x), d(y)) / 2` are skipped.
pub fn lipschitz_probe(gr: &JohnGraph, pairs: &[((usize, usize), (usize, usize))]) -> Result<LipschitzReport> {
    let g = &gr.gauge;
    let grid = &gr.dom.grid;
    let results: Vec<std::result::Result<LipschitzPair, String>> = pairs
        .par_iter()
        .map(|&((x, y), (xh, yh))| {
            for c in [x, y, xh, yh] {
                if gr.node(c).is_err() {
                    return Err(format!("cell {c} outside"));
                }
            }
            let dx = gr.field[x];
            let delta = 0.5 * dx.min(gr.field[y]);
            let mx = g.eval(grid.center_of(x) - grid.center_of(xh));
            let my = g.eval(grid.center_of(y) - grid.center_of(yh));
            if mx > delta || my > delta {
                return Err(format!("perturbation exceeds {delta:.4}"));
            }
            let j = john_point(gr, x, y, None).map_err(|e| e.to_string())?.value;
            let jh = john_point(gr, xh, yh, None).map_err(|e| e.to_string())?.value;
            let den = mx + my;
            let ratio = if den == 0.0 { 0.0 } else { (j - jh).abs() * dx / den };
            Ok(LipschitzPair {
                x,
                y,
                xh,
                yh,
                j,
                jh,
                ratio,
            })
        })
        .collect();
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => out.push(p),
            Err(e) => skipped.push((k, e)),
        }
    }
    let max_ratio = out.iter().map(|p| p.ratio).fold(0.0, f64::max);
    Ok(LipschitzReport {
        finite: max_ratio.is_finite(),
        pairs: out,
        skipped,
        max_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundSample {
    pub y: usize,
    pub d: f64,
    pub j: f64,
    pub rhs: f64,
    pub tol: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub r_omega: f64,
    pub asymmetry: f64,
    pub samples: Vec<LowerBoundSample>,
    pub all_hold: bool,
}

/// Checks `J(Ω; y) >= (r_Ω - d(y)) / (C d(y)) - (0.1 + 4h / d(y))`.
pub fn lower_bound_check(gr: &JohnGraph, samples: &[usize]) -> Result<LowerBoundReport> {
    let (_, r_omega) = gr.dom.inradius_point(&gr.field)?;
    let c = gr.gauge.asymmetry_constant();
    let h = gr.dom.grid.h;
    let rows: Vec<Result<LowerBoundSample>> = samples
        .par_iter()
        .map(|&y| {
            let d = gr.field[gr.cells[gr.node(y)?]];
            let j = john_center(gr, y, None)?.value;
            let rhs = (r_omega - d) / (c * d);
            let tol = 0.1 + 4.0 * h / d;
            Ok(LowerBoundSample {
                y,
                d,
                j,
                rhs,
                tol,
                holds: j >= rhs - tol,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(LowerBoundReport {
        r_omega,
        asymmetry: c,
        all_hold: rows.iter().all(|r| r.holds),
        samples: rows,
    })
}
