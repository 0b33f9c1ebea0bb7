//! Polygonal Minkowski gauges.
//!
//! A gauge is given by its unit body, a convex polygon with the origin in its
//! interior. The body need not be symmetric, so `eval(v)` and `eval(-v)` may
//! differ; the worst ratio between them is the asymmetry constant.

use crate::error::{invalid, Error, Result};
use crate::geom::P2;
use crate::grid::GridSpec;
use serde::Deserialize;
use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

const VALIDATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum GaugeKind {
    Euclidean(usize),
    Linf,
    L1,
    Custom,
}

#[derive(Debug, Clone)]
pub struct ConvexGauge {
    vertices: Vec<P2>,
    kind: GaugeKind,
    // per facet i (edge v_i -> v_{i+1}): outward normal scaled so that n·x = 1 on the facet
    facet_normals: Vec<P2>,
    // unwrapped vertex angles, strictly increasing from angles[0]
    angles: Vec<f64>,
    asymmetry: OnceLock<f64>,
    rows: OnceLock<RowProfile>,
}

// x-extent of the body at each distinct vertex height; linear in between
#[derive(Debug, Clone)]
struct RowProfile {
    ys: Vec<f64>,
    xl: Vec<f64>,
    xr: Vec<f64>,
}

#[derive(Deserialize)]
struct GaugeJson {
    vertices: Vec<[f64; 2]>,
}

/// Which side of the ball relation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BallSide {
    /// `gauge(center - c) < r`
    #[default]
    ToCenter,
    /// `gauge(c - center) < r`
    FromCenter,
}

impl ConvexGauge {
    /// Builds a gauge from counterclockwise body vertices.
    ///
    /// Rejects non-convex, clockwise or self-winding lists and bodies whose
    /// interior misses the origin. Nothing is hulled.
    pub fn new(vertices: Vec<P2>) -> Result<Self> {
        Self::with_kind(vertices, GaugeKind::Custom)
    }

    fn with_kind(vertices: Vec<P2>, kind: GaugeKind) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return invalid("gauge body needs at least 3 vertices");
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return invalid("gauge body has non-finite vertex");
        }
        let scale = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let tol = VALIDATION_TOL * scale.max(1.0);
        let mut facet_normals = Vec::with_capacity(n);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let e = b - a;
            if e.norm() <= tol {
                return invalid("gauge body has repeated vertex");
            }
            if e.cross(c - b) < -tol * scale.max(1.0) {
                return invalid("gauge body is not convex and counterclockwise");
            }
            let normal = P2::new(e.y, -e.x);
            let offset = normal.dot(a);
            if offset / e.norm() <= VALIDATION_TOL {
                return invalid("origin is not interior to gauge body");
            }
            facet_normals.push(normal * (1.0 / offset));
        }
        let mut angles = Vec::with_capacity(n);
        let mut total = 0.0;
        angles.push(vertices[0].y.atan2(vertices[0].x));
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let step = a.cross(b).atan2(a.dot(b));
            if step <= 0.0 {
                return invalid("gauge body is not convex and counterclockwise");
            }
            total += step;
            if i + 1 < n {
                angles.push(angles[0] + total);
            }
        }
        if (total - TAU).abs() > 1e-6 {
            return invalid("gauge body winds more than once around the origin");
        }
        Ok(ConvexGauge {
            vertices,
            kind,
            facet_normals,
            angles,
            asymmetry: OnceLock::new(),
            rows: OnceLock::new(),
        })
    }

    /// Regular `k`-gon inscribed in the unit circle, first vertex at angle 0.
    pub fn euclidean(k: usize) -> Result<Self> {
        if k < 3 {
            return invalid("euclidean preset needs k >= 3");
        }
        let vs = (0..k)
            .map(|i| {
                let t = TAU * i as f64 / k as f64;
                P2::new(t.cos(), t.sin())
            })
            .collect();
        Self::with_kind(vs, GaugeKind::Euclidean(k))
    }

    pub fn linf() -> Self {
        let vs = vec![
            P2::new(1.0, -1.0),
            P2::new(1.0, 1.0),
            P2::new(-1.0, 1.0),
            P2::new(-1.0, -1.0),
        ];
        Self::with_kind(vs, GaugeKind::Linf).expect("square body is valid")
    }

    pub fn l1() -> Self {
        let vs = vec![
            P2::new(1.0, 0.0),
            P2::new(0.0, 1.0),
            P2::new(-1.0, 0.0),
            P2::new(0.0, -1.0),
        ];
        Self::with_kind(vs, GaugeKind::L1).expect("diamond body is valid")
    }

    /// Parses `euclidean[:k]`, `linf`, `l1`, inline gauge JSON, or a path to a
    /// gauge JSON file.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        if s == "euclidean" {
            return Self::euclidean(64);
        }
        if let Some(k) = s.strip_prefix("euclidean:") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::Invalid(format!("bad vertex count in {s:?}")))?;
            return Self::euclidean(k);
        }
        match s {
            "linf" => return Ok(Self::linf()),
            "l1" => return Ok(Self::l1()),
            _ => {}
        }
        if s.starts_with('{') {
            return Self::from_json(s);
        }
        let text = std::fs::read_to_string(s)
            .map_err(|e| Error::Invalid(format!("unknown gauge {s:?}: {e}")))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: GaugeJson =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("gauge json: {e}")))?;
        Self::new(g.vertices.into_iter().map(P2::from).collect())
    }

    pub fn vertices(&self) -> &[P2] {
        &self.vertices
    }

    pub fn kind(&self) -> &GaugeKind {
        &self.kind
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, GaugeKind::Euclidean(_))
    }

    /// Short name used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            GaugeKind::Euclidean(k) => format!("euclidean:{k}"),
            GaugeKind::Linf => "linf".into(),
            GaugeKind::L1 => "l1".into(),
            GaugeKind::Custom => "custom".into(),
        }
    }

    fn facet_of(&self, v: P2) -> usize {
        let a0 = self.angles[0];
        let mut phi = v.y.atan2(v.x);
        while phi < a0 {
            phi += TAU;
        }
        while phi >= a0 + TAU {
            phi -= TAU;
        }
        // last i with angles[i] <= phi
        self.angles.partition_point(|&a| a <= phi).saturating_sub(1)
    }

    /// `inf{λ > 0 : v/λ ∈ body}`.
    pub fn eval(&self, v: P2) -> f64 {
        if v.x == 0.0 && v.y == 0.0 {
            return 0.0;
        }
        // rounding in the angle lookup can only land on a neighbouring facet,
        // and the true value is the max over facets
        let n = self.facet_normals.len();
        let f = self.facet_of(v);
        let a = self.facet_normals[(f + n - 1) % n].dot(v);
        let b = self.facet_normals[f].dot(v);
        let c = self.facet_normals[(f + 1) % n].dot(v);
        a.max(b).max(c).max(0.0)
    }

    /// `max_b gauge(-b)` over body vertices; at least 1, equal to 1 for symmetric bodies.
    pub fn asymmetry_constant(&self) -> f64 {
        *self.asymmetry.get_or_init(|| {
            self.vertices
                .iter()
                .map(|&b| self.eval(-b))
                .fold(1.0, f64::max)
        })
    }

    /// Euclidean radius of the smallest origin-centred disk holding the body.
    /// `eval(v) >= |v| / outer_radius()`.
    pub fn outer_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Euclidean radius of the largest origin-centred disk inside the body.
    /// `eval(v) <= |v| / inner_radius()`.
    pub fn inner_radius(&self) -> f64 {
        self.facet_normals
            .iter()
            .map(|n| 1.0 / n.norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// The reflected body `-K`.
    pub fn reflected(&self) -> ConvexGauge {
        let vs = self.vertices.iter().map(|&v| -v).collect();
        Self::with_kind(vs, self.kind.clone()).expect("reflection of a valid body is valid")
    }

    fn row_profile(&self) -> &RowProfile {
        self.rows.get_or_init(|| {
            let mut ys: Vec<f64> = self.vertices.iter().map(|v| v.y).collect();
            ys.sort_by(f64::total_cmp);
            ys.dedup();
            let n = self.vertices.len();
            let mut xl = Vec::with_capacity(ys.len());
            let mut xr = Vec::with_capacity(ys.len());
            for &y in &ys {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for i in 0..n {
                    let a = self.vertices[i];
                    let b = self.vertices[(i + 1) % n];
                    if a.y.min(b.y) <= y && y <= a.y.max(b.y) {
                        let xs = if a.y == b.y {
                            [a.x, b.x]
                        } else {
                            let x = a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y);
                            [x, x]
                        };
                        for x in xs {
                            lo = lo.min(x);
                            hi = hi.max(x);
                        }
                    }
                }
                xl.push(lo);
                xr.push(hi);
            }
            RowProfile { ys, xl, xr }
        })
    }

    /// Open x-extent of the body at height `t`, `None` outside its y-range.
    pub fn body_row(&self, t: f64) -> Option<(f64, f64)> {
        let p = self.row_profile();
        let m = p.ys.len();
        if !(t > p.ys[0] && t < p.ys[m - 1]) {
            return None;
        }
        let k = p.ys.partition_point(|&y| y <= t).clamp(1, m - 1);
        let s = (t - p.ys[k - 1]) / (p.ys[k] - p.ys[k - 1]);
        Some((
            p.xl[k - 1] + s * (p.xl[k] - p.xl[k - 1]),
            p.xr[k - 1] + s * (p.xr[k] - p.xr[k - 1]),
        ))
    }

    /// Half-open column range of row `j` inside `{c : gauge(center - c) < r}`.
    /// Agrees with [`ConvexGauge::ball_cells`] cell for cell.
    pub fn ball_row_cols(&self, center: P2, r: f64, grid: &GridSpec, j: usize) -> (usize, usize) {
        if !(r > 0.0) {
            return (0, 0);
        }
        let y = grid.center(0, j).y;
        let Some((bl, br)) = self.body_row((center.y - y) / r) else {
            return (0, 0);
        };
        // c = center - r b, so the x-range flips
        let (mut a, mut b) = grid.col_range(center.x - r * br, center.x - r * bl);
        let inside = |i: usize| self.eval(center - grid.center(i, j)) < r;
        // rounding fix-ups at both ends; the row set is an interval
        while a < b && !inside(a) {
            a += 1;
        }
        while b > a && !inside(b - 1) {
            b -= 1;
        }
        if a == b {
            let mid = center.x - 0.5 * r * (bl + br);
            let (m, _) = grid.col_range(mid - 0.5 * grid.h, mid + 0.5 * grid.h);
            if m >= grid.nx || !inside(m) {
                return (0, 0);
            }
            (a, b) = (m, m + 1);
        }
        while a > 0 && inside(a - 1) {
            a -= 1;
        }
        while b < grid.nx && inside(b) {
            b += 1;
        }
        (a, b)
    }

    /// Cells of `grid` in the open ball of radius `r` about `center`.
    ///
    /// `BallSide::ToCenter` gives `{c : gauge(center - c) < r}`. Returns
    /// sorted linear indices; empty for `r <= 0`.
    pub fn ball_cells(&self, center: P2, r: f64, grid: &GridSpec, side: BallSide) -> Vec<usize> {
        if !(r > 0.0) {
            return Vec::new();
        }
        let reach = r * self.outer_radius();
        let (i0, i1) = grid.col_range(center.x - reach, center.x + reach);
        let (j0, j1) = grid.row_range(center.y - reach, center.y + reach);
        let mut out = Vec::new();
        for j in j0..j1 {
            for i in i0..i1 {
                let c = grid.center(i, j);
                let d = match side {
                    BallSide::ToCenter => self.eval(center - c),
                    BallSide::FromCenter => self.eval(c - center),
                };
                if d < r {
                    out.push(grid.index(i, j));
                }
            }
        }
        out
    }
}

/// Relative overestimate of the inscribed `k`-gon: `|v| <= eval(v) <= |v| / cos(π/k)`.
pub fn euclidean_polygon_error(k: usize) -> f64 {
    1.0 / (PI / k as f64).cos() - 1.0
}
