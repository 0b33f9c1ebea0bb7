//! Directed polylines, carrots, cigars and carrot surgery.
//!
//! Parameters are Euclidean arclength normalized to `[0, 1]`. Lengths are
//! gauge lengths and depend on the traversal direction.
//!
//! A carrot with core `γ` (vertex `γ(0)`) is the union of the balls
//! `B(y, ℓ(γ[0,y]) / J)` over `y ∈ γ`, a cigar uses radius
//! `min(ℓ(γ[0,y]), ℓ(γ[y,1] reversed)) / J`. Balls follow the
//! `gauge(center - c) < r` convention and are rasterized by cell-center
//! membership from core samples at pitch at most `h/2`.

use crate::error::{invalid, Error, Result};
use crate::gauge::ConvexGauge;
use crate::geom::P2;
use crate::grid::{check_inclusion, union_masks, GridSpec, Inclusion};
use serde::{Deserialize, Serialize};

const DEDUP_TOL: f64 = 1e-12;
/// Absolute slack allowed in length inequalities.
pub const LENGTH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolylineJson", into = "PolylineJson")]
pub struct Polyline {
    vertices: Vec<P2>,
    toward_infinity: bool,
    // cumulative Euclidean arclength at vertices
    cum: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolylineJson {
    vertices: Vec<[f64; 2]>,
    #[serde(default)]
    toward_infinity: bool,
}

impl TryFrom<PolylineJson> for Polyline {
    type Error = Error;
    fn try_from(j: PolylineJson) -> Result<Self> {
        let vs = j.vertices.into_iter().map(P2::from).collect();
        let p = Polyline::new(vs)?;
        Ok(p.with_infinity(j.toward_infinity))
    }
}

impl From<Polyline> for PolylineJson {
    fn from(p: Polyline) -> Self {
        PolylineJson {
            vertices: p.vertices.into_iter().map(Into::into).collect(),
            toward_infinity: p.toward_infinity,
        }
    }
}

impl Polyline {
    /// Drops consecutive repeats; a single point is a constant curve.
    pub fn new(vertices: Vec<P2>) -> Result<Self> {
        let mut vs: Vec<P2> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if !v.x.is_finite() || !v.y.is_finite() {
                return invalid("curve vertex is not finite");
            }
            if vs.last().is_none_or(|&l| (v - l).norm() > DEDUP_TOL) {
                vs.push(v);
            }
        }
        if vs.is_empty() {
            return invalid("curve has no vertices");
        }
        let mut cum = Vec::with_capacity(vs.len());
        cum.push(0.0);
        for w in vs.windows(2) {
            cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
        }
        Ok(Polyline {
            vertices: vs,
            toward_infinity: false,
            cum,
        })
    }

    pub fn segment(a: P2, b: P2) -> Self {
        Self::new(vec![a, b]).expect("finite endpoints")
    }

    pub fn with_infinity(mut self, flag: bool) -> Self {
        self.toward_infinity = flag;
        self
    }

    pub fn vertices(&self) -> &[P2] {
        &self.vertices
    }

    pub fn toward_infinity(&self) -> bool {
        self.toward_infinity
    }

    pub fn start(&self) -> P2 {
        self.vertices[0]
    }

    pub fn end(&self) -> P2 {
        *self.vertices.last().unwrap()
    }

    pub fn euclidean_length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn is_constant(&self) -> bool {
        self.vertices.len() == 1
    }

    /// Segment index and offset inside it for parameter `t`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.vertices.len();
        if n == 1 {
            return (0, 0.0);
        }
        let s = t.clamp(0.0, 1.0) * self.euclidean_length();
        let k = self.cum.partition_point(|&c| c <= s).clamp(1, n - 1) - 1;
        let seg = self.cum[k + 1] - self.cum[k];
        (k, ((s - self.cum[k]) / seg).clamp(0.0, 1.0))
    }

    pub fn point_at(&self, t: f64) -> P2 {
        let (k, u) = self.locate(t);
        if self.vertices.len() == 1 {
            return self.vertices[0];
        }
        self.vertices[k].lerp(self.vertices[k + 1], u)
    }

    /// Parameter of vertex `k`.
    pub fn vertex_param(&self, k: usize) -> f64 {
        let l = self.euclidean_length();
        if l == 0.0 {
            0.0
        } else {
            self.cum[k] / l
        }
    }

    /// `ℓ(γ[a, b])` for `0 <= a <= b <= 1`, summing gauge lengths with partial end segments.
    pub fn length(&self, g: &ConvexGauge, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return invalid("curve_length needs a <= b; reverse the curve explicitly");
        }
        if self.vertices.len() == 1 {
            return Ok(0.0);
        }
        let (ka, ua) = self.locate(a);
        let (kb, ub) = self.locate(b);
        let seg = |k: usize| g.eval(self.vertices[k + 1] - self.vertices[k]);
        if ka == kb {
            return Ok(seg(ka) * (ub - ua));
        }
        let mut total = seg(ka) * (1.0 - ua);
        for k in ka + 1..kb {
            total += seg(k);
        }
        Ok(total + seg(kb) * ub)
    }

    pub fn total_length(&self, g: &ConvexGauge) -> f64 {
        self.vertices.windows(2).map(|w| g.eval(w[1] - w[0])).sum()
    }

    /// Sub-curve on `[a, b]`; a constant curve when `a == b`.
    pub fn sub(&self, a: f64, b: f64) -> Result<Polyline> {
        if a > b {
            return invalid("sub-curve needs a <= b");
        }
        let (ka, _) = self.locate(a);
        let (kb, _) = self.locate(b);
        let mut vs = vec![self.point_at(a)];
        if self.vertices.len() > 1 {
            vs.extend_from_slice(&self.vertices[ka + 1..=kb]);
        }
        vs.push(self.point_at(b));
        let p = Polyline::new(vs)?;
        Ok(p.with_infinity(self.toward_infinity && b >= 1.0))
    }

    pub fn reversed(&self) -> Polyline {
        let mut vs = self.vertices.clone();
        vs.reverse();
        Polyline::new(vs).expect("reversal of a valid curve")
    }

    /// Concatenation; a short jump joins the pieces if they do not meet.
    pub fn then(&self, other: &Polyline) -> Polyline {
        let mut vs = self.vertices.clone();
        vs.extend_from_slice(&other.vertices);
        Polyline::new(vs)
            .expect("concatenation of valid curves")
            .with_infinity(other.toward_infinity)
    }

    /// Closest point parameter (Euclidean) and its distance.
    pub fn project(&self, p: P2) -> (f64, f64) {
        if self.vertices.len() == 1 {
            return (0.0, (p - self.vertices[0]).norm());
        }
        let l = self.euclidean_length();
        let mut best = (0.0, f64::INFINITY);
        for k in 0..self.vertices.len() - 1 {
            let a = self.vertices[k];
            let e = self.vertices[k + 1] - a;
            let u = ((p - a).dot(e) / e.dot(e)).clamp(0.0, 1.0);
            let d = (p - a.lerp(self.vertices[k + 1], u)).norm();
            if d < best.1 {
                best = ((self.cum[k] + u * e.norm()) / l, d);
            }
        }
        best
    }

    /// Samples at Euclidean pitch at most `pitch`, including every vertex.
    /// Returns `(point, parameter, ℓ(γ[0, t]))`.
    pub fn samples(&self, g: &ConvexGauge, pitch: f64) -> Vec<(P2, f64, f64)> {
        let l = self.euclidean_length();
        let mut out = vec![(self.vertices[0], 0.0, 0.0)];
        let mut acc = 0.0;
        for k in 0..self.vertices.len().saturating_sub(1) {
            let a = self.vertices[k];
            let b = self.vertices[k + 1];
            let len_e = self.cum[k + 1] - self.cum[k];
            let len_g = g.eval(b - a);
            let m = (len_e / pitch).ceil().max(1.0) as usize;
            for s in 1..=m {
                let u = s as f64 / m as f64;
                out.push((a.lerp(b, u), (self.cum[k] + u * len_e) / l, acc + u * len_g));
            }
            acc += len_g;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Carrot,
    Cigar,
}

#[derive(Debug, Clone)]
pub struct CarrotRegion {
    pub core: Polyline,
    pub j: f64,
    pub grid: GridSpec,
    pub cells: Vec<bool>,
    pub kind: RegionKind,
    pub pitch: f64,
}

impl CarrotRegion {
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }
}

/// Union of `B(center, r)` balls as a mask.
pub fn rasterize_balls(g: &ConvexGauge, grid: &GridSpec, balls: &[(P2, f64)]) -> Vec<bool> {
    let w = grid.nx + 1;
    let mut diff = vec![0i32; w * grid.ny];
    for &(c, r) in balls {
        if !(r > 0.0) {
            continue;
        }
        let reach = r * g.outer_radius();
        let (j0, j1) = grid.row_range(c.y - reach, c.y + reach);
        for j in j0..j1 {
            let (a, b) = g.ball_row_cols(c, r, grid, j);
            if a < b {
                diff[j * w + a] += 1;
                diff[j * w + b] -= 1;
            }
        }
    }
    let mut out = vec![false; grid.len()];
    for j in 0..grid.ny {
        let mut run = 0;
        for i in 0..grid.nx {
            run += diff[j * w + i];
            out[grid.index(i, j)] = run > 0;
        }
    }
    out
}

fn check_j(j: f64) -> Result<()> {
    if !(j >= 1.0) {
        return invalid(format!("J must be at least 1, got {j}"));
    }
    Ok(())
}

/// `car(γ, J)`. Curves toward infinity need `truncate_r`; only samples with
/// `gauge(-y) < truncate_r` spawn balls.
pub fn carrot_region(
    g: &ConvexGauge,
    core: &Polyline,
    j: f64,
    grid: &GridSpec,
    truncate_r: Option<f64>,
) -> Result<CarrotRegion> {
    check_j(j)?;
    if core.toward_infinity && truncate_r.is_none() {
        return invalid("carrot toward infinity needs a truncation radius");
    }
    let pitch = grid.h / 2.0;
    let balls: Vec<(P2, f64)> = core
        .samples(g, pitch)
        .into_iter()
        .skip(1)
        .filter(|&(y, _, _)| truncate_r.is_none_or(|r| g.eval(-y) < r))
        .map(|(y, _, l)| (y, l / j))
        .collect();
    Ok(CarrotRegion {
        core: core.clone(),
        j,
        grid: *grid,
        cells: rasterize_balls(g, grid, &balls),
        kind: RegionKind::Carrot,
        pitch,
    })
}

/// `cig(β, J)` with radius `min(ℓ(β[x,η]), ℓ(β[η,y] reversed)) / J`.
pub fn cigar_region(
    g: &ConvexGauge,
    core: &Polyline,
    j: f64,
    grid: &GridSpec,
) -> Result<CarrotRegion> {
    check_j(j)?;
    if core.toward_infinity {
        return invalid("cigar core must be bounded");
    }
    let pitch = grid.h / 2.0;
    let fwd = core.samples(g, pitch);
    let mut balls = Vec::with_capacity(fwd.len());
    let verts = core.vertices();
    // tail_rev[k]: length of the reversed curve from the end back to vertex k
    let mut tail_rev = vec![0.0; verts.len()];
    for k in (0..verts.len().saturating_sub(1)).rev() {
        tail_rev[k] = tail_rev[k + 1] + g.eval(verts[k] - verts[k + 1]);
    }
    for &(y, t, lf) in &fwd {
        let (k, u) = core.locate(t);
        let lb = if verts.len() == 1 {
            0.0
        } else {
            tail_rev[k + 1] + (1.0 - u) * g.eval(verts[k] - verts[k + 1])
        };
        let r = lf.min(lb) / j;
        if r > 0.0 {
            balls.push((y, r));
        }
    }
    Ok(CarrotRegion {
        core: core.clone(),
        j,
        grid: *grid,
        cells: rasterize_balls(g, grid, &balls),
        kind: RegionKind::Cigar,
        pitch,
    })
}

fn require_euclidean(g: &ConvexGauge) -> Result<()> {
    if g.is_euclidean() {
        Ok(())
    } else {
        Err(Error::EuclideanOnly("carrot surgery"))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RerouteCert {
    pub eta: P2,
    pub eta_param: f64,
    /// `max_a ℓ(γ_z[z,a]) - ℓ(γ[x,a])` over samples `a` of `γ[η, end]`.
    pub worst_excess: f64,
    pub lengths_ok: bool,
    pub inclusion: Inclusion,
}

/// Reroutes `γ` through `z ∈ car(γ, J)`: `γ_z = [z, η] ∪ γ[η, end]` where `η`
/// is the nearest core sample whose ball certifies `z`.
pub fn carrot_reroute(
    g: &ConvexGauge,
    core: &Polyline,
    j: f64,
    z: P2,
    grid: &GridSpec,
) -> Result<(Polyline, RerouteCert)> {
    require_euclidean(g)?;
    check_j(j)?;
    let pitch = grid.h / 2.0;
    let samples = core.samples(g, pitch);
    let mut best: Option<(f64, usize)> = None;
    for (k, &(y, _, l)) in samples.iter().enumerate() {
        let d = g.eval(y - z);
        if d < l / j && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, k));
        }
    }
    let Some((_, k)) = best else {
        return invalid("z is not certified inside the carrot");
    };
    let (eta, s, _) = samples[k];
    let tail = core.sub(s, 1.0)?;
    let rerouted = Polyline::new(vec![z]).unwrap().then(&tail);
    let head = g.eval(eta - z);
    let mut worst = f64::NEG_INFINITY;
    for &(_, _, l_orig) in &samples[k..] {
        let l_new = head + (l_orig - samples[k].2);
        worst = worst.max(l_new - l_orig);
    }
    let truncate = core.toward_infinity.then(|| grid_reach(grid));
    let car_z = carrot_region(g, &rerouted, j, grid, truncate)?;
    let car = carrot_region(g, core, j, grid, truncate)?;
    let inclusion = check_inclusion(grid, &car_z.cells, &car.cells);
    Ok((
        rerouted,
        RerouteCert {
            eta,
            eta_param: s,
            worst_excess: worst,
            lengths_ok: worst <= LENGTH_TOL,
            inclusion,
        },
    ))
}

/// Radius of a disk about the origin covering the grid.
fn grid_reach(grid: &GridSpec) -> f64 {
    let far = grid.center(grid.nx - 1, grid.ny - 1);
    2.0 * grid.origin.norm().max(far.norm()) + grid.h
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcatCert {
    /// `ℓ(γ1[z1,y2])/J1 - ℓ(γ2)/J2`.
    pub slack: f64,
    pub y2_param: f64,
    pub w_param: f64,
    pub inclusion: Inclusion,
}

/// Joins `γ2` (ending at `y2 ∈ γ1`) with `γ1[y2, w]` and checks
/// `car(γ̂, J2) ⊆ car(γ2, J2) ∪ car(γ1, J1)`.
pub fn carrot_concat(
    g: &ConvexGauge,
    g1: &Polyline,
    g2: &Polyline,
    j1: f64,
    j2: f64,
    w: P2,
    grid: &GridSpec,
) -> Result<(Polyline, ConcatCert)> {
    require_euclidean(g)?;
    check_j(j1)?;
    if j2 < j1 {
        return invalid("carrot concatenation needs J1 <= J2");
    }
    let snap = grid.h / 2.0;
    let y2 = g2.end();
    let (s, dy) = g1.project(y2);
    if dy > snap {
        return invalid(format!("y2 is {dy:.3e} away from the first curve"));
    }
    let (tw, dw) = g1.project(w);
    if dw > snap || tw < s {
        return invalid("w must lie on the first curve after y2");
    }
    let slack = g1.length(g, 0.0, s)? / j1 - g2.total_length(g) / j2;
    if slack < -LENGTH_TOL {
        return Err(Error::ConcatOrder { slack });
    }
    let joined = g2.then(&g1.sub(s, tw)?);
    let car_hat = carrot_region(g, &joined, j2, grid, None)?;
    let car1 = carrot_region(g, g1, j1, grid, g1.toward_infinity.then(|| grid_reach(grid)))?;
    let car2 = carrot_region(g, g2, j2, grid, None)?;
    let inclusion = check_inclusion(grid, &car_hat.cells, &union_masks(&car1.cells, &car2.cells));
    Ok((
        joined,
        ConcatCert {
            slack,
            y2_param: s,
            w_param: tw,
            inclusion,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct CigarCert {
    pub a: P2,
    /// Parameter of `a` on the longer curve.
    pub a_param: f64,
    pub r: f64,
    /// True when the inputs were swapped so the first curve is the longer one.
    pub swapped: bool,
    /// `|ℓ(γ1[x,a]) - ℓ(γ2[y,a])|`.
    pub identity_residual: f64,
    pub inclusion: Inclusion,
}

/// Finds `a` on the longer of two curves into `z` with
/// `ℓ(γ_xz[x,a]) = ℓ(γ_yz) + ℓ(γ_xz[z,a])` by bisection, and checks
/// `car(γ1[x,a], J) ∪ car(γ2[y,a], J) ⊆ car(γ_xz, J) ∪ car(γ_yz, J)` where
/// `γ2 = γ_yz` followed by `γ_xz` backward from `z` to `a`.
pub fn cigar_from_two_carrots(
    g: &ConvexGauge,
    gxz: &Polyline,
    gyz: &Polyline,
    j: f64,
    grid: &GridSpec,
) -> Result<(P2, f64, CigarCert)> {
    require_euclidean(g)?;
    check_j(j)?;
    let scale = 1.0 + gxz.end().norm();
    if (gxz.end() - gyz.end()).norm() > 1e-9 * scale {
        return invalid("curves do not share their endpoint z");
    }
    let swapped = gxz.total_length(g) < gyz.total_length(g);
    let (long, short) = if swapped { (gyz, gxz) } else { (gxz, gyz) };
    let l_short = short.total_length(g);
    let f = |t: f64| -> Result<f64> {
        Ok(long.length(g, 0.0, t)? - l_short - long.length(g, t, 1.0)?)
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if f(hi)? <= 0.0 {
        lo = 1.0;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON {
                break;
            }
        }
        lo = if f(lo)?.abs() <= f(hi)?.abs() { lo } else { hi };
    }
    let ta = lo;
    let a = long.point_at(ta);
    let g1 = long.sub(0.0, ta)?;
    let g2 = short.then(&long.sub(ta, 1.0)?.reversed());
    let l1 = g1.total_length(g);
    let l2 = g2.total_length(g);
    let r = l1 / j;
    let lhs = union_masks(
        &carrot_region(g, &g1, j, grid, None)?.cells,
        &carrot_region(g, &g2, j, grid, None)?.cells,
    );
    let rhs = union_masks(
        &carrot_region(g, gxz, j, grid, None)?.cells,
        &carrot_region(g, gyz, j, grid, None)?.cells,
    );
    let inclusion = check_inclusion(grid, &lhs, &rhs);
    Ok((
        a,
        r,
        CigarCert {
            a,
            a_param: ta,
            r,
            swapped,
            identity_residual: (l1 - l2).abs(),
            inclusion,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euc() -> ConvexGauge {
        ConvexGauge::euclidean(64).unwrap()
    }

    #[test]
    fn lengths() {
        let g = euc();
        let s = Polyline::segment(P2::ZERO, P2::new(3.0, 4.0));
        assert!((s.length(&g, 0.0, 1.0).unwrap() - 5.0).abs() < 5.0 * 0.002);
        assert!(s.length(&g, 0.6, 0.2).is_err());
        let l = Polyline::new(vec![P2::ZERO, P2::new(1.0, 0.0), P2::new(1.0, 2.0)]).unwrap();
        let a = l.length(&g, 0.0, 0.5).unwrap();
        let b = l.length(&g, 0.5, 1.0).unwrap();
        assert!((a + b - l.length(&g, 0.0, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn v_shape_gives_a_at_z() {
        let g = euc();
        let grid = GridSpec::square(-1.5, 1.5, 3.0 / 63.0).unwrap();
        let z = P2::new(0.0, 0.0);
        let gx = Polyline::segment(P2::new(-1.0, 1.0), z);
        let gy = Polyline::segment(P2::new(1.0, 1.0), z);
        let (a, r, cert) = cigar_from_two_carrots(&g, &gx, &gy, 2.0, &grid).unwrap();
        assert!((a - z).norm() < 1e-9);
        assert!((r - gx.total_length(&g) / 2.0).abs() < 1e-9);
        assert!(cert.identity_residual < 1e-9);
        assert!(cert.inclusion.holds);
    }

    #[test]
    fn lengths_three_and_one() {
        let g = euc();
        let grid = GridSpec::square(-3.5, 1.5, 5.0 / 127.0).unwrap();
        let z = P2::ZERO;
        let gx = Polyline::segment(P2::new(-3.0, 0.0), z);
        let gy = Polyline::segment(P2::new(0.0, 1.0), z);
        let (a, _, cert) = cigar_from_two_carrots(&g, &gx, &gy, 1.0, &grid).unwrap();
        assert!((a - P2::new(-1.0, 0.0)).norm() < 1e-9, "{a:?}");
        assert!(cert.inclusion.holds);
    }

    #[test]
    fn concat_order_violation_reports_slack() {
        let g = euc();
        let grid = GridSpec::square(-1.0, 3.0, 4.0 / 63.0).unwrap();
        let g1 = Polyline::segment(P2::ZERO, P2::new(2.0, 0.0));
        let g2 = Polyline::segment(P2::new(1.0, 2.0), P2::new(1.0, 0.0));
        // ℓ(γ2)/J2 = 2/2 = 1 vs ℓ(γ1[z1,y2])/J1 = 1/2
        match carrot_concat(&g, &g1, &g2, 2.0, 2.0, P2::new(1.5, 0.0), &grid) {
            Err(Error::ConcatOrder { slack }) => assert!((slack + 0.5).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn surgery_rejects_asymmetric_gauges() {
        let g = ConvexGauge::new(vec![P2::new(1.0, 0.0), P2::new(0.0, 1.0), P2::new(-1.0, -1.0)])
            .unwrap();
        let grid = GridSpec::square(-1.0, 1.0, 0.1).unwrap();
        let c = Polyline::segment(P2::ZERO, P2::new(1.0, 0.0));
        assert!(matches!(
            carrot_reroute(&g, &c, 1.0, P2::new(0.5, 0.1), &grid),
            Err(Error::EuclideanOnly(_))
        ));
    }
}
