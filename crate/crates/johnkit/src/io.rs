//! File formats: binary PGM masks with a JSON sidecar, polygon JSON and
//! curve JSON.
//!
//! PGM row 0 is the top of the image, which is grid row `ny - 1`.

use crate::curve::Polyline;
use crate::error::{invalid, Error, Result};
use crate::geom::P2;
use crate::grid::{GridDomain, GridSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub origin: [f64; 2],
    pub spacing: f64,
}

/// `disk.pgm` pairs with `disk.json`.
pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// Encodes a mask as P5; cells inside are 255.
pub fn encode_pgm(grid: &GridSpec, mask: &[bool]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for row in (0..grid.ny).rev() {
        for i in 0..grid.nx {
            out.push(if mask[grid.index(i, row)] { 255 } else { 0 });
        }
    }
    out
}

/// Decodes a P5 image into `(nx, ny, mask)`; pixels above half the maximum
/// are inside.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return invalid("truncated PGM header");
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return invalid("expected a binary PGM (P5)");
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Invalid(format!("bad PGM header field {s:?}")));
    let (nx, ny, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if nx == 0 || ny == 0 || maxval == 0 || maxval > 255 {
        return invalid("PGM must be 8-bit and nonempty");
    }
    // one whitespace byte ends the header
    pos += 1;
    let data = bytes.get(pos..pos + nx * ny).ok_or_else(|| Error::Invalid("truncated PGM data".into()))?;
    let mut mask = vec![false; nx * ny];
    for (k, &v) in data.iter().enumerate() {
        let (i, row) = (k % nx, k / nx);
        mask[(ny - 1 - row) * nx + i] = 2 * v as usize > maxval;
    }
    Ok((nx, ny, mask))
}

/// Reads a mask and its sidecar.
pub fn read_mask(path: &Path) -> Result<(GridSpec, Vec<bool>)> {
    let (nx, ny, mask) = decode_pgm(&read_file(path)?)?;
    let side = sidecar_path(path);
    let meta: Sidecar =
        serde_json::from_str(&read_text(&side)?).map_err(|e| Error::Invalid(format!("{}: {e}", side.display())))?;
    let grid = GridSpec::new(meta.origin.into(), meta.spacing, nx, ny)?;
    Ok((grid, mask))
}

/// Writes a mask and its sidecar.
pub fn write_mask(path: &Path, grid: &GridSpec, mask: &[bool]) -> std::io::Result<()> {
    std::fs::write(path, encode_pgm(grid, mask))?;
    let meta = Sidecar {
        origin: [grid.origin.x, grid.origin.y],
        spacing: grid.h,
    };
    std::fs::write(sidecar_path(path), crate::report::canonical_json(&meta))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolygonSpec {
    pub outer: Vec<[f64; 2]>,
    #[serde(default)]
    pub holes: Vec<Vec<[f64; 2]>>,
}

fn crossings(ring: &[[f64; 2]], p: P2) -> usize {
    let n = ring.len();
    let mut c = 0;
    for k in 0..n {
        let (a, b) = (ring[k], ring[(k + 1) % n]);
        if (a[1] > p.y) != (b[1] > p.y) {
            let x = a[0] + (p.y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p.x < x {
                c += 1;
            }
        }
    }
    c
}

impl PolygonSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: PolygonSpec = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("polygon: {e}")))?;
        if p.outer.len() < 3 || p.holes.iter().any(|h| h.len() < 3) {
            return invalid("polygon rings need at least 3 vertices");
        }
        if p.outer.iter().chain(p.holes.iter().flatten()).flatten().any(|v| !v.is_finite()) {
            return invalid("polygon coordinates must be finite");
        }
        Ok(p)
    }

    /// Even-odd membership over all rings.
    pub fn contains(&self, p: P2) -> bool {
        let c = crossings(&self.outer, p) + self.holes.iter().map(|h| crossings(h, p)).sum::<usize>();
        c % 2 == 1
    }

    /// Grid of spacing `h` over the bounding box plus one cell on each side.
    pub fn grid(&self, h: f64) -> Result<GridSpec> {
        let (mut lo, mut hi) = (P2::new(f64::INFINITY, f64::INFINITY), P2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for v in &self.outer {
            lo = P2::new(lo.x.min(v[0]), lo.y.min(v[1]));
            hi = P2::new(hi.x.max(v[0]), hi.y.max(v[1]));
        }
        let nx = ((hi.x - lo.x) / h).ceil() as usize + 2;
        let ny = ((hi.y - lo.y) / h).ceil() as usize + 2;
        GridSpec::new(P2::new(lo.x - h, lo.y - h), h, nx, ny)
    }

    pub fn rasterize(&self, h: f64) -> Result<GridDomain> {
        GridDomain::from_fn(self.grid(h)?, |p| self.contains(p))
    }
}

/// Domain from a `.pgm` mask (with sidecar) or a polygon `.json` sampled at
/// spacing `h`.
pub fn load_domain(path: &Path, h: Option<f64>) -> Result<GridDomain> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => {
            let (grid, mask) = read_mask(path)?;
            GridDomain::new(grid, mask)
        }
        Some("json") => {
            let h = h.ok_or_else(|| Error::Invalid("polygon input needs a spacing".into()))?;
            PolygonSpec::from_json(&read_text(path)?)?.rasterize(h)
        }
        _ => invalid(format!("{}: expected .pgm or .json", path.display())),
    }
}

/// Curve JSON `{"vertices": [[x, y], ...], "toward_infinity": bool}`.
pub fn curve_from_json(text: &str) -> Result<Polyline> {
    serde_json::from_str(text).map_err(|e| Error::Invalid(format!("curve: {e}")))
}
