//! John constants of rasterized planar domains under polygonal Minkowski
//! gauges, carrot and cigar surgery on polylines, Hausdorff-limit experiments
//! and the cover decomposition of carrot-John complements.

pub mod curve;
pub mod decomposition;
pub mod error;
pub mod gauge;
pub mod geom;
pub mod grid;
pub mod io;
pub mod john;
pub mod limits;
pub mod report;

pub use curve::{CarrotRegion, Polyline};
pub use error::{Error, Result};
pub use gauge::{BallSide, ConvexGauge};
pub use geom::P2;
pub use grid::{CompactSet, GridDomain, GridSpec};
pub use john::{JohnCertificate, JohnGraph, Neighborhood};
