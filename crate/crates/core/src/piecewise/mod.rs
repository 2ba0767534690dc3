//! Piecewise power-law distributions and monotone curves with exact
//! restriction, inversion and integration.

mod arc;
mod curve;
mod dist;

pub use arc::PowerArc;
pub use curve::{Convexity, CurveSegment, MonotoneCurve, SegmentKind};
pub use dist::{DistPiece, PiecewisePowerDist, Removal};
