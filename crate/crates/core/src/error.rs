use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Raster dimensions violate `width == 2 * height`, or two rasters disagree.
    ShapeMismatch(&'static str),
    /// A parameter is outside its documented domain.
    InvalidParameter(&'static str),
    AntipodalEndpoints,
    PoleSingularity { row: usize },
    DegeneratePolygon,
    /// The polygon does not fit in an open hemisphere.
    PolygonTooLarge,
    OpenLayout(&'static str),
    InsufficientBoundary { boundary: usize, required: usize },
    NoWallIntersection,
    UnderconstrainedCuboid(&'static str),
    ObjectOutsideRoom(usize),
    NoGroundTruth,
    EmptyEval,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::AntipodalEndpoints => f.write_str("geodesic endpoints are antipodal"),
            Error::PoleSingularity { row } => {
                write!(f, "kernel footprint reaches the pole at output row {row}")
            }
            Error::DegeneratePolygon => f.write_str("polygon covers less than one pixel"),
            Error::PolygonTooLarge => f.write_str("polygon does not fit in a hemisphere"),
            Error::OpenLayout(why) => write!(f, "layout is not a closed Manhattan loop: {why}"),
            Error::InsufficientBoundary { boundary, required } => write!(
                f,
                "mask boundary has {boundary} points, at least {required} required"
            ),
            Error::NoWallIntersection => f.write_str("mask rays do not hit the supporting plane"),
            Error::UnderconstrainedCuboid(why) => write!(f, "cuboid is underconstrained: {why}"),
            Error::ObjectOutsideRoom(i) => write!(f, "object {i} lies outside the room"),
            Error::NoGroundTruth => f.write_str("class has no ground-truth instances"),
            Error::EmptyEval => f.write_str("evaluation has zero total weight"),
        }
    }
}

impl core::error::Error for Error {}
