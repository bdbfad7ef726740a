use core::fmt;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A depth that must be strictly positive was not.
    NonPositiveDepth(f64),
    /// A normal vector was not unit length within tolerance.
    NonUnitNormal(f64),
    /// The ray through a neighbor pixel is (nearly) parallel to the plane.
    DegenerateRay { denominator: f64 },
    /// A camera failed validation.
    InvalidCamera(&'static str),
    /// Configuration values are out of range or inconsistent.
    Config(&'static str),
    /// Array shapes disagree.
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// Image too small to process at the requested level.
    ImageTooSmall {
        width: usize,
        height: usize,
        level: u32,
    },
    /// An argument list was empty or otherwise unusable.
    Argument(&'static str),
    /// Input contained NaN or infinity.
    NonFinite(&'static str),
    /// Every pixel was masked out of a reduction.
    Empty(&'static str),
    /// A pixel of the output was not covered by any input patch.
    Coverage { row: usize, col: usize },
    /// Degenerate camera placement (inside a sphere, zero baseline, ...).
    DegenerateView(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonPositiveDepth(d) => write!(f, "depth must be positive, got {d}"),
            Error::NonUnitNormal(n) => write!(f, "normal is not unit length (norm {n})"),
            Error::DegenerateRay { denominator } => {
                write!(f, "ray nearly parallel to plane (n·ray = {denominator:e})")
            }
            Error::InvalidCamera(msg) => write!(f, "invalid camera: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Shape {
                what,
                expected,
                found,
            } => write!(f, "shape mismatch in {what}: expected {expected}, found {found}"),
            Error::ImageTooSmall {
                width,
                height,
                level,
            } => write!(f, "image {width}x{height} too small at pyramid level {level}"),
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite values in {what}"),
            Error::Empty(what) => write!(f, "nothing to evaluate: {what}"),
            Error::Coverage { row, col } => {
                write!(f, "pixel ({row}, {col}) is not covered by any patch")
            }
            Error::DegenerateView(msg) => write!(f, "degenerate view: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
