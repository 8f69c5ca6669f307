use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {radius:e} from the origin is inside the excluded radius {min:e}")]
    TooCloseToOrigin { radius: f64, min: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("Newton refinement diverged: {0}")]
    Divergence(String),

    #[error("transversality margin {margin:e} fell below {tol:e} while tracing")]
    MarginCollapse { margin: f64, tol: f64 },

    #[error("curves too close for a reliable linking integral (min distance {distance:e})")]
    CurvesTooClose { distance: f64 },

    #[error("linking integral {value} is not near an integer")]
    NonIntegerLinking { value: f64 },

    #[error("curve is not closed")]
    OpenCurve,

    #[error("phase winding failed: {0}")]
    Winding(String),

    #[error("no generic projection found after {attempts} attempts")]
    NoGenericProjection { attempts: usize },

    #[error("ambiguous crossing: depth separation {separation:e} below {tol:e}")]
    AmbiguousCrossing { separation: f64, tol: f64 },

    #[error("no bracket: {0}")]
    NoBracket(String),

    #[error("topology mismatch: {0}")]
    Topology(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
