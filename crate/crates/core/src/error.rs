use std::fmt;

use thiserror::Error;

use crate::geometry::ElectrodeId;

pub type Result<T> = std::result::Result<T, Error>;

/// Location inside a text input, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trap spec: {0}")]
    InvalidSpec(String),

    #[error("electrodes {0} and {1} intersect")]
    Intersection(ElectrodeId, ElectrodeId),

    #[error("unknown electrode `{0}`")]
    UnknownElectrode(String),

    #[error("degenerate taper: blade thickness {thickness:e} m must exceed tip width {tip:e} m")]
    DegenerateTaper { thickness: f64, tip: f64 },

    #[error("light cone along {0} is fully occluded (numerical aperture 0)")]
    Occluded(&'static str),

    #[error("singular boundary-element system (condition estimate {condition:e}); near-duplicate panels: {duplicates:?}")]
    Singular {
        condition: f64,
        duplicates: Vec<(usize, usize)>,
    },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("point ({:e}, {:e}, {:e}) m lies inside {electrode}", point[0], point[1], point[2])]
    InsideConductor { point: [f64; 3], electrode: ElectrodeId },

    #[error("point ({:e}, {:e}, {:e}) m is {distance:e} m from {electrode}, closer than one panel edge", point[0], point[1], point[2])]
    NearSurface {
        point: [f64; 3],
        electrode: ElectrodeId,
        distance: f64,
    },

    #[error("memory budget exceeded: {0}")]
    Budget(String),

    #[error("search left the bounding region: {0}")]
    Diverged(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{message} at {position}")]
    Syntax { position: Position, message: String },

    #[error("unit mismatch at {position}: `{key}` expects {expected}, found `{found}`")]
    UnitMismatch {
        position: Position,
        key: String,
        expected: &'static str,
        found: String,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            position: Position { line, column },
            message: message.into(),
        }
    }
}
