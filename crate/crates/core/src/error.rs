use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("site ({0}, {1}) is not an active lattice site")]
    InactiveSite(u32, u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("mode classification failed: {0}")]
    Classification(String),
    #[error("degenerate winding in gap {h} of q = {q} (|t| = q/2)")]
    DegenerateWinding { h: u32, q: u32 },
    #[error("band touching: {0}")]
    BandTouching(String),
    #[error("ambiguous peak association: {0}")]
    AmbiguousPeaks(String),
    #[error("pump sites are not consecutive along one edge: {0}")]
    NonConsecutive(String),
    #[error("centroid undefined: {0}")]
    CentroidUndefined(String),
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Dimension(_) => "dimension_mismatch",
            Error::InactiveSite(..) => "inactive_site",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Linalg(_) => "linalg",
            Error::Classification(_) => "classification",
            Error::DegenerateWinding { .. } => "degenerate_winding",
            Error::BandTouching(_) => "band_touching",
            Error::AmbiguousPeaks(_) => "ambiguous_peaks",
            Error::NonConsecutive(_) => "non_consecutive",
            Error::CentroidUndefined(_) => "centroid_undefined",
        }
    }
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
