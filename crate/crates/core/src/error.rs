use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::Vec3;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weighted norm diverges: weight rate {eps} is not below the decay rate {decay_rate}")]
    DivergentWeightedNorm { eps: f64, decay_rate: f64 },

    #[error("quadrature did not converge: {what} (estimated error {error:e})")]
    QuadratureNotConverged { what: String, error: f64 },

    #[error("decay hypothesis violated at {point:?}: ratio {ratio}")]
    HypothesisViolated { point: Vec3, ratio: f64 },

    #[error("operation requires a {expected} potential")]
    WrongDecayClass { expected: &'static str },

    #[error("momentum k = 0 makes the bound degenerate")]
    DegenerateK,

    #[error("mode {mode} does not match the potential's decay class")]
    ModeMismatch { mode: &'static str },

    #[error("inadmissible T = {t}: {condition}")]
    InadmissibleT { t: f64, condition: String },

    #[error("inadmissible rho = {rho}: must lie in ({lower}, {upper}]")]
    InadmissibleRho { rho: f64, lower: f64, upper: f64 },

    #[error("negative logarithm argument 2 - f({arg}) <= 0")]
    NegativeLogArgument { arg: f64 },

    #[error("B(eps) diverges")]
    DivergentB,

    #[error("coincident points in the free resolvent kernel")]
    CoincidentPoints,

    #[error("Im k = {im} must be positive")]
    NonpositiveImK { im: f64 },

    #[error("k = {k} lies outside the continuation strip Im k > {floor}")]
    ContinuationOutOfStrip { k: Complex64, floor: f64 },

    #[error("Fredholm series term {0} requested; only terms 1..=3 are supported")]
    TooManyTerms(usize),

    #[error("function vanishes (|f| = {modulus:e}) on the contour near {at}")]
    ZeroOnContour { at: Complex64, modulus: f64 },

    #[error("contour phase tracking did not converge: {0}")]
    NonConvergent(String),

    #[error("Jensen center value vanishes")]
    CenterIsZero,

    #[error("step control failed in radial integration at r = {r}")]
    StiffIntegration { r: f64 },

    #[error("channel truncation at l_max = {l_max} is unsafe (need at least {required})")]
    ChannelTruncationUnsafe { l_max: usize, required: usize },

    #[error("potential is not radially symmetric")]
    NotRadial,

    #[error("{0} overflows double precision")]
    Overflow(String),

    #[error("matrix cache: {0}")]
    Cache(String),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged { .. }
                | Error::NonConvergent(_)
                | Error::StiffIntegration { .. }
                | Error::ZeroOnContour { .. }
                | Error::Overflow(_)
        )
    }
}
