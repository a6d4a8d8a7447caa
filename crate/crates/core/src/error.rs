use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input to {0}")]
    Domain(&'static str),

    #[error("integration blew up after t = {last_valid_time}")]
    Blowup { last_valid_time: f64 },

    #[error("time {requested} lies outside the trajectory span [0, {end}]")]
    OutOfRange { requested: f64, end: f64 },

    #[error("quadrature failed to converge: estimate {estimate:e}, error bound {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("deterministic trajectory never reaches the onset level before t = {t_max}")]
    NoOnset { t_max: f64 },

    #[error("onset-time distribution is a point mass (zero variance)")]
    PointMass,

    #[error("drift does not satisfy the small-noise contract: {0}")]
    Contract(String),
}
