use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}{}: expected {expected}, found {found}", player_suffix(*.player))]
    DimensionMismatch {
        what: &'static str,
        player: Option<usize>,
        expected: usize,
        found: usize,
    },

    #[error("player index {index} out of range for a {players}-player game")]
    PlayerIndex { index: usize, players: usize },

    #[error("{what} is not positive definite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { what: String, min_eigenvalue: f64 },

    #[error("drift does not vanish at the origin: |f(0)| = {norm:e}")]
    DriftNotZeroAtOrigin { norm: f64 },

    #[error("basis of player {player} does not vanish at the origin: |sigma(0)| = {norm:e}")]
    BasisNotZeroAtOrigin { player: usize, norm: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("game is not linear-quadratic")]
    NotLinearQuadratic,

    #[error("coupled Riccati iteration did not converge after {max_iter} iterations (last update {last_residual:e})")]
    NoConvergence { max_iter: usize, last_residual: f64 },

    #[error("closed-loop matrix is not Hurwitz (max real part {max_real_part:e})")]
    NonHurwitz { max_real_part: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("non-finite state at t = {t}: component {component}")]
    NonFiniteState { t: f64, component: String },

    #[error("gain matrix of player {player} collapsed at t = {t} (min eigenvalue {min_eigenvalue:e})")]
    GammaCollapse {
        t: f64,
        player: usize,
        min_eigenvalue: f64,
    },

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("config: {0}")]
    Config(String),
}

fn player_suffix(player: Option<usize>) -> String {
    match player {
        Some(i) => format!(" (player {i})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
