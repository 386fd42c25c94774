use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("states live on different lattices")]
    LatticeMismatch,

    #[error("expected a {expected} representation, found {found}")]
    WrongRepresentation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("non-finite amplitude at grid index {0}")]
    NonFinite(usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("zero-norm state")]
    ZeroNorm,

    #[error("boundary mass {mass:.3e} exceeds limit {limit:.3e}; the packet does not fit the box")]
    BoundaryMass { mass: f64, limit: f64 },

    #[error("{what} = {value} is below the grid resolution limit {min}")]
    Unresolvable {
        what: &'static str,
        value: f64,
        min: f64,
    },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid evolution plan: {0}")]
    InvalidPlan(String),

    #[error("norm drifted by {drift:.3e} at t = {t} (limit {limit:.3e})")]
    NormDrift { t: f64, drift: f64, limit: f64 },

    #[error("boundary mass {mass:.3e} at t = {t} exceeds {limit:.3e}; wavepacket hit the box edge")]
    BoundaryHit { t: f64, mass: f64, limit: f64 },

    #[error("imaginary-time relaxation diverged: energy rose for {0} consecutive steps")]
    Divergence(usize),

    #[error("invalid observable series: {0}")]
    InvalidSeries(String),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("not enough resolutions: {0}")]
    TooFewResolutions(String),

    #[error("wavefunction file: {0}")]
    WavefunctionFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
