use core::fmt;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Array shapes or grids of two operands disagree.
    Contract(&'static str),
    /// A parameter is outside its admissible range.
    Parameter(&'static str),
    /// Boundary or scenario configuration is not supported.
    Config(&'static str),
    /// The advective CFL number exceeds one.
    StepSize { cfl: f64 },
    /// An iterative linear solve did not reach its tolerance.
    Solver {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// All-Neumann pressure problem with nonzero net boundary flux.
    Compatibility { net_flux: f64 },
    /// A NaN or infinity appeared in the named field.
    Divergence { field: &'static str, step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Parameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Config(msg) => write!(f, "unsupported configuration: {msg}"),
            Error::StepSize { cfl } => write!(f, "advective CFL number {cfl} exceeds 1"),
            Error::Solver {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what} solve did not converge after {iterations} iterations (relative residual {residual:e})"
            ),
            Error::Compatibility { net_flux } => {
                write!(f, "incompatible boundary fluxes: net flux {net_flux:e}")
            }
            Error::Divergence { field, step } => {
                write!(f, "non-finite values in {field} at step {step}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
