use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward requires a scalar output, got {0} values")]
    NonScalarOutput(usize),
    #[error("non-finite gradient; optimizer step rejected")]
    NonFiniteGradient,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("ray starts inside object")]
    StartsInside,
    #[error("unbounded interior: no exit found within distance budget")]
    UnboundedInterior,
    #[error("degenerate surface point: zero-magnitude gradient")]
    DegenerateNormal,
    #[error("empty sample set")]
    EmptySamples,
    #[error("zero-length path")]
    ZeroLengthPath,
    #[error("unknown primitive id '{0}'")]
    UnknownPrimitive(String),
    #[error("duplicate primitive id '{0}'")]
    DuplicatePrimitive(String),
    #[error("unknown radio id '{0}'")]
    UnknownRadio(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
