use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite torque command at t={t:.3}s (tick {tick})")]
    NonFiniteTorque { tick: usize, t: f64 },

    #[error("controller diverged at tick {tick} (t={t:.3}s): {reason}")]
    Divergence { tick: usize, t: f64, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sequence too short: {len} ticks, need at least {need}")]
    TooShort { len: usize, need: usize },

    #[error("training diverged in {stage} epoch {epoch}: loss is not finite")]
    TrainingDiverged { stage: &'static str, epoch: usize },

    #[error("weight tensor {tensor} has max |w| = {max_abs}, not representable in 8 bits")]
    Unrepresentable { tensor: String, max_abs: f64 },

    #[error("accumulator overflow in layer {layer}")]
    AccumulatorOverflow { layer: usize },

    #[error("accumulator bound {bound} exceeds 32 bits in layer {layer}")]
    AccumulatorBound { layer: usize, bound: i64 },

    #[error("bad model file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
