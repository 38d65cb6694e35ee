use thiserror::Error;

/// Errors produced by the equalizer model and its harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite sample")]
    NonFiniteSample,
    #[error("empty vector")]
    EmptyVector,
    #[error("invalid fixed-point format: total={total} frac={frac}")]
    InvalidFormat { total: u32, frac: u32 },
    #[error("raw value {raw} does not fit in {total} bits")]
    RawOutOfRange { raw: i64, total: u32 },
    #[error("degenerate channel")]
    DegenerateChannel,
    #[error("invalid modulation order {0}")]
    InvalidModulation(u32),
    #[error("bit count {bits} is not a multiple of {per_symbol}")]
    BitCount { bits: usize, per_symbol: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular Gram matrix: regularize or raise N0")]
    SingularGram,
    #[error("row {row} has norm {norm} >= 1: scale before loading")]
    RowNotScaled { row: usize, norm: f64 },
    #[error("mode {mode} requires {domain} weights")]
    ModeDomainMismatch {
        mode: &'static str,
        domain: &'static str,
    },
    #[error("length {0} is not a power of 4")]
    NotPowerOfFour(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid SNR list: {0}")]
    InvalidSnrList(String),
    #[error("target BER {0} outside (0, 0.5)")]
    InvalidTarget(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-parsable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFiniteSample => "non_finite_sample",
            Error::EmptyVector => "empty_vector",
            Error::InvalidFormat { .. } => "invalid_format",
            Error::RawOutOfRange { .. } => "raw_out_of_range",
            Error::DegenerateChannel => "degenerate_channel",
            Error::InvalidModulation(_) => "invalid_modulation",
            Error::BitCount { .. } => "bit_count",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::SingularGram => "singular_gram",
            Error::RowNotScaled { .. } => "row_not_scaled",
            Error::ModeDomainMismatch { .. } => "mode_domain_mismatch",
            Error::NotPowerOfFour(_) => "not_power_of_four",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidSnrList(_) => "invalid_snr_list",
            Error::InvalidTarget(_) => "invalid_target",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
