use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An arithmetic operation outside its domain, such as inverting zero.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters violate a structural constraint (`k <= n <= q-1`, `l | M`, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Every fresh index of a device has been consumed.
    #[error("interrogation limit reached for device {cld_id}")]
    InterrogationLimit { cld_id: u64 },

    #[error("protocol state error: {0}")]
    ProtocolState(String),

    /// The code family is too large to enumerate exhaustively.
    #[error(
        "code family has {} members (log2 = {family_bits:.4} bits), exceeding the enumeration budget of {budget}",
        family_size.map(|s| s.to_string()).unwrap_or_else(|| format!("~2^{family_bits:.1}"))
    )]
    Budget {
        family_bits: f64,
        family_size: Option<u128>,
        budget: u64,
    },

    #[error("malformed transcript line {line}: {reason}")]
    Transcript { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
