use std::fmt;
use std::io;
use std::str::FromStr;

/// Error codes carried by `error` messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCode {
    /// The request could not be parsed.
    Malformed,
    /// The request named an unsupported protocol version.
    Version,
    /// The problem exceeds the server's size limit.
    Capacity,
    /// Well-formed but rejected by the sampler (bad parameters).
    Invalid,
    /// The server failed while running the job.
    Internal,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCode::Malformed => "malformed",
            ErrorCode::Version => "version",
            ErrorCode::Capacity => "capacity",
            ErrorCode::Invalid => "invalid",
            ErrorCode::Internal => "internal",
        })
    }
}

impl FromStr for ErrorCode {
    type Err = ClientError;

    fn from_str(s: &str) -> Result<Self, ClientError> {
        Ok(match s {
            "malformed" => ErrorCode::Malformed,
            "version" => ErrorCode::Version,
            "capacity" => ErrorCode::Capacity,
            "invalid" => ErrorCode::Invalid,
            "internal" => ErrorCode::Internal,
            other => return Err(ClientError::Malformed(format!("unknown error code `{other}`"))),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("could not connect to {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("timed out waiting for the service")]
    Timeout,
    #[error("connection closed by the peer")]
    Closed,
    #[error("i/o error: {0}")]
    Io(io::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("protocol version mismatch: peer speaks `{0}`")]
    Version(String),
    #[error("frame of {len} bytes exceeds the limit of {max}")]
    FrameTooLarge { len: usize, max: usize },
    #[error("service error ({code}): {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("response for job {got} does not match request {expected}")]
    JobMismatch { expected: u64, got: u64 },
    #[error(transparent)]
    Core(#[from] qbmvae::Error),
}

impl ClientError {
    /// Maps timeouts and clean EOF to their own variants.
    pub fn from_io(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ClientError::Timeout,
            io::ErrorKind::UnexpectedEof => ClientError::Closed,
            _ => ClientError::Io(e),
        }
    }

    /// The code a server reports for this failure.
    pub fn code(&self) -> ErrorCode {
        match self {
            ClientError::Remote { code, .. } => *code,
            ClientError::Version(_) => ErrorCode::Version,
            ClientError::Malformed(_) | ClientError::FrameTooLarge { .. } => ErrorCode::Malformed,
            ClientError::Core(_) => ErrorCode::Invalid,
            _ => ErrorCode::Internal,
        }
    }
}
