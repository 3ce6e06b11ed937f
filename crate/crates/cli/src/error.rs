use holo_core::HoloError;
use holo_spaf::SpafError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl From<HoloError> for CliError {
    fn from(e: HoloError) -> Self {
        match e {
            HoloError::NonFinite(_)
            | HoloError::DegenerateMean { .. }
            | HoloError::DegenerateField(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SpafError> for CliError {
    fn from(e: SpafError) -> Self {
        match e {
            SpafError::Config(m) => CliError::Config(m),
            SpafError::NonFinite(_) | SpafError::DegenerateMean(_) => {
                CliError::Numeric(e.to_string())
            }
            SpafError::Core(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_failure_class() {
        assert_eq!(CliError::from(HoloError::NonFinite("x")).exit_code(), 4);
        assert_eq!(CliError::from(HoloError::Format("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(SpafError::Config("x".into())).exit_code(), 2);
        assert_eq!(
            CliError::from(SpafError::Core(HoloError::NonFinite("y"))).exit_code(),
            4
        );
    }
}
