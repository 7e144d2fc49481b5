use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Extraction(String),

    #[error(transparent)]
    Core(#[from] chainrag::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Extraction(_) => "extraction",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
        }
    }

    /// `error: kind=<kind> message="<escaped message>"` on one line.
    pub fn line(&self) -> String {
        let message = serde_json::to_string(&self.to_string()).expect("string serializes");
        format!("error: kind={} message={message}", self.kind())
    }
}
