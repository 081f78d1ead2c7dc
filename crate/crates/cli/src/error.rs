use std::fmt;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            kind: "config",
            message: format!("config error: {}", message.into()),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            kind: "data",
            message: format!("data error: {}", message.into()),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            kind: "numerical",
            message: format!("numerical error: {}", message.into()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<volcast::Error> for CliError {
    fn from(e: volcast::Error) -> Self {
        use volcast::Error as E;
        let (code, kind) = match e {
            E::Config(_) => (EXIT_CONFIG, "config"),
            E::Io { .. } | E::Csv(_) | E::Json(_) | E::Data(_) | E::Shape { .. } => (EXIT_DATA, "data"),
            E::Numerical(_) | E::Tensor(_) => (EXIT_NUMERICAL, "numerical"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(format!("malformed json: {e}"))
    }
}
