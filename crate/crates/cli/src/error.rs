use std::fmt;
use std::io::ErrorKind;

pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;
pub const EXIT_CANT_CREATE: i32 = 73;
pub const EXIT_IO: i32 = 74;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    pub fn invariant(message: impl Into<String>) -> Self {
        Self::new(EXIT_INVARIANT, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn io_code(kind: ErrorKind) -> i32 {
    if kind == ErrorKind::NotFound {
        EXIT_NO_INPUT
    } else {
        EXIT_IO
    }
}

impl From<ucast_core::Error> for CliError {
    fn from(e: ucast_core::Error) -> Self {
        use ucast_core::Error as E;
        let code = match &e {
            E::Parameter(_) => EXIT_USAGE,
            E::Io { source, .. } => io_code(source.kind()),
            E::Csv(c) => match c.kind() {
                csv::ErrorKind::Io(io) => io_code(io.kind()),
                _ => EXIT_DATA,
            },
            E::Data(_) | E::Format { .. } | E::Json(_) => EXIT_DATA,
            E::Diverged { .. } => EXIT_SOFTWARE,
            _ => EXIT_SOFTWARE,
        };
        let prefix = if matches!(e, E::Diverged { .. }) {
            "divergence: "
        } else {
            ""
        };
        Self::new(code, format!("{prefix}{e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(io_code(e.kind()), e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(EXIT_DATA, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        ucast_core::Error::from(e).into()
    }
}
