use serde_json::json;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_OTHER: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: "io",
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: "validation",
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self {
            kind: "other",
            code: EXIT_OTHER,
            message: message.into(),
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        json!({ "error": { "kind": self.kind, "exit_code": self.code, "message": self.message } }).to_string()
    }
}

impl From<msdhawkes::Error> for CliError {
    fn from(e: msdhawkes::Error) -> Self {
        use msdhawkes::Error as E;
        let message = e.to_string();
        match &e {
            E::Io(_) => Self::io(message),
            E::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => Self::io(message),
            E::InvalidOption(_) => Self::usage(message),
            E::EventCapExceeded { .. } => Self::other(message),
            _ => Self::validation(message),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        msdhawkes::Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Self::io(e.to_string())
        } else {
            Self::validation(e.to_string())
        }
    }
}
