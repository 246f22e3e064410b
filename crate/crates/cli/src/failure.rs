use serde::Serialize;
use spreadmaps::io::IoError;
use spreadmaps::Error;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_GENERAL: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_TOLERANCE: u8 = 3;
pub const EXIT_TRUNCATION: u8 = 4;
pub const EXIT_SCHEMA: u8 = 5;

/// A command that could not produce its report.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: u8,
}

impl Failure {
    pub fn new(kind: &'static str, exit_code: u8, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
            exit_code,
        }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Failure::new("schema", EXIT_SCHEMA, message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Failure::new("validation", EXIT_VALIDATION, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure::new("io", EXIT_GENERAL, message)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: &'a Failure,
        }
        serde_json::to_string(&Wrapper { error: self }).expect("plain struct")
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Truncation { .. } => Failure::new("truncation", EXIT_TRUNCATION, message),
            Error::Domain(_) | Error::Structural(_) => Failure::schema(message),
            Error::Config(_) => Failure::new("config", EXIT_GENERAL, message),
            Error::AtomOverflow { .. } => Failure::new("atom_overflow", EXIT_GENERAL, message),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Read { .. } => Failure::io(e.to_string()),
            IoError::Schema(m) => Failure::schema(m),
        }
    }
}
