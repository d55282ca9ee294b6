use blowup_core::io::{Classify, ErrorClass};

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn io(context: &str, e: std::io::Error) -> Self {
        Self { class: ErrorClass::Io, message: format!("{context}: {e}") }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Numeric, message: message.into() }
    }
}

impl<E: Classify + std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        Self { class: e.class(), message: e.to_string() }
    }
}
