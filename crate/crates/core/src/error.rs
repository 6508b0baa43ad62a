use thiserror::Error;

/// Which diagonal entry of a 2x2 Fisher information matrix vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FimEntry {
    TauTau,
    NuNu,
}

impl std::fmt::Display for FimEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FimEntry::TauTau => f.write_str("I_tautau"),
            FimEntry::NuNu => f.write_str("I_nunu"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{field} out of domain: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("singular FIM: det = {det:e} <= threshold {threshold:e}{}", zero_entry_suffix(.zero_diagonal))]
    SingularFim {
        det: f64,
        threshold: f64,
        zero_diagonal: Option<FimEntry>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

fn zero_entry_suffix(entry: &Option<FimEntry>) -> String {
    match entry {
        Some(e) => format!(" ({e} is zero)"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
