//! Three-valued verdicts shared by the hypothesis checkers.

use alloc::string::String;
use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Holds,
    Fails,
    Unknown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Holds => "holds",
            Status::Fails => "fails",
            Status::Unknown => "unknown",
        })
    }
}

/// A verdict with a short human-readable justification.
#[derive(Clone, Debug, PartialEq)]
pub struct Finding {
    pub status: Status,
    pub note: String,
}

impl Finding {
    pub fn new(status: Status, note: impl Into<String>) -> Self {
        Finding { status, note: note.into() }
    }

    pub fn holds(note: impl Into<String>) -> Self {
        Finding::new(Status::Holds, note)
    }

    pub fn fails(note: impl Into<String>) -> Self {
        Finding::new(Status::Fails, note)
    }

    pub fn unknown(note: impl Into<String>) -> Self {
        Finding::new(Status::Unknown, note)
    }
}
