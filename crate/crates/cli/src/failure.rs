//! Process exit codes.

use std::fmt;

/// Exit code contract of the binary.
pub mod code {
    pub const OK: i32 = 0;
    /// Invalid flags or values, unknown metric names included.
    pub const USAGE: i32 = 2;
    /// Unreadable, malformed or unwritable files.
    pub const FILE: i32 = 3;
    /// A metric or experiment failed on valid inputs.
    pub const METRIC: i32 = 4;
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: code::USAGE, message: message.into() }
    }

    pub fn unknown_metric(name: &str) -> Self {
        Self::usage(format!("unknown metric `{name}`; expected one of mind, fid, mufid, sigmafid, mmd, sinkhorn"))
    }

    pub fn file(message: impl Into<String>) -> Self {
        Self { code: code::FILE, message: message.into() }
    }

    pub fn metric(err: impl fmt::Display) -> Self {
        Self { code: code::METRIC, message: err.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
