use invlim::Error;

pub const OK: u8 = 0;
pub const CONFIG: u8 = 1;
pub const CHECK: u8 = 2;
pub const DIVERGENCE: u8 = 3;
pub const CONDITION: u8 = 4;

/// A failed run: the process exit code and a diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: CONFIG, message: message.into() }
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        Self::config(format!("output: {e}"))
    }

    /// Solver errors map to divergence; everything else is a failed check.
    pub fn from_core(e: Error) -> Self {
        let code = match e {
            Error::Divergence(_) | Error::LeftBall(_) | Error::Wraparound(_) | Error::NotHyperbolic(_) => DIVERGENCE,
            Error::Parse(_) => CONFIG,
            _ => CHECK,
        };
        Self { code, message: e.to_string() }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}
