//! Commands behind the `declip` binary: degrade, restore, evaluate and
//! benchmark.

pub mod bench;
pub mod commands;

use std::fmt;

/// A command failure together with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub const VALIDATION: i32 = 2;
    pub const SOLVER: i32 = 3;

    pub fn validation(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: Self::VALIDATION,
            error: error.into(),
        }
    }

    pub fn solver(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: Self::SOLVER,
            error: error.into(),
        }
    }

    /// Classifies a library error: solver breakdowns map to the solver exit
    /// code, everything else is a validation or I/O problem.
    pub fn from_core(error: declip_core::Error) -> Self {
        use declip_core::Error as E;
        let solver = match &error {
            E::Blowup { .. } | E::ImaginaryResidue(_) => true,
            E::Chunk { source, .. } => {
                matches!(**source, E::Blowup { .. } | E::ImaginaryResidue(_))
            }
            _ => false,
        };
        if solver {
            Self::solver(error)
        } else {
            Self::validation(error)
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<declip_core::Error> for Failure {
    fn from(error: declip_core::Error) -> Self {
        Failure::from_core(error)
    }
}

pub type CmdResult<T> = Result<T, Failure>;
