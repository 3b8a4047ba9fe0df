use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trajectory generation gave up after {attempts} attempts: {reason}")]
    TrajectoryExhausted { attempts: usize, reason: String },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("azimuth {0} rad is outside the array field of view (|azimuth| < pi/2)")]
    FieldOfView(f64),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("missing prerequisite: {0}")]
    Prerequisite(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
}

impl Error {
    pub fn at_slot(self, slot: usize) -> Self {
        match self {
            e @ Error::Slot { .. } => e,
            e => Error::Slot {
                slot,
                source: Box::new(e),
            },
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { context, expected, got })
    }
}
