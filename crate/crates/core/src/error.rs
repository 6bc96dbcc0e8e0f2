use alloc::boxed::Box;
use alloc::string::String;

use crate::lmi::InfeasibilityReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("outside the modelled operating regime: {0}")]
    Domain(String),
    #[error("invalid sampling schedule: {0}")]
    Schedule(String),
    #[error("attack assumption violated: {0}")]
    AttackAssumption(String),
    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("packet at t={t} arrived before the held packet at t={held}")]
    OutOfOrderPacket { t: f64, held: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("integration diverged at t={t}")]
    Integration { t: f64 },
    #[error("LMI infeasible: {}", .0.summary)]
    Infeasible(Box<InfeasibilityReport>),
    #[error("certificate check failed: {0}")]
    Certificate(String),
}

pub type Result<T> = core::result::Result<T, Error>;
