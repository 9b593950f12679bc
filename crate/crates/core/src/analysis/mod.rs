//! Error norms, interpolants and convergence studies.

pub mod bdm;
pub mod norms;
pub mod studies;
