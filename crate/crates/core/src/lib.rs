//! Hybridized weakly symmetric mixed finite elements for 2D linear elasticity.

pub mod analysis;
pub mod basis;
pub mod checks;
pub mod eig;
pub mod error;
pub mod fe;
pub mod hybrid;
pub mod linalg;
pub mod local;
pub mod material;
pub mod mesh;
pub mod postprocess;
pub mod quadrature;
pub mod source;

pub use error::{Error, Result};
pub use analysis::studies::{ErrorReport, LockingReport, StudyConfig};
pub use checks::{run_check_suite, CheckReport};
pub use eig::{solve_eigen, EigenResult, EigenRow, NewtonOptions};
pub use hybrid::{Discretization, FieldSolution};
pub use material::MaterialParams;
pub use mesh::{generate_structured_alfeld, generate_structured_macro, Mesh, SideSet};
pub use postprocess::PostField;
pub use source::{solve_source, ManufacturedCase};
