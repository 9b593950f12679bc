//! Fixtures shared by the benchmarks.

use wsym_core::{generate_structured_alfeld, Discretization, MaterialParams, Result, SideSet};

/// Clamped unit square with `n` cells per side at order `k`.
pub fn clamped_square(n: usize, k: usize) -> Result<Discretization> {
    Discretization::new(generate_structured_alfeld(n, SideSet::NONE)?, k, &MaterialParams::default())
}

/// Smooth vector load used by the source benchmarks.
pub fn smooth_load(x: [f64; 2]) -> [f64; 2] {
    [(x[0] + x[1]).sin(), x[0] * x[1] - 0.25]
}
