//! Element-local recovery of a displacement of degree `k + 2`.
//!
//! On each element `u*` solves
//! `(grad u*, grad w)_K = (A sigma_h + rho_h, grad w)_K` for `w` in the complement of `P^k` in
//! `P^{k+2}`, and `(u*, v)_K = (u_h, v)_K` for `v` in `P^k`. With the nested orthonormal family the
//! moment equations fix the leading coefficients and the gradient equations form a square SPD
//! system for the rest.

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe::{ref_tables, Dims};
use crate::hybrid::FieldSolution;
use crate::local::PIVOT_TOL;
use crate::material::MaterialParams;
use crate::mesh::Mesh;

/// Coefficients of `u*` per element, `2 * n_top` each (component-major).
#[derive(Debug, Clone, PartialEq)]
pub struct PostField {
    pub dims: Dims,
    pub coeffs: Vec<f64>,
}

impl PostField {
    pub fn element(&self, e: usize) -> &[f64] {
        let n = 2 * self.dims.n_top;
        &self.coeffs[e * n..(e + 1) * n]
    }

    pub fn n_elements(&self) -> usize {
        self.coeffs.len() / (2 * self.dims.n_top)
    }

    /// `max_K max_v |(u* - u_h, v)_K|` over the displacement basis.
    pub fn moment_defect(&self, field: &FieldSolution) -> f64 {
        let d = self.dims;
        let mut m = 0.0f64;
        for e in 0..self.n_elements() {
            let c = self.element(e);
            let u = field.u_e(e);
            for i in 0..2 {
                for a in 0..d.nw {
                    m = m.max((c[i * d.n_top + a] - u[i * d.nw + a]).abs());
                }
            }
        }
        m
    }
}

/// Solves the local postprocessing problem on one element.
pub fn postprocess_element(
    mesh: &Mesh,
    e: usize,
    sigma: &[f64],
    u: &[f64],
    rho: &[f64],
    dims: &Dims,
    params: &MaterialParams,
) -> Result<Vec<f64>> {
    let t = ref_tables(dims.k)?;
    let g = mesh.geometry(e);
    let (np, nw, nt) = (dims.np, dims.nw, dims.n_top);
    let nc = nt - nw;
    let stiff = Mat::from_fn(nc, nc, |a, b| t.stiff_phys(&g, nw + a, nw + b));
    let lu = stiff.partial_piv_lu();
    let ud = lu.U();
    let diag: Vec<f64> = (0..nc).map(|i| ud[(i, i)].abs()).collect();
    let dmax = diag.iter().copied().fold(0.0, f64::max);
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(dmin > PIVOT_TOL * dmax) {
        return Err(Error::SingularLocal { element: e, pivot: dmin });
    }
    // coefficients of A sigma_h + rho_h J, per matrix entry (row-major) and basis index
    let cm = params.compliance_matrix();
    const JM: [f64; 4] = [0.0, 1.0, -1.0, 0.0];
    let mut gfield = vec![0.0; 4 * np];
    for rc in 0..4 {
        for b in 0..np {
            let mut v = JM[rc] * rho[b];
            for (rc2, c) in cm[rc].iter().enumerate() {
                v += c * sigma[rc2 * np + b];
            }
            gfield[rc * np + b] = v;
        }
    }
    let mut out = vec![0.0; 2 * nt];
    let mut rhs = Mat::<f64>::zeros(nc, 2);
    for i in 0..2 {
        out[i * nt..i * nt + nw].copy_from_slice(&u[i * nw..(i + 1) * nw]);
        for a in 0..nc {
            let mut v = 0.0;
            for c in 0..2 {
                for b in 0..np {
                    v += gfield[(2 * i + c) * np + b] * t.grad_mass_phys(&g, b, nw + a, c);
                }
            }
            for b in 0..nw {
                v -= u[i * nw + b] * t.stiff_phys(&g, nw + a, b);
            }
            rhs[(a, i)] = v;
        }
    }
    let x = lu.solve(&rhs);
    for i in 0..2 {
        for a in 0..nc {
            out[i * nt + nw + a] = x[(a, i)];
        }
    }
    Ok(out)
}

/// Postprocesses every element.
pub fn postprocess_local(mesh: &Mesh, field: &FieldSolution, params: &MaterialParams) -> Result<PostField> {
    let dims = field.dims;
    let blocks = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| postprocess_element(mesh, e, field.sigma_e(e), field.u_e(e), field.rho_e(e), &dims, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(PostField {
        dims,
        coeffs: blocks.concat(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_alfeld, SideSet};

    #[test]
    fn constant_displacement_is_reproduced() {
        let mesh = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        let dims = Dims::new(1).unwrap();
        let mut field = FieldSolution::zeros(dims, mesh.n_elements(), 0);
        for e in 0..mesh.n_elements() {
            let s = mesh.geometry(e).area.sqrt();
            field.u[e * dims.n_u] = 2.0 * s;
            field.u[e * dims.n_u + dims.nw] = -s;
        }
        let post = postprocess_local(&mesh, &field, &MaterialParams::default()).unwrap();
        for e in 0..mesh.n_elements() {
            let c = post.element(e);
            for i in 0..2 {
                for a in 1..dims.n_top {
                    assert!(c[i * dims.n_top + a].abs() < 1e-13);
                }
            }
        }
        assert_eq!(post.moment_defect(&field), 0.0);
        assert_eq!(post.coeffs.len(), mesh.n_elements() * 20);
    }

    #[test]
    fn locality() {
        let mesh = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        let dims = Dims::new(1).unwrap();
        let mut field = FieldSolution::zeros(dims, mesh.n_elements(), 0);
        for (i, v) in field.sigma.iter_mut().enumerate() {
            *v = ((i * 7) % 11) as f64 * 0.1;
        }
        let params = MaterialParams::default();
        let a = postprocess_local(&mesh, &field, &params).unwrap();
        field.sigma[5 * dims.n_sigma + 3] += 1.0;
        let b = postprocess_local(&mesh, &field, &params).unwrap();
        for e in 0..mesh.n_elements() {
            assert_eq!(a.element(e) == b.element(e), e != 5);
        }
    }
}
