//! Row-wise BDM interpolation of matrix fields into the broken stress space.
//!
//! Each row of `Pi tau` is the vector field in `P^{k+1}` whose normal moments against `P^{k+1}(F)`
//! on the three faces and interior moments against the Nedelec space `N^k` (mapped covariantly)
//! match those of the row of `tau`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;

use crate::basis::edge_legendre;
use crate::error::{Error, Result};
use crate::fe::{family_at, ref_tables, Dims};
use crate::local::PIVOT_TOL;
use crate::mesh::{reference_face_endpoints, ElementGeometry, Mesh};
use crate::quadrature::{edge_rule, triangle_rule};

type MatField<'a> = &'a (dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Sync);

/// Reference Nedelec fields of the first kind of index `k` at `xi`: `P^{k-1}` vectors, then
/// `(-y, x)` times homogeneous polynomials of degree `k - 1`.
fn nedelec_reference(k: usize, xi: [f64; 2]) -> Vec<[f64; 2]> {
    let (x, y) = (xi[0], xi[1]);
    let mut out = Vec::with_capacity(k * (k + 2));
    for d in 0..k {
        for j in 0..=d {
            let m = x.powi((d - j) as i32) * y.powi(j as i32);
            out.push([m, 0.0]);
            out.push([0.0, m]);
        }
    }
    for j in 0..k {
        let m = x.powi((k - 1 - j) as i32) * y.powi(j as i32);
        out.push([-y * m, x * m]);
    }
    out
}

/// Number of degrees of freedom per row.
fn n_dofs(dims: &Dims) -> usize {
    3 * (dims.k + 2) + dims.k * (dims.k + 2)
}

/// Applies the degrees of freedom of one row to a vector field given pointwise.
fn row_functionals(
    g: &ElementGeometry,
    dims: &Dims,
    deg: usize,
    field: &dyn Fn([f64; 2]) -> [f64; 2],
) -> Result<Vec<f64>> {
    let erule = edge_rule(deg)?;
    let trule = triangle_rule(deg)?;
    let nf = dims.k + 2;
    let mut out = vec![0.0; n_dofs(dims)];
    let mut leg = vec![0.0; nf];
    for i in 0..3 {
        let (a, b) = reference_face_endpoints(i);
        let n = g.normals[i];
        let h = g.face_lengths[i];
        for (p, w) in erule.iter() {
            let t = p[0];
            let xi = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let v = field(g.to_physical(xi));
            edge_legendre(t, &mut leg);
            let vn = v[0] * n[0] + v[1] * n[1];
            for (pp, l) in leg.iter().enumerate() {
                out[i * nf + pp] += w * h * vn * l;
            }
        }
    }
    for (p, w) in trule.iter() {
        let v = field(g.to_physical(p));
        for (q, wh) in nedelec_reference(dims.k, p).iter().enumerate() {
            let wp = g.grad(*wh);
            out[3 * nf + q] += w * g.det * (v[0] * wp[0] + v[1] * wp[1]);
        }
    }
    Ok(out)
}

/// Interpolates on one element; returns stress coefficients (index `(2 r + c) * np + b`).
pub fn bdm_element(mesh: &Mesh, e: usize, dims: &Dims, tau: MatField<'_>) -> Result<Vec<f64>> {
    bdm_element_with_degree(mesh, e, dims, dims.data_degree(), tau)
}

/// As [`bdm_element`] with the quadrature degree for the moments of `tau` given explicitly.
pub fn bdm_element_with_degree(mesh: &Mesh, e: usize, dims: &Dims, deg: usize, tau: MatField<'_>) -> Result<Vec<f64>> {
    let g = mesh.geometry(e);
    let np = dims.np;
    let nd = n_dofs(dims);
    if nd != 2 * np {
        return Err(Error::Consistency(format!("BDM dimension count {nd} != {}", 2 * np)));
    }
    let s = 1.0 / g.det.sqrt();
    let mut m = Mat::<f64>::zeros(nd, nd);
    for c in 0..2 {
        for b in 0..np {
            let col = row_functionals(&g, dims, dims.data_degree(), &|x| {
                let mut v = vec![0.0; dims.n_top];
                family_at(dims.k, g.to_reference(x), &mut v, None);
                let mut out = [0.0; 2];
                out[c] = s * v[b];
                out
            })?;
            for (i, v) in col.iter().enumerate() {
                m[(i, c * np + b)] = *v;
            }
        }
    }
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let diag: Vec<f64> = (0..nd).map(|i| u[(i, i)].abs()).collect();
    let dmax = diag.iter().copied().fold(0.0, f64::max);
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(dmin > PIVOT_TOL * dmax) {
        return Err(Error::SingularLocal { element: e, pivot: dmin });
    }
    let mut rhs = Mat::<f64>::zeros(nd, 2);
    for r in 0..2 {
        let f = row_functionals(&g, dims, deg, &|x| tau(x)[r])?;
        for (i, v) in f.iter().enumerate() {
            rhs[(i, r)] = *v;
        }
    }
    let x = lu.solve(&rhs);
    let mut out = vec![0.0; 4 * np];
    for r in 0..2 {
        for c in 0..2 {
            for b in 0..np {
                out[(2 * r + c) * np + b] = x[(c * np + b, r)];
            }
        }
    }
    Ok(out)
}

/// Broken stress coefficients of `Pi_h tau` on every element.
pub fn bdm_interpolant(mesh: &Mesh, k: usize, tau: MatField<'_>) -> Result<Vec<f64>> {
    let dims = Dims::new(k)?;
    bdm_interpolant_with_degree(mesh, k, dims.data_degree(), tau)
}

pub fn bdm_interpolant_with_degree(mesh: &Mesh, k: usize, deg: usize, tau: MatField<'_>) -> Result<Vec<f64>> {
    let dims = Dims::new(k)?;
    Ok((0..mesh.n_elements())
        .into_par_iter()
        .map(|e| bdm_element_with_degree(mesh, e, &dims, deg, tau))
        .collect::<Result<Vec<_>>>()?
        .concat())
}

/// `||div Pi_h tau - P div tau||_0` over the mesh.
pub fn commuting_residual(
    mesh: &Mesh,
    k: usize,
    tau: MatField<'_>,
    div_tau: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
) -> Result<f64> {
    commuting_residual_with_degree(mesh, k, Dims::new(k)?.data_degree(), tau, div_tau)
}

/// As [`commuting_residual`] with the quadrature degree for `tau` and `div tau` given explicitly.
pub fn commuting_residual_with_degree(
    mesh: &Mesh,
    k: usize,
    deg: usize,
    tau: MatField<'_>,
    div_tau: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
) -> Result<f64> {
    let dims = Dims::new(k)?;
    let t = ref_tables(k)?;
    let rule = triangle_rule(deg)?;
    let pi = bdm_interpolant_with_degree(mesh, k, deg, tau)?;
    let (np, nw) = (dims.np, dims.nw);
    let parts: Vec<f64> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let g = mesh.geometry(e);
            let c = &pi[e * 4 * np..(e + 1) * 4 * np];
            let mut p = vec![0.0; 2 * nw];
            let mut v = vec![0.0; dims.n_top];
            let sq = g.det.sqrt();
            for (xi, w) in rule.iter() {
                let d = div_tau(g.to_physical(xi));
                family_at(k, xi, &mut v, None);
                for a in 0..nw {
                    p[a] += w * sq * d[0] * v[a];
                    p[nw + a] += w * sq * d[1] * v[a];
                }
            }
            let mut s = 0.0;
            for r in 0..2 {
                for a in 0..nw {
                    let mut d = 0.0;
                    for cc in 0..2 {
                        for b in 0..np {
                            d += c[(2 * r + cc) * np + b] * t.grad_mass_phys(&g, a, b, cc);
                        }
                    }
                    s += (d - p[r * nw + a]).powi(2);
                }
            }
            s
        })
        .collect();
    Ok(parts.iter().sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::project_vector;
    use crate::mesh::{generate_structured_alfeld, SideSet};

    fn l2_coeffs(mesh: &Mesh, k: usize, tau: MatField<'_>) -> Vec<f64> {
        let t = ref_tables(k).unwrap();
        let np = t.dims.np;
        let mut out = Vec::new();
        for e in 0..mesh.n_elements() {
            let g = mesh.geometry(e);
            for r in 0..2 {
                let row = project_vector(&|x| tau(x)[r], &g, t, np);
                out.extend_from_slice(&row);
            }
        }
        out
    }

    #[test]
    fn reproduces_polynomials() {
        let mesh = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        for k in [1, 2] {
            let tau = move |x: [f64; 2]| {
                let e = (k + 1) as i32;
                [[x[0].powi(e) - x[1], x[0] * x[1].powi(e - 1)], [1.0 + x[1].powi(e), x[0].powi(e - 1) * x[1]]]
            };
            let pi = bdm_interpolant(&mesh, k, &tau).unwrap();
            let l2 = l2_coeffs(&mesh, k, &tau);
            let err = pi.iter().zip(&l2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "k={k} {err}");
        }
    }

    #[test]
    fn divergence_of_quadratic_field() {
        let mesh = generate_structured_alfeld(1, SideSet::NONE).unwrap();
        let tau = |x: [f64; 2]| [[x[0] * x[0], x[0] * x[1]], [x[0] * x[1], x[1] * x[1]]];
        let r = commuting_residual(&mesh, 1, &tau, &|x| [3.0 * x[0], 3.0 * x[1]]).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn commuting_diagram_for_smooth_field() {
        let mesh = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        let s = |x: [f64; 2]| (x[0] + 2.0 * x[1]).sin();
        let c = |x: [f64; 2]| (x[0] + 2.0 * x[1]).cos();
        let tau = move |x: [f64; 2]| [[s(x), s(x)], [s(x), s(x)]];
        let div = move |x: [f64; 2]| [3.0 * c(x), 3.0 * c(x)];
        for k in [1, 2] {
            let r = commuting_residual(&mesh, k, &tau, &div).unwrap();
            assert!(r < 1e-11, "k={k} {r}");
        }
    }
}
