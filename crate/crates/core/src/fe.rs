//! Element-level tables and evaluation on physical triangles.
//!
//! Every element space uses the nested orthonormal scalar family divided by `sqrt(det J)`,
//! which makes the physical basis L²(K)-orthonormal. Mass matrices are then identities and
//! all remaining local integrals reduce to fixed reference tables mapped by `J^{-T}`.

use std::sync::OnceLock;

use crate::basis::{dim_p, edge_legendre, scalar_basis};
use crate::error::{Error, Result};
use crate::mesh::{reference_face_endpoints, ElementGeometry};
use crate::quadrature::{edge_rule, triangle_rule, QuadratureRule};

/// Local dimensions for method order `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub k: usize,
    /// `dim P^{k+1}`: stress entries and rotation.
    pub np: usize,
    /// `dim P^k`: displacement components.
    pub nw: usize,
    pub n_sigma: usize,
    pub n_u: usize,
    pub n_rho: usize,
    /// Multiplier functions per face, `2 (k + 2)`.
    pub n_face: usize,
    /// `dim P^{k+2}`: postprocessing components.
    pub n_top: usize,
}

impl Dims {
    pub fn new(k: usize) -> Result<Self> {
        if k != 1 && k != 2 {
            return Err(Error::UnsupportedOrder(k));
        }
        let np = dim_p(k + 1);
        let nw = dim_p(k);
        Ok(Self {
            k,
            np,
            nw,
            n_sigma: 4 * np,
            n_u: 2 * nw,
            n_rho: np,
            n_face: 2 * (k + 2),
            n_top: dim_p(k + 2),
        })
    }

    /// Size of the local saddle system `(sigma, u, rho)`.
    pub fn n_local(&self) -> usize {
        self.n_sigma + self.n_u + self.n_rho
    }

    /// Default quadrature exactness for non-polynomial data.
    pub fn data_degree(&self) -> usize {
        2 * self.k + 8
    }
}

/// Exact reference integrals of the scalar family up to degree `k + 2`.
#[derive(Debug)]
pub struct RefTables {
    pub dims: Dims,
    /// `grad_mass[d][a * n_top + b] = ∫ phî_a ∂_d phî_b`.
    pub grad_mass: [Vec<f64>; 2],
    /// `stiff[d][e][a * n_top + b] = ∫ ∂_d phî_a ∂_e phî_b`.
    pub stiff: [[Vec<f64>; 2]; 2],
    /// `edge[i][p * n_top + b] = ∫_0^1 l_p(t) phî_b(xi_i(t)) dt` along local face `i` in local orientation.
    pub edge: [Vec<f64>; 3],
    /// Rule of exactness `2k + 8` with tabulated values and reference gradients of the family.
    pub rule: QuadratureRule,
    pub vals: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    /// Edge rule of exactness `2k + 8`, tabulated along each local face.
    pub edge_rule: QuadratureRule,
    pub edge_vals: [Vec<f64>; 3],
}

impl RefTables {
    fn build(k: usize) -> Self {
        let dims = Dims::new(k).expect("supported order");
        let n = dims.n_top;
        let basis = scalar_basis(k + 2);
        let exact = triangle_rule(2 * (k + 2)).expect("degree in range");
        let mut v = vec![0.0; n];
        let mut g = vec![[0.0; 2]; n];
        let mut grad_mass = [vec![0.0; n * n], vec![0.0; n * n]];
        let mut stiff = [[vec![0.0; n * n], vec![0.0; n * n]], [vec![0.0; n * n], vec![0.0; n * n]]];
        for (p, w) in exact.iter() {
            basis.eval(p, &mut v, Some(&mut g));
            for a in 0..n {
                for b in 0..n {
                    for d in 0..2 {
                        grad_mass[d][a * n + b] += w * v[a] * g[b][d];
                        for e in 0..2 {
                            stiff[d][e][a * n + b] += w * g[a][d] * g[b][e];
                        }
                    }
                }
            }
        }
        let np = k + 2;
        let erule = edge_rule(2 * (k + 2)).expect("degree in range");
        let mut leg = vec![0.0; np];
        let edge = std::array::from_fn(|i| {
            let (a, b) = reference_face_endpoints(i);
            let mut t = vec![0.0; np * n];
            for (q, w) in erule.iter() {
                let s = q[0];
                let xi = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                basis.eval(xi, &mut v, None);
                edge_legendre(s, &mut leg);
                for pp in 0..np {
                    for bb in 0..n {
                        t[pp * n + bb] += w * leg[pp] * v[bb];
                    }
                }
            }
            t
        });
        let rule = triangle_rule(dims.data_degree()).expect("degree in range");
        let mut vals = vec![0.0; rule.len() * n];
        let mut grads = vec![[0.0; 2]; rule.len() * n];
        for (q, p) in rule.points.iter().enumerate() {
            basis.eval(*p, &mut vals[q * n..(q + 1) * n], Some(&mut grads[q * n..(q + 1) * n]));
        }
        let edge_rule = edge_rule(dims.data_degree()).expect("degree in range");
        let edge_vals = std::array::from_fn(|i| {
            let (a, b) = reference_face_endpoints(i);
            let mut out = vec![0.0; edge_rule.len() * n];
            for (q, p) in edge_rule.points.iter().enumerate() {
                let s = p[0];
                let xi = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                basis.eval(xi, &mut out[q * n..(q + 1) * n], None);
            }
            out
        });
        Self {
            dims,
            grad_mass,
            stiff,
            edge,
            rule,
            vals,
            grads,
            edge_rule,
            edge_vals,
        }
    }

    /// `∫_K phi_a ∂_c phi_b` on a physical element (the `det J` factors cancel).
    pub fn grad_mass_phys(&self, g: &ElementGeometry, a: usize, b: usize, c: usize) -> f64 {
        let n = self.dims.n_top;
        g.inv_t[c][0] * self.grad_mass[0][a * n + b] + g.inv_t[c][1] * self.grad_mass[1][a * n + b]
    }

    /// `∫_K ∇phi_a · ∇phi_b` on a physical element.
    pub fn stiff_phys(&self, g: &ElementGeometry, a: usize, b: usize) -> f64 {
        let n = self.dims.n_top;
        let mut s = 0.0;
        for c in 0..2 {
            for d in 0..2 {
                for e in 0..2 {
                    s += g.inv_t[c][d] * g.inv_t[c][e] * self.stiff[d][e][a * n + b];
                }
            }
        }
        s
    }

    /// Reference values of the family at rule point `q`.
    pub fn values_at(&self, q: usize) -> &[f64] {
        let n = self.dims.n_top;
        &self.vals[q * n..(q + 1) * n]
    }

    pub fn grads_at(&self, q: usize) -> &[[f64; 2]] {
        let n = self.dims.n_top;
        &self.grads[q * n..(q + 1) * n]
    }

    pub fn edge_values_at(&self, face: usize, q: usize) -> &[f64] {
        let n = self.dims.n_top;
        &self.edge_vals[face][q * n..(q + 1) * n]
    }
}

/// Memoized tables for `k = 1, 2`.
pub fn ref_tables(k: usize) -> Result<&'static RefTables> {
    static CACHE: OnceLock<[RefTables; 2]> = OnceLock::new();
    Dims::new(k)?;
    let cache = CACHE.get_or_init(|| [RefTables::build(1), RefTables::build(2)]);
    Ok(&cache[k - 1])
}

/// Family values and reference gradients of order `k` tabulated on a triangle rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: QuadratureRule,
    pub n: usize,
    pub vals: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn new(k: usize, degree: usize) -> Result<Self> {
        Dims::new(k)?;
        let rule = triangle_rule(degree)?;
        let n = dim_p(k + 2);
        let basis = scalar_basis(k + 2);
        let mut vals = vec![0.0; rule.len() * n];
        let mut grads = vec![[0.0; 2]; rule.len() * n];
        for (q, p) in rule.points.iter().enumerate() {
            basis.eval(*p, &mut vals[q * n..(q + 1) * n], Some(&mut grads[q * n..(q + 1) * n]));
        }
        Ok(Self { rule, n, vals, grads })
    }

    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.vals[q * self.n..(q + 1) * self.n]
    }

    pub fn grads_at(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.n..(q + 1) * self.n]
    }
}

/// Coefficients `∫_K f_i phi_a` (index `i * nw + a`) of a vector load in the displacement basis.
pub fn project_vector(
    f: &dyn Fn([f64; 2]) -> [f64; 2],
    g: &ElementGeometry,
    tables: &RefTables,
    ncoef: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; 2 * ncoef];
    let s = g.det.sqrt();
    for (q, (p, w)) in tables.rule.iter().enumerate() {
        let fx = f(g.to_physical(p));
        let v = tables.values_at(q);
        for a in 0..ncoef {
            out[a] += w * s * fx[0] * v[a];
            out[ncoef + a] += w * s * fx[1] * v[a];
        }
    }
    out
}

/// Coefficients of a scalar function in the first `ncoef` members of the family.
pub fn project_scalar(f: &dyn Fn([f64; 2]) -> f64, g: &ElementGeometry, tables: &RefTables, ncoef: usize) -> Vec<f64> {
    let mut out = vec![0.0; ncoef];
    let s = g.det.sqrt();
    for (q, (p, w)) in tables.rule.iter().enumerate() {
        let fx = f(g.to_physical(p));
        let v = tables.values_at(q);
        for a in 0..ncoef {
            out[a] += w * s * fx * v[a];
        }
    }
    out
}

/// Value at a reference point of a field with `ncomp` components, each expanded in the
/// first `ncoef` family members (coefficient index `comp * ncoef + a`).
pub fn eval_field(coeffs: &[f64], ncomp: usize, ncoef: usize, g: &ElementGeometry, vals: &[f64], out: &mut [f64]) {
    let s = 1.0 / g.det.sqrt();
    for c in 0..ncomp {
        out[c] = s * (0..ncoef).map(|a| coeffs[c * ncoef + a] * vals[a]).sum::<f64>();
    }
}

/// Physical gradient of each component (`out[c] = ∇ field_c`).
pub fn eval_field_grad(
    coeffs: &[f64],
    ncomp: usize,
    ncoef: usize,
    g: &ElementGeometry,
    grads: &[[f64; 2]],
    out: &mut [[f64; 2]],
) {
    let s = 1.0 / g.det.sqrt();
    for c in 0..ncomp {
        let mut r = [0.0; 2];
        for a in 0..ncoef {
            r[0] += coeffs[c * ncoef + a] * grads[a][0];
            r[1] += coeffs[c * ncoef + a] * grads[a][1];
        }
        let p = g.grad(r);
        out[c] = [s * p[0], s * p[1]];
    }
}

/// Reference family values (and gradients) at an arbitrary reference point.
pub fn family_at(k: usize, xi: [f64; 2], vals: &mut [f64], grads: Option<&mut [[f64; 2]]>) {
    scalar_basis(k + 2).eval(xi, vals, grads);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ElementGeometry;

    #[test]
    fn dims_k1() {
        let d = Dims::new(1).unwrap();
        assert_eq!((d.n_sigma, d.n_u, d.n_rho, d.n_face, d.n_top), (24, 6, 6, 6, 10));
        assert_eq!(d.n_local(), 36);
        assert!(Dims::new(3).is_err());
    }

    #[test]
    fn physical_basis_is_orthonormal() {
        let t = ref_tables(1).unwrap();
        let g = ElementGeometry::new([[0.2, 0.1], [0.7, 0.3], [0.25, 0.6]]);
        let n = t.dims.n_top;
        let mut m = vec![0.0; n * n];
        for (q, (_, w)) in t.rule.iter().enumerate() {
            let v = t.values_at(q);
            for a in 0..n {
                for b in 0..n {
                    m[a * n + b] += w * g.det * (v[a] / g.det.sqrt()) * (v[b] / g.det.sqrt());
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((m[a * n + b] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grad_mass_matches_quadrature() {
        let t = ref_tables(2).unwrap();
        let g = ElementGeometry::new([[0.0, 0.0], [0.5, 0.1], [0.1, 0.4]]);
        let n = t.dims.n_top;
        for a in [0, 3, n - 1] {
            for b in [1, 4, n - 2] {
                for c in 0..2 {
                    let mut q = 0.0;
                    for (iq, (_, w)) in t.rule.iter().enumerate() {
                        let pg = g.grad(t.grads_at(iq)[b]);
                        q += w * g.det * t.values_at(iq)[a] / g.det.sqrt() * pg[c] / g.det.sqrt();
                    }
                    assert!((q - t.grad_mass_phys(&g, a, b, c)).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn projection_of_polynomial_reproduces_it() {
        let t = ref_tables(1).unwrap();
        let g = ElementGeometry::new([[0.2, 0.1], [0.7, 0.3], [0.25, 0.6]]);
        let f = |x: [f64; 2]| [1.0 + 2.0 * x[0] - x[1], 3.0 * x[1]];
        let c = project_vector(&f, &g, t, t.dims.nw);
        let xi = [0.3, 0.2];
        let mut v = vec![0.0; t.dims.n_top];
        family_at(1, xi, &mut v, None);
        let mut out = [0.0; 2];
        eval_field(&c, 2, t.dims.nw, &g, &v, &mut out);
        let exact = f(g.to_physical(xi));
        assert!((out[0] - exact[0]).abs() < 1e-13 && (out[1] - exact[1]).abs() < 1e-13);
    }
}
