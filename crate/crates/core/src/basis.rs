//! Reference-element polynomial bases.
//!
//! Scalar polynomials on the reference triangle are stored as coefficient rows over the
//! graded-lexicographic monomial ordering `1, x, y, x^2, xy, y^2, x^3, ...` (within one total
//! degree, descending power of `x`). Edge polynomials use the monomials `1, t, t^2, ...` on
//! `[0, 1]`.
//!
//! All element spaces are built from one nested L²-orthonormal scalar family: the first
//! `dim P^d` members span `P^d` for every `d`, so the displacement basis is a prefix of the
//! stress basis, which is a prefix of the postprocessing basis.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::{edge_rule, triangle_rule};

/// Largest scalar degree served from the memoized cache (k + 2 with k = 2, plus slack).
pub const MAX_SCALAR_DEGREE: usize = 6;

/// Dimension of scalar `P^d` in two variables.
pub const fn dim_p(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Exponent pairs `[a, b]` of `x^a y^b` in graded-lexicographic order up to `degree`.
pub fn monomial_exponents(degree: usize) -> Vec<[i32; 2]> {
    let mut out = Vec::with_capacity(dim_p(degree));
    for d in 0..=degree as i32 {
        for a in (0..=d).rev() {
            out.push([a, d - a]);
        }
    }
    out
}

fn powi(x: f64, n: i32) -> f64 {
    if n <= 0 {
        1.0
    } else {
        x.powi(n)
    }
}

/// Evaluates all monomials up to `degree` and their gradients at `p`.
pub fn eval_monomials(degree: usize, p: [f64; 2], vals: &mut [f64], grads: Option<&mut [[f64; 2]]>) {
    let exps = monomial_exponents(degree);
    for (v, e) in vals.iter_mut().zip(&exps) {
        *v = powi(p[0], e[0]) * powi(p[1], e[1]);
    }
    if let Some(g) = grads {
        for (g, e) in g.iter_mut().zip(&exps) {
            let dx = if e[0] > 0 {
                e[0] as f64 * powi(p[0], e[0] - 1) * powi(p[1], e[1])
            } else {
                0.0
            };
            let dy = if e[1] > 0 {
                e[1] as f64 * powi(p[0], e[0]) * powi(p[1], e[1] - 1)
            } else {
                0.0
            };
            *g = [dx, dy];
        }
    }
}

/// Nested L²(reference)-orthonormal scalar basis of `P^degree`.
#[derive(Debug, Clone)]
pub struct ScalarBasis {
    degree: usize,
    /// Row-major `dim x dim`; row `i` holds the monomial coefficients of function `i`.
    coeffs: Vec<f64>,
}

impl ScalarBasis {
    /// Modified Gram-Schmidt (two passes) of the monomials in the exact quadrature inner product.
    pub fn orthonormal(degree: usize) -> Self {
        let n = dim_p(degree);
        let rule = triangle_rule(2 * degree).expect("degree within quadrature range");
        let nq = rule.len();
        let mut values = vec![0.0; n * nq];
        let mut mono = vec![0.0; n];
        for (q, (p, w)) in rule.iter().enumerate() {
            eval_monomials(degree, p, &mut mono, None);
            let sw = w.sqrt();
            for m in 0..n {
                values[m * nq + q] = sw * mono[m];
            }
        }
        let mut coeffs = vec![0.0; n * n];
        for i in 0..n {
            coeffs[i * n + i] = 1.0;
        }
        let mono_at: Vec<f64> = values.clone();
        let refresh = |values: &mut [f64], coeffs: &[f64], i: usize| {
            for q in 0..nq {
                values[i * nq + q] = (0..=i).map(|m| coeffs[i * n + m] * mono_at[m * nq + q]).sum();
            }
        };
        for i in 0..n {
            for _pass in 0..3 {
                refresh(&mut values, &coeffs, i);
                for j in 0..i {
                    let r: f64 = (0..nq).map(|q| values[i * nq + q] * values[j * nq + q]).sum();
                    for q in 0..nq {
                        values[i * nq + q] -= r * values[j * nq + q];
                    }
                    for m in 0..=j {
                        coeffs[i * n + m] -= r * coeffs[j * n + m];
                    }
                }
            }
            refresh(&mut values, &coeffs, i);
            let norm: f64 = (0..nq).map(|q| values[i * nq + q].powi(2)).sum::<f64>().sqrt();
            for m in 0..=i {
                coeffs[i * n + m] /= norm;
            }
            refresh(&mut values, &coeffs, i);
        }
        Self { degree, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        dim_p(self.degree)
    }

    /// Monomial coefficients of function `i` (length `dim`).
    pub fn coeffs(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.coeffs[i * n..(i + 1) * n]
    }

    /// Values (and reference gradients) of the first `vals.len()` functions at `p`.
    pub fn eval(&self, p: [f64; 2], vals: &mut [f64], grads: Option<&mut [[f64; 2]]>) {
        let n = self.dim();
        let mut mono = vec![0.0; n];
        let mut mgrad = vec![[0.0; 2]; n];
        let want_grads = grads.is_some();
        eval_monomials(self.degree, p, &mut mono, want_grads.then_some(&mut mgrad[..]));
        let count = vals.len();
        for i in 0..count {
            let c = &self.coeffs[i * n..i * n + i + 1];
            vals[i] = c.iter().zip(&mono).map(|(a, b)| a * b).sum();
        }
        if let Some(g) = grads {
            for i in 0..count {
                let c = &self.coeffs[i * n..i * n + i + 1];
                let mut acc = [0.0; 2];
                for (a, mg) in c.iter().zip(&mgrad) {
                    acc[0] += a * mg[0];
                    acc[1] += a * mg[1];
                }
                g[i] = acc;
            }
        }
    }
}

/// Memoized nested orthonormal scalar basis of the requested degree.
pub fn scalar_basis(degree: usize) -> &'static ScalarBasis {
    static CACHE: OnceLock<Vec<ScalarBasis>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=MAX_SCALAR_DEGREE).map(ScalarBasis::orthonormal).collect());
    &cache[degree]
}

/// Orthonormal Legendre polynomials `sqrt(2p+1) P_p(2t-1)` on `[0, 1]`, `p < out.len()`.
pub fn edge_legendre(t: f64, out: &mut [f64]) {
    let x = 2.0 * t - 1.0;
    let mut p0 = 1.0;
    let mut p1 = x;
    for (p, o) in out.iter_mut().enumerate() {
        let v = match p {
            0 => 1.0,
            1 => x,
            _ => {
                let p2 = ((2 * p - 1) as f64 * x * p1 - (p - 1) as f64 * p0) / p as f64;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        *o = v * ((2 * p + 1) as f64).sqrt();
    }
}

/// Which local space a [`ReferenceBasis`] spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SpaceTag {
    /// Full 2x2 matrix fields with entries in `P^{k+1}`; components are row-major.
    Stress,
    /// Vector fields in `P^k`.
    Displacement,
    /// Scalar `P^{k+1}`; each function `s` stands for the skew field `s J`, `J = [[0,1],[-1,0]]`.
    Rotation,
    /// Vector `P^{k+1}` on one edge, parametrized by `t in [0,1]`.
    Multiplier,
    /// Row-vector fields `P^{k-1} + S^k` used for interior BDM moments.
    NedelecMoment,
    /// Vector `P^{k+2}` orthogonal to vector `P^k`.
    PostComplement,
}

/// Polynomial field with `components.len()` components over a fixed monomial ordering.
#[derive(Debug, Clone)]
pub struct PolyField {
    pub components: Vec<Vec<f64>>,
}

/// A basis of one local space as coefficient tables.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    pub space: SpaceTag,
    pub k: usize,
    /// Degree of the monomial ordering used by the coefficient tables.
    pub poly_degree: usize,
    pub functions: Vec<PolyField>,
}

impl ReferenceBasis {
    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    pub fn ncomp(&self) -> usize {
        self.functions.first().map_or(0, |f| f.components.len())
    }

    pub fn on_edge(&self) -> bool {
        self.space == SpaceTag::Multiplier
    }

    /// Component values of function `i` at a reference point (edge bases read `p[0]` as `t`).
    pub fn eval(&self, i: usize, p: [f64; 2]) -> Vec<f64> {
        let mono: Vec<f64> = if self.on_edge() {
            (0..=self.poly_degree).map(|j| powi(p[0], j as i32)).collect()
        } else {
            let mut m = vec![0.0; dim_p(self.poly_degree)];
            eval_monomials(self.poly_degree, p, &mut m, None);
            m
        };
        self.functions[i]
            .components
            .iter()
            .map(|c| c.iter().zip(&mono).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Gram matrix under the reference L² product (summed over components).
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let rule = if self.on_edge() {
            edge_rule(2 * self.poly_degree)
        } else {
            triangle_rule(2 * self.poly_degree)
        }
        .expect("degree in range");
        let n = self.dim();
        let vals: Vec<Vec<Vec<f64>>> = rule
            .points
            .iter()
            .map(|&p| (0..n).map(|i| self.eval(i, p)).collect())
            .collect();
        let mut g = vec![vec![0.0; n]; n];
        for (q, w) in rule.weights.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = vals[q][i].iter().zip(&vals[q][j]).map(|(a, b)| a * b).sum();
                    g[i][j] += w * dot;
                }
            }
        }
        g
    }

    /// 2-norm condition number of the Gram matrix.
    pub fn gram_condition(&self) -> f64 {
        let g = self.gram();
        let n = g.len();
        let m = faer::Mat::<f64>::from_fn(n, n, |i, j| g[i][j]);
        let ev = m
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .expect("symmetric eigenvalues");
        ev[n - 1] / ev[0]
    }
}

fn check_order(k: usize) -> Result<()> {
    if k == 1 || k == 2 {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder(k))
    }
}

fn embed(coeffs: &[f64], len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    let m = coeffs.len().min(len);
    v[..m].copy_from_slice(&coeffs[..m]);
    v
}

/// Monomial coefficients of the orthonormal Legendre polynomials on `[0, 1]` up to degree `n-1`.
fn legendre_coefficients(n: usize) -> Vec<Vec<f64>> {
    // P_0 = 1, P_1 = x, with x = 2t - 1 expressed in powers of t.
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(n);
    let x = [-1.0, 2.0];
    for p in 0..n {
        let c = match p {
            0 => vec![1.0],
            1 => x.to_vec(),
            _ => {
                let mut c = vec![0.0; p + 1];
                let a = (2 * p - 1) as f64 / p as f64;
                let b = (p - 1) as f64 / p as f64;
                for (i, v) in raw[p - 1].iter().enumerate() {
                    c[i] += a * x[0] * v;
                    c[i + 1] += a * x[1] * v;
                }
                for (i, v) in raw[p - 2].iter().enumerate() {
                    c[i] -= b * v;
                }
                c
            }
        };
        raw.push(c);
    }
    raw.into_iter()
        .enumerate()
        .map(|(p, c)| {
            let s = ((2 * p + 1) as f64).sqrt();
            embed(&c.iter().map(|v| v * s).collect::<Vec<_>>(), n)
        })
        .collect()
}

/// Orthonormalizes vector polynomial fields in the reference L² product (two-pass MGS).
fn orthonormalize(fields: Vec<PolyField>, poly_degree: usize) -> Vec<PolyField> {
    let rule = triangle_rule(2 * poly_degree).expect("degree in range");
    let nm = dim_p(poly_degree);
    let nq = rule.len();
    let ncomp = fields.first().map_or(0, |f| f.components.len());
    let mut mono = vec![vec![0.0; nm]; nq];
    for (q, p) in rule.points.iter().enumerate() {
        eval_monomials(poly_degree, *p, &mut mono[q], None);
    }
    let sample = |f: &PolyField| -> Vec<f64> {
        let mut out = Vec::with_capacity(nq * ncomp);
        for q in 0..nq {
            let sw = rule.weights[q].sqrt();
            for c in &f.components {
                out.push(sw * c.iter().zip(&mono[q]).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        out
    };
    let mut fields = fields;
    let mut values: Vec<Vec<f64>> = fields.iter().map(sample).collect();
    for i in 0..fields.len() {
        for _pass in 0..2 {
            for j in 0..i {
                let r: f64 = values[i].iter().zip(&values[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = values.split_at_mut(i);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= r * b;
                }
                let (fh, ft) = fields.split_at_mut(i);
                for (ci, cj) in ft[0].components.iter_mut().zip(&fh[j].components) {
                    for (a, b) in ci.iter_mut().zip(cj) {
                        *a -= r * b;
                    }
                }
            }
        }
        let norm = values[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        values[i].iter_mut().for_each(|v| *v /= norm);
        for c in fields[i].components.iter_mut() {
            c.iter_mut().for_each(|v| *v /= norm);
        }
    }
    fields
}

/// Nédélec moment fields on the reference triangle before orthonormalization:
/// vector `P^{k-1}` followed by `q(x, y) (-y, x)` with `q` homogeneous of degree `k-1`.
fn nedelec_raw(k: usize) -> Vec<PolyField> {
    let nm = dim_p(k);
    let exps = monomial_exponents(k);
    let index = |a: i32, b: i32| exps.iter().position(|e| *e == [a, b]).expect("monomial present");
    let mut out = Vec::new();
    for comp in 0..2 {
        for m in 0..dim_p(k - 1) {
            let mut components = vec![vec![0.0; nm]; 2];
            components[comp][m] = 1.0;
            out.push(PolyField { components });
        }
    }
    let d = (k - 1) as i32;
    for a in (0..=d).rev() {
        let b = d - a;
        let mut components = vec![vec![0.0; nm]; 2];
        // q (-y, x) with q = x^a y^b
        components[0][index(a, b + 1)] = -1.0;
        components[1][index(a + 1, b)] = 1.0;
        out.push(PolyField { components });
    }
    out
}

/// Builds the reference basis of `space` for method order `k`.
pub fn build_basis(space: SpaceTag, k: usize) -> Result<ReferenceBasis> {
    check_order(k)?;
    let scalar = scalar_basis(k + 2);
    let scalar_fields = |degree: usize, ncomp: usize, skip: usize| -> Vec<PolyField> {
        let nm = dim_p(degree);
        let mut out = Vec::new();
        for comp in 0..ncomp {
            for a in skip..dim_p(degree) {
                let mut components = vec![vec![0.0; nm]; ncomp];
                components[comp] = embed(scalar.coeffs(a), nm);
                out.push(PolyField { components });
            }
        }
        out
    };
    let (poly_degree, functions) = match space {
        SpaceTag::Stress => (k + 1, scalar_fields(k + 1, 4, 0)),
        SpaceTag::Displacement => (k, scalar_fields(k, 2, 0)),
        SpaceTag::Rotation => (k + 1, scalar_fields(k + 1, 1, 0)),
        SpaceTag::PostComplement => (k + 2, scalar_fields(k + 2, 2, dim_p(k))),
        SpaceTag::Multiplier => {
            let leg = legendre_coefficients(k + 2);
            let mut out = Vec::new();
            for comp in 0..2 {
                for c in &leg {
                    let mut components = vec![vec![0.0; k + 2]; 2];
                    components[comp] = c.clone();
                    out.push(PolyField { components });
                }
            }
            (k + 1, out)
        }
        SpaceTag::NedelecMoment => (k, orthonormalize(nedelec_raw(k), k)),
    };
    Ok(ReferenceBasis {
        space,
        k,
        poly_degree,
        functions,
    })
}

/// Build the postprocessing complement basis (vector `P^{k+2}` orthogonal to vector `P^k`).
pub fn build_post_complement(k: usize) -> Result<ReferenceBasis> {
    build_basis(SpaceTag::PostComplement, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_table() {
        for k in [1usize, 2] {
            let d = |s| build_basis(s, k).unwrap().dim();
            assert_eq!(d(SpaceTag::Stress), 4 * (k + 2) * (k + 3) / 2);
            assert_eq!(d(SpaceTag::Displacement), (k + 1) * (k + 2));
            assert_eq!(d(SpaceTag::Rotation), (k + 2) * (k + 3) / 2);
            assert_eq!(d(SpaceTag::Multiplier), 2 * (k + 2));
            assert_eq!(d(SpaceTag::NedelecMoment), k * (k + 2));
            assert_eq!(d(SpaceTag::PostComplement), 2 * (dim_p(k + 2) - dim_p(k)));
        }
        assert_eq!(build_basis(SpaceTag::Stress, 1).unwrap().dim(), 24);
        assert_eq!(build_basis(SpaceTag::Rotation, 1).unwrap().dim(), 6);
        assert_eq!(build_post_complement(1).unwrap().dim(), 14);
    }

    #[test]
    fn unsupported_order() {
        assert!(matches!(build_basis(SpaceTag::Stress, 0), Err(Error::UnsupportedOrder(0))));
        assert!(matches!(build_basis(SpaceTag::Stress, 3), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn scalar_basis_orthonormal_and_nested() {
        for degree in 0..=MAX_SCALAR_DEGREE {
            let b = scalar_basis(degree);
            let rule = triangle_rule(2 * degree).unwrap();
            let n = b.dim();
            let mut g = vec![0.0; n * n];
            let mut v = vec![0.0; n];
            for (p, w) in rule.iter() {
                b.eval(p, &mut v, None);
                for i in 0..n {
                    for j in 0..n {
                        g[i * n + j] += w * v[i] * v[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((g[i * n + j] - target).abs() < 1e-12, "deg {degree} ({i},{j})");
                }
            }
            // lower-triangular coefficient rows give the nesting P^d prefix property
            for i in 0..n {
                assert!(b.coeffs(i)[i + 1..].iter().all(|&c| c == 0.0));
            }
        }
    }

    #[test]
    fn post_complement_orthogonal_to_pk() {
        for k in [1usize, 2] {
            let post = build_post_complement(k).unwrap();
            let disp = build_basis(SpaceTag::Displacement, k).unwrap();
            let rule = triangle_rule(2 * k + 4).unwrap();
            for i in 0..post.dim() {
                for j in 0..disp.dim() {
                    let ip: f64 = rule
                        .iter()
                        .map(|(p, w)| {
                            let a = post.eval(i, p);
                            let b = disp.eval(j, p);
                            w * (a[0] * b[0] + a[1] * b[1])
                        })
                        .sum();
                    assert!(ip.abs() < 1e-13, "k={k} i={i} j={j} ip={ip:e}");
                }
            }
            let g = post.gram();
            for (i, row) in g.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let t = if i == j { 1.0 } else { 0.0 };
                    assert!((v - t).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn multiplier_basis_matches_recurrence() {
        let b = build_basis(SpaceTag::Multiplier, 2).unwrap();
        let mut leg = vec![0.0; 4];
        for t in [0.0, 0.3, 0.77, 1.0] {
            edge_legendre(t, &mut leg);
            for p in 0..4 {
                let v = b.eval(p, [t, 0.0]);
                assert!((v[0] - leg[p]).abs() < 1e-13);
                assert_eq!(v[1], 0.0);
            }
        }
        assert!(b.gram_condition() < 1.0 + 1e-12);
    }

    /// S^k = homogeneous degree-k vector fields w with w . x = 0 has dimension k:
    /// count the null space of the coefficient map w -> w . x.
    #[test]
    fn sk_dimension_by_nullspace() {
        for k in 1..=4usize {
            // unknowns: coefficients of x^a y^(k-a) in each component: 2(k+1)
            // w.x is homogeneous of degree k+1: k+2 coefficients
            let n = 2 * (k + 1);
            let rows = k + 2;
            let mut m = faer::Mat::<f64>::zeros(rows, n);
            for a in 0..=k {
                // component 0 times x: x^(a+1) y^(k-a) -> row index (k+1) - (a+1)
                m[(k - a, a)] += 1.0;
                // component 1 times y: x^a y^(k-a+1) -> row index (k+1) - a
                m[(k + 1 - a, (k + 1) + a)] += 1.0;
            }
            let s = m.singular_values().unwrap();
            let rank = s.iter().filter(|&&v| v > 1e-12).count();
            assert_eq!(n - rank, k, "k={k}");
        }
    }

    #[test]
    fn nedelec_moment_fields_are_tangential_free() {
        let raw = nedelec_raw(2);
        // the last k fields are homogeneous of degree k and satisfy w . x = 0
        for f in &raw[raw.len() - 2..] {
            let field = ReferenceBasis {
                space: SpaceTag::NedelecMoment,
                k: 2,
                poly_degree: 2,
                functions: vec![f.clone()],
            };
            for p in [[0.2, 0.3], [0.7, 0.1]] {
                let v = field.eval(0, p);
                assert!((v[0] * p[0] + v[1] * p[1]).abs() < 1e-15);
            }
        }
        let b = build_basis(SpaceTag::NedelecMoment, 2).unwrap();
        assert!(b.gram_condition() < 1.0 + 1e-10);
    }

    #[test]
    fn constants_representable_in_displacement() {
        // first scalar function is the normalized constant sqrt(2)
        let b = scalar_basis(3);
        let mut v = [0.0; 1];
        b.eval([0.1, 0.6], &mut v, None);
        assert!((v[0] - 2f64.sqrt()).abs() < 1e-14);
    }
}
