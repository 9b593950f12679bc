//! Norms, projections and errors of discrete fields.

use rayon::prelude::*;

use crate::basis::edge_legendre;
use crate::error::Result;
use crate::fe::{eval_field, eval_field_grad, family_at, project_scalar, project_vector, ref_tables, Dims, Tabulation};
use crate::hybrid::FieldSolution;
use crate::material::MaterialParams;
use crate::mesh::{reference_face_endpoints, FaceTag, Mesh};
use crate::postprocess::PostField;
use crate::source::ManufacturedCase;

/// L² projection onto the broken displacement space (element coefficients).
pub fn l2_projection_w(mesh: &Mesh, k: usize, u: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync)) -> Result<Vec<f64>> {
    let t = ref_tables(k)?;
    Ok((0..mesh.n_elements())
        .into_par_iter()
        .map(|e| project_vector(u, &mesh.geometry(e), t, t.dims.nw))
        .collect::<Vec<_>>()
        .concat())
}

/// L² projection onto the broken rotation space; `s` is the scalar of the skew field `s J`.
pub fn l2_projection_a(mesh: &Mesh, k: usize, s: &(dyn Fn([f64; 2]) -> f64 + Sync)) -> Result<Vec<f64>> {
    let t = ref_tables(k)?;
    Ok((0..mesh.n_elements())
        .into_par_iter()
        .map(|e| project_scalar(s, &mesh.geometry(e), t, t.dims.np))
        .collect::<Vec<_>>()
        .concat())
}

/// Values of a broken displacement along local face `i` of element `e` at global face parameters.
fn face_trace(mesh: &Mesh, dims: &Dims, u: &[f64], e: usize, i: usize, ts: &[f64]) -> Vec<[f64; 2]> {
    let g = mesh.geometry(e);
    let sign = mesh.element_face_signs(e)[i];
    let (a, b) = reference_face_endpoints(i);
    let mut vals = vec![0.0; dims.n_top];
    ts.iter()
        .map(|&t| {
            let s = if sign > 0 { t } else { 1.0 - t };
            let xi = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            family_at(dims.k, xi, &mut vals, None);
            let mut out = [0.0; 2];
            eval_field(&u[e * dims.n_u..(e + 1) * dims.n_u], 2, dims.nw, &g, &vals, &mut out);
            out
        })
        .collect()
}

/// `(sum_K |grad u_h|_K^2 + sum_{F interior or Γ0} h_F^{-1} |[[u_h]]|_F^2)^{1/2}`.
///
/// On Γ0 faces the jump is the trace itself; Γ1 faces do not contribute.
pub fn discrete_h1_norm(mesh: &Mesh, dims: &Dims, u: &[f64]) -> f64 {
    let t = ref_tables(dims.k).expect("supported order");
    let nw = dims.nw;
    let vol: f64 = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let g = mesh.geometry(e);
            let ue = &u[e * dims.n_u..(e + 1) * dims.n_u];
            let mut s = 0.0;
            for i in 0..2 {
                for a in 0..nw {
                    for b in 0..nw {
                        s += ue[i * nw + a] * ue[i * nw + b] * t.stiff_phys(&g, a, b);
                    }
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let rule = &t.edge_rule;
    let ts: Vec<f64> = rule.points.iter().map(|p| p[0]).collect();
    let jump: f64 = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let adj = mesh.face_elements(f);
            let tag = mesh.face_tag(f);
            if tag == FaceTag::Traction {
                return 0.0;
            }
            let first = face_trace(mesh, dims, u, adj[0].0, adj[0].1, &ts);
            let second = if tag == FaceTag::Interior {
                face_trace(mesh, dims, u, adj[1].0, adj[1].1, &ts)
            } else {
                vec![[0.0; 2]; ts.len()]
            };
            // h_F^{-1} * h_F * ∫_0^1 |jump|^2 dt
            first
                .iter()
                .zip(&second)
                .zip(&rule.weights)
                .map(|((a, b), w)| w * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    (vol + jump).max(0.0).sqrt()
}

/// Errors of a discrete source solution against a manufactured case.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct FieldErrors {
    pub sigma_l2: f64,
    pub rho_l2: f64,
    pub u_l2: f64,
    pub pu_1h: f64,
    pub post_h1: Option<f64>,
    pub post_l2: Option<f64>,
}

/// Rule degree for errors against closed-form fields: twice `2k + 8`, so that halving it stays saturated.
pub fn error_degree(k: usize) -> usize {
    (2 * (2 * k + 8)).min(crate::quadrature::MAX_DEGREE)
}

/// Computes all errors with a rule of exactness `degree` (default [`error_degree`]).
pub fn field_errors(
    mesh: &Mesh,
    field: &FieldSolution,
    post: Option<&PostField>,
    case: &ManufacturedCase,
    params: &MaterialParams,
    degree: Option<usize>,
) -> Result<FieldErrors> {
    let dims = field.dims;
    let tab = Tabulation::new(dims.k, degree.unwrap_or(error_degree(dims.k)))?;
    let parts: Vec<[f64; 5]> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let g = mesh.geometry(e);
            let mut acc = [0.0; 5];
            let mut sig = [0.0; 4];
            let mut u = [0.0; 2];
            let mut r = [0.0; 1];
            let mut up = [0.0; 2];
            let mut gp = [[0.0; 2]; 2];
            for (q, (p, w)) in tab.rule.iter().enumerate() {
                let x = g.to_physical(p);
                let vals = tab.values_at(q);
                let wd = w * g.det;
                eval_field(field.sigma_e(e), 4, dims.np, &g, vals, &mut sig);
                eval_field(field.u_e(e), 2, dims.nw, &g, vals, &mut u);
                eval_field(field.rho_e(e), 1, dims.np, &g, vals, &mut r);
                let se = case.sigma(x, params);
                let ue = case.u(x);
                let re = case.rho(x);
                for rc in 0..4 {
                    acc[0] += wd * (se[rc / 2][rc % 2] - sig[rc]).powi(2);
                }
                acc[1] += wd * 2.0 * (re - r[0]).powi(2);
                acc[2] += wd * ((ue[0] - u[0]).powi(2) + (ue[1] - u[1]).powi(2));
                if let Some(post) = post {
                    let c = post.element(e);
                    eval_field(c, 2, dims.n_top, &g, vals, &mut up);
                    eval_field_grad(c, 2, dims.n_top, &g, tab.grads_at(q), &mut gp);
                    let ge = case.grad_u(x);
                    acc[3] += wd * (0..2).map(|i| (0..2).map(|j| (ge[i][j] - gp[i][j]).powi(2)).sum::<f64>()).sum::<f64>();
                    acc[4] += wd * ((ue[0] - up[0]).powi(2) + (ue[1] - up[1]).powi(2));
                }
            }
            acc
        })
        .collect();
    let mut tot = [0.0; 5];
    for p in &parts {
        for i in 0..5 {
            tot[i] += p[i];
        }
    }
    let pu = l2_projection_w(mesh, dims.k, &|x| case.u(x))?;
    let diff: Vec<f64> = pu.iter().zip(&field.u).map(|(a, b)| a - b).collect();
    Ok(FieldErrors {
        sigma_l2: tot[0].sqrt(),
        rho_l2: tot[1].sqrt(),
        u_l2: tot[2].sqrt(),
        pu_1h: discrete_h1_norm(mesh, &dims, &diff),
        post_h1: post.map(|_| tot[3].sqrt()),
        post_l2: post.map(|_| tot[4].sqrt()),
    })
}

/// `|u - P u|_0` by quadrature.
pub fn projection_error(mesh: &Mesh, k: usize, u: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync)) -> Result<f64> {
    let dims = Dims::new(k)?;
    let pu = l2_projection_w(mesh, k, u)?;
    let tab = Tabulation::new(k, dims.data_degree())?;
    let s: f64 = (0..mesh.n_elements())
        .map(|e| {
            let g = mesh.geometry(e);
            let mut v = [0.0; 2];
            tab.rule
                .iter()
                .enumerate()
                .map(|(q, (p, w))| {
                    eval_field(&pu[e * dims.n_u..(e + 1) * dims.n_u], 2, dims.nw, &g, tab.values_at(q), &mut v);
                    let ex = u(g.to_physical(p));
                    w * g.det * ((ex[0] - v[0]).powi(2) + (ex[1] - v[1]).powi(2))
                })
                .sum::<f64>()
        })
        .sum();
    Ok(s.sqrt())
}

/// Multiplier coefficients of the L²(F) projection of a vector function on every non-Γ0 face.
pub fn face_projection(
    mesh: &Mesh,
    dofs: &crate::hybrid::MultiplierDofs,
    k: usize,
    u: &dyn Fn([f64; 2]) -> [f64; 2],
) -> Result<Vec<f64>> {
    let dims = Dims::new(k)?;
    let rule = crate::quadrature::edge_rule(dims.data_degree())?;
    let half = dims.n_face / 2;
    let mut out = vec![0.0; dofs.n];
    let mut leg = vec![0.0; half];
    for (f, off) in dofs.face_offset.iter().enumerate() {
        let Some(o) = off else { continue };
        let [a, b] = mesh.faces()[f];
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let h = mesh.face_length(f);
        for (p, w) in rule.iter() {
            let t = p[0];
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let v = u(x);
            edge_legendre(t, &mut leg);
            for c in 0..2 {
                for (pp, l) in leg.iter().enumerate() {
                    // ∫_F u_c l_p / sqrt(h) ds = sqrt(h) ∫_0^1 u_c l_p dt
                    out[o + c * half + pp] += w * h.sqrt() * v[c] * l;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_alfeld, SideSet};

    #[test]
    fn constant_with_clamped_boundary() {
        let mesh = generate_structured_alfeld(1, SideSet::NONE).unwrap();
        let dims = Dims::new(1).unwrap();
        let c = [0.3, -1.2];
        let u = l2_projection_w(&mesh, 1, &|_| c).unwrap();
        let n = discrete_h1_norm(&mesh, &dims, &u);
        let expect = 4.0 * (c[0] * c[0] + c[1] * c[1]);
        assert!((n * n - expect).abs() < 1e-12, "{} {}", n * n, expect);
        // homogeneity
        let u2: Vec<f64> = u.iter().map(|v| -2.5 * v).collect();
        assert!((discrete_h1_norm(&mesh, &dims, &u2) - 2.5 * n).abs() < 1e-12);
    }

    #[test]
    fn continuous_linear_has_no_jumps() {
        // x (1 - x) is not linear, so use a continuous piecewise-linear hat through the projection
        // of a globally linear field on a mesh with a traction-free boundary
        let all_but_left = SideSet { right: true, bottom: true, top: true, left: false };
        let mesh = generate_structured_alfeld(2, all_but_left).unwrap();
        let dims = Dims::new(1).unwrap();
        let u = l2_projection_w(&mesh, 1, &|x| [x[0], 2.0 * x[0]]).unwrap();
        let n = discrete_h1_norm(&mesh, &dims, &u);
        // |grad u|^2 = 1 + 4 over the unit square
        assert!((n * n - 5.0).abs() < 1e-12, "{}", n * n);
    }

    #[test]
    fn projection_identity_and_orthogonality() {
        let mesh = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        assert!(projection_error(&mesh, 1, &|x| [1.0 + x[0], x[1] - 3.0 * x[0]]).unwrap() < 1e-13);
        assert!(projection_error(&mesh, 2, &|x| [x[0] * x[1], x[1] * x[1]]).unwrap() < 1e-13);
        let e2 = projection_error(&mesh, 1, &|x| [(3.0 * x[0]).sin(), x[1].exp()]).unwrap();
        let fine = generate_structured_alfeld(4, SideSet::NONE).unwrap();
        let e4 = projection_error(&fine, 1, &|x| [(3.0 * x[0]).sin(), x[1].exp()]).unwrap();
        let order = (e2 / e4).log2();
        assert!(order > 1.8 && order < 2.3, "{order}");
    }
}
