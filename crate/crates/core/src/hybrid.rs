//! Global multiplier space, condensed operators, full hybrid system and field recovery.

use faer::linalg::solvers::Solve;
use faer::sparse::Triplet;
use faer::{Mat, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe::{project_vector, ref_tables, Dims};
use crate::linalg::{assemble_sparse, from_triplets, max_abs_slice, spmv, Sparse};
use crate::local::LocalSolverCache;
use crate::material::MaterialParams;
use crate::mesh::{FaceTag, Mesh};

/// Default unknown-count cap for the full hybrid system.
pub const FULL_KKT_CAP: usize = 20_000;

const REFINE_STEPS: usize = 3;

/// Numbering of the multiplier space: `n_face` consecutive dofs per non-Γ0 face, in face order.
///
/// On each face the basis is `l_p(t) / sqrt(h_F)` per component, with `t` running from the lower
/// to the higher global vertex index; this basis is L²(F)-orthonormal.
#[derive(Debug, Clone)]
pub struct MultiplierDofs {
    pub face_offset: Vec<Option<usize>>,
    pub n: usize,
    pub n_face: usize,
}

impl MultiplierDofs {
    pub fn new(mesh: &Mesh, dims: &Dims) -> Self {
        let mut next = 0;
        let face_offset = (0..mesh.n_faces())
            .map(|f| {
                if mesh.face_tag(f) == FaceTag::Dirichlet {
                    None
                } else {
                    let o = next;
                    next += dims.n_face;
                    Some(o)
                }
            })
            .collect();
        Self {
            face_offset,
            n: next,
            n_face: dims.n_face,
        }
    }

    /// Global dofs of an element, in the row order of its `D` block.
    pub fn element_dofs(&self, mesh: &Mesh, e: usize, active_faces: &[usize]) -> Vec<usize> {
        let faces = mesh.element_faces(e);
        active_faces
            .iter()
            .flat_map(|&i| {
                let o = self.face_offset[faces[i]].expect("active face has dofs");
                o..o + self.n_face
            })
            .collect()
    }
}

/// Condensed operators on the multiplier space.
pub struct CondensedSystem {
    pub dofs: MultiplierDofs,
    pub element_dofs: Vec<Vec<usize>>,
    /// `a_h(mu, nu) = (A Q1 mu, Q1 nu)`.
    pub a_h: Sparse,
    /// `M0 = B(0) = rho_S (Q2 mu, Q2 nu)`.
    pub m0: Sparse,
    chol: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl std::fmt::Debug for CondensedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CondensedSystem").field("n", &self.dofs.n).finish()
    }
}

fn gather(x: &[f64], dofs: &[usize]) -> Vec<f64> {
    dofs.iter().map(|&d| x[d]).collect()
}

fn mat_vec(m: faer::MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum()).collect()
}

fn mat_t_vec(m: faer::MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)] * x[i]).sum()).collect()
}

impl CondensedSystem {
    pub fn n(&self) -> usize {
        self.dofs.n
    }

    fn solve_once(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.chol.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `a_h x = b` with a few steps of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve_once(b);
        let residual = |x: &[f64]| -> Vec<f64> { b.iter().zip(spmv(&self.a_h, x)).map(|(bi, ai)| bi - ai).collect() };
        let mut r = residual(&x);
        let mut rn = max_abs_slice(&r);
        for _ in 0..REFINE_STEPS {
            if rn == 0.0 {
                break;
            }
            let d = self.solve_once(&r);
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            let rc = residual(&cand);
            let rcn = max_abs_slice(&rc);
            if !(rcn < 0.5 * rn) {
                break;
            }
            x = cand;
            r = rc;
            rn = rcn;
        }
        x
    }

    /// Solves `a_h X = B` for a block of right-hand sides.
    pub fn solve_block(&self, b: &Mat<f64>) -> Mat<f64> {
        self.chol.solve(b)
    }

    /// Load functional `b_h(mu) = rho_S (f, Q2 mu)` from element load coefficients.
    pub fn load(&self, cache: &LocalSolverCache, f: &[f64]) -> Vec<f64> {
        let dims = cache.dims;
        let rho = cache.params.rho_s;
        let mut b = vec![0.0; self.n()];
        for (s, dofs) in cache.solvers.iter().zip(&self.element_dofs) {
            let fe = &f[s.element * dims.n_u..(s.element + 1) * dims.n_u];
            let q2 = s.q.submatrix(dims.n_sigma, 0, dims.n_u, s.n_mult());
            let loc = mat_t_vec(q2, fe);
            for (d, v) in dofs.iter().zip(loc) {
                b[*d] += rho * v;
            }
        }
        b
    }
}

fn assemble_local<F>(n: usize, cache: &LocalSolverCache, element_dofs: &[Vec<usize>], f: F) -> Result<Sparse>
where
    F: Fn(&crate::local::LocalSolver) -> Result<Mat<f64>> + Sync,
{
    let mats = cache.solvers.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
    let parts: Vec<(Vec<usize>, Mat<f64>)> = element_dofs.iter().cloned().zip(mats).collect();
    assemble_sparse(n, &parts)
}

/// Assembles `a_h` and `M0` and factors `a_h`.
pub fn assemble_condensed(mesh: &Mesh, cache: &LocalSolverCache) -> Result<CondensedSystem> {
    if cache.solvers.len() != mesh.n_elements() {
        return Err(Error::Consistency("local solver cache does not match the mesh".into()));
    }
    let dofs = MultiplierDofs::new(mesh, &cache.dims);
    let element_dofs: Vec<Vec<usize>> = cache
        .solvers
        .iter()
        .map(|s| dofs.element_dofs(mesh, s.element, &s.blocks.active_faces))
        .collect();
    for (s, d) in cache.solvers.iter().zip(&element_dofs) {
        if d.len() != s.n_mult() {
            return Err(Error::Consistency(format!("dof map size mismatch on element {}", s.element)));
        }
    }
    let n = dofs.n;
    if n == 0 {
        return Err(Error::SingularCondensed("multiplier space is empty".into()));
    }
    let a_h = assemble_local(n, cache, &element_dofs, |s| Ok(s.a_loc.clone()))?;
    let rho = cache.params.rho_s;
    let m0 = assemble_local(n, cache, &element_dofs, |s| s.mass_lambda(rho, 0.0))?;
    let chol = a_h
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::SingularCondensed(format!("Cholesky of a_h failed: {e:?}")))?;
    Ok(CondensedSystem {
        dofs,
        element_dofs,
        a_h,
        m0,
        chol,
    })
}

/// `B(lambda) = rho_S ((I - lambda Q2^L)^{-1} Q2 mu, Q2 nu)`.
pub fn assemble_mass_lambda(cache: &LocalSolverCache, system: &CondensedSystem, lambda: f64) -> Result<Sparse> {
    let rho = cache.params.rho_s;
    assemble_local(system.n(), cache, &system.element_dofs, |s| s.mass_lambda(rho, lambda))
}

/// Derivative `B'(lambda)`.
pub fn assemble_mass_derivative(cache: &LocalSolverCache, system: &CondensedSystem, lambda: f64) -> Result<Sparse> {
    let rho = cache.params.rho_s;
    assemble_local(system.n(), cache, &system.element_dofs, |s| {
        s.mass_lambda_derivative(rho, lambda)
    })
}

/// Broken coefficients of `(sigma_h, u_h, rho_h, gamma_h)`.
///
/// Element blocks are stored consecutively; `rho` holds the scalar `s` of the skew field `s J`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub dims: Dims,
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Eigenvalue for eigen-mode solutions.
    pub lambda: Option<f64>,
}

impl FieldSolution {
    pub fn zeros(dims: Dims, n_elements: usize, n_mult: usize) -> Self {
        Self {
            dims,
            sigma: vec![0.0; n_elements * dims.n_sigma],
            u: vec![0.0; n_elements * dims.n_u],
            rho: vec![0.0; n_elements * dims.n_rho],
            gamma: vec![0.0; n_mult],
            lambda: None,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.u.len() / self.dims.n_u
    }

    pub fn sigma_e(&self, e: usize) -> &[f64] {
        &self.sigma[e * self.dims.n_sigma..(e + 1) * self.dims.n_sigma]
    }

    pub fn u_e(&self, e: usize) -> &[f64] {
        &self.u[e * self.dims.n_u..(e + 1) * self.dims.n_u]
    }

    pub fn rho_e(&self, e: usize) -> &[f64] {
        &self.rho[e * self.dims.n_rho..(e + 1) * self.dims.n_rho]
    }

    /// `||u_h||_0` (the basis is orthonormal).
    pub fn u_l2(&self) -> f64 {
        crate::linalg::norm2(&self.u)
    }

    /// Scales every field by `c`.
    pub fn scale(&mut self, c: f64) {
        for v in self.sigma.iter_mut().chain(&mut self.u).chain(&mut self.rho).chain(&mut self.gamma) {
            *v *= c;
        }
    }
}

/// Which right-hand side the recovered fields answer.
#[derive(Debug, Clone, Copy)]
pub enum RecoveryMode<'a> {
    /// Body load given by element coefficients `(f, psi)`.
    Source(&'a [f64]),
    /// Eigenvalue `lambda` with load `lambda u_h`.
    Eigen(f64),
}

/// Recovers element fields from the multiplier.
pub fn recover_fields(
    system: &CondensedSystem,
    cache: &LocalSolverCache,
    gamma: &[f64],
    mode: RecoveryMode<'_>,
) -> Result<FieldSolution> {
    let dims = cache.dims;
    let (ns, nu, nr) = (dims.n_sigma, dims.n_u, dims.n_rho);
    let n_loc = dims.n_local();
    let blocks = cache
        .solvers
        .par_iter()
        .zip(&system.element_dofs)
        .map(|(s, dofs)| -> Result<Vec<f64>> {
            let g = gather(gamma, dofs);
            let mut x = mat_vec(s.q.as_ref(), &g);
            let (load, factor) = match mode {
                RecoveryMode::Source(f) => (f[s.element * nu..(s.element + 1) * nu].to_vec(), 1.0),
                RecoveryMode::Eigen(lambda) => {
                    let q2g = x[ns..ns + nu].to_vec();
                    (s.apply_resolvent(lambda, &q2g)?, lambda)
                }
            };
            let xl = mat_vec(s.ql.as_ref(), &load);
            for i in 0..n_loc {
                x[i] += factor * xl[i];
            }
            if let RecoveryMode::Eigen(_) = mode {
                x[ns..ns + nu].copy_from_slice(&load);
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = FieldSolution::zeros(dims, cache.solvers.len(), gamma.len());
    for (e, x) in blocks.iter().enumerate() {
        out.sigma[e * ns..(e + 1) * ns].copy_from_slice(&x[..ns]);
        out.u[e * nu..(e + 1) * nu].copy_from_slice(&x[ns..ns + nu]);
        out.rho[e * nr..(e + 1) * nr].copy_from_slice(&x[ns + nu..]);
    }
    out.gamma = gamma.to_vec();
    if let RecoveryMode::Eigen(l) = mode {
        out.lambda = Some(l);
    }
    Ok(out)
}

/// Residuals of the four hybrid equations for a field and a load, each relative to the size
/// of the terms entering it.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct HybridResidual {
    pub constitutive: f64,
    pub equilibrium: f64,
    pub weak_symmetry: f64,
    pub interior_jump: f64,
    pub traction: f64,
}

impl HybridResidual {
    pub fn max(&self) -> f64 {
        [self.constitutive, self.equilibrium, self.weak_symmetry, self.interior_jump, self.traction]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Evaluates the hybrid equations for `field` with load coefficients `load`
/// (`f` for the source problem, `lambda u_h` for the eigenproblem).
pub fn hybrid_residual(
    mesh: &Mesh,
    system: &CondensedSystem,
    cache: &LocalSolverCache,
    field: &FieldSolution,
    load: &[f64],
) -> HybridResidual {
    let dims = cache.dims;
    let rho_s = cache.params.rho_s;
    let mut r = HybridResidual::default();
    let mut jump = vec![0.0; system.n()];
    let mut sig_scale = 0.0f64;
    let mut const_scale = 0.0f64;
    let mut eq_scale = 0.0f64;
    for (s, dofs) in cache.solvers.iter().zip(&system.element_dofs) {
        let e = s.element;
        let b = &s.blocks;
        let sig = field.sigma_e(e);
        let u = field.u_e(e);
        let rho = field.rho_e(e);
        let g = gather(&field.gamma, dofs);
        let terms = [
            mat_vec(b.a.as_ref(), sig),
            mat_t_vec(b.b.as_ref(), u),
            mat_t_vec(b.c.as_ref(), rho),
            mat_t_vec(b.d.as_ref(), &g),
        ];
        let mut res = vec![0.0; dims.n_sigma];
        for t in &terms {
            const_scale = const_scale.max(max_abs_slice(t));
            for (a, v) in res.iter_mut().zip(t) {
                *a += v;
            }
        }
        r.constitutive = r.constitutive.max(max_abs_slice(&res));
        let bs = mat_vec(b.b.as_ref(), sig);
        let fl: Vec<f64> = load[e * dims.n_u..(e + 1) * dims.n_u].iter().map(|v| rho_s * v).collect();
        eq_scale = eq_scale.max(max_abs_slice(&bs)).max(max_abs_slice(&fl));
        let eq: Vec<f64> = bs.iter().zip(&fl).map(|(x, y)| x + y).collect();
        r.equilibrium = r.equilibrium.max(max_abs_slice(&eq));
        r.weak_symmetry = r.weak_symmetry.max(max_abs_slice(&mat_vec(b.c.as_ref(), sig)));
        for (d, v) in dofs.iter().zip(mat_vec(b.d.as_ref(), sig)) {
            jump[*d] += v;
        }
        sig_scale = sig_scale.max(max_abs_slice(sig));
    }
    for (f, off) in system.dofs.face_offset.iter().enumerate() {
        if let Some(o) = off {
            let m = max_abs_slice(&jump[*o..*o + system.dofs.n_face]);
            match mesh.face_tag(f) {
                FaceTag::Interior => r.interior_jump = r.interior_jump.max(m),
                FaceTag::Traction => r.traction = r.traction.max(m),
                FaceTag::Dirichlet => {}
            }
        }
    }
    let rel = |v: f64, s: f64| if s > 0.0 { v / s } else { v };
    r.constitutive = rel(r.constitutive, const_scale);
    r.equilibrium = rel(r.equilibrium, eq_scale);
    r.weak_symmetry = rel(r.weak_symmetry, sig_scale);
    r.interior_jump = rel(r.interior_jump, sig_scale);
    r.traction = rel(r.traction, sig_scale);
    r
}

/// Mesh, local solvers and condensed system for one problem configuration.
pub struct Discretization {
    pub mesh: Mesh,
    pub cache: LocalSolverCache,
    pub system: CondensedSystem,
}

impl Discretization {
    pub fn new(mesh: Mesh, k: usize, params: &MaterialParams) -> Result<Self> {
        let cache = LocalSolverCache::build(&mesh, k, params)?;
        let system = assemble_condensed(&mesh, &cache)?;
        Ok(Self { mesh, cache, system })
    }

    pub fn dims(&self) -> Dims {
        self.cache.dims
    }

    pub fn params(&self) -> &MaterialParams {
        &self.cache.params
    }

    pub fn n_dofs(&self) -> usize {
        self.system.n()
    }

    /// Dimension of the broken displacement space.
    pub fn dim_w(&self) -> usize {
        self.mesh.n_elements() * self.dims().n_u
    }

    /// Element coefficients `(f, psi)` of a vector load, by quadrature.
    pub fn project_load(&self, f: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync)) -> Vec<f64> {
        let dims = self.dims();
        let t = ref_tables(dims.k).expect("supported order");
        (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| project_vector(f, &self.mesh.geometry(e), t, dims.nw))
            .collect::<Vec<_>>()
            .concat()
    }

    pub fn residual(&self, field: &FieldSolution, load: &[f64]) -> HybridResidual {
        hybrid_residual(&self.mesh, &self.system, &self.cache, field, load)
    }
}

/// The full hybrid saddle system over `(sigma, u, rho)` per element followed by the multipliers.
pub struct FullKkt {
    pub matrix: Sparse,
    pub n_local: usize,
    pub n_elements: usize,
    pub n_mult: usize,
}

impl FullKkt {
    pub fn n(&self) -> usize {
        self.n_local * self.n_elements + self.n_mult
    }

    /// Right-hand side `(0, -rho_S f, 0; 0)`.
    pub fn rhs(&self, dims: &Dims, rho_s: f64, load: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n()];
        for e in 0..self.n_elements {
            for a in 0..dims.n_u {
                b[e * self.n_local + dims.n_sigma + a] = -rho_s * load[e * dims.n_u + a];
            }
        }
        b
    }

    /// Stacks a field into the full unknown vector.
    pub fn lift(&self, field: &FieldSolution) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n());
        for e in 0..self.n_elements {
            x.extend_from_slice(field.sigma_e(e));
            x.extend_from_slice(field.u_e(e));
            x.extend_from_slice(field.rho_e(e));
        }
        x.extend_from_slice(&field.gamma);
        x
    }

    pub fn unlift(&self, dims: Dims, x: &[f64]) -> FieldSolution {
        let mut f = FieldSolution::zeros(dims, self.n_elements, self.n_mult);
        for e in 0..self.n_elements {
            let o = e * self.n_local;
            f.sigma[e * dims.n_sigma..(e + 1) * dims.n_sigma].copy_from_slice(&x[o..o + dims.n_sigma]);
            f.u[e * dims.n_u..(e + 1) * dims.n_u].copy_from_slice(&x[o + dims.n_sigma..o + dims.n_sigma + dims.n_u]);
            f.rho[e * dims.n_rho..(e + 1) * dims.n_rho].copy_from_slice(&x[o + dims.n_sigma + dims.n_u..o + self.n_local]);
        }
        f.gamma = x[self.n_local * self.n_elements..].to_vec();
        f
    }

    /// `|K x - b|_inf / (|K|_max |x|_inf + |b|_inf)`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let kx = spmv(&self.matrix, x);
        let r = kx.iter().zip(b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        r / (crate::linalg::max_abs_sparse(&self.matrix) * max_abs_slice(x) + max_abs_slice(b)).max(f64::MIN_POSITIVE)
    }

    /// Direct sparse LU solve.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .matrix
            .sp_lu()
            .map_err(|e| Error::SingularCondensed(format!("full hybrid system LU failed: {e:?}")))?;
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = lu.solve(&rhs);
        let x: Vec<f64> = (0..b.len()).map(|i| x[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularCondensed("full hybrid system is singular".into()));
        }
        Ok(x)
    }
}

/// Assembles the full hybrid system; refuses systems above `cap` unknowns.
pub fn assemble_full_kkt(mesh: &Mesh, cache: &LocalSolverCache, system: &CondensedSystem, cap: usize) -> Result<FullKkt> {
    let dims = cache.dims;
    let n_local = dims.n_local();
    let ne = mesh.n_elements();
    let n = n_local * ne + system.n();
    if n > cap {
        return Err(Error::CapExceeded {
            what: "full hybrid system",
            size: n,
            cap,
        });
    }
    let mut trip = Vec::new();
    for (s, dofs) in cache.solvers.iter().zip(&system.element_dofs) {
        let o = s.element * n_local;
        let k = crate::local::saddle_matrix(&s.blocks, &dims);
        for j in 0..n_local {
            for i in 0..n_local {
                let v = k[(i, j)];
                if v != 0.0 {
                    trip.push(Triplet::new(o + i, o + j, v));
                }
            }
        }
        let base = n_local * ne;
        for (m, &g) in dofs.iter().enumerate() {
            for j in 0..dims.n_sigma {
                let v = s.blocks.d[(m, j)];
                if v != 0.0 {
                    trip.push(Triplet::new(base + g, o + j, v));
                    trip.push(Triplet::new(o + j, base + g, v));
                }
            }
        }
    }
    Ok(FullKkt {
        matrix: from_triplets(n, n, &trip)?,
        n_local,
        n_elements: ne,
        n_mult: system.n(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{relative_asymmetry, to_dense};
    use crate::mesh::{generate_structured_alfeld, SideSet};

    #[test]
    fn single_cell_dimensions() {
        let mesh = generate_structured_alfeld(1, SideSet::NONE).unwrap();
        let d = Discretization::new(mesh, 1, &MaterialParams::default()).unwrap();
        assert_eq!(d.n_dofs(), 42);
        let kkt = assemble_full_kkt(&d.mesh, &d.cache, &d.system, FULL_KKT_CAP).unwrap();
        assert_eq!(kkt.n(), 258);
        assert!(relative_asymmetry(&kkt.matrix) == 0.0);
    }

    #[test]
    fn condensed_matrices_are_symmetric() {
        let mesh = generate_structured_alfeld(2, SideSet { top: true, ..SideSet::NONE }).unwrap();
        let d = Discretization::new(mesh, 2, &MaterialParams::new(1.0, 5.0, 2.0).unwrap()).unwrap();
        assert!(relative_asymmetry(&d.system.a_h) < 1e-12);
        assert!(relative_asymmetry(&d.system.m0) < 1e-12);
        let b0 = assemble_mass_lambda(&d.cache, &d.system, 0.0).unwrap();
        assert_eq!(to_dense(&b0), to_dense(&d.system.m0));
        let b = assemble_mass_lambda(&d.cache, &d.system, 20.0).unwrap();
        assert!(relative_asymmetry(&b) < 1e-11);
    }

    #[test]
    fn zero_load_gives_zero_fields() {
        let mesh = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        let d = Discretization::new(mesh, 1, &MaterialParams::default()).unwrap();
        let f = vec![0.0; d.dim_w()];
        let b = d.system.load(&d.cache, &f);
        assert!(b.iter().all(|&v| v == 0.0));
        let gamma = d.system.solve(&b);
        let field = recover_fields(&d.system, &d.cache, &gamma, RecoveryMode::Source(&f)).unwrap();
        assert!(field.sigma.iter().chain(&field.u).chain(&field.rho).all(|&v| v == 0.0));
    }

    #[test]
    fn condensed_matches_full_system() {
        for (n, k) in [(1, 1), (2, 1), (1, 2)] {
            let mesh = generate_structured_alfeld(n, SideSet { right: true, ..SideSet::NONE }).unwrap();
            let d = Discretization::new(mesh, k, &MaterialParams::new(1.0, 3.0, 1.5).unwrap()).unwrap();
            let f = d.project_load(&|x| [(3.0 * x[0]).sin() + x[1], x[0] * x[1] - 0.2]);
            let gamma = d.system.solve(&d.system.load(&d.cache, &f));
            let field = recover_fields(&d.system, &d.cache, &gamma, RecoveryMode::Source(&f)).unwrap();
            let res = d.residual(&field, &f);
            assert!(res.max() < 1e-10, "{res:?}");
            let kkt = assemble_full_kkt(&d.mesh, &d.cache, &d.system, FULL_KKT_CAP).unwrap();
            let b = kkt.rhs(&d.dims(), d.params().rho_s, &f);
            assert!(kkt.relative_residual(&kkt.lift(&field), &b) < 1e-12);
            let direct = kkt.unlift(d.dims(), &kkt.solve(&b).unwrap());
            let cmp = |a: &[f64], b: &[f64]| {
                let s = max_abs_slice(b);
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / s
            };
            assert!(cmp(&field.sigma, &direct.sigma) < 1e-10);
            assert!(cmp(&field.u, &direct.u) < 1e-10);
            assert!(cmp(&field.rho, &direct.rho) < 1e-10);
            assert!(cmp(&field.gamma, &direct.gamma) < 1e-10);
        }
    }

    #[test]
    fn full_system_cap() {
        let mesh = generate_structured_alfeld(2, SideSet::NONE).unwrap();
        let d = Discretization::new(mesh, 1, &MaterialParams::default()).unwrap();
        assert!(matches!(
            assemble_full_kkt(&d.mesh, &d.cache, &d.system, 100),
            Err(Error::CapExceeded { .. })
        ));
    }
}
