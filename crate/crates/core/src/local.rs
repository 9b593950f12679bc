//! Element-local saddle systems and the local solution maps.
//!
//! On each element the unknowns are ordered `(sigma, u, rho)`. The local matrix
//!
//! ```text
//! K = [[A, B^T, C^T],
//!      [B, 0,   0  ],
//!      [C, 0,   0  ]]
//! ```
//!
//! is the symmetric form of the system (the displacement row is multiplied by `rho_S`).
//! `Q(mu)` solves `K x = (-D^T mu, 0, 0)` and `Q^L(f)` solves `K x = (0, -rho_S f, 0)`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe::{ref_tables, Dims};
use crate::material::MaterialParams;
use crate::mesh::{FaceTag, Mesh};

/// Relative pivot size below which a local factorization is declared singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Smallest admissible singular value of `I - lambda Q2^L` on any element.
pub const RESOLVENT_TOL: f64 = 1e-10;

/// Local operator blocks of one element.
#[derive(Debug, Clone)]
pub struct LocalBlocks {
    /// `n_sigma x n_sigma`, compliance.
    pub a: Mat<f64>,
    /// `n_u x n_sigma`, `(v, div tau)`.
    pub b: Mat<f64>,
    /// `n_rho x n_sigma`, `(tau, eta)`.
    pub c: Mat<f64>,
    /// `n_mult x n_sigma`, `<mu, tau n>` over the element's non-Γ0 faces.
    pub d: Mat<f64>,
    /// Local faces (0..3) carrying multipliers, in the row order of `d`.
    pub active_faces: Vec<usize>,
}

/// Builds the blocks of element `e`.
pub fn build_local_blocks(mesh: &Mesh, e: usize, dims: &Dims, params: &MaterialParams) -> Result<LocalBlocks> {
    let g = mesh.geometry(e);
    if !(g.det > 0.0) {
        return Err(Error::DegenerateTriangle {
            element: e,
            area: g.area,
        });
    }
    let t = ref_tables(dims.k)?;
    let (np, nw, nf) = (dims.np, dims.nw, dims.n_face);
    let cm = params.compliance_matrix();
    let a = Mat::from_fn(dims.n_sigma, dims.n_sigma, |i, j| {
        if i % np == j % np {
            cm[i / np][j / np]
        } else {
            0.0
        }
    });
    let b = Mat::from_fn(dims.n_u, dims.n_sigma, |i, j| {
        let (comp, aa) = (i / nw, i % nw);
        let (rc, bb) = (j / np, j % np);
        let (r, c) = (rc / 2, rc % 2);
        if r == comp {
            t.grad_mass_phys(&g, aa, bb, c)
        } else {
            0.0
        }
    });
    const JM: [f64; 4] = [0.0, 1.0, -1.0, 0.0];
    let c = Mat::from_fn(dims.n_rho, dims.n_sigma, |i, j| if i == j % np { JM[j / np] } else { 0.0 });
    let faces = mesh.element_faces(e);
    let signs = mesh.element_face_signs(e);
    let active_faces: Vec<usize> = (0..3).filter(|&i| mesh.face_tag(faces[i]) != FaceTag::Dirichlet).collect();
    let nt = dims.n_top;
    let half = nf / 2;
    let scale = 1.0 / g.det.sqrt();
    let d = Mat::from_fn(active_faces.len() * nf, dims.n_sigma, |i, j| {
        let face = active_faces[i / nf];
        let (comp, p) = ((i % nf) / half, (i % nf) % half);
        let (rc, bb) = (j / np, j % np);
        let (r, c) = (rc / 2, rc % 2);
        if r != comp {
            return 0.0;
        }
        let flip = if signs[face] < 0 && p % 2 == 1 { -1.0 } else { 1.0 };
        let hf = g.face_lengths[face];
        flip * g.normals[face][c] * hf.sqrt() * scale * t.edge[face][p * nt + bb]
    });
    Ok(LocalBlocks {
        a,
        b,
        c,
        d,
        active_faces,
    })
}

/// Assembles the symmetric local saddle matrix from its blocks.
pub fn saddle_matrix(blocks: &LocalBlocks, dims: &Dims) -> Mat<f64> {
    let (ns, nu) = (dims.n_sigma, dims.n_u);
    let n = dims.n_local();
    Mat::from_fn(n, n, |i, j| {
        if i < ns && j < ns {
            blocks.a[(i, j)]
        } else if i < ns && j >= ns && j < ns + nu {
            blocks.b[(j - ns, i)]
        } else if i < ns && j >= ns + nu {
            blocks.c[(j - ns - nu, i)]
        } else if j < ns && i >= ns && i < ns + nu {
            blocks.b[(i - ns, j)]
        } else if j < ns && i >= ns + nu {
            blocks.c[(i - ns - nu, j)]
        } else {
            0.0
        }
    })
}

/// Factorized local problem of one element with the solved columns of `Q` and `Q^L`.
#[derive(Debug, Clone)]
pub struct LocalSolver {
    pub element: usize,
    pub blocks: LocalBlocks,
    /// Columns `(Q1, Q2, Q3) mu_m` for each local multiplier function `m`.
    pub q: Mat<f64>,
    /// Columns `(Q1^L, Q2^L, Q3^L) psi_a` for each displacement basis function.
    pub ql: Mat<f64>,
    /// Eigenvalues of the (symmetrized) `Q2^L`.
    pub q2l_values: Vec<f64>,
    /// Orthonormal eigenvectors of `Q2^L` (columns).
    pub q2l_vectors: Mat<f64>,
    /// `V^T Q2`, used for the resolvent-weighted mass.
    pub w: Mat<f64>,
    /// Local condensed stiffness `Q1^T A Q1 = -D Q1`.
    pub a_loc: Mat<f64>,
    /// Smallest `|U_ii| / max |U_jj|` of the LU factorization.
    pub pivot_ratio: f64,
    /// Largest relative residual of the defining systems of the solved columns.
    pub residual: f64,
    /// `|Q2^L - (Q2^L)^T|_max / |Q2^L|_max`.
    pub q2l_asymmetry: f64,
}

fn max_abs(m: &Mat<f64>) -> f64 {
    let mut r = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            r = r.max(m[(i, j)].abs());
        }
    }
    r
}

impl LocalSolver {
    pub fn new(mesh: &Mesh, e: usize, dims: &Dims, params: &MaterialParams) -> Result<Self> {
        let blocks = build_local_blocks(mesh, e, dims, params)?;
        Self::from_blocks(e, blocks, dims, params)
    }

    pub fn from_blocks(e: usize, blocks: LocalBlocks, dims: &Dims, params: &MaterialParams) -> Result<Self> {
        let k = saddle_matrix(&blocks, dims);
        let n = dims.n_local();
        let (ns, nu) = (dims.n_sigma, dims.n_u);
        let lu = k.partial_piv_lu();
        let u = lu.U();
        let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
        let dmax = diag.iter().copied().fold(0.0, f64::max);
        let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let pivot_ratio = dmin / dmax;
        if !(pivot_ratio > PIVOT_TOL) {
            return Err(Error::SingularLocal {
                element: e,
                pivot: dmin,
            });
        }
        let nm = blocks.d.nrows();
        let mut rhs = Mat::<f64>::zeros(n, nm + nu);
        for m in 0..nm {
            for j in 0..ns {
                rhs[(j, m)] = -blocks.d[(m, j)];
            }
        }
        for a in 0..nu {
            rhs[(ns + a, nm + a)] = -params.rho_s;
        }
        let x = lu.solve(&rhs);
        let res = &k * &x - &rhs;
        let residual = max_abs(&res) / (max_abs(&k) * max_abs(&x)).max(f64::MIN_POSITIVE);
        let q = x.subcols(0, nm).to_owned();
        let ql = x.subcols(nm, nu).to_owned();

        let q2l = ql.submatrix(ns, 0, nu, nu).to_owned();
        let q2l_asymmetry = max_abs(&(&q2l - q2l.transpose())) / max_abs(&q2l).max(f64::MIN_POSITIVE);
        let sym = Mat::from_fn(nu, nu, |i, j| 0.5 * (q2l[(i, j)] + q2l[(j, i)]));
        let eig = sym
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::Consistency(format!("eigendecomposition of Q2^L failed on element {e}")))?;
        let q2l_values: Vec<f64> = (0..nu).map(|i| eig.S().column_vector()[i]).collect();
        let q2l_vectors = eig.U().to_owned();
        let q2 = q.submatrix(ns, 0, nu, nm);
        let w = q2l_vectors.transpose() * q2;
        let q1 = q.submatrix(0, 0, ns, nm);
        // equals Q1^T A Q1 (since B Q1 = C Q1 = 0) without squaring the trace mode of size lambda_S
        let dq = &blocks.d * q1;
        let a_loc = Mat::from_fn(nm, nm, |i, j| -0.5 * (dq[(i, j)] + dq[(j, i)]));
        Ok(Self {
            element: e,
            blocks,
            q,
            ql,
            q2l_values,
            q2l_vectors,
            w,
            a_loc,
            pivot_ratio,
            residual,
            q2l_asymmetry,
        })
    }

    pub fn n_mult(&self) -> usize {
        self.q.ncols()
    }

    /// `Q2^L` as an `n_u x n_u` matrix (unsymmetrized).
    pub fn q2l(&self, dims: &Dims) -> Mat<f64> {
        self.ql.submatrix(dims.n_sigma, 0, dims.n_u, dims.n_u).to_owned()
    }

    /// Operator 2-norm of `Q2^L` on the element.
    pub fn q2l_norm(&self) -> f64 {
        self.q2l_values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Smallest singular value of `I - lambda Q2^L`.
    pub fn resolvent_sigma_min(&self, lambda: f64) -> f64 {
        self.q2l_values
            .iter()
            .map(|s| (1.0 - lambda * s).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Diagonal of the resolvent in the eigenbasis of `Q2^L`, after the validity check.
    pub fn resolvent_diagonal(&self, lambda: f64) -> Result<Vec<f64>> {
        let sigma_min = self.resolvent_sigma_min(lambda);
        if !(sigma_min >= RESOLVENT_TOL) {
            return Err(Error::ResolventInvalid {
                element: self.element,
                sigma_min,
                lambda,
            });
        }
        Ok(self.q2l_values.iter().map(|s| 1.0 / (1.0 - lambda * s)).collect())
    }

    /// `(I - lambda Q2^L)^{-1}` as a dense matrix.
    pub fn local_resolvent(&self, lambda: f64) -> Result<Mat<f64>> {
        let d = self.resolvent_diagonal(lambda)?;
        let v = &self.q2l_vectors;
        let n = v.nrows();
        Ok(Mat::from_fn(n, n, |i, j| (0..n).map(|l| v[(i, l)] * d[l] * v[(j, l)]).sum()))
    }

    /// Applies the resolvent to a displacement coefficient vector.
    pub fn apply_resolvent(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.resolvent_diagonal(lambda)?;
        let v = &self.q2l_vectors;
        let n = v.nrows();
        let y: Vec<f64> = (0..n).map(|l| d[l] * (0..n).map(|i| v[(i, l)] * x[i]).sum::<f64>()).collect();
        Ok((0..n).map(|i| (0..n).map(|l| v[(i, l)] * y[l]).sum()).collect())
    }

    /// Local `rho_S W^T diag(weights) W`, the building block of `B(lambda)` and its derivative.
    pub fn weighted_mass(&self, rho_s: f64, weights: &[f64]) -> Mat<f64> {
        let w = &self.w;
        let (nu, nm) = (w.nrows(), w.ncols());
        Mat::from_fn(nm, nm, |i, j| rho_s * (0..nu).map(|l| w[(l, i)] * weights[l] * w[(l, j)]).sum::<f64>())
    }

    /// Local `B(lambda) = rho_S Q2^T (I - lambda Q2^L)^{-1} Q2`.
    pub fn mass_lambda(&self, rho_s: f64, lambda: f64) -> Result<Mat<f64>> {
        Ok(self.weighted_mass(rho_s, &self.resolvent_diagonal(lambda)?))
    }

    /// Local `B'(lambda) = rho_S Q2^T R Q2^L R Q2` with `R` the resolvent.
    pub fn mass_lambda_derivative(&self, rho_s: f64, lambda: f64) -> Result<Mat<f64>> {
        let d = self.resolvent_diagonal(lambda)?;
        let wts: Vec<f64> = d.iter().zip(&self.q2l_values).map(|(r, s)| r * r * s).collect();
        Ok(self.weighted_mass(rho_s, &wts))
    }
}

/// Local solvers of every element, built in parallel and stored in element order.
#[derive(Debug, Clone)]
pub struct LocalSolverCache {
    pub dims: Dims,
    pub params: MaterialParams,
    pub solvers: Vec<LocalSolver>,
}

impl LocalSolverCache {
    pub fn build(mesh: &Mesh, k: usize, params: &MaterialParams) -> Result<Self> {
        params.validate()?;
        let dims = Dims::new(k)?;
        let solvers = (0..mesh.n_elements())
            .into_par_iter()
            .map(|e| LocalSolver::new(mesh, e, &dims, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims,
            params: *params,
            solvers,
        })
    }

    pub fn max_residual(&self) -> f64 {
        self.solvers.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    pub fn min_pivot_ratio(&self) -> f64 {
        self.solvers.iter().map(|s| s.pivot_ratio).fold(f64::INFINITY, f64::min)
    }

    /// Smallest singular value of `I - lambda Q2^L` over all elements.
    pub fn min_resolvent_sigma(&self, lambda: f64) -> f64 {
        self.solvers
            .iter()
            .map(|s| s.resolvent_sigma_min(lambda))
            .fold(f64::INFINITY, f64::min)
    }

    /// Fails with the offending element when the resolvent is not valid at `lambda`.
    pub fn check_resolvent(&self, lambda: f64) -> Result<f64> {
        for s in &self.solvers {
            s.resolvent_diagonal(lambda)?;
        }
        Ok(self.min_resolvent_sigma(lambda))
    }

    /// `max_K |Q2^L|_K / h_K^2`.
    pub fn q2l_scaling(&self, mesh: &Mesh) -> f64 {
        self.solvers
            .iter()
            .map(|s| s.q2l_norm() / mesh.geometry(s.element).diameter.powi(2))
            .fold(0.0, f64::max)
    }
}
