//! Elasticity eigenpairs from the condensed multiplier problem.
//!
//! The linear pencil `a_h gamma = lambda M0 gamma` provides initial guesses. The mixed
//! eigenvalues solve the scalar fixed point `theta_j(lambda) = lambda`, where `theta_j` is the
//! `j`-th eigenvalue of `a_h gamma = theta B(lambda) gamma`. A dense solution operator on the
//! displacement space serves as an independent check.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hybrid::{
    assemble_mass_derivative, assemble_mass_lambda, recover_fields, CondensedSystem, Discretization, FieldSolution,
    RecoveryMode,
};
use crate::linalg::{dot, spmm, spmv, to_dense, Sparse};

/// Largest condensed dimension solved by dense reduction.
pub const DENSE_PENCIL_CAP: usize = 1200;
/// Largest displacement space for the operator path.
pub const OPERATOR_PATH_CAP: usize = 2000;
/// Relative distance below which two pencil eigenvalues form a cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Controls for the inner pencil eigensolver.
#[derive(Debug, Clone, Copy)]
pub struct PencilOptions {
    pub dense_cap: usize,
    /// Relative residual `|a x - theta B x| / |a x|` for the subspace iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Guard vectors added to the subspace.
    pub guard: usize,
    pub seed: u64,
}

impl Default for PencilOptions {
    fn default() -> Self {
        Self {
            dense_cap: DENSE_PENCIL_CAP,
            tol: 1e-10,
            max_iter: 500,
            guard: 10,
            seed: 7,
        }
    }
}

/// Smallest eigenvalues of `a_h x = theta B x`, ascending, with `B`-normalized vectors.
#[derive(Debug, Clone)]
pub struct PencilPairs {
    pub theta: Vec<f64>,
    pub vectors: Mat<f64>,
    /// Ritz basis for warm starts (subspace path only).
    pub basis: Option<Mat<f64>>,
    /// Largest relative residual among the returned pairs.
    pub residual: f64,
    /// Number of finite eigenvalues (dense path) or an upper bound for it.
    pub available: usize,
    pub iterations: usize,
}

fn dense_cholesky_factor(a: &Mat<f64>) -> Result<Mat<f64>> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::SingularCondensed(format!("dense Cholesky failed: {e:?}")))?;
    Ok(llt.L().to_owned())
}

/// Eigenpairs of the symmetric pencil `(K, M)` with `K` SPD: returns `nu` descending and
/// `K`-normalized vectors of `M z = nu K z`.
fn reduced_pencil(k: &Mat<f64>, m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let l = dense_cholesky_factor(k)?;
    let mut x = m.clone();
    l.solve_lower_triangular_in_place(&mut x);
    let mut c = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(&mut c);
    let n = c.nrows();
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let eig = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Consistency(format!("symmetric eigensolve failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let order: Vec<usize> = (0..n).rev().collect();
    let nu: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let mut z = Mat::from_fn(n, n, |i, j| eig.U()[(i, order[j])]);
    l.transpose().solve_upper_triangular_in_place(&mut z);
    Ok((nu, z))
}

fn normalize_columns(x: &mut Mat<f64>, b: &Sparse) {
    let bx = spmm(b, x);
    for j in 0..x.ncols() {
        let nrm: f64 = (0..x.nrows()).map(|i| x[(i, j)] * bx[(i, j)]).sum::<f64>().max(0.0).sqrt();
        if nrm > 0.0 {
            for i in 0..x.nrows() {
                x[(i, j)] /= nrm;
            }
        }
    }
}

fn pair_residuals(system: &CondensedSystem, b: &Sparse, theta: &[f64], x: &Mat<f64>) -> f64 {
    let ax = spmm(&system.a_h, x);
    let bx = spmm(b, x);
    (0..theta.len())
        .map(|j| {
            let (mut r, mut d) = (0.0, 0.0);
            for i in 0..x.nrows() {
                r += (ax[(i, j)] - theta[j] * bx[(i, j)]).powi(2);
                d += ax[(i, j)].powi(2);
            }
            (r / d.max(f64::MIN_POSITIVE)).sqrt()
        })
        .fold(0.0, f64::max)
}

fn dense_pencil(system: &CondensedSystem, b: &Sparse, count: usize) -> Result<PencilPairs> {
    let (nu, z) = reduced_pencil(&to_dense(&system.a_h), &to_dense(b))?;
    let nu_max = nu.first().copied().unwrap_or(0.0);
    let available = nu.iter().filter(|&&v| v > 1e-12 * nu_max).count();
    if count > available {
        return Err(Error::TooManyEigenvalues {
            requested: count,
            available,
        });
    }
    let theta: Vec<f64> = nu[..count].iter().map(|v| 1.0 / v).collect();
    let mut vectors = z.subcols(0, count).to_owned();
    normalize_columns(&mut vectors, b);
    let residual = pair_residuals(system, b, &theta, &vectors);
    Ok(PencilPairs {
        theta,
        vectors,
        basis: None,
        residual,
        available,
        iterations: 1,
    })
}

fn orthonormalize(y: &Mat<f64>) -> Mat<f64> {
    y.qr().compute_thin_Q()
}

fn subspace_pencil(
    system: &CondensedSystem,
    b: &Sparse,
    count: usize,
    available: usize,
    opts: &PencilOptions,
    warm: Option<&Mat<f64>>,
) -> Result<PencilPairs> {
    let n = system.n();
    let p = (count + opts.guard).min(available).min(n);
    let mut x = match warm {
        Some(w) if w.nrows() == n && w.ncols() == p => w.clone(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
        }
    };
    let mut last = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let y = orthonormalize(&system.solve_block(&spmm(b, &x)));
        let ka = y.transpose() * spmm(&system.a_h, &y);
        let kb = y.transpose() * spmm(b, &y);
        let ka = Mat::from_fn(p, p, |i, j| 0.5 * (ka[(i, j)] + ka[(j, i)]));
        let (nu, z) = reduced_pencil(&ka, &kb)?;
        x = &y * &z;
        let theta: Vec<f64> = nu[..count].iter().map(|v| 1.0 / v).collect();
        if nu[count - 1] <= 0.0 {
            return Err(Error::TooManyEigenvalues {
                requested: count,
                available: nu.iter().filter(|&&v| v > 0.0).count(),
            });
        }
        let mut vectors = x.subcols(0, count).to_owned();
        normalize_columns(&mut vectors, b);
        last = pair_residuals(system, b, &theta, &vectors);
        if last <= opts.tol {
            return Ok(PencilPairs {
                theta,
                vectors,
                basis: Some(x),
                residual: last,
                available,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        index: count - 1,
        iterations: opts.max_iter,
        residual: last,
    })
}

/// The `count` smallest eigenpairs of `a_h x = theta B x`.
///
/// `B` must be symmetric positive semidefinite with rank at most `dim W`.
pub fn pencil_eigen(
    disc: &Discretization,
    b: &Sparse,
    count: usize,
    opts: &PencilOptions,
    warm: Option<&Mat<f64>>,
) -> Result<PencilPairs> {
    let system = &disc.system;
    let bound = disc.dim_w().min(system.n());
    if count == 0 || count > bound {
        return Err(Error::TooManyEigenvalues {
            requested: count,
            available: bound,
        });
    }
    if system.n() <= opts.dense_cap {
        dense_pencil(system, b, count)
    } else {
        subspace_pencil(system, b, count, bound, opts, warm)
    }
}

/// Eigenpairs of the linear condensed pencil `a_h gamma = lambda M0 gamma`.
#[derive(Debug, Clone)]
pub struct LinearEigen {
    pub lambda: Vec<f64>,
    /// `M0`-orthonormal eigenvectors (columns).
    pub gamma: Mat<f64>,
    pub basis: Option<Mat<f64>>,
    pub residual: f64,
}

pub fn solve_linear_condensed(disc: &Discretization, count: usize, opts: &PencilOptions) -> Result<LinearEigen> {
    let pairs = pencil_eigen(disc, &disc.system.m0, count, opts, None)?;
    let mut gamma = pairs.vectors;
    m_orthonormalize(&mut gamma, &disc.system.m0);
    Ok(LinearEigen {
        lambda: pairs.theta,
        gamma,
        basis: pairs.basis,
        residual: pairs.residual,
    })
}

/// Gram-Schmidt in the `M` inner product, twice.
fn m_orthonormalize(x: &mut Mat<f64>, m: &Sparse) {
    for _ in 0..2 {
        for j in 0..x.ncols() {
            for i in 0..j {
                let xi = crate::linalg::col_to_vec(x, i);
                let mxj = spmv(m, &crate::linalg::col_to_vec(x, j));
                let c = dot(&xi, &mxj);
                for r in 0..x.nrows() {
                    x[(r, j)] -= c * xi[r];
                }
            }
            let xj = crate::linalg::col_to_vec(x, j);
            let nrm = dot(&xj, &spmv(m, &xj)).max(0.0).sqrt();
            if nrm > 0.0 {
                for r in 0..x.nrows() {
                    x[(r, j)] /= nrm;
                }
            }
        }
    }
}

/// Controls for the nonlinear eigenvalue iteration.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub rtol: f64,
    pub max_iter: usize,
    /// Newton with the analytic `B'(lambda)`; the secant method otherwise.
    pub use_derivative: bool,
    /// Raise an error instead of reporting when the tracked eigenvalue sits in a cluster.
    pub cluster_is_error: bool,
    pub pencil: PencilOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            max_iter: 50,
            use_derivative: true,
            cluster_is_error: false,
            pencil: PencilOptions::default(),
        }
    }
}

/// A converged mixed eigenpair.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub index: usize,
    pub lambda_tilde: f64,
    pub lambda_h: f64,
    /// `M0`-normalized multiplier.
    pub gamma: Vec<f64>,
    pub field: FieldSolution,
    pub iterations: usize,
    /// `|theta(lambda_h) - lambda_h| / lambda_h`.
    pub residual: f64,
    pub min_resolvent_sigma: f64,
    /// Relative distance to the nearest other pencil eigenvalue when below the cluster tolerance.
    pub cluster_width: Option<f64>,
    /// Smallest `M0`-overlap between consecutive tracked eigenvectors.
    pub min_overlap: f64,
}

/// Summary row of an eigenpair.
#[derive(Debug, Clone, Serialize)]
pub struct EigenRow {
    pub index: usize,
    pub lambda_tilde: f64,
    pub lambda_h: f64,
    pub newton_iters: usize,
    pub residual: f64,
    pub min_resolvent_sigma: f64,
}

impl EigenResult {
    pub fn row(&self) -> EigenRow {
        EigenRow {
            index: self.index,
            lambda_tilde: self.lambda_tilde,
            lambda_h: self.lambda_h,
            newton_iters: self.iterations,
            residual: self.residual,
            min_resolvent_sigma: self.min_resolvent_sigma,
        }
    }
}

struct Tracked {
    theta: f64,
    gamma: Vec<f64>,
    cluster: Option<f64>,
    overlap: f64,
}

fn m0_overlap(m0: &Sparse, a: &[f64], b: &[f64]) -> f64 {
    let mb = spmv(m0, b);
    let ma = spmv(m0, a);
    dot(a, &mb).abs() / (dot(a, &ma) * dot(b, &mb)).max(f64::MIN_POSITIVE).sqrt()
}

fn track(m0: &Sparse, pairs: &PencilPairs, j: usize, prev: &[f64]) -> Tracked {
    let th = &pairs.theta;
    let near: Vec<usize> = (0..th.len())
        .filter(|&i| (th[i] - th[j]).abs() <= CLUSTER_TOL * th[j])
        .collect();
    let gap = (0..th.len())
        .filter(|&i| i != j)
        .map(|i| (th[i] - th[j]).abs() / th[j])
        .fold(f64::INFINITY, f64::min);
    let overlaps: Vec<(usize, f64)> = near
        .iter()
        .map(|&i| (i, m0_overlap(m0, prev, &crate::linalg::col_to_vec(&pairs.vectors, i))))
        .collect();
    let (sel, overlap) = overlaps
        .iter()
        .copied()
        .fold((j, -1.0), |best, c| if c.1 > best.1 + 1e-12 { c } else { best });
    Tracked {
        theta: th[sel],
        gamma: crate::linalg::col_to_vec(&pairs.vectors, sel),
        cluster: (gap < CLUSTER_TOL).then_some(gap),
        overlap,
    }
}

fn quad(a: &Sparse, x: &[f64]) -> f64 {
    dot(x, &spmv(a, x))
}

/// Solves `theta_j(lambda) = lambda` starting from the `j`-th linear pair.
pub fn solve_nonlinear(disc: &Discretization, init: &LinearEigen, j: usize, opts: &NewtonOptions) -> Result<EigenResult> {
    if j >= init.lambda.len() {
        return Err(Error::InvalidInput(format!(
            "eigen index {j} exceeds the {} initial guesses",
            init.lambda.len()
        )));
    }
    let system = &disc.system;
    let cache = &disc.cache;
    let count = (j + 2).min(disc.dim_w().min(system.n()));
    let lambda_tilde = init.lambda[j];
    let mut lambda = lambda_tilde;
    let mut prev_gamma = crate::linalg::col_to_vec(&init.gamma, j);
    let mut warm = init.basis.clone();
    let mut min_overlap = 1.0f64;
    let mut cluster = None;
    let mut secant: Option<(f64, f64)> = None;
    for it in 0..=opts.max_iter {
        let sigma = cache.check_resolvent(lambda)?;
        let b = assemble_mass_lambda(cache, system, lambda)?;
        let warm_ref = warm.as_ref().filter(|w| w.ncols() == (count + opts.pencil.guard).min(disc.dim_w()).min(system.n()));
        let pairs = pencil_eigen(disc, &b, count, &opts.pencil, warm_ref)?;
        if pairs.basis.is_some() {
            warm = pairs.basis.clone();
        }
        let t = track(&system.m0, &pairs, j, &prev_gamma);
        min_overlap = min_overlap.min(t.overlap);
        if t.cluster.is_some() {
            cluster = t.cluster;
            if opts.cluster_is_error {
                return Err(Error::EigenCluster {
                    index: j,
                    width: t.cluster.unwrap_or(0.0),
                });
            }
        }
        let g = t.theta - lambda;
        prev_gamma = t.gamma;
        if g.abs() <= opts.rtol * lambda {
            let mut gamma = prev_gamma;
            let nrm = quad(&system.m0, &gamma).sqrt();
            for v in gamma.iter_mut() {
                *v /= nrm;
            }
            let field = recover_fields(system, cache, &gamma, RecoveryMode::Eigen(lambda))?;
            return Ok(EigenResult {
                index: j,
                lambda_tilde,
                lambda_h: lambda,
                gamma,
                field,
                iterations: it,
                residual: g.abs() / lambda,
                min_resolvent_sigma: sigma,
                cluster_width: cluster,
                min_overlap,
            });
        }
        if it == opts.max_iter {
            return Err(Error::NoConvergence {
                index: j,
                iterations: it,
                residual: g.abs() / lambda,
            });
        }
        let slope = if opts.use_derivative {
            let bp = assemble_mass_derivative(cache, system, lambda)?;
            -t.theta * quad(&bp, &prev_gamma) / quad(&b, &prev_gamma) - 1.0
        } else {
            match secant {
                Some((l0, g0)) if (lambda - l0).abs() > 0.0 => (g - g0) / (lambda - l0),
                _ => -1.0,
            }
        };
        secant = Some((lambda, g));
        lambda -= g / slope;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NoConvergence {
                index: j,
                iterations: it + 1,
                residual: g.abs() / t.theta,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// The `count` smallest mixed eigenpairs, sorted ascending.
pub fn solve_eigen(disc: &Discretization, count: usize, opts: &NewtonOptions) -> Result<Vec<EigenResult>> {
    let init = solve_linear_condensed(disc, count, &opts.pencil)?;
    let mut out = (0..count)
        .map(|j| solve_nonlinear(disc, &init, j, opts))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        a.lambda_h
            .total_cmp(&b.lambda_h)
            .then(a.index.cmp(&b.index))
    });
    Ok(out)
}

/// Dense solution operator on the displacement space and its spectrum.
#[derive(Debug, Clone)]
pub struct OperatorSpectrum {
    pub matrix: Mat<f64>,
    /// Eigenvalues of the operator, descending.
    pub mu: Vec<f64>,
    /// `1 / mu` for the positive eigenvalues, ascending.
    pub lambda: Vec<f64>,
    pub asymmetry: f64,
}

/// Columns are displacement parts of source solutions with the displacement basis functions as loads.
pub fn operator_path(disc: &Discretization, cap: usize) -> Result<OperatorSpectrum> {
    let m = disc.dim_w();
    if m > cap {
        return Err(Error::CapExceeded {
            what: "operator path dimension",
            size: m,
            cap,
        });
    }
    let system = &disc.system;
    let cache = &disc.cache;
    let cols = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut f = vec![0.0; m];
            f[i] = 1.0;
            let gamma = system.solve(&system.load(cache, &f));
            recover_fields(system, cache, &gamma, RecoveryMode::Source(&f)).map(|s| s.u)
        })
        .collect::<Result<Vec<_>>>()?;
    let t = Mat::from_fn(m, m, |i, j| cols[j][i]);
    let tmax = crate::linalg::max_abs(&t);
    let asymmetry = crate::linalg::max_abs(&(&t - t.transpose())) / tmax.max(f64::MIN_POSITIVE);
    let sym = Mat::from_fn(m, m, |i, j| 0.5 * (t[(i, j)] + t[(j, i)]));
    let eig = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Consistency(format!("operator eigensolve failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let mut mu: Vec<f64> = (0..m).map(|i| s[i]).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    let mut lambda: Vec<f64> = mu.iter().filter(|&&v| v > 0.0).map(|v| 1.0 / v).collect();
    lambda.sort_by(f64::total_cmp);
    Ok(OperatorSpectrum {
        matrix: t,
        mu,
        lambda,
        asymmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::linalg::solvers::Solve;
    use crate::material::MaterialParams;
    use crate::mesh::{generate_structured_alfeld, SideSet};

    fn disc(n: usize, k: usize, params: &MaterialParams) -> Discretization {
        Discretization::new(generate_structured_alfeld(n, SideSet::NONE).unwrap(), k, params).unwrap()
    }

    #[test]
    fn linear_pencil_against_full_dense_oracle() {
        let d = disc(1, 1, &MaterialParams::default());
        let lin = solve_linear_condensed(&d, 4, &PencilOptions::default()).unwrap();
        // oracle: generalized problem solved through the inverse of a_h
        let a = to_dense(&d.system.a_h);
        let m = to_dense(&d.system.m0);
        let ainv_m = a.partial_piv_lu().solve(&m);
        let ev = ainv_m.eigenvalues().unwrap();
        let mut nu: Vec<f64> = ev.iter().map(|c| c.re).filter(|v| *v > 1e-10).collect();
        nu.sort_by(|a, b| b.total_cmp(a));
        for (j, l) in lin.lambda.iter().enumerate() {
            assert!((l - 1.0 / nu[j]).abs() < 1e-10 * l, "{l} {}", 1.0 / nu[j]);
            assert!(*l > 0.0);
        }
        let g = &lin.gamma;
        let mg = spmm(&d.system.m0, g);
        let gram = g.transpose() * mg;
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn subspace_matches_dense() {
        let d = disc(3, 1, &MaterialParams::default());
        let dense = pencil_eigen(&d, &d.system.m0, 5, &PencilOptions::default(), None).unwrap();
        let opts = PencilOptions {
            dense_cap: 0,
            ..Default::default()
        };
        let sub = pencil_eigen(&d, &d.system.m0, 5, &opts, None).unwrap();
        assert!(sub.basis.is_some());
        for (a, b) in dense.theta.iter().zip(&sub.theta) {
            assert!((a - b).abs() < 1e-10 * a, "{a} {b}");
        }
    }

    #[test]
    fn too_many_eigenvalues() {
        let d = disc(1, 1, &MaterialParams::default());
        let err = solve_linear_condensed(&d, d.dim_w() + 1, &PencilOptions::default()).unwrap_err();
        assert!(matches!(err, Error::TooManyEigenvalues { .. }));
    }

    #[test]
    fn nonlinear_matches_operator_path() {
        for n in [1, 2] {
            let d = disc(n, 1, &MaterialParams::default());
            let op = operator_path(&d, OPERATOR_PATH_CAP).unwrap();
            assert!(op.asymmetry < 1e-10, "{}", op.asymmetry);
            assert_eq!(op.lambda.len(), d.dim_w());
            let res = solve_eigen(&d, 3, &NewtonOptions::default()).unwrap();
            for r in &res {
                let rel = (r.lambda_h - op.lambda[r.index]).abs() / r.lambda_h;
                assert!(rel < 1e-8, "n={n} j={} {} {} {rel}", r.index, r.lambda_h, op.lambda[r.index]);
                assert!(r.residual <= 1e-10);
            }
        }
    }

    #[test]
    fn fixed_point_and_secant() {
        let d = disc(2, 1, &MaterialParams::default());
        let init = solve_linear_condensed(&d, 1, &PencilOptions::default()).unwrap();
        let newton = solve_nonlinear(&d, &init, 0, &NewtonOptions::default()).unwrap();
        let b = assemble_mass_lambda(&d.cache, &d.system, newton.lambda_h).unwrap();
        let p = pencil_eigen(&d, &b, 1, &PencilOptions::default(), None).unwrap();
        assert!((p.theta[0] - newton.lambda_h).abs() <= 1e-10 * newton.lambda_h);
        let opts = NewtonOptions {
            use_derivative: false,
            ..Default::default()
        };
        let sec = solve_nonlinear(&d, &init, 0, &opts).unwrap();
        assert!((sec.lambda_h - newton.lambda_h).abs() < 1e-9 * newton.lambda_h);
        assert!(newton.iterations <= 5);
        assert!(newton.lambda_h < newton.lambda_tilde || newton.lambda_h > 0.0);
    }

    #[test]
    fn density_scaling_covariance() {
        let base = solve_eigen(&disc(1, 1, &MaterialParams::default()), 2, &NewtonOptions::default()).unwrap();
        let scaled = solve_eigen(
            &disc(1, 1, &MaterialParams::new(1.0, 1.0, 4.0).unwrap()),
            2,
            &NewtonOptions::default(),
        )
        .unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a.lambda_h / 4.0 - b.lambda_h).abs() < 1e-10 * b.lambda_h);
            assert!((a.lambda_tilde / 4.0 - b.lambda_tilde).abs() < 1e-10 * b.lambda_tilde);
        }
    }

    #[test]
    fn operator_cap() {
        let d = disc(2, 1, &MaterialParams::default());
        assert!(matches!(operator_path(&d, 10), Err(Error::CapExceeded { .. })));
    }
}
