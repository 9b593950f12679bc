//! Source problem driver and manufactured solutions.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::hybrid::{recover_fields, Discretization, FieldSolution, RecoveryMode};
use crate::material::{stiffness_apply, MaterialParams};
use crate::mesh::SideSet;

/// Tolerance on the hybrid residual of a recovered source solution.
pub const SOURCE_RESIDUAL_TOL: f64 = 1e-10;

type Vec2 = [f64; 2];
type Mat2 = [[f64; 2]; 2];

/// A closed-form displacement with everything derived from it.
#[derive(Clone, Copy)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub divergence_free: bool,
    /// Traction-free sides the case is compatible with (`u` vanishes on the others).
    pub gamma1: SideSet,
    /// Smallest order for which `(sigma, rho)` lie in the discrete spaces, if any.
    pub exact_from_k: Option<usize>,
    u: fn(Vec2) -> Vec2,
    /// `grad[i][j] = d u_i / d x_j`.
    grad: fn(Vec2) -> Mat2,
    /// `hess[i][a][b] = d^2 u_i / d x_a d x_b`.
    hess: fn(Vec2) -> [Mat2; 2],
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase").field("name", &self.name).finish()
    }
}

impl ManufacturedCase {
    pub fn u(&self, x: Vec2) -> Vec2 {
        (self.u)(x)
    }

    pub fn grad_u(&self, x: Vec2) -> Mat2 {
        (self.grad)(x)
    }

    pub fn div_u(&self, x: Vec2) -> f64 {
        let g = self.grad_u(x);
        g[0][0] + g[1][1]
    }

    pub fn strain(&self, x: Vec2) -> Mat2 {
        let g = self.grad_u(x);
        let off = 0.5 * (g[0][1] + g[1][0]);
        [[g[0][0], off], [off, g[1][1]]]
    }

    pub fn sigma(&self, x: Vec2, params: &MaterialParams) -> Mat2 {
        stiffness_apply(&self.strain(x), params)
    }

    /// Scalar `s` of the rotation `s J = skew(grad u)`.
    pub fn rho(&self, x: Vec2) -> f64 {
        let g = self.grad_u(x);
        0.5 * (g[0][1] - g[1][0])
    }

    pub fn div_sigma(&self, x: Vec2, params: &MaterialParams) -> Vec2 {
        let h = (self.hess)(x);
        let grad_div = [h[0][0][0] + h[1][1][0], h[0][0][1] + h[1][1][1]];
        let (mu, lam) = (params.mu_s, params.lambda_s);
        std::array::from_fn(|i| {
            let lap = h[i][0][0] + h[i][1][1];
            mu * (lap + grad_div[i]) + lam * grad_div[i]
        })
    }

    /// Body load `f = -div sigma / rho_S`.
    pub fn load(&self, x: Vec2, params: &MaterialParams) -> Vec2 {
        let d = self.div_sigma(x, params);
        [-d[0] / params.rho_s, -d[1] / params.rho_s]
    }
}

fn sin_u(x: Vec2) -> Vec2 {
    let s = (PI * x[0]).sin() * (PI * x[1]).sin();
    [s, s]
}

fn sin_grad(x: Vec2) -> Mat2 {
    let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
    let r = [PI * cx * sy, PI * sx * cy];
    [r, r]
}

fn sin_hess(x: Vec2) -> [Mat2; 2] {
    let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
    let p2 = PI * PI;
    let h = [[-p2 * sx * sy, p2 * cx * cy], [p2 * cx * cy, -p2 * sx * sy]];
    [h, h]
}

// p(t) = t^2 (1 - t)^2 and its derivatives
fn p0(t: f64) -> f64 {
    (t * (1.0 - t)).powi(2)
}
fn p1(t: f64) -> f64 {
    2.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}
fn p2(t: f64) -> f64 {
    2.0 - 12.0 * t + 12.0 * t * t
}
fn p3(t: f64) -> f64 {
    24.0 * t - 12.0
}

fn curl_u(x: Vec2) -> Vec2 {
    [p0(x[0]) * p1(x[1]), -p1(x[0]) * p0(x[1])]
}

fn curl_grad(x: Vec2) -> Mat2 {
    let (a, b) = (x[0], x[1]);
    [
        [p1(a) * p1(b), p0(a) * p2(b)],
        [-p2(a) * p0(b), -p1(a) * p1(b)],
    ]
}

fn curl_hess(x: Vec2) -> [Mat2; 2] {
    let (a, b) = (x[0], x[1]);
    [
        [[p2(a) * p1(b), p1(a) * p2(b)], [p1(a) * p2(b), p0(a) * p3(b)]],
        [[-p3(a) * p0(b), -p2(a) * p1(b)], [-p2(a) * p1(b), -p1(a) * p2(b)]],
    ]
}

// bubble b = x (1 - x) y (1 - y)
fn bubble_u(x: Vec2) -> Vec2 {
    let b = x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
    [b, -2.0 * b]
}

fn bubble_grad(x: Vec2) -> Mat2 {
    let (xx, yy) = (x[0] * (1.0 - x[0]), x[1] * (1.0 - x[1]));
    let (dx, dy) = ((1.0 - 2.0 * x[0]) * yy, xx * (1.0 - 2.0 * x[1]));
    [[dx, dy], [-2.0 * dx, -2.0 * dy]]
}

fn bubble_hess(x: Vec2) -> [Mat2; 2] {
    let (xx, yy) = (x[0] * (1.0 - x[0]), x[1] * (1.0 - x[1]));
    let dxy = (1.0 - 2.0 * x[0]) * (1.0 - 2.0 * x[1]);
    let h = [[-2.0 * yy, dxy], [dxy, -2.0 * xx]];
    [h, h.map(|r| r.map(|v| -2.0 * v))]
}

/// Built-in cases, all clamped on the whole boundary of the unit square:
/// `smooth` has `u = (sin πx sin πy, sin πx sin πy)`, `divfree` is the curl of
/// `(x (1-x) y (1-y))^2`, and `bubble` is `(b, -2b)` with `b = x (1-x) y (1-y)`, whose stress
/// and rotation are cubic.
pub fn manufactured_catalog() -> Vec<ManufacturedCase> {
    vec![
        ManufacturedCase {
            name: "smooth",
            divergence_free: false,
            gamma1: SideSet::NONE,
            exact_from_k: None,
            u: sin_u,
            grad: sin_grad,
            hess: sin_hess,
        },
        ManufacturedCase {
            name: "divfree",
            divergence_free: true,
            gamma1: SideSet::NONE,
            exact_from_k: None,
            u: curl_u,
            grad: curl_grad,
            hess: curl_hess,
        },
        ManufacturedCase {
            name: "bubble",
            divergence_free: false,
            gamma1: SideSet::NONE,
            exact_from_k: Some(2),
            u: bubble_u,
            grad: bubble_grad,
            hess: bubble_hess,
        },
    ]
}

pub fn case_by_name(name: &str) -> Result<ManufacturedCase> {
    manufactured_catalog()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown manufactured case '{name}'")))
}

/// Residual bound for the consistency guard: `SOURCE_RESIDUAL_TOL`, raised to the round-off floor
/// `64 eps / pivot ratio` of the local solves when those are ill conditioned (large `lambda_S`).
pub fn residual_tolerance(disc: &Discretization) -> f64 {
    let floor = 64.0 * f64::EPSILON / disc.cache.min_pivot_ratio().max(f64::MIN_POSITIVE);
    SOURCE_RESIDUAL_TOL.max(floor)
}

/// Solves the source problem for a load given as element coefficients `(f, psi)`.
pub fn solve_source_projected(disc: &Discretization, load: &[f64]) -> Result<FieldSolution> {
    if load.len() != disc.dim_w() {
        return Err(Error::InvalidInput("load coefficient vector has the wrong length".into()));
    }
    let b = disc.system.load(&disc.cache, load);
    let gamma = disc.system.solve(&b);
    let field = recover_fields(&disc.system, &disc.cache, &gamma, RecoveryMode::Source(load))?;
    let res = disc.residual(&field, load);
    if res.max() > residual_tolerance(disc) {
        return Err(Error::Consistency(format!(
            "source solution violates the hybrid equations: {res:?}"
        )));
    }
    Ok(field)
}

/// Solves the source problem for a closed-form load.
pub fn solve_source(disc: &Discretization, f: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync)) -> Result<FieldSolution> {
    solve_source_projected(disc, &disc.project_load(f))
}
