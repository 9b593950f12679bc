//! Convergence, locking and initial-guess studies.

use std::fmt;
use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::norms::{discrete_h1_norm, field_errors, FieldErrors};
use crate::eig::{solve_eigen, NewtonOptions};
use crate::error::{Error, Result};
use crate::fe::{eval_field, eval_field_grad, family_at, Tabulation};
use crate::hybrid::{Discretization, FieldSolution};
use crate::material::MaterialParams;
use crate::mesh::{generate_structured_alfeld, Mesh, PointLocator, SideSet};
use crate::postprocess::{postprocess_local, PostField};
use crate::source::{case_by_name, solve_source};

/// Errors below this are reported as exact and carry no order.
pub const EXACT_TOL: f64 = 1e-13;

/// Common settings of all studies.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub k: usize,
    pub params: MaterialParams,
    /// Cells per side of each level.
    pub levels: Vec<usize>,
    /// Manufactured case for source studies.
    pub case: String,
    /// Overrides the case boundary split when set.
    pub gamma1: Option<SideSet>,
    pub postprocess: bool,
    /// Number of discrete eigenvalues forming the tracked cluster.
    pub multiplicity: usize,
    /// Extra level used only as the reference eigenspace; the finest study level otherwise.
    pub reference_level: Option<usize>,
    pub newton: NewtonOptions,
    pub quadrature_degree: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            k: 1,
            params: MaterialParams::default(),
            levels: vec![2, 4, 8, 16],
            case: "smooth".into(),
            gamma1: None,
            postprocess: true,
            multiplicity: 1,
            reference_level: None,
            newton: NewtonOptions::default(),
            quadrature_degree: None,
        }
    }
}

/// Observed order between consecutive levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Value(f64),
    Exact,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Value(v) => write!(f, "{v:.4}"),
            Order::Exact => f.write_str("exact"),
        }
    }
}

impl Order {
    pub fn value(&self) -> Option<f64> {
        match self {
            Order::Value(v) => Some(*v),
            Order::Exact => None,
        }
    }
}

/// `log2(e0 / e1)` scaled by the actual mesh-size ratio.
pub fn observed_order(e0: f64, e1: f64, h0: f64, h1: f64) -> Order {
    if e0 < EXACT_TOL && e1 < EXACT_TOL {
        Order::Exact
    } else {
        Order::Value((e0 / e1).ln() / (h0 / h1).ln())
    }
}

/// Orders between consecutive entries; `None` where an error is missing.
pub fn orders(errors: &[Option<f64>], h: &[f64]) -> Vec<Option<Order>> {
    let mut out = vec![None];
    for i in 1..errors.len() {
        out.push(match (errors[i - 1], errors[i]) {
            (Some(a), Some(b)) => Some(observed_order(a, b, h[i - 1], h[i])),
            _ => None,
        });
    }
    out
}

/// One level of a study.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub h: f64,
    pub n_elem: usize,
    pub n_dofs: usize,
    pub err_sigma_l2: Option<f64>,
    pub err_rho_l2: Option<f64>,
    pub err_u_l2: Option<f64>,
    #[serde(rename = "err_Pu_1h")]
    pub err_pu_1h: Option<f64>,
    pub err_post_h1: Option<f64>,
    pub err_post_l2: Option<f64>,
    pub lambda_h: Option<f64>,
    pub lambda_tilde: Option<f64>,
    pub err_lambda: Option<f64>,
    pub gap: Option<f64>,
    pub newton_iters: Option<usize>,
}

impl LevelRecord {
    fn with_errors(mut self, e: &FieldErrors) -> Self {
        self.err_sigma_l2 = Some(e.sigma_l2);
        self.err_rho_l2 = Some(e.rho_l2);
        self.err_u_l2 = Some(e.u_l2);
        self.err_pu_1h = Some(e.pu_1h);
        self.err_post_h1 = e.post_h1;
        self.err_post_l2 = e.post_l2;
        self
    }
}

/// Names of the error columns, in CSV order.
pub const ERROR_COLUMNS: [&str; 8] = [
    "sigma_l2", "rho_l2", "u_l2", "Pu_1h", "post_h1", "post_l2", "lambda", "gap",
];

/// Per-level records with observed orders.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub study: String,
    pub records: Vec<LevelRecord>,
    /// Richardson reference from the three finest levels.
    pub reference_lambda: Option<f64>,
    /// The same extrapolation from the three levels below the finest one, for auditing.
    pub reference_lambda_coarser: Option<f64>,
}

impl ErrorReport {
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let get = |r: &LevelRecord| match name {
            "sigma_l2" => Ok(r.err_sigma_l2),
            "rho_l2" => Ok(r.err_rho_l2),
            "u_l2" => Ok(r.err_u_l2),
            "Pu_1h" => Ok(r.err_pu_1h),
            "post_h1" => Ok(r.err_post_h1),
            "post_l2" => Ok(r.err_post_l2),
            "lambda" => Ok(r.err_lambda),
            "gap" => Ok(r.gap),
            _ => Err(Error::InvalidInput(format!("unknown error column '{name}'"))),
        };
        self.records.iter().map(get).collect()
    }

    pub fn h(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.h).collect()
    }

    pub fn orders(&self, name: &str) -> Result<Vec<Option<Order>>> {
        Ok(orders(&self.column(name)?, &self.h()))
    }

    /// Order between the two finest levels.
    pub fn last_order(&self, name: &str) -> Result<Option<Order>> {
        Ok(self.orders(name)?.last().copied().flatten())
    }

    /// CSV with the raw values followed by one order column per error column.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "level",
            "h",
            "n_elem",
            "n_dofs",
            "err_sigma_l2",
            "err_rho_l2",
            "err_u_l2",
            "err_Pu_1h",
            "err_post_h1",
            "err_post_l2",
            "lambda_h",
            "lambda_tilde",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(ERROR_COLUMNS.iter().map(|c| format!("order_{c}")));
        header.extend(["err_lambda", "gap", "newton_iters", "lambda_ref"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        let ords: Vec<Vec<Option<Order>>> = ERROR_COLUMNS
            .iter()
            .map(|c| self.orders(c))
            .collect::<Result<_>>()?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![
                r.level.to_string(),
                format!("{:.12e}", r.h),
                r.n_elem.to_string(),
                r.n_dofs.to_string(),
                opt(r.err_sigma_l2),
                opt(r.err_rho_l2),
                opt(r.err_u_l2),
                opt(r.err_pu_1h),
                opt(r.err_post_h1),
                opt(r.err_post_l2),
                opt(r.lambda_h),
                opt(r.lambda_tilde),
            ];
            row.extend(ords.iter().map(|o| o[i].map(|o| o.to_string()).unwrap_or_default()));
            row.push(opt(r.err_lambda));
            row.push(opt(r.gap));
            row.push(r.newton_iters.map(|n| n.to_string()).unwrap_or_default());
            row.push(opt(self.reference_lambda));
            w.write_record(&row).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
            .map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

fn check_levels(levels: &[usize], min: usize) -> Result<()> {
    if levels.len() < min {
        return Err(Error::InvalidInput(format!("a study needs at least {min} levels")));
    }
    if levels.iter().any(|&n| n == 0) {
        return Err(Error::InvalidInput("cells per side must be positive".into()));
    }
    Ok(())
}

fn level_mesh(n: usize, gamma1: SideSet) -> Result<Mesh> {
    generate_structured_alfeld(n, gamma1)
}

/// Source convergence against a manufactured solution.
pub fn run_source_convergence(cfg: &StudyConfig) -> Result<ErrorReport> {
    check_levels(&cfg.levels, 2)?;
    let case = case_by_name(&cfg.case)?;
    let params = cfg.params;
    let mut records = Vec::new();
    for &n in &cfg.levels {
        let mesh = level_mesh(n, cfg.gamma1.unwrap_or(case.gamma1))?;
        let disc = Discretization::new(mesh, cfg.k, &params)?;
        let field = solve_source(&disc, &|x| case.load(x, &params))?;
        let post = if cfg.postprocess {
            Some(postprocess_local(&disc.mesh, &field, &params)?)
        } else {
            None
        };
        let e = field_errors(&disc.mesh, &field, post.as_ref(), &case, &params, cfg.quadrature_degree)?;
        records.push(
            LevelRecord {
                level: n,
                h: disc.mesh.h_max(),
                n_elem: disc.mesh.n_elements(),
                n_dofs: disc.n_dofs(),
                ..Default::default()
            }
            .with_errors(&e),
        );
    }
    Ok(ErrorReport {
        study: "convergence-source".into(),
        records,
        reference_lambda: None,
        reference_lambda_coarser: None,
    })
}

/// Extrapolated limit of `values` at mesh sizes `h`, eliminating `h^p` and `h^{p+1}` from the
/// last three entries.
pub fn richardson(values: &[f64], h: &[f64], p: f64) -> Result<f64> {
    if values.len() < 3 || values.len() != h.len() {
        return Err(Error::InvalidInput("Richardson extrapolation needs three levels".into()));
    }
    let n = values.len();
    let scale = h[n - 1];
    let m = Mat::from_fn(3, 3, |i, j| {
        let s = h[n - 3 + i] / scale;
        match j {
            0 => 1.0,
            1 => s.powf(p),
            _ => s.powf(p + 1.0),
        }
    });
    let rhs = Mat::from_fn(3, 1, |i, _| values[n - 3 + i]);
    let x = m.partial_piv_lu().solve(&rhs);
    Ok(x[(0, 0)])
}

/// A solved level of an eigen study.
pub struct EigenLevel {
    pub disc: Discretization,
    pub lambda_h: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    pub iterations: usize,
    pub post: Vec<PostField>,
}

/// Solves the first `count` eigenpairs on one level and postprocesses them.
pub fn solve_eigen_level(cfg: &StudyConfig, n: usize, count: usize, postprocess: bool) -> Result<EigenLevel> {
    let mesh = level_mesh(n, cfg.gamma1.unwrap_or(SideSet::NONE))?;
    let disc = Discretization::new(mesh, cfg.k, &cfg.params)?;
    let res = solve_eigen(&disc, count, &cfg.newton)?;
    let post = if postprocess {
        res.iter()
            .map(|r| postprocess_local(&disc.mesh, &r.field, &cfg.params))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let mut lambda_tilde: Vec<f64> = res.iter().map(|r| r.lambda_tilde).collect();
    lambda_tilde.sort_by(f64::total_cmp);
    Ok(EigenLevel {
        lambda_h: res.iter().map(|r| r.lambda_h).collect(),
        lambda_tilde,
        iterations: res.iter().map(|r| r.iterations).max().unwrap_or(0),
        post,
        disc,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Distance between the span of `coarse` and the span of `fine` (orthonormalized), measured as
/// `(sum_j |e_j|^2)^{1/2}` with `e_j` the L²-projection defect of the `j`-th fine function;
/// returns the broken H¹ seminorm and the L² norm. Integrals use the coarse mesh with the fine
/// fields located pointwise. With `region` set, the norms only integrate over points it accepts.
pub fn eigenspace_errors(
    coarse_mesh: &Mesh,
    coarse: &[PostField],
    fine_mesh: &Mesh,
    fine: &[PostField],
    degree: usize,
    region: Option<&(dyn Fn([f64; 2]) -> bool + Sync)>,
) -> Result<(f64, f64)> {
    let m = coarse.len();
    if m == 0 || fine.len() != m {
        return Err(Error::InvalidInput("eigenspaces must have equal positive dimension".into()));
    }
    let dims = coarse[0].dims;
    let fdims = fine[0].dims;
    let tab = Tabulation::new(dims.k, degree)?;
    let locator = PointLocator::new(fine_mesh);
    // values and gradients of every function at every quadrature point of the coarse mesh
    struct Sample {
        w: f64,
        x: [f64; 2],
        c: Vec<([f64; 2], [[f64; 2]; 2])>,
        f: Vec<([f64; 2], [[f64; 2]; 2])>,
    }
    let samples: Vec<Sample> = (0..coarse_mesh.n_elements())
        .into_par_iter()
        .map(|e| -> Result<Vec<Sample>> {
            let g = coarse_mesh.geometry(e);
            let mut fv = vec![0.0; fdims.n_top];
            let mut fg = vec![[0.0; 2]; fdims.n_top];
            let mut out = Vec::with_capacity(tab.rule.len());
            for (q, (p, w)) in tab.rule.iter().enumerate() {
                let x = g.to_physical(p);
                let eval = |c: &[f64], gg: &crate::mesh::ElementGeometry, vals: &[f64], grads: &[[f64; 2]]| {
                    let mut v = [0.0; 2];
                    let mut d = [[0.0; 2]; 2];
                    eval_field(c, 2, dims.n_top, gg, vals, &mut v);
                    eval_field_grad(c, 2, dims.n_top, gg, grads, &mut d);
                    (v, d)
                };
                let c = coarse
                    .iter()
                    .map(|pf| eval(pf.element(e), &g, tab.values_at(q), tab.grads_at(q)))
                    .collect();
                let (fe, xi) = locator
                    .locate(x)
                    .ok_or_else(|| Error::InvalidMesh(format!("point {x:?} is outside the reference mesh")))?;
                let fgeo = fine_mesh.geometry(fe);
                family_at(fdims.k, xi, &mut fv, Some(&mut fg));
                let f = fine.iter().map(|pf| eval(pf.element(fe), &fgeo, &fv, &fg)).collect();
                out.push(Sample { w: w * g.det, x, c, f });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let dot = |a: &[f64; 2], b: &[f64; 2]| a[0] * b[0] + a[1] * b[1];
    let inside = |x: [f64; 2]| region.is_none_or(|r| r(x));
    let gc = Mat::from_fn(m, m, |i, j| samples.iter().map(|s| s.w * dot(&s.c[i].0, &s.c[j].0)).sum::<f64>());
    let gf = Mat::from_fn(m, m, |i, j| samples.iter().map(|s| s.w * dot(&s.f[i].0, &s.f[j].0)).sum::<f64>());
    let cross = Mat::from_fn(m, m, |i, j| samples.iter().map(|s| s.w * dot(&s.f[i].0, &s.c[j].0)).sum::<f64>());
    // orthonormalize the fine functions: v' = v L^{-T}
    let l = gf
        .llt(faer::Side::Lower)
        .map_err(|e| Error::Consistency(format!("reference eigenspace is degenerate: {e:?}")))?
        .L()
        .to_owned();
    let mut linv_t = Mat::<f64>::identity(m, m);
    l.transpose().solve_upper_triangular_in_place(&mut linv_t);
    // projection coefficients of each orthonormalized fine function onto the coarse span
    let alpha = gc.partial_piv_lu().solve(&(cross.transpose() * &linv_t));
    let (mut h1, mut l2) = (0.0, 0.0);
    for s in samples.iter().filter(|s| inside(s.x)) {
        for j in 0..m {
            let mut v = [0.0; 2];
            let mut d = [[0.0; 2]; 2];
            for i in 0..m {
                let c = linv_t[(i, j)];
                for r in 0..2 {
                    v[r] += c * s.f[i].0[r];
                    for t in 0..2 {
                        d[r][t] += c * s.f[i].1[r][t];
                    }
                }
            }
            for i in 0..m {
                let a = alpha[(i, j)];
                for r in 0..2 {
                    v[r] -= a * s.c[i].0[r];
                    for t in 0..2 {
                        d[r][t] -= a * s.c[i].1[r][t];
                    }
                }
            }
            l2 += s.w * dot(&v, &v);
            h1 += s.w * (dot(&d[0], &d[0]) + dot(&d[1], &d[1]));
        }
    }
    Ok((h1.sqrt(), l2.sqrt()))
}

/// Eigenvalue and postprocessed eigenspace convergence for the lowest cluster.
pub fn run_eigen_convergence(cfg: &StudyConfig) -> Result<ErrorReport> {
    check_levels(&cfg.levels, 3)?;
    let m = cfg.multiplicity.max(1);
    let mut levels = Vec::new();
    for &n in &cfg.levels {
        levels.push(solve_eigen_level(cfg, n, m, cfg.postprocess)?);
    }
    let h: Vec<f64> = levels.iter().map(|l| l.disc.mesh.h_max()).collect();
    let lam: Vec<f64> = levels.iter().map(|l| mean(&l.lambda_h[..m])).collect();
    let p = (cfg.k + 2) as f64;
    let reference = richardson(&lam, &h, p)?;
    let coarser = if lam.len() >= 4 {
        Some(richardson(&lam[..lam.len() - 1], &h[..h.len() - 1], p)?)
    } else {
        None
    };
    let degree = cfg.quadrature_degree.unwrap_or(crate::analysis::norms::error_degree(cfg.k));
    let extra = match cfg.reference_level {
        Some(n) if cfg.postprocess => Some(solve_eigen_level(cfg, n, m, true)?),
        _ => None,
    };
    let mut records = Vec::new();
    for (i, l) in levels.iter().enumerate() {
        let (post_h1, post_l2) = if cfg.postprocess {
            let reference_level = extra.as_ref().unwrap_or(levels.last().expect("levels"));
            if extra.is_none() && i + 1 == levels.len() {
                (None, None)
            } else {
                let (a, b) = eigenspace_errors(&l.disc.mesh, &l.post, &reference_level.disc.mesh, &reference_level.post, degree, None)?;
                (Some(a), Some(b))
            }
        } else {
            (None, None)
        };
        let lh = lam[i];
        let lt = mean(&l.lambda_tilde[..m]);
        records.push(LevelRecord {
            level: cfg.levels[i],
            h: h[i],
            n_elem: l.disc.mesh.n_elements(),
            n_dofs: l.disc.n_dofs(),
            err_post_h1: post_h1,
            err_post_l2: post_l2,
            lambda_h: Some(lh),
            lambda_tilde: Some(lt),
            err_lambda: Some((lh - reference).abs()),
            gap: Some((l.lambda_h[0] - l.lambda_tilde[0]).abs()),
            newton_iters: Some(l.iterations),
            ..Default::default()
        });
    }
    Ok(ErrorReport {
        study: "convergence-eigen".into(),
        records,
        reference_lambda: Some(reference),
        reference_lambda_coarser: coarser,
    })
}

/// `|lambda_h - lambda_tilde_h|` of the first eigenvalue per level.
pub fn run_gap_study(cfg: &StudyConfig) -> Result<ErrorReport> {
    check_levels(&cfg.levels, 3)?;
    let mut records = Vec::new();
    for &n in &cfg.levels {
        let l = solve_eigen_level(cfg, n, 1, false)?;
        records.push(LevelRecord {
            level: n,
            h: l.disc.mesh.h_max(),
            n_elem: l.disc.mesh.n_elements(),
            n_dofs: l.disc.n_dofs(),
            lambda_h: Some(l.lambda_h[0]),
            lambda_tilde: Some(l.lambda_tilde[0]),
            gap: Some((l.lambda_h[0] - l.lambda_tilde[0]).abs()),
            newton_iters: Some(l.iterations),
            ..Default::default()
        });
    }
    Ok(ErrorReport {
        study: "gap".into(),
        records,
        reference_lambda: None,
        reference_lambda_coarser: None,
    })
}

/// One value of `lambda_S` in a locking sweep.
#[derive(Debug, Clone, Serialize)]
pub struct LockingRecord {
    pub lambda_s: f64,
    pub err_sigma_l2: f64,
    pub err_rho_l2: f64,
    pub err_u_l2: f64,
    #[serde(rename = "err_Pu_1h")]
    pub err_pu_1h: f64,
    pub err_post_h1: Option<f64>,
    pub err_post_l2: Option<f64>,
    /// `|u_h|_{1,h}^2 / |A sigma_h|_0^2`.
    pub stability_ratio: f64,
    pub lambda_h: Option<f64>,
}

/// Results of a sweep over `lambda_S` on a fixed mesh.
#[derive(Debug, Clone)]
pub struct LockingReport {
    pub level: usize,
    pub records: Vec<LockingRecord>,
}

impl LockingReport {
    /// `max / min` of a column over the sweep.
    pub fn spread(&self, f: impl Fn(&LockingRecord) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter_map(f).collect();
        if v.is_empty() {
            return None;
        }
        let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
        Some(mx / mn)
    }

    /// Spreads of every error column and of the stability ratio.
    pub fn spreads(&self) -> Vec<(&'static str, f64)> {
        let cols: [(&'static str, fn(&LockingRecord) -> Option<f64>); 7] = [
            ("err_sigma_l2", |r| Some(r.err_sigma_l2)),
            ("err_rho_l2", |r| Some(r.err_rho_l2)),
            ("err_u_l2", |r| Some(r.err_u_l2)),
            ("err_Pu_1h", |r| Some(r.err_pu_1h)),
            ("err_post_h1", |r| r.err_post_h1),
            ("err_post_l2", |r| r.err_post_l2),
            ("stability_ratio", |r| Some(r.stability_ratio)),
        ];
        cols.iter().filter_map(|(n, f)| self.spread(f).map(|s| (*n, s))).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
            .map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// `|A sigma_h|_0^2` for stresses in the orthonormal broken basis.
pub fn compliance_norm_sq(field: &FieldSolution, params: &MaterialParams) -> f64 {
    let c = params.compliance_matrix();
    let np = field.dims.np;
    (0..field.n_elements())
        .map(|e| {
            let s = field.sigma_e(e);
            (0..np)
                .map(|b| {
                    (0..4)
                        .map(|i| (0..4).map(|j| c[i][j] * s[j * np + b]).sum::<f64>().powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>()
        })
        .sum()
}

/// Sweeps `lambda_S` on the first configured level; the case must be divergence free.
pub fn run_locking_study(cfg: &StudyConfig, lambdas: &[f64], with_eigen: bool) -> Result<LockingReport> {
    let case = case_by_name(&cfg.case)?;
    if !case.divergence_free {
        return Err(Error::InvalidInput(format!(
            "locking study needs a divergence-free case, '{}' is not",
            case.name
        )));
    }
    let n = *cfg.levels.first().ok_or_else(|| Error::InvalidInput("no level given".into()))?;
    let mut records = Vec::new();
    for &ls in lambdas {
        let params = MaterialParams::new(cfg.params.mu_s, ls, cfg.params.rho_s)?;
        let mesh = level_mesh(n, cfg.gamma1.unwrap_or(case.gamma1))?;
        let disc = Discretization::new(mesh, cfg.k, &params)?;
        let f = |x| case.load(x, &params);
        let field = solve_source(&disc, &f)?;
        let post = if cfg.postprocess {
            Some(postprocess_local(&disc.mesh, &field, &params)?)
        } else {
            None
        };
        let e = field_errors(&disc.mesh, &field, post.as_ref(), &case, &params, cfg.quadrature_degree)?;
        let stability_ratio = discrete_h1_norm(&disc.mesh, &disc.dims(), &field.u).powi(2) / compliance_norm_sq(&field, &params);
        let lambda_h = if with_eigen {
            Some(solve_eigen(&disc, 1, &cfg.newton)?[0].lambda_h)
        } else {
            None
        };
        records.push(LockingRecord {
            lambda_s: ls,
            err_sigma_l2: e.sigma_l2,
            err_rho_l2: e.rho_l2,
            err_u_l2: e.u_l2,
            err_pu_1h: e.pu_1h,
            err_post_h1: e.post_h1,
            err_post_l2: e.post_l2,
            stability_ratio,
            lambda_h,
        });
    }
    Ok(LockingReport { level: n, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_formatting() {
        assert_eq!(observed_order(1e-14, 1e-15, 0.5, 0.25), Order::Exact);
        let o = observed_order(8.0, 1.0, 0.5, 0.25).value().unwrap();
        assert!((o - 3.0).abs() < 1e-14);
        assert_eq!(Order::Exact.to_string(), "exact");
    }

    #[test]
    fn richardson_recovers_model_sequence() {
        let h = [0.5, 0.25, 0.125, 0.0625];
        let v: Vec<f64> = h.iter().map(|h: &f64| 2.0 + 3.0 * h.powi(3) - 5.0 * h.powi(4)).collect();
        assert!((richardson(&v, &h, 3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((richardson(&v[..3], &h[..3], 3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(richardson(&v[..2], &h[..2], 3.0).is_err());
    }

    #[test]
    fn csv_has_schema_prefix() {
        let cfg = StudyConfig {
            levels: vec![1, 2],
            ..Default::default()
        };
        let rep = run_source_convergence(&cfg).unwrap();
        let csv = rep.to_csv().unwrap();
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with(
            "level,h,n_elem,n_dofs,err_sigma_l2,err_rho_l2,err_u_l2,err_Pu_1h,err_post_h1,err_post_l2,lambda_h,lambda_tilde,order_"
        ));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn identical_spaces_have_zero_distance() {
        let cfg = StudyConfig::default();
        let l = solve_eigen_level(&cfg, 2, 2, true).unwrap();
        let (h1, l2) = eigenspace_errors(&l.disc.mesh, &l.post, &l.disc.mesh, &l.post, 10, None).unwrap();
        assert!(h1 < 1e-9 && l2 < 1e-10, "{h1} {l2}");
    }

    #[test]
    fn locking_requires_divergence_free_case() {
        let cfg = StudyConfig::default();
        assert!(run_locking_study(&cfg, &[1.0], false).is_err());
    }
}
