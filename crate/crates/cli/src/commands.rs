//! Command implementations and exit-code mapping.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;
use wsym_core::analysis::norms::{field_errors, FieldErrors};
use wsym_core::analysis::studies::{run_eigen_convergence, run_gap_study, run_locking_study, run_source_convergence, ErrorReport};
use wsym_core::hybrid::HybridResidual;
use wsym_core::mesh::{alfeld_split, mesh_to_string, read_mesh};
use wsym_core::postprocess::postprocess_local;
use wsym_core::source::{case_by_name, residual_tolerance, solve_source_projected};
use wsym_core::{
    generate_structured_alfeld, generate_structured_macro, run_check_suite, solve_eigen, Discretization, FieldSolution,
    MaterialParams, Mesh, SideSet,
};

use crate::config::{Config, ConfigError, LoadSpec, MeshSource, Problem};
use crate::load::LoadFunction;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] wsym_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    /// 2 configuration or input error, 3 solver failure, 4 failed check.
    pub fn exit_code(&self) -> i32 {
        use wsym_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(E::InvalidInput(_) | E::MeshParse { .. } | E::InvalidMesh(_) | E::UnsupportedOrder(_)) => 2,
            CliError::Solver(_) | CliError::Output { .. } | CliError::Failed(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Output {
            path: parent.into(),
            source,
        })?;
    }
    std::fs::write(path, content).map_err(|source| CliError::Output { path: path.into(), source })
}

/// Creates the output directory and echoes the expanded configuration into it.
fn prepare_out(cfg: &Config) -> CliResult<Option<PathBuf>> {
    let Some(dir) = cfg.out.clone() else {
        return Ok(None);
    };
    write_file(&dir.join("config.txt"), &cfg.to_text())?;
    Ok(Some(dir))
}

fn require_out(cfg: &Config, command: &str) -> CliResult<PathBuf> {
    prepare_out(cfg)?.ok_or_else(|| ConfigError::Invalid(format!("{command} needs an output directory (--out or 'out')")).into())
}

pub fn build_mesh(cfg: &Config) -> CliResult<Mesh> {
    Ok(match &cfg.mesh {
        MeshSource::Builtin(n) => generate_structured_alfeld(*n, cfg.gamma1)?,
        MeshSource::File(p) => {
            let m = read_mesh(p)?;
            if cfg.split {
                alfeld_split(&m)?
            } else {
                m
            }
        }
    })
}

pub fn mesh_gen(cfg: &Config, n: Option<usize>, gamma1: Option<SideSet>, macro_only: bool, out: Option<&Path>) -> CliResult<String> {
    let n = match (n, &cfg.mesh) {
        (Some(n), _) => n,
        (None, MeshSource::Builtin(n)) => *n,
        (None, MeshSource::File(_)) => {
            return Err(ConfigError::Invalid("mesh gen needs --n or 'mesh = builtin:<n>'".into()).into());
        }
    };
    if n == 0 {
        return Err(ConfigError::Invalid("cells per side must be positive".into()).into());
    }
    let gamma1 = gamma1.unwrap_or(cfg.gamma1);
    let mesh = if macro_only {
        generate_structured_macro(n, gamma1)?
    } else {
        generate_structured_alfeld(n, gamma1)?
    };
    let text = mesh_to_string(&mesh);
    if let Some(path) = out {
        write_file(path, &text)?;
        let mut echo = cfg.clone();
        echo.mesh = MeshSource::Builtin(n);
        echo.gamma1 = gamma1;
        let mut p = path.as_os_str().to_owned();
        p.push(".config.txt");
        write_file(Path::new(&p), &echo.to_text())?;
    }
    Ok(text)
}

fn project(disc: &Discretization, spec: &LoadSpec, params: &MaterialParams) -> CliResult<(Vec<f64>, Option<wsym_core::ManufacturedCase>)> {
    match spec {
        LoadSpec::Case(name) => {
            let case = case_by_name(name)?;
            let load = disc.project_load(&|x| case.load(x, params));
            Ok((load, Some(case)))
        }
        LoadSpec::File(path) => {
            let f = LoadFunction::from_file(path)?;
            let load = disc.project_load(&|x| f.eval(x));
            if load.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::Invalid(format!("load in {} is not finite on the mesh", path.display())).into());
            }
            Ok((load, None))
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SourceSummary {
    pub k: usize,
    pub n_elem: usize,
    pub n_dofs: usize,
    pub dim_w: usize,
    pub h_max: f64,
    pub h_min: f64,
    pub load: String,
    pub params: MaterialParams,
    pub residual: HybridResidual,
    pub residual_bound: f64,
    pub u_l2_norm: f64,
    pub errors: Option<FieldErrors>,
    pub post_moment_defect: Option<f64>,
}

fn coefficient_csv(field: &FieldSolution) -> CliResult<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        block: &'a str,
        entity: usize,
        index: usize,
        value: f64,
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Failed(format!("csv: {e}"));
    for e in 0..field.n_elements() {
        for (block, vals) in [("sigma", field.sigma_e(e)), ("u", field.u_e(e)), ("rho", field.rho_e(e))] {
            for (index, &value) in vals.iter().enumerate() {
                w.serialize(Row { block, entity: e, index, value }).map_err(csv_err)?;
            }
        }
    }
    for (index, &value) in field.gamma.iter().enumerate() {
        w.serialize(Row {
            block: "gamma",
            entity: 0,
            index,
            value,
        })
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Failed(e.to_string()))
}

pub fn solve_source_cmd(cfg: &Config, dump: bool) -> CliResult<String> {
    let out = prepare_out(cfg)?;
    if dump && out.is_none() {
        return Err(ConfigError::Invalid("--dump needs an output directory".into()).into());
    }
    let disc = Discretization::new(build_mesh(cfg)?, cfg.k, &cfg.params)?;
    let spec = cfg.load_spec("smooth");
    let (load, case) = project(&disc, &spec, &cfg.params)?;
    let field = solve_source_projected(&disc, &load)?;
    let residual = disc.residual(&field, &load);
    let bound = cfg.residual_tol.max(residual_tolerance(&disc));
    if residual.max() > bound {
        return Err(CliError::Failed(format!("hybrid residual {:e} exceeds {bound:e}", residual.max())));
    }
    let post = if cfg.postprocess {
        Some(postprocess_local(&disc.mesh, &field, &cfg.params)?)
    } else {
        None
    };
    let errors = match &case {
        Some(c) => Some(field_errors(&disc.mesh, &field, post.as_ref(), c, &cfg.params, None)?),
        None => None,
    };
    let summary = SourceSummary {
        k: cfg.k,
        n_elem: disc.mesh.n_elements(),
        n_dofs: disc.n_dofs(),
        dim_w: disc.dim_w(),
        h_max: disc.mesh.h_max(),
        h_min: disc.mesh.h_min(),
        load: match &spec {
            LoadSpec::Case(c) => c.clone(),
            LoadSpec::File(p) => format!("file:{}", p.display()),
        },
        params: cfg.params,
        residual,
        residual_bound: bound,
        u_l2_norm: field.u_l2(),
        errors,
        post_moment_defect: post.as_ref().map(|p| p.moment_defect(&field)),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Failed(e.to_string()))?;
    if let Some(dir) = out {
        write_file(&dir.join("summary.json"), &json)?;
        if dump {
            write_file(&dir.join("coefficients.csv"), &coefficient_csv(&field)?)?;
        }
    }
    Ok(json)
}

#[derive(Debug, Serialize)]
struct EigRowPost {
    index: usize,
    lambda_tilde: f64,
    lambda_h: f64,
    newton_iters: usize,
    residual: f64,
    min_resolvent_sigma: f64,
    post_moment_defect: f64,
}

pub fn solve_eig_cmd(cfg: &Config) -> CliResult<String> {
    let out = prepare_out(cfg)?;
    let disc = Discretization::new(build_mesh(cfg)?, cfg.k, &cfg.params)?;
    let res = solve_eigen(&disc, cfg.num_eigs, &cfg.newton())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Failed(format!("csv: {e}"));
    for r in &res {
        if cfg.postprocess {
            let post = postprocess_local(&disc.mesh, &r.field, &cfg.params)?;
            let row = r.row();
            w.serialize(EigRowPost {
                index: row.index,
                lambda_tilde: row.lambda_tilde,
                lambda_h: row.lambda_h,
                newton_iters: row.newton_iters,
                residual: row.residual,
                min_resolvent_sigma: row.min_resolvent_sigma,
                post_moment_defect: post.moment_defect(&r.field),
            })
            .map_err(csv_err)?;
        } else {
            w.serialize(r.row()).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(format!("csv: {e}")))?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::Failed(e.to_string()))?;
    if let Some(dir) = out {
        write_file(&dir.join("eigenvalues.csv"), &text)?;
    }
    Ok(text)
}

fn order_summary(report: &ErrorReport, columns: &[&str]) -> CliResult<String> {
    let mut s = String::new();
    for c in columns {
        if let Some(o) = report.last_order(c)? {
            s.push_str(&format!("{c}: order {o}\n"));
        }
    }
    Ok(s)
}

pub fn study_convergence_cmd(cfg: &Config) -> CliResult<String> {
    let dir = require_out(cfg, "study convergence")?;
    let study = cfg.study("smooth")?;
    let report = match cfg.problem {
        Problem::Source => run_source_convergence(&study)?,
        Problem::Eigen => run_eigen_convergence(&study)?,
    };
    write_file(&dir.join("convergence.csv"), &report.to_csv()?)?;
    order_summary(&report, &["sigma_l2", "rho_l2", "u_l2", "Pu_1h", "post_h1", "post_l2", "lambda"])
}

pub fn study_gap_cmd(cfg: &Config) -> CliResult<String> {
    let dir = require_out(cfg, "study gap")?;
    let report = run_gap_study(&cfg.study("smooth")?)?;
    write_file(&dir.join("gap.csv"), &report.to_csv()?)?;
    order_summary(&report, &["gap"])
}

pub fn study_locking_cmd(cfg: &Config) -> CliResult<String> {
    let dir = require_out(cfg, "study locking")?;
    let mut study = cfg.study("divfree")?;
    study.levels = vec![cfg.locking_level];
    let report = run_locking_study(&study, &cfg.lambdas, cfg.problem == Problem::Eigen)?;
    write_file(&dir.join("locking.csv"), &report.to_csv()?)?;
    Ok(report
        .spreads()
        .iter()
        .map(|(c, s)| format!("{c}: max/min over the sweep {s:.4}\n"))
        .collect())
}

pub fn check_cmd(cfg: &Config, negative_control: bool) -> CliResult<String> {
    let out = prepare_out(cfg)?;
    let report = run_check_suite(&cfg.params, negative_control);
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Failed(e.to_string()))?;
    if let Some(dir) = out {
        write_file(&dir.join("check.json"), &json)?;
    }
    if !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), "{json}");
        return Err(CliError::CheckFailed(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(json)
}
