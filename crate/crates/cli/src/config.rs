//! Flat `key = value` configuration files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;
use wsym_core::analysis::studies::StudyConfig;
use wsym_core::eig::NewtonOptions;
use wsym_core::{MaterialParams, SideSet};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("duplicate config key '{0}'")]
    Duplicate(String),
    #[error("{key}: cannot parse '{value}' as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Builtin(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Source,
    Eigen,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadSpec {
    Case(String),
    File(PathBuf),
}

/// Fully defaulted run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub k: usize,
    pub mesh: MeshSource,
    /// Apply the barycentric split to meshes read from file.
    pub split: bool,
    pub gamma1: SideSet,
    pub params: MaterialParams,
    pub problem: Problem,
    /// `None` selects `smooth`, or `divfree` for locking studies.
    pub case: Option<LoadSpec>,
    pub num_eigs: usize,
    pub newton_rtol: f64,
    pub residual_tol: f64,
    pub levels: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub locking_level: usize,
    pub multiplicity: usize,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: u64,
    pub postprocess: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            k: 1,
            mesh: MeshSource::Builtin(4),
            split: false,
            gamma1: SideSet::NONE,
            params: MaterialParams::default(),
            problem: Problem::Source,
            case: None,
            num_eigs: 3,
            newton_rtol: 1e-10,
            residual_tol: 1e-10,
            levels: vec![2, 4, 8, 16],
            lambdas: vec![1.0, 1e2, 1e4, 1e6],
            locking_level: 8,
            multiplicity: 1,
            out: None,
            threads: None,
            seed: 7,
            postprocess: false,
        }
    }
}

const KEYS: [&str; 20] = [
    "k",
    "mesh",
    "split",
    "gamma1",
    "mu_s",
    "lambda_s",
    "rho_s",
    "problem",
    "case",
    "num_eigs",
    "newton_rtol",
    "residual_tol",
    "levels",
    "lambdas",
    "locking_level",
    "multiplicity",
    "out",
    "threads",
    "seed",
    "postprocess",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Type {
        key: key.into(),
        value: value.into(),
        expected,
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Type {
            key: key.into(),
            value: value.into(),
            expected: "a boolean",
        }),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, expected: &'static str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s, expected))
        .collect()
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if !(v > 0.0) {
        return Err(ConfigError::Invalid(format!("{key} must be positive")));
    }
    if !v.is_finite() {
        return Err(ConfigError::Invalid(format!("{key} must be finite")));
    }
    Ok(v)
}

impl Config {
    /// Parses configuration text; every key absent from the text keeps its default.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Config::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey(key.into()));
            }
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate(key.into()));
            }
            seen.push(key);
            c.set(key, value)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "k" => self.k = parse_num(key, value, "an integer")?,
            "mesh" => {
                self.mesh = match value.strip_prefix("builtin:") {
                    Some(n) => MeshSource::Builtin(parse_num(key, n, "builtin:<cells per side>")?),
                    None => MeshSource::File(value.into()),
                }
            }
            "split" => self.split = parse_bool(key, value)?,
            "gamma1" => self.gamma1 = SideSet::parse(value).map_err(|e| ConfigError::Invalid(format!("gamma1: {e}")))?,
            "mu_s" => self.params.mu_s = parse_num(key, value, "a number")?,
            "lambda_s" => self.params.lambda_s = parse_num(key, value, "a number")?,
            "rho_s" => self.params.rho_s = parse_num(key, value, "a number")?,
            "problem" => {
                self.problem = match value {
                    "source" => Problem::Source,
                    "eigen" => Problem::Eigen,
                    _ => {
                        return Err(ConfigError::Type {
                            key: key.into(),
                            value: value.into(),
                            expected: "'source' or 'eigen'",
                        })
                    }
                }
            }
            "case" => {
                self.case = Some(match value.strip_prefix("file:") {
                    Some(p) => LoadSpec::File(p.trim().into()),
                    None => LoadSpec::Case(value.into()),
                })
            }
            "num_eigs" => self.num_eigs = parse_num(key, value, "an integer")?,
            "newton_rtol" => self.newton_rtol = parse_num(key, value, "a number")?,
            "residual_tol" => self.residual_tol = parse_num(key, value, "a number")?,
            "levels" => self.levels = parse_list(key, value, "a list of integers")?,
            "lambdas" => self.lambdas = parse_list(key, value, "a list of numbers")?,
            "locking_level" => self.locking_level = parse_num(key, value, "an integer")?,
            "multiplicity" => self.multiplicity = parse_num(key, value, "an integer")?,
            "out" => self.out = Some(value.into()),
            "threads" => self.threads = Some(parse_num(key, value, "an integer")?),
            "seed" => self.seed = parse_num(key, value, "an integer")?,
            "postprocess" => self.postprocess = parse_bool(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=2).contains(&self.k) {
            return Err(ConfigError::Invalid("k must be 1 or 2".into()));
        }
        positive("mu_s", self.params.mu_s)?;
        positive("lambda_s", self.params.lambda_s)?;
        positive("rho_s", self.params.rho_s)?;
        positive("newton_rtol", self.newton_rtol)?;
        positive("residual_tol", self.residual_tol)?;
        for &l in &self.lambdas {
            positive("lambda_s", l)?;
        }
        if self.gamma1.is_all() {
            return Err(ConfigError::Invalid("gamma1 covers the whole boundary; Γ0 must be nonempty".into()));
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(ConfigError::Invalid("levels must be a nonempty list of positive integers".into()));
        }
        if let MeshSource::Builtin(0) = self.mesh {
            return Err(ConfigError::Invalid("mesh: builtin cells per side must be positive".into()));
        }
        if self.num_eigs == 0 || self.multiplicity == 0 || self.locking_level == 0 {
            return Err(ConfigError::Invalid("num_eigs, multiplicity and locking_level must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(ConfigError::Invalid("threads must be positive".into()));
        }
        Ok(())
    }

    /// Case name or load file, with the command's default applied.
    pub fn load_spec(&self, default_case: &str) -> LoadSpec {
        self.case.clone().unwrap_or_else(|| LoadSpec::Case(default_case.into()))
    }

    pub fn newton(&self) -> NewtonOptions {
        let mut n = NewtonOptions {
            rtol: self.newton_rtol,
            ..NewtonOptions::default()
        };
        n.pencil.seed = self.seed;
        n
    }

    /// Study settings; `case` must name a catalog case.
    pub fn study(&self, default_case: &str) -> Result<StudyConfig, ConfigError> {
        let case = match self.load_spec(default_case) {
            LoadSpec::Case(c) => c,
            LoadSpec::File(_) => {
                return Err(ConfigError::Invalid(
                    "studies need a manufactured case with a known solution, not a load file".into(),
                ))
            }
        };
        Ok(StudyConfig {
            k: self.k,
            params: self.params,
            levels: self.levels.clone(),
            case,
            gamma1: (self.gamma1 != SideSet::NONE).then_some(self.gamma1),
            postprocess: self.postprocess,
            multiplicity: self.multiplicity,
            reference_level: None,
            newton: self.newton(),
            quadrature_degree: None,
        })
    }

    /// Configuration text with every key spelled out; parses back to `self`.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "k = {}", self.k);
        let _ = match &self.mesh {
            MeshSource::Builtin(n) => writeln!(s, "mesh = builtin:{n}"),
            MeshSource::File(p) => writeln!(s, "mesh = {}", p.display()),
        };
        let _ = writeln!(s, "split = {}", self.split);
        let _ = writeln!(s, "gamma1 = {}", self.gamma1);
        let _ = writeln!(s, "mu_s = {:?}", self.params.mu_s);
        let _ = writeln!(s, "lambda_s = {:?}", self.params.lambda_s);
        let _ = writeln!(s, "rho_s = {:?}", self.params.rho_s);
        let _ = writeln!(
            s,
            "problem = {}",
            match self.problem {
                Problem::Source => "source",
                Problem::Eigen => "eigen",
            }
        );
        let _ = match &self.case {
            Some(LoadSpec::Case(c)) => writeln!(s, "case = {c}"),
            Some(LoadSpec::File(p)) => writeln!(s, "case = file:{}", p.display()),
            None => writeln!(s, "# case = default of the command"),
        };
        let _ = writeln!(s, "num_eigs = {}", self.num_eigs);
        let _ = writeln!(s, "newton_rtol = {:?}", self.newton_rtol);
        let _ = writeln!(s, "residual_tol = {:?}", self.residual_tol);
        let _ = writeln!(s, "levels = {}", join(&self.levels.iter().map(|v| v.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "lambdas = {}", join(&self.lambdas.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>()));
        let _ = writeln!(s, "locking_level = {}", self.locking_level);
        let _ = writeln!(s, "multiplicity = {}", self.multiplicity);
        let _ = match &self.out {
            Some(p) => writeln!(s, "out = {}", p.display()),
            None => writeln!(s, "# out = unset"),
        };
        let _ = match self.threads {
            Some(t) => writeln!(s, "threads = {t}"),
            None => writeln!(s, "# threads = rayon default"),
        };
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "postprocess = {}", self.postprocess);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
        assert_eq!(Config::parse("# only a comment\n\n").unwrap(), Config::default());
    }

    #[test]
    fn documented_errors() {
        let e = Config::parse("lambda_s = -1").unwrap_err().to_string();
        assert!(e.contains("lambda_s must be positive"), "{e}");
        let e = Config::parse("k = 3").unwrap_err().to_string();
        assert!(e.contains("k must be 1 or 2"), "{e}");
        let e = Config::parse("lambda_s = inf").unwrap_err().to_string();
        assert!(e.contains("lambda_s must be finite"), "{e}");
        let e = Config::parse("colour = red").unwrap_err().to_string();
        assert!(e.contains("'colour'"), "{e}");
        let e = Config::parse("gamma1 = left,right,top,bottom").unwrap_err().to_string();
        assert!(e.contains("Γ0"), "{e}");
        assert!(Config::parse("k = one").is_err());
        assert!(Config::parse("k").is_err());
        assert!(Config::parse("k = 1\nk = 2").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = "k = 2\nmesh = builtin:3\ngamma1 = right, top\nlambda_s = 1e4 # comment\nproblem = eigen\ncase = divfree\nlevels = 2,4\nthreads = 2\nout = /tmp/x\npostprocess = true\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.params.lambda_s, 1e4);
        assert!(c.gamma1.right && c.gamma1.top && !c.gamma1.left);
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        let d = Config::default();
        assert_eq!(Config::parse(&d.to_text()).unwrap(), d);
    }
}
