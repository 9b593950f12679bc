//! Loads given as closed-form expressions in a file (`fx = ...`, `fy = ...`).

use std::path::Path;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};

use crate::config::ConfigError;

pub struct LoadFunction {
    fx: Node<DefaultNumericTypes>,
    fy: Node<DefaultNumericTypes>,
}

impl LoadFunction {
    /// Expressions use the variables `x`, `y`, `pi` and evalexpr's `math::` functions.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut fx = None;
        let mut fy = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, expr) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.into(),
            })?;
            let node = build_operator_tree::<DefaultNumericTypes>(expr.trim())
                .map_err(|e| ConfigError::Invalid(format!("load line {}: {e}", i + 1)))?;
            match key.trim() {
                "fx" => fx = Some(node),
                "fy" => fy = Some(node),
                other => return Err(ConfigError::UnknownKey(other.into())),
            }
        }
        let (Some(fx), Some(fy)) = (fx, fy) else {
            return Err(ConfigError::Invalid("load file must define both fx and fy".into()));
        };
        let f = Self { fx, fy };
        for p in [[0.0, 0.0], [1.0, 1.0], [0.3, 0.7]] {
            f.try_eval(p)?;
        }
        Ok(f)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn try_eval(&self, x: [f64; 2]) -> Result<[f64; 2], ConfigError> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let bad = |e: evalexpr::EvalexprError| ConfigError::Invalid(format!("load evaluation failed: {e}"));
        ctx.set_value("x".into(), Value::Float(x[0])).map_err(bad)?;
        ctx.set_value("y".into(), Value::Float(x[1])).map_err(bad)?;
        ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI)).map_err(bad)?;
        Ok([
            self.fx.eval_number_with_context(&ctx).map_err(bad)?,
            self.fy.eval_number_with_context(&ctx).map_err(bad)?,
        ])
    }

    /// Pointwise value; `NaN` where the expression fails to evaluate.
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        self.try_eval(x).unwrap_or([f64::NAN; 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_expressions() {
        let f = LoadFunction::parse("# load\nfx = math::sin(pi * x) * y\nfy = 2 * x + 1\n").unwrap();
        let v = f.eval([0.5, 3.0]);
        assert!((v[0] - 3.0).abs() < 1e-15);
        assert_eq!(v[1], 2.0);
        assert!(LoadFunction::parse("fx = 1").is_err());
        assert!(LoadFunction::parse("fx = 1\nfy = z").is_err());
        assert!(LoadFunction::parse("fx = 1\nfy = 2\nfz = 3").is_err());
    }
}
