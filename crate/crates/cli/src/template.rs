//! Sampler specs whose numeric leaves may be expressions in `n`.
//!
//! A template is plain TOML. String leaves under any key other than the
//! variant tags are evaluated with `n` bound to the grid value (as a float),
//! then the whole tree is deserialized into the target type. Integral
//! results become TOML integers so count fields accept them.

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

const TAG_KEYS: [&str; 4] = ["kind", "form", "rule", "mode"];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct Template(pub toml::Value);

impl Template {
    /// Evaluates every expression leaf and deserializes the result; `field`
    /// names the config location in error messages.
    pub fn instantiate<T: DeserializeOwned>(&self, n: Option<u64>, field: &str) -> CliResult<T> {
        let value = eval_tree(&self.0, n, field, None)?;
        T::deserialize(value).map_err(|e| CliError::field(field, e.to_string()))
    }

    /// True when some leaf is an expression mentioning `n`.
    pub fn depends_on_n(&self) -> bool {
        fn walk(v: &toml::Value, key: Option<&str>) -> bool {
            match v {
                toml::Value::String(s) => !key.is_some_and(|k| TAG_KEYS.contains(&k)) && mentions_n(s),
                toml::Value::Array(a) => a.iter().any(|x| walk(x, key)),
                toml::Value::Table(t) => t.iter().any(|(k, x)| walk(x, Some(k))),
                _ => false,
            }
        }
        walk(&self.0, None)
    }
}

fn mentions_n(expr: &str) -> bool {
    expr.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == ':')).any(|t| t == "n")
}

/// Evaluates one expression with `n` bound when given.
pub fn eval_expr(expr: &str, n: Option<u64>) -> Result<f64, String> {
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    if let Some(n) = n {
        ctx.set_value("n".into(), Value::Float(n as f64)).map_err(|e| e.to_string())?;
    }
    let v = evalexpr::eval_number_with_context(expr, &ctx).map_err(|e| e.to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{expr}` evaluates to {v}"))
    }
}

fn eval_tree(v: &toml::Value, n: Option<u64>, field: &str, key: Option<&str>) -> CliResult<toml::Value> {
    Ok(match v {
        toml::Value::String(s) if !key.is_some_and(|k| TAG_KEYS.contains(&k)) => {
            let x = eval_expr(s, n).map_err(|m| CliError::field(field, m))?;
            if x.fract() == 0.0 && x.abs() < 9.0e15 {
                toml::Value::Integer(x as i64)
            } else {
                toml::Value::Float(x)
            }
        }
        toml::Value::Array(a) => toml::Value::Array(a.iter().map(|x| eval_tree(x, n, field, key)).collect::<CliResult<_>>()?),
        toml::Value::Table(t) => toml::Value::Table(
            t.iter()
                .map(|(k, x)| Ok((k.clone(), eval_tree(x, n, &format!("{field}.{k}"), Some(k))?)))
                .collect::<CliResult<_>>()?,
        ),
        other => other.clone(),
    })
}
