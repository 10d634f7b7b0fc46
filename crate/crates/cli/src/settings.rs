//! Layered configuration: built-in defaults, then a TOML file, then
//! `key.path=value` overrides, then dedicated command-line flags.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use icql_core::Config;
use toml::{Table, Value};

/// Parses a config file without range checks; later layers may still fix values.
pub fn read_file(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_text(&text).with_context(|| format!("in {}", path.display()))
}

/// Accepts either a plain config or a run manifest with a `[config]` table.
pub fn parse_text(text: &str) -> Result<Config> {
    let table: Table = text.parse()?;
    let table = match (table.get("config"), table.get("code_version")) {
        (Some(Value::Table(inner)), Some(_)) => inner.clone(),
        _ => table,
    };
    Ok(Value::Table(table).try_into()?)
}

/// TOML scalar or array if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies one `a.b.c=value` override.
pub fn apply_override(config: &Config, assignment: &str) -> Result<Config> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key.path=value"))?;
    let path = path.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override `{assignment}` has an empty key");
    }
    let mut root = Table::try_from(config)?;
    let mut table = &mut root;
    for key in &keys[..keys.len() - 1] {
        table = match table.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => bail!("`{path}`: `{key}` is not a section"),
        };
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("`{path}`: {}", e.message()))
}

/// Resolves every layer and validates the result.
pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut config = match file {
        Some(p) => read_file(p)?,
        None => Config::default(),
    };
    for o in overrides {
        config = apply_override(&config, o)?;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use icql_core::Algorithm;

    #[test]
    fn overrides_reach_nested_keys() {
        let c = apply_override(&Config::default(), "intrinsic.sigma=0").unwrap();
        assert_eq!(c.intrinsic.sigma, 0.0);
        let c = apply_override(&c, "algorithm=iql").unwrap();
        assert_eq!(c.algorithm, Algorithm::Iql);
        let c = apply_override(&c, "run.seeds=[1, 2]").unwrap();
        assert_eq!(c.run.seeds, vec![1, 2]);
        let c = apply_override(&c, "run.output_dir=out/x").unwrap();
        assert_eq!(c.run.output_dir, "out/x");
        let c = apply_override(&c, "env.valley_spawn_col=3").unwrap();
        assert_eq!(c.env.valley_spawn_col, Some(3));
    }

    #[test]
    fn bad_overrides_name_the_key() {
        let err = apply_override(&Config::default(), "learning.gama=0.5").unwrap_err().to_string();
        assert!(err.contains("learning.gama") && err.contains("gama"), "{err}");
        let err = apply_override(&Config::default(), "learning.lr=fast").unwrap_err().to_string();
        assert!(err.contains("learning.lr"), "{err}");
        assert!(apply_override(&Config::default(), "nonsense").is_err());
        assert!(apply_override(&Config::default(), "learning.lr.x=1").is_err());
    }

    #[test]
    fn empty_text_is_pure_defaults() {
        assert_eq!(parse_text("").unwrap(), Config::default());
    }

    #[test]
    fn manifests_are_accepted_as_config_files() {
        let mut c = Config::default();
        c.env.width = 7;
        let manifest = icql_core::experiment::manifest_text(&c);
        assert_eq!(parse_text(&manifest).unwrap(), c);
    }
}
