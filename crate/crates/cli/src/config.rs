//! Layered `key=value` configuration: built-in defaults, then an optional
//! config file, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Default,
    File,
    Flag,
}

impl Origin {
    fn name(&self) -> &'static str {
        match self {
            Origin::Default => "default",
            Origin::File => "file",
            Origin::Flag => "flag",
        }
    }
}

/// Effective configuration of one command.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, (String, Origin)>,
}

impl Config {
    /// Merges the three layers. Keys absent from `defaults` are rejected so
    /// typos in files or flags surface as validation errors.
    pub fn layered(
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        flags: &[(String, String)],
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, (String, Origin)> = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), (v.to_string(), Origin::Default)))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            let parsed = wrcp_core::datagen::parse_key_values(path, &text)?;
            for (k, v) in parsed {
                if !values.contains_key(&k) {
                    return Err(CliError::Validation(format!(
                        "{}: unknown key '{k}'",
                        path.display()
                    )));
                }
                values.insert(k, (v, Origin::File));
            }
        }
        for (k, v) in flags {
            if !values.contains_key(k) {
                return Err(CliError::Validation(format!("unknown option '{k}'")));
            }
            values.insert(k.clone(), (v.clone(), Origin::Flag));
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(|(v, _)| v.as_str())
            .filter(|v| !v.is_empty())
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| CliError::Validation(format!("missing required option '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| CliError::Validation(format!("option '{key}': cannot parse '{v}'")))
    }

    pub fn string(&self, key: &str) -> Result<String, CliError> {
        self.require(key).map(str::to_string)
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key)?;
        if !v.is_finite() {
            return Err(CliError::Validation(format!("option '{key}' must be finite")));
        }
        Ok(v)
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parse(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parse(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        self.parse(key)
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.require(key).map(PathBuf::from)
    }

    pub fn opt_path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    /// Comma-separated list of reals.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.require(key)?
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| CliError::Validation(format!("option '{key}': bad number '{v}'")))
            })
            .collect()
    }

    pub fn str_list(&self, key: &str) -> Result<Vec<String>, CliError> {
        Ok(self
            .require(key)?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect())
    }

    /// `key=value` lines, sorted, each annotated with its origin.
    pub fn echo(&self) -> String {
        self.values
            .iter()
            .map(|(k, (v, o))| format!("{k}={v}  # {}\n", o.name()))
            .collect()
    }

    /// Writes [`Config::echo`] to `<dir>/config.txt`.
    pub fn write_echo(&self, dir: &Path) -> Result<(), CliError> {
        crate::output::write_file(&dir.join("config.txt"), &self.echo())
    }
}

/// Validates an `α` list.
pub fn check_alphas(alphas: &[f64]) -> Result<(), CliError> {
    if alphas.is_empty() {
        return Err(CliError::Validation("alpha list is empty".into()));
    }
    for &a in alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(CliError::Validation(format!("alpha {a} outside (0, 1)")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULTS: &[(&str, &str)] = &[("seed", "0"), ("beta", "1"), ("out", "run")];

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.txt");
        std::fs::write(&file, "# comment\nbeta = 4\nseed=3\n").unwrap();
        let flags = vec![("seed".to_string(), "9".to_string())];
        let c = Config::layered(DEFAULTS, Some(&file), &flags).unwrap();
        assert_eq!(c.u64("seed").unwrap(), 9);
        assert_eq!(c.f64("beta").unwrap(), 4.0);
        assert_eq!(c.string("out").unwrap(), "run");
        let echo = c.echo();
        assert!(echo.contains("seed=9  # flag"));
        assert!(echo.contains("beta=4  # file"));
        assert!(echo.contains("out=run  # default"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let flags = vec![("bta".to_string(), "1".to_string())];
        assert!(matches!(
            Config::layered(DEFAULTS, None, &flags),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn list_parsing() {
        let flags = vec![("beta".to_string(), "0, 1,4".to_string())];
        let c = Config::layered(DEFAULTS, None, &flags).unwrap();
        assert_eq!(c.f64_list("beta").unwrap(), vec![0.0, 1.0, 4.0]);
        assert!(check_alphas(&[0.1, 1.0]).is_err());
    }
}
