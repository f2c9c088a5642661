//! Flat `key = value` settings shared by the config file and the CLI.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::problem::{ExternalObjective, ExternalSpec, ProblemSpec};

/// Settings keyed by long flag name (`base-seed`, not `base_seed`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-")
}

impl Settings {
    /// Parse `key = value` lines. Blank lines and `#` comments are skipped;
    /// keys may use `-` or `_` and an optional leading `--`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", i + 1)))?;
            let k = normalize(k);
            if k.is_empty() {
                return Err(Error::invalid(format!("config line {}: empty key", i + 1)));
            }
            map.insert(k, v.trim().to_string());
        }
        Ok(Settings(map))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(normalize(key), value.into());
    }

    /// Later settings win.
    pub fn merge(&mut self, other: Settings) {
        self.0.extend(other.0);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::invalid(format!("cannot parse {key} = `{v}`")))
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::invalid(format!("missing required setting `{key}`")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::invalid(format!("cannot parse `{s}` in {key}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// `toy` (default) or an external command given by `blackbox-cmd`.
    pub fn problem(&self) -> Result<ProblemSpec> {
        let cmd = self.get("blackbox-cmd");
        match (self.get("problem").unwrap_or(if cmd.is_some() { "external" } else { "toy" }), cmd) {
            ("toy", None) => Ok(ProblemSpec::Toy),
            ("toy", Some(_)) => Err(Error::invalid("blackbox-cmd given with problem = toy")),
            ("external", Some(cmd)) => {
                let mut spec = ExternalSpec::new(cmd, self.required("dim")?, self.required("m")?);
                spec.lower = self.list("lower")?;
                spec.upper = self.list("upper")?;
                spec.objective = match self.get("objective").unwrap_or("blackbox") {
                    "blackbox" => ExternalObjective::Blackbox,
                    "sum" => ExternalObjective::Sum,
                    other => return Err(Error::invalid(format!("unknown objective `{other}`"))),
                };
                if let Some(secs) = self.parsed::<f64>("timeout")? {
                    if !(secs > 0.0 && secs.is_finite()) {
                        return Err(Error::invalid("timeout must be positive"));
                    }
                    spec.timeout = Duration::from_secs_f64(secs);
                }
                Ok(ProblemSpec::External(spec))
            }
            ("external", None) => Err(Error::invalid("problem = external needs blackbox-cmd")),
            (other, _) => Err(Error::invalid(format!("unknown problem `{other}`"))),
        }
    }
}
