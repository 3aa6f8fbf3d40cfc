//! Flat key/value run configuration. Values come from built-in defaults,
//! then a TOML file, then `--set key=value` overrides, then dedicated flags.
//! Keys may be bare or prefixed with the command name (`sweep.n_rep`);
//! prefixed keys of other commands are ignored so that one file can serve
//! every subcommand.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use crate::Failure;

pub const COMMANDS: [&str; 6] = ["simulate", "fit", "sweep", "theory", "ingest", "reproduce"];

#[derive(Debug, Clone)]
pub struct Params {
    command: &'static str,
    values: BTreeMap<String, Value>,
}

/// Default value of a key, or `None` for optional keys without a default.
pub type Schema = &'static [(&'static str, Option<fn() -> Value>)];

impl Params {
    pub fn resolve(
        command: &'static str,
        schema: Schema,
        file: Option<&Path>,
        sets: &[String],
        flags: &[(&str, Value)],
    ) -> Result<Params, Failure> {
        let mut values: BTreeMap<String, Value> =
            schema.iter().filter_map(|(k, v)| v.map(|f| (k.to_string(), f()))).collect();
        let mut layer = |key: String, value: Value, origin: &str| -> Result<(), Failure> {
            let key = match key.split_once('.') {
                Some((prefix, rest)) if prefix == command => rest.to_string(),
                Some((prefix, _)) if COMMANDS.contains(&prefix) => return Ok(()),
                _ => key,
            };
            if !schema.iter().any(|(k, _)| *k == key) {
                return Err(Failure::Usage(format!("{origin}: unknown key {key:?} for {command}")));
            }
            values.insert(key, value);
            Ok(())
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let table: toml::Table =
                text.parse().map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
            let mut flat = Vec::new();
            flatten("", Value::Table(table), &mut flat);
            for (k, v) in flat {
                layer(k, v, &path.display().to_string())?;
            }
        }
        for s in sets {
            let (k, raw) = s
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set expects key=value, got {s:?}")))?;
            layer(k.trim().to_string(), parse_value(raw.trim()), "--set")?;
        }
        for (k, v) in flags {
            layer(k.to_string(), v.clone(), "flag")?;
        }
        Ok(Params { command, values })
    }

    pub fn command(&self) -> &'static str {
        self.command
    }

    /// The resolved configuration as a TOML document.
    pub fn to_toml(&self, version: &str) -> String {
        let mut root = toml::Table::new();
        root.insert("tvlds_version".into(), Value::String(version.into()));
        root.insert("command".into(), Value::String(self.command.into()));
        root.insert("params".into(), Value::Table(self.values.clone().into_iter().collect()));
        toml::to_string(&root).expect("resolved config serializes")
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    fn bad(&self, key: &str, want: &str) -> Failure {
        Failure::Usage(format!("{}: {key} must be {want}, got {}", self.command, self.values[key]))
    }

    fn required(&self, key: &str) -> Result<&Value, Failure> {
        self.get(key).ok_or_else(|| Failure::Usage(format!("{}: missing required key {key:?}", self.command)))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, Failure> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.bad(key, "a number")),
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64, Failure> {
        self.required(key)?;
        Ok(self.opt_f64(key)?.unwrap())
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, Failure> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(self.bad(key, "a nonnegative integer")),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, Failure> {
        self.required(key)?;
        Ok(self.opt_usize(key)?.unwrap())
    }

    pub fn u64(&self, key: &str) -> Result<u64, Failure> {
        Ok(self.usize(key)? as u64)
    }

    pub fn bool(&self, key: &str) -> Result<bool, Failure> {
        match self.required(key)? {
            Value::Boolean(b) => Ok(*b),
            _ => Err(self.bad(key, "true or false")),
        }
    }

    pub fn opt_str(&self, key: &str) -> Result<Option<&str>, Failure> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.bad(key, "a string")),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str, Failure> {
        self.required(key)?;
        Ok(self.opt_str(key)?.unwrap())
    }

    /// A list of numbers, also accepted as a comma-separated string.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, Failure> {
        match self.required(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(self.bad(key, "a list of numbers")),
                })
                .collect(),
            Value::String(s) => s
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| self.bad(key, "a list of numbers")))
                .collect(),
            Value::Float(x) => Ok(vec![*x]),
            Value::Integer(i) => Ok(vec![*i as f64]),
            _ => Err(self.bad(key, "a list of numbers")),
        }
    }

    /// A list of strings, also accepted as a comma-separated string.
    pub fn str_list(&self, key: &str) -> Result<Vec<String>, Failure> {
        match self.required(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| self.bad(key, "a list of strings")))
                .collect(),
            Value::String(s) => Ok(s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()),
            _ => Err(self.bad(key, "a list of strings")),
        }
    }
}

fn flatten(prefix: &str, v: Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other)),
    }
}

/// Parses an override as a TOML value; anything that is not valid TOML is
/// taken as a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
