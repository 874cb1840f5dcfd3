use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use tcfou_core::BernsteinSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Density,
    Subordinate,
    Moments,
    Verify,
}

impl Subcommand {
    pub const ALL: [Subcommand; 5] =
        [Subcommand::Simulate, Subcommand::Density, Subcommand::Subordinate, Subcommand::Moments, Subcommand::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Density => "density",
            Subcommand::Subordinate => "subordinate",
            Subcommand::Moments => "moments",
            Subcommand::Verify => "verify",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Subcommand::Simulate => "Simulate fBm, fOU, inverse subordinator or time-changed fOU paths",
            Subcommand::Density => "Tabulate the inverse stable density f(s, t) or the stable density g(x)",
            Subcommand::Subordinate => "Apply the subordination operator to a sampled function",
            Subcommand::Moments => "Even moments of the time-changed fOU process and their limits",
            Subcommand::Verify => "Run a verification check and emit a JSON report",
        }
    }

    /// Accepted keys in metadata order. `None` marks a key without default.
    pub fn keys(self) -> &'static [(&'static str, Option<&'static str>)] {
        match self {
            Subcommand::Simulate => &[
                ("process", Some("tcfou")),
                ("hurst", Some("0.75")),
                ("theta", Some("1")),
                ("phi", Some("stable:0.5")),
                ("t-max", Some("1")),
                ("n-steps", Some("100")),
                ("paths", Some("1000")),
                ("seed", Some("0")),
                ("y-step", Some("0.001")),
                ("aux-step", Some("0.005")),
                ("format", Some("csv")),
                ("out", Some("-")),
            ],
            Subcommand::Density => &[
                ("phi", Some("stable:0.5")),
                ("kind", Some("f")),
                ("s-max", Some("5")),
                ("n-s", Some("101")),
                ("t", Some("0.5,1,2")),
                ("x-max", Some("5")),
                ("n-x", Some("100")),
                ("out", Some("-")),
            ],
            Subcommand::Subordinate => &[
                ("input", None),
                ("tail", Some("forbidden")),
                ("phi", Some("stable:0.5")),
                ("t", Some("0.5,1,2")),
                ("out", Some("-")),
            ],
            Subcommand::Moments => &[
                ("hurst", Some("0.75")),
                ("theta", Some("1")),
                ("phi", Some("stable:0.5")),
                ("n", Some("1,2")),
                ("t", Some("0.5,1,2,5")),
                ("out", Some("-")),
            ],
            Subcommand::Verify => &[
                ("check", None),
                ("hurst", Some("0.75")),
                ("theta", Some("1")),
                ("phi", Some("stable:0.5")),
                ("level", Some("1")),
                ("paths", Some("20000")),
                ("seed", Some("0")),
                ("out", Some("-")),
            ],
        }
    }
}

impl FromStr for Subcommand {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Subcommand::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| ConfigError(format!("unknown subcommand `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Key-value content of a config file, plus its `subcommand` entry if any.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct FileConfig {
    pub subcommand: Option<String>,
    pub values: BTreeMap<String, String>,
}

/// Parses `key = value` text. Lines starting with `#!` carry metadata and are
/// read as entries; other `#` lines are comments. A file that opens with
/// metadata ends at its first non-metadata line, so an artifact written by a
/// run can be fed back as its own config. A JSON report is read through its
/// `config` object.
pub fn parse_config_text(text: &str) -> Result<FileConfig, ConfigError> {
    if text.trim_start().starts_with('{') {
        return parse_json_config(text);
    }
    let mut out = FileConfig::default();
    let mut metadata_mode = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let is_meta = line.starts_with("#!");
        let mode = *metadata_mode.get_or_insert(is_meta);
        let body = if is_meta {
            &line[2..]
        } else if mode {
            break;
        } else if line.starts_with('#') {
            continue;
        } else {
            line
        };
        let Some((k, v)) = body.split_once('=') else {
            return err(format!("config line {}: expected `key = value`, got `{raw}`", no + 1));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return err(format!("config line {}: empty key or value in `{raw}`", no + 1));
        }
        insert(&mut out, k, v).map_err(|e| ConfigError(format!("config line {}: {e}", no + 1)))?;
    }
    Ok(out)
}

fn parse_json_config(text: &str) -> Result<FileConfig, ConfigError> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError(format!("config JSON: {e}")))?;
    let Some(map) = doc.get("config").and_then(|c| c.as_object()) else {
        return err("config JSON has no `config` object");
    };
    let mut out = FileConfig::default();
    for (k, v) in map {
        let Some(v) = v.as_str() else {
            return err(format!("config JSON: value of `{k}` must be a string"));
        };
        insert(&mut out, k, v)?;
    }
    Ok(out)
}

fn insert(out: &mut FileConfig, k: &str, v: &str) -> Result<(), ConfigError> {
    if k == "subcommand" {
        if out.subcommand.replace(v.to_string()).is_some() {
            return err("duplicate key `subcommand`");
        }
    } else if out.values.insert(k.to_string(), v.to_string()).is_some() {
        return err(format!("duplicate key `{k}`"));
    }
    Ok(())
}

/// Fully resolved run: every accepted key of the subcommand has a value.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    values: Vec<(&'static str, String)>,
}

impl RunConfig {
    /// Flags override file values, which override defaults.
    pub fn resolve(
        subcommand: Subcommand,
        file: Option<&FileConfig>,
        flags: &BTreeMap<String, String>,
    ) -> Result<Self, ConfigError> {
        let keys = subcommand.keys();
        if let Some(f) = file {
            if let Some(s) = &f.subcommand {
                if s != subcommand.name() {
                    return err(format!("config file is for `{s}`, not `{}`", subcommand.name()));
                }
            }
            if let Some(k) = f.values.keys().find(|k| !keys.iter().any(|(n, _)| n == k)) {
                return err(format!("unknown key `{k}` for `{}`", subcommand.name()));
            }
        }
        let mut values = Vec::with_capacity(keys.len());
        for &(name, default) in keys {
            let v = flags
                .get(name)
                .or_else(|| file.and_then(|f| f.values.get(name)))
                .cloned()
                .or_else(|| default.map(str::to_string));
            match v {
                Some(v) => values.push((name, v)),
                None => return err(format!("`{name}` is required for `{}`", subcommand.name())),
            }
        }
        Ok(RunConfig { subcommand, values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str()).unwrap_or_else(|| panic!("no key {key}"))
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        parse_f64(key, self.raw(key))
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self.raw(key);
        v.parse().map_err(|_| ConfigError(format!("`{key}` must be a nonnegative integer, got `{v}`")))
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        let v = self.raw(key);
        v.parse().map_err(|_| ConfigError(format!("`{key}` must be an unsigned 64-bit integer, got `{v}`")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.raw(key).split(',').map(|s| parse_f64(key, s.trim())).collect()
    }

    pub fn spec(&self, key: &str) -> Result<BernsteinSpec, ConfigError> {
        self.raw(key).parse().map_err(|e| ConfigError(format!("`{key}`: {e}")))
    }

    pub fn metadata_lines(&self) -> String {
        let mut s = format!("#! subcommand = {}\n", self.subcommand.name());
        for (k, v) in &self.values {
            s.push_str(&format!("#! {k} = {v}\n"));
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("subcommand".into(), self.subcommand.name().into());
        for (k, v) in &self.values {
            map.insert((*k).into(), v.clone().into());
        }
        serde_json::Value::Object(map)
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(format!("`{key}` must be a finite number, got `{v}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config_text("theta = 1\n# comment\nhurst = 0.6\n").unwrap();
        let cfg = RunConfig::resolve(Subcommand::Simulate, Some(&file), &flags(&[("theta", "2")])).unwrap();
        assert_eq!(cfg.f64("theta").unwrap(), 2.0);
        assert_eq!(cfg.f64("hurst").unwrap(), 0.6);
        assert_eq!(cfg.raw("process"), "tcfou");
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let e = parse_config_text("theta = 1\n\nhurst 0.6\n").unwrap_err();
        assert!(e.0.contains("line 3"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file = parse_config_text("thetta = 1\n").unwrap();
        let e = RunConfig::resolve(Subcommand::Simulate, Some(&file), &BTreeMap::new()).unwrap_err();
        assert!(e.0.contains("thetta"));
    }

    #[test]
    fn strict_numbers() {
        let cfg = RunConfig::resolve(Subcommand::Simulate, None, &flags(&[("theta", "1.0x"), ("paths", "-3")])).unwrap();
        assert!(cfg.f64("theta").is_err());
        assert!(cfg.usize("paths").is_err());
        let cfg = RunConfig::resolve(Subcommand::Simulate, None, &flags(&[("theta", "nan")])).unwrap();
        assert!(cfg.f64("theta").is_err());
    }

    #[test]
    fn metadata_round_trips() {
        let cfg = RunConfig::resolve(Subcommand::Moments, None, &flags(&[("phi", "tempered:0.5:1.0")])).unwrap();
        let text = format!("{}n,t,value,limit,ratio\n1,0.5,0.1,0.2,0.5\n", cfg.metadata_lines());
        let back = RunConfig::resolve(Subcommand::Moments, Some(&parse_config_text(&text).unwrap()), &BTreeMap::new()).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json::json!({ "config": cfg.to_json(), "pass": true }).to_string();
        let back = RunConfig::resolve(Subcommand::Moments, Some(&parse_config_text(&json).unwrap()), &BTreeMap::new()).unwrap();
        assert_eq!(back, cfg);
        let e = RunConfig::resolve(Subcommand::Verify, Some(&parse_config_text(&text).unwrap()), &BTreeMap::new()).unwrap_err();
        assert!(e.0.contains("moments"));
    }

    #[test]
    fn spec_tokens() {
        let cfg = RunConfig::resolve(Subcommand::Moments, None, &flags(&[("phi", "tempered:0.5:1.0")])).unwrap();
        assert_eq!(cfg.spec("phi").unwrap(), BernsteinSpec::tempered(0.5, 1.0).unwrap());
        let cfg = RunConfig::resolve(Subcommand::Moments, None, &BTreeMap::new()).unwrap();
        assert_eq!(cfg.spec("phi").unwrap(), BernsteinSpec::stable(0.5).unwrap());
    }

    #[test]
    fn missing_required_key() {
        let e = RunConfig::resolve(Subcommand::Verify, None, &BTreeMap::new()).unwrap_err();
        assert!(e.0.contains("check"));
    }
}
