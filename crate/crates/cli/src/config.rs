//! Flat `key = value` run configuration with optional `[command]` sections.
//!
//! Keys before any section (or under `[common]`) apply to every command;
//! keys under `[solve]`, `[flow]` and so on only to that command. Command
//! line flags override both.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use meanfield::domain::{BoxMask, DomainSpec, Resolution};
use serde::Serialize;

/// Bad flags or config: exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

macro_rules! usage {
    ($($t:tt)*) => { anyhow::Error::from(Usage(format!($($t)*))) };
}
pub(crate) use usage;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    common: BTreeMap<String, String>,
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        let mut section: Option<String> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                section = (name != "common").then(|| name.to_string());
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| usage!("line {}: expected key = value", no + 1))?;
            let key = k.trim().replace('-', "_");
            if key.is_empty() {
                return Err(usage!("line {}: empty key", no + 1));
            }
            let map = match &section {
                Some(s) => cfg.sections.entry(s.clone()).or_default(),
                None => &mut cfg.common,
            };
            map.insert(key, v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Settings visible to `command`, section keys shadowing common ones.
    pub fn for_command(&self, command: &str) -> Settings {
        let mut values = self.common.clone();
        if let Some(s) = self.sections.get(command) {
            values.extend(s.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        Settings { values, used: BTreeMap::new() }
    }
}

/// Merges flags with config values and records what was resolved.
#[derive(Debug)]
pub struct Settings {
    values: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Settings {
    pub fn get<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.values.get(key) {
                Some(s) => Some(s.parse::<T>().map_err(|e| usage!("config key {key} = {s:?}: {e}"))?),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.used.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn or<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.used.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key, flag)?.ok_or_else(|| usage!("missing required setting `{key}`"))
    }

    /// Keys present in the config but never read by the command.
    pub fn unused(&self) -> Vec<String> {
        self.values.keys().filter(|k| !self.used.contains_key(*k)).cloned().collect()
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.used.clone()
    }
}

/// `ball[:R]`, `shell[:r0,r1]` or `box[:L]` (a full cube of side L).
pub fn parse_domain(s: &str) -> Result<DomainSpec> {
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| usage!("domain {s:?}: {e}"))?
    };
    let d = match (kind, nums.as_slice()) {
        ("ball", []) => DomainSpec::ball(1.0),
        ("ball", [r]) => DomainSpec::ball(*r),
        ("shell", []) => DomainSpec::shell(1.0, 2.0),
        ("shell", [a, b]) => DomainSpec::shell(*a, *b),
        ("box", []) => DomainSpec::box4d([2.0; 4], BoxMask::None, 1),
        ("box", [l]) => DomainSpec::box4d([*l; 4], BoxMask::None, 1),
        _ => return Err(usage!("unrecognized domain {s:?}; use ball[:R], shell[:r0,r1] or box[:L]")),
    };
    d.map_err(|e| usage!("domain {s:?}: {e}"))
}

/// Node count along the radius for radial meshes, per axis for grids.
pub fn resolution_for(domain: &DomainSpec, n: Option<usize>, radial: bool) -> Resolution {
    match (n, radial) {
        (Some(n), true) => Resolution::radial(n),
        (Some(n), false) => Resolution::Grid { n },
        (None, true) => Resolution::radial(2000),
        // grids on curved domains are only used for off-centre atoms
        (None, false) if domain.is_radial() => Resolution::Grid { n: 16 },
        (None, false) => Resolution::default_for(domain),
    }
}

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub version: &'static str,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub result: T,
}

pub const VERSION: &str = concat!("meanfield ", env!("CARGO_PKG_VERSION"));

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_shadow_common_keys() {
        let cfg = ConfigFile::parse("tau = 10\nseed=3 # comment\n[solve]\ntau = 20\n[flow]\nnorm = 4\n").unwrap();
        let mut s = cfg.for_command("solve");
        assert_eq!(s.get::<f64>("tau", None).unwrap(), Some(20.0));
        assert_eq!(s.get::<u64>("seed", None).unwrap(), Some(3));
        assert_eq!(s.get::<f64>("norm", None).unwrap(), None);
        assert_eq!(s.get::<f64>("tau", Some(5.0)).unwrap(), Some(5.0));
        let mut f = cfg.for_command("flow");
        assert_eq!(f.or::<f64>("tau", None, 1.0).unwrap(), 10.0);
        assert_eq!(f.unused(), vec!["norm".to_string(), "seed".to_string()]);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(ConfigFile::parse("tau 10").is_err());
        assert!(ConfigFile::parse(" = 3").is_err());
        let cfg = ConfigFile::parse("tau = abc").unwrap();
        assert!(cfg.for_command("solve").get::<f64>("tau", None).is_err());
    }

    #[test]
    fn domains() {
        assert!(parse_domain("ball").unwrap().is_radial());
        assert_eq!(parse_domain("shell:0.5,1.5").unwrap().chi, 0);
        assert!(!parse_domain("box:3").unwrap().is_radial());
        assert!(parse_domain("torus").is_err());
        assert!(parse_domain("shell:2,1").is_err());
    }
}
