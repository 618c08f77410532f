//! `name(key=value, ...)` strings used for builtin instances and classes.

use std::collections::BTreeMap;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CallSpec {
    pub name: String,
    args: BTreeMap<String, String>,
}

impl CallSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = match s.find('(') {
            Some(i) => {
                let inner = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| LabError::validation(format!("`{s}`: missing closing parenthesis")))?;
                (&s[..i], inner)
            }
            None => (s, ""),
        };
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(LabError::validation(format!("`{s}`: bad name")));
        }
        let mut args = BTreeMap::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| LabError::validation(format!("`{s}`: expected key=value, got `{part}`")))?;
            if args.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(LabError::validation(format!("`{s}`: duplicate key `{}`", k.trim())));
            }
        }
        Ok(Self {
            name: name.to_string(),
            args,
        })
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.args.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(LabError::validation(format!(
                "{}: unknown parameter `{k}` (expected one of {})",
                self.name,
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.args.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| LabError::validation(format!("{}: cannot parse `{key}={v}`", self.name))),
        }
    }
}

/// Parses an inclusive range `a..b` (also written `a..=b`) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || LabError::validation(format!("seeds: cannot parse `{s}`"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| bad())?;
        let b = b.strip_prefix('=').unwrap_or(b);
        let hi: u64 = b.trim().parse().map_err(|_| bad())?;
        let seeds: Vec<u64> = (lo..=hi).collect();
        if seeds.is_empty() {
            return Err(bad());
        }
        return Ok(seeds);
    }
    let seeds = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_calls() {
        let c = CallSpec::parse("random_tabular(states=3, actions=2)").unwrap();
        assert_eq!(c.name, "random_tabular");
        assert_eq!(c.get("states", 0usize).unwrap(), 3);
        assert_eq!(c.get("horizon", 4usize).unwrap(), 4);
        assert!(c.check_keys(&["states"]).is_err());
        assert_eq!(CallSpec::parse("pair").unwrap().name, "pair");
        assert!(CallSpec::parse("x(a=1").is_err());
        assert!(CallSpec::parse("x(a=1,a=2)").is_err());
    }

    #[test]
    fn parses_seed_ranges() {
        assert_eq!(parse_seeds("0..2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_seeds("5, 7").unwrap(), vec![5, 7]);
        assert_eq!(parse_seeds("3..3").unwrap(), vec![3]);
        assert!(parse_seeds("4..3").is_err());
        assert!(parse_seeds("a").is_err());
    }
}
