//! Flat `key = value` config files. `#` starts a comment; blank lines are
//! ignored. Keys are the long flag names (`learning-rate`, `epochs`, ...).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use innmf::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i as u64 + 1,
                msg: format!("expected `key = value`, got `{raw}`"),
            })?;
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(Error::Parse { line: i as u64 + 1, msg: "empty key".into() });
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        Self::parse(&text)
    }

    /// `flag` if given, else the config value for `key`, else `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => {
                raw.parse().map_err(|_| Error::InvalidArgument(format!("config value `{raw}` for `{key}` is invalid")))
            }
            None => Ok(default),
        }
    }

    /// Keys not in `known`, for reporting typos.
    pub fn unknown_keys(&self, known: &[&str]) -> Vec<String> {
        self.values.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let cfg = ConfigFile::parse("# training\nepochs = 50\nlearning_rate=0.01\n\n").unwrap();
        assert_eq!(cfg.resolve(Some(7usize), "epochs", 1).unwrap(), 7);
        assert_eq!(cfg.resolve(None, "epochs", 1usize).unwrap(), 50);
        assert_eq!(cfg.resolve(None, "learning-rate", 1.0).unwrap(), 0.01);
        assert_eq!(cfg.resolve(None, "batch-size", 3usize).unwrap(), 3);
        assert!(cfg.resolve::<usize>(None, "learning-rate", 1).is_err());
        assert_eq!(cfg.unknown_keys(&["epochs"]), vec!["learning-rate".to_string()]);
    }

    #[test]
    fn malformed_line() {
        assert!(matches!(ConfigFile::parse("epochs 5"), Err(Error::Parse { line: 1, .. })));
    }
}
