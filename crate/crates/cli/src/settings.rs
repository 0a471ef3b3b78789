use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use madnet::kv::KvMap;

use crate::CliError;

/// Config-file layer under the command-line flags.
///
/// Lookups resolve `flag`, then the file, then the default, and every
/// resolved value is copied into the record written next to the outputs.
pub struct Settings {
    pub file: KvMap,
    /// Directory that relative paths in the file resolve against.
    pub base: PathBuf,
    pub record: KvMap,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let (file, base) = match path {
            Some(p) => (
                KvMap::load(p).map_err(CliError::usage)?,
                p.parent().unwrap_or(Path::new(".")).to_path_buf(),
            ),
            None => (KvMap::new(), PathBuf::from(".")),
        };
        Ok(Settings {
            file,
            base,
            record: KvMap::new(),
        })
    }

    /// Adds lower-priority keys that the file does not already set.
    pub fn underlay(&mut self, lower: &KvMap) {
        let mut merged = lower.clone();
        merged.merge(&self.file);
        self.file = merged;
    }

    pub fn from_file<V>(&self, key: &str) -> Result<Option<V>, CliError>
    where
        V: FromStr,
        V::Err: Display,
    {
        self.file.get_parsed(key).map_err(CliError::usage)
    }

    pub fn pick<V>(&mut self, key: &str, flag: Option<V>, default: V) -> Result<V, CliError>
    where
        V: FromStr + Display,
        V::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.record.set(key, &v);
        Ok(v)
    }

    pub fn pick_opt<V>(&mut self, key: &str, flag: Option<V>) -> Result<Option<V>, CliError>
    where
        V: FromStr + Display,
        V::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.record.set(key, v);
        }
        Ok(v)
    }

    /// Path from a flag (relative to the working directory) or the file
    /// (relative to the file), made absolute for the record.
    pub fn pick_path(&mut self, key: &str, flag: Option<&Path>) -> Result<Option<PathBuf>, CliError> {
        let p = match flag {
            Some(p) => Some(p.to_path_buf()),
            None => self.from_file::<String>(key)?.map(|s| self.base.join(s)),
        };
        let p = p.map(|p| std::path::absolute(&p).unwrap_or(p));
        if let Some(p) = &p {
            self.record.set(key, p.display());
        }
        Ok(p)
    }

    pub fn require_path(&mut self, key: &str, flag: Option<&Path>, flag_name: &str) -> Result<PathBuf, CliError> {
        self.pick_path(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required argument {flag_name} (or `{key}` in --config)")))
    }

    pub fn save_record(&self, path: &Path) -> Result<(), CliError> {
        self.record.save(path).map_err(CliError::runtime)
    }
}
