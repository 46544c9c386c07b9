//! Flat `key=value` run manifests.
//!
//! Values are escaped so that every entry fits on one line: `\` becomes
//! `\\` and a newline becomes `\n`. The original argument vector is stored
//! as `arg.0`, `arg.1`, ... so a manifest alone is enough to re-run the
//! command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunManifest {
    entries: BTreeMap<String, String>,
}

pub fn unix_millis() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn escape(v: &str) -> String {
    v.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(v: &str) -> Result<String> {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            other => bail!(
                "bad escape \\{}",
                other.map(String::from).unwrap_or_default()
            ),
        }
    }
    Ok(out)
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String]) -> RunManifest {
        let mut m = RunManifest::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("started_unix_ms", unix_millis());
        for (i, a) in argv.iter().enumerate() {
            m.set(&format!("arg.{i}"), a);
        }
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn param(&mut self, name: &str, value: impl ToString) {
        self.set(&format!("param.{name}"), value);
    }

    /// Records an input path and the SHA-256 of the bytes that were read.
    pub fn input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.set(&format!("input.{role}"), path.display());
        self.set(&format!("input.{role}.sha256"), sha256_hex(bytes));
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.set(&format!("output.{role}"), path.display());
    }

    pub fn argv(&self) -> Vec<String> {
        (0..)
            .map_while(|i| self.entries.get(&format!("arg.{i}")).cloned())
            .collect()
    }

    /// `(role, path, digest)` for every recorded input.
    pub fn inputs(&self) -> Vec<(String, PathBuf, String)> {
        self.entries
            .iter()
            .filter_map(|(k, v)| {
                let role = k.strip_prefix("input.")?;
                if role.ends_with(".sha256") {
                    return None;
                }
                let digest = self.entries.get(&format!("{k}.sha256"))?;
                Some((role.to_string(), PathBuf::from(v), digest.clone()))
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={}\n", escape(v)))
            .collect()
    }

    pub fn parse(text: &str) -> Result<RunManifest> {
        let mut m = RunManifest::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("manifest line {}: expected key=value", i + 1))?;
            m.entries.insert(k.to_string(), unescape(v)?);
        }
        if m.get("command").is_none() {
            bail!("manifest has no command entry");
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_escapes() {
        let argv = vec!["wiggins".to_string(), "a\\b\nc".to_string()];
        let mut m = RunManifest::new("solve", &argv);
        m.param("theta", 0.75);
        m.input("process", Path::new("p.txt"), b"0.5 0\n");
        let back = RunManifest::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.argv(), argv);
        assert_eq!(back.inputs().len(), 1);
        assert_eq!(back.inputs()[0].2, sha256_hex(b"0.5 0\n"));
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(RunManifest::parse("no separator\n").is_err());
        assert!(RunManifest::parse("a=b\n").is_err());
    }
}
