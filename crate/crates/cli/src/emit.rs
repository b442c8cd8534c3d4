//! Artifact emission. Everything is staged in memory and written once, with
//! a manifest alongside that every artifact points back to.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub global: u64,
    pub schedule: u64,
    pub analysis: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_path: String,
    pub output_dir: String,
    pub seeds: Seeds,
    /// The configuration after defaults and command-line overrides.
    pub resolved: &'a C,
    pub artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Referenced<'a, T: Serialize> {
    manifest: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

/// Staged output files for one command invocation.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    /// Adds a CSV body, prefixed with a `#` comment naming the manifest.
    pub fn csv(&mut self, name: &str, body: Vec<u8>) {
        let mut bytes = format!("# manifest: {MANIFEST}\n").into_bytes();
        bytes.extend(body);
        self.files.push((name.to_string(), bytes));
    }

    /// Adds a JSON object with a top-level `manifest` field merged in.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&Referenced {
            manifest: MANIFEST,
            body,
        })?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn write<C: Serialize>(self, out: &Path, manifest: &RunManifest<'_, C>) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = out.join(&name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        let path = out.join(MANIFEST);
        let mut bytes = serde_json::to_vec_pretty(manifest)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Body {
        x: f64,
    }

    #[test]
    fn artifacts_reference_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.csv("t.csv", b"a,b\n1,2\n".to_vec());
        a.json("s.json", &Body { x: 0.1 + 0.2 }).unwrap();
        let manifest = RunManifest {
            tool: "qdos",
            version: "0",
            command: "test",
            config_path: "c.json".into(),
            output_dir: dir.path().display().to_string(),
            seeds: Seeds {
                global: 1,
                schedule: 1,
                analysis: 1,
            },
            resolved: &Body { x: 1.0 },
            artifacts: a.names(),
        };
        let written = a.write(dir.path(), &manifest).unwrap();
        assert_eq!(written.len(), 3);
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert!(csv.starts_with("# manifest: manifest.json\na,b"));
        let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("s.json")).unwrap()).unwrap();
        assert_eq!(json["manifest"], "manifest.json");
        assert_eq!(json["x"].as_f64().unwrap(), 0.1 + 0.2);
        let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(m["artifacts"], serde_json::json!(["t.csv", "s.json"]));
    }
}
