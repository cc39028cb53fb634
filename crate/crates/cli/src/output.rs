//! Output files. CSV files open with a `# ` provenance comment block; JSON
//! reports carry the same record as their leading `provenance` field.

use crate::config::RunConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub config: String,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        let config = cfg.to_toml();
        let digest = Sha256::digest(config.as_bytes());
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            version: VERSION.to_string(),
            config_sha256,
            config,
        }
    }

    pub fn comment_block(&self) -> String {
        let mut s = format!(
            "# openxyz {}\n# config-sha256: {}\n# config:\n",
            self.version, self.config_sha256
        );
        for line in self.config.lines() {
            if line.is_empty() {
                s.push_str("#\n");
            } else {
                s.push_str("# ");
                s.push_str(line);
                s.push('\n');
            }
        }
        s
    }
}

/// Recovers the configuration embedded in an output file's comment block.
pub fn config_from_provenance(text: &str) -> Result<RunConfig, String> {
    let mut lines = text.lines().take_while(|l| l.starts_with('#'));
    if !lines.any(|l| l == "# config:") {
        return Err("no provenance config block".into());
    }
    let body: String = lines
        .map(|l| {
            format!(
                "{}\n",
                l.strip_prefix("# ").unwrap_or(l.trim_start_matches('#'))
            )
        })
        .collect();
    RunConfig::parse(&body)
}

/// Recovers the configuration embedded in a JSON report.
pub fn config_from_json(text: &str) -> Result<RunConfig, String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let cfg = v["provenance"]["config"]
        .as_str()
        .ok_or("no provenance config field")?;
    RunConfig::parse(cfg)
}

/// Fixed-width scientific format with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_csv(
    dir: &Path,
    name: &str,
    prov: &Provenance,
    header: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<PathBuf> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = w.into_inner().map_err(|e| e.into_error())?;
    write_file(dir, name, prov.comment_block().as_bytes(), &body)
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    prov: &Provenance,
    report: &T,
) -> std::io::Result<PathBuf> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        provenance: &'a Provenance,
        #[serde(flatten)]
        report: &'a T,
    }
    let mut body = serde_json::to_vec_pretty(&Doc {
        provenance: prov,
        report,
    })
    .map_err(std::io::Error::other)?;
    body.push(b'\n');
    write_file(dir, name, b"", &body)
}

fn write_file(dir: &Path, name: &str, head: &[u8], body: &[u8]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut f = fs::File::create(&path)?;
    f.write_all(head)?;
    f.write_all(body)?;
    Ok(path)
}
