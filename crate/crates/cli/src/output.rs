use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::JobConfig;

/// 17 significant digits, '.' decimal, no locale: round-trips every f64.
pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A CSV table whose first line records the config hash.
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new(hash: &str, header: &[&str]) -> Self {
        let mut body = format!("# config_sha256: {hash}\n");
        body.push_str(&header.join(","));
        body.push('\n');
        Csv { body }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match c {
                Cell::F(v) => self.body.push_str(&float(*v)),
                Cell::I(v) => {
                    let _ = write!(self.body, "{v}");
                }
                Cell::B(v) => self.body.push_str(if *v { "true" } else { "false" }),
            }
        }
        self.body.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.body).with_context(|| format!("writing {}", path.display()))
    }
}

pub enum Cell {
    F(f64),
    I(u64),
    B(bool),
}

pub struct Writer<'a> {
    pub dir: PathBuf,
    pub cfg: &'a JobConfig,
    pub threads: usize,
    pub files: Vec<String>,
}

impl<'a> Writer<'a> {
    pub fn new(dir: PathBuf, cfg: &'a JobConfig, threads: usize) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Writer {
            dir,
            cfg,
            threads,
            files: Vec::new(),
        })
    }

    pub fn save_csv(&mut self, name: &str, csv: &Csv) -> Result<()> {
        csv.write(&self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn provenance(&self) -> Value {
        json!({
            "config_sha256": self.cfg.hash,
            "config_path": self.cfg.path.display().to_string(),
            "seed": self.cfg.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "program": env!("CARGO_PKG_NAME"),
            "threads": self.threads,
        })
    }

    /// JSON document with the config hash at top level and under provenance.
    pub fn save_json<T: Serialize>(&mut self, name: &str, kind: &str, body: &T) -> Result<()> {
        let mut doc = json!({
            "config_sha256": self.cfg.hash,
            "kind": kind,
            "mode": self.cfg.mode.name(),
            "provenance": self.provenance(),
        });
        let extra = serde_json::to_value(body)?;
        if let (Value::Object(d), Value::Object(e)) = (&mut doc, extra) {
            d.extend(e);
        }
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }
}
