//! Atomic result files with the resolved config embedded.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

pub struct Sink<'a> {
    config: &'a ExperimentConfig,
    written: Vec<PathBuf>,
}

impl<'a> Sink<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let dir = config.output.dir.as_deref().unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { config, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Resolved config on its own, for re-running.
    pub fn config_echo(&mut self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self.config)?;
        text.push('\n');
        self.write("config.json", &text)
    }

    /// `{"config": ..., "result": ...}`, pretty-printed.
    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<()> {
        let doc = json!({ "config": self.config, "result": result });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// CSV preceded by a `# config: {...}` comment line.
    pub fn csv(&mut self, name: &str, table: &str) -> Result<()> {
        let echo = serde_json::to_string(self.config)?;
        self.write(name, &format!("# config: {echo}\n{table}"))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.config.output.path(name);
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp =
            tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }
}

/// Strip the config echo from a result document.
pub fn result_of(doc: Value) -> Value {
    match doc {
        Value::Object(mut m) => m.remove("result").unwrap_or(Value::Null),
        other => other,
    }
}
