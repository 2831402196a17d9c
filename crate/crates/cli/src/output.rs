use std::fs;
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::json;

use selfscope_core::project::canonical_json;

use crate::config::Resolved;
use crate::CliError;

/// A command's result: a machine-readable document, a summary for the
/// terminal, and any extra files.
pub struct Output {
    name: String,
    json: String,
    text: String,
    files: Vec<(String, String)>,
}

impl Output {
    pub fn new<T: Serialize + ?Sized>(name: &str, value: &T, text: String) -> Self {
        Output {
            name: name.to_string(),
            json: canonical_json(value),
            text,
            files: Vec::new(),
        }
    }

    pub fn with_file(mut self, name: &str, body: String) -> Self {
        self.files.push((name.to_string(), body));
        self
    }

    pub fn write(self, r: &Resolved, started: DateTime<Utc>) -> Result<(), CliError> {
        let dir = &r.out;
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let config = toml::to_string(&r.config).map_err(|e| CliError::usage(format!("cannot encode config: {e}")))?;
        let mut files = vec![
            (format!("{}.json", self.name), self.json),
            (format!("{}.txt", self.name), self.text.clone()),
            (format!("{}.config.toml", self.name), config),
        ];
        files.extend(self.files);
        for (name, body) in &files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        }
        let stamps = json!({"started": started.to_rfc3339(), "finished": Utc::now().to_rfc3339()});
        let path = dir.join(format!("{}.timestamps.json", self.name));
        fs::write(&path, canonical_json(&stamps)).map_err(|e| CliError::io(&path, e))?;
        let mut stdout = std::io::stdout().lock();
        let _ = stdout.write_all(self.text.as_bytes());
        Ok(())
    }
}
