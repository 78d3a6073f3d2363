use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

/// One prompt/response exchange.
#[derive(Debug, Clone, Serialize)]
pub struct RunLogRecord<'a> {
    pub timestamp: String,
    pub task: &'a str,
    pub sample_id: &'a str,
    pub mode: &'a str,
    pub provider_id: &'a str,
    pub model: &'a str,
    pub prompt_hash: &'a str,
    pub prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Append-only line-delimited audit log of every LLM call.
#[derive(Debug)]
pub struct RunLog {
    out: Mutex<BufWriter<File>>,
}

impl RunLog {
    pub fn append(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RunLog {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn write(&self, record: &RunLogRecord<'_>) -> std::io::Result<()> {
        let line = serde_json::to_string(record)?;
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()
    }
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
