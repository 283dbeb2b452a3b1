use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Format;
use crate::Failure;

/// A table for the CSV (or JSON) artifact.
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: Vec<&'static str>) -> Self {
        Self {
            headers,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    Value::Object(
                        self.headers
                            .iter()
                            .zip(r)
                            .map(|(h, v)| {
                                let val = v
                                    .parse::<f64>()
                                    .ok()
                                    .and_then(|f| serde_json::Number::from_f64(f).map(Value::Number))
                                    .unwrap_or_else(|| Value::String(v.clone()));
                                (h.to_string(), val)
                            })
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub struct Emitter {
    pub dir: PathBuf,
    pub format: Format,
}

impl Emitter {
    /// Writes `<stem>.json` (config + summary) and, when given, the table as
    /// `<stem>.csv` or inside the JSON. Returns the paths written.
    pub fn emit<S: Serialize>(
        &self,
        stem: &str,
        config: &Value,
        summary: &S,
        table: Option<&Table>,
    ) -> Result<Vec<PathBuf>, Failure> {
        fs::create_dir_all(&self.dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", self.dir.display())))?;
        let mut written = Vec::new();
        let mut doc = json!({ "config": config, "summary": summary });
        if let (Some(t), Format::Json) = (table, self.format) {
            doc["table"] = t.to_json();
        }
        let jpath = self.dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Io(e.to_string()))? + "\n";
        write(&jpath, text.as_bytes())?;
        written.push(jpath);
        if let (Some(t), Format::Csv) = (table, self.format) {
            let cpath = self.dir.join(format!("{stem}.csv"));
            let mut buf = format!("# config {}\n", serde_json::to_string(config).unwrap()).into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(&t.headers).map_err(|e| Failure::Io(e.to_string()))?;
                for r in &t.rows {
                    w.write_record(r).map_err(|e| Failure::Io(e.to_string()))?;
                }
                w.flush().map_err(|e| Failure::Io(e.to_string()))?;
            }
            write(&cpath, &buf)?;
            written.push(cpath);
        }
        Ok(written)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}
