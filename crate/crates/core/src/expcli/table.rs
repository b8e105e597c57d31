use std::path::Path;

use crate::error::{Error, Result};
use crate::rawio;

/// Tab-separated table preceded by a `# config <hash>` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub config_hash: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

const HASH_PREFIX: &str = "# config ";

impl Table {
    pub fn new(config_hash: &str, header: &[&str]) -> Self {
        Table {
            config_hash: config_hash.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_text(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .delimiter(b'\t')
            .quote_style(csv::QuoteStyle::Never)
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body =
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
        format!("{HASH_PREFIX}{}\n{body}", self.config_hash)
    }

    /// Parses `text`; when `expected_header` is given the header must match
    /// it exactly.
    pub fn parse(path: &Path, text: &str, expected_header: Option<&[&str]>) -> Result<Self> {
        let (first, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::format(path, "missing config line"))?;
        let config_hash = first
            .strip_prefix(HASH_PREFIX)
            .ok_or_else(|| Error::format(path, "first line must be `# config <hash>`"))?
            .to_string();
        let mut r = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .has_headers(true)
            .from_reader(body.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if let Some(exp) = expected_header {
            if header != exp {
                return Err(Error::format(
                    path,
                    format!("header {header:?} differs from documented {exp:?}"),
                ));
            }
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table {
            config_hash,
            header,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        rawio::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path, expected_header: Option<&[&str]>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text, expected_header)
    }
}
