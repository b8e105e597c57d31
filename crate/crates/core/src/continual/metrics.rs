use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// K×K test-Dice matrix: `R[i][j]` is the mean test Dice on domain `j`
/// after training stage `i`. Rows are appended in stage order.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultMatrix {
    domains: Vec<String>,
    row_labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl ResultMatrix {
    pub fn new(domains: Vec<String>) -> Self {
        ResultMatrix {
            domains,
            row_labels: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Builds a complete matrix in one go; every entry must lie in `[0, 1]`.
    pub fn from_rows(domains: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = ResultMatrix::new(domains);
        for (i, row) in rows.into_iter().enumerate() {
            let label = m.domains.get(i).cloned().unwrap_or_default();
            m.push_row(label, row)?;
        }
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.k()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.rows.get(i).and_then(|r| r.get(j)).copied()
    }

    pub fn push_row(&mut self, label: impl Into<String>, row: Vec<f64>) -> Result<()> {
        if self.rows.len() >= self.k() {
            return Err(Error::Contract("result matrix already has K rows".into()));
        }
        if row.len() != self.k() {
            return Err(Error::Contract(format!(
                "row has {} entries, expected {}",
                row.len(),
                self.k()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("Dice value {v} outside [0, 1]")));
        }
        self.row_labels.push(label.into());
        self.rows.push(row);
        Ok(())
    }

    /// Tab-separated text: header `trained_on` + domain names, one line per
    /// row. Values use shortest round-trip formatting.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("trained_on");
        for d in &self.domains {
            let _ = write!(s, "\t{d}");
        }
        s.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.rows) {
            s.push_str(label);
            for v in row {
                let _ = write!(s, "\t{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty result matrix"))?;
        let mut cols = header.split('\t');
        if cols.next() != Some("trained_on") {
            return Err(Error::format(path, "header must start with `trained_on`"));
        }
        let mut m = ResultMatrix::new(cols.map(str::to_string).collect());
        for line in lines.filter(|l| !l.is_empty()) {
            let mut fields = line.split('\t');
            let label = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::format(path, format!("bad value `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            m.push_row(label, row)
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        Ok(m)
    }
}

/// Backward transfer of a complete result matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Bwt {
    pub average: f64,
    /// `R[K][i] - R[i][i]` for every domain but the last.
    pub per_domain: Vec<f64>,
}

impl Bwt {
    /// Per-domain values padded with the final domain's `0.0`.
    pub fn per_domain_with_final(&self) -> Vec<f64> {
        let mut v = self.per_domain.clone();
        v.push(0.0);
        v
    }
}

/// `BWT = 1/(K-1) · Σ_{i<K} (R[K][i] − R[i][i])`; zero for K = 1.
pub fn compute_bwt(r: &ResultMatrix) -> Result<Bwt> {
    if !r.is_complete() {
        return Err(Error::Contract(format!(
            "BWT needs a complete {k}×{k} matrix, have {} rows",
            r.rows.len(),
            k = r.k()
        )));
    }
    let k = r.k();
    if k <= 1 {
        return Ok(Bwt {
            average: 0.0,
            per_domain: Vec::new(),
        });
    }
    let last = &r.rows[k - 1];
    let per_domain: Vec<f64> = (0..k - 1).map(|i| last[i] - r.rows[i][i]).collect();
    let average = per_domain.iter().sum::<f64>() / (k - 1) as f64;
    Ok(Bwt {
        average,
        per_domain,
    })
}
