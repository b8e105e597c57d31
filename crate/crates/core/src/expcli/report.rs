//! Plot-data tables aggregated over completed cells.
//!
//! All files go to `<out>/report/` and begin with a `# config <hash>` line
//! followed by a tab-separated header:
//!
//! | file | header |
//! |------|--------|
//! | `curves.tsv` | `regime stage domain mean std seeds` |
//! | `bwt.tsv` | `domain` then one column per sequential regime |
//! | `heatmap_<regime>.tsv` | `row col mean std seeds` |
//! | `summary.tsv` | `regime seeds final_mean final_std bwt_mean bwt_std` |
//!
//! `curves.tsv` holds the mean Dice on each test domain after every stage,
//! plus an `average` pseudo-domain. Heatmap rows are stage indices for
//! fine-tune and replay, the trained-on domain for single-domain, and the
//! single row `pooled` for multi-domain.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{config_diff, ExperimentConfig};
use super::run::split_hash_line;
use super::table::Table;
use crate::continual::{compute_bwt, Regime, ResultMatrix};
use crate::error::{Error, Result};
use crate::rawio::write_atomic;

pub const CURVES_HEADER: [&str; 6] = ["regime", "stage", "domain", "mean", "std", "seeds"];
pub const HEATMAP_HEADER: [&str; 5] = ["row", "col", "mean", "std", "seeds"];
pub const SUMMARY_HEADER: [&str; 6] = [
    "regime",
    "seeds",
    "final_mean",
    "final_std",
    "bwt_mean",
    "bwt_std",
];

#[derive(Clone, Debug)]
pub struct CellResult {
    pub regime: Regime,
    pub seed: u64,
    pub matrix: ResultMatrix,
}

#[derive(Clone, Debug)]
pub struct ReportSummary {
    pub config_hash: String,
    pub files: Vec<PathBuf>,
    pub cells: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn key_value(text: &str, key: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim().to_string())
}

/// Loads every completed cell under `<out>/cells`, refusing incomplete
/// cells and cells produced by different configurations.
pub fn load_cells(out: &Path) -> Result<(ExperimentConfig, Vec<CellResult>)> {
    let root = out.join("cells");
    let mut dirs = Vec::new();
    let regimes = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    for r in regimes {
        let r = r.map_err(|e| Error::io(&root, e))?.path();
        if !r.is_dir() {
            continue;
        }
        for s in fs::read_dir(&r).map_err(|e| Error::io(&r, e))? {
            let s = s.map_err(|e| Error::io(&r, e))?.path();
            if s.is_dir() {
                dirs.push(s);
            }
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::State(format!("no cells under {}", root.display())));
    }

    let mut reference: Option<(PathBuf, String)> = None;
    let mut cells = Vec::new();
    for dir in &dirs {
        let cell_path = dir.join("cell.txt");
        let cell = fs::read_to_string(&cell_path).map_err(|_| {
            Error::State(format!(
                "cell {} is incomplete; rerun `clseg run` to finish it",
                dir.display()
            ))
        })?;
        let config_path = dir.join("config.txt");
        let config = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        match &reference {
            None => reference = Some((dir.clone(), config)),
            Some((ref_dir, ref_config)) if *ref_config != config => {
                return Err(Error::Mismatch(format!(
                    "cells {} and {} come from different configurations:\n{}",
                    ref_dir.display(),
                    dir.display(),
                    config_diff(ref_config, &config).join("\n")
                )));
            }
            Some(_) => {}
        }
        let field = |k: &str| {
            key_value(&cell, k).ok_or_else(|| Error::format(&cell_path, format!("missing `{k}`")))
        };
        let regime: Regime = field("regime")?.parse()?;
        let seed: u64 = field("seed")?
            .parse()
            .map_err(|_| Error::format(&cell_path, "bad seed"))?;
        let r_path = dir.join("R.tsv");
        let text = fs::read_to_string(&r_path).map_err(|e| Error::io(&r_path, e))?;
        let (_, body) = split_hash_line(&r_path, &text)?;
        let matrix = ResultMatrix::from_tsv(&r_path, body)?;
        cells.push(CellResult {
            regime,
            seed,
            matrix,
        });
    }
    cells.sort_by_key(|c| (c.regime, c.seed));
    let (_, config) = reference.expect("at least one cell");
    Ok((ExperimentConfig::parse(&config)?, cells))
}

/// Value of `R[row][col]` with the column given by domain name.
fn at(m: &ResultMatrix, row: usize, domain: &str) -> f64 {
    let j = m
        .domains()
        .iter()
        .position(|d| d == domain)
        .expect("every cell covers the configured domains");
    m.rows()[row][j]
}

fn curves(hash: &str, domains: &[String], groups: &BTreeMap<Regime, Vec<&CellResult>>) -> Table {
    let mut t = Table::new(hash, &CURVES_HEADER);
    for (regime, cells) in groups {
        let stages = match regime {
            Regime::MultiDomain => 1,
            _ => cells[0].matrix.k(),
        };
        for stage in 0..stages {
            for d in domains {
                let xs: Vec<f64> = cells.iter().map(|c| at(&c.matrix, stage, d)).collect();
                let (m, s) = mean_std(&xs);
                t.push(vec![
                    regime.to_string(),
                    stage.to_string(),
                    d.clone(),
                    num(m),
                    num(s),
                    xs.len().to_string(),
                ]);
            }
            let xs: Vec<f64> = cells
                .iter()
                .map(|c| c.matrix.rows()[stage].iter().sum::<f64>() / c.matrix.k() as f64)
                .collect();
            let (m, s) = mean_std(&xs);
            t.push(vec![
                regime.to_string(),
                stage.to_string(),
                "average".into(),
                num(m),
                num(s),
                xs.len().to_string(),
            ]);
        }
    }
    t
}

fn heatmap(hash: &str, domains: &[String], regime: Regime, cells: &[&CellResult]) -> Table {
    let mut t = Table::new(hash, &HEATMAP_HEADER);
    let k = cells[0].matrix.k();
    let mut push = |row: String, xs: Vec<f64>, col: &str| {
        let (m, s) = mean_std(&xs);
        t.push(vec![
            row,
            col.to_string(),
            num(m),
            num(s),
            xs.len().to_string(),
        ]);
    };
    match regime {
        Regime::MultiDomain => {
            for d in domains {
                push(
                    "pooled".into(),
                    cells.iter().map(|c| at(&c.matrix, 0, d)).collect(),
                    d,
                );
            }
        }
        Regime::SingleDomain => {
            for trained in domains {
                for d in domains {
                    let xs = cells
                        .iter()
                        .map(|c| {
                            let i = c
                                .matrix
                                .row_labels()
                                .iter()
                                .position(|l| l == trained)
                                .expect("one model per domain");
                            at(&c.matrix, i, d)
                        })
                        .collect();
                    push(trained.clone(), xs, d);
                }
            }
        }
        _ => {
            for stage in 0..k {
                for d in domains {
                    push(
                        stage.to_string(),
                        cells.iter().map(|c| at(&c.matrix, stage, d)).collect(),
                        d,
                    );
                }
            }
        }
    }
    t
}

type BwtByDomain = BTreeMap<String, Vec<f64>>;

fn bwt_table(
    hash: &str,
    domains: &[String],
    groups: &BTreeMap<Regime, Vec<&CellResult>>,
) -> Result<Table> {
    let sequential: Vec<Regime> = groups
        .keys()
        .copied()
        .filter(|r| r.is_sequential())
        .collect();
    let mut header = vec!["domain"];
    header.extend(sequential.iter().map(|r| r.as_str()));
    let mut t = Table::new(hash, &header);

    // Rows follow the stage order when every cell shares it.
    let mut rows = domains.to_vec();
    if let Some(first) = sequential.first().map(|r| &groups[r]) {
        let order = first[0].matrix.domains().to_vec();
        if sequential
            .iter()
            .flat_map(|r| &groups[r])
            .all(|c| c.matrix.domains() == order)
        {
            rows = order;
        }
    }

    // Per regime: per-domain BWT values and per-cell averages.
    let mut per_regime: Vec<(BwtByDomain, Vec<f64>)> = Vec::new();
    for r in &sequential {
        let mut by_domain: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut averages = Vec::new();
        for c in &groups[r] {
            let bwt = compute_bwt(&c.matrix)?;
            for (d, v) in c.matrix.domains().iter().zip(bwt.per_domain_with_final()) {
                by_domain.entry(d.clone()).or_default().push(v);
            }
            averages.push(bwt.average);
        }
        per_regime.push((by_domain, averages));
    }
    for d in &rows {
        let mut row = vec![d.clone()];
        row.extend(per_regime.iter().map(|(m, _)| num(mean_std(&m[d]).0)));
        t.push(row);
    }
    let mut avg = vec!["average".to_string()];
    avg.extend(per_regime.iter().map(|(_, a)| num(mean_std(a).0)));
    t.push(avg);
    Ok(t)
}

fn summary(hash: &str, groups: &BTreeMap<Regime, Vec<&CellResult>>) -> Result<Table> {
    let mut t = Table::new(hash, &SUMMARY_HEADER);
    for (regime, cells) in groups {
        let finals: Vec<f64> = cells
            .iter()
            .map(|c| {
                let last = c.matrix.rows().last().expect("complete matrix");
                last.iter().sum::<f64>() / last.len() as f64
            })
            .collect();
        let bwts = cells
            .iter()
            .map(|c| compute_bwt(&c.matrix).map(|b| b.average))
            .collect::<Result<Vec<_>>>()?;
        let (fm, fs) = mean_std(&finals);
        let (bm, bs) = mean_std(&bwts);
        t.push(vec![
            regime.to_string(),
            cells.len().to_string(),
            num(fm),
            num(fs),
            num(bm),
            num(bs),
        ]);
    }
    Ok(t)
}

/// Writes the report tables for every completed cell under `out`.
pub fn write_report(out: &Path) -> Result<ReportSummary> {
    let (cfg, cells) = load_cells(out)?;
    let hash = cfg.hash();
    let domains: Vec<String> = cfg.specs.iter().map(|s| s.name.clone()).collect();
    let mut groups: BTreeMap<Regime, Vec<&CellResult>> = BTreeMap::new();
    for c in &cells {
        groups.entry(c.regime).or_default().push(c);
    }

    let dir = out.join("report");
    let mut files = Vec::new();
    let mut emit = |name: String, table: Table| -> Result<()> {
        let path = dir.join(name);
        table.write(&path)?;
        files.push(path);
        Ok(())
    };
    emit("curves.tsv".into(), curves(&hash, &domains, &groups))?;
    emit("bwt.tsv".into(), bwt_table(&hash, &domains, &groups)?)?;
    for (regime, group) in &groups {
        emit(
            format!("heatmap_{regime}.tsv"),
            heatmap(&hash, &domains, *regime, group),
        )?;
    }
    emit("summary.tsv".into(), summary(&hash, &groups)?)?;

    let mut manifest = format!(
        "config_hash = {hash}\nversion = {}\n",
        env!("CARGO_PKG_VERSION")
    );
    for c in &cells {
        manifest.push_str(&format!("cell = {}/seed-{}\n", c.regime, c.seed));
    }
    let manifest_path = dir.join("manifest.txt");
    write_atomic(&manifest_path, manifest.as_bytes())?;
    files.push(manifest_path);
    let config_path = dir.join("config.txt");
    write_atomic(&config_path, cfg.canonical_text().as_bytes())?;
    files.push(config_path);

    Ok(ReportSummary {
        config_hash: hash,
        files,
        cells: cells.len(),
    })
}
