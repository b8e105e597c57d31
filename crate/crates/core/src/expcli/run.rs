//! Execution of (regime × seed) cells with on-disk resumption.
//!
//! ```text
//! <out>/cells/<regime>/seed-<s>/config.txt            canonical config
//! <out>/cells/<regime>/seed-<s>/stages.jsonl          one record per finished stage
//! <out>/cells/<regime>/seed-<s>/checkpoints/stage-<i>.ckpt
//! <out>/cells/<regime>/seed-<s>/audit/stage-<i>.tsv   accesses of stage i
//! <out>/cells/<regime>/seed-<s>/R.tsv                 written on completion
//! <out>/cells/<regime>/seed-<s>/audit.tsv             written on completion
//! <out>/cells/<regime>/seed-<s>/cell.txt              written last; marks completion
//! ```
//!
//! A stage counts as finished once its line is in `stages.jsonl`; that line
//! is written after the checkpoint and audit file it refers to.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::{config_diff, ExperimentConfig};
use crate::continual::{
    domain_order, run_regime_with, AccessLog, CompletedStage, Regime, StageObserver, StageRecord,
};
use crate::domainsynth::{read_archive, write_archive, Domain};
use crate::error::{Error, Result};
use crate::rawio::write_atomic;
use crate::segnet::{load_checkpoint, save_checkpoint, Model};

pub const WORKERS_ENV: &str = "CLSEG_WORKERS";

pub fn cell_dir(out: &Path, regime: Regime, seed: u64) -> PathBuf {
    out.join("cells")
        .join(regime.as_str())
        .join(format!("seed-{seed}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellStatus {
    /// Every stage ran or was restored in this invocation.
    Completed,
    /// The cell was already complete on disk.
    Skipped,
    /// Stopped early on request; rerun to resume.
    Interrupted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellReport {
    pub regime: Regime,
    pub seed: u64,
    pub status: CellStatus,
    pub trained_stages: usize,
    pub restored_stages: usize,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Parallel cells; 1 runs everything on the calling thread.
    pub workers: usize,
    /// Stop every cell after this many newly trained stages.
    pub stop_after: Option<usize>,
}

impl RunOptions {
    /// Worker count from the environment, defaulting to 1.
    pub fn from_env() -> Result<Self> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "{WORKERS_ENV} must be a positive integer, got `{v}`"
                    ))
                })?,
            Err(_) => 1,
        };
        Ok(RunOptions {
            workers,
            stop_after: None,
        })
    }
}

fn read_opt(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(Some(t)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub(crate) fn hash_line(hash: &str) -> String {
    format!("# config {hash}\n")
}

/// Strips the leading `# config <hash>` line, returning the hash and body.
pub(crate) fn split_hash_line<'a>(path: &Path, text: &'a str) -> Result<(&'a str, &'a str)> {
    let (first, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::format(path, "missing config line"))?;
    let hash = first
        .strip_prefix("# config ")
        .ok_or_else(|| Error::format(path, "first line must be `# config <hash>`"))?;
    Ok((hash, body))
}

struct CellStore {
    dir: PathBuf,
    records: Vec<StageRecord>,
    stop_after: Option<usize>,
}

impl CellStore {
    fn stages_path(&self) -> PathBuf {
        self.dir.join("stages.jsonl")
    }

    fn checkpoint_path(&self, stage: usize) -> PathBuf {
        self.dir
            .join("checkpoints")
            .join(format!("stage-{stage}.ckpt"))
    }

    fn audit_path(&self, stage: usize) -> PathBuf {
        self.dir.join("audit").join(format!("stage-{stage}.tsv"))
    }

    fn load_records(&mut self) -> Result<()> {
        let path = self.stages_path();
        if let Some(text) = read_opt(&path)? {
            for line in text.lines().filter(|l| !l.is_empty()) {
                let r: StageRecord =
                    serde_json::from_str(line).map_err(|e| Error::format(&path, e.to_string()))?;
                self.records.push(r);
            }
        }
        Ok(())
    }

    fn stages_text(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).map_err(|e| Error::State(e.to_string()))?);
            s.push('\n');
        }
        Ok(s)
    }
}

impl StageObserver for CellStore {
    fn restore(&mut self, stage: usize) -> Result<Option<CompletedStage>> {
        let Some(record) = self.records.get(stage).cloned() else {
            return Ok(None);
        };
        let model = load_checkpoint(&self.checkpoint_path(stage))?;
        let audit_path = self.audit_path(stage);
        let text = fs::read_to_string(&audit_path).map_err(|e| Error::io(&audit_path, e))?;
        let accesses = AccessLog::from_tsv(&audit_path, &text)?;
        Ok(Some(CompletedStage {
            record,
            model,
            accesses,
        }))
    }

    fn stage_completed(
        &mut self,
        record: &StageRecord,
        model: &Model,
        accesses: &AccessLog,
    ) -> Result<()> {
        if record.stage != self.records.len() {
            return Err(Error::State(format!(
                "stage {} finished but {} stages are logged",
                record.stage,
                self.records.len()
            )));
        }
        save_checkpoint(model, &self.checkpoint_path(record.stage))?;
        write_atomic(&self.audit_path(record.stage), accesses.to_tsv().as_bytes())?;
        self.records.push(record.clone());
        write_atomic(&self.stages_path(), self.stages_text()?.as_bytes())
    }

    fn should_stop(&mut self, trained: usize) -> bool {
        self.stop_after.is_some_and(|n| trained >= n)
    }
}

/// Domains of `cfg` in stage order for `seed`.
pub fn ordered_domains(cfg: &ExperimentConfig, domains: &[Domain], seed: u64) -> Vec<Domain> {
    let sizes: Vec<usize> = domains.iter().map(|d| d.spec.n_subjects).collect();
    domain_order(&sizes, cfg.order, seed)
        .into_iter()
        .map(|i| domains[i].clone())
        .collect()
}

/// Runs or resumes one cell.
pub fn run_cell(
    cfg: &ExperimentConfig,
    domains: &[Domain],
    regime: Regime,
    seed: u64,
    stop_after: Option<usize>,
) -> Result<CellReport> {
    let dir = cell_dir(&cfg.output, regime, seed);
    let canonical = cfg.canonical_text();
    let hash = cfg.hash();
    let mut report = CellReport {
        regime,
        seed,
        status: CellStatus::Completed,
        trained_stages: 0,
        restored_stages: 0,
    };
    let config_path = dir.join("config.txt");
    match read_opt(&config_path)? {
        Some(existing) if existing != canonical => {
            return Err(Error::Mismatch(format!(
                "{} was produced by a different configuration; remove it to rerun\n{}",
                dir.display(),
                config_diff(&existing, &canonical).join("\n")
            )));
        }
        Some(_) => {
            if dir.join("cell.txt").is_file() {
                report.status = CellStatus::Skipped;
                return Ok(report);
            }
        }
        None => write_atomic(&config_path, canonical.as_bytes())?,
    }

    let sequence = ordered_domains(cfg, domains, seed);
    let mut store = CellStore {
        dir: dir.clone(),
        records: Vec::new(),
        stop_after,
    };
    store.load_records()?;
    let mut train = cfg.train.clone();
    train.regime = regime;
    let outcome = run_regime_with(&sequence, &cfg.model, &train, seed, &mut store)?;
    report.trained_stages = outcome.trained_stages;
    report.restored_stages = outcome.restored_stages;
    if outcome.interrupted {
        report.status = CellStatus::Interrupted;
        return Ok(report);
    }

    let order: Vec<String> = sequence.iter().map(|d| d.name().to_string()).collect();
    let violations = if regime.is_sequential() {
        outcome.audit.zero_shot_violations(&order)
    } else {
        Vec::new()
    };
    if let Some(v) = violations.first() {
        return Err(Error::State(format!(
            "audit: stage {} read training data of unseen domain {}",
            v.stage, v.domain
        )));
    }
    let r_text = format!("{}{}", hash_line(&hash), outcome.matrix.to_tsv());
    write_atomic(&dir.join("R.tsv"), r_text.as_bytes())?;
    let audit_text = format!("{}{}", hash_line(&hash), outcome.audit.to_tsv());
    write_atomic(&dir.join("audit.tsv"), audit_text.as_bytes())?;
    let cell = format!(
        "regime = {regime}\nseed = {seed}\nconfig_hash = {hash}\norder = {}\nstatus = complete\n",
        order.join(",")
    );
    write_atomic(&dir.join("cell.txt"), cell.as_bytes())?;
    Ok(report)
}

/// Ensures the archive exists and loads its domains in config order.
pub fn prepare_domains(cfg: &ExperimentConfig) -> Result<Vec<Domain>> {
    let root = cfg.archive_root();
    write_archive(&root, &cfg.specs)?;
    read_archive(&root)
}

/// Runs every configured (regime × seed) cell.
pub fn run_cells(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<CellReport>> {
    cfg.validate()?;
    let domains = prepare_domains(cfg)?;
    let jobs: Vec<(Regime, u64)> = cfg
        .regimes
        .iter()
        .flat_map(|&r| cfg.seeds.iter().map(move |&s| (r, s)))
        .collect();
    let workers = opts.workers.max(1).min(jobs.len().max(1));
    if workers == 1 {
        return jobs
            .iter()
            .map(|&(r, s)| run_cell(cfg, &domains, r, s, opts.stop_after))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellReport>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(r, s)) = jobs.get(i) else { break };
                let res = run_cell(cfg, &domains, r, s, opts.stop_after);
                results.lock().expect("worker panicked")[i] = Some(res);
            });
        }
    });
    results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}
