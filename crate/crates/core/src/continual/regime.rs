use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::audit::{AccessLog, Split};
use super::buffer::{MemoryBuffer, DEFAULT_BUFFER_CAP};
use super::metrics::ResultMatrix;
use super::optim::{lr_schedule, AdamW, DEFAULT_LR, DEFAULT_LR_GAMMA, DEFAULT_LR_STEP};
use crate::autodiff::{Tape, Tensor};
use crate::domainsynth::{sample_patches_with, Domain, Sample, DEFAULT_FG_PROBABILITY};
use crate::error::{Error, Result};
use crate::objectives::{dice_loss, dice_score, DEFAULT_DICE_EPS, DEFAULT_THRESHOLD};
use crate::rng::{self, Stream};
use crate::segnet::{Model, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Regime {
    SingleDomain,
    MultiDomain,
    FineTune,
    Replay,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::SingleDomain,
        Regime::MultiDomain,
        Regime::FineTune,
        Regime::Replay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SingleDomain => "single-domain",
            Regime::MultiDomain => "multi-domain",
            Regime::FineTune => "fine-tune",
            Regime::Replay => "replay",
        }
    }

    /// Fine-tune and replay train one model through the domain sequence.
    pub fn is_sequential(self) -> bool {
        matches!(self, Regime::FineTune | Regime::Replay)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Regime::ALL.iter().map(|r| r.as_str()).collect();
                Error::Usage(format!(
                    "unknown regime `{s}`; valid regimes: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mixing {
    /// Buffer entries join the current train set and are shuffled together.
    Merged,
    /// Every batch is half current data, half buffer; the loss is the sum
    /// of the two halves' Dice losses.
    Balanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transfer {
    All,
    /// Decoder and head are re-initialized at the start of every stage after
    /// the first.
    EncoderOnly,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, $($variant:path => $text:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " `{}`; expected one of: {}"),
                        other,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

text_enum!(Mixing, "mixing mode", Mixing::Merged => "merged", Mixing::Balanced => "balanced");
text_enum!(Transfer, "transfer mode", Transfer::All => "all", Transfer::EncoderOnly => "encoder-only");

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub epochs: usize,
    /// Images per batch (per half in balanced mixing it is `batch_size / 2`).
    pub batch_size: usize,
    pub patches_per_image: usize,
    pub fg_probability: f64,
    pub lr: f64,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub weight_decay: f64,
    /// `None` is an unbounded buffer.
    pub buffer_cap: Option<usize>,
    pub mixing: Mixing,
    pub transfer: Transfer,
    pub dice_eps: f64,
    pub threshold: f64,
}

pub const DEFAULT_EPOCHS: usize = 40;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.01;

impl RegimeConfig {
    pub fn new(regime: Regime) -> Self {
        RegimeConfig {
            regime,
            epochs: DEFAULT_EPOCHS,
            batch_size: 4,
            patches_per_image: 4,
            fg_probability: DEFAULT_FG_PROBABILITY,
            lr: DEFAULT_LR,
            lr_step: DEFAULT_LR_STEP,
            lr_gamma: DEFAULT_LR_GAMMA,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            buffer_cap: Some(DEFAULT_BUFFER_CAP),
            mixing: Mixing::Merged,
            transfer: Transfer::All,
            dice_eps: DEFAULT_DICE_EPS,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patches_per_image", self.patches_per_image),
            ("lr_step", self.lr_step),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.buffer_cap == Some(0) {
            return Err(Error::Config("buffer cap must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return Err(Error::Config(format!(
                "lr gamma {} outside (0, 1]",
                self.lr_gamma
            )));
        }
        if !(self.weight_decay >= 0.0 && self.lr * self.weight_decay < 1.0) {
            return Err(Error::Config(format!(
                "weight decay {} must be non-negative with lr·λ < 1",
                self.weight_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.fg_probability) {
            return Err(Error::Config(format!(
                "foreground probability {} outside [0, 1]",
                self.fg_probability
            )));
        }
        if self.dice_eps.is_nan() || self.dice_eps <= 0.0 {
            return Err(Error::Config("dice eps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// One training sample tagged with its domain.
#[derive(Clone, Copy, Debug)]
pub struct StageItem<'a> {
    pub domain: &'a str,
    pub sample: &'a Sample,
}

impl StageItem<'_> {
    pub fn key(&self) -> (String, u32) {
        (self.domain.to_string(), self.sample.subject)
    }
}

#[derive(Clone, Debug)]
pub enum StageSet<'a> {
    Merged(Vec<StageItem<'a>>),
    Balanced {
        current: Vec<StageItem<'a>>,
        memory: Vec<StageItem<'a>>,
    },
}

impl<'a> StageSet<'a> {
    pub fn items(&self) -> Vec<StageItem<'a>> {
        match self {
            StageSet::Merged(items) => items.clone(),
            StageSet::Balanced { current, memory } => {
                current.iter().chain(memory.iter()).copied().collect()
            }
        }
    }

    /// Sorted `(domain, subject)` keys, one per item.
    pub fn multiset(&self) -> Vec<(String, u32)> {
        let mut keys: Vec<_> = self.items().iter().map(StageItem::key).collect();
        keys.sort();
        keys
    }
}

fn tag<'a>(domain: &'a Domain) -> impl Iterator<Item = StageItem<'a>> {
    domain.train.iter().map(move |s| StageItem {
        domain: domain.name(),
        sample: s,
    })
}

/// Training data for one sequential stage.
///
/// Fine-tune sees the current train set only. Replay adds the buffered
/// entries of earlier domains, merged or kept as a separate half.
pub fn stage_train_set<'a>(
    regime: Regime,
    mixing: Mixing,
    current: &'a Domain,
    buffer: &'a MemoryBuffer,
) -> Result<StageSet<'a>> {
    let own: Vec<_> = tag(current).collect();
    let memory: Vec<StageItem<'a>> = buffer
        .entries()
        .iter()
        .filter(|e| e.domain != current.name())
        .map(|e| StageItem {
            domain: &e.domain,
            sample: &e.sample,
        })
        .collect();
    match regime {
        Regime::FineTune => Ok(StageSet::Merged(own)),
        Regime::Replay if memory.is_empty() => Ok(StageSet::Merged(own)),
        Regime::Replay => Ok(match mixing {
            Mixing::Merged => StageSet::Merged(own.into_iter().chain(memory).collect()),
            Mixing::Balanced => StageSet::Balanced {
                current: own,
                memory,
            },
        }),
        other => Err(Error::Contract(format!(
            "stage_train_set applies to sequential regimes, not {other}"
        ))),
    }
}

/// Pooled training data of the multi-domain regime.
pub fn pooled_train_set(domains: &[Domain]) -> StageSet<'_> {
    StageSet::Merged(domains.iter().flat_map(tag).collect())
}

/// Per-stage run-log record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub domain: String,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub row: Vec<f64>,
}

fn patch_batch(
    items: &[StageItem<'_>],
    cfg: &RegimeConfig,
    patch_shape: &[usize],
    rng: &mut rng::Rng,
    stage: usize,
    audit: &mut AccessLog,
) -> Result<(Tensor, Tensor)> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for item in items {
        audit.record(stage, item.domain, Split::Train, item.sample.subject);
        for p in sample_patches_with(
            item.sample,
            cfg.patches_per_image,
            patch_shape,
            cfg.fg_probability,
            rng,
        )? {
            images.push(p.image);
            labels.push(p.label);
        }
    }
    let x = Tensor::stack(&images.iter().collect::<Vec<_>>())?;
    let y = Tensor::stack(&labels.iter().collect::<Vec<_>>())?;
    Ok((x, y))
}

fn shuffled<T: Copy>(items: &[T], rng: &mut rng::Rng) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}

/// Batches for one epoch; each batch is a list of groups whose Dice losses
/// are summed.
fn epoch_batches<'a>(
    set: &StageSet<'a>,
    batch_size: usize,
    rng: &mut rng::Rng,
) -> Vec<Vec<Vec<StageItem<'a>>>> {
    match set {
        StageSet::Merged(items) => shuffled(items, rng)
            .chunks(batch_size)
            .map(|c| vec![c.to_vec()])
            .collect(),
        StageSet::Balanced { current, memory } => {
            let half = (batch_size / 2).max(1);
            let mut pool = shuffled(memory, rng);
            let mut cursor = 0;
            let cur = shuffled(current, rng);
            let mut batches = Vec::new();
            for chunk in cur.chunks(half) {
                let mut mem = Vec::with_capacity(chunk.len());
                while mem.len() < chunk.len() {
                    if cursor == pool.len() {
                        pool = shuffled(memory, rng);
                        cursor = 0;
                    }
                    mem.push(pool[cursor]);
                    cursor += 1;
                }
                batches.push(vec![chunk.to_vec(), mem]);
            }
            batches
        }
    }
}

/// Trains `model` on `set` for `cfg.epochs` with a fresh optimizer and
/// schedule. Returns the mean batch loss of the final epoch.
pub fn train_stage(
    model: &mut Model,
    set: &StageSet<'_>,
    cfg: &RegimeConfig,
    seed: u64,
    stage: usize,
    audit: &mut AccessLog,
) -> Result<f64> {
    if set.items().is_empty() {
        return Err(Error::Contract(format!(
            "stage {stage} has no training data"
        )));
    }
    let mut rng = rng::derived(seed, Stream::Train, stage as u64);
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let patch_shape = vec![model.config().patch_extent; model.config().spatial_rank];
    let mut last = f64::NAN;
    for epoch in 0..cfg.epochs {
        opt.lr = lr_schedule(epoch, cfg.lr, cfg.lr_step, cfg.lr_gamma);
        let batches = epoch_batches(set, cfg.batch_size, &mut rng);
        let mut total = 0.0;
        for batch in &batches {
            let mut tape = Tape::new();
            let vars = model.register(&mut tape, true);
            let mut loss = None;
            for group in batch {
                let (x, y) = patch_batch(group, cfg, &patch_shape, &mut rng, stage, audit)?;
                let x = tape.leaf(x);
                let pred = model.forward(&mut tape, &vars, x)?;
                let l = dice_loss(&mut tape, pred, &y, cfg.dice_eps)?;
                loss = Some(match loss {
                    None => l,
                    Some(acc) => tape.add(acc, l)?,
                });
            }
            let loss = loss.expect("batches are never empty");
            total += tape.value(loss).item()?;
            tape.backward(loss)?;
            let grads: Vec<Tensor> = vars
                .iter()
                .zip(model.params())
                .map(|(&v, p)| {
                    tape.grad(v)
                        .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
                })
                .collect();
            opt.step(model.params_mut(), &grads)?;
        }
        last = total / batches.len() as f64;
    }
    Ok(last)
}

/// Mean per-subject test Dice of `model` on `domain`, with soft predictions
/// binarized at `threshold`.
pub fn evaluate(
    model: &Model,
    domain: &Domain,
    threshold: f64,
    stage: usize,
    audit: &mut AccessLog,
) -> Result<f64> {
    if domain.test.is_empty() {
        return Err(Error::Contract(format!(
            "domain {} has no test data",
            domain.name()
        )));
    }
    let mut sum = 0.0;
    for s in &domain.test {
        audit.record(stage, domain.name(), Split::Test, s.subject);
        let mut shape = vec![1];
        shape.extend_from_slice(s.image.shape());
        let pred = model.predict(&s.image.clone().reshape(shape)?)?;
        let pred = pred.reshape(s.label.shape().to_vec())?;
        sum += dice_score(&pred, &s.label, threshold)?;
    }
    Ok(sum / domain.test.len() as f64)
}

fn evaluate_all(
    model: &Model,
    domains: &[Domain],
    threshold: f64,
    stage: usize,
    audit: &mut AccessLog,
) -> Result<Vec<f64>> {
    domains
        .iter()
        .map(|d| evaluate(model, d, threshold, stage, audit))
        .collect()
}

/// A stage restored from persisted artifacts instead of being retrained.
#[derive(Clone, Debug)]
pub struct CompletedStage {
    pub record: StageRecord,
    pub model: Model,
    pub accesses: AccessLog,
}

/// Hooks for persistence and resumption around `run_regime_with`.
pub trait StageObserver {
    /// A previously completed stage, if one is available.
    fn restore(&mut self, _stage: usize) -> Result<Option<CompletedStage>> {
        Ok(None)
    }

    /// Called after each newly trained stage with its accesses only.
    fn stage_completed(
        &mut self,
        _record: &StageRecord,
        _model: &Model,
        _accesses: &AccessLog,
    ) -> Result<()> {
        Ok(())
    }

    /// Checked after every newly trained stage; `true` ends the run early.
    fn should_stop(&mut self, _trained: usize) -> bool {
        false
    }
}

pub struct NoObserver;

impl StageObserver for NoObserver {}

#[derive(Clone, Debug)]
pub struct RegimeOutcome {
    pub matrix: ResultMatrix,
    pub records: Vec<StageRecord>,
    pub audit: AccessLog,
    /// Buffer size after each sequential stage (replay only).
    pub buffer_sizes: Vec<usize>,
    pub trained_stages: usize,
    pub restored_stages: usize,
    /// The run stopped before every stage finished.
    pub interrupted: bool,
}

/// Number of stages a regime runs over `k` domains.
pub fn stage_count(regime: Regime, k: usize) -> usize {
    match regime {
        Regime::MultiDomain => 1,
        _ => k,
    }
}

pub fn run_regime(
    domains: &[Domain],
    model_cfg: &ModelConfig,
    cfg: &RegimeConfig,
    seed: u64,
) -> Result<RegimeOutcome> {
    run_regime_with(domains, model_cfg, cfg, seed, &mut NoObserver)
}

/// Runs one regime over `domains` (already in stage order) and fills the
/// K×K result matrix.
pub fn run_regime_with(
    domains: &[Domain],
    model_cfg: &ModelConfig,
    cfg: &RegimeConfig,
    seed: u64,
    observer: &mut dyn StageObserver,
) -> Result<RegimeOutcome> {
    if domains.is_empty() {
        return Err(Error::Contract("a run needs at least one domain".into()));
    }
    cfg.validate()?;
    model_cfg.validate()?;
    let names: Vec<String> = domains.iter().map(|d| d.name().to_string()).collect();
    let mut out = RegimeOutcome {
        matrix: ResultMatrix::new(names.clone()),
        records: Vec::new(),
        audit: AccessLog::new(),
        buffer_sizes: Vec::new(),
        trained_stages: 0,
        restored_stages: 0,
        interrupted: false,
    };
    let mut model = Model::build(model_cfg.clone(), seed)?;
    let mut buffer = MemoryBuffer::new(cfg.buffer_cap);
    let stages = stage_count(cfg.regime, domains.len());

    for stage in 0..stages {
        let domain = &domains[stage];
        let label = match cfg.regime {
            Regime::MultiDomain => "pooled".to_string(),
            _ => domain.name().to_string(),
        };

        let record = if let Some(done) = observer.restore(stage)? {
            if done.record.stage != stage || done.record.row.len() != domains.len() {
                return Err(Error::State(format!(
                    "restored record does not describe stage {stage}"
                )));
            }
            model = done.model;
            out.audit.merge(&done.accesses);
            out.restored_stages += 1;
            if cfg.regime == Regime::Replay {
                buffer.update(domain, rng::derive_seed(seed, Stream::Buffer, stage as u64))?;
            }
            done.record
        } else {
            let mut accesses = AccessLog::new();
            match cfg.regime {
                Regime::SingleDomain => model = Model::build(model_cfg.clone(), seed)?,
                Regime::FineTune | Regime::Replay
                    if stage > 0 && cfg.transfer == Transfer::EncoderOnly =>
                {
                    reinit_decoder(&mut model, seed, stage)?
                }
                _ => {}
            }
            let set = match cfg.regime {
                Regime::SingleDomain => StageSet::Merged(tag(domain).collect()),
                Regime::MultiDomain => pooled_train_set(domains),
                r => stage_train_set(r, cfg.mixing, domain, &buffer)?,
            };
            let loss = train_stage(&mut model, &set, cfg, seed, stage, &mut accesses)
                .map_err(|e| with_stage(e, stage, domain.name()))?;
            let row = evaluate_all(&model, domains, cfg.threshold, stage, &mut accesses)?;
            if cfg.regime == Regime::Replay {
                let stored =
                    buffer.update(domain, rng::derive_seed(seed, Stream::Buffer, stage as u64))?;
                for subject in stored {
                    accesses.record(stage, domain.name(), Split::Train, subject);
                }
            }
            let record = StageRecord {
                stage,
                domain: label.clone(),
                epochs: cfg.epochs,
                final_train_loss: loss,
                row,
            };
            observer.stage_completed(&record, &model, &accesses)?;
            out.audit.merge(&accesses);
            out.trained_stages += 1;
            record
        };

        if cfg.regime == Regime::Replay {
            let sizes: Vec<usize> = domains[..=stage].iter().map(|d| d.train.len()).collect();
            if buffer.len() > buffer.capacity_bound(&sizes) {
                return Err(Error::State(format!(
                    "buffer holds {} entries after stage {stage}, bound {}",
                    buffer.len(),
                    buffer.capacity_bound(&sizes)
                )));
            }
            out.buffer_sizes.push(buffer.len());
        }
        out.records.push(record);

        if stage + 1 < stages && out.trained_stages > 0 && observer.should_stop(out.trained_stages)
        {
            out.interrupted = true;
            break;
        }
    }

    if !out.interrupted {
        for record in &out.records {
            match cfg.regime {
                Regime::MultiDomain => {
                    for _ in 0..domains.len() {
                        out.matrix
                            .push_row(record.domain.clone(), record.row.clone())?;
                    }
                }
                _ => out
                    .matrix
                    .push_row(record.domain.clone(), record.row.clone())?,
            }
        }
    }
    Ok(out)
}

fn with_stage(e: Error, stage: usize, domain: &str) -> Error {
    match e {
        Error::Training(m) => Error::Training(format!("stage {stage} ({domain}): {m}")),
        other => other,
    }
}

fn reinit_decoder(model: &mut Model, seed: u64, stage: usize) -> Result<()> {
    let fresh = Model::build(
        model.config().clone(),
        rng::derive_seed(seed, Stream::DecoderReinit, stage as u64),
    )?;
    for (p, f) in model.params_mut().iter_mut().zip(fresh.params()) {
        if !Model::is_encoder_param(&p.name) {
            p.value = f.value.clone();
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderMode {
    Shuffled,
    FixedDescending,
}

text_enum!(OrderMode, "order mode", OrderMode::Shuffled => "shuffled", OrderMode::FixedDescending => "fixed-descending");

/// Stage order for one seed, as indices into `sizes` (subject counts per
/// domain). Descending order is stable for equal sizes.
pub fn domain_order(sizes: &[usize], mode: OrderMode, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    match mode {
        OrderMode::Shuffled => order.shuffle(&mut rng::derived(seed, Stream::DomainOrder, 0)),
        OrderMode::FixedDescending => order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a])),
    }
    order
}
