use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::continual::{OrderMode, Regime, RegimeConfig};
use crate::domainsynth::{default_cohort, desk_cohort, DomainSpec};
use crate::error::{Error, Result};
use crate::segnet::ModelConfig;

/// Everything one experiment needs, parsed from a flat `key = value` file.
///
/// Keys carry a section prefix: `experiment.`, `dataset.`, `domain.<i>.`,
/// `model.`, `train.` and `eval.`. Lines starting with `#` are comments.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    pub order: OrderMode,
    pub output: PathBuf,
    /// Archive location; `<output>/archive` when unset.
    pub archive: Option<PathBuf>,
    pub cohort: String,
    pub specs: Vec<DomainSpec>,
    pub model: ModelConfig,
    /// Training settings shared by every regime; the `regime` field is
    /// overwritten per cell.
    pub train: RegimeConfig,
}

pub const DEFAULT_OUTPUT: &str = "clseg-out";

fn cohort(name: &str) -> Result<Vec<DomainSpec>> {
    match name {
        "default" => Ok(default_cohort()),
        "desk" => Ok(desk_cohort()),
        "none" => Ok(Vec::new()),
        other => Err(Error::Config(format!(
            "unknown cohort `{other}`; expected default, desk or none"
        ))),
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let bad = || Error::Usage(format!("bad seed list `{v}`; use `0..8` or `0,1,2`"));
    let seeds: Vec<u64> = if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

pub fn parse_regimes(v: &str) -> Result<Vec<Regime>> {
    let mut out = Vec::new();
    for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let r: Regime = name.parse()?;
        if !out.contains(&r) {
            out.push(r);
        }
    }
    if out.is_empty() {
        return Err(Error::Usage("at least one regime is required".into()));
    }
    Ok(out)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            regimes: Regime::ALL.to_vec(),
            seeds: (0..=8).collect(),
            order: OrderMode::Shuffled,
            output: PathBuf::from(DEFAULT_OUTPUT),
            archive: None,
            cohort: "default".into(),
            specs: default_cohort(),
            model: ModelConfig::default(),
            train: RegimeConfig::new(Regime::FineTune),
        }
    }
}

impl ExperimentConfig {
    /// The built-in configuration for `cohort` (`default` or `desk`).
    pub fn for_cohort(name: &str) -> Result<Self> {
        Ok(ExperimentConfig {
            cohort: name.to_string(),
            specs: cohort(name)?,
            ..Self::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    n + 1
                ))
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = ExperimentConfig::default();
        // The cohort seeds the domain list, so it is applied before any
        // per-domain override regardless of where it appears.
        if let Some((_, v)) = entries.iter().rev().find(|(k, _)| k == "dataset.cohort") {
            cfg.cohort = v.clone();
            cfg.specs = cohort(v)?;
        }
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let err = |what: &str| Error::Config(format!("{key}: expected {what}, got `{value}`"));
        let (section, rest) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("key `{key}` has no section prefix")))?;
        match section {
            "experiment" => match rest {
                "regimes" => {
                    self.regimes = parse_regimes(value).map_err(|e| Error::Config(e.to_string()))?
                }
                "seeds" => {
                    self.seeds = parse_seeds(value).map_err(|e| Error::Config(e.to_string()))?
                }
                "order" => self.order = value.parse()?,
                "output" => self.output = PathBuf::from(value),
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            },
            "dataset" => match rest {
                "cohort" => {}
                "archive" => self.archive = Some(PathBuf::from(value)),
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            },
            "domain" => {
                let (idx, field) = rest.split_once('.').ok_or_else(|| {
                    Error::Config(format!("key `{key}` needs domain.<i>.<field>"))
                })?;
                let idx: usize = idx.parse().map_err(|_| err("a domain index"))?;
                if idx > self.specs.len() {
                    return Err(Error::Config(format!(
                        "{key}: domains must be numbered consecutively; next is {}",
                        self.specs.len()
                    )));
                }
                if idx == self.specs.len() {
                    self.specs.push(DomainSpec::new(
                        format!("domain_{idx}"),
                        20,
                        3000 + idx as u64,
                    ));
                }
                self.specs[idx].set(field, value)?;
            }
            "model" => self.model.set(rest, value)?,
            "train" => {
                let t = &mut self.train;
                let int = |v: &str| v.parse::<usize>().map_err(|_| err("an integer"));
                let float = |v: &str| v.parse::<f64>().map_err(|_| err("a number"));
                match rest {
                    "epochs" => t.epochs = int(value)?,
                    "batch_size" => t.batch_size = int(value)?,
                    "patches_per_image" => t.patches_per_image = int(value)?,
                    "fg_probability" => t.fg_probability = float(value)?,
                    "lr" => t.lr = float(value)?,
                    "lr_step" => t.lr_step = int(value)?,
                    "lr_gamma" => t.lr_gamma = float(value)?,
                    "weight_decay" => t.weight_decay = float(value)?,
                    "buffer_cap" => {
                        t.buffer_cap = match value {
                            "none" => None,
                            v => Some(int(v)?),
                        }
                    }
                    "mixing" => t.mixing = value.parse()?,
                    "transfer" => t.transfer = value.parse()?,
                    "dice_eps" => t.dice_eps = float(value)?,
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
            }
            "eval" => match rest {
                "threshold" => self.train.threshold = value.parse().map_err(|_| err("a number"))?,
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            },
            _ => return Err(Error::Config(format!("unknown section in key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "need at least one regime and one seed".into(),
            ));
        }
        if self.specs.is_empty() {
            return Err(Error::Config("no domains configured".into()));
        }
        for s in &self.specs {
            s.validate()?;
            let extent = self.model.patch_extent;
            if s.volume_shape.len() != self.model.spatial_rank
                || s.volume_shape
                    .iter()
                    .any(|&e| e < extent || e % self.model.extent_divisor() != 0)
            {
                return Err(Error::Config(format!(
                    "domain {} volume {:?} does not suit patch extent {extent} with {} levels",
                    s.name, s.volume_shape, self.model.levels
                )));
            }
        }
        let mut names: Vec<&str> = self.specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("domain names must be unique".into()));
        }
        self.model.validate()?;
        self.train.validate()
    }

    pub fn archive_root(&self) -> PathBuf {
        self.archive
            .clone()
            .unwrap_or_else(|| self.output.join("archive"))
    }

    /// Canonical text of every setting that affects results. Regimes, seeds
    /// and paths are left out so cells from separate invocations over
    /// different seed or regime subsets can be reported together.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment.order = {}", self.order);
        s.push_str("dataset.cohort = none\n");
        for (i, spec) in self.specs.iter().enumerate() {
            for line in spec.to_text().lines() {
                let _ = writeln!(s, "domain.{i}.{line}");
            }
        }
        for line in self.model.to_text().lines() {
            let _ = writeln!(s, "model.{line}");
        }
        let t = &self.train;
        let _ = writeln!(s, "train.epochs = {}", t.epochs);
        let _ = writeln!(s, "train.batch_size = {}", t.batch_size);
        let _ = writeln!(s, "train.patches_per_image = {}", t.patches_per_image);
        let _ = writeln!(s, "train.fg_probability = {}", t.fg_probability);
        let _ = writeln!(s, "train.lr = {}", t.lr);
        let _ = writeln!(s, "train.lr_step = {}", t.lr_step);
        let _ = writeln!(s, "train.lr_gamma = {}", t.lr_gamma);
        let _ = writeln!(s, "train.weight_decay = {}", t.weight_decay);
        match t.buffer_cap {
            Some(c) => {
                let _ = writeln!(s, "train.buffer_cap = {c}");
            }
            None => s.push_str("train.buffer_cap = none\n"),
        }
        let _ = writeln!(s, "train.mixing = {}", t.mixing);
        let _ = writeln!(s, "train.transfer = {}", t.transfer);
        let _ = writeln!(s, "train.dice_eps = {}", t.dice_eps);
        let _ = writeln!(s, "eval.threshold = {}", t.threshold);
        s
    }

    /// Full configuration text; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment.regimes = {}", join(&self.regimes));
        let _ = writeln!(s, "experiment.seeds = {}", join(&self.seeds));
        let _ = writeln!(s, "experiment.output = {}", self.output.display());
        if let Some(a) = &self.archive {
            let _ = writeln!(s, "dataset.archive = {}", a.display());
        }
        s.push_str(&self.canonical_text());
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

/// Line-level difference between two canonical config texts.
pub fn config_diff(a: &str, b: &str) -> Vec<String> {
    let la: Vec<&str> = a.lines().collect();
    let lb: Vec<&str> = b.lines().collect();
    let mut out: Vec<String> = la
        .iter()
        .filter(|l| !lb.contains(l))
        .map(|l| format!("- {l}"))
        .collect();
    out.extend(
        lb.iter()
            .filter(|l| !la.contains(l))
            .map(|l| format!("+ {l}")),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips() {
        let mut cfg = ExperimentConfig::for_cohort("desk").unwrap();
        cfg.train.buffer_cap = None;
        cfg.seeds = vec![3, 1];
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back.specs, cfg.specs);
        assert_eq!(back.to_text(), cfg.to_text());
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn seeds_and_regimes_do_not_change_the_hash() {
        let a = ExperimentConfig::for_cohort("desk").unwrap();
        let mut b = a.clone();
        b.seeds = vec![7];
        b.regimes = vec![Regime::Replay];
        assert_eq!(a.hash(), b.hash());
        b.train.epochs += 1;
        assert_ne!(a.hash(), b.hash());
        let diff = config_diff(&a.canonical_text(), &b.canonical_text());
        assert_eq!(diff.len(), 2);
    }

    #[test]
    fn overrides_apply_to_cohort_domains() {
        let cfg = ExperimentConfig::parse(
            "domain.0.subjects = 6\ndataset.cohort = desk\ntrain.epochs = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.specs.len(), 4);
        assert_eq!(cfg.specs[0].n_subjects, 6);
        assert_eq!(cfg.train.epochs, 3);
    }

    #[test]
    fn oversized_lesion_radius_is_config_error() {
        let err = ExperimentConfig::parse("dataset.cohort = desk\ndomain.0.lesion_radius = 2-40\n")
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_regime_lists_valid_ones() {
        let err = parse_regimes("fine-tune,ewc").unwrap_err();
        assert!(matches!(&err, Error::Usage(m) if m.contains("replay")));
    }

    #[test]
    fn seed_ranges_are_inclusive() {
        assert_eq!(parse_seeds("0..8").unwrap().len(), 9);
        assert_eq!(parse_seeds("4, 2").unwrap(), vec![4, 2]);
        assert!(parse_seeds("x").is_err());
    }
}
