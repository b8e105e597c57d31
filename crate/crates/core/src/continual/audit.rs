use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccessKey {
    pub stage: usize,
    pub domain: String,
    pub split: Split,
    pub subject: u32,
}

/// Count of every sample read, keyed by stage, domain, split and subject.
///
/// Ordered storage makes the serialized log independent of access order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccessLog {
    counts: BTreeMap<AccessKey, u64>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: usize, domain: &str, split: Split, subject: u32) {
        *self
            .counts
            .entry(AccessKey {
                stage,
                domain: domain.to_string(),
                split,
                subject,
            })
            .or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &AccessLog) {
        for (k, &c) in &other.counts {
            *self.counts.entry(k.clone()).or_insert(0) += c;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&AccessKey, u64)> {
        self.counts.iter().map(|(k, &c)| (k, c))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Training reads at `stage` of domains positioned after `stage` in
    /// `order`: reads that would contaminate a zero-shot score.
    pub fn zero_shot_violations(&self, order: &[String]) -> Vec<AccessKey> {
        self.counts
            .keys()
            .filter(|k| k.split == Split::Train)
            .filter(|k| match order.iter().position(|d| *d == k.domain) {
                Some(pos) => pos > k.stage,
                None => true,
            })
            .cloned()
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("stage\tdomain\tsplit\tsubject\tcount\n");
        for (k, c) in &self.counts {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{c}",
                k.stage, k.domain, k.split, k.subject
            );
        }
        s
    }

    pub fn from_tsv(path: &Path, text: &str) -> Result<Self> {
        let mut log = AccessLog::new();
        let bad = |l: &str| Error::format(path, format!("malformed audit line `{l}`"));
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(line));
            }
            let key = AccessKey {
                stage: f[0].parse().map_err(|_| bad(line))?,
                domain: f[1].to_string(),
                split: f[2].parse().map_err(|_| bad(line))?,
                subject: f[3].parse().map_err(|_| bad(line))?,
            };
            let count: u64 = f[4].parse().map_err(|_| bad(line))?;
            *log.counts.entry(key).or_insert(0) += count;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_future_training_reads() {
        let order: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut log = AccessLog::new();
        log.record(0, "a", Split::Train, 1);
        log.record(0, "c", Split::Test, 1);
        log.record(1, "a", Split::Train, 2);
        assert!(log.zero_shot_violations(&order).is_empty());
        log.record(1, "c", Split::Train, 0);
        let v = log.zero_shot_violations(&order);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].domain, "c");
    }

    #[test]
    fn tsv_round_trips() {
        let mut log = AccessLog::new();
        log.record(2, "x", Split::Train, 7);
        log.record(2, "x", Split::Train, 7);
        log.record(0, "y", Split::Test, 3);
        let text = log.to_tsv();
        let back = AccessLog::from_tsv(Path::new("a"), &text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_tsv(), text);
    }
}
