use rand::seq::index;

use crate::domainsynth::{Domain, Sample};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_BUFFER_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct BufferEntry {
    pub domain: String,
    pub sample: Sample,
}

/// Replay memory holding whole image–label pairs, at most `cap` per domain.
/// Entries are frozen once inserted.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBuffer {
    cap: Option<usize>,
    entries: Vec<BufferEntry>,
}

impl MemoryBuffer {
    /// `None` means no per-domain cap.
    pub fn new(cap: Option<usize>) -> Self {
        MemoryBuffer {
            cap,
            entries: Vec::new(),
        }
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_for(&self, domain: &str) -> usize {
        self.entries.iter().filter(|e| e.domain == domain).count()
    }

    /// Appends `min(cap, |train|)` training samples of `domain`, drawn
    /// uniformly without replacement. Returns the subjects stored, in
    /// insertion order.
    pub fn update(&mut self, domain: &Domain, seed: u64) -> Result<Vec<u32>> {
        let n = domain.train.len();
        if n == 0 {
            return Err(Error::Contract(format!(
                "domain {} has no training samples to buffer",
                domain.name()
            )));
        }
        if self.count_for(domain.name()) > 0 {
            return Err(Error::Contract(format!(
                "domain {} is already buffered",
                domain.name()
            )));
        }
        let keep = self.cap.map_or(n, |c| c.min(n));
        let mut picks = index::sample(&mut rng::seeded(seed), n, keep).into_vec();
        picks.sort_unstable();
        let stored = picks.iter().map(|&i| domain.train[i].subject).collect();
        self.entries.extend(picks.into_iter().map(|i| BufferEntry {
            domain: domain.name().to_string(),
            sample: domain.train[i].clone(),
        }));
        Ok(stored)
    }

    /// Upper bound `Σ min(cap, |train_k|)` over the given training-set sizes.
    pub fn capacity_bound(&self, train_sizes: &[usize]) -> usize {
        train_sizes
            .iter()
            .map(|&n| self.cap.map_or(n, |c| c.min(n)))
            .sum()
    }
}

/// Functional form: returns `buffer` with `domain` appended.
pub fn buffer_update(mut buffer: MemoryBuffer, domain: &Domain, seed: u64) -> Result<MemoryBuffer> {
    buffer.update(domain, seed)?;
    Ok(buffer)
}
