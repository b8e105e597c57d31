use std::fmt::{self, Write as _};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Lesion intensity relative to surrounding tissue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    /// Hyperintense lesions (FLAIR-like).
    LesionBright,
    /// Hypointense lesions (T2-like contrast inversion).
    LesionDark,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::LesionBright => 1.0,
            Polarity::LesionDark => -1.0,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::LesionBright => "lesion-bright",
            Polarity::LesionDark => "lesion-dark",
        })
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lesion-bright" => Ok(Polarity::LesionBright),
            "lesion-dark" => Ok(Polarity::LesionDark),
            other => Err(Error::Config(format!(
                "unknown polarity `{other}` (expected lesion-bright or lesion-dark)"
            ))),
        }
    }
}

/// Generative description of one synthetic center.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub name: String,
    pub n_subjects: usize,
    pub polarity: Polarity,
    /// Inclusive lesion count range per subject.
    pub lesion_count: (usize, usize),
    /// Inclusive lesion semi-axis range in voxels.
    pub lesion_radius: (f64, f64),
    /// Relative intensity change inside a lesion, in `(0, 1)`.
    pub lesion_contrast: f64,
    pub noise_sigma: f64,
    pub bias_field_strength: f64,
    pub volume_shape: Vec<usize>,
    pub train_ratio: f64,
    pub seed: u64,
}

pub const DEFAULT_TRAIN_RATIO: f64 = 0.8;

impl DomainSpec {
    /// A lesion-bright 64×64 center with moderate noise.
    pub fn new(name: impl Into<String>, n_subjects: usize, seed: u64) -> Self {
        DomainSpec {
            name: name.into(),
            n_subjects,
            polarity: Polarity::LesionBright,
            lesion_count: (2, 5),
            lesion_radius: (2.0, 4.5),
            lesion_contrast: 0.7,
            noise_sigma: 0.06,
            bias_field_strength: 0.15,
            volume_shape: vec![64, 64],
            train_ratio: DEFAULT_TRAIN_RATIO,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("domain `{}`: {m}", self.name)));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return bad("name must be non-empty [A-Za-z0-9_-]".into());
        }
        if self.n_subjects < 2 {
            return bad(format!(
                "needs at least 2 subjects, got {}",
                self.n_subjects
            ));
        }
        let (cmin, cmax) = self.lesion_count;
        if cmin == 0 || cmin > cmax {
            return bad(format!(
                "lesion count range {cmin}-{cmax} must satisfy 1 ≤ min ≤ max"
            ));
        }
        let (rmin, rmax) = self.lesion_radius;
        if !(rmin.is_finite() && rmax.is_finite()) || rmin < 1.0 || rmin > rmax {
            return bad(format!(
                "lesion radius range {rmin}-{rmax} must satisfy 1 ≤ min ≤ max"
            ));
        }
        if !matches!(self.volume_shape.len(), 2 | 3) || self.volume_shape.iter().any(|&e| e < 4) {
            return bad(format!(
                "volume shape {:?} must have 2 or 3 axes of at least 4 voxels",
                self.volume_shape
            ));
        }
        let min_extent = *self.volume_shape.iter().min().expect("non-empty shape") as f64;
        if 2.0 * rmax > min_extent {
            return bad(format!(
                "lesion radius {rmax} exceeds volume extent {min_extent}"
            ));
        }
        if !(self.lesion_contrast > 0.0 && self.lesion_contrast < 1.0) {
            return bad(format!(
                "lesion contrast {} outside (0, 1)",
                self.lesion_contrast
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be ≥ 0", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.bias_field_strength) {
            return bad(format!(
                "bias field strength {} outside [0, 1)",
                self.bias_field_strength
            ));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return bad(format!("train ratio {} outside (0, 1)", self.train_ratio));
        }
        Ok(())
    }

    /// Canonical `key = value` manifest. Floats use shortest round-trip
    /// formatting, so parsing the text reproduces the spec exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "subjects = {}", self.n_subjects);
        let _ = writeln!(s, "polarity = {}", self.polarity);
        let _ = writeln!(
            s,
            "lesion_count = {}-{}",
            self.lesion_count.0, self.lesion_count.1
        );
        let _ = writeln!(
            s,
            "lesion_radius = {}-{}",
            self.lesion_radius.0, self.lesion_radius.1
        );
        let _ = writeln!(s, "lesion_contrast = {}", self.lesion_contrast);
        let _ = writeln!(s, "noise_sigma = {}", self.noise_sigma);
        let _ = writeln!(s, "bias_field_strength = {}", self.bias_field_strength);
        let _ = writeln!(s, "volume_shape = {}", format_shape(&self.volume_shape));
        let _ = writeln!(s, "train_ratio = {}", self.train_ratio);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = DomainSpec::new("unnamed", 2, 0);
        let mut seen_name = false;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed spec line `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "hash" {
                continue;
            }
            seen_name |= k == "name";
            spec.set(k, v)?;
        }
        if !seen_name {
            return Err(Error::Config("domain spec without a name".into()));
        }
        Ok(spec)
    }

    /// Sets one field from its manifest key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let err = |what: &str| Error::Config(format!("{key}: expected {what}, got `{value}`"));
        let float = |v: &str| v.parse::<f64>().map_err(|_| err("a number"));
        let int = |v: &str| v.parse::<u64>().map_err(|_| err("an integer"));
        match key {
            "name" => self.name = value.to_string(),
            "subjects" => self.n_subjects = int(value)? as usize,
            "polarity" => self.polarity = value.parse()?,
            "lesion_count" => {
                let (a, b) = split_range(value).ok_or_else(|| err("min-max"))?;
                self.lesion_count = (int(a)? as usize, int(b)? as usize);
            }
            "lesion_radius" => {
                let (a, b) = split_range(value).ok_or_else(|| err("min-max"))?;
                self.lesion_radius = (float(a)?, float(b)?);
            }
            "lesion_contrast" => self.lesion_contrast = float(value)?,
            "noise_sigma" => self.noise_sigma = float(value)?,
            "bias_field_strength" => self.bias_field_strength = float(value)?,
            "volume_shape" => {
                self.volume_shape = parse_shape(value).ok_or_else(|| err("AxB[xC]"))?
            }
            "train_ratio" => self.train_ratio = float(value)?,
            "seed" => self.seed = int(value)?,
            other => return Err(Error::Config(format!("unknown domain key `{other}`"))),
        }
        Ok(())
    }

    /// SHA-256 of the canonical manifest, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Directory name inside a dataset archive.
    pub fn archive_dir_name(&self) -> String {
        format!("{}-{}", self.name, &self.hash()[..16])
    }
}

fn split_range(v: &str) -> Option<(&str, &str)> {
    let (a, b) = v.split_once('-')?;
    Some((a.trim(), b.trim()))
}

pub fn format_shape(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

pub fn parse_shape(v: &str) -> Option<Vec<usize>> {
    v.split('x').map(|p| p.trim().parse().ok()).collect()
}

/// Subject counts of the eight-center cohort, largest first.
pub const COHORT_SIZES: [usize; 8] = [80, 51, 47, 51, 28, 13, 12, 8];

/// Eight synthetic centers with the cohort's subject counts. The second and
/// third centers are lesion-dark; the rest lesion-bright. Acquisition
/// parameters differ per center.
pub fn default_cohort() -> Vec<DomainSpec> {
    const NOISE: [f64; 8] = [0.05, 0.07, 0.06, 0.08, 0.05, 0.09, 0.07, 0.06];
    const BIAS: [f64; 8] = [0.10, 0.20, 0.15, 0.25, 0.12, 0.18, 0.22, 0.14];
    const RADIUS: [(f64, f64); 8] = [
        (2.0, 4.5),
        (2.0, 4.0),
        (2.5, 5.0),
        (2.0, 4.5),
        (2.0, 3.5),
        (2.5, 4.5),
        (2.0, 4.0),
        (2.0, 5.0),
    ];
    COHORT_SIZES
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut s = DomainSpec::new(
                format!("center_{}", (b'a' + i as u8) as char),
                n,
                1000 + i as u64,
            );
            s.noise_sigma = NOISE[i];
            s.bias_field_strength = BIAS[i];
            s.lesion_radius = RADIUS[i];
            if i == 1 || i == 2 {
                s.polarity = Polarity::LesionDark;
                s.lesion_contrast = 0.55;
            }
            s
        })
        .collect()
}

/// Four small centers, one of them lesion-dark: the cohort used for quick
/// end-to-end comparisons.
pub fn desk_cohort() -> Vec<DomainSpec> {
    let sizes = [20, 15, 15, 12];
    let mut specs: Vec<DomainSpec> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut s = DomainSpec::new(format!("site_{}", i + 1), n, 2000 + i as u64);
            s.noise_sigma = [0.05, 0.07, 0.06, 0.08][i];
            s.bias_field_strength = [0.10, 0.20, 0.15, 0.25][i];
            s
        })
        .collect();
    specs[1].polarity = Polarity::LesionDark;
    specs[1].lesion_contrast = 0.55;
    specs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips_and_hash_is_stable() {
        for spec in default_cohort() {
            let back = DomainSpec::from_text(&spec.to_text()).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.hash(), spec.hash());
        }
    }

    #[test]
    fn oversized_radius_is_rejected() {
        let mut s = DomainSpec::new("x", 10, 0);
        s.lesion_radius = (2.0, 40.0);
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn cohort_has_expected_shape() {
        let c = default_cohort();
        let sizes: Vec<_> = c.iter().map(|s| s.n_subjects).collect();
        assert_eq!(sizes, COHORT_SIZES);
        assert_eq!(
            c.iter()
                .filter(|s| s.polarity == Polarity::LesionDark)
                .count(),
            2
        );
        assert!(c.iter().all(|s| s.validate().is_ok()));
    }
}
