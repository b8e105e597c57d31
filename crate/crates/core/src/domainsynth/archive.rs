//! On-disk dataset archive.
//!
//! ```text
//! <root>/manifest.txt                    format line + `domain.<i> = <dir>`
//! <root>/<name>-<hash16>/spec.txt        canonical spec + `hash = <sha256>`
//! <root>/<name>-<hash16>/split.txt       `train = ids`, `test = ids`
//! <root>/<name>-<hash16>/subject-NNNN.image.tensor
//! <root>/<name>-<hash16>/subject-NNNN.label.tensor
//! ```
//!
//! Domain directories are addressed by their spec hash, so an existing
//! directory with a matching `spec.txt` is reused without rewriting.

use std::fs;
use std::path::{Path, PathBuf};

use super::generate::{generate_domain, Domain, Sample};
use super::spec::DomainSpec;
use crate::error::{Error, Result};
use crate::rawio;

pub const ARCHIVE_FORMAT: &str = "clseg-archive-1";

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ArchiveSummary {
    pub written: Vec<String>,
    pub reused: Vec<String>,
    pub manifest_written: bool,
}

fn spec_file_text(spec: &DomainSpec) -> String {
    format!("{}hash = {}\n", spec.to_text(), spec.hash())
}

fn subject_paths(dir: &Path, subject: u32) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("subject-{subject:04}.image.tensor")),
        dir.join(format!("subject-{subject:04}.label.tensor")),
    )
}

fn ids(samples: &[Sample]) -> String {
    samples
        .iter()
        .map(|s| s.subject.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn manifest_text(specs: &[DomainSpec]) -> String {
    let mut s = format!("format = {ARCHIVE_FORMAT}\n");
    for (i, spec) in specs.iter().enumerate() {
        s.push_str(&format!("domain.{i} = {}\n", spec.archive_dir_name()));
    }
    s
}

fn is_current(dir: &Path, spec: &DomainSpec) -> bool {
    fs::read_to_string(dir.join("spec.txt")).is_ok_and(|t| t == spec_file_text(spec))
        && dir.join("split.txt").is_file()
}

/// Generates every domain whose directory is missing or stale and writes the
/// manifest. Idempotent: a second call with the same specs writes nothing.
pub fn write_archive(root: &Path, specs: &[DomainSpec]) -> Result<ArchiveSummary> {
    for spec in specs {
        spec.validate()?;
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut summary = ArchiveSummary::default();
    for spec in specs {
        let dir = root.join(spec.archive_dir_name());
        if is_current(&dir, spec) {
            summary.reused.push(spec.name.clone());
            continue;
        }
        let domain = generate_domain(spec)?;
        for s in domain.train.iter().chain(&domain.test) {
            let (img, lbl) = subject_paths(&dir, s.subject);
            rawio::write_atomic(&img, &rawio::encode_tensor_file(&s.image))?;
            rawio::write_atomic(&lbl, &rawio::encode_tensor_file(&s.label))?;
        }
        let split = format!(
            "train = {}\ntest = {}\n",
            ids(&domain.train),
            ids(&domain.test)
        );
        rawio::write_atomic(&dir.join("split.txt"), split.as_bytes())?;
        // spec.txt last: its presence marks the directory complete.
        rawio::write_atomic(&dir.join("spec.txt"), spec_file_text(spec).as_bytes())?;
        summary.written.push(spec.name.clone());
    }
    let manifest = manifest_text(specs);
    let path = root.join("manifest.txt");
    if fs::read_to_string(&path).ok().as_deref() != Some(manifest.as_str()) {
        rawio::write_atomic(&path, manifest.as_bytes())?;
        summary.manifest_written = true;
    }
    Ok(summary)
}

fn parse_ids(path: &Path, line: Option<&str>, key: &str) -> Result<Vec<u32>> {
    let line = line.ok_or_else(|| Error::format(path, format!("missing `{key}` line")))?;
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::format(path, format!("malformed line `{line}`")))?;
    if k.trim() != key {
        return Err(Error::format(
            path,
            format!("expected `{key}`, found `{}`", k.trim()),
        ));
    }
    v.trim()
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::format(path, format!("bad subject id `{s}`")))
        })
        .collect()
}

fn read_domain(dir: &Path) -> Result<Domain> {
    let spec_path = dir.join("spec.txt");
    let text = fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
    let spec = DomainSpec::from_text(&text)?;
    let recorded = text
        .lines()
        .find_map(|l| l.strip_prefix("hash = "))
        .ok_or_else(|| Error::format(&spec_path, "missing hash"))?;
    if recorded != spec.hash() {
        return Err(Error::format(
            &spec_path,
            "hash does not match spec contents",
        ));
    }
    let split_path = dir.join("split.txt");
    let split = fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?;
    let mut lines = split.lines();
    let train_ids = parse_ids(&split_path, lines.next(), "train")?;
    let test_ids = parse_ids(&split_path, lines.next(), "test")?;
    let load = |ids: &[u32]| -> Result<Vec<Sample>> {
        ids.iter()
            .map(|&subject| {
                let (img, lbl) = subject_paths(dir, subject);
                Ok(Sample {
                    subject,
                    image: rawio::read_tensor_file(&img)?,
                    label: rawio::read_tensor_file(&lbl)?,
                })
            })
            .collect()
    };
    Ok(Domain {
        train: load(&train_ids)?,
        test: load(&test_ids)?,
        spec,
    })
}

/// Loads all domains listed in the manifest, in manifest order.
pub fn read_archive(root: &Path) -> Result<Vec<Domain>> {
    let path = root.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    match lines.next().and_then(|l| l.strip_prefix("format = ")) {
        Some(ARCHIVE_FORMAT) => {}
        _ => {
            return Err(Error::format(
                &path,
                format!("expected format {ARCHIVE_FORMAT}"),
            ))
        }
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (_, dir) = l
                .split_once('=')
                .ok_or_else(|| Error::format(&path, format!("malformed line `{l}`")))?;
            read_domain(&root.join(dir.trim()))
        })
        .collect()
}

/// Specs listed in an archive manifest, without loading subject tensors.
pub fn read_archive_specs(root: &Path) -> Result<Vec<DomainSpec>> {
    let path = root.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (_, dir) = l
                .split_once('=')
                .ok_or_else(|| Error::format(&path, format!("malformed line `{l}`")))?;
            let p = root.join(dir.trim()).join("spec.txt");
            let t = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            DomainSpec::from_text(&t)
        })
        .collect()
}
