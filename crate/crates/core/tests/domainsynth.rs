mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use proptest::prelude::*;

use clseg::domainsynth::{
    default_cohort, desk_cohort, generate_domain, read_archive, sample_patches, split_domain,
    write_archive, Domain, Polarity, Sample, COHORT_SIZES, FOREGROUND_LEVEL,
};
use clseg::Error;

use common::small_spec;

fn region_means(s: &Sample) -> (f64, f64) {
    let (mut fg, mut nf, mut bg, mut nb) = (0.0, 0, 0.0, 0);
    for (&x, &y) in s.image.data().iter().zip(s.label.data()) {
        if y > 0.5 {
            fg += x;
            nf += 1;
        } else if y < 0.5 {
            bg += x;
            nb += 1;
        }
    }
    (fg / nf as f64, bg / nb as f64)
}

fn all(d: &Domain) -> impl Iterator<Item = &Sample> {
    d.train.iter().chain(&d.test)
}

#[test]
fn generation_is_deterministic() {
    let spec = small_spec("a", 6, 3);
    assert_eq!(
        generate_domain(&spec).unwrap(),
        generate_domain(&spec).unwrap()
    );
}

#[test]
fn labels_are_soft_and_in_range() {
    for spec in desk_cohort() {
        let d = generate_domain(&spec).unwrap();
        for s in all(&d) {
            assert_eq!(s.image.shape(), s.label.shape());
            assert!(s.label.min() >= 0.0 && s.label.max() <= 1.0);
            assert!(s.label.data().iter().any(|&v| v > 0.05 && v < 0.95));
        }
    }
}

#[test]
fn polarity_orders_lesion_and_background_intensity() {
    for spec in desk_cohort() {
        let d = generate_domain(&spec).unwrap();
        for s in all(&d) {
            let (fg, bg) = region_means(s);
            match spec.polarity {
                Polarity::LesionDark => assert!(fg < bg, "{} subject {}", spec.name, s.subject),
                Polarity::LesionBright => assert!(fg > bg, "{} subject {}", spec.name, s.subject),
            }
        }
    }
}

#[test]
fn polarity_domains_are_separable_by_lesion_intensity() {
    let cohort = desk_cohort();
    let bright = generate_domain(&cohort[0]).unwrap();
    let dark = generate_domain(&cohort[1]).unwrap();
    assert_eq!(dark.spec.polarity, Polarity::LesionDark);
    let lesion_mean = |s: &Sample| region_means(s).0;
    let max_dark = all(&dark).map(lesion_mean).fold(f64::MIN, f64::max);
    let min_bright = all(&bright).map(lesion_mean).fold(f64::MAX, f64::min);
    assert!(
        max_dark < min_bright,
        "threshold classifier fails: {max_dark} vs {min_bright}"
    );
}

#[test]
fn splits_are_disjoint_and_eighty_twenty() {
    for spec in default_cohort() {
        let d = generate_domain(&spec).unwrap();
        let train: BTreeSet<u32> = d.train.iter().map(|s| s.subject).collect();
        let test: BTreeSet<u32> = d.test.iter().map(|s| s.subject).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), spec.n_subjects);
        assert_eq!(train.len(), (0.8 * spec.n_subjects as f64).round() as usize);
    }
}

#[test]
fn default_cohort_mirrors_the_eight_center_sizes() {
    let sizes: Vec<usize> = default_cohort().iter().map(|s| s.n_subjects).collect();
    assert_eq!(sizes, COHORT_SIZES);
    let dark = default_cohort()
        .iter()
        .filter(|s| s.polarity == Polarity::LesionDark)
        .count();
    assert_eq!(dark, 2);
}

#[test]
fn oversized_lesion_radius_is_config_error() {
    let mut spec = small_spec("big", 4, 1);
    spec.lesion_radius = (2.0, 40.0);
    assert!(matches!(generate_domain(&spec), Err(Error::Config(_))));
}

#[test]
fn patch_sampling_contract() {
    let d = generate_domain(&small_spec("p", 6, 8)).unwrap();
    for s in all(&d) {
        let patches = sample_patches(s, 4, &[16, 16], 1.0, s.subject as u64).unwrap();
        assert_eq!(patches.len(), 4);
        for p in &patches {
            assert_eq!(p.image.shape(), &[1, 16, 16]);
            assert!(p.label.data().iter().any(|&v| v > FOREGROUND_LEVEL));
        }
    }
    let s = &d.train[0];
    assert!(matches!(
        sample_patches(s, 1, &[64, 16], 0.5, 0),
        Err(Error::Shape(_))
    ));
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>, std::time::SystemTime)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let meta = fs::metadata(&p).unwrap();
                out.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                    meta.modified().unwrap(),
                ));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn archive_round_trips_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let specs = vec![small_spec("x", 5, 1), small_spec("y", 4, 2)];
    let first = write_archive(dir.path(), &specs).unwrap();
    assert_eq!(first.written.len(), 2);
    let before = tree(dir.path());

    let second = write_archive(dir.path(), &specs).unwrap();
    assert!(second.written.is_empty());
    assert_eq!(second.reused.len(), 2);
    assert_eq!(tree(dir.path()), before, "rerun rewrote files");

    let loaded = read_archive(dir.path()).unwrap();
    let direct: Vec<Domain> = specs.iter().map(|s| generate_domain(s).unwrap()).collect();
    assert_eq!(loaded, direct);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_covers_every_item_once(n in 2usize..200, ratio in 0.05f64..0.95, seed in 0u64..1000) {
        let (train, test) = split_domain((0..n).collect::<Vec<_>>(), ratio, seed).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
