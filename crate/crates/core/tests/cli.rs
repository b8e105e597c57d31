use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clseg::expcli::{Table, CURVES_HEADER, HEATMAP_HEADER, SUMMARY_HEADER};

const TINY: &str = "\
dataset.cohort = none
domain.0.name = big
domain.0.subjects = 8
domain.0.volume_shape = 32x32
domain.0.lesion_radius = 2-4
domain.1.name = dark
domain.1.subjects = 6
domain.1.polarity = lesion-dark
domain.1.volume_shape = 32x32
domain.1.lesion_radius = 2-4
domain.2.name = small
domain.2.subjects = 5
domain.2.volume_shape = 32x32
domain.2.lesion_radius = 2-4
model.base_features = 2
model.patch_extent = 16
train.epochs = 2
train.batch_size = 2
train.patches_per_image = 2
";

fn clseg<S: AsRef<OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clseg"))
        .args(args)
        .env("CLSEG_WORKERS", "1")
        .output()
        .unwrap()
}

fn ok<S: AsRef<OsStr> + std::fmt::Debug>(args: &[S]) -> String {
    let out = clseg(args);
    assert!(
        out.status.success(),
        "clseg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    clseg(args).status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `root` with its bytes, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn generate_writes_the_default_cohort_once() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&["generate", "--out", s(&out)]);
    let archive = out.join("archive");
    let manifest = fs::read_to_string(archive.join("manifest.txt")).unwrap();
    let mut counts = Vec::new();
    for line in manifest.lines().filter(|l| l.starts_with("domain.")) {
        let sub = line.split(" = ").nth(1).unwrap();
        let n = fs::read_dir(archive.join(sub))
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .ends_with(".image.tensor")
            })
            .count();
        counts.push(n);
    }
    assert_eq!(counts, vec![80, 51, 47, 51, 28, 13, 12, 8]);

    let before = snapshot(&out);
    let mtimes: Vec<_> = fs::read_dir(&archive)
        .unwrap()
        .map(|e| e.unwrap().metadata().unwrap().modified().unwrap())
        .collect();
    let msg = ok(&["generate", "--out", s(&out)]);
    assert!(msg.contains("0 written, 8 reused"), "{msg}");
    assert_eq!(snapshot(&out), before);
    let after: Vec<_> = fs::read_dir(&archive)
        .unwrap()
        .map(|e| e.unwrap().metadata().unwrap().modified().unwrap())
        .collect();
    assert_eq!(mtimes, after);
}

#[test]
fn errors_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.conf",
        &format!("{TINY}domain.0.lesion_radius = 2-40\n"),
    );
    assert_eq!(code(&["generate", "--config", &bad]), 3);

    let cfg = write_config(dir.path(), "tiny.conf", TINY);
    let out = dir.path().join("o");
    let run = clseg(&[
        "run",
        "--config",
        &cfg,
        "--out",
        s(&out),
        "--regimes",
        "fine-tune,bogus",
    ]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    for name in ["single-domain", "multi-domain", "fine-tune", "replay"] {
        assert!(err.contains(name), "usage error should list {name}: {err}");
    }

    assert_eq!(
        code(&["report", "--out", s(&dir.path().join("missing"))]),
        4
    );
}

#[test]
fn single_cell_run_writes_one_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.conf", TINY);
    let out = dir.path().join("o");
    ok(&[
        "run",
        "--config",
        &cfg,
        "--out",
        s(&out),
        "--seeds",
        "3",
        "--regimes",
        "replay",
    ]);
    let matrices: Vec<_> = snapshot(&out.join("cells"))
        .into_keys()
        .filter(|p| p.file_name().unwrap() == "R.tsv")
        .collect();
    assert_eq!(matrices, vec![PathBuf::from("replay/seed-3/R.tsv")]);

    let again = ok(&[
        "run",
        "--config",
        &cfg,
        "--out",
        s(&out),
        "--seeds",
        "3",
        "--regimes",
        "replay",
    ]);
    assert!(again.contains("already complete"), "{again}");
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.conf", TINY);
    let whole = dir.path().join("whole");
    let parts = dir.path().join("parts");
    let args = |out: &Path| {
        vec![
            "run".to_string(),
            "--config".into(),
            cfg.clone(),
            "--out".into(),
            s(out).into(),
            "--seeds".into(),
            "0,1".into(),
            "--regimes".into(),
            "fine-tune,replay".into(),
        ]
    };
    ok(&args(&whole));

    let mut first = args(&parts);
    first.extend(["--stop-after".into(), "1".into()]);
    let msg = ok(&first);
    assert!(msg.contains("interrupted"), "{msg}");
    assert_eq!(
        code(&["report", "--out", s(&parts)]),
        7,
        "report must refuse partial cells"
    );

    let resumed = ok(&args(&parts));
    assert!(resumed.contains("2 trained, 1 restored"), "{resumed}");

    ok(&["report", "--out", s(&whole)]);
    ok(&["report", "--out", s(&parts)]);
    let a = snapshot(&whole);
    let b = snapshot(&parts);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(*v == b[k], "{} differs after resume", k.display());
    }
}

#[test]
fn report_is_deterministic_and_schema_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.conf", TINY);
    let out = dir.path().join("o");
    ok(&[
        "run",
        "--config",
        &cfg,
        "--out",
        s(&out),
        "--seeds",
        "0,1",
        "--order",
        "fixed-descending",
    ]);
    ok(&["report", "--out", s(&out)]);
    let report = out.join("report");
    let first = snapshot(&report);
    ok(&["report", "--out", s(report.parent().unwrap())]);
    assert_eq!(snapshot(&report), first);

    // Every table round-trips through its documented header.
    let headers: [(&str, &[&str]); 2] = [
        ("curves.tsv", &CURVES_HEADER),
        ("summary.tsv", &SUMMARY_HEADER),
    ];
    for (name, header) in headers {
        let text = fs::read_to_string(report.join(name)).unwrap();
        let t = Table::parse(Path::new(name), &text, Some(header)).unwrap();
        assert_eq!(t.to_text(), text);
    }

    let k = 3;
    for (regime, rows) in [
        ("fine-tune", k * k),
        ("replay", k * k),
        ("single-domain", k * k),
        ("multi-domain", k),
    ] {
        let path = report.join(format!("heatmap_{regime}.tsv"));
        let t = Table::read(&path, Some(&HEATMAP_HEADER)).unwrap();
        assert_eq!(t.rows.len(), rows, "{regime}");
        assert_eq!(
            t.rows.iter().map(|r| r[4].as_str()).collect::<Vec<_>>(),
            vec!["2"; rows]
        );
    }

    let curves = Table::read(&report.join("curves.tsv"), Some(&CURVES_HEADER)).unwrap();
    for regime in ["fine-tune", "replay"] {
        let stages: std::collections::BTreeSet<&str> = curves
            .rows
            .iter()
            .filter(|r| r[0] == regime)
            .map(|r| r[1].as_str())
            .collect();
        assert_eq!(stages.len(), k, "{regime}");
    }

    // Fixed descending order ends on the smallest site, whose BWT is zero.
    let bwt = Table::read(&report.join("bwt.tsv"), None).unwrap();
    assert_eq!(bwt.header, vec!["domain", "fine-tune", "replay"]);
    let names: Vec<&str> = bwt.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, vec!["big", "dark", "small", "average"]);
    let last = &bwt.rows[2];
    assert_eq!(last[1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(last[2].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn report_refuses_mixed_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.conf", TINY);
    let b = write_config(
        dir.path(),
        "b.conf",
        &TINY.replace("train.epochs = 2", "train.epochs = 1"),
    );
    let out = dir.path().join("o");
    ok(&[
        "run",
        "--config",
        &a,
        "--out",
        s(&out),
        "--seeds",
        "0",
        "--regimes",
        "fine-tune",
    ]);
    ok(&[
        "run",
        "--config",
        &b,
        "--out",
        s(&out),
        "--seeds",
        "1",
        "--regimes",
        "fine-tune",
    ]);
    let rep = clseg(&["report", "--out", s(&out)]);
    assert_eq!(rep.status.code(), Some(9));
    let err = String::from_utf8_lossy(&rep.stderr);
    assert!(
        err.contains("- train.epochs = 2") && err.contains("+ train.epochs = 1"),
        "{err}"
    );

    // Reusing a cell directory under a different config is refused as well.
    let again = clseg(&[
        "run",
        "--config",
        &b,
        "--out",
        s(&out),
        "--seeds",
        "0",
        "--regimes",
        "fine-tune",
    ]);
    assert_eq!(again.status.code(), Some(9));
}
