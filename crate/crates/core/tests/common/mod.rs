#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use clseg::autodiff::{check_gradients, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};
use clseg::domainsynth::{generate_domain, Domain, DomainSpec, Polarity};
use clseg::objectives::{dice_loss, DEFAULT_DICE_EPS};
use clseg::rng;
use clseg::segnet::{Model, ModelConfig};
use clseg::Result;

pub fn normal(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    Tensor::from_fn(shape, |_| StandardNormal.sample(&mut r))
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// `Σ y ⊙ w` for a fixed random `w`, turning any tensor output into a
/// scalar with a non-degenerate gradient.
pub fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let w = tape.leaf(normal(tape.value(y).shape(), seed));
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

pub fn named(items: Vec<(&str, Tensor)>) -> Vec<(String, Tensor)> {
    items.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

/// Lesion-bearing soft label: a blurred disc.
pub fn disc_label(n: usize, h: usize, w: usize) -> Tensor {
    let (cy, cx, r) = (h as f64 * 0.45, w as f64 * 0.55, h.min(w) as f64 * 0.25);
    Tensor::from_fn(&[n, 1, h, w], |i| {
        let y = (i / w) % h;
        let x = i % w;
        let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
        (r + 0.5 - d).clamp(0.0, 1.0)
    })
}

pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

fn entry(name: &'static str, params: Vec<(String, Tensor)>, build: Build) -> SuiteEntry {
    let report = check_gradients(&params, build, &GradCheckOptions::default())
        .unwrap_or_else(|e| panic!("{name}: {e}"));
    SuiteEntry { name, report }
}

/// Finite-difference checks of every primitive, two composite graphs, the
/// Dice loss and the default mini-UNet.
pub fn gradient_suite() -> Vec<SuiteEntry> {
    let mut out = Vec::new();

    out.push(entry(
        "conv2d 3x3",
        named(vec![
            ("x", normal(&[2, 3, 5, 6], 1)),
            ("k", normal(&[4, 3, 3, 3], 2)),
            ("b", normal(&[4], 3)),
        ]),
        Box::new(|t, v| {
            let y = t.conv(v[0], v[1], v[2])?;
            project(t, y, 10)
        }),
    ));
    out.push(entry(
        "conv3d 3x3x3",
        named(vec![
            ("x", normal(&[1, 2, 4, 4, 3], 4)),
            ("k", normal(&[2, 2, 3, 3, 3], 5)),
            ("b", normal(&[2], 6)),
        ]),
        Box::new(|t, v| {
            let y = t.conv(v[0], v[1], v[2])?;
            project(t, y, 11)
        }),
    ));
    out.push(entry(
        "conv2d 1x1",
        named(vec![
            ("x", normal(&[2, 3, 4, 4], 7)),
            ("k", normal(&[2, 3, 1, 1], 8)),
            ("b", normal(&[2], 9)),
        ]),
        Box::new(|t, v| {
            let y = t.conv(v[0], v[1], v[2])?;
            project(t, y, 12)
        }),
    ));
    out.push(entry(
        "relu",
        named(vec![("x", normal(&[2, 2, 4, 4], 13))]),
        Box::new(|t, v| {
            let y = t.relu(v[0])?;
            project(t, y, 14)
        }),
    ));
    out.push(entry(
        "normalized relu",
        named(vec![("x", normal(&[3, 1, 4, 4], 15))]),
        Box::new(|t, v| {
            let y = t.normalized_relu(v[0])?;
            project(t, y, 16)
        }),
    ));
    out.push(entry(
        "add",
        named(vec![
            ("a", normal(&[2, 3, 4], 17)),
            ("b", normal(&[2, 3, 4], 18)),
        ]),
        Box::new(|t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y, 19)
        }),
    ));
    out.push(entry(
        "mul",
        named(vec![
            ("a", normal(&[2, 3, 4], 20)),
            ("b", normal(&[2, 3, 4], 21)),
        ]),
        Box::new(|t, v| {
            let y = t.mul(v[0], v[1])?;
            project(t, y, 22)
        }),
    ));
    out.push(entry(
        "div",
        named(vec![
            ("a", normal(&[2, 3, 4], 23)),
            ("b", uniform(&[2, 3, 4], 0.5, 2.0, 24)),
        ]),
        Box::new(|t, v| {
            let y = t.div(v[0], v[1])?;
            project(t, y, 25)
        }),
    ));
    out.push(entry(
        "scale, add_scalar, sum",
        named(vec![("x", normal(&[3, 5], 26))]),
        Box::new(|t, v| {
            let y = t.scale(v[0], -2.5)?;
            let y = t.add_scalar(y, 0.75)?;
            let y = t.mul(y, y)?;
            t.sum(y)
        }),
    ));
    out.push(entry(
        "concat channels",
        named(vec![
            ("a", normal(&[2, 2, 3, 3], 27)),
            ("b", normal(&[2, 3, 3, 3], 28)),
        ]),
        Box::new(|t, v| {
            let y = t.concat_channels(v[0], v[1])?;
            project(t, y, 29)
        }),
    ));
    out.push(entry(
        "max pool 2d",
        named(vec![("x", normal(&[2, 2, 6, 4], 30))]),
        Box::new(|t, v| {
            let y = t.max_pool2(v[0])?;
            project(t, y, 31)
        }),
    ));
    out.push(entry(
        "max pool 3d",
        named(vec![("x", normal(&[1, 2, 4, 4, 4], 32))]),
        Box::new(|t, v| {
            let y = t.max_pool2(v[0])?;
            project(t, y, 33)
        }),
    ));
    out.push(entry(
        "upsample",
        named(vec![("x", normal(&[2, 2, 3, 2], 34))]),
        Box::new(|t, v| {
            let y = t.upsample2(v[0])?;
            project(t, y, 35)
        }),
    ));
    out.push(entry(
        "dice loss",
        named(vec![("p", uniform(&[2, 1, 4, 4], 0.05, 0.95, 36))]),
        Box::new(|t, v| {
            let g = uniform(&[2, 1, 4, 4], 0.0, 1.0, 37);
            dice_loss(t, v[0], &g, DEFAULT_DICE_EPS)
        }),
    ));
    out.push(entry(
        "two-layer conv+relu",
        named(vec![
            ("x", normal(&[2, 1, 6, 6], 38)),
            ("k1", normal(&[3, 1, 3, 3], 39)),
            ("b1", normal(&[3], 40)),
            ("k2", normal(&[2, 3, 3, 3], 41)),
            ("b2", normal(&[2], 42)),
        ]),
        Box::new(|t, v| {
            let h = t.conv(v[0], v[1], v[2])?;
            let h = t.relu(h)?;
            let y = t.conv(h, v[3], v[4])?;
            let y = t.relu(y)?;
            project(t, y, 43)
        }),
    ));
    out.push(unet_entry());
    out
}

/// Default mini-UNet followed by the Dice loss against a disc label.
fn unet_entry() -> SuiteEntry {
    let cfg = ModelConfig::default();
    let model = Model::build(cfg.clone(), 5).unwrap();
    let params: Vec<(String, Tensor)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    let e = cfg.patch_extent;
    let x = normal(&[1, 1, e, e], 44);
    let y = disc_label(1, e, e);
    let report = check_gradients(
        &params,
        |t, v| {
            let input = t.leaf(x.clone());
            let pred = model.forward(t, v, input)?;
            dice_loss(t, pred, &y, DEFAULT_DICE_EPS)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    SuiteEntry {
        name: "mini-UNet + dice loss",
        report,
    }
}

pub fn small_spec(name: &str, n: usize, seed: u64) -> DomainSpec {
    let mut s = DomainSpec::new(name, n, seed);
    s.volume_shape = vec![32, 32];
    s.lesion_radius = (2.0, 4.0);
    s
}

/// Four small domains, the second lesion-dark.
pub fn small_cohort(sizes: &[usize]) -> Vec<Domain> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut s = small_spec(&format!("d{i}"), n, 500 + i as u64);
            if i == 1 {
                s.polarity = Polarity::LesionDark;
                s.lesion_contrast = 0.55;
            }
            generate_domain(&s).unwrap()
        })
        .collect()
}

pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        levels: 2,
        base_features: 2,
        patch_extent: 16,
        ..ModelConfig::default()
    }
}
