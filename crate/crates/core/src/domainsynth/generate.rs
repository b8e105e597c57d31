use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::spec::DomainSpec;
use super::split::split_domain;
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::rng::{self, Stream};

/// One subject: a normalized image and its soft lesion label, both shaped
/// `[1, spatial..]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub subject: u32,
    pub image: Tensor,
    pub label: Tensor,
}

impl Sample {
    pub fn spatial_shape(&self) -> &[usize] {
        &self.image.shape()[1..]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub spec: DomainSpec,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Domain {
    pub fn name(&self) -> &str {
        &self.spec.name
    }
}

/// Partial-volume blur applied to the binary lesion mask.
const LABEL_BLUR_SIGMA: f64 = 0.8;
/// Relative amplitude of the background texture.
const TEXTURE_AMPLITUDE: f64 = 0.12;
const TEXTURE_WAVES: usize = 4;

/// Generates every subject of `spec` and splits them into train and test.
pub fn generate_domain(spec: &DomainSpec) -> Result<Domain> {
    spec.validate()?;
    let samples: Vec<Sample> = (0..spec.n_subjects)
        .map(|s| generate_subject(spec, s as u32))
        .collect();
    let (train, test) = split_domain(
        samples,
        spec.train_ratio,
        rng::derive_seed(spec.seed, Stream::Split, 0),
    )?;
    Ok(Domain {
        spec: spec.clone(),
        train,
        test,
    })
}

/// Coordinates of flat index `i` in a row-major volume.
pub(crate) fn unravel(mut i: usize, shape: &[usize], out: &mut [usize]) {
    for (d, &e) in shape.iter().enumerate().rev() {
        out[d] = i % e;
        i /= e;
    }
}

pub(crate) fn generate_subject(spec: &DomainSpec, subject: u32) -> Sample {
    // One stream per subject so a subject does not depend on the cohort size.
    let mut rng = rng::derived(spec.seed, Stream::Subject, subject as u64);
    let shape = &spec.volume_shape;
    let rank = shape.len();
    let n: usize = shape.iter().product();

    struct Wave {
        freq: Vec<f64>,
        phase: f64,
        amp: f64,
    }
    let waves: Vec<Wave> = (0..TEXTURE_WAVES)
        .map(|_| Wave {
            freq: (0..rank).map(|_| rng.random_range(-3.0..3.0)).collect(),
            phase: rng.random_range(0.0..2.0 * PI),
            amp: rng.random_range(0.5..1.0),
        })
        .collect();
    let tilt: Vec<f64> = (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect();
    let curvature = rng.random_range(-1.0..1.0);

    let k = rng.random_range(spec.lesion_count.0..=spec.lesion_count.1);
    let (rmin, rmax) = spec.lesion_radius;
    let lesions: Vec<(Vec<f64>, Vec<f64>)> = (0..k)
        .map(|_| {
            let radii: Vec<f64> = (0..rank)
                .map(|_| {
                    if rmax > rmin {
                        rng.random_range(rmin..=rmax)
                    } else {
                        rmin
                    }
                })
                .collect();
            let centre = shape
                .iter()
                .zip(&radii)
                .map(|(&e, &r)| {
                    let (lo, hi) = (r, (e as f64 - 1.0 - r).max(r));
                    if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    }
                })
                .collect();
            (centre, radii)
        })
        .collect();

    let mut mask = vec![0.0; n];
    let mut pos = vec![0usize; rank];
    for (i, m) in mask.iter_mut().enumerate() {
        unravel(i, shape, &mut pos);
        let inside = lesions.iter().any(|(c, r)| {
            pos.iter()
                .zip(c)
                .zip(r)
                .map(|((&p, &c), &r)| ((p as f64 - c) / r).powi(2))
                .sum::<f64>()
                <= 1.0
        });
        if inside {
            *m = 1.0;
        }
    }
    for (c, _) in &lesions {
        let idx = c
            .iter()
            .zip(shape)
            .fold(0, |acc, (&c, &e)| acc * e + (c.round() as usize).min(e - 1));
        mask[idx] = 1.0;
    }
    let label = gaussian_blur(&mask, shape, LABEL_BLUR_SIGMA);

    let polarity = spec.polarity.sign();
    let mut image = Vec::with_capacity(n);
    for (i, &y) in label.iter().enumerate() {
        unravel(i, shape, &mut pos);
        let unit: Vec<f64> = pos
            .iter()
            .zip(shape)
            .map(|(&p, &e)| p as f64 / (e - 1) as f64)
            .collect();
        let texture: f64 = waves
            .iter()
            .map(|w| {
                let arg: f64 = w.freq.iter().zip(&unit).map(|(f, u)| f * u).sum();
                w.amp * (2.0 * PI * arg + w.phase).sin()
            })
            .sum::<f64>()
            / TEXTURE_WAVES as f64;
        let tissue = 1.0 + TEXTURE_AMPLITUDE * texture;
        let centred: Vec<f64> = unit.iter().map(|u| 2.0 * u - 1.0).collect();
        let linear: f64 = tilt.iter().zip(&centred).map(|(t, c)| t * c).sum::<f64>();
        let radial: f64 = centred.iter().map(|c| c * c).sum::<f64>() / rank as f64;
        let field =
            ((linear + curvature * (2.0 * radial - 1.0)) / (rank as f64 + 1.0)).clamp(-1.0, 1.0);
        let bias = 1.0 + spec.bias_field_strength * field;
        let noise: f64 = StandardNormal.sample(&mut rng);
        image.push(
            tissue * (1.0 + polarity * spec.lesion_contrast * y) * bias + spec.noise_sigma * noise,
        );
    }
    standardize(&mut image);

    let mut tshape = vec![1];
    tshape.extend_from_slice(shape);
    Sample {
        subject,
        image: Tensor::new(tshape.clone(), image).expect("generated shape"),
        label: Tensor::new(tshape, label).expect("generated shape"),
    }
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// Separable Gaussian blur with kernel weights renormalized at the borders,
/// so a mask in `[0, 1]` stays in `[0, 1]`.
pub(crate) fn gaussian_blur(data: &[f64], shape: &[usize], sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut cur = data.to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..shape.len() {
        let stride: usize = shape[axis + 1..].iter().product();
        let extent = shape[axis] as isize;
        for (i, out) in next.iter_mut().enumerate() {
            let p = ((i / stride) % shape[axis]) as isize;
            let (mut acc, mut mass) = (0.0, 0.0);
            for (j, w) in weights.iter().enumerate() {
                let q = p + j as isize - radius;
                if (0..extent).contains(&q) {
                    let src = (i as isize + (q - p) * stride as isize) as usize;
                    acc += w * cur[src];
                    mass += w;
                }
            }
            *out = acc / mass;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    cur
}
