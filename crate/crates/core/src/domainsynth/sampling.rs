use rand::Rng as _;

use super::generate::{unravel, Sample};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng;

/// Foreground cutoff used to pick lesion-centred patches.
pub const FOREGROUND_LEVEL: f64 = 0.5;
pub const DEFAULT_FG_PROBABILITY: f64 = 0.75;

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image: Tensor,
    pub label: Tensor,
}

/// Draws `n` patches of `patch_shape` from `sample`.
///
/// Each patch independently centres on a uniformly chosen foreground voxel
/// (label > 0.5) with probability `fg_probability`, otherwise on a uniform
/// voxel. The window is then clamped to lie inside the volume. Samples
/// without foreground fall back to uniform centres.
pub fn sample_patches(
    sample: &Sample,
    n: usize,
    patch_shape: &[usize],
    fg_probability: f64,
    seed: u64,
) -> Result<Vec<Patch>> {
    sample_patches_with(
        sample,
        n,
        patch_shape,
        fg_probability,
        &mut rng::seeded(seed),
    )
}

pub fn sample_patches_with(
    sample: &Sample,
    n: usize,
    patch_shape: &[usize],
    fg_probability: f64,
    rng: &mut rng::Rng,
) -> Result<Vec<Patch>> {
    let vol = sample.spatial_shape();
    if patch_shape.len() != vol.len() || patch_shape.iter().zip(vol).any(|(p, v)| p > v || *p == 0)
    {
        return Err(Error::Shape(format!(
            "patch {patch_shape:?} does not fit volume {vol:?}"
        )));
    }
    if n == 0 {
        return Err(Error::Config("need at least one patch per sample".into()));
    }
    if !(0.0..=1.0).contains(&fg_probability) {
        return Err(Error::Config(format!(
            "foreground probability {fg_probability} outside [0, 1]"
        )));
    }
    let foreground: Vec<usize> = sample
        .label
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > FOREGROUND_LEVEL)
        .map(|(i, _)| i)
        .collect();
    let total = sample.label.len();
    let mut centre = vec![0usize; vol.len()];
    let mut patches = Vec::with_capacity(n);
    for _ in 0..n {
        let use_fg = !foreground.is_empty() && rng.random_bool(fg_probability);
        let flat = if use_fg {
            foreground[rng.random_range(0..foreground.len())]
        } else {
            rng.random_range(0..total)
        };
        unravel(flat, vol, &mut centre);
        let start: Vec<usize> = centre
            .iter()
            .zip(vol)
            .zip(patch_shape)
            .map(|((&c, &v), &p)| c.saturating_sub(p / 2).min(v - p))
            .collect();
        patches.push(Patch {
            image: crop(&sample.image, &start, patch_shape),
            label: crop(&sample.label, &start, patch_shape),
        });
    }
    Ok(patches)
}

/// Crops a `[C, spatial..]` tensor to `[C, size..]` starting at `start`.
fn crop(t: &Tensor, start: &[usize], size: &[usize]) -> Tensor {
    let shape = t.shape();
    let channels = shape[0];
    let vol = &shape[1..];
    let rank = vol.len();
    let row = size[rank - 1];
    let mut out = Vec::with_capacity(channels * size.iter().product::<usize>());
    let rows: usize = size[..rank - 1].iter().product();
    let mut idx = vec![0usize; rank - 1];
    for c in 0..channels {
        for r in 0..rows {
            unravel(r, &size[..rank - 1], &mut idx);
            let mut offset = c;
            for d in 0..rank - 1 {
                offset = offset * vol[d] + start[d] + idx[d];
            }
            offset = offset * vol[rank - 1] + start[rank - 1];
            out.extend_from_slice(&t.data()[offset..offset + row]);
        }
    }
    let mut out_shape = vec![channels];
    out_shape.extend_from_slice(size);
    Tensor::new(out_shape, out).expect("crop shape")
}
