//! Raw loops behind the spatial primitives. Everything here works on flat
//! slices plus a [`Geometry`]; shape validation happens in the tape.

use super::tensor::Geometry;

/// One kernel tap: the kernel-local flat index and the row segments where the
/// shifted input overlaps the output under zero padding.
struct Tap {
    kernel_index: usize,
    len: usize,
    // (output offset, input offset) per row segment
    segments: Vec<(usize, usize)>,
}

/// Precomputed overlap layout for a same-padded, stride-1 convolution.
pub(crate) struct ConvPlan {
    taps: Vec<Tap>,
    taps_per_channel: usize,
}

impl ConvPlan {
    pub fn new(g: &Geometry, kd: usize, kh: usize, kw: usize) -> Self {
        let (pd, ph, pw) = ((kd / 2) as isize, (kh / 2) as isize, (kw / 2) as isize);
        let (d, h, w) = (g.depth as isize, g.height as isize, g.width as isize);
        let mut taps = Vec::with_capacity(kd * kh * kw);
        for dz in 0..kd {
            let sz = dz as isize - pd;
            for dy in 0..kh {
                let sy = dy as isize - ph;
                for dx in 0..kw {
                    let sx = dx as isize - pw;
                    let kernel_index = (dz * kh + dy) * kw + dx;
                    let (x0, x1) = (0.max(-sx), w.min(w - sx));
                    let mut segments = Vec::new();
                    if x0 < x1 {
                        for z in 0.max(-sz)..d.min(d - sz) {
                            for y in 0.max(-sy)..h.min(h - sy) {
                                let out = (z * h + y) * w + x0;
                                let inp = ((z + sz) * h + (y + sy)) * w + x0 + sx;
                                segments.push((out as usize, inp as usize));
                            }
                        }
                    }
                    taps.push(Tap {
                        kernel_index,
                        len: (x1 - x0).max(0) as usize,
                        segments,
                    });
                }
            }
        }
        ConvPlan {
            taps,
            taps_per_channel: kd * kh * kw,
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn conv_forward(
    plan: &ConvPlan,
    g: &Geometry,
    filters: usize,
    input: &[f64],
    kernel: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let v = g.voxels();
    let k = plan.taps_per_channel;
    let mut out = vec![0.0; g.batch * filters * v];
    for n in 0..g.batch {
        for f in 0..filters {
            let dst = &mut out[(n * filters + f) * v..][..v];
            dst.fill(bias[f]);
            for c in 0..g.channels {
                let src = &input[(n * g.channels + c) * v..][..v];
                let kbase = (f * g.channels + c) * k;
                for tap in &plan.taps {
                    let wv = kernel[kbase + tap.kernel_index];
                    for &(o, i) in &tap.segments {
                        axpy(wv, &src[i..i + tap.len], &mut dst[o..o + tap.len]);
                    }
                }
            }
        }
    }
    out
}

/// Accumulates input, kernel and bias gradients. Any of the three outputs
/// may be skipped by passing `None`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    plan: &ConvPlan,
    g: &Geometry,
    filters: usize,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    mut grad_input: Option<&mut [f64]>,
    mut grad_kernel: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    let v = g.voxels();
    let k = plan.taps_per_channel;
    if let Some(gb) = grad_bias {
        for n in 0..g.batch {
            for (f, b) in gb.iter_mut().enumerate() {
                *b += grad_out[(n * filters + f) * v..][..v].iter().sum::<f64>();
            }
        }
    }
    for n in 0..g.batch {
        for f in 0..filters {
            let go = &grad_out[(n * filters + f) * v..][..v];
            for c in 0..g.channels {
                let kbase = (f * g.channels + c) * k;
                let plane = (n * g.channels + c) * v;
                if let Some(gi) = grad_input.as_deref_mut() {
                    let gi = &mut gi[plane..plane + v];
                    for tap in &plan.taps {
                        let wv = kernel[kbase + tap.kernel_index];
                        for &(o, i) in &tap.segments {
                            axpy(wv, &go[o..o + tap.len], &mut gi[i..i + tap.len]);
                        }
                    }
                }
                if let Some(gk) = grad_kernel.as_deref_mut() {
                    let src = &input[plane..plane + v];
                    for tap in &plan.taps {
                        let mut acc = 0.0;
                        for &(o, i) in &tap.segments {
                            acc += dot(&go[o..o + tap.len], &src[i..i + tap.len]);
                        }
                        gk[kbase + tap.kernel_index] += acc;
                    }
                }
            }
        }
    }
}

/// Pooling window along each axis: depth is pooled only for 3-D volumes.
pub(crate) fn pool_factors(volumetric: bool) -> (usize, usize, usize) {
    (if volumetric { 2 } else { 1 }, 2, 2)
}

/// Stride-2 max pooling; returns pooled values and, per output element, the
/// flat input index of the first maximal element in row-major window order.
pub(crate) fn max_pool(g: &Geometry, volumetric: bool, input: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (fd, fh, fw) = pool_factors(volumetric);
    let (od, oh, ow) = (g.depth / fd, g.height / fh, g.width / fw);
    let planes = g.batch * g.channels;
    let mut out = Vec::with_capacity(planes * od * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for p in 0..planes {
        let base = p * g.voxels();
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for dz in 0..fd {
                        for dy in 0..fh {
                            for dx in 0..fw {
                                let idx = base
                                    + ((z * fd + dz) * g.height + (y * fh + dy)) * g.width
                                    + (x * fw + dx);
                                if best_idx == usize::MAX || input[idx] > best {
                                    best = input[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx);
                }
            }
        }
    }
    (out, arg)
}

/// Nearest-neighbour ×2 upsampling along the pooled axes.
pub(crate) fn upsample(g: &Geometry, volumetric: bool, input: &[f64]) -> Vec<f64> {
    let (fd, fh, fw) = pool_factors(volumetric);
    let (od, oh, ow) = (g.depth * fd, g.height * fh, g.width * fw);
    let planes = g.batch * g.channels;
    let mut out = Vec::with_capacity(planes * od * oh * ow);
    for p in 0..planes {
        let base = p * g.voxels();
        for z in 0..od {
            for y in 0..oh {
                let row = base + ((z / fd) * g.height + y / fh) * g.width;
                for x in 0..ow {
                    out.push(input[row + x / fw]);
                }
            }
        }
    }
    out
}

/// Adjoint of [`upsample`]: sums each output block back onto its source.
pub(crate) fn upsample_backward(
    g: &Geometry,
    volumetric: bool,
    grad_out: &[f64],
    grad_in: &mut [f64],
) {
    let (fd, fh, fw) = pool_factors(volumetric);
    let (od, oh, ow) = (g.depth * fd, g.height * fh, g.width * fw);
    let planes = g.batch * g.channels;
    let mut it = grad_out.iter();
    for p in 0..planes {
        let base = p * g.voxels();
        for z in 0..od {
            for y in 0..oh {
                let row = base + ((z / fd) * g.height + y / fh) * g.width;
                for x in 0..ow {
                    grad_in[row + x / fw] += it.next().copied().unwrap_or(0.0);
                }
            }
        }
    }
}
